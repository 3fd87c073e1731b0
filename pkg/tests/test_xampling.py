from dataclasses import replace

import numpy as np
import pytest

from summer.config import CarrierPlan, make_config
from summer.scene import TargetScene, generate_scene
from summer.synthesis import PulseSpec, TimeDomainRecord, synthesize_coefficients, synthesize_time_domain
from summer.xampling import AcquisitionError, acquire, acquired_frequencies, extract_coefficients, matched_filter_align

CFG = make_config(T=4, R=4, M=2, Q=2, K=4, N=8, P=2, pri=1e-6, seed=3)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_zero_record_gives_zero_coefficients():
    rec = synthesize_time_domain(TargetScene((), CFG.grid_dims), CFG)
    assert not np.any(acquire(rec).data)


def test_single_tone_lands_on_its_bin():
    n = 4 * 4 * 8
    freqs = acquired_frequencies(CFG)
    k0 = int(freqs[1, 2])
    t = np.arange(n)
    x = np.broadcast_to(np.exp(2j * np.pi * k0 * t / n), (2, 2, n)).copy()
    c = extract_coefficients(TimeDomainRecord(x, n / 1e-6, CFG))
    assert c.shape == (2, 2, 2, 4)
    assert np.allclose(c[:, :, 1, 2], 1.0)
    mask = np.ones(c.shape, bool)
    mask[:, :, 1, 2] = False
    assert np.max(np.abs(c[mask])) <= 1e-6


@pytest.mark.parametrize("factor", [2, 4, 8])
@pytest.mark.parametrize("gamma", [1, 2])
def test_matches_coefficient_model(factor, gamma):
    cfg = make_config(T=4, R=4, M=2, Q=2, K=4, N=8, P=3, pri=1e-6, gamma=gamma, seed=5)
    sc = generate_scene(3, cfg.grid_dims, 7)
    got = acquire(synthesize_time_domain(sc, cfg, oversample=factor)).data
    assert _rel(got, synthesize_coefficients(sc, cfg).data) <= 1e-3


def test_tapered_pulse_is_equalised():
    sc = generate_scene(2, CFG.grid_dims, 1)
    rec = synthesize_time_domain(sc, CFG, oversample=4, pulse=PulseSpec(0.6))
    assert _rel(acquire(rec).data, synthesize_coefficients(sc, CFG).data) <= 1e-3


def test_band_isolation():
    sc = generate_scene(3, CFG.grid_dims, 2)
    rec = synthesize_time_domain(sc, CFG, oversample=4, active_bands=[0])
    y = acquire(rec).data
    full = synthesize_coefficients(sc, CFG).data
    assert _rel(y[0], full[0]) <= 1e-3
    assert np.max(np.abs(y[1])) <= 1e-9 * np.max(np.abs(y[0]))


def test_sample_count_per_receiver_and_pulse():
    rec = synthesize_time_domain(TargetScene((), CFG.grid_dims), CFG)
    raw = extract_coefficients(rec)
    Q, P, C, K = raw.shape
    assert (Q, P) == (CFG.n_rx, CFG.waveform.pulses_p)
    assert C * K == CFG.n_tx * CFG.k_count


def test_alias_raises():
    # carriers on the two outermost slots span T*N + N bins, beyond one Nyquist frame
    cfg = make_config(T=4, R=4, M=2, Q=2, K=4, N=8, P=1, pri=1e-6, seed=0)
    cfg = replace(cfg, carriers=CarrierPlan((0, 4), 4, cfg.waveform.bandwidth_bh))
    rec = synthesize_time_domain(TargetScene((), cfg.grid_dims), cfg, oversample=1)
    with pytest.raises(AcquisitionError):
        extract_coefficients(rec)


def test_flat_pulse_normalisation():
    # H_0 = 1/B_h on the band, so normalising multiplies by tau * B_h = N
    raw = np.ones((2, 2, 2, 4), dtype=complex)
    y = matched_filter_align(raw, CFG).data
    assert np.allclose(np.abs(y), CFG.waveform.n_nyquist)


class _Notched(PulseSpec):
    def spectrum(self, k_rel, n, bandwidth):
        return np.where(np.asarray(k_rel) == 0, 0.0, super().spectrum(k_rel, n, bandwidth))


def test_vanishing_spectrum_is_rejected():
    cfg = make_config(T=4, R=4, M=2, Q=2, K=8, N=8, P=1, pri=1e-6, seed=0)
    with pytest.raises(AcquisitionError):
        matched_filter_align(np.ones((2, 1, 2, 8), dtype=complex), cfg, _Notched())
