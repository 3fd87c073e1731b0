import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from summer.config import (
    ArrayGeometry,
    CarrierPlan,
    ConfigError,
    RadarConfig,
    SamplingPlan,
    WaveformParams,
    assign_carriers,
    build_virtual_ula,
    load_config,
    make_config,
    select_fourier_indices,
    thin_array,
)


def test_waveform_n_and_grid():
    wf = WaveformParams(100e-6, 5e6, 10e9, 10, 20, 20)
    assert wf.n_nyquist == 500
    assert wf.grid_dims == (10000, 400, 10)


def test_waveform_rejects_fractional_samples():
    with pytest.raises(ConfigError) as err:
        WaveformParams(1e-6, 1.5e6, 10e9, 1, 2, 2)
    assert err.value.field == "waveform.pri_tau"


@pytest.mark.parametrize("T,R", [(1, 1), (5, 3), (20, 20)])
def test_virtual_ula_layout(T, R):
    g = build_virtual_ula(T, R)
    assert g.tx_positions == tuple(m * R / 2 for m in range(T))
    assert g.rx_positions == tuple(q / 2 for q in range(R))
    assert g.aperture_z == T * R / 2
    # virtual elements (transmit + receive) cover every half wavelength exactly once
    virt = sorted(x + z for x in g.tx_positions for z in g.rx_positions)
    assert np.allclose(virt, np.arange(T * R) / 2)


def test_paper_scale_aperture_is_about_six_metres():
    g = build_virtual_ula(20, 20)
    wavelength = WaveformParams(100e-6, 5e6, 10e9, 10, 20, 20).wavelength
    assert abs(g.aperture_z * wavelength - 6.0) < 0.01


@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 8), Q=st.integers(1, 8))
@settings(max_examples=200, deadline=None)
def test_thin_array_in_aperture_and_sorted(seed, M, Q):
    g = thin_array(8, 8, M, Q, seed)
    for pos in (g.tx_positions, g.rx_positions):
        assert all(0 <= x <= 32 for x in pos)
        assert list(pos) == sorted(pos)
    assert (g.n_tx, g.n_rx) == (M, Q)


def test_thin_array_is_reproducible():
    assert thin_array(20, 20, 10, 10, 5) == thin_array(20, 20, 10, 10, 5)
    assert thin_array(20, 20, 10, 10, 5) != thin_array(20, 20, 10, 10, 6)


def test_thin_array_rejects_too_many_antennas():
    with pytest.raises(ConfigError) as err:
        thin_array(4, 4, 5, 2, 0)
    assert err.value.field == "array.M"


def test_symmetric_carrier_slots():
    plan = CarrierPlan((0, 1, 2, 3), 4, 1.0)
    assert plan.carriers == (-2.0, -1.0, 0.0, 1.0)


@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 20), data=st.data())
@settings(max_examples=200, deadline=None)
def test_carriers_distinct_and_bands_disjoint(seed, T, data):
    M = data.draw(st.integers(1, T + 1))
    bh = 5e6
    plan = assign_carriers(T, M, bh, seed)
    f = np.array(plan.carriers)
    assert len(set(f)) == M
    assert np.all(np.abs(f) <= T * bh / 2)
    bands = sorted(plan.bands())
    for (lo1, hi1), (lo2, hi2) in zip(bands, bands[1:]):
        assert hi1 <= lo2  # half-open bands may touch
    slots = f / bh + T / 2
    assert np.allclose(slots, np.round(slots))


def test_paper_carrier_example():
    plan = assign_carriers(20, 10, 5e6, 3)
    f = np.array(plan.carriers)
    assert f.min() >= -50e6 and f.max() <= 50e6
    assert np.allclose(np.mod(f, 5e6), 0)


def test_too_many_carriers():
    with pytest.raises(ConfigError):
        assign_carriers(4, 6, 1.0, 0)


def test_fourier_indices_full_and_partial():
    assert select_fourier_indices(8, 8, 0).kappa == tuple(range(-4, 4))
    plan = select_fourier_indices(500, 250, 1)
    assert plan.k_count == 250
    assert min(plan.kappa) >= -250 and max(plan.kappa) <= 249
    assert select_fourier_indices(500, 250, 1) == plan
    with pytest.raises(ConfigError):
        select_fourier_indices(8, 9, 0)


def test_sampling_plan_rejects_duplicates():
    with pytest.raises(ConfigError) as err:
        SamplingPlan((1, 1), 8)
    assert err.value.field == "sampling.kappa"


@pytest.mark.parametrize("T,R", [(2, 3), (4, 4), (8, 8)])
def test_approximate_beta_on_ula(T, R):
    cfg = make_config(T=T, R=R, M=T, Q=R, K=4, N=8, layout="ula", approximate_beta=True)
    beta = cfg.beta()
    m = np.asarray(cfg.carriers.grid_indices)  # band c belongs to transmitter c
    assert beta.shape == (T, R)
    expected = (np.arange(R)[None, :] + np.arange(T)[:, None] * R) / 2
    assert np.array_equal(beta, expected)
    assert len(m) == T


@given(seed=st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_exact_beta_finite_and_close(seed):
    cfg = make_config(T=8, R=8, M=4, Q=4, K=8, N=32, seed=seed)
    beta = cfg.beta()
    assert np.all(np.isfinite(beta))
    approx = RadarConfig.from_dict({**cfg.to_dict(), "approximate_beta": True}).beta()
    # carrier term is tiny next to the 10 GHz carrier
    assert np.max(np.abs(beta - approx)) <= np.max(approx) * 0.01


def test_config_mismatch_errors():
    wf = WaveformParams(1e-6, 8e6, 10e9, 1, 4, 4)
    geo = build_virtual_ula(2, 2)
    samp = SamplingPlan((0, 1), 8)
    with pytest.raises(ConfigError) as err:
        RadarConfig(wf, geo, CarrierPlan((0,), 4, 8e6), samp)
    assert err.value.field == "carriers.grid_indices"
    with pytest.raises(ConfigError):
        ArrayGeometry((3.0,), (0.0,), 2.0)


def test_dict_round_trip_and_fingerprint():
    cfg = make_config(T=8, R=8, M=4, Q=4, K=16, N=32, P=8, seed=4)
    again = RadarConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.fingerprint() == cfg.fingerprint()
    assert make_config(T=8, R=8, M=4, Q=4, K=16, N=32, P=8, seed=5).fingerprint() != cfg.fingerprint()


def test_load_config_file(tmp_path):
    path = tmp_path / "radar.yaml"
    path.write_text("array:\n  M: 3\nsampling:\n  K: 10\nseed: 2\n")
    cfg = load_config(path)
    assert cfg.n_tx == 3 and cfg.k_count == 10
    assert load_config(path) == cfg
    assert load_config(path, [("array.Q", 2)]).n_rx == 2


@pytest.mark.parametrize(
    "text,field",
    [
        ("array:\n  M: 99\n", "array.M"),
        ("array:\n  bogus: 1\n", "array.bogus"),
        ("waveform:\n  pulses: two\n", "waveform.pulses"),
        ("sampling:\n  K: 1000\n", "sampling.K"),
        ("waveform:\n  bandwidth: 1.3e6\n", "waveform.bandwidth"),
    ],
)
def test_config_file_errors_name_the_field(tmp_path, text, field):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.field == field
