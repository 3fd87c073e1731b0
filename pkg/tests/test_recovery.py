import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from summer.config import make_config
from summer.dictionaries import DictionarySet
from summer.evaluation import ClosePairs, RandomScenes, run_monte_carlo
from summer.recovery import (
    IllPosedSupportError,
    MapEntry,
    SparseTargetMap,
    classic_process,
    doppler_focus,
    doppler_grid,
    estimate_params,
    omp_focus_3d,
    omp_matrix,
    synthesize_nyquist_record,
)
from summer.scene import Target, TargetScene, generate_scene, quantize
from summer.synthesis import ChannelCoefficients, add_noise, synthesize_coefficients

COMFY = make_config(T=4, R=4, M=4, Q=4, K=8, N=8, P=1, pri=1e-6, seed=1)
COMFY_3D = make_config(T=4, R=4, M=4, Q=4, K=8, N=8, P=8, pri=1e-6, seed=1)


def _blocks(coeffs):
    """Single-pulse observation matrices Y^m of shape (K, Q)."""
    return np.transpose(coeffs.data.sum(axis=2), (0, 2, 1))


def test_projection_convention_peaks_at_truth():
    d = DictionarySet(COMFY)
    for seed in range(5):
        sc = generate_scene(1, COMFY.grid_dims, seed)
        s0, r0, _ = sc.targets[0].index
        Y = _blocks(synthesize_coefficients(sc, COMFY))
        plain = np.abs(sum(d.A_m[m].conj().T @ Y[m] @ d.B_m[m] for m in range(4)))
        conj = np.abs(sum(d.A_m[m].conj().T @ Y[m] @ d.B_m[m].conj() for m in range(4)))
        assert np.unravel_index(np.argmax(plain), plain.shape) == (s0, r0)
        # the conjugated reading mirrors the azimuth: sin(theta) -> -sin(theta)
        assert np.unravel_index(np.argmax(conj), conj.shape) == (s0, (d.TR - r0) % d.TR)


@pytest.mark.parametrize("seed", range(5))
def test_single_target_matches_matched_filter_oracle(seed):
    d = DictionarySet(COMFY)
    sc = generate_scene(1, COMFY.grid_dims, seed, scale=2.5)
    Y = _blocks(synthesize_coefficients(sc, COMFY))
    y = Y.ravel()
    best, best_cell, best_alpha = math.inf, None, None
    for s, r in itertools.product(range(d.TN), range(d.TR)):
        atom = np.stack([np.outer(d.A_m[m][:, s], d.B_m[m][:, r].conj()) for m in range(4)]).ravel()
        alpha = np.vdot(atom, y) / np.vdot(atom, atom)
        err = np.linalg.norm(y - alpha * atom)
        if err < best - 1e-12:
            best, best_cell, best_alpha = err, (s, r), alpha
    out = omp_matrix(Y, d, 1)
    e = out.entries[0]
    assert (e.s, e.r) == best_cell == sc.targets[0].index[:2]
    assert abs(e.amplitude - best_alpha) <= 1e-9
    assert abs(e.amplitude - sc.targets[0].amplitude) <= 1e-9


def test_zero_observation():
    d = DictionarySet(COMFY)
    out = omp_matrix(np.zeros((4, 8, 4), dtype=complex), d, 3)
    assert len(out) == 3
    assert np.all(out.amplitudes() == 0)


def test_orthogonal_atoms_recovered_in_two_steps():
    # full DFT dims: ULA, K = N, M = T, Q = R, so distinct atoms are exactly orthogonal
    cfg = make_config(T=2, R=2, M=2, Q=2, K=4, N=4, P=1, pri=1e-6, layout="ula", approximate_beta=True)
    d = DictionarySet(cfg)
    # range offsets that are multiples of T make the per-band range atoms orthogonal
    sc = TargetScene((Target(1, 3, 0, 1 + 1j), Target(5, 0, 0, -0.5j)), cfg.grid_dims)
    atoms = [np.stack([np.outer(d.A_m[m][:, t.s], d.B_m[m][:, t.r].conj()) for m in range(2)]).ravel() for t in sc.targets]
    assert abs(np.vdot(*atoms)) <= 1e-9
    out = omp_matrix(_blocks(synthesize_coefficients(sc, cfg)), d, 2)
    assert out.support() == {(1, 3, 0), (5, 0, 0)}
    got = dict(zip(map(tuple, out.indices()), out.amplitudes()))
    assert abs(got[(1, 3, 0)] - (1 + 1j)) <= 1e-9 and abs(got[(5, 0, 0)] + 0.5j) <= 1e-9
    assert out.residual_norms[-1] <= 1e-9


@pytest.mark.parametrize("u", range(8))
def test_focusing_identity_exhaustive(u):
    sc = TargetScene((Target(5, 9, u, 0.8 * np.exp(0.3j)),), COMFY_3D.grid_dims)
    y = synthesize_coefficients(sc, COMFY_3D)
    phi = doppler_focus(y)
    P = 8
    assert np.allclose(np.abs(phi[u]), P * np.abs(y.data[:, :, 0, :]), rtol=1e-10)
    others = np.delete(phi, u, axis=0)
    assert np.max(np.abs(others)) <= 1e-9


def test_fft_focusing_matches_direct_sum():
    cfg = make_config(T=4, R=4, M=2, Q=2, K=4, N=8, P=6, pri=1e-6, gamma=2, seed=3)
    rng = np.random.default_rng(0)
    data = rng.standard_normal((4, 2, 6, 4)) + 1j * rng.standard_normal((4, 2, 6, 4))
    y = ChannelCoefficients(data, cfg)
    tau = cfg.waveform.pri_tau
    nu = doppler_grid(cfg)
    o = cfg.band_offsets()
    direct = np.zeros((6, 4, 2, 4), dtype=complex)
    for j, c, p in itertools.product(range(6), range(4), range(6)):
        direct[j, c] += data[c, :, p, :] * np.exp(-2j * np.pi * nu[j] * (p + o[c]) * tau)
    assert np.allclose(doppler_focus(y), direct, rtol=0, atol=1e-10 * np.abs(direct).max())
    # off-grid frequencies go through the direct path
    off = nu + 0.1 / tau / 6
    ref = np.zeros((6, 4, 2, 4), dtype=complex)
    for j, c, p in itertools.product(range(6), range(4), range(6)):
        ref[j, c] += data[c, :, p, :] * np.exp(-2j * np.pi * off[j] * (p + o[c]) * tau)
    assert np.allclose(doppler_focus(y, off), ref)


def test_single_pulse_focus_is_identity():
    cfg = make_config(T=4, R=4, M=2, Q=2, K=4, N=8, P=1, pri=1e-6, seed=3)
    y = synthesize_coefficients(generate_scene(2, cfg.grid_dims, 0), cfg)
    assert np.allclose(doppler_focus(y)[0], y.data[:, :, 0, :])


def _atom3d(d, s, r, u):
    P = d.P
    p = np.arange(P)
    blocks = []
    for m in range(d.n_bands):
        a = d.A_m[m][:, s]
        b = d.B_m[m][:, r]
        blocks.append(np.einsum("q,p,k->qpk", b.conj(), np.exp(2j * np.pi * (-0.5 + u / P) * p), a))
    return np.stack(blocks).ravel()


@pytest.mark.parametrize("seed", range(5))
def test_focused_omp_two_targets_exact(seed):
    d = DictionarySet(COMFY_3D)
    rng = np.random.default_rng(seed)
    idx = [rng.permutation(n)[:2] for n in COMFY_3D.grid_dims]  # distinct along every axis
    sc = TargetScene(tuple(Target(int(idx[0][i]), int(idx[1][i]), int(idx[2][i]), np.exp(1j * i)) for i in range(2)), COMFY_3D.grid_dims)
    y = synthesize_coefficients(sc, COMFY_3D).data.ravel()
    # exhaustive oracle: the first pick is the most correlated of all TN*TR*P atoms
    corr = np.array(
        [abs(np.vdot(_atom3d(d, s, r, u), y)) for s, r, u in itertools.product(range(d.TN), range(d.TR), range(d.P))]
    )
    out = omp_focus_3d(synthesize_coefficients(sc, COMFY_3D), d, 2)
    e = out.entries[0]
    picked = corr[np.ravel_multi_index((e.s, e.r, e.u), COMFY_3D.grid_dims)]
    assert picked >= corr.max() * (1 - 1e-9)  # orthogonal Doppler atoms can tie exactly
    assert out.support() == {t.index for t in sc.targets}
    assert np.allclose(sorted(out.amplitudes(), key=np.angle), sorted(sc.amplitudes(), key=np.angle), atol=1e-9)


def test_zero_doppler_reduces_to_matrix_omp():
    d3 = DictionarySet(COMFY_3D)
    sc = TargetScene((Target(3, 2, 4, 1j), Target(17, 11, 4, 0.7)), COMFY_3D.grid_dims)
    y = synthesize_coefficients(sc, COMFY_3D)
    focused = omp_focus_3d(y, d3, 2)
    flat = omp_matrix(_blocks(y), d3, 2)
    assert {(s, r) for s, r, _ in focused.support()} == {(s, r) for s, r, _ in flat.support()}
    assert {u for *_, u in focused.support()} == {4}
    # the pulse sum carries P times the single-pulse amplitude
    assert np.allclose(sorted(np.abs(flat.amplitudes())), sorted(8 * np.abs(focused.amplitudes())))


@given(seed=st.integers(0, 10_000), snr=st.floats(-10, 20))
@settings(max_examples=25, deadline=None)
def test_residual_non_increasing(seed, snr):
    d = DictionarySet(COMFY_3D)
    y = add_noise(synthesize_coefficients(generate_scene(3, COMFY_3D.grid_dims, seed), COMFY_3D), snr, seed=seed)
    norms = np.array(omp_focus_3d(y, d, 4).residual_norms)
    assert np.all(np.diff(norms) <= 1e-12 * norms[0])
    flat = np.array(omp_matrix(_blocks(y), d, 4, warn=False).residual_norms)
    assert np.all(np.diff(flat) <= 1e-12 * flat[0])


def test_permutation_invariance():
    d = DictionarySet(COMFY_3D)
    for seed in range(5):
        sc = generate_scene(3, COMFY_3D.grid_dims, seed)
        rev = TargetScene(sc.targets[::-1], sc.dims)
        a = omp_focus_3d(synthesize_coefficients(sc, COMFY_3D), d, 3).support()
        b = omp_focus_3d(synthesize_coefficients(rev, COMFY_3D), d, 3).support()
        assert a == b


def test_vec_block_order_matches_kronecker_stack():
    d = DictionarySet(COMFY)
    sc = generate_scene(3, COMFY.grid_dims, 4)
    y = synthesize_coefficients(sc, COMFY).data  # (C, Q, 1, K) -> vec(Y^0) ... vec(Y^{M-1})
    x = np.zeros(d.TN * d.TR, dtype=complex)
    for t in sc.targets:
        x[t.r * d.TN + t.s] = t.amplitude
    assert np.allclose(y.ravel(), d.kronecker_stack() @ x)


def test_residual_threshold_stops_early():
    d = DictionarySet(COMFY_3D)
    y = synthesize_coefficients(generate_scene(2, COMFY_3D.grid_dims, 1), COMFY_3D)
    out = omp_focus_3d(y, d, 6, residual_threshold=1e-8, warn=False)
    assert len(out) == 2


def test_ill_posed_support():
    # one measurement cannot separate two atoms
    cfg = make_config(T=1, R=1, M=1, Q=1, K=1, N=2, P=1, pri=1e-6)
    sc = TargetScene((Target(0, 0, 0), Target(1, 0, 0, 0.5)), cfg.grid_dims)
    with pytest.raises(IllPosedSupportError):
        omp_matrix(_blocks(synthesize_coefficients(sc, cfg)), DictionarySet(cfg), 2, warn=False)


def test_budget_warning():
    cfg = make_config(T=2, R=2, M=1, Q=1, K=1, N=2, P=1, pri=1e-6)
    with pytest.warns(UserWarning):
        omp_matrix(np.ones((1, 1, 1), dtype=complex), DictionarySet(cfg), 1)


def test_estimate_params_examples():
    dims = COMFY_3D.grid_dims
    tau = COMFY_3D.waveform.pri_tau
    tmap = SparseTargetMap((MapEntry(0, 0, 0, 1.0, 1), MapEntry(dims[0] - 1, 3, 5, 2j, 2)), dims)
    est = estimate_params(tmap, COMFY_3D)
    first, last = est.targets
    assert (first.delay, first.azimuth_sine, first.doppler) == (0.0, -1.0, -0.5 / tau)
    assert last.delay == pytest.approx(tau * (dims[0] - 1) / dims[0])
    lines = est.to_text().splitlines()
    assert len(lines) == 3 and lines[2].split()[:3] == [str(dims[0] - 1), "3", "5"]


def test_estimate_params_round_trip_with_quantize():
    dims = COMFY_3D.grid_dims
    entries = tuple(
        MapEntry(s, r, u, 1.0, 0) for s, r, u in itertools.product(range(dims[0]), range(dims[1]), range(dims[2]))
    )
    est = estimate_params(SparseTargetMap(entries, dims), COMFY_3D)
    for t in est.targets:
        assert quantize(t.delay, t.azimuth_sine, t.doppler, dims, COMFY_3D.waveform) == (t.s, t.r, t.u)


def test_sparse_layout():
    dims = (8, 4, 2)
    tmap = SparseTargetMap((MapEntry(3, 2, 1, 5.0, 1),), dims)
    dense = tmap.to_sparse().toarray()
    assert dense.shape == (32, 2)
    assert dense[2 * 8 + 3, 1] == 5.0 and np.count_nonzero(dense) == 1
    with pytest.raises(ValueError):
        SparseTargetMap((MapEntry(3, 2, 1, 5.0, 1), MapEntry(3, 2, 1, 1.0, 2)), dims)


FULL = make_config(T=4, R=4, M=4, Q=4, K=8, N=8, P=4, pri=1e-6, layout="ula", seed=2)


@pytest.mark.parametrize("seed", range(6))
def test_classic_single_target_cdma(seed):
    sc = generate_scene(1, FULL.grid_dims, seed)
    found = classic_process(synthesize_nyquist_record(sc, FULL, "cdma"), FULL, 1)
    assert tuple(found.indices()[0]) == sc.targets[0].index


@pytest.mark.parametrize("seed", range(4))
def test_classic_single_target_fdma_uncoupled_range(seed):
    # delays on multiples of 1/B_h leave no carrier phase to couple into azimuth
    rng = np.random.default_rng(seed)
    s = 4 * int(rng.integers(0, 8))
    sc = TargetScene((Target(s, int(rng.integers(16)), int(rng.integers(4))),), FULL.grid_dims)
    found = classic_process(synthesize_nyquist_record(sc, FULL, "fdma"), FULL, 1)
    assert tuple(found.indices()[0]) == sc.targets[0].index


def test_classic_noise_only_returns_l_points():
    rec = synthesize_nyquist_record(TargetScene((), FULL.grid_dims), FULL, "cdma", snr_db=0.0, seed=1)
    assert len(classic_process(rec, FULL, 3)) == 3


def test_classic_loses_adjacent_azimuth_pairs_when_compressed():
    cfg = make_config(T=8, R=8, M=4, Q=4, K=32, N=32, P=1, pri=1e-6, layout="ula")
    curve = run_monte_carlo(cfg, ClosePairs("azimuth"), [30.0], 20, "classic", 0, metric="all")
    assert curve.hit_rate[0] <= 0.5
    single = run_monte_carlo(cfg, RandomScenes(1), [30.0], 20, "classic", 0)
    assert single.hit_rate[0] == 1.0


def test_classic_unknown_mode():
    with pytest.raises(ValueError):
        synthesize_nyquist_record(TargetScene((), FULL.grid_dims), FULL, "tdma")
