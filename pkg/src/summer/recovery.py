"""Sparse recovery of range / azimuth / Doppler maps and the classic Nyquist baseline."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse

from .config import RadarConfig, SamplingPlan
from .dictionaries import DictionarySet
from .scene import TargetScene, grid_values
from .synthesis import ChannelCoefficients, coefficient_noise_variance, complex_awgn, synthesize_coefficients

log = logging.getLogger(__name__)


class IllPosedSupportError(RuntimeError):
    """The selected atoms are numerically dependent, so the amplitude refit has no unique solution."""


# -- result types -----------------------------------------------------------


@dataclass(frozen=True)
class MapEntry:
    s: int
    r: int
    u: int
    amplitude: complex
    iteration: int


@dataclass(frozen=True)
class SparseTargetMap:
    entries: tuple[MapEntry, ...]
    dims: tuple[int, int, int]
    residual_norms: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.s, e.r, e.u)
            for v, n in zip(key, self.dims):
                if not 0 <= v < n:
                    raise ValueError(f"entry {key} outside grid {self.dims}")
            if key in seen:
                raise ValueError(f"duplicate entry {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    def indices(self) -> np.ndarray:
        return np.array([(e.s, e.r, e.u) for e in self.entries], dtype=int).reshape(-1, 3)

    def amplitudes(self) -> np.ndarray:
        return np.array([e.amplitude for e in self.entries], dtype=complex)

    def support(self) -> set[tuple[int, int, int]]:
        return {(e.s, e.r, e.u) for e in self.entries}

    def to_sparse(self) -> scipy.sparse.csr_array:
        """``X_D`` layout: row ``r * TN + s``, column ``u``; shape (TN*TR, P)."""
        TN, TR, P = self.dims
        idx = self.indices()
        rows = idx[:, 1] * TN + idx[:, 0]
        return scipy.sparse.csr_array((self.amplitudes(), (rows, idx[:, 2])), shape=(TN * TR, P))


@dataclass(frozen=True)
class RecoveredTarget:
    delay: float
    azimuth_sine: float
    doppler: float
    amplitude: complex
    s: int
    r: int
    u: int
    iteration: int = 0


@dataclass(frozen=True)
class RecoveredTargets:
    targets: tuple[RecoveredTarget, ...]
    dims: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.targets)

    def indices(self) -> np.ndarray:
        return np.array([(t.s, t.r, t.u) for t in self.targets], dtype=int).reshape(-1, 3)

    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.targets], dtype=complex)

    def to_text(self) -> str:
        """One target per line: indices, physical values, amplitude, iteration."""
        lines = ["# s r u delay_s azimuth_sine doppler_hz re(alpha) im(alpha) iteration"]
        for t in self.targets:
            a = complex(t.amplitude)
            lines.append(
                f"{t.s} {t.r} {t.u} {t.delay!r} {t.azimuth_sine!r} {t.doppler!r} {a.real!r} {a.imag!r} {t.iteration}"
            )
        return "\n".join(lines) + "\n"


def estimate_params(tmap: SparseTargetMap, config: RadarConfig) -> RecoveredTargets:
    """Grid indices to delay (s), azimuth sine and Doppler (Hz)."""
    idx = tmap.indices()
    delay, theta, fd = grid_values(idx[:, 0], idx[:, 1], idx[:, 2], tmap.dims, config.waveform)
    out = tuple(
        RecoveredTarget(float(d), float(a), float(f), complex(e.amplitude), e.s, e.r, e.u, e.iteration)
        for d, a, f, e in zip(delay, theta, fd, tmap.entries)
    )
    return RecoveredTargets(out, tmap.dims)


# -- Doppler focusing -------------------------------------------------------


def doppler_grid(config: RadarConfig) -> np.ndarray:
    """``nu_j = -1/(2 tau) + j / (P tau)`` for j in [0, P)."""
    tau, P = config.waveform.pri_tau, config.waveform.pulses_p
    return -0.5 / tau + np.arange(P) / (P * tau)


def _focus(data: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """FFT focusing of (C, Q, P, K) data onto the P-point grid -> (P_nu, C, K, Q)."""
    P = data.shape[2]
    sign = np.where(np.arange(P) % 2 == 0, 1.0, -1.0)  # e^{j pi p}
    spec = np.fft.fft(data * sign[None, None, :, None], axis=2)
    nu_tau = -0.5 + np.arange(P) / P
    phase = np.exp(-2j * np.pi * np.outer(nu_tau, offsets))  # (P_nu, C); launch offsets inside the PRI
    return np.transpose(spec, (2, 0, 3, 1)) * phase[:, :, None, None]


def doppler_focus(coeffs: ChannelCoefficients, nu_grid=None) -> np.ndarray:
    """``Phi^nu[c, q, k] = sum_p y[c, q, p, k] exp(-j 2 pi nu (p + o_c) tau)``; returns (nu, C, Q, K).

    ``nu_grid`` defaults to the P-point Doppler grid (FFT path); any other set of
    frequencies is summed directly.
    """
    cfg = coeffs.config
    tau = cfg.waveform.pri_tau
    offsets = cfg.band_offsets()
    grid = doppler_grid(cfg)
    if nu_grid is None or (len(nu_grid) == len(grid) and np.allclose(nu_grid, grid, rtol=0, atol=1e-9 / tau)):
        return np.transpose(_focus(coeffs.data, offsets), (0, 1, 3, 2))
    nu = np.asarray(nu_grid, dtype=float)
    p = np.arange(cfg.waveform.pulses_p)
    kern = np.exp(-2j * np.pi * nu[:, None, None] * (p[None, None, :] + offsets[None, :, None]) * tau)  # (nu, C, P)
    return np.einsum("ncp,cqpk->ncqk", kern, coeffs.data)


# -- OMP --------------------------------------------------------------------


def _lstsq_qr(atoms: np.ndarray, target: np.ndarray) -> np.ndarray:
    if atoms.shape[1] > atoms.shape[0]:
        raise IllPosedSupportError(f"{atoms.shape[1]} atoms for {atoms.shape[0]} measurements")
    q, r = np.linalg.qr(atoms)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() < 1e-10 * diag.max():
        raise IllPosedSupportError(f"selected atoms are dependent (|R_ii| ratio {diag.min() / diag.max():.3g})")
    return scipy.linalg.solve_triangular(r, q.conj().T @ target)


class _Pursuit:
    """Greedy selection over (s, r, u) with exact least-squares refits on the stacked data."""

    def __init__(self, data: np.ndarray, dicts: DictionarySet, doppler: bool):
        self.data = data  # (C, Q, P, K)
        self.dicts = dicts
        self.doppler = doppler
        self.P = data.shape[2]
        self.slow = np.arange(self.P)[None, :] + dicts.offsets[:, None]  # (C, P) in units of tau

    def scores(self, residual: np.ndarray):
        """Per Doppler bin: |projection| maps of shape (TN, TR)."""
        if self.doppler:
            focused = _focus(residual, self.dicts.offsets)  # (nu, C, K, Q)
        else:
            focused = np.transpose(residual.sum(axis=2), (0, 2, 1))[None]  # P = 1 semantics
        for j in range(focused.shape[0]):
            yield j, np.abs(self.dicts.project(focused[j]))

    def atom(self, s: int, r: int, u: int) -> np.ndarray:
        a = self.dicts.range_atoms(s)  # (C, K)
        b = np.conj(self.dicts.azimuth_atoms(r))  # (C, Q)
        if self.doppler:
            d = np.exp(2j * np.pi * (-0.5 + u / self.P) * self.slow)  # (C, P)
        else:
            d = np.ones_like(self.slow, dtype=complex)
        return np.einsum("cq,cp,ck->cqpk", b, d, a).ravel()

    def run(self, L: int, residual_threshold: float | None) -> SparseTargetMap:
        TN, TR = self.dicts.TN, self.dicts.TR
        P = self.P if self.doppler else 1
        y = self.data.ravel()
        y_norm = float(np.linalg.norm(y))
        residual = self.data
        chosen: list[tuple[int, int, int]] = []
        atoms = np.zeros((y.size, 0), dtype=complex)
        norms = [y_norm]
        alpha = np.zeros(0, dtype=complex)
        for t in range(L):
            if residual_threshold is not None and norms[-1] <= residual_threshold * y_norm:
                break
            best = (-1.0, None)
            for j, mag in self.scores(residual):
                for s, r, u in chosen:
                    if u == j:
                        mag[s, r] = -1.0  # duplicate-atom guard
                flat = int(np.argmax(mag))  # first maximum -> lowest (s, r) for this bin
                value = float(mag.flat[flat])
                s, r = divmod(flat, TR)
                cand = (s, r, j)
                if value > best[0] or (value == best[0] and best[1] is not None and cand < best[1]):
                    best = (value, cand)
            cand = best[1]
            if cand is None:
                break
            chosen.append(cand)
            atoms = np.column_stack([atoms, self.atom(*cand)])
            alpha = _lstsq_qr(atoms, y)
            residual = (y - atoms @ alpha).reshape(self.data.shape)
            norms.append(float(np.linalg.norm(residual)))
        entries = tuple(MapEntry(s, r, u, complex(a), i + 1) for i, ((s, r, u), a) in enumerate(zip(chosen, alpha)))
        return SparseTargetMap(entries, (TN, TR, P), tuple(norms))


def _warn_conditions(dicts: DictionarySet, K: int, Q: int, L: int, P: int | None) -> None:
    C = dicts.n_bands
    if C * K < 2 * L or C * Q < 2 * L or (P is not None and P > 1 and P < 2 * L):
        warnings.warn(f"L={L} exceeds the necessary-condition bound (MK={C * K}, MQ={C * Q}, P={P})", stacklevel=3)


def omp_matrix(
    Y, dicts: DictionarySet, L: int, residual_threshold: float | None = None, warn: bool = True
) -> SparseTargetMap:
    """Simultaneous sparse matrix recovery from ``Y^m = A^m X (B^m)^H``.

    ``Y`` is a sequence (or array) of M matrices of shape (K, Q). Runs exactly L
    iterations unless ``residual_threshold`` is set, in which case it stops once
    ``||R|| <= residual_threshold * ||Y||``.
    """
    Y = np.asarray(Y)
    if Y.ndim != 3 or Y.shape[0] != dicts.n_bands:
        raise ValueError(f"expected {dicts.n_bands} observation matrices, got shape {Y.shape}")
    if warn:
        _warn_conditions(dicts, Y.shape[1], Y.shape[2], L, None)
    data = np.transpose(Y, (0, 2, 1))[:, :, None, :]  # (C, Q, 1, K)
    return _Pursuit(data, dicts, doppler=False).run(L, residual_threshold)


def omp_focus_3d(
    Z: ChannelCoefficients | np.ndarray,
    dicts: DictionarySet,
    L: int,
    residual_threshold: float | None = None,
    warn: bool = True,
) -> SparseTargetMap:
    """Range-azimuth-Doppler recovery with Doppler focusing.

    Each iteration focuses the residual on every grid Doppler, projects onto the
    range-azimuth dictionaries, picks the strongest (s, r, u) and refits all
    selected amplitudes jointly against the full pulse data.
    """
    data = Z.data if isinstance(Z, ChannelCoefficients) else np.asarray(Z)
    if data.ndim != 4 or data.shape[0] != dicts.n_bands or data.shape[2] != dicts.P:
        raise ValueError(f"coefficient tensor of shape {data.shape} does not match the dictionaries")
    if warn:
        _warn_conditions(dicts, data.shape[3], data.shape[1], L, data.shape[2])
    return _Pursuit(data, dicts, doppler=True).run(L, residual_threshold)


def recover(coeffs: ChannelCoefficients, L: int, dicts: DictionarySet | None = None, **kw) -> SparseTargetMap:
    return omp_focus_3d(coeffs, dicts or DictionarySet(coeffs.config), L, **kw)


# -- classic Nyquist processing ---------------------------------------------

CLASSIC_MODES = ("fdma", "cdma")


@dataclass(frozen=True, eq=False)
class NyquistRecord:
    """Separated per-channel samples at the channel Nyquist rate, shape (channels, Q, P, n).

    ``fdma``: one baseband record per carrier band, ``n = N`` samples per PRI.
    ``cdma``: ideally separated full-band channels, ``n = TN`` samples per PRI.
    """

    samples: np.ndarray
    mode: str
    config: RadarConfig


def _cdma_beta(config: RadarConfig) -> np.ndarray:
    xi = np.asarray(config.geometry.tx_positions)
    zeta = np.asarray(config.geometry.rx_positions)
    return xi[:, None] + zeta[None, :]


def synthesize_nyquist_record(
    scene: TargetScene,
    config: RadarConfig,
    mode: str = "cdma",
    snr_db: float = math.inf,
    snr_definition: str = "cdma_equivalent",
    seed=None,
) -> NyquistRecord:
    """Noisy Nyquist-rate channel samples for the classic baseline.

    The noise level per Fourier coefficient follows
    :func:`coefficient_noise_variance`; CDMA pulses occupy the whole band.
    """
    if mode not in CLASSIC_MODES:
        raise ValueError(f"unknown classic mode {mode!r}")
    wf = config.waveform
    rng = np.random.default_rng(seed)
    if mode == "fdma":
        full = replace(config, sampling=SamplingPlan(tuple(range(-(wf.n_nyquist // 2), wf.n_nyquist - wf.n_nyquist // 2)), wf.n_nyquist))
        coeffs = synthesize_coefficients(scene, full).data  # (C, Q, P, N), kappa ascending
        var = coefficient_noise_variance(snr_db, snr_definition, config.n_tx, wf.t_count)
    else:
        TN, TR, P = config.grid_dims
        idx = scene.indices()
        delay, theta, fd = grid_values(idx[:, 0], idx[:, 1], idx[:, 2], config.grid_dims, wf)
        k = np.arange(-(TN // 2), TN - TN // 2)
        az = np.exp(2j * np.pi * _cdma_beta(config)[:, :, None] * theta)  # (M, Q, L)
        dop = np.exp(2j * np.pi * np.outer(np.arange(P) * wf.pri_tau, fd))  # (P, L)
        rng_ph = np.exp(-2j * np.pi * np.outer(k / wf.pri_tau, delay))  # (TN, L)
        coeffs = np.einsum("l,mql,pl,kl->mqpk", scene.amplitudes(), az, dop, rng_ph, optimize=True)
        var = coefficient_noise_variance(snr_db, snr_definition, config.n_tx, wf.t_count, band_fraction=1.0)
    if var > 0:
        coeffs = coeffs + complex_awgn(rng, coeffs.shape, var)
    samples = np.fft.ifft(np.fft.ifftshift(coeffs, axes=-1), axis=-1)
    return NyquistRecord(samples, mode, config)


def _top_cells(mag: np.ndarray, L: int) -> np.ndarray:
    """Flat indices of the L largest entries; ties go to the lowest index."""
    flat = mag.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))
    return order[:L]


def classic_azimuth_cells(beta0: np.ndarray, TR: int) -> int:
    """Number of azimuth resolution cells of a virtual aperture: one per half wavelength of span."""
    span = float(np.max(beta0) - np.min(beta0))
    return int(min(TR, max(1, round(2.0 * span) + 1)))


def _strongest_points(maps, L: int, cell: tuple[int, int]) -> list[tuple[float, int, int, int]]:
    """Greedy pick of the L strongest cells at least one resolution cell apart in range or azimuth.

    ``maps`` yields (u, |map| of shape (TN, TR)); picks in different Doppler bins never suppress
    each other. Returns (magnitude, s, r, u) in pick order.
    """
    cs, cr = cell
    keep = L * (2 * cs - 1) * (2 * cr - 1) + 1  # enough per-bin candidates for an exact greedy pass
    cand = []
    for u, mag in maps:
        flat = mag.ravel()
        top = _top_cells(mag, min(keep, flat.size))
        cand += [(float(flat[i]), int(i) // mag.shape[1], int(i) % mag.shape[1], u) for i in top]
    cand.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    picks: list[tuple[float, int, int, int]] = []
    for c in cand:
        if len(picks) == L:
            break
        if any(p[3] == c[3] and abs(p[1] - c[1]) < cs and abs(p[2] - c[2]) < cr for p in picks):
            continue
        picks.append(c)
    return picks


def classic_process(record: NyquistRecord, config: RadarConfig | None, L: int) -> RecoveredTargets:
    """Matched filter, beamforming, Doppler FFT, then the L strongest points of the map.

    The map is evaluated on the fine (TN, TR, P) grid, but two points closer
    than the system's own resolution cell count as one: the cell is ``1/B_h``
    (T fine bins) in range for FDMA and one bin for CDMA, and ``TR / V`` bins in
    azimuth for a virtual aperture spanning V half-wavelength positions. Both
    modes steer with the carrier-free ``zeta_q + xi_m``; in FDMA the carrier
    phase ``exp(-j 2 pi f_m tau_l)`` is left uncompensated, which couples range
    and azimuth.
    """
    config = config or record.config
    wf = config.waveform
    TN, TR, P = config.grid_dims
    x = record.samples
    n = x.shape[-1]
    # matched filter: circular correlation with the Nyquist-sampled flat-spectrum pulse,
    # read out on the fine delay grid by zero-padding the spectrum
    h = np.fft.ifft(np.ones(n)) * n
    spec = np.fft.fft(x, axis=-1) * np.conj(np.fft.fft(h))
    k = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(int)
    padded = np.zeros(x.shape[:-1] + (TN,), dtype=complex)
    padded[..., np.mod(k, TN)] = spec
    profile = np.fft.ifft(padded, axis=-1) * (TN / n)  # (ch, Q, P, TN)

    if record.mode == "fdma":
        xi = np.asarray(config.geometry.tx_positions)[config.band_transmitter()]
    else:
        xi = np.asarray(config.geometry.tx_positions)
    beta0 = xi[:, None] + np.asarray(config.geometry.rx_positions)[None, :]
    theta = -1.0 + 2.0 * np.arange(TR) / TR
    steer = np.exp(-2j * np.pi * beta0[:, :, None] * theta)  # (ch, Q, TR)
    sign = np.where(np.arange(P) % 2 == 0, 1.0, -1.0)
    profile = np.fft.fft(profile * sign[None, None, :, None], axis=2)  # Doppler bins on the nu grid

    cell = (TN // n, max(1, int(round(TR / classic_azimuth_cells(beta0, TR)))))
    maps = ((u, np.abs(np.einsum("cqs,cqr->sr", profile[:, :, u, :], steer, optimize=True))) for u in range(P))
    targets = []
    for rank, (mag, s, r, u) in enumerate(_strongest_points(maps, L, cell)):
        delay, az, fd = grid_values(s, r, u, (TN, TR, P), wf)
        targets.append(RecoveredTarget(float(delay), float(az), float(fd), complex(mag), s, r, u, rank + 1))
    return RecoveredTargets(tuple(targets), (TN, TR, P))
