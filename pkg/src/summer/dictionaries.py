"""Measurement dictionaries, spark/coherence diagnostics and recovery-condition checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .config import RadarConfig, assign_carriers, select_fourier_indices, thin_array


class DictionarySet:
    """Range matrices ``A^m`` (K x TN), azimuth matrices ``B^m`` (Q x TR) and the P x P DFT.

    ``A^m[k, n] = exp(-j 2 pi (kappa_k + f_m tau) n / TN)`` and
    ``B^m[q, r] = exp(-j 2 pi beta_mq (-1 + 2 r / TR))``. ``F[p, u] = exp(-j 2 pi p u / P)``
    is left unnormalised. Matrices are materialised lazily; the projection and
    atom helpers work from the frequency and beta tables so full-size grids
    never need the full ``A``.
    """

    fourier_scaling = "none"

    def __init__(self, config: RadarConfig):
        self.config = config
        self.TN, self.TR, self.P = config.grid_dims
        self.range_freqs = np.asarray(config.sampling.kappa, dtype=float)[None, :] + config.band_shifts()[:, None]
        self.beta = config.beta()
        self.offsets = config.band_offsets()
        self._integer_freqs = np.allclose(self.range_freqs, np.rint(self.range_freqs), atol=1e-9)
        self._theta = -1.0 + 2.0 * np.arange(self.TR) / self.TR

    @property
    def n_bands(self) -> int:
        return self.range_freqs.shape[0]

    @cached_property
    def A_m(self) -> np.ndarray:
        n = np.arange(self.TN)
        return np.exp(-2j * np.pi * self.range_freqs[:, :, None] * n / self.TN)

    @cached_property
    def B_m(self) -> np.ndarray:
        return np.exp(-2j * np.pi * self.beta[:, :, None] * self._theta)

    @cached_property
    def F(self) -> np.ndarray:
        p = np.arange(self.P)
        return np.exp(-2j * np.pi * np.outer(p, p) / self.P)

    @property
    def A(self) -> np.ndarray:
        return self.A_m.reshape(-1, self.TN)

    @property
    def B(self) -> np.ndarray:
        return self.B_m.reshape(-1, self.TR)

    def kronecker_stack(self) -> np.ndarray:
        """``C``: rows ``conj(B^m) kron A^m`` stacked over bands (columns r*TN + s)."""
        return np.vstack([np.kron(np.conj(b), a) for a, b in zip(self.A_m, self.B_m)])

    def range_atoms(self, s) -> np.ndarray:
        """Columns ``A^m[:, s]``, shape (C, K) or (C, K, len(s))."""
        return np.exp(-2j * np.pi * np.multiply.outer(self.range_freqs, np.asarray(s)) / self.TN)

    def azimuth_atoms(self, r) -> np.ndarray:
        """Columns ``B^m[:, r]``, shape (C, Q) or (C, Q, len(r))."""
        theta = -1.0 + 2.0 * np.asarray(r, dtype=float) / self.TR
        return np.exp(-2j * np.pi * np.multiply.outer(self.beta, theta))

    def project(self, R: np.ndarray) -> np.ndarray:
        """``sum_m (A^m)^H R^m B^m`` for residual blocks ``R`` of shape (..., C, K, Q) -> (..., TN, TR)."""
        R = np.asarray(R)
        lead = R.shape[:-3]
        C, K, Q = R.shape[-3:]
        if self._integer_freqs:
            # (A^m)^H R^m is an inverse DFT of R^m scattered onto bins kappa + f_m tau
            # bins are distinct within a band (K <= N < TN); bands get separate slices
            bins = np.mod(np.rint(self.range_freqs).astype(int), self.TN)
            spec = np.zeros(lead + (C, self.TN, Q), dtype=complex)
            for c in range(C):
                spec[..., c, bins[c], :] = R[..., c, :, :]
            U = np.fft.ifft(spec, axis=-2) * self.TN
        else:
            U = np.einsum("ckn,...ckq->...cnq", np.conj(self.A_m), R)
        U = np.moveaxis(U, -3, -2).reshape(lead + (self.TN, C * Q))
        return U @ self.B_m.reshape(C * Q, self.TR)


def build_dictionaries(config: RadarConfig) -> DictionarySet:
    return DictionarySet(config)


# -- spark ------------------------------------------------------------------


class Spark(NamedTuple):
    value: int
    exact: bool


def _dependent(cols: np.ndarray, tol: float) -> bool:
    if cols.shape[1] > cols.shape[0]:
        return True
    sv = np.linalg.svd(cols, compute_uv=False)
    return sv[0] == 0 or sv[-1] < tol * sv[0]


def spark(mtx: np.ndarray, max_check: int | None = None, tol: float = 1e-10) -> Spark:
    """Smallest number of linearly dependent columns, by subset enumeration.

    Full-column-rank matrices get ``n_cols + 1``. When ``max_check`` stops the
    search early the result is the lower bound ``max_check + 1`` with
    ``exact=False``.
    """
    mtx = np.asarray(mtx)
    n_rows, n_cols = mtx.shape
    limit = n_cols if max_check is None else min(max_check, n_cols)
    for size in range(1, limit + 1):
        if size > n_rows:
            return Spark(size, True)
        for subset in itertools.combinations(range(n_cols), size):
            if _dependent(mtx[:, subset], tol):
                return Spark(size, True)
    if limit < n_cols:
        return Spark(limit + 1, False)
    return Spark(n_cols + 1, True)


@dataclass(frozen=True)
class Lemma1Report:
    spark_C: Spark
    spark_A: Spark
    spark_B: Spark
    a_cols: int
    b_cols: int

    @property
    def equal(self) -> bool:
        return self.spark_C.value == min(self.spark_A.value, self.spark_B.value)

    @property
    def lower_bound_holds(self) -> bool:
        return self.spark_C.value >= min(self.spark_A.value, self.spark_B.value)

    @property
    def min_attained_by_dependency(self) -> bool:
        """True when the smaller factor spark comes from a dependent column set (not the cols+1 convention)."""
        m = min(self.spark_A.value, self.spark_B.value)
        return any(
            s.value == m and s.exact and s.value <= n
            for s, n in ((self.spark_A, self.a_cols), (self.spark_B, self.b_cols))
        )

    def as_dict(self) -> dict:
        return {
            "spark_C": self.spark_C.value,
            "spark_A": self.spark_A.value,
            "spark_B": self.spark_B.value,
            "equal": self.equal,
            "lower_bound_holds": self.lower_bound_holds,
            "min_attained_by_dependency": self.min_attained_by_dependency,
        }


def kronecker_stack(A_list: Sequence[np.ndarray], B_list: Sequence[np.ndarray]) -> np.ndarray:
    return np.vstack([np.kron(np.conj(b), a) for a, b in zip(A_list, B_list)])


def verify_lemma1(A_list: Sequence[np.ndarray], B_list: Sequence[np.ndarray], max_check: int | None = None) -> Lemma1Report:
    """Brute-force spark of the stacked Kronecker matrix against the sparks of stacked A and B."""
    if len(A_list) != len(B_list) or not A_list:
        raise ValueError("need the same positive number of A and B blocks")
    A = np.vstack(A_list)
    B = np.vstack(B_list)
    C = kronecker_stack(A_list, B_list)
    if C.shape[1] > 24 and max_check is None:
        raise ValueError(f"C has {C.shape[1]} columns; pass max_check to bound the enumeration")
    return Lemma1Report(spark(C, max_check), spark(A, max_check), spark(B, max_check), A.shape[1], B.shape[1])


def lemma1_instances(seed, n_random: int = 50, n_planted: int = 10):
    """Seeded (A_list, B_list) pairs of 2 x 3 complex Gaussian blocks, M cycling through 1, 2, 3.

    Planted instances copy column 0 into column 2 of every block of A (even
    index) or B (odd index), so that stacked factor has spark 2.
    """
    rng = np.random.default_rng(seed)

    def cg(shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    random_cases = []
    for i in range(n_random):
        M = (1, 2, 3)[i % 3]
        random_cases.append(([cg((2, 3)) for _ in range(M)], [cg((2, 3)) for _ in range(M)]))
    planted = []
    for i in range(n_planted):
        M = 1 + i % 3
        A = [cg((2, 3)) for _ in range(M)]
        B = [cg((2, 3)) for _ in range(M)]
        target = A if i % 2 == 0 else B
        for blk in target:  # the same column duplicated in every block keeps the stacked pair dependent
            blk[:, 2] = blk[:, 0]
        planted.append((A, B))
    return random_cases, planted


# -- coherence --------------------------------------------------------------


def coherence(mtx: np.ndarray) -> float:
    """Largest normalised inner product between two distinct columns."""
    mtx = np.asarray(mtx)
    norms = np.linalg.norm(mtx, axis=0)
    if np.any(norms == 0):
        raise ValueError("coherence undefined for a matrix with a zero column")
    if mtx.shape[1] < 2:
        return 0.0
    unit = mtx / norms
    gram = np.abs(unit.conj().T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


def range_coherence_profile(dicts: DictionarySet) -> np.ndarray:
    """``|<a_n, a_{n+d}>| / ||a||^2`` for d = 0..TN-1 (the stacked A Gram is circulant in d)."""
    f = dicts.range_freqs.ravel()
    d = np.arange(dicts.TN)
    if dicts._integer_freqs:
        hist = np.bincount(np.mod(np.rint(f).astype(int), dicts.TN), minlength=dicts.TN)
        prof = np.abs(np.fft.fft(hist))  # sum_f e^{-j 2 pi f d / TN}
    else:
        prof = np.abs(np.exp(-2j * np.pi * np.outer(d, f) / dicts.TN).sum(axis=1))
    return prof / f.size


def azimuth_coherence_profile(dicts: DictionarySet) -> np.ndarray:
    """``|<b_r, b_{r+d}>| / ||b||^2`` for d = 0..TR-1 (depends on the grid offset only)."""
    beta = dicts.beta.ravel()
    d = np.arange(dicts.TR)
    return np.abs(np.exp(-2j * np.pi * np.outer(2.0 * d / dicts.TR, beta)).sum(axis=1)) / beta.size


def dictionary_coherence(dicts: DictionarySet) -> tuple[float, float]:
    """Coherence of stacked A and stacked B from their shift-invariant Gram profiles."""
    return float(range_coherence_profile(dicts)[1:].max()), float(azimuth_coherence_profile(dicts)[1:].max())


def peak_sidelobe_level(dicts: DictionarySet, axis: str = "range") -> float:
    """Peak sidelobe of the noiseless single-target range-azimuth map, relative to the peak, along ``axis``."""
    prof = range_coherence_profile(dicts) if axis == "range" else azimuth_coherence_profile(dicts)
    return float(prof[1:].max() / prof[0])


@dataclass(frozen=True)
class CoherenceSearchResult:
    best: RadarConfig
    best_index: int
    trace: np.ndarray  # (trials, 2): coherence of A, coherence of B per draw
    objective: str = "max"

    @property
    def scores(self) -> np.ndarray:
        return self.trace.max(axis=1)


def coherence_search(
    config: RadarConfig, trials: int, seed, redraw: Sequence[str] = ("sampling", "carriers", "positions")
) -> CoherenceSearchResult:
    """Random search over (kappa, carriers, positions) minimising max(coherence(A), coherence(B))."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    unknown = set(redraw) - {"sampling", "carriers", "positions"}
    if unknown:
        raise ValueError(f"cannot redraw {sorted(unknown)}")
    wf = config.waveform
    ss = np.random.SeedSequence(seed)
    trace = np.zeros((trials, 2))
    best, best_score, best_idx = None, math.inf, 0
    for i, child in enumerate(ss.spawn(trials)):
        s_pos, s_car, s_kap = (int(x) for x in child.generate_state(3))
        cand = config
        if "positions" in redraw:
            cand = replace(cand, geometry=thin_array(wf.t_count, wf.r_count, config.n_tx, config.n_rx, s_pos))
        if "carriers" in redraw:
            cand = replace(cand, carriers=assign_carriers(wf.t_count, config.n_bands, wf.bandwidth_bh, s_car))
        if "sampling" in redraw:
            cand = replace(cand, sampling=select_fourier_indices(wf.n_nyquist, config.k_count, s_kap))
        trace[i] = dictionary_coherence(DictionarySet(cand))
        score = trace[i].max()
        if score < best_score:
            best, best_score, best_idx = cand, score, i
    return CoherenceSearchResult(best, best_idx, trace)


# -- recovery conditions ----------------------------------------------------


def suggest_antennas(L: int) -> list[tuple[int, int]]:
    """(M, Q) pairs in [sqrt(2L)-1, sqrt(2L)+1] with MQ >= 2L and the smallest M+Q."""
    root = math.sqrt(2 * L)
    lo, hi = max(1, math.ceil(root - 1 - 1e-12)), math.floor(root + 1 + 1e-12)
    pairs = [(m, q) for m in range(lo, hi + 1) for q in range(lo, hi + 1) if m * q >= 2 * L]
    if not pairs:
        return []
    best = min(m + q for m, q in pairs)
    return [(m, q) for m, q in pairs if m + q == best]


@dataclass(frozen=True)
class ConditionReport:
    L: int
    samples_per_receiver: int
    channels: int
    pulses: int
    antenna_suggestion: tuple[tuple[int, int], ...]
    min_k: int

    @property
    def mk_ok(self) -> bool:
        return self.samples_per_receiver >= 2 * self.L

    @property
    def mq_ok(self) -> bool:
        return self.channels >= 2 * self.L

    @property
    def p_ok(self) -> bool:
        return self.pulses >= 2 * self.L

    @property
    def all_ok(self) -> bool:
        return self.mk_ok and self.mq_ok and self.p_ok

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "MK": self.samples_per_receiver,
            "MQ": self.channels,
            "P": self.pulses,
            "MK>=2L": self.mk_ok,
            "MQ>=2L": self.mq_ok,
            "P>=2L": self.p_ok,
            "suggested_MQ_pairs": [list(p) for p in self.antenna_suggestion],
            "min_K_for_M": self.min_k,
        }


def check_recovery_conditions(config: RadarConfig, L: int) -> ConditionReport:
    """Necessary sample, channel and pulse counts for noiseless recovery of L targets."""
    M = config.n_bands
    return ConditionReport(
        L=L,
        samples_per_receiver=M * config.k_count,
        channels=M * config.n_rx,
        pulses=config.waveform.pulses_p,
        antenna_suggestion=tuple(suggest_antennas(L)),
        min_k=math.ceil(2 * L / M),
    )
