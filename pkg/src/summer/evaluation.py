"""Hit-or-miss scoring and Monte-Carlo SNR sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .config import RadarConfig, make_config
from .dictionaries import DictionarySet
from .recovery import SparseTargetMap, classic_process, omp_focus_3d, synthesize_nyquist_record
from .scene import TargetScene, generate_close_pair, generate_scene, generate_scene_with_pairs
from .synthesis import add_noise, synthesize_coefficients

log = logging.getLogger(__name__)

ALGORITHMS = ("summer", "classic", "multi_carrier")
CSV_SCHEMA = "# summer-curve-csv v1"
CSV_COLUMNS = ("snr_db", "hit_rate", "trials", "algorithm", "config_hash", "seed")


# -- scoring ----------------------------------------------------------------


def hit_or_miss(truth: TargetScene, found, doppler: bool = True) -> tuple[int, float]:
    """Greedy one-to-one matching inside a +-1 bin box per axis.

    Found targets are visited by descending amplitude; each takes the first
    unmatched truth target inside its box. ``found`` is anything with
    ``indices()`` and ``amplitudes()``. Returns (hits, hits / L).
    """
    t_idx = truth.indices()
    f_idx = np.asarray(found.indices()).reshape(-1, 3)
    L = len(t_idx)
    if L == 0:
        return 0, 1.0
    order = sorted(range(len(f_idx)), key=lambda i: (-abs(found.amplitudes()[i]), i))
    axes = 3 if doppler else 2
    free = [True] * L
    hits = 0
    for i in order:
        for j in range(L):
            if free[j] and np.all(np.abs(f_idx[i, :axes] - t_idx[j, :axes]) <= 1):
                free[j] = False
                hits += 1
                break
    return hits, hits / L


# -- scene policies ---------------------------------------------------------


@dataclass(frozen=True)
class RandomScenes:
    L: int

    def __call__(self, dims, seed) -> TargetScene:
        return generate_scene(self.L, dims, seed)

    def describe(self) -> str:
        return f"random(L={self.L})"


@dataclass(frozen=True)
class ClosePairs:
    mode: str

    def __call__(self, dims, seed) -> TargetScene:
        return generate_close_pair(self.mode, dims, seed)

    def describe(self) -> str:
        return f"close_pair({self.mode})"


# -- curves -----------------------------------------------------------------


@dataclass(frozen=True)
class HitRateCurve:
    snr_points_db: tuple[float, ...]
    hit_rate: tuple[float, ...]
    trials: int
    config_fingerprint: str
    seed: int
    algorithm: str
    label: str = ""
    snr_definition: str = "single_band"
    metric: str = "targets"
    failed_trials: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.snr_points_db) != len(self.hit_rate):
            raise ValueError("SNR and hit-rate lists differ in length")
        if any(not 0.0 <= h <= 1.0 for h in self.hit_rate):
            raise ValueError("hit rates must lie in [0, 1]")

    def rows(self) -> list[tuple]:
        return [
            (s, h, self.trials, self.label or self.algorithm, self.config_fingerprint, self.seed)
            for s, h in zip(self.snr_points_db, self.hit_rate)
        ]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SUMMER_THREADS", "1")))
    except ValueError:
        return 1


def _seed(*parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) for p in parts])


def run_monte_carlo(
    config: RadarConfig,
    scenes: Callable,
    snr_list: Sequence[float],
    trials: int,
    algorithm: str = "summer",
    seed: int = 0,
    *,
    snr_definition: str = "single_band",
    metric: str = "targets",
    classic_mode: str = "cdma",
    label: str = "",
    threads: int | None = None,
) -> HitRateCurve:
    """Hit rate versus SNR over ``trials`` scenes per point.

    Trial ``t`` uses the same scene at every SNR point (drawn from ``(seed, t)``)
    and fresh noise from ``(seed, t, snr index)``, so curves sharing a seed are
    compared on common scenes. ``metric`` is ``targets`` (fraction of targets
    hit) or ``all`` (fraction of trials where every target is hit). A trial that
    raises counts as zero hits and is listed in ``failed_trials``.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if metric not in ("targets", "all"):
        raise ValueError(f"unknown metric {metric!r}")
    if algorithm == "multi_carrier" and config.multi_carrier_gamma < 2:
        raise ValueError("multi_carrier needs a configuration with multi_carrier_gamma >= 2")
    dims = config.grid_dims
    doppler = dims[2] > 1
    dicts = DictionarySet(config) if algorithm != "classic" else None

    def one(args):
        trial, snr_idx, snr_db = args
        scene = scenes(dims, _seed(seed, trial))
        L = len(scene)
        noise_seed = _seed(seed, trial, snr_idx, 1)
        try:
            if algorithm == "classic":
                record = synthesize_nyquist_record(scene, config, classic_mode, snr_db, snr_definition, noise_seed)
                found = classic_process(record, config, L)
            else:
                coeffs = add_noise(synthesize_coefficients(scene, config), snr_db, snr_definition, noise_seed)
                found = omp_focus_3d(coeffs, dicts, L, warn=False)
        except Exception as exc:  # a failed trial scores zero and the sweep goes on
            log.warning("trial %d at %.2f dB failed: %s", trial, snr_db, exc)
            return 0, L, True
        hits, _ = hit_or_miss(scene, found, doppler=doppler)
        return hits, L, False

    jobs = [(t, i, float(s)) for i, s in enumerate(snr_list) for t in range(trials)]
    workers = threads or _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    rates, failures = [], []
    for i in range(len(snr_list)):
        chunk = results[i * trials : (i + 1) * trials]
        if metric == "targets":
            hits = sum(h for h, _, _ in chunk)
            total = sum(L for _, L, _ in chunk)
            rates.append(hits / total if total else 1.0)
        else:
            rates.append(sum(h == L for h, L, _ in chunk) / trials)
        failures += [(i, t) for t, (_, _, bad) in enumerate(chunk) if bad]
    return HitRateCurve(
        tuple(float(s) for s in snr_list),
        tuple(rates),
        trials,
        config.fingerprint(),
        int(seed),
        algorithm,
        label,
        snr_definition,
        metric,
        tuple(failures),
    )


def snr_at_rate(curve: HitRateCurve, rate: float = 0.5) -> float:
    """SNR where the isotonic (non-decreasing) fit of the curve first reaches ``rate``; NaN if never."""
    snr = np.asarray(curve.snr_points_db, dtype=float)
    order = np.argsort(snr)
    snr = snr[order]
    fit = isotonic_regression(np.asarray(curve.hit_rate, dtype=float)[order], increasing=True).x
    above = np.nonzero(fit >= rate)[0]
    if above.size == 0:
        return math.nan
    i = int(above[0])
    if i == 0:
        return float(snr[0]) if fit[0] == rate else math.nan
    x0, x1, y0, y1 = snr[i - 1], snr[i], fit[i - 1], fit[i]
    return float(x0 + (rate - y0) * (x1 - x0) / (y1 - y0))


def isotonic_deviation(curve: HitRateCurve) -> float:
    """Largest drop of the raw curve below its isotonic fit (monotonicity check)."""
    snr = np.asarray(curve.snr_points_db, dtype=float)
    order = np.argsort(snr)
    raw = np.asarray(curve.hit_rate, dtype=float)[order]
    fit = isotonic_regression(raw, increasing=True).x
    return float(np.max(np.abs(raw - fit))) if raw.size else 0.0


def curves_to_csv(curves: Sequence[HitRateCurve]) -> str:
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in curves:
        for s, h, n, name, fp, seed in c.rows():
            writer.writerow((repr(float(s)), repr(float(h)), n, name, fp, seed))
    return buf.getvalue()


def write_curves_csv(curves: Sequence[HitRateCurve], path: str | Path) -> None:
    Path(path).write_text(curves_to_csv(curves))


def read_curves_csv(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_SCHEMA:
        raise ValueError(f"{path}: missing schema header {CSV_SCHEMA!r}")
    return list(csv.DictReader(lines[1:]))


# -- experiments ------------------------------------------------------------

SCALES = {
    # T, R, N, P
    "desk": dict(T=8, R=8, N=32, P=8),
    "paper": dict(T=20, R=20, N=500, P=10),
}


def _cfg(d: dict, **kw) -> RadarConfig:
    """Configuration on the (T, R, N, P) grid of ``d``; ``pri`` and ``carrier`` are optional keys."""
    return make_config(
        T=d["T"], R=d["R"], N=d["N"], P=d["P"], pri=d.get("pri", 100e-6), carrier=d.get("carrier", 10e9), **kw
    )


@dataclass(frozen=True)
class MapResult:
    scene: TargetScene
    found: SparseTargetMap
    hits: int
    config: RadarConfig


def map_experiment(
    dims: dict, seed: int, snr_db: float, L: int, doppler: bool, *, K: int | None = None
) -> MapResult:
    """Recover one scene with adjacent range and azimuth pairs (plus a Doppler pair when ``doppler``)."""
    d = dict(dims)
    if not doppler:
        d["P"] = 1
    cfg = _cfg(d, M=d["T"] // 2, Q=d["R"] // 2, K=K or d["N"] // 2, seed=seed)
    pairs = ("range", "azimuth", "doppler") if doppler else ("range", "azimuth")
    scene = generate_scene_with_pairs(L, cfg.grid_dims, _seed(seed, 0), pairs)
    coeffs = add_noise(synthesize_coefficients(scene, cfg), snr_db, "single_band", _seed(seed, 0, 0, 1))
    found = omp_focus_3d(coeffs, DictionarySet(cfg), L, warn=False)
    hits, _ = hit_or_miss(scene, found, doppler=doppler)
    return MapResult(scene, found, hits, cfg)


def time_compression_experiment(
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    *,
    dims: dict | None = None,
    compression: Sequence[int] = (1, 2, 4),
    L: int = 3,
    threads: int | None = None,
) -> list[HitRateCurve]:
    """Range-azimuth-Doppler hit rate for K = N, N/2, N/4 with half the antennas."""
    d = dims or dict(SCALES["desk"], N=64)
    curves = []
    for c in compression:
        K = d["N"] // c
        cfg = _cfg(d, M=d["T"] // 2, Q=d["R"] // 2, K=K, seed=seed)
        curves.append(
            run_monte_carlo(
                cfg, RandomScenes(L), snr_list, trials, "summer", seed, label=f"summer_K{K}", threads=threads
            )
        )
    return curves


def resolution_experiment(
    mode: str,
    algorithms: Sequence[str],
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    *,
    dims: dict | None = None,
    compressed: bool = True,
    classic_mode: str = "cdma",
    threads: int | None = None,
) -> dict[str, HitRateCurve]:
    """Both-targets hit rate on close pairs (range or azimuth) in range-azimuth mode (P = 1).

    ``compressed`` keeps half the transmitters and half the receivers. SUMMeR
    then places them at random over the full aperture, while the classic
    baseline gets a filled array of the same size.
    """
    if mode not in ("range", "azimuth"):
        raise ValueError(f"resolution mode must be range or azimuth, got {mode!r}")
    d = dict(dims or SCALES["desk"], P=1)
    T, R, N = d["T"], d["R"], d["N"]
    M, Q = (T // 2, R // 2) if compressed else (T, R)
    out = {}
    for name in algorithms:
        if name == "summer":
            layout = "random" if compressed else "ula"
            cfg = _cfg(d, M=M, Q=Q, K=N, layout=layout, seed=seed)
        elif name == "classic":
            cfg = _cfg(d, M=M, Q=Q, K=N, layout="ula", seed=seed)
        else:
            raise ValueError(f"resolution experiment supports summer and classic, not {name!r}")
        out[name] = run_monte_carlo(
            cfg,
            ClosePairs(mode),
            snr_list,
            trials,
            name,
            seed,
            snr_definition="cdma_equivalent",
            metric="all",
            classic_mode=classic_mode,
            label=f"{name}_{'compressed' if compressed else 'full'}",
            threads=threads,
        )
    return out


def multicarrier_experiment(
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    *,
    dims: dict | None = None,
    L: int = 5,
    threads: int | None = None,
) -> dict[str, HitRateCurve]:
    """Uncompressed SUMMeR, compressed SUMMeR and multi-carrier SUMMeR (gamma = 2) on common scenes."""
    d = dims or SCALES["desk"]
    T, R, N = d["T"], d["R"], d["N"]
    setups = {
        "summer_full": (_cfg(d, M=T, Q=R, K=N, layout="ula", seed=seed), "summer"),
        "summer_compressed": (_cfg(d, M=T // 2, Q=R // 2, K=N, seed=seed), "summer"),
        "multi_carrier": (_cfg(d, M=T // 2, Q=R // 2, K=N, gamma=2, seed=seed), "multi_carrier"),
    }
    return {
        label: run_monte_carlo(
            cfg,
            RandomScenes(L),
            snr_list,
            trials,
            algo,
            seed,
            snr_definition="cdma_equivalent",
            label=label,
            threads=threads,
        )
        for label, (cfg, algo) in setups.items()
    }
