"""Ground-truth target scenes on the delay / azimuth / Doppler Nyquist grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import WaveformParams


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Target:
    s: int
    r: int
    u: int
    amplitude: complex = 1.0 + 0.0j

    @property
    def index(self) -> tuple[int, int, int]:
        return (self.s, self.r, self.u)


@dataclass(frozen=True)
class TargetScene:
    targets: tuple[Target, ...]
    dims: tuple[int, int, int]  # (TN, TR, P)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        seen = set()
        for t in self.targets:
            for value, size, name in zip(t.index, self.dims, ("s", "r", "u")):
                if not 0 <= value < size:
                    raise SceneError(f"target {name}={value} outside [0, {size})")
            if abs(t.amplitude) == 0:
                raise SceneError("target amplitude must be non-zero")
            if t.index in seen:
                raise SceneError(f"duplicate target cell {t.index}")
            seen.add(t.index)

    def __len__(self) -> int:
        return len(self.targets)

    def indices(self) -> np.ndarray:
        return np.array([t.index for t in self.targets], dtype=int).reshape(-1, 3)

    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.targets], dtype=complex)

    def union(self, other: "TargetScene") -> "TargetScene":
        if other.dims != self.dims:
            raise SceneError("scene dims differ")
        return TargetScene(self.targets + other.targets, self.dims)

    def save(self, path: str | Path) -> None:
        """Write ``TN TR P`` on the first line, then ``s r u re im`` per target."""
        lines = ["# s r u re(alpha) im(alpha)", " ".join(str(d) for d in self.dims)]
        for t in self.targets:
            a = complex(t.amplitude)
            lines.append(f"{t.s} {t.r} {t.u} {a.real!r} {a.imag!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TargetScene":
        rows = [
            ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")
        ]
        if not rows or len(rows[0]) != 3:
            raise SceneError(f"{path}: first line must hold the grid dims TN TR P")
        dims = tuple(int(x) for x in rows[0])
        targets = []
        for row in rows[1:]:
            if len(row) != 5:
                raise SceneError(f"{path}: malformed target line {' '.join(row)!r}")
            s, r, u = (int(x) for x in row[:3])
            targets.append(Target(s, r, u, complex(float(row[3]), float(row[4]))))
        return cls(tuple(targets), dims)


def _unit_phases(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=n))


def generate_scene(L: int, dims: tuple[int, int, int], seed, scale: float = 1.0) -> TargetScene:
    """L distinct grid cells drawn uniformly, Swerling-0 amplitudes ``scale * e^{j phi}``."""
    TN, TR, P = dims
    cells = TN * TR * P
    if L < 0 or L > cells:
        raise SceneError(f"cannot place {L} targets on {cells} cells")
    rng = np.random.default_rng(seed)
    flat = rng.choice(cells, size=L, replace=False) if L else np.zeros(0, dtype=int)
    s, r, u = np.unravel_index(flat, (TN, TR, P))
    alpha = scale * _unit_phases(rng, L)
    return TargetScene(
        tuple(Target(int(a), int(b), int(c), complex(x)) for a, b, c, x in zip(s, r, u, alpha)), dims
    )


_AXES = {"range": 0, "azimuth": 1, "doppler": 2}


def generate_close_pair(mode: str, dims: tuple[int, int, int], seed) -> TargetScene:
    """Two targets one grid step apart along ``mode``; the shared indices are random."""
    if mode not in _AXES:
        raise SceneError(f"unknown close-pair mode {mode!r}")
    axis = _AXES[mode]
    if dims[axis] < 2:
        raise SceneError(f"need at least 2 cells along {mode}")
    rng = np.random.default_rng(seed)
    first = [int(rng.integers(0, d)) for d in dims]
    first[axis] = int(rng.integers(0, dims[axis] - 1))
    second = list(first)
    second[axis] += 1
    alpha = _unit_phases(rng, 2)
    return TargetScene((Target(*first, complex(alpha[0])), Target(*second, complex(alpha[1]))), dims)


def _nearest(x: float, size: int) -> int:
    # half-way values go to the lower index
    return min(max(math.ceil(x - 0.5), 0), size - 1)


def quantize(
    delay: float, azimuth_sine: float, doppler: float, dims: tuple[int, int, int], waveform: WaveformParams
) -> tuple[int, int, int]:
    """Nearest grid cell for physical (delay, sin(theta), Doppler) values."""
    TN, TR, P = dims
    tau = waveform.pri_tau
    if not 0.0 <= delay < tau:
        raise SceneError(f"delay {delay} outside [0, {tau})")
    if not -1.0 <= azimuth_sine < 1.0:
        raise SceneError(f"azimuth sine {azimuth_sine} outside [-1, 1)")
    if not -0.5 / tau <= doppler < 0.5 / tau:
        raise SceneError(f"Doppler {doppler} outside [-1/(2 tau), 1/(2 tau))")
    s = _nearest(delay * TN / tau, TN)
    r = _nearest((azimuth_sine + 1.0) * TR / 2.0, TR)
    u = _nearest((doppler * tau + 0.5) * P, P)
    return s, r, u


def grid_values(
    s, r, u, dims: tuple[int, int, int], waveform: WaveformParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical delay, azimuth sine and Doppler of grid indices."""
    TN, TR, P = dims
    tau = waveform.pri_tau
    s, r, u = (np.asarray(v, dtype=float) for v in (s, r, u))
    return tau * s / TN, -1.0 + 2.0 * r / TR, -0.5 / tau + u / (P * tau)


def generate_scene_with_pairs(L: int, dims: tuple[int, int, int], seed, pairs=("range", "azimuth")) -> TargetScene:
    """L targets containing one adjacent pair per entry of ``pairs``; the rest are uniform."""
    if 2 * len(pairs) > L:
        raise SceneError(f"{len(pairs)} pairs need at least {2 * len(pairs)} targets")
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    children = iter(ss.spawn(len(pairs) + 64))
    targets: list[Target] = []
    taken: set[tuple[int, int, int]] = set()
    for mode in pairs:
        while True:
            pair = generate_close_pair(mode, dims, next(children))
            if not {t.index for t in pair.targets} & taken:
                break
        targets += pair.targets
        taken |= {t.index for t in pair.targets}
    rng = np.random.default_rng(next(children))
    TN, TR, P = dims
    while len(targets) < L:
        cell = tuple(int(x) for x in np.unravel_index(int(rng.integers(TN * TR * P)), dims))
        if cell in taken:
            continue
        taken.add(cell)
        targets.append(Target(*cell, complex(_unit_phases(rng, 1)[0])))
    return TargetScene(tuple(targets), dims)
