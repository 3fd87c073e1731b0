"""Radar system description: waveform, thinned array, FDMA carriers, Fourier index set.

Positions are stored in units of the carrier wavelength, frequencies in Hz and
times in seconds. Every type here is an immutable value.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid radar configuration. ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class WaveformParams:
    pri_tau: float
    bandwidth_bh: float
    carrier_fc: float
    pulses_p: int
    t_count: int
    r_count: int

    def __post_init__(self):
        for name in ("pri_tau", "bandwidth_bh", "carrier_fc"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"waveform.{name}", "must be positive")
        product = self.pri_tau * self.bandwidth_bh
        if abs(product - round(product)) > 1e-9 * max(product, 1.0) or round(product) < 1:
            raise ConfigError("waveform.pri_tau", f"pri * bandwidth = {product!r} is not a positive integer")
        for name in ("pulses_p", "t_count", "r_count"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"waveform.{name}", "must be >= 1")

    @property
    def n_nyquist(self) -> int:
        """Nyquist samples per PRI for one band, ``N = tau * B_h``."""
        return int(round(self.pri_tau * self.bandwidth_bh))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_fc

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        """(TN, TR, P): sizes of the delay, azimuth and Doppler grids."""
        return (self.t_count * self.n_nyquist, self.t_count * self.r_count, self.pulses_p)


@dataclass(frozen=True)
class ArrayGeometry:
    tx_positions: tuple[float, ...]
    rx_positions: tuple[float, ...]
    aperture_z: float

    def __post_init__(self):
        object.__setattr__(self, "tx_positions", tuple(float(x) for x in self.tx_positions))
        object.__setattr__(self, "rx_positions", tuple(float(x) for x in self.rx_positions))
        if not self.tx_positions:
            raise ConfigError("array.tx_positions", "at least one transmitter is required")
        if not self.rx_positions:
            raise ConfigError("array.rx_positions", "at least one receiver is required")
        for name in ("tx_positions", "rx_positions"):
            for i, x in enumerate(getattr(self, name)):
                if not 0.0 <= x <= self.aperture_z:
                    raise ConfigError(f"array.{name}[{i}]", f"{x} outside [0, {self.aperture_z}]")

    @property
    def n_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions)


@dataclass(frozen=True)
class CarrierPlan:
    """FDMA carriers ``f = (i - T/2) * B_h`` on integer grid slots ``i`` in [0, T]."""

    grid_indices: tuple[int, ...]
    t_count: int
    bandwidth_bh: float

    def __post_init__(self):
        idx = tuple(int(i) for i in self.grid_indices)
        object.__setattr__(self, "grid_indices", idx)
        if len(set(idx)) != len(idx):
            raise ConfigError("carriers.grid_indices", "slots must be distinct")
        for j, i in enumerate(idx):
            if not 0 <= i <= self.t_count:
                raise ConfigError(f"carriers.grid_indices[{j}]", f"slot {i} outside [0, {self.t_count}]")

    @property
    def carriers(self) -> tuple[float, ...]:
        return tuple((i - self.t_count / 2) * self.bandwidth_bh for i in self.grid_indices)

    def bands(self) -> list[tuple[float, float]]:
        half = self.bandwidth_bh / 2
        return [(f - half, f + half) for f in self.carriers]


@dataclass(frozen=True)
class SamplingPlan:
    """Fourier indices kept in every band (shared across bands)."""

    kappa: tuple[int, ...]
    n_nyquist: int

    def __post_init__(self):
        k = tuple(sorted(int(x) for x in self.kappa))
        object.__setattr__(self, "kappa", k)
        if not k:
            raise ConfigError("sampling.kappa", "at least one Fourier index is required")
        if len(set(k)) != len(k):
            raise ConfigError("sampling.kappa", "indices must be distinct")
        lo, hi = -(self.n_nyquist // 2), self.n_nyquist - self.n_nyquist // 2 - 1
        if k[0] < lo or k[-1] > hi:
            raise ConfigError("sampling.kappa", f"indices must lie in [{lo}, {hi}]")

    @property
    def k_count(self) -> int:
        return len(self.kappa)


@dataclass(frozen=True)
class RadarConfig:
    waveform: WaveformParams
    geometry: ArrayGeometry
    carriers: CarrierPlan
    sampling: SamplingPlan
    multi_carrier_gamma: int = 1
    approximate_beta: bool = False
    seeds: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.multi_carrier_gamma < 1:
            raise ConfigError("multi_carrier_gamma", "must be >= 1")
        wf = self.waveform
        if self.geometry.n_tx > wf.t_count:
            raise ConfigError("array.M", f"M={self.geometry.n_tx} exceeds T={wf.t_count}")
        if self.geometry.n_rx > wf.r_count:
            raise ConfigError("array.Q", f"Q={self.geometry.n_rx} exceeds R={wf.r_count}")
        expected = self.geometry.n_tx * self.multi_carrier_gamma
        if len(self.carriers.grid_indices) != expected:
            raise ConfigError(
                "carriers.grid_indices",
                f"{len(self.carriers.grid_indices)} carriers for M*gamma={expected} transmissions",
            )
        if self.carriers.t_count != wf.t_count or self.carriers.bandwidth_bh != wf.bandwidth_bh:
            raise ConfigError("carriers", "carrier grid does not match the waveform")
        if self.sampling.n_nyquist != wf.n_nyquist:
            raise ConfigError("sampling", "sampling plan built for a different N")
        object.__setattr__(self, "seeds", dict(self.seeds))

    # Band channels: transmitter m emits gamma sub-pulses, channel c = m*gamma + i.

    @property
    def n_tx(self) -> int:
        return self.geometry.n_tx

    @property
    def n_rx(self) -> int:
        return self.geometry.n_rx

    @property
    def n_bands(self) -> int:
        return self.n_tx * self.multi_carrier_gamma

    @property
    def k_count(self) -> int:
        return self.sampling.k_count

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        return self.waveform.grid_dims

    def band_transmitter(self) -> np.ndarray:
        return np.arange(self.n_bands) // self.multi_carrier_gamma

    def band_offsets(self) -> np.ndarray:
        """Launch offset of each band channel inside the PRI, in units of tau."""
        g = self.multi_carrier_gamma
        return (np.arange(self.n_bands) % g) / g

    def band_carriers(self) -> np.ndarray:
        return np.asarray(self.carriers.carriers, dtype=float)

    def band_shifts(self) -> np.ndarray:
        """Carrier offsets ``f_m * tau`` in Fourier bins (integers on the B_h grid)."""
        return self.band_carriers() * self.waveform.pri_tau

    def beta(self) -> np.ndarray:
        """Phase-centre factors, shape (n_bands, Q).

        Exact form ``(zeta_q + xi_m)(f_m lambda / c + 1)``; with ``approximate_beta``
        the carrier term is dropped.
        """
        xi = np.asarray(self.geometry.tx_positions)[self.band_transmitter()]
        zeta = np.asarray(self.geometry.rx_positions)
        base = xi[:, None] + zeta[None, :]
        if self.approximate_beta:
            return base
        scale = 1.0 + self.band_carriers() / self.waveform.carrier_fc
        return base * scale[:, None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "waveform": asdict(self.waveform),
            "geometry": {
                "tx_positions": list(self.geometry.tx_positions),
                "rx_positions": list(self.geometry.rx_positions),
                "aperture_z": self.geometry.aperture_z,
            },
            "carriers": {"grid_indices": list(self.carriers.grid_indices)},
            "sampling": {"kappa": list(self.sampling.kappa)},
            "multi_carrier_gamma": self.multi_carrier_gamma,
            "approximate_beta": self.approximate_beta,
            "seeds": dict(self.seeds),
        }

    def fingerprint(self) -> str:
        payload = self.to_dict()
        payload.pop("seeds")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RadarConfig":
        wf = WaveformParams(**d["waveform"])
        g = d["geometry"]
        geometry = ArrayGeometry(tuple(g["tx_positions"]), tuple(g["rx_positions"]), g["aperture_z"])
        carriers = CarrierPlan(tuple(d["carriers"]["grid_indices"]), wf.t_count, wf.bandwidth_bh)
        sampling = SamplingPlan(tuple(d["sampling"]["kappa"]), wf.n_nyquist)
        return cls(
            wf,
            geometry,
            carriers,
            sampling,
            multi_carrier_gamma=int(d.get("multi_carrier_gamma", 1)),
            approximate_beta=bool(d.get("approximate_beta", False)),
            seeds=d.get("seeds", {}),
        )


def build_virtual_ula(T: int, R: int) -> ArrayGeometry:
    """Full Nyquist MIMO layout: receivers every 1/2, transmitters every R/2 (wavelengths)."""
    if T < 1 or R < 1:
        raise ConfigError("array", "T and R must be >= 1")
    return ArrayGeometry(
        tuple(m * R / 2 for m in range(T)),
        tuple(q / 2 for q in range(R)),
        T * R / 2,
    )


def thin_array(T: int, R: int, M: int, Q: int, seed) -> ArrayGeometry:
    """Draw M transmitter and Q receiver positions i.i.d. uniform on [0, TR/2], sorted."""
    if M > T:
        raise ConfigError("array.M", f"M={M} exceeds T={T}")
    if Q > R:
        raise ConfigError("array.Q", f"Q={Q} exceeds R={R}")
    if M < 1 or Q < 1:
        raise ConfigError("array", "M and Q must be >= 1")
    z = T * R / 2
    rng = np.random.default_rng(seed)
    tx = np.sort(rng.uniform(0.0, z, size=M))
    rx = np.sort(rng.uniform(0.0, z, size=Q))
    return ArrayGeometry(tuple(tx), tuple(rx), z)


def assign_carriers(T: int, M: int, bh: float, seed) -> CarrierPlan:
    """Pick M distinct slots from the T+1 integers in [0, T], keeping draw order."""
    if M > T + 1:
        raise ConfigError("carriers", f"cannot place {M} distinct carriers on {T + 1} slots")
    rng = np.random.default_rng(seed)
    slots = rng.choice(T + 1, size=M, replace=False)
    return CarrierPlan(tuple(int(i) for i in slots), T, bh)


def select_fourier_indices(N: int, K: int, seed) -> SamplingPlan:
    if K > N:
        raise ConfigError("sampling.K", f"K={K} exceeds N={N}")
    if K < 1:
        raise ConfigError("sampling.K", "must be >= 1")
    lo = -(N // 2)
    if K == N:
        return SamplingPlan(tuple(range(lo, lo + N)), N)
    rng = np.random.default_rng(seed)
    picks = rng.choice(N, size=K, replace=False) + lo
    return SamplingPlan(tuple(int(k) for k in picks), N)


def make_config(
    *,
    T: int,
    R: int,
    M: int,
    Q: int,
    K: int,
    N: int | None = None,
    P: int = 1,
    pri: float = 100e-6,
    bandwidth: float | None = None,
    carrier: float = 10e9,
    gamma: int = 1,
    layout: str = "random",
    approximate_beta: bool = False,
    seed: int = 0,
) -> RadarConfig:
    """Build a complete configuration from scalar design parameters.

    Exactly one of ``N`` and ``bandwidth`` fixes the band; when ``N`` is given the
    bandwidth becomes ``N / pri``. Sub-seeds for the array, carriers and Fourier
    indices are derived from ``seed``.
    """
    if (N is None) == (bandwidth is None):
        raise ConfigError("waveform", "give exactly one of N and bandwidth")
    if bandwidth is None:
        bandwidth = N / pri
    wf = WaveformParams(pri, bandwidth, carrier, P, T, R)
    seeds = {"array": seed * 3 + 1, "carriers": seed * 3 + 2, "sampling": seed * 3 + 3}
    if layout == "random":
        geometry = thin_array(T, R, M, Q, seeds["array"])
    elif layout == "ula":
        geometry = build_virtual_ula(M, Q)
        if (M, Q) != (T, R):
            geometry = replace(geometry, aperture_z=T * R / 2)
    else:
        raise ConfigError("array.layout", f"unknown layout {layout!r}")
    carriers = assign_carriers(T, M * gamma, bandwidth, seeds["carriers"])
    sampling = select_fourier_indices(wf.n_nyquist, K, seeds["sampling"])
    return RadarConfig(wf, geometry, carriers, sampling, gamma, approximate_beta, seeds)


# -- config files -----------------------------------------------------------

_FILE_SCHEMA = {
    "waveform": {"pri": float, "bandwidth": float, "carrier": float, "pulses": int},
    "array": {"T": int, "R": int, "M": int, "Q": int, "layout": str},
    "sampling": {"K": int},
    "multi_carrier_gamma": int,
    "approximate_beta": bool,
    "seed": int,
}

DEFAULT_FILE_CONFIG: dict[str, Any] = {
    "waveform": {"pri": 6.4e-6, "bandwidth": 5e6, "carrier": 10e9, "pulses": 8},
    "array": {"T": 8, "R": 8, "M": 4, "Q": 4, "layout": "random"},
    "sampling": {"K": 32},
    "multi_carrier_gamma": 1,
    "approximate_beta": False,
    "seed": 0,
}


def _check_schema(data: Any, schema: Any, path: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a section")
        for key in data:
            if key not in schema:
                raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
        for key, sub in schema.items():
            if key not in data:
                raise ConfigError(f"{path}.{key}" if path else key, "missing")
            _check_schema(data[key], sub, f"{path}.{key}" if path else key)
        return
    if schema is float and isinstance(data, int) and not isinstance(data, bool):
        return
    if schema is int and isinstance(data, bool):
        raise ConfigError(path, "expected an integer")
    if not isinstance(data, schema):
        raise ConfigError(path, f"expected {schema.__name__}, got {type(data).__name__}")


def _merge(base: dict, extra: Mapping) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(data: dict, dotted: str, value: Any) -> dict:
    """Return a copy of ``data`` with ``a.b.c = value`` applied."""
    keys = dotted.split(".")
    patch: dict = {}
    cur = patch
    for k in keys[:-1]:
        cur[k] = {}
        cur = cur[k]
    cur[keys[-1]] = value
    return _merge(data, patch)


def config_from_file_data(data: Mapping[str, Any]) -> RadarConfig:
    """Validate a parsed config file and build the configuration it describes."""
    merged = _merge(DEFAULT_FILE_CONFIG, data or {})
    _check_schema(merged, _FILE_SCHEMA, "")
    wf, arr = merged["waveform"], merged["array"]
    for key in ("T", "R", "M", "Q"):
        if arr[key] < 1:
            raise ConfigError(f"array.{key}", "must be >= 1")
    if merged["waveform"]["pulses"] < 1:
        raise ConfigError("waveform.pulses", "must be >= 1")
    if merged["sampling"]["K"] < 1:
        raise ConfigError("sampling.K", "must be >= 1")
    product = wf["pri"] * wf["bandwidth"]
    if product <= 0 or abs(product - round(product)) > 1e-9 * max(product, 1.0):
        raise ConfigError("waveform.bandwidth", f"pri * bandwidth = {product} is not an integer")
    if merged["sampling"]["K"] > round(product):
        raise ConfigError("sampling.K", f"K exceeds N={round(product)}")
    return make_config(
        T=arr["T"],
        R=arr["R"],
        M=arr["M"],
        Q=arr["Q"],
        K=merged["sampling"]["K"],
        P=wf["pulses"],
        pri=float(wf["pri"]),
        bandwidth=float(wf["bandwidth"]),
        carrier=float(wf["carrier"]),
        gamma=merged["multi_carrier_gamma"],
        layout=arr["layout"],
        approximate_beta=merged["approximate_beta"],
        seed=merged["seed"],
    )


def load_config_data(path: str | Path | None, overrides: Sequence[tuple[str, Any]] = ()) -> dict:
    data: dict = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
    merged = _merge(DEFAULT_FILE_CONFIG, data)
    for key, value in overrides:
        merged = apply_override(merged, key, value)
    return merged


def load_config(path: str | Path | None, overrides: Sequence[tuple[str, Any]] = ()) -> RadarConfig:
    return config_from_file_data(load_config_data(path, overrides))
