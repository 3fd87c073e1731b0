"""Observable data: aligned per-channel Fourier coefficients and dense time-domain echoes.

The time-domain model treats every PRI frame as one period of a band-limited
periodic signal, so each pulse replica is a periodic sinc (Dirichlet kernel)
whose spectrum is flat over its band. Pulses that would cross the frame edge
wrap around inside their launch frame.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RadarConfig
from .scene import TargetScene, grid_values


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ChannelCoefficients:
    """Aligned Fourier coefficients ``y[c, q, p, k]`` (band channel, receiver, pulse, kappa index)."""

    data: np.ndarray
    config: RadarConfig
    noise_variance: float = 0.0
    snr_definition: str | None = None

    def __post_init__(self):
        cfg = self.config
        expected = (cfg.n_bands, cfg.n_rx, cfg.waveform.pulses_p, cfg.k_count)
        if self.data.shape != expected:
            raise ModelError(f"coefficient tensor shape {self.data.shape} != {expected}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def with_data(self, data: np.ndarray, **kw) -> "ChannelCoefficients":
        return ChannelCoefficients(
            data,
            self.config,
            kw.get("noise_variance", self.noise_variance),
            kw.get("snr_definition", self.snr_definition),
        )


def _check_dims(scene: TargetScene, config: RadarConfig) -> None:
    if tuple(scene.dims) != tuple(config.grid_dims):
        raise ModelError(f"scene grid {scene.dims} does not match config grid {config.grid_dims}")


def synthesize_coefficients(scene: TargetScene, config: RadarConfig) -> ChannelCoefficients:
    """Evaluate the aligned-coefficient model for every (band, receiver, pulse, kappa)."""
    _check_dims(scene, config)
    wf = config.waveform
    shape = (config.n_bands, config.n_rx, wf.pulses_p, config.k_count)
    if len(scene) == 0:
        return ChannelCoefficients(np.zeros(shape, dtype=complex), config)
    idx = scene.indices()
    delay, theta, fd = grid_values(idx[:, 0], idx[:, 1], idx[:, 2], scene.dims, wf)
    tau = wf.pri_tau
    kappa = np.asarray(config.sampling.kappa, dtype=float)
    carriers = config.band_carriers()
    slow_time = (np.arange(wf.pulses_p)[None, :] + config.band_offsets()[:, None]) * tau  # (C, P)

    azimuth = np.exp(2j * np.pi * config.beta()[:, :, None] * theta)  # (C, Q, L)
    freq = kappa[None, :] / tau + carriers[:, None]  # (C, K)
    ranging = np.exp(-2j * np.pi * freq[:, :, None] * delay)  # (C, K, L)
    doppler = np.exp(2j * np.pi * slow_time[:, :, None] * fd)  # (C, P, L)
    y = np.einsum("l,cql,cpl,ckl->cqpk", scene.amplitudes(), azimuth, doppler, ranging, optimize=True)
    return ChannelCoefficients(y, config)


# -- noise ------------------------------------------------------------------

SNR_DEFINITIONS = ("single_band", "cdma_equivalent")


def coefficient_noise_variance(
    snr_db: float, definition: str, n_tx: int, t_count: int, band_fraction: float | None = None
) -> float:
    """Noise variance of a normalised (unit-modulus-signal) Fourier coefficient.

    ``single_band`` measures the SNR of one transmission over its own band, so a
    unit coefficient sees variance ``1/snr``. ``cdma_equivalent`` fixes the total
    power of the ``n_tx`` transmitters against noise over the whole band; each
    transmission then carries ``band_fraction / n_tx`` of it, where
    ``band_fraction`` is the pulse bandwidth over the total (``1/T`` for FDMA,
    1 for CDMA).
    """
    if definition not in SNR_DEFINITIONS:
        raise ValueError(f"unknown SNR definition {definition!r}")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    if not math.isfinite(snr_db):
        raise ValueError(f"SNR must be finite or +inf, got {snr_db}")
    snr = 10.0 ** (snr_db / 10.0)
    if definition == "single_band":
        return 1.0 / snr
    if band_fraction is None:
        band_fraction = 1.0 / t_count
    return n_tx * band_fraction / snr


def complex_awgn(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_noise(coeffs: ChannelCoefficients, snr_db: float, definition: str = "single_band", seed=None) -> ChannelCoefficients:
    """Add circular complex Gaussian noise to every coefficient at the requested SNR."""
    cfg = coeffs.config
    var = coefficient_noise_variance(snr_db, definition, cfg.n_tx, cfg.waveform.t_count)
    if var == 0.0:
        return coeffs.with_data(coeffs.data.copy(), snr_definition=definition)
    rng = np.random.default_rng(seed)
    noisy = coeffs.data + complex_awgn(rng, coeffs.shape, var)
    return coeffs.with_data(noisy, noise_variance=coeffs.noise_variance + var, snr_definition=definition)


# -- time domain ------------------------------------------------------------


@dataclass(frozen=True)
class PulseSpec:
    """Baseband pulse ``h_0`` with spectrum ``H_0`` supported on one band of width B_h.

    ``taper = 0`` is the flat (rectangular) spectrum. A positive taper bends the
    spectrum to ``1 - taper * (2k/N)^2`` across the band, which stays non-zero for
    ``taper < 1``. ``H_0`` is scaled to ``1/B_h`` at band centre, giving the flat
    pulse unit peak amplitude.
    """

    taper: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.taper < 1.0:
            raise ValueError("taper must be in [0, 1)")

    def spectrum(self, k_rel: np.ndarray, n: int, bandwidth: float) -> np.ndarray:
        """``H_0(2 pi k / tau)`` at baseband bin offsets ``k_rel``; zero outside [-N/2, N/2)."""
        k_rel = np.asarray(k_rel, dtype=float)
        inside = (k_rel >= -(n // 2)) & (k_rel <= n - n // 2 - 1)
        shape = 1.0 - self.taper * (2.0 * k_rel / n) ** 2
        return np.where(inside, shape, 0.0) / bandwidth

    def waveform(self, t: np.ndarray, tau: float, n: int, bandwidth: float) -> np.ndarray:
        """Periodic pulse ``h_0(t)`` with period tau."""
        t = np.asarray(t, dtype=float)
        if self.taper == 0.0:
            x = np.mod(t / tau + 0.5, 1.0) - 0.5
            num = np.sin(np.pi * n * x)
            den = np.sin(np.pi * x)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(np.abs(den) < 1e-15, float(n), num / den)
            # (1/tau) * (1/B_h) * sum_k e^{j 2 pi k t / tau}, k in [-N/2, N/2)
            shift = -(n // 2) + (n - 1) / 2.0
            return ratio * np.exp(2j * np.pi * shift * x) / n
        k = np.arange(-(n // 2), n - n // 2)
        weights = self.spectrum(k, n, bandwidth)
        return (np.exp(2j * np.pi * np.multiply.outer(t, k) / tau) @ weights) / tau


@dataclass(frozen=True, eq=False)
class TimeDomainRecord:
    """Dense baseband samples ``x[q, p, i]`` at rate ``fs`` over each PRI frame."""

    samples: np.ndarray
    fs: float
    config: RadarConfig
    pulse: PulseSpec = field(default_factory=PulseSpec)

    @property
    def samples_per_frame(self) -> int:
        return self.samples.shape[-1]


def synthesize_time_domain(
    scene: TargetScene,
    config: RadarConfig,
    oversample: float = 4,
    pulse: PulseSpec | None = None,
    active_bands=None,
) -> TimeDomainRecord:
    """Sample every receiver at ``oversample * T * B_h`` over P frames.

    ``active_bands`` restricts the sum to a subset of band channels (used to check
    band isolation).
    """
    if oversample < 1:
        raise ModelError("oversample must be >= 1")
    _check_dims(scene, config)
    pulse = pulse or PulseSpec()
    wf = config.waveform
    tau, n_band = wf.pri_tau, wf.n_nyquist
    n = int(round(oversample * wf.t_count * n_band))
    if abs(n - oversample * wf.t_count * n_band) > 1e-9:
        raise ModelError("oversample * T * N must be an integer")
    fs = n / tau
    out = np.zeros((config.n_rx, wf.pulses_p, n), dtype=complex)
    if len(scene) == 0:
        return TimeDomainRecord(out, fs, config, pulse)

    t = np.arange(n) / fs
    idx = scene.indices()
    delay, theta, fd = grid_values(idx[:, 0], idx[:, 1], idx[:, 2], scene.dims, wf)
    alpha = scene.amplitudes()
    beta = config.beta()
    carriers = config.band_carriers()
    offsets = config.band_offsets() * tau
    bands = range(config.n_bands) if active_bands is None else active_bands
    p = np.arange(wf.pulses_p)
    for c in bands:
        # replica of every target: h_0(t - o - tau_l) e^{j 2 pi f_c (t - o - tau_l)}
        lag = t[None, :] - offsets[c] - delay[:, None]  # (L, n)
        echo = pulse.waveform(lag, tau, n_band, wf.bandwidth_bh) * np.exp(2j * np.pi * carriers[c] * lag)
        dop = np.exp(2j * np.pi * np.outer(fd, (p + offsets[c] / tau) * tau))  # (L, P)
        az = np.exp(2j * np.pi * np.outer(beta[c], theta))  # (Q, L)
        out += np.einsum("l,ql,lp,li->qpi", alpha, az, dop, echo, optimize=True)
    return TimeDomainRecord(out, fs, config, pulse)


# -- binary dump ------------------------------------------------------------

_MAGIC = b"SUMR"
_VERSION = 1


def dump_coefficients(coeffs: ChannelCoefficients | np.ndarray, path: str | Path) -> None:
    """Little-endian header (magic, version, ndim, dims) then interleaved complex64."""
    data = coeffs.data if isinstance(coeffs, ChannelCoefficients) else np.asarray(coeffs)
    header = _MAGIC + struct.pack("<II", _VERSION, data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype="<c8").tobytes())


def load_coefficients(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ModelError(f"{path}: not a coefficient dump")
    version, ndim = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise ModelError(f"{path}: unsupported dump version {version}")
    dims = struct.unpack_from(f"<{ndim}I", raw, 12)
    offset = 12 + 4 * ndim
    return np.frombuffer(raw, dtype="<c8", offset=offset).reshape(dims).copy()
