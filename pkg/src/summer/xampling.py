"""Digital stand-in for sub-Nyquist acquisition.

The hardware delivers the kappa-indexed Fourier coefficients of each band
directly; here they are computed from a dense record by quadrature, then
separated per transmitter by matched filtering and normalised.
"""

from __future__ import annotations

import numpy as np

from .config import RadarConfig
from .synthesis import ChannelCoefficients, PulseSpec, TimeDomainRecord


class AcquisitionError(ValueError):
    pass


def acquired_frequencies(config: RadarConfig) -> np.ndarray:
    """Fourier indices ``kappa + f_c tau`` read out for each band channel, shape (C, K)."""
    kappa = np.asarray(config.sampling.kappa)
    shifts = np.rint(config.band_shifts()).astype(int)
    return shifts[:, None] + kappa[None, :]


def extract_coefficients(record: TimeDomainRecord, config: RadarConfig | None = None) -> np.ndarray:
    """Fourier-series coefficients ``c_q^p[k]`` of every frame at the acquired indices.

    The frame integral ``(1/tau) int x(t) e^{-j 2 pi k t / tau} dt`` is evaluated
    with the trapezoidal rule on the dense grid (for a periodic integrand this is
    the DFT divided by the sample count). Returns shape (Q, P, C, K).
    """
    config = config or record.config
    shifts = config.band_shifts()
    if not np.allclose(shifts, np.rint(shifts), atol=1e-9):
        raise AcquisitionError("carrier offsets must sit on the Fourier grid (f_m tau integer)")
    n = record.samples_per_frame
    n_band = config.waveform.n_nyquist
    lo = int(np.rint(shifts.min())) - n_band // 2
    hi = int(np.rint(shifts.max())) + n_band - n_band // 2 - 1
    if hi - lo + 1 > n:
        raise AcquisitionError(
            f"{n} samples per frame alias an occupied spectrum spanning {hi - lo + 1} bins; raise the oversampling"
        )
    spectrum = np.fft.fft(record.samples, axis=-1) / n
    freqs = acquired_frequencies(config)
    return spectrum[..., np.mod(freqs, n)]


def matched_filter_align(raw: np.ndarray, config: RadarConfig, pulse: PulseSpec | None = None) -> ChannelCoefficients:
    """Channel separation, ``tau / |H_0|^2`` normalisation and alignment to baseband.

    ``raw`` has the (Q, P, C, K) layout of :func:`extract_coefficients`. Sub-pulses
    launched at an offset inside the PRI (multi-carrier mode) are shifted back to
    the frame start.
    """
    pulse = pulse or PulseSpec()
    wf = config.waveform
    kappa = np.asarray(config.sampling.kappa, dtype=float)
    h0 = pulse.spectrum(kappa, wf.n_nyquist, wf.bandwidth_bh)  # H_m(k + f_m tau) = H_0(k)
    power = np.abs(h0) ** 2
    if power.min() < 1e-12 * power.max() or power.max() == 0:
        raise AcquisitionError("pulse spectrum vanishes on a selected Fourier index")
    filtered = raw * np.conj(h0)
    y = wf.pri_tau * filtered / power
    freqs = acquired_frequencies(config)
    realign = np.exp(2j * np.pi * freqs * config.band_offsets()[:, None])  # (C, K)
    y = y * realign
    return ChannelCoefficients(np.ascontiguousarray(np.transpose(y, (2, 0, 1, 3))), config)


def acquire(record: TimeDomainRecord, config: RadarConfig | None = None) -> ChannelCoefficients:
    config = config or record.config
    return matched_filter_align(extract_coefficients(record, config), config, record.pulse)
