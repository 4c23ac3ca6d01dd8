"""Sampled drive envelopes and their spectra.

Envelopes are real Rabi amplitudes (rad/ns) on a uniform time grid; the
default rate of 1 GS/s matches the dual 1 GHz DACs of the control chain,
with oversampling available when integration accuracy calls for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh

GAUSSIAN_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

DEFAULT_SAMPLE_RATE = 1.0  # GS/s
DEFAULT_TRUNCATION = 2.0   # per-side window, in multiples of the FWHM
DEFAULT_PAD_FACTOR = 16
DEFAULT_TIME_BANDWIDTH = 3.0


class EnvelopeError(ValueError):
    """Invalid envelope construction or analysis request."""


def gaussian_sigma(fwhm_ns: float) -> float:
    return fwhm_ns * GAUSSIAN_FWHM_TO_SIGMA


@dataclass(frozen=True)
class PulseEnvelope:
    """Uniformly sampled real drive envelope with shape metadata."""

    samples: np.ndarray
    sample_rate: float  # GS/s
    shape: str = "custom"
    fwhm: float | None = None  # ns, gaussian only
    peak_time: float = 0.0     # ns

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise EnvelopeError("envelope needs a non-empty 1-d sample array")
        if not np.all(np.isfinite(samples)):
            raise EnvelopeError("envelope samples must be finite")
        if self.sample_rate <= 0:
            raise EnvelopeError("sample rate must be positive")
        if self.shape not in ("gaussian", "slepian", "custom"):
            raise EnvelopeError(f"unknown shape tag {self.shape!r}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) / self.sample_rate

    @property
    def area(self) -> float:
        """Trapezoid integral of the envelope, rad."""
        return float(np.trapezoid(self.samples, dx=1.0 / self.sample_rate))

    def scaled(self, factor: float) -> "PulseEnvelope":
        return replace(self, samples=self.samples * factor)


@dataclass(frozen=True)
class Waveform:
    """Complex baseband drive stream; real/imag parts are the I/Q channels."""

    samples: np.ndarray
    sample_rate: float  # GS/s

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise EnvelopeError("waveform needs a non-empty 1-d sample array")
        if self.sample_rate <= 0:
            raise EnvelopeError("sample rate must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


def gaussian_envelope(
    fwhm_ns: float,
    amplitude: float,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    truncation: float = DEFAULT_TRUNCATION,
) -> PulseEnvelope:
    """Gaussian A*exp(-(t-t0)^2 / 2 sigma^2), windowed to truncation*fwhm per side.

    The sample count is odd so the peak lands exactly on a sample.
    """
    if fwhm_ns <= 0:
        raise EnvelopeError("fwhm must be positive")
    if sample_rate <= 0:
        raise EnvelopeError("sample rate must be positive")
    if truncation < 1:
        raise EnvelopeError("truncation must be at least 1 fwhm per side")
    duration = 2.0 * truncation * fwhm_ns
    half = int(round(0.5 * duration * sample_rate))
    n = 2 * half + 1
    t = np.arange(n) / sample_rate
    t0 = half / sample_rate
    sigma = gaussian_sigma(fwhm_ns)
    samples = amplitude * np.exp(-((t - t0) ** 2) / (2.0 * sigma**2))
    return PulseEnvelope(samples, sample_rate, shape="gaussian", fwhm=fwhm_ns, peak_time=t0)


def prolate_matrix(n: int, half_bandwidth: float) -> np.ndarray:
    """Symmetric n x n matrix with entries sin(2 pi W (i-j)) / (pi (i-j))."""
    if not 0 < half_bandwidth < 0.5:
        raise EnvelopeError("half bandwidth W must lie in (0, 0.5)")
    k = np.arange(n)
    diff = k[:, None] - k[None, :]
    return 2.0 * half_bandwidth * np.sinc(2.0 * half_bandwidth * diff)


def dpss_window(n: int, time_bandwidth: float) -> tuple[np.ndarray, float]:
    """Zeroth-order discrete prolate spheroidal sequence and its concentration.

    Returns the dominant eigenvector of the prolate matrix (sign-normalized
    positive, unit peak) together with its eigenvalue lambda_0.
    """
    mat = prolate_matrix(n, time_bandwidth / n)
    vals, vecs = eigh(mat)
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError("prolate eigenproblem did not converge")
    v = vecs[:, -1]
    if v.sum() < 0:
        v = -v
    v = 0.5 * (v + v[::-1])  # exact even symmetry
    return v / v.max(), float(vals[-1])


def slepian_envelope(
    duration_ns: float,
    time_bandwidth: float = DEFAULT_TIME_BANDWIDTH,
    amplitude: float = 1.0,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> PulseEnvelope:
    """Slepian (zeroth-order DPSS) envelope with exactly-zero endpoints.

    The interior samples hold the dominant prolate eigenvector; one zero
    sample on each side pins the pulse to its finite support.
    """
    n = int(round(duration_ns * sample_rate))
    if n < 8:
        raise EnvelopeError("slepian envelope needs at least 8 samples")
    if time_bandwidth <= 0.5:
        raise EnvelopeError("time-bandwidth product must exceed 0.5")
    core, _ = dpss_window(n - 2, time_bandwidth)
    samples = np.zeros(n)
    samples[1:-1] = amplitude * core
    peak = 0.5 * (n - 1) / sample_rate
    return PulseEnvelope(samples, sample_rate, shape="slepian", fwhm=None, peak_time=peak)


def _sample_array(env) -> tuple[np.ndarray, float]:
    if isinstance(env, (PulseEnvelope, Waveform)):
        return env.samples, env.sample_rate
    raise EnvelopeError("expected a PulseEnvelope or Waveform")


def power_spectrum(env, pad_factor: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Squared-magnitude DFT of the zero-padded samples.

    Returns (frequency GHz, power) with the frequency axis sorted ascending;
    the DC bin carries (sum of samples)^2.
    """
    if pad_factor < 1:
        raise EnvelopeError("pad_factor must be >= 1")
    x, rate = _sample_array(env)
    n = x.size * int(pad_factor)
    spec = np.fft.fft(x, n)
    freqs = np.fft.fftfreq(n, d=1.0 / rate)
    power = np.abs(spec) ** 2
    order = np.fft.fftshift(np.arange(n))
    return freqs[order], power[order]


def spectral_power_at(env, f_ghz: float, pad_factor: int = DEFAULT_PAD_FACTOR) -> float:
    """Spectral power at an arbitrary frequency via zero padding plus local
    quadratic interpolation between DFT bins."""
    x, rate = _sample_array(env)
    if abs(f_ghz) >= 0.5 * rate:
        raise EnvelopeError(f"frequency {f_ghz} GHz is beyond Nyquist ({0.5 * rate} GHz)")
    n = x.size * int(pad_factor)
    spec = np.abs(np.fft.fft(x, n)) ** 2
    df = rate / n
    pos = f_ghz / df  # fractional bin, may be negative
    k = int(round(pos))
    frac = pos - k
    if abs(frac) < 1e-12:
        return float(spec[k % n])
    y0, y1, y2 = (spec[(k + off) % n] for off in (-1, 0, 1))
    a = 0.5 * (y0 + y2) - y1
    b = 0.5 * (y2 - y0)
    return float(y1 + b * frac + a * frac * frac)


def leakage_ratio(
    env, anharmonicity_mhz: float, pad_factor: int = DEFAULT_PAD_FACTOR
) -> float:
    """Envelope spectral power at the 1->2 transition offset over the carrier power.

    With the carrier resonant at the qubit transition, the 1->2 transition sits
    one anharmonicity below it, so the spectrum is read at -anharmonicity.
    """
    if anharmonicity_mhz <= 0:
        raise EnvelopeError("anharmonicity must be positive")
    offset_ghz = -anharmonicity_mhz * 1e-3
    p_offset = spectral_power_at(env, offset_ghz, pad_factor)
    p_carrier = spectral_power_at(env, 0.0, pad_factor)
    return p_offset / p_carrier


def gaussian_leakage_ratio_continuous(fwhm_ns: float, offset_mhz: float) -> float:
    """Closed-form untruncated-Gaussian power ratio exp(-sigma^2 delta^2)."""
    sigma = gaussian_sigma(fwhm_ns)
    delta = 2.0 * math.pi * offset_mhz * 1e-3
    return math.exp(-((sigma * delta) ** 2))


def envelope_to_csv(env: PulseEnvelope, path) -> None:
    """Write `t_ns, amplitude` rows."""
    data = np.column_stack([env.times, env.samples])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header="t_ns,amplitude", comments="")


def envelope_from_csv(path, sample_rate: float | None = None) -> PulseEnvelope:
    """Read an envelope written by :func:`envelope_to_csv`; the grid must be uniform."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, amp = data[:, 0], data[:, 1]
    if t.size > 1:
        steps = np.diff(t)
        if np.max(np.abs(steps - steps[0])) > 1e-9:
            raise EnvelopeError("envelope CSV must be uniformly sampled")
        rate = 1.0 / steps[0]
    else:
        if sample_rate is None:
            raise EnvelopeError("single-sample CSV needs an explicit sample rate")
        rate = sample_rate
    return PulseEnvelope(amp, rate, shape="custom", peak_time=float(t[np.argmax(amp)]))


def spectrum_to_csv(env, path, pad_factor: int = DEFAULT_PAD_FACTOR) -> None:
    """Write `f_GHz, power_db` rows, dB relative to the carrier (DC) power."""
    freqs, power = power_spectrum(env, pad_factor)
    p0 = spectral_power_at(env, 0.0, pad_factor)
    floor = np.finfo(float).tiny
    db = 10.0 * np.log10(np.maximum(power, floor) / p0)
    np.savetxt(
        path,
        np.column_stack([freqs, db]),
        fmt="%.17g",
        delimiter=",",
        header="f_GHz,power_db",
        comments="",
    )
