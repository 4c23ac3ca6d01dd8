"""Model of the room-temperature IQ control chain.

DAC quantization, per-port Gaussian lowpass filtering, mixer gain/phase
imbalance and carrier leakage, all at complex baseband (the microwave
carrier stays symbolic: the real/imag parts of a waveform are the I/Q
streams and an imbalance shows up as a conjugate-spectrum image).  Includes
the deconvolution pre-correction and the opposite-sideband calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .pulses import PulseEnvelope, Waveform

DEFAULT_LOWPASS_CUTOFF_MHZ = 250.0  # -3 dB point of the per-port filters
DEFAULT_DAC_BITS = 14
DEFAULT_TIKHONOV = 1e-4
CALIBRATION_PROBE_SAMPLES = 1000


class ChainError(ValueError):
    """Invalid chain model or calibration request."""


class DeconvolutionError(RuntimeError):
    """Chain response too small across the band for stable deconvolution."""


class CalibrationFailure(RuntimeError):
    """Sideband calibration did not converge; carries the best residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def gaussian_lowpass_response(
    cutoff_mhz: float = DEFAULT_LOWPASS_CUTOFF_MHZ, sample_rate: float = 1.0
) -> np.ndarray:
    """Sampled impulse response of a Gaussian filter with the given -3 dB point,
    truncated at 5 sigma and normalized to unit DC gain."""
    if cutoff_mhz <= 0:
        raise ChainError("cutoff must be positive")
    sigma_f = cutoff_mhz * 1e-3 / math.sqrt(math.log(2.0))  # GHz
    sigma_t = 1.0 / (2.0 * math.pi * sigma_f)  # ns
    half = max(1, int(math.ceil(5.0 * sigma_t * sample_rate)))
    t = np.arange(-half, half + 1) / sample_rate
    h = np.exp(-(t**2) / (2.0 * sigma_t**2))
    return h / h.sum()


@dataclass(frozen=True)
class ChainModel:
    """DAC + filter + IQ mixer imperfections, per I/Q port."""

    lowpass_response: np.ndarray = None
    sample_rate: float = 1.0  # GS/s
    iq_gain_imbalance: float = 0.0  # extra gain (1 + eps) on the Q port
    iq_phase_skew: float = 0.0      # rad added to the Q carrier's 90 degrees
    carrier_leakage: complex = 0.0 + 0.0j
    dac_bits: int | None = DEFAULT_DAC_BITS
    full_scale: float = 1.0         # DAC range, same units as the waveforms

    def __post_init__(self):
        if self.lowpass_response is None:
            h = gaussian_lowpass_response(sample_rate=self.sample_rate)
        else:
            h = np.asarray(self.lowpass_response, dtype=float)
        object.__setattr__(self, "lowpass_response", h)
        if abs(h.sum() - 1.0) > 1e-9:
            raise ChainError(f"impulse response DC gain {h.sum():.12f} is not 1")
        if abs(self.iq_gain_imbalance) >= 0.5:
            raise ChainError("gain imbalance out of range (|eps| < 0.5)")
        if abs(self.iq_phase_skew) >= 0.5:
            raise ChainError("phase skew out of range (|phi_e| < 0.5 rad)")
        if self.dac_bits is not None and self.dac_bits < 2:
            raise ChainError("dac_bits must be at least 2 (or None for ideal)")
        if self.full_scale <= 0:
            raise ChainError("full scale must be positive")


def ideal_chain(sample_rate: float = 1.0) -> ChainModel:
    """Distortion-free chain: delta response, no imbalance, no quantization."""
    return ChainModel(
        lowpass_response=np.array([1.0]),
        sample_rate=sample_rate,
        dac_bits=None,
    )


def quantize(x: np.ndarray, bits: int | None, full_scale: float) -> np.ndarray:
    """Uniform mid-tread quantization over [-full_scale, full_scale]."""
    if bits is None:
        return np.asarray(x, dtype=float)
    step = 2.0 * full_scale / (2**bits)
    return np.clip(np.round(x / step) * step, -full_scale, full_scale)


def synthesize_iq(env: PulseEnvelope, f_sb_mhz: float, phase: float = 0.0) -> Waveform:
    """Single-sideband baseband synthesis: env(t) * exp(i(2 pi f_sb t + phase)).

    The real/imag parts are the cosine/sine streams fed to the I and Q ports;
    an ideal mixer then emits carrier + f_sb only.
    """
    if abs(f_sb_mhz) * 1e-3 >= 0.5 * env.sample_rate:
        raise ChainError(
            f"sideband {f_sb_mhz} MHz aliases at {env.sample_rate} GS/s"
        )
    t = env.times
    tone = np.exp(1j * (2.0 * math.pi * f_sb_mhz * 1e-3 * t + phase))
    return Waveform(env.samples * tone, env.sample_rate)


def apply_chain(wave: Waveform, chain: ChainModel) -> Waveform:
    """Emitted complex envelope for a commanded baseband waveform.

    Quantizes the I/Q streams, filters each port, applies the Q gain
    imbalance and phase skew, then adds carrier leakage.
    """
    x = wave.samples
    if x.size == 0:
        raise ChainError("empty waveform")
    i_stream = quantize(x.real, chain.dac_bits, chain.full_scale)
    q_stream = quantize(x.imag, chain.dac_bits, chain.full_scale)
    h = chain.lowpass_response
    n = x.size
    i_f = np.convolve(i_stream, h)[:n]
    q_f = np.convolve(q_stream, h)[:n]
    q_factor = (1.0 + chain.iq_gain_imbalance) * np.exp(1j * chain.iq_phase_skew)
    out = i_f + 1j * q_factor * q_f + chain.carrier_leakage
    return Waveform(out, wave.sample_rate)


def chain_frequency_response(chain: ChainModel, n: int) -> np.ndarray:
    """DFT of the port filter response on an n-point grid."""
    return np.fft.fft(chain.lowpass_response, n)


def precorrect(
    target: Waveform, chain: ChainModel, reg: float = DEFAULT_TIKHONOV
) -> Waveform:
    """Deconvolve the port-filter response out of a target waveform.

    Frequency-domain division with Tikhonov regularization at ``reg`` times
    the peak response, so apply_chain(precorrect(x)) recovers x in-band.
    """
    x = target.samples
    n = x.size
    m = n + chain.lowpass_response.size - 1
    h_f = chain_frequency_response(chain, m)
    peak = np.max(np.abs(h_f))
    lam = reg * peak
    if np.max(np.abs(h_f)) < lam:
        raise DeconvolutionError("chain response below the regularization floor")
    x_f = np.fft.fft(x, m)
    y_f = x_f * h_f.conj() / (np.abs(h_f) ** 2 + lam**2)
    y = np.fft.ifft(y_f)[:n]
    return Waveform(y, target.sample_rate)


@dataclass(frozen=True)
class IQCalibration:
    """Per-sideband Q-channel corrections plus carrier-nulling DC offsets.

    Corrections are linearly interpolated between the calibrated sideband
    frequencies when applied at intermediate frequencies.
    """

    f_sb_mhz: tuple[float, ...]
    q_gain: tuple[float, ...]
    q_phase: tuple[float, ...]
    dc_i: tuple[float, ...]
    dc_q: tuple[float, ...]

    def __post_init__(self):
        for name in ("f_sb_mhz", "q_gain", "q_phase", "dc_i", "dc_q"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not all(np.isfinite(vals)):
                raise ChainError(f"non-finite calibration entry in {name}")
            object.__setattr__(self, name, vals)
        if len({len(self.f_sb_mhz), len(self.q_gain), len(self.q_phase),
                len(self.dc_i), len(self.dc_q)}) != 1:
            raise ChainError("calibration columns must have equal length")

    def correction_at(self, f_sb_mhz: float) -> tuple[float, float, float, float]:
        f = np.asarray(self.f_sb_mhz)
        order = np.argsort(f)
        fx = f[order]
        interp = lambda col: float(np.interp(f_sb_mhz, fx, np.asarray(col)[order]))
        return interp(self.q_gain), interp(self.q_phase), interp(self.dc_i), interp(self.dc_q)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.f_sb_mhz, self.q_gain, self.q_phase, self.dc_i, self.dc_q])
        np.savetxt(
            path,
            data,
            fmt="%.17g",
            delimiter=",",
            header="f_sb_MHz,q_gain,q_phase_rad,dc_i,dc_q",
            comments="",
        )


def neutral_calibration(f_sb_list) -> IQCalibration:
    n = len(f_sb_list)
    return IQCalibration(
        tuple(f_sb_list), (1.0,) * n, (0.0,) * n, (0.0,) * n, (0.0,) * n
    )


def corrected_waveform(
    target: Waveform, calib_point: tuple[float, float, float, float]
) -> Waveform:
    """Apply a (q_gain, q_phase, dc_i, dc_q) correction to a complex target:
    the Q stream is Im(x * e^{i q_phase}) * q_gain, plus the DC offsets."""
    q_gain, q_phase, dc_i, dc_q = calib_point
    x = target.samples
    i_stream = x.real + dc_i
    q_stream = q_gain * np.imag(x * np.exp(1j * q_phase)) + dc_q
    return Waveform(i_stream + 1j * q_stream, target.sample_rate)


def _probe_tone(f_sb_mhz: float, sample_rate: float, n: int, amplitude: float) -> Waveform:
    t = np.arange(n) / sample_rate
    return Waveform(amplitude * np.exp(1j * 2.0 * math.pi * f_sb_mhz * 1e-3 * t), sample_rate)


def _tone_bins(f_sb_mhz: float, sample_rate: float, n: int) -> tuple[int, int]:
    k = int(round(f_sb_mhz * 1e-3 * n / sample_rate))
    return k % n, (-k) % n


def _tone_powers(
    chain: ChainModel,
    calib_point: tuple[float, float, float, float],
    f_sb_mhz: float,
    n: int = CALIBRATION_PROBE_SAMPLES,
    amplitude: float = 0.5,
) -> tuple[float, float, float]:
    """(signal, image, carrier) powers of a corrected tone through the chain.

    The analysis window skips the filter warm-up so the measurement sees the
    steady-state (CW) response, as a spectrum analyzer would.
    """
    warmup = chain.lowpass_response.size
    tone = _probe_tone(f_sb_mhz, chain.sample_rate, n + warmup, amplitude)
    out = apply_chain(corrected_waveform(tone, calib_point), chain)
    window = out.samples[warmup : warmup + n]
    spec = np.abs(np.fft.fft(window)) ** 2 / n**2
    k_sig, k_img = _tone_bins(f_sb_mhz, chain.sample_rate, n)
    return float(spec[k_sig]), float(spec[k_img]), float(spec[0])


def _tone_bin_amplitudes(
    chain: ChainModel,
    calib_point,
    f_sb_mhz: float,
    n: int = CALIBRATION_PROBE_SAMPLES,
    amplitude: float = 0.5,
) -> tuple[complex, complex]:
    """Complex (image, carrier) bin amplitudes of a corrected probe tone."""
    warmup = chain.lowpass_response.size
    tone = _probe_tone(f_sb_mhz, chain.sample_rate, n + warmup, amplitude)
    out = apply_chain(corrected_waveform(tone, calib_point), chain)
    spec = np.fft.fft(out.samples[warmup : warmup + n]) / n
    _, k_img = _tone_bins(f_sb_mhz, chain.sample_rate, n)
    return complex(spec[k_img]), complex(spec[0])


def _seed_corrections(chain: ChainModel, f_sb: float) -> np.ndarray:
    """Measured linear solve for the image null and the carrier null.

    The image bin is linear in the complex Q correction G = q_gain *
    e^{-i q_phase}; the carrier bin is linear in the DC offsets.  Two probe
    measurements per quantity pin the zeros exactly (up to quantization).
    """
    img0, car0 = _tone_bin_amplitudes(chain, (1.0, 0.0, 0.0, 0.0), f_sb)
    img1, _ = _tone_bin_amplitudes(chain, (1.05, 0.0, 0.0, 0.0), f_sb)
    g1 = 1.05  # probe's G value (q_phase = 0)
    slope = (img1 - img0) / (g1 - 1.0)
    g_star = 1.0 - img0 / slope if slope != 0 else 1.0
    q_gain = abs(g_star)
    q_phase = -np.angle(g_star)
    _, car_i = _tone_bin_amplitudes(chain, (q_gain, q_phase, 1e-2, 0.0), f_sb)
    _, car_q = _tone_bin_amplitudes(chain, (q_gain, q_phase, 0.0, 1e-2), f_sb)
    _, car_b = _tone_bin_amplitudes(chain, (q_gain, q_phase, 0.0, 0.0), f_sb)
    beta_i = (car_i - car_b) / 1e-2
    beta_q = (car_q - car_b) / 1e-2
    mat = np.array([[beta_i.real, beta_q.real], [beta_i.imag, beta_q.imag]])
    rhs = -np.array([car_b.real, car_b.imag])
    dc = np.linalg.solve(mat, rhs)
    return np.array([q_gain, q_phase, dc[0], dc[1]])


def calibrate_sidebands(
    chain: ChainModel,
    f_sb_list,
    max_iter: int = 2000,
    power_tol: float = 1e-7,
) -> IQCalibration:
    """Minimize image-sideband plus carrier power at each sideband frequency.

    A measured linear solve seeds the corrections; a Nelder-Mead direct
    search over (q_gain, q_phase, dc_i, dc_q) then polishes against probe
    tones through the full chain (quantization included).  Frequencies
    should be integer multiples of the probe resolution (1 MHz at the
    default 1 GS/s rate) so the tones land on DFT bins.
    """
    f_list = [float(f) for f in f_sb_list]
    if not f_list:
        raise ChainError("need at least one sideband frequency")
    nyq = 0.5 * chain.sample_rate * 1e3
    if any(abs(f) >= nyq or f == 0 for f in f_list):
        raise ChainError("sideband frequencies must be nonzero and below Nyquist")
    q_gain, q_phase, dc_i, dc_q = [], [], [], []
    for f_sb in f_list:
        def cost(x):
            _, img, car = _tone_powers(chain, tuple(x), f_sb)
            return img + car

        x0 = _seed_corrections(chain, f_sb)
        simplex = np.vstack([x0] + [x0 + np.eye(4)[i] * 1e-4 for i in range(4)])
        res = minimize(
            cost,
            x0=x0,
            method="Nelder-Mead",
            options={
                "maxiter": max_iter,
                "maxfev": max_iter,
                "xatol": 1e-12,
                "fatol": 1e-24,
                "initial_simplex": simplex,
            },
        )
        best = res.x if res.fun <= cost(x0) else x0
        signal, _, _ = _tone_powers(chain, tuple(best), f_sb)
        residual = float(min(res.fun, cost(x0))) / signal
        if residual > power_tol:
            raise CalibrationFailure(
                f"calibration at {f_sb} MHz stalled with relative residual {residual:.3e}",
                residual,
            )
        q_gain.append(best[0])
        q_phase.append(best[1])
        dc_i.append(best[2])
        dc_q.append(best[3])
    return IQCalibration(tuple(f_list), tuple(q_gain), tuple(q_phase), tuple(dc_i), tuple(dc_q))


def sideband_suppression_db(
    chain: ChainModel, calib: IQCalibration | None, f_sb_mhz: float
) -> float:
    """Signal power at +f_sb over the worse of the image and carrier, in dB."""
    point = calib.correction_at(f_sb_mhz) if calib is not None else (1.0, 0.0, 0.0, 0.0)
    sig, img, car = _tone_powers(chain, point, f_sb_mhz)
    floor = max(img, car, 1e-30)
    return 10.0 * math.log10(sig / floor)


def suppression_report(
    chain: ChainModel, calib: IQCalibration | None, f_sb_list
) -> np.ndarray:
    """Columns `f_sb_MHz, suppression_db` over a frequency list."""
    rows = [(f, sideband_suppression_db(chain, calib, f)) for f in f_sb_list]
    return np.asarray(rows, dtype=float)


def suppression_report_to_csv(chain, calib, f_sb_list, path) -> None:
    np.savetxt(
        path,
        suppression_report(chain, calib, f_sb_list),
        fmt="%.17g",
        delimiter=",",
        header="f_sb_MHz,suppression_db",
        comments="",
    )
