"""TES-like waveform synthesis and threshold/hysteresis feature extraction.

The pulse model is phenomenological, built to reproduce two facts about
calorimetric detectors: peak height saturates with absorbed energy while
integrated area keeps resolving, because the cooling tail lengthens with
deposited heat. A pulse of n photons is

    V(t) = A(n) (exp(-t/tau_fall(n)) - exp(-t/tau_rise)),
    A(n) = v_max (1 - exp(-n/n_sat)),
    tau_fall(n) = tau_fall0 (1 + tail_slope * n),

digitized at ``sample_rate`` with additive white Gaussian noise, rounded
half-to-even and clamped to the 12-bit ADC range. All parameters are
configurable; none are fits to any particular hardware.

Feature extraction mirrors a flash-ADC firmware rule: the integration
window opens at the first sample at or above ``thr_high`` and closes at the
first later sample below ``thr_low`` (hysteresis). With the default
``thr_low = 0`` the window runs to the end of the record, which keeps the
area statistics Gaussian; any positive ``thr_low`` gives duration-bounded
windows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtr

from .calibrate import Calibration, GaussComponent, build_calibration
from .source import STREAM_NOISE, philox_key

__all__ = [
    "WaveformParams",
    "Waveform",
    "PulseFeatures",
    "FeatureBatch",
    "MAX_PHOTONS_PER_CHANNEL",
    "DEFAULT_THR_HIGH",
    "DEFAULT_THR_LOW",
    "noiseless_shape",
    "synth_pulse",
    "synth_matrix",
    "block_generator",
    "extract_features",
    "extract_batch",
    "expected_area",
    "expected_area_sigma",
    "truth_calibration",
]

MAX_PHOTONS_PER_CHANNEL = 37

# default EFADC-style thresholds (ADC counts); see module docstring
DEFAULT_THR_HIGH = 40.0
DEFAULT_THR_LOW = 0.0


@dataclass(frozen=True)
class WaveformParams:
    """Digitizer and pulse-shape parameters (times in seconds, amplitudes in ADC counts)."""

    sample_rate: float = 250e6
    adc_bits: int = 12
    record_len: int = 8000
    v_max: float = 3500.0
    n_sat: float = 15.0
    tau_rise: float = 0.5e-6
    tau_fall0: float = 2.0e-6
    tail_slope: float = 0.03
    noise_sigma: float = 6.0
    noise_offset: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0 or self.record_len <= 0:
            raise ValueError("sample_rate and record_len must be positive")
        if self.adc_bits != 12:
            raise ValueError("the digitizer model is 12-bit")
        if not self.tau_rise < self.tau_fall0:
            raise ValueError("need tau_rise < tau_fall0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def adc_max(self) -> int:
        return 2**self.adc_bits - 1

    def amplitude(self, n: int) -> float:
        return self.v_max * (1.0 - np.exp(-n / self.n_sat))

    def fall_time(self, n: int) -> float:
        return self.tau_fall0 * (1.0 + self.tail_slope * n)


@dataclass(frozen=True)
class Waveform:
    """One digitized trigger window."""

    samples: np.ndarray
    trigger_time: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples)
        object.__setattr__(self, "samples", s)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")


@dataclass(frozen=True)
class PulseFeatures:
    """Recorded pulse parameters for one waveform."""

    area: float
    height: int
    duration: int
    t_start: int
    t_peak: int

    def __post_init__(self):
        if min(self.area, self.height, self.duration, self.t_start, self.t_peak) < 0:
            raise ValueError("pulse features must be non-negative")
        if self.area < self.height:
            raise ValueError("area must be at least the peak height")
        if not (self.t_start <= self.t_peak <= self.t_start + self.duration):
            raise ValueError("peak must lie inside the integration window")


@dataclass(frozen=True)
class FeatureBatch:
    """Vectorized extraction results; rows where found is False carry zeros."""

    found: np.ndarray
    area: np.ndarray
    height: np.ndarray
    duration: np.ndarray
    t_start: np.ndarray
    t_peak: np.ndarray


def _check_n(n: int) -> None:
    if not 0 <= n <= MAX_PHOTONS_PER_CHANNEL:
        raise ValueError(f"photon number must lie in 0..{MAX_PHOTONS_PER_CHANNEL}, got {n}")


@lru_cache(maxsize=128)
def _shape_cached(n: int, params: WaveformParams) -> np.ndarray:
    t = np.arange(params.record_len) / params.sample_rate
    if n == 0:
        v = np.zeros(params.record_len)
    else:
        v = params.amplitude(n) * (np.exp(-t / params.fall_time(n)) - np.exp(-t / params.tau_rise))
    v.flags.writeable = False
    return v


def noiseless_shape(n: int, params: WaveformParams) -> np.ndarray:
    """Ideal (unquantized, noise-free) pulse shape in ADC counts."""
    _check_n(n)
    return _shape_cached(n, params)


def block_generator(seed: int, block: int, channel: int = 0) -> Generator:
    """Noise generator for one (chunk, channel) of a run; counter-isolated."""
    key = philox_key(seed, STREAM_NOISE)
    return Generator(Philox(key=key, counter=[0, 0, int(block), int(channel)]))


def synth_matrix(ns: np.ndarray, params: WaveformParams, rng: Generator) -> np.ndarray:
    """Synthesize one waveform per entry of ``ns`` as an integral float32 matrix.

    Rows are quantized (round half to even) and clamped to the ADC range but
    kept in float32 to spare downstream conversions. With noise_sigma == 0
    the generator is not consumed.
    """
    ns = np.asarray(ns)
    for n in np.unique(ns):
        _check_n(int(n))
    if params.noise_sigma > 0:
        w = rng.standard_normal((len(ns), params.record_len), dtype=np.float32)
        w *= np.float32(params.noise_sigma)
    else:
        w = np.zeros((len(ns), params.record_len), dtype=np.float32)
    if params.noise_offset:
        w += np.float32(params.noise_offset)
    for n in np.unique(ns):
        w[ns == n] += noiseless_shape(int(n), params).astype(np.float32)
    np.rint(w, out=w)
    np.clip(w, 0, params.adc_max, out=w)
    return w


def synth_pulse(n: int, params: WaveformParams, seed: int) -> Waveform:
    """One synthetic waveform for an n-photon pulse, deterministic in ``seed``."""
    _check_n(n)
    rng = Generator(Philox(key=SeedSequence(int(seed)).generate_state(2, np.uint64)))
    w = synth_matrix(np.array([n]), params, rng)[0]
    return Waveform(samples=w.astype(np.uint16))


def extract_batch(wave_matrix: np.ndarray, thr_high: float, thr_low: float) -> FeatureBatch:
    """Window-rule extraction over a matrix of waveforms (one per row).

    Opens at the first sample >= thr_high, closes at the first later sample
    < thr_low (never, if thr_low <= 0, since ADC samples are non-negative);
    area is the sum of raw samples in [open, close).
    """
    if thr_low > thr_high:
        raise ValueError("need thr_low <= thr_high")
    w = np.asarray(wave_matrix)
    if w.ndim != 2:
        raise ValueError("wave_matrix must be 2-D")
    n_rows, n_cols = w.shape
    rows = np.arange(n_rows)
    above = w >= thr_high
    t1 = above.argmax(axis=1)
    found = above[rows, t1]
    if thr_low <= 0:
        # ADC samples are non-negative, so the window never closes: area is
        # the row total minus the pre-window head, and the global maximum is
        # inside the window (everything before t1 sits below thr_high)
        t2 = np.full(n_rows, n_cols)
        area = w.sum(axis=1, dtype=np.float64)
        head = min(64, n_cols)
        csum = np.zeros((n_rows, head + 1))
        np.cumsum(w[:, :head], axis=1, dtype=np.float64, out=csum[:, 1:])
        near = t1 <= head
        area[near] -= csum[rows[near], t1[near]]
        for r in rows[~near]:
            area[r] -= float(w[r, : t1[r]].sum(dtype=np.float64))
        t_peak = w.argmax(axis=1)
        height = w[rows, t_peak]
    else:
        idx = np.arange(n_cols)[None, :]
        below = (w < thr_low) & (idx > t1[:, None])
        has_close = below.any(axis=1)
        t2 = np.where(has_close, below.argmax(axis=1), n_cols)
        in_win = (idx >= t1[:, None]) & (idx < t2[:, None])
        area = np.where(in_win, w, 0).sum(axis=1, dtype=np.float64)
        # sentinel 0 is safe: a found window contains a sample >= thr_high > 0,
        # so argmax lands on the first in-window maximum
        masked = np.where(in_win, w, 0)
        t_peak = masked.argmax(axis=1)
        height = w[rows, t_peak]
    out = FeatureBatch(
        found=found,
        area=np.where(found, area, 0.0),
        height=np.where(found, height, 0).astype(np.int64),
        duration=np.where(found, t2 - t1, 0).astype(np.int64),
        t_start=np.where(found, t1, 0).astype(np.int64),
        t_peak=np.where(found, t_peak, 0).astype(np.int64),
    )
    return out


def extract_features(waveform, thr_high: float, thr_low: float) -> PulseFeatures | None:
    """Single-waveform window-rule extraction; None when nothing crosses thr_high."""
    samples = waveform.samples if isinstance(waveform, Waveform) else np.asarray(waveform)
    batch = extract_batch(samples[None, :], thr_high, thr_low)
    if not batch.found[0]:
        return None
    return PulseFeatures(
        area=float(batch.area[0]),
        height=int(batch.height[0]),
        duration=int(batch.duration[0]),
        t_start=int(batch.t_start[0]),
        t_peak=int(batch.t_peak[0]),
    )


def _sample_moments(v: np.ndarray, sigma: float, adc_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact first/second moments of clip(rint(v + noise), 0, adc_max) per sample.

    Uses E[X] = sum_k P(X >= k) and E[X^2] = sum_k (2k-1) P(X >= k) with
    P(X >= k) = ndtr((v - k + 0.5)/sigma); samples far above the clamp/
    quantization region take the continuous values v and sigma^2 + 1/12.
    """
    m1 = v.copy()
    m2 = v * v + sigma * sigma + 1.0 / 12.0
    edge = v < 5.0 * sigma + 2.0
    if edge.any():
        ve = v[edge]
        k_top = int(np.ceil(ve.max() + 8.0 * sigma)) + 1
        k = np.arange(1, max(k_top, 2))
        tail = ndtr((ve[:, None] - (k[None, :] - 0.5)) / sigma)
        m1[edge] = tail.sum(axis=1)
        m2[edge] = ((2.0 * k - 1.0)[None, :] * tail).sum(axis=1)
    return m1, m2


def _window_model(n: int, params: WaveformParams, thr_high: float, thr_low: float):
    """Mean and variance of the extracted area under the iid-noise model."""
    v = noiseless_shape(n, params) + params.noise_offset
    sigma = params.noise_sigma
    if sigma == 0:
        x = np.clip(np.rint(v), 0, params.adc_max)
        batch = extract_batch(x[None, :], thr_high, thr_low)
        return (float(batch.area[0]), 0.0) if batch.found[0] else (0.0, 0.0)
    if thr_low > 0:
        raise NotImplementedError("analytic window model covers thr_low <= 0")
    m1, m2 = _sample_moments(v, sigma, params.adc_max)
    var = m2 - m1 * m1
    tau_h = thr_high - 0.5  # integer samples reach thr_high iff v + eps >= thr_high - 1/2
    p_open = ndtr((v - tau_h) / sigma)
    p_open = np.clip(p_open, 0.0, 1.0 - 1e-16)
    log_surv = np.concatenate([[0.0], np.cumsum(np.log1p(-p_open))[:-1]])
    p_at = np.exp(log_surv) * p_open  # P(window opens at o)
    found = p_at.sum()
    if found < 1e-12:
        return 0.0, 0.0
    # opening-sample moments conditioned on crossing
    k_top = int(np.ceil(v.max() + 8.0 * sigma)) + 1
    k = np.arange(1, max(k_top, 2))
    sel = p_at > 1e-15 * p_at.max()
    vo = v[sel]
    arg = (vo[:, None] - np.maximum(k[None, :] - 0.5, tau_h)) / sigma
    tail = ndtr(arg)
    g1 = tail.sum(axis=1) / p_open[sel]
    g2 = ((2.0 * k - 1.0)[None, :] * tail).sum(axis=1) / p_open[sel]
    # area given opening at o: truncated sample o plus all later samples
    tail_m1 = np.concatenate([np.cumsum(m1[::-1])[::-1][1:], [0.0]])
    tail_var = np.concatenate([np.cumsum(var[::-1])[::-1][1:], [0.0]])
    mean_o = g1 + tail_m1[sel]
    var_o = (g2 - g1 * g1) + tail_var[sel]
    p_sel = p_at[sel] / found
    mean = float(p_sel @ mean_o)
    second = float(p_sel @ (var_o + mean_o * mean_o))
    return mean, max(second - mean * mean, 0.0)


@lru_cache(maxsize=512)
def _window_model_cached(n, params, thr_high, thr_low):
    return _window_model(n, params, thr_high, thr_low)


def expected_area(
    n: int,
    params: WaveformParams,
    thr_high: float = DEFAULT_THR_HIGH,
    thr_low: float = DEFAULT_THR_LOW,
) -> float:
    """Analytic mean extracted area for an n-photon pulse.

    This is the ideal pulse integral A(n) (tau_fall(n) - tau_rise) * fs
    corrected for everything extract_features actually does: the
    sub-threshold clip ahead of the window opening, noise-induced opening
    jitter, and the clamped-noise baseline inside the window. Exact for the
    default thr_low <= 0 window rule; n = 0 pulses do not trigger and report 0.
    """
    _check_n(n)
    if n == 0:
        return 0.0
    return _window_model_cached(n, params, float(thr_high), float(thr_low))[0]


def expected_area_sigma(
    n: int,
    params: WaveformParams,
    thr_high: float = DEFAULT_THR_HIGH,
    thr_low: float = DEFAULT_THR_LOW,
) -> float:
    """Analytic standard deviation of the extracted area (same model as expected_area)."""
    _check_n(n)
    if n == 0:
        return 0.0
    return float(np.sqrt(_window_model_cached(n, params, float(thr_high), float(thr_low))[1]))


def truth_calibration(
    params: WaveformParams,
    thr_high: float = DEFAULT_THR_HIGH,
    thr_low: float = DEFAULT_THR_LOW,
    n_top: int = MAX_PHOTONS_PER_CHANNEL,
    window_frac: float | None = None,
) -> Calibration:
    """Model-derived calibration: components at the analytic area moments.

    The perfect-knowledge counterpart of a histogram fit, for pipelines that
    want assignment fidelity limited only by noise. Covers n = 1..n_top;
    zero-photon records never trigger and are counted as vacuum upstream.
    """
    comps = [
        GaussComponent(
            n=n,
            mu=expected_area(n, params, thr_high, thr_low),
            sigma=expected_area_sigma(n, params, thr_high, thr_low),
            weight=1.0 / n_top,
        )
        for n in range(1, n_top + 1)
    ]
    return build_calibration(comps, window_frac=window_frac, meta={"origin": "waveform-model"})
