"""Locating sweeps in recordings, deconvolving them to impulse responses,
averaging, and fractional-octave smoothing of magnitude responses.

Onset detection decomposes the recording into 1 kHz bands, takes each
band's analytic-signal envelope, timestamps the rising edges at 50% of the
band's peak level, and fits a least-squares line to (band center, rise
time); the line's value at 0 Hz is the sweep start and its value at the
sweep's end frequency is the sweep end. Rise times are calibrated per band
against the same detector run on the clean sweep, which removes the
filter-bank group delay from the regression.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.typing as npt
import scipy.fft as sfft
from scipy import signal as sps

from .signalio import SampleBuffer
from .sweptsine import MeasurementPlan, SweepSpec, gen_inverse_filter, gen_sweep

DB_FLOOR_POWER = 1e-120

# Spectral window per band for the decimated envelope path. |result| of a
# length-M inverse FFT over M contiguous bins samples the full-rate analytic
# envelope exactly (times scaled by nfft/M), as long as the band's support
# fits in the window.
_DECIMATED_WINDOW_HZ = 4000.0


@dataclass(frozen=True)
class OnsetEstimate:
    """Regression summary for one detected sweep instance.

    band_points holds (band_center_hz, rise_time_samples) for every band
    that passed the representation criterion; rise times are calibrated so
    a clean sweep lies on the line start + f * (length / f_end).
    """

    band_points: tuple[tuple[float, float], ...]
    slope: float
    intercept_samples: float
    start_sample: float
    end_sample: float
    r_squared: float

    def __post_init__(self) -> None:
        if not self.start_sample < self.end_sample:
            raise ValueError(
                f"start_sample {self.start_sample} must precede end_sample {self.end_sample}"
            )


@dataclass(frozen=True)
class ImpulseResponse:
    samples: SampleBuffer
    n_averaged: int
    source_plan: MeasurementPlan

    def __post_init__(self) -> None:
        if self.n_averaged < 1:
            raise ValueError("n_averaged must be >= 1")
        if len(self.samples) != self.source_plan.sweep.length_samples:
            raise ValueError("impulse response length must equal the plan's sweep length")


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Magnitude spectrum in dB on an ascending frequency grid.

    smoothing is None for a raw spectrum or the octave fraction used.
    """

    freqs_hz: npt.NDArray[np.float64]
    magnitude_db: npt.NDArray[np.float64]
    smoothing: float | None = None

    def __post_init__(self) -> None:
        freqs = np.asarray(self.freqs_hz, dtype=np.float64)
        mags = np.asarray(self.magnitude_db, dtype=np.float64)
        if freqs.shape != mags.shape or freqs.ndim != 1:
            raise ValueError("freqs_hz and magnitude_db must be 1-D and equal length")
        if len(freqs) and np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs_hz must be strictly ascending")
        if len(freqs) and freqs[0] < 0:
            raise ValueError("freqs_hz must be nonnegative")
        if not np.all(np.isfinite(mags)):
            raise ValueError("magnitude_db must be finite")
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "magnitude_db", mags)

    def to_dict(self) -> dict:
        return {
            "freqs_hz": self.freqs_hz.tolist(),
            "magnitude_db": self.magnitude_db.tolist(),
            "smoothing": self.smoothing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyResponse":
        return cls(
            freqs_hz=np.asarray(d["freqs_hz"], dtype=np.float64),
            magnitude_db=np.asarray(d["magnitude_db"], dtype=np.float64),
            smoothing=None if d.get("smoothing") is None else float(d["smoothing"]),
        )


def _num_bands(f_max_hz: float, band_width_hz: float) -> int:
    return int(np.floor(f_max_hz / band_width_hz + 1e-9))


def _band_weight(lo: float, hi: float, freqs: npt.NDArray[np.float64],
                 fs: float) -> npt.NDArray[np.float64]:
    # 4th-order Butterworth bandpass applied zero-phase, i.e. |H|^2
    nyq = fs / 2
    sos = sps.butter(2, [max(lo, 1.0) / nyq, min(hi, nyq * 0.999) / nyq],
                     btype="bandpass", output="sos")
    _, h = sps.sosfreqz(sos, worN=2 * np.pi * freqs / fs)
    return np.abs(h) ** 2


def band_envelopes(
    rec: SampleBuffer,
    band_width_hz: float = 1000.0,
    f_max_hz: float = 22000.0,
) -> list[tuple[float, SampleBuffer]]:
    """Band-pass the recording at `band_width_hz` intervals and return each
    band's magnitude envelope (analytic-signal method), full length."""
    if band_width_hz <= 0:
        raise ValueError("band_width_hz must be positive")
    n = len(rec)
    fs = rec.sample_rate_hz
    min_len = int(np.ceil(4 * fs / band_width_hz))
    if n < min_len:
        raise ValueError(
            f"recording of {n} samples shorter than filter warm-up ({min_len} samples)"
        )
    nfft = sfft.next_fast_len(n)
    spectrum = sfft.fft(rec.samples, nfft)
    freqs = np.fft.fftfreq(nfft, 1.0 / fs)
    pos = freqs > 0
    out = []
    for k in range(_num_bands(f_max_hz, band_width_hz)):
        lo, hi = k * band_width_hz, (k + 1) * band_width_hz
        weight = np.zeros(nfft)
        weight[pos] = 2.0 * _band_weight(lo, hi, freqs[pos], fs)
        analytic = sfft.ifft(spectrum * weight)[:n]
        out.append(((lo + hi) / 2, SampleBuffer(np.abs(analytic), fs)))
    return out


def _decimated_envelopes(
    x: npt.NDArray[np.float64], fs: float, band_width_hz: float, f_max_hz: float
) -> list[tuple[float, npt.NDArray[np.float64], float]]:
    """Subsampled band envelopes: (center_hz, envelope, dt) with dt the
    spacing of envelope samples in input samples."""
    nfft = sfft.next_fast_len(len(x))
    spectrum = sfft.rfft(x, nfft)
    nbins = nfft // 2 + 1
    m = min(sfft.next_fast_len(int(np.ceil(_DECIMATED_WINDOW_HZ * nfft / fs))), nbins)
    out = []
    for k in range(_num_bands(f_max_hz, band_width_hz)):
        lo, hi = k * band_width_hz, (k + 1) * band_width_hz
        kc = int(round((lo + hi) / 2 * nfft / fs))
        k0 = min(max(kc - m // 2, 0), nbins - m)
        fwin = np.arange(k0, k0 + m) * fs / nfft
        weight = _band_weight(lo, hi, fwin, fs)
        env = np.abs(sfft.ifft(spectrum[k0:k0 + m] * weight))
        out.append(((lo + hi) / 2, env, nfft / m))
    return out


def _threshold_crossings(env_f: npt.NDArray[np.float64], thr: float,
                         refractory: float) -> list[int]:
    """Indices of rising 50%-crossings, keeping the first of any cluster
    closer together than the refractory interval."""
    above = env_f >= thr
    ups = list(np.flatnonzero(~above[:-1] & above[1:]) + 1)
    if len(above) and above[0]:
        ups.insert(0, 0)
    kept: list[int] = []
    for i in ups:
        if kept and i - kept[-1] < refractory:
            continue
        kept.append(i)
    return kept


def _fitted_crossing(env_raw: npt.NDArray[np.float64], env_f: npt.NDArray[np.float64],
                     thr: float, peak: float, idx: int, refractory: float) -> float:
    """Sub-sample crossing time: a least-squares line over the 30-70% rise
    segment around idx, solved for the threshold level. Falls back to linear
    interpolation between the two samples bracketing the crossing."""
    lo_lim = max(idx - int(refractory // 2), 0)
    j0 = idx
    while j0 > lo_lim and env_f[j0 - 1] >= 0.30 * peak:
        j0 -= 1
    j1 = idx
    while j1 < len(env_f) - 1 and env_f[j1 + 1] <= 0.70 * peak:
        j1 += 1
    seg = np.arange(j0, j1 + 1)
    if len(seg) >= 4:
        coeffs, *_ = np.linalg.lstsq(
            np.vstack([seg, np.ones_like(seg)]).T, env_raw[seg], rcond=None
        )
        slope, offset = coeffs
        if slope > 0:
            t = (thr - offset) / slope
            if j0 - 2 <= t <= j1 + 2:
                return float(t)
    if idx == 0:
        return 0.0
    e0, e1 = env_f[idx - 1], env_f[idx]
    frac = (thr - e0) / (e1 - e0) if e1 > e0 else 0.0
    return float(idx - 1 + frac)


@dataclass(frozen=True)
class _BandTemplate:
    center_hz: float
    rise_samples: float      # fitted 50% crossing relative to sweep start
    dwell_lo: float          # central-dwell window relative to the crossing
    dwell_hi: float
    dwell_mean_ratio: float  # mean envelope over that window, in units of peak


@lru_cache(maxsize=8)
def _band_templates(spec: SweepSpec, gap_samples: int, band_width_hz: float,
                    f_max_hz: float) -> dict[float, _BandTemplate]:
    """Detector response to the clean sweep, per band: crossing time and the
    geometry of the near-peak dwell region used for level estimation."""
    length = spec.length_samples
    fs = spec.sample_rate_hz
    pad = length // 4
    ref = np.concatenate([np.zeros(pad), gen_sweep(spec).samples, np.zeros(pad)])
    refractory_samples = (length + gap_samples) / 2
    templates: dict[float, _BandTemplate] = {}
    for fc, env, dt in _decimated_envelopes(ref, fs, band_width_hz, f_max_hz):
        env_f = sps.medfilt(env, kernel_size=5)
        peak = env_f.max()
        if peak <= 0:
            continue
        kept = _threshold_crossings(env_f, 0.5 * peak, refractory_samples / dt)
        if len(kept) != 1:
            continue
        t50 = _fitted_crossing(env, env_f, 0.5 * peak, peak, kept[0],
                               refractory_samples / dt)
        near_peak = np.flatnonzero(env_f >= 0.9 * peak)
        r0, r1 = near_peak[0], near_peak[-1] + 1
        templates[fc] = _BandTemplate(
            center_hz=fc,
            rise_samples=t50 * dt - pad,
            dwell_lo=(r0 - t50) * dt,
            dwell_hi=(r1 - t50) * dt,
            dwell_mean_ratio=float(env[r0:r1].mean() / peak),
        )
    return templates


def detect_onsets(
    rec: SampleBuffer,
    plan: MeasurementPlan,
    *,
    min_band_snr_db: float = 12.0,
    band_width_hz: float = 1000.0,
    f_max_hz: float = 22000.0,
) -> list[OnsetEstimate]:
    """Locate every sweep instance in the recording.

    A band is used iff its peak envelope exceeds its median envelope by at
    least `min_band_snr_db` and it shows the expected number of rising
    edges (a positive multiple of repetitions_per_block, consistent across
    bands). The per-instance start is the least-squares line over
    (band center, calibrated rise time) evaluated at 0 Hz; the end is the
    line at the sweep's end frequency.
    """
    spec = plan.sweep
    if rec.sample_rate_hz != spec.sample_rate_hz:
        raise ValueError(
            f"recording rate {rec.sample_rate_hz} does not match plan rate {spec.sample_rate_hz}"
        )
    templates = _band_templates(spec, plan.gap_samples, band_width_hz, f_max_hz)
    refractory_samples = (spec.length_samples + plan.gap_samples) / 2
    slope_nominal = spec.length_samples / spec.f_end_hz

    per_band: list[tuple[float, list[float]]] = []
    for fc, env, dt in _decimated_envelopes(
        rec.samples, rec.sample_rate_hz, band_width_hz, f_max_hz
    ):
        template = templates.get(fc)
        if template is None:
            continue
        refractory = refractory_samples / dt
        env_f = sps.medfilt(env, kernel_size=5)
        rough_peak = env_f.max()
        median = np.median(env_f)
        if rough_peak <= 0 or median <= 0:
            continue
        if 20 * np.log10(rough_peak / median) < min_band_snr_db:
            continue
        rough = _threshold_crossings(env_f, 0.5 * rough_peak, refractory)
        if not rough:
            continue
        # Level re-estimate: mean envelope over the template's central dwell
        # window at each rough crossing. A windowed mean is far less biased
        # by noise than the raw maximum, which otherwise inflates the 50%
        # threshold and drags every crossing late.
        w_lo, w_hi = int(round(template.dwell_lo / dt)), int(round(template.dwell_hi / dt))
        dwell_means = []
        for i in rough:
            s0, s1 = i + w_lo, i + w_hi
            if 0 <= s0 < s1 <= len(env):
                dwell_means.append(env[s0:s1].mean())
        if not dwell_means:
            continue
        peak_est = float(np.median(dwell_means) / template.dwell_mean_ratio)
        thr = 0.5 * peak_est
        kept = _threshold_crossings(env_f, thr, refractory)
        times = [
            _fitted_crossing(env, env_f, thr, peak_est, i, refractory) * dt
            for i in kept
        ]
        per_band.append((fc, times))

    if not per_band:
        raise ValueError("signal absent: no band passed the representation criterion")

    counts = np.array([len(t) for _, t in per_band])
    values, tally = np.unique(counts, return_counts=True)
    n_instances = int(values[np.argmax(tally)])
    if n_instances < 1 or n_instances % plan.repetitions_per_block != 0:
        raise ValueError(
            "signal absent: edge count per band is not a multiple of "
            f"repetitions_per_block ({n_instances} edges found)"
        )
    usable = [(fc, times) for fc, times in per_band if len(times) == n_instances]
    if len(usable) < 2:
        raise ValueError(
            f"regression underdetermined: only {len(usable)} usable band(s)"
        )

    estimates = []
    f = np.array([fc for fc, _ in usable])
    design = np.vstack([f, np.ones_like(f)]).T
    for i in range(n_instances):
        t = np.array(
            [times[i] - templates[fc].rise_samples + fc * slope_nominal
             for fc, times in usable]
        )
        (slope, intercept), *_ = np.linalg.lstsq(design, t, rcond=None)
        residual = t - (slope * f + intercept)
        total = t - t.mean()
        ss_tot = float(np.dot(total, total))
        r_squared = 1.0 - float(np.dot(residual, residual)) / ss_tot if ss_tot > 0 else 1.0
        estimates.append(OnsetEstimate(
            band_points=tuple((float(fc), float(tt)) for fc, tt in zip(f, t)),
            slope=float(slope),
            intercept_samples=float(intercept),
            start_sample=float(intercept),
            end_sample=float(slope * spec.f_end_hz + intercept),
            r_squared=min(max(r_squared, 0.0), 1.0),
        ))
    return sorted(estimates, key=lambda e: e.start_sample)


def nominal_onsets(
    plan: MeasurementPlan, *, first_start: float = 0.0, count: int | None = None
) -> list[OnsetEstimate]:
    """Onsets at their nominal positions for a recording aligned to the
    plan: instance k starts at first_start + k * (sweep length + gap)."""
    if count is None:
        count = plan.total_measurements
    spec = plan.sweep
    slope = spec.length_samples / spec.f_end_hz
    out = []
    for k in range(count):
        start = first_start + k * plan.period_samples
        out.append(OnsetEstimate(
            band_points=(),
            slope=slope,
            intercept_samples=start,
            start_sample=start,
            end_sample=start + spec.length_samples,
            r_squared=1.0,
        ))
    return out


def extract_ir(
    rec: SampleBuffer,
    plan: MeasurementPlan,
    onsets: list[OnsetEstimate],
    *,
    average: str = "coherent",
) -> ImpulseResponse:
    """Deconvolve each located sweep instance and average the results.

    Each instance's window [start, start + 2L) is convolved with the plan's
    inverse filter; the L samples following the sweep's own autocorrelation
    peak are that instance's impulse response. Instances are aligned to the
    first by cross-correlation and averaged coherently ("coherent"), or
    their magnitude spectra are averaged ("magnitude").
    """
    if not onsets:
        raise ValueError("no onsets given")
    if average not in ("coherent", "magnitude"):
        raise ValueError(f"average must be coherent or magnitude, got {average!r}")
    spec = plan.sweep
    length = spec.length_samples
    inverse = gen_inverse_filter(spec).samples
    x = rec.samples
    irs = []
    for est in sorted(onsets, key=lambda e: e.start_sample):
        start = int(round(est.start_sample))
        if -8 <= start < 0:
            start = 0  # sub-sample jitter on a recording that begins mid-rise
        if start < 0 or start + length > len(x):
            raise ValueError(
                f"window out of bounds: [{start}, {start + length}) "
                f"in a {len(x)}-sample recording"
            )
        window = x[start:start + 2 * length]
        if len(window) < 2 * length:
            window = np.pad(window, (0, 2 * length - len(window)))
        conv = sps.fftconvolve(window, inverse)
        irs.append(conv[length - 1:2 * length - 1])

    if average == "magnitude":
        mags = np.mean([np.abs(sfft.rfft(ir)) for ir in irs], axis=0)
        averaged = sfft.irfft(mags, n=length)
    else:
        first = irs[0]
        aligned = [first]
        for ir in irs[1:]:
            xcorr = sps.fftconvolve(ir, first[::-1])
            shift = int(np.argmax(xcorr)) - (length - 1)
            aligned.append(np.roll(ir, -shift))
        averaged = np.mean(aligned, axis=0)

    return ImpulseResponse(
        samples=SampleBuffer(averaged, spec.sample_rate_hz),
        n_averaged=len(irs),
        source_plan=plan,
    )


def magnitude_response(ir: ImpulseResponse) -> FrequencyResponse:
    """Fourier magnitude of the impulse response, in dB, DC to Nyquist."""
    x = ir.samples.samples
    if len(x) == 0:
        raise ValueError("empty impulse response")
    spectrum = np.abs(sfft.rfft(x))
    freqs = np.fft.rfftfreq(len(x), 1.0 / ir.samples.sample_rate_hz)
    mags = 10 * np.log10(np.maximum(spectrum ** 2, DB_FLOOR_POWER))
    return FrequencyResponse(freqs_hz=freqs, magnitude_db=mags, smoothing=None)


def smooth_fractional_octave(
    fr: FrequencyResponse, fraction: float = 1 / 3
) -> FrequencyResponse:
    """Power-domain mean over a sliding window of `fraction` octaves.

    Each output bin averages the input power over
    [f * 2^(-fraction/2), f * 2^(+fraction/2)]; the DC bin's window contains
    only itself, so it passes through. Refuses already-smoothed input.
    """
    if fr.smoothing is not None:
        raise ValueError("input is already smoothed; smoothing twice is not meaningful")
    if fraction <= 0:
        raise ValueError("fraction must be positive")
    freqs = fr.freqs_hz
    power = 10 ** (fr.magnitude_db / 10.0)
    lo = np.searchsorted(freqs, freqs * 2 ** (-fraction / 2), side="left")
    hi = np.searchsorted(freqs, freqs * 2 ** (fraction / 2), side="right")
    cum = np.concatenate([[0.0], np.cumsum(power)])
    width = np.maximum(hi - lo, 1)
    smoothed = (cum[hi] - cum[lo]) / width
    mags = 10 * np.log10(np.maximum(smoothed, DB_FLOOR_POWER))
    return FrequencyResponse(freqs_hz=freqs.copy(), magnitude_db=mags, smoothing=fraction)


def compare_responses(
    inside: FrequencyResponse,
    outside: FrequencyResponse,
    band: tuple[float, float],
) -> float:
    """Mean magnitude advantage of `inside` over `outside` across the band."""
    if not np.array_equal(inside.freqs_hz, outside.freqs_hz):
        raise ValueError("frequency grids do not match")
    f_lo, f_hi = band
    if f_lo >= f_hi:
        raise ValueError(f"empty band ({f_lo}, {f_hi})")
    freqs = inside.freqs_hz
    if f_lo < freqs[0] or f_hi > freqs[-1]:
        raise ValueError(f"band ({f_lo}, {f_hi}) outside grid [{freqs[0]}, {freqs[-1]}]")
    mask = (freqs >= f_lo) & (freqs <= f_hi)
    if not np.any(mask):
        raise ValueError(f"no grid points inside band ({f_lo}, {f_hi})")
    return float(np.mean(inside.magnitude_db[mask] - outside.magnitude_db[mask]))
