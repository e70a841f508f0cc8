"""SNR from paired signal/noise recordings and tables across conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .signalio import SampleBuffer


def snr_db_from_rms(s_rms: float, n_rms: float) -> float:
    """20*log10(s_rms/n_rms), computed sign-canonically.

    The quotient is always taken with the larger value on top and the sign
    applied afterwards, so snr(S,N) == -snr(N,S) bit-for-bit, and scaling
    both inputs by a common exactly-representable factor leaves the result
    bit-identical.
    """
    if s_rms <= 0 or n_rms <= 0:
        raise ValueError("RMS values must be positive")
    if s_rms >= n_rms:
        return 20.0 * math.log10(s_rms / n_rms)
    return -20.0 * math.log10(n_rms / s_rms)


@dataclass(frozen=True)
class SnrReport:
    """One condition's signal/noise RMS pair and the resulting SNR.

    snr_db is redundant with the RMS fields; it must equal
    snr_db_from_rms(s_rms, n_rms) so a report is recomputable from its own
    numbers.
    """

    condition_label: str
    s_rms: float
    n_rms: float
    snr_db: float
    device_label: str = ""

    def __post_init__(self) -> None:
        if not (self.s_rms > 0 and self.n_rms > 0):
            raise ValueError("s_rms and n_rms must be positive")
        if self.snr_db != snr_db_from_rms(self.s_rms, self.n_rms):
            raise ValueError(
                f"snr_db {self.snr_db} does not recompute from "
                f"s_rms {self.s_rms} and n_rms {self.n_rms}"
            )

    def to_dict(self) -> dict:
        return {
            "condition_label": self.condition_label,
            "device_label": self.device_label,
            "s_rms": self.s_rms,
            "n_rms": self.n_rms,
            "snr_db": self.snr_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SnrReport":
        return cls(
            condition_label=str(d["condition_label"]),
            s_rms=float(d["s_rms"]),
            n_rms=float(d["n_rms"]),
            snr_db=float(d["snr_db"]),
            device_label=str(d.get("device_label", "")),
        )


def _trimmed(buf: SampleBuffer, trim: tuple[float, float] | None) -> np.ndarray:
    if trim is None:
        return buf.samples
    start_s, end_s = trim
    i0 = int(round(start_s * buf.sample_rate_hz))
    i1 = int(round(end_s * buf.sample_rate_hz))
    if not 0 <= i0 < i1 <= len(buf):
        raise ValueError(
            f"trim window ({start_s}, {end_s}) s maps to empty or out-of-range "
            f"samples [{i0}, {i1}) in a {len(buf)}-sample buffer"
        )
    return buf.samples[i0:i1]


def rms(buf: SampleBuffer, trim: tuple[float, float] | None = None) -> float:
    """Root mean square over the buffer, or over a (start_s, end_s) window."""
    x = _trimmed(buf, trim)
    if len(x) == 0:
        raise ValueError("empty region")
    return float(np.sqrt(np.mean(np.square(x))))


def compute_snr(
    signal_rec: SampleBuffer,
    noise_rec: SampleBuffer,
    *,
    condition_label: str = "",
    device_label: str = "",
    remove_dc: bool = True,
    trim: tuple[float, float] | None = None,
    band_hz: tuple[float, float] | None = None,
) -> SnrReport:
    """SNR between a signal-present and a signal-absent recording.

    Any DC offset is subtracted from each recording first (condenser chains
    often carry a bias); pass remove_dc=False for the literal as-recorded
    ratio. `band_hz` optionally restricts both recordings to a band with a
    zero-phase 4th-order Butterworth before the RMS.
    """
    if len(signal_rec) == 0 or len(noise_rec) == 0:
        raise ValueError("recordings must be non-empty")
    if signal_rec.sample_rate_hz != noise_rec.sample_rate_hz:
        raise ValueError(
            f"sample rates differ: {signal_rec.sample_rate_hz} vs {noise_rec.sample_rate_hz}"
        )
    s = _trimmed(signal_rec, trim)
    n = _trimmed(noise_rec, trim)
    if remove_dc:
        s = s - np.mean(s)
        n = n - np.mean(n)
    if band_hz is not None:
        lo, hi = band_hz
        nyq = signal_rec.sample_rate_hz / 2.0
        if not 0 < lo < hi < nyq:
            raise ValueError(f"band ({lo}, {hi}) must lie inside (0, {nyq})")
        sos = sps.butter(2, [lo / nyq, hi / nyq], btype="bandpass", output="sos")
        s = sps.sosfiltfilt(sos, s)
        n = sps.sosfiltfilt(sos, n)
    s_rms = float(np.sqrt(np.mean(np.square(s))))
    n_rms = float(np.sqrt(np.mean(np.square(n))))
    if n_rms == 0.0:
        raise ValueError("noise RMS is zero (digital silence); SNR undefined")
    if s_rms == 0.0:
        raise ValueError("signal RMS is zero (digital silence); SNR undefined")
    return SnrReport(
        condition_label=condition_label,
        s_rms=s_rms,
        n_rms=n_rms,
        snr_db=snr_db_from_rms(s_rms, n_rms),
        device_label=device_label,
    )


def snr_sweep_table(
    pairs: list[tuple[str, SampleBuffer, SampleBuffer]],
    *,
    device_label: str = "",
    remove_dc: bool = True,
) -> list[SnrReport]:
    """One SnrReport per (condition_label, signal, noise), sorted by label."""
    if not pairs:
        raise ValueError("need at least one (condition, signal, noise) pair")
    labels = [label for label, _, _ in pairs]
    if len(set(labels)) != len(labels):
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        raise ValueError(f"duplicated condition labels {dupes} make the table ambiguous")
    return [
        compute_snr(s, n, condition_label=label, device_label=device_label,
                    remove_dc=remove_dc)
        for label, s, n in sorted(pairs, key=lambda p: p[0])
    ]


def format_snr_table(reports: list[SnrReport]) -> str:
    """Aligned text table of SNR reports, one row per condition."""
    header = ("condition", "device", "s_rms", "n_rms", "snr_db")
    rows = [
        (r.condition_label, r.device_label,
         f"{r.s_rms:.6g}", f"{r.n_rms:.6g}", f"{r.snr_db:8.2f}")
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    def fmt(row):
        return "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)
