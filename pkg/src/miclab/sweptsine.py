"""Swept-sine excitation signals, inverse filters, and measurement plans.

A measurement run plays `repetitions_per_block` sweeps separated by silent
gaps, and repeats that block several times; the default plan is five
65536-sample sweeps per block and ten blocks, i.e. fifty measurements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .signalio import SampleBuffer

SWEEP_KINDS = ("linear", "exponential")


@dataclass(frozen=True)
class SweepSpec:
    """Parameters of one swept sine."""

    length_samples: int = 65536
    sample_rate_hz: int = 44100
    f_start_hz: float = 20.0
    f_end_hz: float = 22050.0
    sweep_kind: str = "linear"
    amplitude: float = 0.9
    fade_samples: int = 256  # half-cosine edge ramps; 0 disables

    def __post_init__(self) -> None:
        if self.length_samples < 2:
            raise ValueError(f"length_samples must be >= 2, got {self.length_samples}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.f_start_hz <= 0:
            raise ValueError(f"f_start_hz must be > 0, got {self.f_start_hz}")
        if self.f_start_hz >= self.f_end_hz:
            raise ValueError(
                f"f_start_hz {self.f_start_hz} must be below f_end_hz {self.f_end_hz}"
            )
        if self.f_end_hz > self.sample_rate_hz / 2:
            raise ValueError(
                f"f_end_hz {self.f_end_hz} above Nyquist {self.sample_rate_hz / 2}"
            )
        if not 0 < self.amplitude <= 1:
            raise ValueError(f"amplitude must be in (0, 1], got {self.amplitude}")
        if self.sweep_kind not in SWEEP_KINDS:
            raise ValueError(f"sweep_kind must be one of {SWEEP_KINDS}, got {self.sweep_kind!r}")
        if self.fade_samples < 0 or 2 * self.fade_samples > self.length_samples:
            raise ValueError(f"fade_samples {self.fade_samples} too long for sweep")

    def to_dict(self) -> dict:
        return {
            "length_samples": self.length_samples,
            "sample_rate_hz": self.sample_rate_hz,
            "f_start_hz": self.f_start_hz,
            "f_end_hz": self.f_end_hz,
            "sweep_kind": self.sweep_kind,
            "amplitude": self.amplitude,
            "fade_samples": self.fade_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return cls(
            length_samples=int(d.get("length_samples", 65536)),
            sample_rate_hz=int(d.get("sample_rate_hz", 44100)),
            f_start_hz=float(d.get("f_start_hz", 20.0)),
            f_end_hz=float(d.get("f_end_hz", 22050.0)),
            sweep_kind=str(d.get("sweep_kind", "linear")),
            amplitude=float(d.get("amplitude", 0.9)),
            fade_samples=int(d.get("fade_samples", 256)),
        )


@dataclass(frozen=True)
class MeasurementPlan:
    """One sweep repeated `repetitions_per_block` times per block with
    equal-length silent gaps, for `blocks` blocks."""

    sweep: SweepSpec = field(default_factory=SweepSpec)
    repetitions_per_block: int = 5
    gap_samples: int | None = None  # None means same length as the sweep
    blocks: int = 10

    def __post_init__(self) -> None:
        if self.gap_samples is None:
            object.__setattr__(self, "gap_samples", self.sweep.length_samples)
        if self.repetitions_per_block < 1:
            raise ValueError("repetitions_per_block must be >= 1")
        if self.gap_samples < 0:
            raise ValueError("gap_samples must be >= 0")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")

    @property
    def total_measurements(self) -> int:
        return self.repetitions_per_block * self.blocks

    @property
    def period_samples(self) -> int:
        return self.sweep.length_samples + self.gap_samples

    @property
    def block_length_samples(self) -> int:
        return self.repetitions_per_block * self.period_samples

    def to_dict(self) -> dict:
        return {
            "sweep": self.sweep.to_dict(),
            "repetitions_per_block": self.repetitions_per_block,
            "gap_samples": self.gap_samples,
            "blocks": self.blocks,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementPlan":
        return cls(
            sweep=SweepSpec.from_dict(d.get("sweep", {})),
            repetitions_per_block=int(d.get("repetitions_per_block", 5)),
            gap_samples=None if d.get("gap_samples") is None else int(d["gap_samples"]),
            blocks=int(d.get("blocks", 10)),
        )


def save_plan(plan: MeasurementPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan.to_dict(), sort_keys=True, indent=2) + "\n")


def load_plan(path: str | Path) -> MeasurementPlan:
    return MeasurementPlan.from_dict(json.loads(Path(path).read_text()))


def gen_sweep(spec: SweepSpec) -> SampleBuffer:
    """Generate one swept sine per the spec.

    Linear sweeps advance frequency at a constant rate; exponential sweeps
    advance at a constant rate per octave. Instantaneous frequency rises
    monotonically from f_start to f_end over exactly length_samples.
    """
    n = np.arange(spec.length_samples, dtype=np.float64)
    t = n / spec.sample_rate_hz
    duration = spec.length_samples / spec.sample_rate_hz
    if spec.sweep_kind == "linear":
        rate = (spec.f_end_hz - spec.f_start_hz) / duration
        phase = 2 * np.pi * (spec.f_start_hz * t + 0.5 * rate * t * t)
    else:
        log_ratio = np.log(spec.f_end_hz / spec.f_start_hz)
        phase = (
            2 * np.pi * spec.f_start_hz * duration / log_ratio
            * (np.exp(t / duration * log_ratio) - 1.0)
        )
    x = spec.amplitude * np.sin(phase)
    if spec.fade_samples > 0:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, spec.fade_samples))
        x[: spec.fade_samples] *= ramp
        x[-spec.fade_samples:] *= ramp[::-1]
    return SampleBuffer(samples=x, sample_rate_hz=spec.sample_rate_hz)


def gen_inverse_filter(spec: SweepSpec) -> SampleBuffer:
    """Inverse filter: convolving the sweep with it yields a near-delta.

    The filter is the time-reversed sweep; exponential sweeps additionally
    get a decaying amplitude envelope (one gain doubling per octave) so the
    pink spectral tilt of the sweep is equalized. Normalized so the
    convolution peak is exactly 1.
    """
    sweep = gen_sweep(spec).samples
    inv = sweep[::-1].copy()
    if spec.sweep_kind == "exponential":
        log_ratio = np.log(spec.f_end_hz / spec.f_start_hz)
        inv *= np.exp(-np.arange(spec.length_samples) * log_ratio / spec.length_samples)
    peak = np.max(np.abs(sps.fftconvolve(sweep, inv)))
    inv /= peak
    return SampleBuffer(samples=inv, sample_rate_hz=spec.sample_rate_hz)


def assemble_plan(plan: MeasurementPlan) -> SampleBuffer:
    """Emit one block: repetitions_per_block copies of [sweep, silence].

    Playback repeats the block `plan.blocks` times; the returned buffer is
    a single block.
    """
    sweep = gen_sweep(plan.sweep).samples
    unit = np.concatenate([sweep, np.zeros(plan.gap_samples)])
    return SampleBuffer(
        samples=np.tile(unit, plan.repetitions_per_block),
        sample_rate_hz=plan.sweep.sample_rate_hz,
    )
