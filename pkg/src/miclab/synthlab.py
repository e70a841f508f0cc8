"""Synthetic two-source scenarios with known ground truth.

A scenario mixes a "mouth" source and a "noise" source, each passed through
its own linear transfer function, into one simulated microphone recording.
Because both paths are constructed, every downstream estimate (onsets,
impulse responses, SNR, band advantages) can be checked against exact
expected values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .signalio import SampleBuffer, load_wav
from .sweptsine import assemble_plan, load_plan


@dataclass(frozen=True)
class Scenario:
    """Two sources, two transfer functions, two playback levels.

    Levels are RMS-referenced dB relative to digital full scale; a level of
    -inf mutes that path. `seed` records the RNG seed used to build any
    stochastic source material, so a scenario rebuilt from its manifest is
    bit-identical.
    """

    mouth_signal: SampleBuffer
    noise_signal: SampleBuffer
    mouth_ir: SampleBuffer
    noise_ir: SampleBuffer
    mouth_level_db: float
    noise_level_db: float
    seed: int = 0

    def __post_init__(self) -> None:
        buffers = (self.mouth_signal, self.noise_signal, self.mouth_ir, self.noise_ir)
        rates = {b.sample_rate_hz for b in buffers}
        if len(rates) != 1:
            raise ValueError(f"all scenario buffers must share one sample rate, got {sorted(rates)}")
        for label, level in (("mouth", self.mouth_level_db), ("noise", self.noise_level_db)):
            if math.isnan(level) or level == math.inf:
                raise ValueError(f"{label}_level_db must be finite or -inf, got {level}")

    @property
    def sample_rate_hz(self) -> int:
        return self.mouth_signal.sample_rate_hz


def _scaled_to_level(x: np.ndarray, level_db: float, label: str) -> np.ndarray:
    if level_db == -math.inf:
        return np.zeros_like(x)
    r = float(np.sqrt(np.mean(np.square(x)))) if len(x) else 0.0
    if r == 0.0:
        raise ValueError(f"{label} source is silent; cannot scale it to a level")
    return x * (10.0 ** (level_db / 20.0) / r)


def _through_path(x: np.ndarray, ir: np.ndarray) -> np.ndarray:
    # A single-tap path is a pure gain; skip convolution so a unit tap
    # reproduces the source bit for bit.
    if len(ir) == 1:
        return x * ir[0]
    return sps.convolve(x, ir, method="auto")


def render(sc: Scenario) -> SampleBuffer:
    """Mix the scenario into one recording.

    Each source is rescaled so its RMS matches its level, convolved with
    its path's impulse response (full convolution), and the two paths are
    summed; the shorter path is zero-padded to the longer one's length.
    """
    mouth = _scaled_to_level(sc.mouth_signal.samples, sc.mouth_level_db, "mouth")
    noise = _scaled_to_level(sc.noise_signal.samples, sc.noise_level_db, "noise")
    mouth_out = _through_path(mouth, sc.mouth_ir.samples)
    noise_out = _through_path(noise, sc.noise_ir.samples)
    out = np.zeros(max(len(mouth_out), len(noise_out)))
    out[: len(mouth_out)] += mouth_out
    out[: len(noise_out)] += noise_out
    return SampleBuffer(samples=out, sample_rate_hz=sc.sample_rate_hz)


def white_noise(
    length_samples: int,
    seed,
    rms_target: float,
    sample_rate_hz: int = 44100,
) -> SampleBuffer:
    """Gaussian white noise rescaled to exactly the target RMS.

    `seed` is anything numpy's default_rng accepts (an int for direct use;
    manifests pass [scenario_seed, path_index] so the two paths draw
    independent streams).
    """
    if length_samples < 1:
        raise ValueError(f"length_samples must be >= 1, got {length_samples}")
    if rms_target <= 0:
        raise ValueError(f"rms_target must be positive, got {rms_target}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(length_samples)
    r = float(np.sqrt(np.mean(np.square(x))))
    if r == 0.0:  # length-1 draw can be exactly 0 only with probability 0
        raise ValueError("degenerate all-zero noise draw")
    return SampleBuffer(samples=x * (rms_target / r), sample_rate_hz=sample_rate_hz)


def taps_ir(
    taps: list[tuple[int, float]], sample_rate_hz: int = 44100
) -> SampleBuffer:
    """Sparse FIR from (delay_samples, amplitude) pairs."""
    if not taps:
        raise ValueError("taps must be non-empty")
    for delay, _ in taps:
        if int(delay) != delay or delay < 0:
            raise ValueError(f"tap delays must be nonnegative integers, got {delay}")
    h = np.zeros(int(max(d for d, _ in taps)) + 1)
    for delay, amp in taps:
        h[int(delay)] += amp
    return SampleBuffer(samples=h, sample_rate_hz=sample_rate_hz)


def band_gain_fir(
    gain_db: float,
    f_lo_hz: float,
    f_hi_hz: float,
    sample_rate_hz: int = 44100,
    numtaps: int = 4095,
    transition_hz: float = 35.0,
) -> SampleBuffer:
    """Linear-phase FIR with `gain_db` over [f_lo, f_hi] and unity outside.

    The gain plateau extends one transition width past each band edge so
    the stated gain holds over the whole closed band; transitions sit
    entirely outside it.
    """
    nyq = sample_rate_hz / 2.0
    if numtaps < 3 or numtaps % 2 == 0:
        raise ValueError(f"numtaps must be odd and >= 3, got {numtaps}")
    if transition_hz <= 0:
        raise ValueError("transition_hz must be positive")
    if not 0 < f_lo_hz - 2 * transition_hz:
        raise ValueError(
            f"f_lo_hz {f_lo_hz} too close to DC for a {transition_hz} Hz transition"
        )
    if not f_hi_hz + 2 * transition_hz < nyq:
        raise ValueError(
            f"f_hi_hz {f_hi_hz} too close to Nyquist for a {transition_hz} Hz transition"
        )
    if f_lo_hz + transition_hz >= f_hi_hz - transition_hz:
        raise ValueError(f"band ({f_lo_hz}, {f_hi_hz}) too narrow")
    g = 10.0 ** (gain_db / 20.0)
    freq = [0.0, f_lo_hz - 2 * transition_hz, f_lo_hz - transition_hz,
            f_hi_hz + transition_hz, f_hi_hz + 2 * transition_hz, nyq]
    gain = [1.0, 1.0, g, g, 1.0, 1.0]
    taps = sps.firwin2(numtaps, freq, gain, fs=sample_rate_hz)
    return SampleBuffer(samples=taps, sample_rate_hz=sample_rate_hz)


def _source_from_spec(spec: dict, rate: int, seed: int, path_index: int,
                      base_dir: Path) -> SampleBuffer:
    kind = spec.get("kind")
    if kind == "wav":
        buf = load_wav(base_dir / spec["path"])
        if buf.sample_rate_hz != rate:
            raise ValueError(
                f"source {spec['path']} rate {buf.sample_rate_hz} != scenario rate {rate}"
            )
        return buf
    if kind == "white_noise":
        return white_noise(
            int(spec["length_samples"]), [seed, path_index],
            rms_target=float(spec.get("rms", 1.0)), sample_rate_hz=rate,
        )
    if kind == "silence":
        return SampleBuffer(np.zeros(int(spec["length_samples"])), rate)
    if kind == "plan":
        plan = load_plan(base_dir / spec["path"])
        if plan.sweep.sample_rate_hz != rate:
            raise ValueError(
                f"plan rate {plan.sweep.sample_rate_hz} != scenario rate {rate}"
            )
        block = assemble_plan(plan).samples
        blocks = int(spec.get("blocks", plan.blocks))
        if blocks < 1:
            raise ValueError("blocks must be >= 1")
        x = np.tile(block, blocks)
        offset = int(spec.get("offset_samples", 0))
        if offset < 0:
            raise ValueError("offset_samples must be >= 0")
        if offset:
            x = np.concatenate([np.zeros(offset), x])
        return SampleBuffer(x, rate)
    raise ValueError(f"unknown source kind {kind!r}")


def _ir_from_spec(spec: dict, rate: int, base_dir: Path) -> SampleBuffer:
    kind = spec.get("kind")
    if kind == "delta":
        return taps_ir(
            [(int(spec.get("delay_samples", 0)), float(spec.get("amplitude", 1.0)))],
            sample_rate_hz=rate,
        )
    if kind == "taps":
        taps = [(int(t["delay_samples"]), float(t["amplitude"])) for t in spec["taps"]]
        return taps_ir(taps, sample_rate_hz=rate)
    if kind == "wav":
        buf = load_wav(base_dir / spec["path"])
        if buf.sample_rate_hz != rate:
            raise ValueError(
                f"IR {spec['path']} rate {buf.sample_rate_hz} != scenario rate {rate}"
            )
        return buf
    if kind == "band_gain_fir":
        return band_gain_fir(
            gain_db=float(spec["gain_db"]),
            f_lo_hz=float(spec["f_lo_hz"]),
            f_hi_hz=float(spec["f_hi_hz"]),
            sample_rate_hz=rate,
            numtaps=int(spec.get("numtaps", 4095)),
            transition_hz=float(spec.get("transition_hz", 35.0)),
        )
    raise ValueError(f"unknown IR kind {kind!r}")


def _level_from_spec(value) -> float:
    if value == "mute":
        return -math.inf
    return float(value)


def scenario_from_manifest(manifest: dict, base_dir: str | Path = ".") -> Scenario:
    """Build a Scenario from its JSON manifest.

    Schema::

        {
          "seed": 0,
          "sample_rate_hz": 44100,
          "mouth": {"source": {...}, "ir": {...}, "level_db": -20.0},
          "noise": {"source": {...}, "ir": {...}, "level_db": "mute"}
        }

    Source kinds: wav {path}, white_noise {length_samples, rms?},
    silence {length_samples}, plan {path, blocks?, offset_samples?}.
    IR kinds: delta {delay_samples?, amplitude?}, taps {taps: [{delay_samples,
    amplitude}]}, wav {path}, band_gain_fir {gain_db, f_lo_hz, f_hi_hz,
    numtaps?, transition_hz?}. Paths are relative to `base_dir`.
    """
    base = Path(base_dir)
    seed = int(manifest.get("seed", 0))
    rate = int(manifest.get("sample_rate_hz", 44100))
    try:
        mouth = manifest["mouth"]
        noise = manifest["noise"]
        return Scenario(
            mouth_signal=_source_from_spec(mouth["source"], rate, seed, 0, base),
            noise_signal=_source_from_spec(noise["source"], rate, seed, 1, base),
            mouth_ir=_ir_from_spec(mouth["ir"], rate, base),
            noise_ir=_ir_from_spec(noise["ir"], rate, base),
            mouth_level_db=_level_from_spec(mouth["level_db"]),
            noise_level_db=_level_from_spec(noise["level_db"]),
            seed=seed,
        )
    except KeyError as exc:
        raise ValueError(f"scenario manifest missing key {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    manifest = json.loads(path.read_text())
    return scenario_from_manifest(manifest, base_dir=path.parent)
