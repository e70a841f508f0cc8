"""Reading, writing, and validating mono audio sample buffers.

All toolkit processing is single-channel. WAV files are accepted as 16-bit
integer PCM or 32-bit float; multichannel files are averaged to mono unless
a channel index is given. Integer PCM maps to [-1, 1) by division by 32768.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy.io import wavfile

PCM16_FULL_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    """Mono audio samples plus their sample rate.

    Samples are stored as float64 amplitudes, nominally within [-1, 1].
    Buffers are treated as immutable once constructed.
    """

    samples: npt.NDArray[np.float64]
    sample_rate_hz: int = 44100

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples contain NaN or Inf")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class AudioClipRef:
    """Reference to an audio file by id, path, duration, and content hash."""

    id: str
    path: str
    duration_s: float
    checksum: str

    @classmethod
    def from_file(cls, clip_id: str, path: str | Path) -> "AudioClipRef":
        buf = load_wav(path)
        return cls(
            id=clip_id,
            path=str(path),
            duration_s=buf.duration_s,
            checksum=file_checksum(path),
        )

    def verify(self, base_dir: str | Path | None = None) -> None:
        """Raise if the referenced file's content hash no longer matches."""
        path = Path(self.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        actual = file_checksum(path)
        if actual != self.checksum:
            raise ValueError(
                f"checksum mismatch for clip {self.id!r}: "
                f"expected {self.checksum}, file has {actual}"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "duration_s": self.duration_s,
            "checksum": self.checksum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AudioClipRef":
        return cls(
            id=str(d["id"]),
            path=str(d["path"]),
            duration_s=float(d["duration_s"]),
            checksum=str(d["checksum"]),
        )


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_wav(path: str | Path, *, channel: int | None = None) -> SampleBuffer:
    """Load a WAV file as a mono SampleBuffer.

    16-bit PCM is normalized by 1/32768; 32-bit float is taken as-is.
    Multichannel input is averaged to mono unless `channel` selects one.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"zero-length audio stream in {path}")

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_FULL_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(
            f"unsupported encoding {data.dtype} in {path}; "
            f"expected 16-bit PCM or 32-bit float"
        )

    if samples.ndim == 2:
        if channel is not None:
            if not 0 <= channel < samples.shape[1]:
                raise ValueError(
                    f"channel {channel} out of range for {samples.shape[1]}-channel file"
                )
            samples = samples[:, channel]
        else:
            samples = samples.mean(axis=1)
    return SampleBuffer(samples=samples, sample_rate_hz=int(rate))


def save_wav(buf: SampleBuffer, path: str | Path, encoding: str = "float32") -> None:
    """Write a buffer as WAV. `encoding` is "pcm16" or "float32".

    pcm16 round-trips within 1/32768 per sample; float32 is exact for
    inputs within float32 range. Out-of-range samples are clamped for
    pcm16 with a warning.
    """
    if len(buf) == 0:
        raise ValueError("refusing to write empty buffer")
    if not np.all(np.isfinite(buf.samples)):
        raise ValueError("samples contain NaN or Inf")

    if encoding == "float32":
        data = buf.samples.astype(np.float32)
    elif encoding == "pcm16":
        x = buf.samples
        if np.any(x < -1.0) or np.any(x > 1.0):
            warnings.warn("samples outside [-1, 1] clamped for pcm16", stacklevel=2)
            x = np.clip(x, -1.0, 1.0)
        data = np.clip(np.round(x * PCM16_FULL_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r}; expected pcm16 or float32")
    wavfile.write(str(path), buf.sample_rate_hz, data)
