"""Character-accuracy scoring of recognition hypotheses and aggregation
per device and noise condition. The recognizer itself is an external
command; this module only invokes it and scores its text output."""

from __future__ import annotations

import shlex
import subprocess
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

STYLES = ("natural", "whispered")

INPUT_PLACEHOLDER = "{input}"


@dataclass(frozen=True)
class TranscriptPair:
    """One utterance's reference transcript and recognizer hypothesis.

    hypothesis None means the recognizer failed on this clip; such pairs
    are excluded from aggregation and counted separately.
    """

    id: str
    reference: str
    hypothesis: str | None
    device_label: str = ""
    condition_label: str = ""
    style: str = "natural"

    def __post_init__(self) -> None:
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}, got {self.style!r}")
        if not normalize_text(self.reference):
            raise ValueError(f"pair {self.id!r}: reference is empty after normalization")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "reference": self.reference,
            "hypothesis": self.hypothesis,
            "device_label": self.device_label,
            "condition_label": self.condition_label,
            "style": self.style,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TranscriptPair":
        return cls(
            id=str(d["id"]),
            reference=str(d["reference"]),
            hypothesis=None if d.get("hypothesis") is None else str(d["hypothesis"]),
            device_label=str(d.get("device_label", "")),
            condition_label=str(d.get("condition_label", "")),
            style=str(d.get("style", "natural")),
        )


@dataclass(frozen=True)
class GroupStats:
    mean_accuracy: float
    n_items: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean_accuracy <= 1.0:
            raise ValueError(f"mean_accuracy {self.mean_accuracy} outside [0, 1]")
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")


@dataclass(frozen=True)
class AccuracyReport:
    """Mean character accuracy per (device_label, condition_label, style)."""

    groups: dict[tuple[str, str, str], GroupStats]
    n_missing_hypotheses: int = 0

    def to_dict(self) -> dict:
        return {
            "groups": [
                {
                    "device_label": dev,
                    "condition_label": cond,
                    "style": style,
                    "mean_accuracy": st.mean_accuracy,
                    "n_items": st.n_items,
                }
                for (dev, cond, style), st in sorted(self.groups.items())
            ],
            "n_missing_hypotheses": self.n_missing_hypotheses,
        }


def normalize_text(s: str) -> str:
    """Lowercase, drop punctuation, collapse runs of whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if not unicodedata.category(ch).startswith("P"))
    return " ".join(s.split())


def _levenshtein(a: str, b: str) -> int:
    # two-row DP; insert/delete/substitute all cost 1
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            ))
        prev = cur
    return prev[-1]


def char_accuracy(pair: TranscriptPair) -> float:
    """1 - normalized character edit distance, clamped at 0."""
    if pair.hypothesis is None:
        raise ValueError(f"pair {pair.id!r} has no hypothesis")
    ref = normalize_text(pair.reference)
    hyp = normalize_text(pair.hypothesis)
    if not ref:
        raise ValueError(f"pair {pair.id!r}: empty reference")
    return max(0.0, 1.0 - _levenshtein(ref, hyp) / len(ref))


def aggregate(pairs: list[TranscriptPair]) -> AccuracyReport:
    """Unweighted mean accuracy per (device, condition, style) group.

    The per-group accuracies are sorted before averaging so the report is
    bit-identical under any permutation of the input.
    """
    if not pairs:
        raise ValueError("need at least one transcript pair")
    by_group: dict[tuple[str, str, str], list[float]] = {}
    n_missing = 0
    for pair in pairs:
        if pair.hypothesis is None:
            n_missing += 1
            continue
        key = (pair.device_label, pair.condition_label, pair.style)
        by_group.setdefault(key, []).append(char_accuracy(pair))
    if not by_group:
        raise ValueError("every pair is missing its hypothesis; nothing to score")
    groups = {
        key: GroupStats(
            mean_accuracy=float(sum(sorted(accs)) / len(accs)), n_items=len(accs)
        )
        for key, accs in by_group.items()
    }
    return AccuracyReport(groups=groups, n_missing_hypotheses=n_missing)


def run_external_asr(
    manifest: list[dict],
    command_template: str,
    *,
    base_dir: str | Path = ".",
    max_workers: int = 4,
    timeout_s: float = 600.0,
) -> list[TranscriptPair]:
    """Run an external recognizer over each manifest entry.

    Manifest entries: {id, path, reference, device_label?, condition_label?,
    style?}. The command template must contain "{input}", replaced by the
    clip path; it is split with shell quoting rules and run without a
    shell. A nonzero exit or timeout leaves that pair's hypothesis missing;
    other clips still run.
    """
    if INPUT_PLACEHOLDER not in command_template:
        raise ValueError(f"command template must contain {INPUT_PLACEHOLDER}")
    if not manifest:
        raise ValueError("empty manifest")
    argv_template = shlex.split(command_template)
    base = Path(base_dir)

    def one(entry: dict) -> TranscriptPair:
        path = base / entry["path"]
        argv = [arg.replace(INPUT_PLACEHOLDER, str(path)) for arg in argv_template]
        hypothesis: str | None
        try:
            proc = subprocess.run(
                argv, capture_output=True, timeout=timeout_s, check=False
            )
            hypothesis = proc.stdout.decode("utf-8", "replace").strip() \
                if proc.returncode == 0 else None
        except FileNotFoundError as exc:
            raise ValueError(f"recognizer command not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired:
            hypothesis = None
        return TranscriptPair(
            id=str(entry["id"]),
            reference=str(entry["reference"]),
            hypothesis=hypothesis,
            device_label=str(entry.get("device_label", "")),
            condition_label=str(entry.get("condition_label", "")),
            style=str(entry.get("style", "natural")),
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, manifest))


def format_accuracy_table(report: AccuracyReport) -> str:
    header = ("device", "condition", "style", "mean_accuracy", "n")
    rows = [
        (dev, cond, style, f"{st.mean_accuracy:.4f}", str(st.n_items))
        for (dev, cond, style), st in sorted(report.groups.items())
    ]
    if not rows:
        rows = [("-", "-", "-", "-", "0")]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    def fmt(row):
        return "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in rows)
    if report.n_missing_hypotheses:
        lines.append(f"missing hypotheses: {report.n_missing_hypotheses}")
    return "\n".join(lines)
