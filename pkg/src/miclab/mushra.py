"""Listening-test sessions on a 0-100 scale with hidden reference and
anchor, rater screening, and the group statistics used to compare
conditions (Welch's t, Cohen's d)."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy import stats as sstats

from .signalio import AudioClipRef, SampleBuffer

ROLES = ("hidden_reference", "anchor", "test")

ANCHOR_CUTOFF_HZ = 3500.0


@dataclass(frozen=True)
class ScreeningRule:
    """A rater is excluded when the fraction of their trials with the
    hidden reference scored below hidden_ref_min exceeds
    max_violation_fraction."""

    hidden_ref_min: float = 90.0
    max_violation_fraction: float = 0.15

    def __post_init__(self) -> None:
        if not 0 <= self.hidden_ref_min <= 100:
            raise ValueError(f"hidden_ref_min must be in [0, 100], got {self.hidden_ref_min}")
        if not 0 <= self.max_violation_fraction <= 1:
            raise ValueError(
                f"max_violation_fraction must be in [0, 1], got {self.max_violation_fraction}"
            )

    def to_dict(self) -> dict:
        return {
            "hidden_ref_min": self.hidden_ref_min,
            "max_violation_fraction": self.max_violation_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScreeningRule":
        return cls(
            hidden_ref_min=float(d.get("hidden_ref_min", 90.0)),
            max_violation_fraction=float(d.get("max_violation_fraction", 0.15)),
        )


@dataclass(frozen=True)
class TrialItem:
    item_id: str
    clip: AudioClipRef
    role: str
    condition_label: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "clip": self.clip.to_dict(),
            "role": self.role,
            "condition_label": self.condition_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialItem":
        return cls(
            item_id=str(d["item_id"]),
            clip=AudioClipRef.from_dict(d["clip"]),
            role=str(d["role"]),
            condition_label=str(d["condition_label"]),
        )


@dataclass(frozen=True)
class Trial:
    """One reference plus the rated items: exactly one hidden copy of the
    reference, at least one anchor, at least one test item."""

    id: str
    reference: AudioClipRef
    items: tuple[TrialItem, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        ids = [it.item_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError(f"trial {self.id!r}: item_ids must be unique")
        n_hidden = sum(it.role == "hidden_reference" for it in self.items)
        if n_hidden != 1:
            raise ValueError(
                f"trial {self.id!r}: exactly one hidden_reference required, got {n_hidden}"
            )
        if not any(it.role == "anchor" for it in self.items):
            raise ValueError(f"trial {self.id!r}: at least one anchor required")
        if not any(it.role == "test" for it in self.items):
            raise ValueError(f"trial {self.id!r}: at least one test item required")

    @property
    def hidden_reference_item_id(self) -> str:
        return next(it.item_id for it in self.items if it.role == "hidden_reference")

    def item_ids(self) -> set[str]:
        return {it.item_id for it in self.items}

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "reference": self.reference.to_dict(),
            "items": [it.to_dict() for it in self.items],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trial":
        return cls(
            id=str(d["id"]),
            reference=AudioClipRef.from_dict(d["reference"]),
            items=tuple(TrialItem.from_dict(x) for x in d["items"]),
        )


@dataclass(frozen=True)
class MushraSession:
    id: str
    trials: tuple[Trial, ...]
    screening_rule: ScreeningRule = field(default_factory=ScreeningRule)
    seed: int = 0  # drives the per-rater item shuffle

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))
        if not self.trials:
            raise ValueError("session needs at least one trial")
        ids = [t.id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise ValueError("trial ids must be unique")

    def trial(self, trial_id: str) -> Trial:
        for t in self.trials:
            if t.id == trial_id:
                return t
        raise KeyError(f"unknown trial {trial_id!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "screening_rule": self.screening_rule.to_dict(),
            "trials": [t.to_dict() for t in self.trials],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MushraSession":
        return cls(
            id=str(d["id"]),
            trials=tuple(Trial.from_dict(x) for x in d["trials"]),
            screening_rule=ScreeningRule.from_dict(d.get("screening_rule", {})),
            seed=int(d.get("seed", 0)),
        )


def save_session(sess: MushraSession, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sess.to_dict(), sort_keys=True, indent=2) + "\n")


def load_session(path: str | Path) -> MushraSession:
    return MushraSession.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MushraResponse:
    """One rater's scores for one trial, plus how often each item was played."""

    rater_id: str
    trial_id: str
    scores: dict[str, int]
    listen_counts: dict[str, int]
    submitted_at: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", dict(self.scores))
        object.__setattr__(self, "listen_counts", dict(self.listen_counts))
        for item_id, score in self.scores.items():
            if int(score) != score or not 0 <= score <= 100:
                raise ValueError(
                    f"score for {item_id!r} must be an integer in [0, 100], got {score!r}"
                )
        for item_id, count in self.listen_counts.items():
            if int(count) != count or count < 1:
                raise ValueError(
                    f"listen count for {item_id!r} must be an integer >= 1, got {count!r}"
                )

    def to_dict(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "trial_id": self.trial_id,
            "scores": {k: int(v) for k, v in sorted(self.scores.items())},
            "listen_counts": {k: int(v) for k, v in sorted(self.listen_counts.items())},
            "submitted_at": self.submitted_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MushraResponse":
        return cls(
            rater_id=str(d["rater_id"]),
            trial_id=str(d["trial_id"]),
            scores={str(k): int(v) for k, v in d["scores"].items()},
            listen_counts={str(k): int(v) for k, v in d["listen_counts"].items()},
            submitted_at=str(d.get("submitted_at", "")),
        )


@dataclass(frozen=True)
class ConditionStats:
    condition_label: str
    n: int
    mean: float
    sd: float

    def to_dict(self) -> dict:
        return {
            "condition_label": self.condition_label,
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
        }


def validate_response(sess: MushraSession, resp: MushraResponse | dict) -> MushraResponse:
    """Check a response against its session's trial and return it typed.

    Accepts either a MushraResponse or its wire-format dict. Raises
    ValueError naming the offending field: unknown trial, missing or
    extraneous items, out-of-range scores, or listen counts below 1.
    """
    if isinstance(resp, dict):
        for key in ("rater_id", "trial_id", "scores", "listen_counts"):
            if key not in resp:
                raise ValueError(f"response missing field {key!r}")
        if not isinstance(resp["scores"], dict) or not isinstance(resp["listen_counts"], dict):
            raise ValueError("scores and listen_counts must be objects keyed by item_id")
        rater_id = str(resp["rater_id"])
        trial_id = str(resp["trial_id"])
        scores = resp["scores"]
        listen_counts = resp["listen_counts"]
        submitted_at = str(resp.get("submitted_at", ""))
    else:
        rater_id = resp.rater_id
        trial_id = resp.trial_id
        scores = resp.scores
        listen_counts = resp.listen_counts
        submitted_at = resp.submitted_at
    if not rater_id:
        raise ValueError("rater_id must be non-empty")

    try:
        trial = sess.trial(trial_id)
    except KeyError:
        raise ValueError(f"unknown trial {trial_id!r} in session {sess.id!r}") from None
    expected = trial.item_ids()

    for name, mapping in (("scores", scores), ("listen_counts", listen_counts)):
        got = set(map(str, mapping))
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        if missing:
            raise ValueError(f"{name} missing item(s) {missing}")
        if extra:
            raise ValueError(f"{name} contain unknown item(s) {extra}")
    for item_id, score in scores.items():
        if not isinstance(score, int) or isinstance(score, bool) or not 0 <= score <= 100:
            raise ValueError(
                f"score for item {item_id!r} must be an integer in [0, 100], got {score!r}"
            )
    for item_id, count in listen_counts.items():
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ValueError(
                f"listen count for item {item_id!r} must be an integer >= 1, got {count!r}"
            )
    return MushraResponse(
        rater_id=rater_id,
        trial_id=trial_id,
        scores={str(k): int(v) for k, v in scores.items()},
        listen_counts={str(k): int(v) for k, v in listen_counts.items()},
        submitted_at=submitted_at,
    )


def latest_responses(responses: list[MushraResponse]) -> list[MushraResponse]:
    """Collapse resubmissions: the last response per (rater, trial) wins."""
    latest: dict[tuple[str, str], MushraResponse] = {}
    for resp in responses:
        latest[(resp.rater_id, resp.trial_id)] = resp
    return list(latest.values())


def screen_raters(
    sess: MushraSession, responses: list[MushraResponse]
) -> tuple[list[str], list[tuple[str, str]]]:
    """Split raters into (kept, excluded-with-reason) by the session rule.

    A violation is a trial whose hidden reference the rater scored below
    hidden_ref_min; exclusion triggers when violations / trials-answered
    exceeds max_violation_fraction.
    """
    rule = sess.screening_rule
    per_rater: dict[str, list[MushraResponse]] = {}
    for resp in latest_responses(responses):
        per_rater.setdefault(resp.rater_id, []).append(resp)
    kept: list[str] = []
    excluded: list[tuple[str, str]] = []
    for rater_id in sorted(per_rater):
        violations = 0
        answered = 0
        for resp in per_rater[rater_id]:
            try:
                trial = sess.trial(resp.trial_id)
            except KeyError:
                continue
            answered += 1
            if resp.scores.get(trial.hidden_reference_item_id, 0) < rule.hidden_ref_min:
                violations += 1
        if answered and violations / answered > rule.max_violation_fraction:
            excluded.append((
                rater_id,
                f"hidden reference below {rule.hidden_ref_min:g} in "
                f"{violations} of {answered} trials",
            ))
        else:
            kept.append(rater_id)
    return kept, excluded


def _condition_scores(
    sess: MushraSession, responses: list[MushraResponse], condition_label: str
) -> list[float]:
    item_conditions = {
        (trial.id, it.item_id): it.condition_label
        for trial in sess.trials
        for it in trial.items
    }
    out = []
    for resp in responses:
        for item_id, score in sorted(resp.scores.items()):
            if item_conditions.get((resp.trial_id, item_id)) == condition_label:
                out.append(float(score))
    return out


def condition_stats(
    sess: MushraSession, responses: list[MushraResponse], condition_label: str
) -> ConditionStats:
    """n, mean, and sample standard deviation of one condition's scores.

    Callers pass the already-screened, latest-per-rater responses.
    """
    scores = _condition_scores(sess, responses, condition_label)
    if len(scores) < 2:
        raise ValueError(
            f"condition {condition_label!r} has {len(scores)} score(s); need >= 2"
        )
    arr = np.asarray(scores)
    return ConditionStats(
        condition_label=condition_label,
        n=len(scores),
        mean=float(arr.mean()),
        sd=float(arr.std(ddof=1)),
    )


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: float
    p: float
    degenerate: bool = False  # both variances zero; p is 1.0 or 0.0 by rule


def welch_t_test(
    a: list[float], b: list[float], *, pooled: bool = False,
    alternative: str = "two-sided",
) -> TTestResult:
    """Welch's unequal-variance t-test (or Student's pooled test by flag).

    alternative: "two-sided", "greater" (mean a > mean b), or "less". When
    both groups have zero variance the statistic is degenerate: equal means
    report t=0, p=1; unequal means report an infinite t with p=0.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    na, nb = len(xa), len(xb)
    if na < 2 or nb < 2:
        raise ValueError(f"each group needs n >= 2, got {na} and {nb}")
    ma, mb = float(xa.mean()), float(xb.mean())
    va, vb = float(xa.var(ddof=1)), float(xb.var(ddof=1))

    if va == 0.0 and vb == 0.0:
        dof = float(na + nb - 2)
        if ma == mb:
            return TTestResult(t=0.0, dof=dof, p=1.0, degenerate=True)
        t = math.copysign(math.inf, ma - mb)
        p = 0.0 if alternative == "two-sided" else (
            0.0 if (alternative == "greater") == (t > 0) else 1.0
        )
        return TTestResult(t=t, dof=dof, p=p, degenerate=True)

    if pooled:
        sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
        dof = float(na + nb - 2)
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        dof = (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    t = (ma - mb) / se
    if alternative == "two-sided":
        p = 2.0 * float(sstats.t.sf(abs(t), dof))
    elif alternative == "greater":
        p = float(sstats.t.sf(t, dof))
    else:
        p = float(sstats.t.cdf(t, dof))
    return TTestResult(t=t, dof=dof, p=p)


def cohens_d(a: list[float], b: list[float]) -> float:
    """Standardized mean difference with the pooled standard deviation."""
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    na, nb = len(xa), len(xb)
    if na < 2 or nb < 2:
        raise ValueError(f"each group needs n >= 2, got {na} and {nb}")
    va, vb = float(xa.var(ddof=1)), float(xb.var(ddof=1))
    pooled_sd = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    if pooled_sd == 0.0:
        raise ValueError("zero pooled standard deviation; d undefined")
    return (float(xa.mean()) - float(xb.mean())) / pooled_sd


def _json_safe(x: float) -> float | None:
    return x if math.isfinite(x) else None


def session_report(
    sess: MushraSession,
    responses: list[MushraResponse],
    *,
    baseline_condition: str | None = None,
) -> dict:
    """Screening outcome, per-condition stats, and tests vs a baseline.

    Resubmissions are collapsed to the latest per (rater, trial) and the
    session's screening rule is applied before any statistic. Conditions
    with fewer than two scores are reported in the warnings instead of the
    stats. Pairwise Welch tests and Cohen's d against `baseline_condition`
    are included when one is designated.
    """
    warnings: list[str] = []
    valid: list[MushraResponse] = []
    for resp in responses:
        try:
            valid.append(validate_response(sess, resp))
        except ValueError as exc:
            warnings.append(f"ignored invalid response: {exc}")
    latest = latest_responses(valid)
    kept, excluded = screen_raters(sess, latest)
    kept_set = set(kept)
    used = [r for r in latest if r.rater_id in kept_set]

    conditions = sorted({
        it.condition_label for trial in sess.trials for it in trial.items
    })
    if baseline_condition is not None and baseline_condition not in conditions:
        raise ValueError(
            f"baseline condition {baseline_condition!r} not in session "
            f"conditions {conditions}"
        )
    if not used:
        warnings.append("no responses from kept raters; statistics are empty")

    stats_rows = []
    scored: dict[str, list[float]] = {}
    for label in conditions:
        scores = _condition_scores(sess, used, label)
        if len(scores) < 2:
            warnings.append(
                f"condition {label!r} has {len(scores)} score(s); skipped in stats"
            )
            continue
        scored[label] = scores
        stats_rows.append(condition_stats(sess, used, label).to_dict())

    comparisons = []
    if baseline_condition is not None and baseline_condition in scored:
        base_scores = scored[baseline_condition]
        for label in conditions:
            if label == baseline_condition or label not in scored:
                continue
            res = welch_t_test(scored[label], base_scores)
            try:
                d = cohens_d(scored[label], base_scores)
            except ValueError:
                d = math.nan
                warnings.append(
                    f"cohens_d undefined for {label!r} vs {baseline_condition!r}"
                )
            comparisons.append({
                "condition_label": label,
                "baseline_condition": baseline_condition,
                "t": _json_safe(res.t),
                "dof": _json_safe(res.dof),
                "p_two_sided": _json_safe(res.p),
                "cohens_d": _json_safe(d),
                "degenerate": res.degenerate,
            })
    elif baseline_condition is not None:
        warnings.append(
            f"baseline condition {baseline_condition!r} lacks scores; no comparisons"
        )

    return {
        "session_id": sess.id,
        "screening": {
            "rule": sess.screening_rule.to_dict(),
            "kept": kept,
            "excluded": [{"rater_id": rid, "reason": why} for rid, why in excluded],
        },
        "n_responses_used": len(used),
        "conditions": stats_rows,
        "comparisons": comparisons,
        "warnings": warnings,
    }


def format_report_table(report: dict) -> str:
    lines = [f"session {report['session_id']}"]
    screening = report["screening"]
    lines.append(
        f"raters kept: {len(screening['kept'])}, "
        f"excluded: {len(screening['excluded'])}"
    )
    for entry in screening["excluded"]:
        lines.append(f"  excluded {entry['rater_id']}: {entry['reason']}")
    if report["conditions"]:
        header = ("condition", "n", "mean", "sd")
        rows = [
            (c["condition_label"], str(c["n"]), f"{c['mean']:.2f}", f"{c['sd']:.2f}")
            for c in report["conditions"]
        ]
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
        def fmt(row):
            return "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        lines.append(fmt(header))
        lines.append(fmt(tuple("-" * w for w in widths)))
        lines.extend(fmt(r) for r in rows)
    for cmp_row in report["comparisons"]:
        p = cmp_row["p_two_sided"]
        d = cmp_row["cohens_d"]
        lines.append(
            f"{cmp_row['condition_label']} vs {cmp_row['baseline_condition']}: "
            f"t={cmp_row['t'] if cmp_row['t'] is not None else 'inf'}"
            f", p={p if p is not None else 'n/a'}"
            f", d={d if d is not None else 'n/a'}"
        )
    for warning in report["warnings"]:
        lines.append(f"warning: {warning}")
    return "\n".join(lines)


def make_anchor(reference: SampleBuffer, cutoff_hz: float = ANCHOR_CUTOFF_HZ) -> SampleBuffer:
    """Degraded copy of the reference: zero-phase 4th-order low-pass.

    The anchor pins the bottom of the rating scale; the conventional
    cutoff is 3.5 kHz.
    """
    nyq = reference.sample_rate_hz / 2.0
    if not 0 < cutoff_hz < nyq:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie inside (0, {nyq})")
    if len(reference) < 64:
        raise ValueError("reference too short to filter")
    sos = sps.butter(2, cutoff_hz / nyq, btype="lowpass", output="sos")
    return SampleBuffer(
        samples=sps.sosfiltfilt(sos, reference.samples),
        sample_rate_hz=reference.sample_rate_hz,
    )


def shuffled_items(sess: MushraSession, trial: Trial, rater_id: str) -> list[TrialItem]:
    """Deterministic per-rater permutation of a trial's items."""
    digest = hashlib.sha256(
        f"{sess.seed}:{sess.id}:{trial.id}:{rater_id}".encode()
    ).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    items = list(trial.items)
    rng.shuffle(items)
    return items
