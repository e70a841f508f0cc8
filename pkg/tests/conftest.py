"""Shared fixtures: tiny waveforms and a ready-made rating session on disk."""

import numpy as np
import pytest

from miclab.signalio import AudioClipRef, SampleBuffer, file_checksum, save_wav
from miclab.mushra import MushraSession, Trial, TrialItem, save_session


def sine(freq_hz: float, n: int, fs: int = 44100, amp: float = 0.5) -> SampleBuffer:
    t = np.arange(n) / fs
    return SampleBuffer(amp * np.sin(2 * np.pi * freq_hz * t), fs)


def fake_clip(cid: str) -> AudioClipRef:
    """Metadata-only clip ref for tests that never touch the file."""
    return AudioClipRef(id=cid, path=f"{cid}.wav", duration_s=1.0, checksum="0" * 64)


def make_trial(trial_id: str, conditions=("condA", "condB"), clip=fake_clip) -> Trial:
    ref = clip(f"{trial_id}-ref")
    items = [
        TrialItem(f"{trial_id}-ir", ref, "hidden_reference", "reference"),
        TrialItem(f"{trial_id}-ia", clip(f"{trial_id}-anc"), "anchor", "anchor"),
    ]
    for k, cond in enumerate(conditions):
        items.append(TrialItem(f"{trial_id}-it{k}", clip(f"{trial_id}-t{k}"), "test", cond))
    return Trial(id=trial_id, reference=ref, items=tuple(items))


def make_session(n_trials: int = 1, conditions=("condA", "condB"), **kw) -> MushraSession:
    trials = tuple(make_trial(f"t{i}", conditions) for i in range(n_trials))
    return MushraSession(id="sess-x", trials=trials, **kw)


def full_scores(sess: MushraSession, trial_id: str, base: int = 80, ref: int = 100):
    """Valid score + listen maps covering every item of a trial."""
    trial = sess.trial(trial_id)
    scores, listens = {}, {}
    for k, item in enumerate(trial.items):
        scores[item.item_id] = ref if item.role == "hidden_reference" else base - 5 * k
        listens[item.item_id] = 1 + k
    return scores, listens


@pytest.fixture
def session_dir(tmp_path):
    """A session directory as the init tool lays it out: JSON + real clips."""
    fs = 8000
    sdir = tmp_path / "sessions"
    (sdir / "clips").mkdir(parents=True)
    rng = np.random.default_rng(7)

    def disk_clip(cid: str) -> AudioClipRef:
        dest = sdir / "clips" / f"{cid}.wav"
        buf = SampleBuffer(0.1 * rng.standard_normal(fs // 4), fs)
        save_wav(buf, dest, encoding="float32")
        return AudioClipRef(
            id=cid,
            path=f"clips/{cid}.wav",
            duration_s=len(buf) / fs,
            checksum=file_checksum(dest),
        )

    trials = tuple(make_trial(f"t{i}", clip=disk_clip) for i in range(2))
    sess = MushraSession(id="sess-disk", trials=trials, seed=11)
    save_session(sess, sdir / "sess-disk.json")
    return sess, sdir
