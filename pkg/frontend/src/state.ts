// Per-trial view state: slider values, which sliders the rater has
// actually touched, and how often each item was played. Drafts are kept
// in localStorage so a reload mid-trial does not lose work.

import { ResponseBody, TrialPayload, validateResponse } from "./schema.js";

export interface TrialState {
  sessionId: string;
  raterId: string;
  trial: TrialPayload;
  scores: Record<string, number>;
  touched: Record<string, boolean>;
  listens: Record<string, number>;
  submitting: boolean;
  submitted: boolean;
}

// Storage is injected so tests can run against a plain object.
export interface DraftStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export function newTrialState(
  sessionId: string,
  raterId: string,
  trial: TrialPayload,
): TrialState {
  const scores: Record<string, number> = {};
  const touched: Record<string, boolean> = {};
  const listens: Record<string, number> = {};
  for (const it of trial.items) {
    scores[it.item_id] = 0;
    touched[it.item_id] = false;
    listens[it.item_id] = 0;
  }
  return {
    sessionId,
    raterId,
    trial,
    scores,
    touched,
    listens,
    submitting: false,
    submitted: false,
  };
}

export function setScore(st: TrialState, itemId: string, value: number): void {
  if (!(itemId in st.scores)) return;
  const v = Math.min(100, Math.max(0, Math.round(value)));
  st.scores[itemId] = v;
  st.touched[itemId] = true;
}

export function recordListen(st: TrialState, itemId: string): void {
  if (!(itemId in st.listens)) return;
  st.listens[itemId] += 1;
}

/** Submission gate: every item played at least once, every slider moved
 * at least once, and no submission already running or done. */
export function canSubmit(st: TrialState): boolean {
  if (st.submitting || st.submitted) return false;
  return st.trial.items.every(
    (it) => st.listens[it.item_id] >= 1 && st.touched[it.item_id],
  );
}

export function buildResponse(st: TrialState): ResponseBody {
  return {
    rater_id: st.raterId,
    trial_id: st.trial.trial_id,
    scores: { ...st.scores },
    listen_counts: { ...st.listens },
  };
}

/** Run the outgoing body through the same checks the service applies. */
export function validateOutgoing(st: TrialState): string[] {
  return validateResponse(
    st.trial.trial_id,
    st.trial.items.map((it) => it.item_id),
    buildResponse(st),
  );
}

export function draftKey(st: TrialState): string {
  return `draft:${st.sessionId}:${st.raterId}:${st.trial.trial_id}`;
}

export function saveDraft(st: TrialState, store: DraftStore): void {
  const body = JSON.stringify({
    scores: st.scores,
    touched: st.touched,
    listens: st.listens,
  });
  try {
    store.setItem(draftKey(st), body);
  } catch {
    // storage full or disabled; drafts are best-effort
  }
}

export function loadDraft(st: TrialState, store: DraftStore): void {
  let raw: string | null = null;
  try {
    raw = store.getItem(draftKey(st));
  } catch {
    return;
  }
  if (!raw) return;
  let draft: unknown;
  try {
    draft = JSON.parse(raw);
  } catch {
    return;
  }
  if (typeof draft !== "object" || draft === null) return;
  const d = draft as {
    scores?: Record<string, unknown>;
    touched?: Record<string, unknown>;
    listens?: Record<string, unknown>;
  };
  // Only restore keys that belong to this trial; a stale draft from an
  // edited session must not smuggle ghost items into the form.
  for (const it of st.trial.items) {
    const id = it.item_id;
    const s = d.scores?.[id];
    if (typeof s === "number" && Number.isInteger(s) && s >= 0 && s <= 100) {
      st.scores[id] = s;
    }
    if (d.touched?.[id] === true) st.touched[id] = true;
    const n = d.listens?.[id];
    if (typeof n === "number" && Number.isInteger(n) && n >= 0) {
      st.listens[id] = n;
    }
  }
}

export function clearDraft(st: TrialState, store: DraftStore): void {
  try {
    store.removeItem(draftKey(st));
  } catch {
    // ignore
  }
}
