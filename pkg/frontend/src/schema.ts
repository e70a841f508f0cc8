// Wire types for the rating service, plus a client-side mirror of the
// checks the service runs on submitted responses. Keeping the rules here
// means a body that passes locally is a body the service will accept,
// and the fixture tests pin that equivalence against recorded traffic.

export interface TrialItemRef {
  item_id: string;
  clip_id: string;
}

export interface TrialPayload {
  trial_id: string;
  reference_clip_id: string;
  items: TrialItemRef[];
}

export interface SessionPayload {
  session_id: string;
  rater_id: string;
  trials: TrialPayload[];
}

export interface ResponseBody {
  rater_id: string;
  trial_id: string;
  scores: Record<string, number>;
  listen_counts: Record<string, number>;
  submitted_at?: string;
}

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function asString(v: unknown, where: string): string {
  if (typeof v !== "string") throw new Error(`${where} must be a string`);
  return v;
}

/** Parse and shape-check a GET /api/sessions payload. Throws on anything
 * that would leave the page unable to render a trustworthy form. */
export function parseSessionPayload(data: unknown): SessionPayload {
  if (!isRecord(data)) throw new Error("session payload must be an object");
  const sessionId = asString(data.session_id, "session_id");
  const raterId = asString(data.rater_id, "rater_id");
  if (!Array.isArray(data.trials)) throw new Error("trials must be an array");
  const trials: TrialPayload[] = data.trials.map((raw, i) => {
    if (!isRecord(raw)) throw new Error(`trial ${i} must be an object`);
    const trialId = asString(raw.trial_id, `trial ${i} trial_id`);
    const refClip = asString(raw.reference_clip_id, `trial ${i} reference_clip_id`);
    if (!Array.isArray(raw.items)) throw new Error(`trial ${trialId} items must be an array`);
    const items: TrialItemRef[] = raw.items.map((it, k) => {
      if (!isRecord(it)) throw new Error(`trial ${trialId} item ${k} must be an object`);
      return {
        item_id: asString(it.item_id, `trial ${trialId} item ${k} item_id`),
        clip_id: asString(it.clip_id, `trial ${trialId} item ${k} clip_id`),
      };
    });
    return { trial_id: trialId, reference_clip_id: refClip, items };
  });
  return { session_id: sessionId, rater_id: raterId, trials };
}

// Integer check that rejects booleans: JSON true would satisfy a loose
// numeric coercion but the service refuses it, so we must too.
function strictInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v);
}

/**
 * Mirror of the service-side response validation. Returns a list of
 * problems, empty when the body would be accepted. `expectedItems` is
 * the item_id set of the trial being scored.
 */
export function validateResponse(
  trialId: string,
  expectedItems: string[],
  body: unknown,
): string[] {
  const errors: string[] = [];
  if (!isRecord(body)) return ["response body must be an object"];
  for (const key of ["rater_id", "trial_id", "scores", "listen_counts"]) {
    if (!(key in body)) errors.push(`response missing field '${key}'`);
  }
  if (errors.length) return errors;

  const scores = body.scores;
  const listens = body.listen_counts;
  if (!isRecord(scores) || !isRecord(listens)) {
    return ["scores and listen_counts must be objects keyed by item_id"];
  }
  if (typeof body.rater_id !== "string" || body.rater_id === "") {
    errors.push("rater_id must be non-empty");
  }
  if (body.trial_id !== trialId) {
    errors.push(`unknown trial '${String(body.trial_id)}'`);
  }

  const expected = new Set(expectedItems);
  for (const [name, mapping] of [["scores", scores], ["listen_counts", listens]] as const) {
    const got = new Set(Object.keys(mapping));
    const missing = expectedItems.filter((id) => !got.has(id)).sort();
    const extra = Object.keys(mapping).filter((id) => !expected.has(id)).sort();
    if (missing.length) errors.push(`${name} missing item(s) [${missing.join(", ")}]`);
    if (extra.length) errors.push(`${name} contain unknown item(s) [${extra.join(", ")}]`);
  }
  for (const [itemId, score] of Object.entries(scores)) {
    if (!strictInt(score) || score < 0 || score > 100) {
      errors.push(`score for item '${itemId}' must be an integer in [0, 100]`);
    }
  }
  for (const [itemId, count] of Object.entries(listens)) {
    if (!strictInt(count) || count < 1) {
      errors.push(`listen count for item '${itemId}' must be an integer >= 1`);
    }
  }
  return errors;
}

/** Item ids of the current trial that a server error message mentions.
 * The service names offending items in its 400 detail strings; this is
 * what lets the page highlight exactly the sliders at fault. */
export function itemsNamedIn(detail: string, items: TrialItemRef[]): string[] {
  return items.map((it) => it.item_id).filter((id) => detail.includes(id));
}
