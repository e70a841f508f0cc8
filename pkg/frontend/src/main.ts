// Entry point: load the session named in the query string, walk the
// rater through its trials one at a time, and post each completed trial
// to the service. Drafts live in localStorage keyed by session, rater
// and trial, so a mid-trial reload picks up where the rater left off.

import { Api, makeApi } from "./api.js";
import { SessionPayload, itemsNamedIn, parseSessionPayload } from "./schema.js";
import {
  DraftStore,
  buildResponse,
  canSubmit,
  clearDraft,
  loadDraft,
  newTrialState,
  saveDraft,
  validateOutgoing,
} from "./state.js";
import { TrialView, renderTrial, showDone, showFatal } from "./page.js";

export interface BootOptions {
  api?: Api;
  store?: DraftStore;
  sessionId?: string;
  raterId?: string;
}

export async function init(root: HTMLElement, opts: BootOptions = {}): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const sessionId = opts.sessionId ?? params.get("session") ?? "";
  const raterId = opts.raterId ?? params.get("rater") ?? "";
  const api = opts.api ?? makeApi("");
  const store = opts.store ?? window.localStorage;

  if (!sessionId || !raterId) {
    showFatal(
      root,
      "Missing session or rater id. Open this page as ?session=<id>&rater=<your id>.",
    );
    return;
  }

  let payload: SessionPayload;
  try {
    payload = parseSessionPayload(await api.getSession(sessionId, raterId));
  } catch (err) {
    const reason = err instanceof Error ? err.message : String(err);
    showFatal(root, `Could not load the listening test: ${reason}`, () => {
      void init(root, opts);
    });
    return;
  }
  if (payload.trials.length === 0) {
    showFatal(root, "This session contains no trials.");
    return;
  }
  runTrial(root, api, store, payload, 0);
}

function runTrial(
  root: HTMLElement,
  api: Api,
  store: DraftStore,
  payload: SessionPayload,
  index: number,
): void {
  if (index >= payload.trials.length) {
    showDone(root, "All trials submitted. Thank you for rating.");
    return;
  }
  const trial = payload.trials[index];
  if (trial.items.length === 0) {
    showFatal(root, `Trial ${trial.trial_id} has no items to rate.`);
    return;
  }

  const st = newTrialState(payload.session_id, payload.rater_id, trial);
  loadDraft(st, store);

  let view: TrialView;

  const submit = async (): Promise<void> => {
    if (!canSubmit(st)) return;
    view.clearError();
    // The same checks the service runs; a body that fails here is a bug,
    // not something to bounce off the network.
    const problems = validateOutgoing(st);
    if (problems.length) {
      view.showError(problems[0]);
      return;
    }
    st.submitting = true;
    view.setBusy(true);
    try {
      const result = await api.postResponse(payload.session_id, buildResponse(st));
      st.submitting = false;
      view.setBusy(false);
      if (result.ok) {
        st.submitted = true;
        clearDraft(st, store);
        runTrial(root, api, store, payload, index + 1);
        return;
      }
      view.showError(result.detail);
      view.highlightItems(itemsNamedIn(result.detail, trial.items));
    } catch {
      // Network failure: keep the draft and offer another go.
      st.submitting = false;
      view.setBusy(false);
      view.showError(
        "Could not reach the service. Your ratings are kept on this device.",
        { retryLabel: "Retry", onRetry: () => void submit() },
      );
    }
  };

  view = renderTrial(
    root,
    st,
    api,
    {
      onChange: () => saveDraft(st, store),
      onSubmit: () => void submit(),
    },
    { index, total: payload.trials.length },
  );
}

const appRoot = typeof document !== "undefined" ? document.getElementById("app") : null;
if (appRoot) {
  void init(appRoot);
}
