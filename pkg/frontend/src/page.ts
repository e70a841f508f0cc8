// DOM construction for one rating trial: a pinned reference player on
// top, one slider row per test item in the order the payload gives them
// (the service already shuffled per rater), and a submit button that
// stays disabled until every item was played and every slider touched.

import { Api } from "./api.js";
import { TrialItemRef } from "./schema.js";
import { TrialState, canSubmit, recordListen, setScore } from "./state.js";

export interface PageHooks {
  onChange(): void;
  onSubmit(): void;
}

export interface ErrorOptions {
  retryLabel?: string;
  onRetry?: () => void;
}

export interface TrialView {
  refresh(): void;
  setBusy(busy: boolean): void;
  showError(message: string, opts?: ErrorOptions): void;
  clearError(): void;
  highlightItems(itemIds: string[]): void;
}

// jsdom and some browsers return undefined from play(); real browsers
// return a promise that rejects when autoplay is blocked. Swallow both.
function safePlay(audio: HTMLAudioElement): void {
  let p: unknown;
  try {
    p = audio.play();
  } catch {
    return;
  }
  if (p && typeof (p as Promise<void>).catch === "function") {
    void (p as Promise<void>).catch(() => undefined);
  }
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Play/pause button plus seek bar for one clip. The audio element itself
 * stays hidden; only these two controls are offered. */
function playerControls(api: Api, clipId: string, onPlay?: () => void): HTMLElement {
  const wrap = el("div", "player");
  const audio = document.createElement("audio");
  audio.preload = "metadata";
  audio.src = api.clipUrl(clipId);
  audio.dataset.clipId = clipId;

  const btn = el("button", "play", "Play");
  btn.type = "button";
  btn.onclick = () => {
    if (audio.paused) safePlay(audio);
    else audio.pause();
  };

  const seek = document.createElement("input");
  seek.type = "range";
  seek.className = "seek";
  seek.min = "0";
  seek.max = "1000";
  seek.value = "0";
  seek.oninput = () => {
    if (Number.isFinite(audio.duration) && audio.duration > 0) {
      audio.currentTime = (Number(seek.value) / 1000) * audio.duration;
    }
  };

  audio.addEventListener("play", () => {
    btn.textContent = "Pause";
    if (onPlay) onPlay();
  });
  audio.addEventListener("pause", () => {
    btn.textContent = "Play";
  });
  audio.addEventListener("ended", () => {
    btn.textContent = "Play";
    seek.value = "0";
  });
  audio.addEventListener("timeupdate", () => {
    if (Number.isFinite(audio.duration) && audio.duration > 0) {
      seek.value = String(Math.round((audio.currentTime / audio.duration) * 1000));
    }
  });

  wrap.append(btn, seek, audio);
  return wrap;
}

function clearBanners(host: HTMLElement): void {
  for (const b of Array.from(host.querySelectorAll(".banner"))) b.remove();
}

function banner(message: string, opts?: ErrorOptions): HTMLElement {
  const div = el("div", "banner", "");
  div.append(el("span", "banner-text", message));
  if (opts?.onRetry) {
    const retry = el("button", "retry", opts.retryLabel ?? "Retry");
    retry.type = "button";
    retry.onclick = opts.onRetry;
    div.append(retry);
  }
  return div;
}

/** Full-page error: wipe everything so no partial form is left behind. */
export function showFatal(root: HTMLElement, message: string, onRetry?: () => void): void {
  root.replaceChildren(banner(message, onRetry ? { onRetry } : undefined));
}

export function showDone(root: HTMLElement, message: string): void {
  root.replaceChildren(el("p", "done", message));
}

export function renderTrial(
  root: HTMLElement,
  st: TrialState,
  api: Api,
  hooks: PageHooks,
  position?: { index: number; total: number },
): TrialView {
  root.replaceChildren();

  const head = el("header", "trial-head");
  const label = position
    ? `Trial ${position.index + 1} of ${position.total}`
    : "Trial";
  head.append(el("h1", "trial-title", label));
  head.append(
    el(
      "p",
      "trial-help",
      "Listen to the reference, then rate how close each item comes to it. " +
        "Play every item and set every slider before submitting.",
    ),
  );
  root.append(head);

  // Reference stays visible above the list while the items scroll.
  const refRow = el("section", "reference");
  refRow.append(el("span", "item-name", "Reference"));
  refRow.append(playerControls(api, st.trial.reference_clip_id));
  root.append(refRow);

  const list = el("div", "items");
  const rows = new Map<string, HTMLElement>();

  st.trial.items.forEach((item: TrialItemRef, k: number) => {
    const row = el("section", "item");
    row.dataset.itemId = item.item_id;

    // Neutral letter labels: nothing in the row may hint at which item
    // is the hidden reference or the anchor.
    row.append(el("span", "item-name", `Item ${String.fromCharCode(65 + (k % 26))}`));
    const counts = el("span", "plays", `plays: ${st.listens[item.item_id]}`);
    row.append(
      playerControls(api, item.clip_id, () => {
        recordListen(st, item.item_id);
        counts.textContent = `plays: ${st.listens[item.item_id]}`;
        hooks.onChange();
        refresh();
      }),
    );
    row.append(counts);

    const slider = document.createElement("input");
    slider.type = "range";
    slider.className = "score";
    slider.min = "0";
    slider.max = "100";
    slider.step = "1";
    slider.value = String(st.scores[item.item_id]);

    const readout = el("output", "score-value", String(st.scores[item.item_id]));
    const rate = () => {
      setScore(st, item.item_id, Number(slider.value));
      readout.textContent = String(st.scores[item.item_id]);
      row.classList.add("touched");
      hooks.onChange();
      refresh();
    };
    slider.addEventListener("input", rate);
    slider.addEventListener("change", rate);
    if (st.touched[item.item_id]) row.classList.add("touched");

    row.append(slider, readout);
    list.append(row);
    rows.set(item.item_id, row);
  });
  root.append(list);

  const foot = el("footer", "trial-foot");
  const errorHost = el("div", "errors");
  const submit = el("button", "submit", "Submit ratings");
  submit.type = "button";
  submit.onclick = () => {
    if (canSubmit(st)) hooks.onSubmit();
  };
  const gateHint = el("p", "gate-hint", "");
  foot.append(errorHost, gateHint, submit);
  root.append(foot);

  function refresh(): void {
    const unplayed = st.trial.items.filter((it) => st.listens[it.item_id] < 1).length;
    const unrated = st.trial.items.filter((it) => !st.touched[it.item_id]).length;
    if (st.submitting) {
      gateHint.textContent = "Submitting...";
    } else if (unplayed || unrated) {
      gateHint.textContent =
        `${unplayed} item(s) not played yet, ${unrated} slider(s) not set yet.`;
    } else {
      gateHint.textContent = "Ready to submit.";
    }
    submit.disabled = !canSubmit(st);
  }

  refresh();

  return {
    refresh,
    setBusy(busy: boolean): void {
      submit.textContent = busy ? "Submitting..." : "Submit ratings";
      refresh();
    },
    showError(message: string, opts?: ErrorOptions): void {
      clearBanners(errorHost);
      errorHost.append(banner(message, opts));
    },
    clearError(): void {
      clearBanners(errorHost);
      for (const row of rows.values()) row.classList.remove("invalid");
    },
    highlightItems(itemIds: string[]): void {
      for (const id of itemIds) rows.get(id)?.classList.add("invalid");
    },
  };
}
