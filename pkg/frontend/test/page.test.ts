import { beforeAll, beforeEach, describe, expect, it, vi } from "vitest";

import { Api } from "../src/api.js";
import { renderTrial, showDone, showFatal } from "../src/page.js";
import { TrialState, newTrialState } from "../src/state.js";
import { sessionFixture, stubMediaPlayback } from "./helpers.js";

const session = sessionFixture();
const trial = session.trials[0];
const ids = trial.items.map((it) => it.item_id);

const api: Api = {
  getSession: () => Promise.reject(new Error("not used here")),
  postResponse: () => Promise.reject(new Error("not used here")),
  clipUrl: (clipId: string) => `/api/clips/${clipId}`,
};

function mount(st?: TrialState) {
  const root = document.createElement("main");
  document.body.replaceChildren(root);
  const state = st ?? newTrialState(session.session_id, session.rater_id, trial);
  const hooks = { onChange: vi.fn(), onSubmit: vi.fn() };
  const view = renderTrial(root, state, api, hooks, { index: 0, total: 2 });
  return { root, state, hooks, view };
}

function itemRows(root: HTMLElement): HTMLElement[] {
  return Array.from(root.querySelectorAll<HTMLElement>(".item"));
}

function playAll(root: HTMLElement): void {
  for (const row of itemRows(root)) {
    row.querySelector<HTMLButtonElement>("button.play")!.click();
  }
}

function rateAll(root: HTMLElement, value = 50): void {
  for (const row of itemRows(root)) {
    const slider = row.querySelector<HTMLInputElement>("input.score")!;
    slider.value = String(value);
    slider.dispatchEvent(new Event("input"));
  }
}

beforeAll(() => {
  stubMediaPlayback();
});

beforeEach(() => {
  document.body.replaceChildren();
});

describe("trial layout", () => {
  it("pins the reference row above the items", () => {
    const { root } = mount();
    const sections = Array.from(root.querySelectorAll("section"));
    expect(sections[0].className).toBe("reference");
    expect(sections.slice(1).every((s) => s.classList.contains("item"))).toBe(true);
  });

  it("gives the reference a player but no slider", () => {
    const { root } = mount();
    const ref = root.querySelector<HTMLElement>(".reference")!;
    expect(ref.querySelector("button.play")).not.toBeNull();
    expect(ref.querySelector("input.score")).toBeNull();
    const audio = ref.querySelector("audio")!;
    expect(audio.getAttribute("src")).toBe(`/api/clips/${trial.reference_clip_id}`);
  });

  it("renders items in payload order with neutral labels", () => {
    const { root } = mount();
    const rows = itemRows(root);
    expect(rows.map((r) => r.dataset.itemId)).toEqual(ids);
    for (const row of rows) {
      const text = row.textContent ?? "";
      expect(text).toMatch(/Item [A-Z]/);
      // nothing may hint at which item is which
      expect(text.toLowerCase()).not.toMatch(/reference|anchor|hidden|cond/);
    }
  });

  it("offers play, pause and seek but no other audio controls", () => {
    const { root } = mount();
    const row = itemRows(root)[0];
    expect(row.querySelector("button.play")).not.toBeNull();
    expect(row.querySelector("input.seek")).not.toBeNull();
    const audio = row.querySelector("audio")!;
    expect(audio.hasAttribute("controls")).toBe(false);
  });

  it("starts every slider at zero", () => {
    const { root } = mount();
    for (const row of itemRows(root)) {
      expect(row.querySelector<HTMLInputElement>("input.score")!.value).toBe("0");
    }
  });
});

describe("submission gate", () => {
  it("keeps submit disabled until everything is played and rated", () => {
    const { root } = mount();
    const submit = root.querySelector<HTMLButtonElement>("button.submit")!;
    expect(submit.disabled).toBe(true);
    rateAll(root);
    expect(submit.disabled).toBe(true);
    playAll(root);
    expect(submit.disabled).toBe(false);
  });

  it("counts plays per item through the play button", () => {
    const { root, state } = mount();
    const row = itemRows(root)[1];
    const btn = row.querySelector<HTMLButtonElement>("button.play")!;
    btn.click();
    btn.click();
    expect(state.listens[ids[1]]).toBe(2);
    expect(row.querySelector(".plays")!.textContent).toBe("plays: 2");
  });

  it("fires onSubmit only when the gate is open", () => {
    const { root, hooks } = mount();
    const submit = root.querySelector<HTMLButtonElement>("button.submit")!;
    submit.click();
    expect(hooks.onSubmit).not.toHaveBeenCalled();
    playAll(root);
    rateAll(root, 64);
    submit.click();
    expect(hooks.onSubmit).toHaveBeenCalledTimes(1);
  });

  it("reports drafts through onChange as the rater works", () => {
    const { root, hooks } = mount();
    playAll(root);
    rateAll(root);
    expect(hooks.onChange).toHaveBeenCalled();
  });

  it("shows the busy label while a submission runs", () => {
    const { root, state, view } = mount();
    playAll(root);
    rateAll(root);
    state.submitting = true;
    view.setBusy(true);
    const submit = root.querySelector<HTMLButtonElement>("button.submit")!;
    expect(submit.disabled).toBe(true);
    expect(submit.textContent).toContain("Submitting");
  });
});

describe("error display", () => {
  it("highlights only the sliders a 400 names", () => {
    const { root, view } = mount();
    rateAll(root, 30);
    view.showError(`score for item '${ids[2]}' must be an integer in [0, 100]`);
    view.highlightItems([ids[2]]);
    const rows = itemRows(root);
    expect(rows[2].classList.contains("invalid")).toBe(true);
    for (const k of [0, 1, 3]) {
      expect(rows[k].classList.contains("invalid")).toBe(false);
      expect(rows[k].querySelector<HTMLInputElement>("input.score")!.value).toBe("30");
    }
    expect(root.querySelector(".banner")!.textContent).toContain(ids[2]);
  });

  it("clearError removes banners and highlights", () => {
    const { root, view } = mount();
    view.showError("nope");
    view.highlightItems([ids[0]]);
    view.clearError();
    expect(root.querySelector(".banner")).toBeNull();
    expect(itemRows(root)[0].classList.contains("invalid")).toBe(false);
  });

  it("offers a retry action on request", () => {
    const { root, view } = mount();
    const onRetry = vi.fn();
    view.showError("Could not reach the service.", { retryLabel: "Retry", onRetry });
    const retry = root.querySelector<HTMLButtonElement>(".banner button.retry")!;
    expect(retry.textContent).toBe("Retry");
    retry.click();
    expect(onRetry).toHaveBeenCalledTimes(1);
  });

  it("showFatal leaves a banner and no form behind", () => {
    const { root } = mount();
    showFatal(root, "bad payload");
    expect(root.querySelector(".banner")).not.toBeNull();
    expect(root.querySelector("input.score")).toBeNull();
    expect(root.querySelector("button.submit")).toBeNull();
  });

  it("showDone replaces the page with a completion note", () => {
    const { root } = mount();
    showDone(root, "All trials submitted.");
    expect(root.querySelector(".done")!.textContent).toContain("All trials");
    expect(root.querySelector("button.submit")).toBeNull();
  });
});

describe("draft restore", () => {
  it("renders restored values and keeps the gate honest", () => {
    const st = newTrialState(session.session_id, session.rater_id, trial);
    st.scores[ids[0]] = 72;
    st.touched[ids[0]] = true;
    st.listens[ids[0]] = 2;
    const { root } = mount(st);
    const rows = itemRows(root);
    expect(rows[0].querySelector<HTMLInputElement>("input.score")!.value).toBe("72");
    expect(rows[0].classList.contains("touched")).toBe(true);
    expect(rows[0].querySelector(".plays")!.textContent).toBe("plays: 2");
    // the other items still owe a listen and a touch
    expect(root.querySelector<HTMLButtonElement>("button.submit")!.disabled).toBe(true);
  });
});
