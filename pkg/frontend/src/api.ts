// Thin fetch wrapper around the rating service HTTP API.

import { ResponseBody } from "./schema.js";

export type PostResult =
  | { ok: true; revision: number }
  | { ok: false; status: number; detail: string };

export interface Api {
  getSession(sessionId: string, rater: string): Promise<unknown>;
  postResponse(sessionId: string, body: ResponseBody): Promise<PostResult>;
  clipUrl(clipId: string): string;
}

export function makeApi(base = ""): Api {
  return {
    async getSession(sessionId: string, rater: string): Promise<unknown> {
      const url =
        `${base}/api/sessions/${encodeURIComponent(sessionId)}` +
        `?rater=${encodeURIComponent(rater)}`;
      const res = await fetch(url);
      if (!res.ok) {
        throw new Error(`session request failed with status ${res.status}`);
      }
      return res.json();
    },

    async postResponse(sessionId: string, body: ResponseBody): Promise<PostResult> {
      const url = `${base}/api/sessions/${encodeURIComponent(sessionId)}/responses`;
      const res = await fetch(url, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
      if (res.ok) {
        const reply = (await res.json()) as { revision?: number };
        return { ok: true, revision: reply.revision ?? 1 };
      }
      let detail = `status ${res.status}`;
      try {
        const err = (await res.json()) as { detail?: unknown };
        if (typeof err.detail === "string") detail = err.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      return { ok: false, status: res.status, detail };
    },

    clipUrl(clipId: string): string {
      return `${base}/api/clips/${encodeURIComponent(clipId)}`;
    },
  };
}
