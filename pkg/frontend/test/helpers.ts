import { readFileSync } from "node:fs";
import { join } from "node:path";

import { SessionPayload, parseSessionPayload } from "../src/schema.js";
import { DraftStore } from "../src/state.js";

// vitest runs with the package root as cwd; import.meta.url is useless
// under the jsdom environment because it points into the page origin
export function fixture<T>(name: string): T {
  const path = join(process.cwd(), "test", "fixtures", name);
  return JSON.parse(readFileSync(path, "utf8")) as T;
}

export function sessionFixture(): SessionPayload {
  return parseSessionPayload(fixture("session_payload.json"));
}

/** In-memory stand-in for localStorage. */
export class MemoryStore implements DraftStore {
  private map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.has(key) ? (this.map.get(key) as string) : null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }

  get size(): number {
    return this.map.size;
  }
}

/** jsdom ships HTMLMediaElement stubs that only log "not implemented".
 * Replace them with the event side of real playback so clicking a play
 * button behaves like a browser starting the clip. */
export function stubMediaPlayback(): void {
  HTMLMediaElement.prototype.play = function (this: HTMLMediaElement) {
    this.dispatchEvent(new Event("play"));
    return Promise.resolve();
  };
  HTMLMediaElement.prototype.pause = function (this: HTMLMediaElement) {
    this.dispatchEvent(new Event("pause"));
  };
}
