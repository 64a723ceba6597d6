// HTTP client for the engine's control/event API. Strictly a consumer:
// every console action is exactly one API call.

import type { Challenge, CrawlEvent, SolutionInput, Status } from "./types.js";

export type SubmitOutcome =
  | { kind: "ok" }
  | { kind: "unknown" }
  | { kind: "conflict"; message: string }
  | { kind: "invalid"; message: string };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init)
  ) {}

  async status(): Promise<Status> {
    const resp = await this.fetchFn(`${this.base}/api/status`);
    if (!resp.ok) throw new Error(`status endpoint returned ${resp.status}`);
    return (await resp.json()) as Status;
  }

  async challenges(): Promise<Challenge[]> {
    const resp = await this.fetchFn(`${this.base}/api/challenges`);
    if (!resp.ok) throw new Error(`challenges endpoint returned ${resp.status}`);
    const doc = (await resp.json()) as { challenges: Challenge[] };
    return doc.challenges;
  }

  async submitSolution(challengeId: string, input: SolutionInput): Promise<SubmitOutcome> {
    const hasFields = input.fields && Object.keys(input.fields).length > 0;
    if (Boolean(hasFields) === Boolean(input.cookie)) {
      return { kind: "invalid", message: "provide exactly one of fields / cookie" };
    }
    const resp = await this.fetchFn(
      `${this.base}/api/challenges/${encodeURIComponent(challengeId)}/solution`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(input),
      }
    );
    if (resp.status === 200) return { kind: "ok" };
    if (resp.status === 404) return { kind: "unknown" };
    if (resp.status === 409) {
      const doc = await resp.json().catch(() => ({ error: "conflict" }));
      return { kind: "conflict", message: String(doc.error ?? "conflict") };
    }
    const doc = await resp.json().catch(() => ({ error: `http ${resp.status}` }));
    return { kind: "invalid", message: String(doc.error ?? `http ${resp.status}`) };
  }

  async control(action: "pause" | "resume" | "stop"): Promise<void> {
    const resp = await this.fetchFn(`${this.base}/api/control`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ action }),
    });
    if (!resp.ok) throw new Error(`control ${action} returned ${resp.status}`);
  }

  async addCookie(name: string, value: string): Promise<void> {
    const resp = await this.fetchFn(`${this.base}/api/cookies`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ name, value }),
    });
    if (!resp.ok) throw new Error(`cookie injection returned ${resp.status}`);
  }
}

export interface EventStreamHandlers {
  onEvent: (event: CrawlEvent) => void;
  onConnected: () => void;
  onDisconnected: () => void;
}

type EventSourceFactory = (url: string) => EventSource;

/** Subscribe to /api/events; the browser EventSource retries on its own. */
export function connectEvents(
  base: string,
  handlers: EventStreamHandlers,
  makeSource: EventSourceFactory = (url) => new EventSource(url)
): () => void {
  const source = makeSource(`${base}/api/events`);
  source.onopen = () => handlers.onConnected();
  source.onerror = () => handlers.onDisconnected();
  source.onmessage = (message) => {
    try {
      handlers.onEvent(JSON.parse(message.data) as CrawlEvent);
    } catch {
      // malformed frame: ignore, the stream keeps going
    }
  };
  return () => source.close();
}
