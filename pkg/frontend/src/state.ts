// Pure console state: everything the dashboard shows, derived from the
// status snapshot plus the event stream. No DOM, no network.

import type { CrawlEvent, Status } from "./types.js";

export interface ChallengeCard {
  id: string;
  url: string;
  matchedPattern: string;
  imageRefs: string[];
}

export interface ConsoleState {
  connected: boolean;
  crawlState: string;
  stopReason: string | null;
  market: string;
  identified: number;
  downloaded: number;
  failed: number;
  duplicate: number;
  currentDepth: number;
  elapsedS: number;
  limits: Status["limits"] | null;
  challenges: ChallengeCard[];
  lastEventTs: number | null;
}

export function initialState(): ConsoleState {
  return {
    connected: false,
    crawlState: "idle",
    stopReason: null,
    market: "",
    identified: 0,
    downloaded: 0,
    failed: 0,
    duplicate: 0,
    currentDepth: 0,
    elapsedS: 0,
    limits: null,
    challenges: [],
    lastEventTs: null,
  };
}

function isFreshCrawl(state: ConsoleState, snapshot: Status): boolean {
  return snapshot.state === "idle" || snapshot.state === "starting";
}

/** Fold a full status snapshot in; counters never go backwards mid-crawl. */
export function applyStatus(state: ConsoleState, snapshot: Status): ConsoleState {
  const fresh = isFreshCrawl(state, snapshot);
  return {
    ...state,
    crawlState: snapshot.state,
    stopReason: snapshot.stop_reason,
    market: snapshot.market,
    identified: fresh ? snapshot.pages_identified : Math.max(state.identified, snapshot.pages_identified),
    downloaded: fresh ? snapshot.pages_downloaded : Math.max(state.downloaded, snapshot.pages_downloaded),
    failed: fresh ? snapshot.pages_failed : Math.max(state.failed, snapshot.pages_failed),
    duplicate: fresh ? snapshot.pages_duplicate : Math.max(state.duplicate, snapshot.pages_duplicate),
    currentDepth: snapshot.current_depth,
    elapsedS: snapshot.elapsed_s,
    limits: snapshot.limits,
  };
}

export function applyEvent(state: ConsoleState, event: CrawlEvent): ConsoleState {
  const next = { ...state, challenges: [...state.challenges], lastEventTs: event.ts };
  switch (event.type) {
    case "page": {
      const outcome = String(event.payload.outcome ?? "");
      if (outcome === "downloaded") next.downloaded += 1;
      else if (outcome === "failed") next.failed += 1;
      else if (outcome === "duplicate") next.duplicate += 1;
      const depth = Number(event.payload.depth ?? next.currentDepth);
      next.currentDepth = Math.max(next.currentDepth, depth);
      break;
    }
    case "challenge_opened": {
      const id = String(event.payload.id ?? "");
      if (id && !next.challenges.some((c) => c.id === id)) {
        next.challenges.push({
          id,
          url: String(event.payload.url ?? ""),
          matchedPattern: String(event.payload.matched_pattern ?? ""),
          imageRefs: (event.payload.image_refs as string[]) ?? [],
        });
      }
      break;
    }
    case "challenge_closed": {
      const id = String(event.payload.id ?? "");
      next.challenges = next.challenges.filter((c) => c.id !== id);
      break;
    }
    case "state_change": {
      next.crawlState = String(event.payload.state ?? next.crawlState);
      if (event.payload.stop_reason !== undefined) {
        next.stopReason = event.payload.stop_reason as string | null;
      }
      break;
    }
  }
  return next;
}

export function setConnected(state: ConsoleState, connected: boolean): ConsoleState {
  return { ...state, connected };
}

/** Parse operator input: `field=value` lines, or `cookie:name=value`. */
export function parseSolutionInput(
  raw: string
): { ok: true; solution: { fields?: Record<string, string>; cookie?: { name: string; value: string } } } | { ok: false; error: string } {
  const lines = raw
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (lines.length === 0) {
    return { ok: false, error: "enter field=value lines or cookie:name=value" };
  }
  const fields: Record<string, string> = {};
  for (const line of lines) {
    if (line.startsWith("cookie:")) {
      const rest = line.slice("cookie:".length);
      const eq = rest.indexOf("=");
      if (eq <= 0) return { ok: false, error: "cookie paste must look like cookie:name=value" };
      return {
        ok: true,
        solution: { cookie: { name: rest.slice(0, eq).trim(), value: rest.slice(eq + 1).trim() } },
      };
    }
    const eq = line.indexOf("=");
    if (eq <= 0) return { ok: false, error: `expected field=value, got "${line}"` };
    fields[line.slice(0, eq).trim()] = line.slice(eq + 1).trim();
  }
  return { ok: true, solution: { fields } };
}
