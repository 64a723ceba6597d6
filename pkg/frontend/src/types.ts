// Wire formats of the engine's control/event API.

export interface StopLimits {
  max_depth: number | null;
  max_links: number | null;
  time_limit_s: number | null;
  targets_total: number;
  targets_done: number;
}

export interface Status {
  state: string;
  market: string;
  pages_identified: number;
  pages_downloaded: number;
  pages_failed: number;
  pages_duplicate: number;
  current_depth: number;
  elapsed_s: number;
  pending_challenges: number;
  stop_reason: string | null;
  limits: StopLimits;
}

export interface Challenge {
  id: string;
  url: string;
  matched_pattern: string;
  page_excerpt: string;
  image_refs: string[];
  created_at: number;
  state: string;
  form_fields: string[];
}

export type EventType = "page" | "challenge_opened" | "challenge_closed" | "state_change";

export interface CrawlEvent {
  type: EventType;
  ts: number;
  payload: Record<string, unknown>;
}

export interface SolutionInput {
  fields?: Record<string, string>;
  cookie?: { name: string; value: string };
}
