// DOM layer: renders ConsoleState into the static page and wires forms to
// the API client. All crawl logic lives server-side; this only displays.

import type { ApiClient, SubmitOutcome } from "./api.js";
import type { ConsoleState } from "./state.js";
import { parseSolutionInput } from "./state.js";

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`console markup is missing ${selector}`);
  return node as T;
}

function fmtLimit(done: number, limit: number | null | undefined, unit = ""): string {
  if (limit === null || limit === undefined) return `${done}${unit} / unlimited`;
  return `${done}${unit} / ${limit}${unit}`;
}

function barWidth(done: number, limit: number | null | undefined): string {
  if (!limit) return "0%";
  return `${Math.min(100, (100 * done) / limit).toFixed(1)}%`;
}

export class Dashboard {
  private readonly counters: Record<string, HTMLElement>;
  private readonly stateBadge: HTMLElement;
  private readonly staleBanner: HTMLElement;
  private readonly challengeList: HTMLElement;
  private readonly toast: HTMLElement;

  constructor(private readonly root: ParentNode, private readonly api: ApiClient) {
    this.counters = {
      identified: el(root, "#counter-identified"),
      downloaded: el(root, "#counter-downloaded"),
      failed: el(root, "#counter-failed"),
      duplicate: el(root, "#counter-duplicate"),
      depth: el(root, "#counter-depth"),
      elapsed: el(root, "#counter-elapsed"),
      pending: el(root, "#counter-pending"),
    };
    this.stateBadge = el(root, "#crawl-state");
    this.staleBanner = el(root, "#stale-banner");
    this.challengeList = el(root, "#challenges");
    this.toast = el(root, "#toast");
    this.wireControls();
  }

  private wireControls(): void {
    for (const action of ["pause", "resume", "stop"] as const) {
      el<HTMLButtonElement>(this.root, `#btn-${action}`).addEventListener("click", () => {
        this.api.control(action).catch((err) => this.showToast(String(err), true));
      });
    }
    const cookieForm = el<HTMLFormElement>(this.root, "#cookie-form");
    cookieForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const name = el<HTMLInputElement>(cookieForm, "input[name=cookie-name]").value.trim();
      const value = el<HTMLInputElement>(cookieForm, "input[name=cookie-value]").value.trim();
      if (!name) {
        this.showToast("cookie needs a name", true);
        return;
      }
      this.api
        .addCookie(name, value)
        .then(() => this.showToast(`cookie ${name} queued for the jar`, false))
        .catch((err) => this.showToast(String(err), true));
    });
  }

  render(state: ConsoleState): void {
    this.counters.identified.textContent = String(state.identified);
    this.counters.downloaded.textContent = String(state.downloaded);
    this.counters.failed.textContent = String(state.failed);
    this.counters.duplicate.textContent = String(state.duplicate);
    this.counters.depth.textContent = String(state.currentDepth);
    this.counters.elapsed.textContent = `${state.elapsedS.toFixed(1)}s`;
    this.counters.pending.textContent = String(state.challenges.length);

    this.stateBadge.textContent = state.stopReason
      ? `${state.crawlState} (${state.stopReason})`
      : state.crawlState;
    this.stateBadge.dataset.state = state.crawlState;
    this.staleBanner.hidden = state.connected;

    this.renderLimits(state);
    this.renderChallenges(state);
  }

  private renderLimits(state: ConsoleState): void {
    const limits = state.limits;
    const rows: Array<[string, string, string]> = limits
      ? [
          ["links", fmtLimit(state.downloaded, limits.max_links), barWidth(state.downloaded, limits.max_links)],
          ["time", fmtLimit(Math.round(state.elapsedS), limits.time_limit_s, "s"), barWidth(state.elapsedS, limits.time_limit_s)],
          ["depth", fmtLimit(state.currentDepth, limits.max_depth), barWidth(state.currentDepth, limits.max_depth)],
          ["targets", fmtLimit(limits.targets_done, limits.targets_total || null), barWidth(limits.targets_done, limits.targets_total)],
        ]
      : [];
    const container = el(this.root as ParentNode, "#limits");
    container.innerHTML = "";
    for (const [label, text, width] of rows) {
      const row = document.createElement("div");
      row.className = "limit-row";
      row.innerHTML =
        `<span class="limit-label">${label}</span>` +
        `<span class="limit-text">${text}</span>` +
        `<span class="limit-bar"><span class="limit-fill" style="width:${width}"></span></span>`;
      container.appendChild(row);
    }
  }

  private renderChallenges(state: ConsoleState): void {
    const seen = new Set(state.challenges.map((c) => c.id));
    for (const card of Array.from(this.challengeList.children)) {
      if (!seen.has((card as HTMLElement).dataset.id ?? "")) card.remove();
    }
    for (const challenge of state.challenges) {
      if (this.challengeList.querySelector(`[data-id="${challenge.id}"]`)) continue;
      this.challengeList.appendChild(this.buildChallengeCard(challenge));
    }
    el(this.root, "#no-challenges").toggleAttribute("hidden", state.challenges.length > 0);
  }

  private buildChallengeCard(challenge: { id: string; url: string; matchedPattern: string; imageRefs: string[] }): HTMLElement {
    const card = document.createElement("div");
    card.className = "challenge";
    card.dataset.id = challenge.id;
    const images = challenge.imageRefs
      .map((ref) => `<img src="${ref}" alt="challenge image">`)
      .join("");
    card.innerHTML =
      `<h3>${challenge.id}</h3>` +
      `<p class="challenge-url">${challenge.url}</p>` +
      `<p class="challenge-pattern">matched: ${challenge.matchedPattern}</p>` +
      `<div class="challenge-images">${images}</div>` +
      `<textarea rows="3" placeholder="answer=...  (or cookie:name=value)"></textarea>` +
      `<p class="challenge-error" hidden></p>` +
      `<button type="button">Submit solution</button>`;
    const button = card.querySelector("button")!;
    const textarea = card.querySelector("textarea")!;
    const errorLine = card.querySelector(".challenge-error") as HTMLElement;
    button.addEventListener("click", () => {
      const parsed = parseSolutionInput(textarea.value);
      if (!parsed.ok) {
        errorLine.textContent = parsed.error;
        errorLine.hidden = false;
        return;
      }
      errorLine.hidden = true;
      this.api.submitSolution(challenge.id, parsed.solution).then((outcome) => {
        this.reportSubmit(challenge.id, outcome, errorLine);
      });
    });
    return card;
  }

  private reportSubmit(id: string, outcome: SubmitOutcome, errorLine: HTMLElement): void {
    switch (outcome.kind) {
      case "ok":
        this.showToast(`solution for ${id} accepted`, false);
        break;
      case "unknown":
        this.showToast(`unknown challenge ${id}`, true);
        break;
      case "conflict":
        this.showToast(`challenge ${id}: ${outcome.message}`, true);
        break;
      case "invalid":
        errorLine.textContent = outcome.message;
        errorLine.hidden = false;
        break;
    }
  }

  showToast(message: string, isError: boolean): void {
    this.toast.textContent = message;
    this.toast.classList.toggle("error", isError);
    this.toast.hidden = false;
    setTimeout(() => {
      this.toast.hidden = true;
    }, 4000);
  }
}
