// DOM console for the annotation and triage workflow. Renders straight
// from server payloads (text byte-identical, no client-side label logic)
// and maps keyboard keys 1..7 to case submissions.

import { ApiClient, ApiError } from "./api.js";
import {
  CASE_DESCRIPTIONS,
  ReviewSession,
  annotatedCount,
  canAdvance,
  currentItem,
  markAnnotated,
  newSession,
  progressText,
  suggestedCase,
} from "./state.js";
import type { ResultsResponse } from "./types.js";

type Retryable = () => Promise<void>;

export class AnnotatorApp {
  private session: ReviewSession | null = null;
  private busy = false;
  private lastAction: Retryable | null = null;
  private keyHandler = (event: KeyboardEvent) => this.onKey(event);

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private annotator: string,
  ) {}

  async start(): Promise<void> {
    document.addEventListener("keydown", this.keyHandler);
    await this.refresh();
  }

  stop(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  async refresh(): Promise<void> {
    await this.guard(async () => {
      const project = await this.api.project();
      const status = project.phase_state.status;
      if (status === "awaiting_annotation") {
        const queue = await this.api.queue(project.phase_state.current_phase);
        this.session = newSession(queue.phase, queue.items);
        this.renderReview();
      } else if (status === "finished") {
        const results = await this.api.results("inconsistent");
        this.renderTriage(results);
      } else {
        this.session = null;
        this.renderIdle(project.phase_label);
      }
    });
  }

  // ------------------------------------------------------------------
  private async guard(action: Retryable): Promise<void> {
    this.lastAction = action;
    try {
      await action();
      this.clearError();
    } catch (error) {
      this.showError(error);
    }
  }

  private async onKey(event: KeyboardEvent): Promise<void> {
    if (!this.session || this.busy) return;
    const caseNumber = Number(event.key);
    if (caseNumber >= 1 && caseNumber <= 7) {
      await this.submitCase(caseNumber);
    }
  }

  async submitCase(caseNumber: number): Promise<void> {
    const session = this.session;
    const item = session ? currentItem(session) : null;
    if (!session || !item) return;
    this.busy = true;
    try {
      await this.guard(async () => {
        const response = await this.api.annotate(item.pair_id, caseNumber, this.annotator);
        this.session = markAnnotated(session, item.pair_id);
        this.renderReview(`${response.nli} / ${response.verdict}`);
      });
    } finally {
      this.busy = false;
    }
  }

  async advancePhase(): Promise<void> {
    this.busy = true;
    try {
      await this.guard(async () => {
        const advanced = await this.api.advancePhase();
        if (advanced.status === "awaiting_annotation" && advanced.next_phase !== null) {
          const queue = await this.api.queue(advanced.next_phase);
          this.session = newSession(queue.phase, queue.items);
          this.renderReview(this.reportSummary(advanced.report));
        } else {
          this.session = null;
          const results = await this.api.results("inconsistent");
          this.renderTriage(results, this.reportSummary(advanced.report));
        }
      });
    } finally {
      this.busy = false;
    }
  }

  async triagePair(pairId: string, status: "confirmed" | "context_fp"): Promise<void> {
    await this.guard(async () => {
      await this.api.triage(pairId, status);
      const results = await this.api.results("inconsistent");
      this.renderTriage(results);
    });
  }

  private reportSummary(report: Record<string, unknown> | null): string {
    if (!report) return "";
    const metrics = report["metrics_ensemble"] as Record<string, number> | undefined;
    if (!metrics) return "";
    const accuracy = (metrics["accuracy"] ?? 0).toFixed(3);
    const f1 = (metrics["macro_f1"] ?? 0).toFixed(3);
    return `phase ${report["phase_index"]} done: accuracy ${accuracy}, macro-F1 ${f1}`;
  }

  // ------------------------------------------------------------------
  private renderIdle(phaseLabel: string): void {
    this.root.innerHTML = `
      <header class="bar"><h1>speclint review</h1></header>
      <p data-testid="idle">Project is in state <strong>${escapeHtml(phaseLabel)}</strong>.
      Nothing to review right now.</p>
      <div data-testid="error" class="error" hidden></div>`;
  }

  private renderReview(notice = ""): void {
    const session = this.session;
    if (!session) return;
    const item = currentItem(session);
    const done = annotatedCount(session);
    const total = session.items.length;
    const percent = total ? Math.round((100 * done) / total) : 0;

    const itemHtml = item
      ? `
      <section class="pair">
        <article class="segment" data-testid="segment-a">
          <h3>${escapeHtml(item.segment_a.section_path)}</h3>
          <p>${escapeHtml(item.segment_a.text)}</p>
        </article>
        <article class="segment" data-testid="segment-b">
          <h3>${escapeHtml(item.segment_b.section_path)}</h3>
          <p>${escapeHtml(item.segment_b.text)}</p>
        </article>
      </section>
      <p data-testid="prediction">model: <strong>${escapeHtml(item.model_prediction.label)}</strong>
        (confidence ${item.model_prediction.confidence.toFixed(2)}, psi ${item.psi.toFixed(2)})</p>
      <div class="cases" data-testid="cases">
        ${[1, 2, 3, 4, 5, 6, 7]
          .map(
            (c) => `<button data-case="${c}"
              class="${c === suggestedCase(item.model_prediction.label) ? "suggested" : ""}"
              title="${escapeHtml(CASE_DESCRIPTIONS[c])}">${c}</button>`,
          )
          .join("")}
      </div>`
      : `<p data-testid="queue-done">Queue complete.</p>`;

    this.root.innerHTML = `
      <header class="bar">
        <h1>phase ${session.phase} review</h1>
        <div class="progress" data-testid="progress">${progressText(session)}</div>
        <div class="progress-track"><div class="progress-fill" style="width:${percent}%"></div></div>
      </header>
      ${notice ? `<p class="notice" data-testid="notice">${escapeHtml(notice)}</p>` : ""}
      ${itemHtml}
      <button data-testid="advance" ${canAdvance(session) ? "" : "disabled"}>Advance phase</button>
      <div data-testid="error" class="error" hidden></div>`;

    this.root.querySelectorAll<HTMLButtonElement>("button[data-case]").forEach((button) => {
      button.addEventListener("click", () => this.submitCase(Number(button.dataset.case)));
    });
    const advance = this.root.querySelector<HTMLButtonElement>('[data-testid="advance"]');
    advance?.addEventListener("click", () => this.advancePhase());
  }

  private renderTriage(results: ResultsResponse, notice = ""): void {
    const rows = results.items
      .map(
        (item) => `
        <li class="result" data-pair="${escapeHtml(item.pair_id)}">
          <span class="conf">${item.confidence.toFixed(3)}</span>
          <span class="status" data-testid="status-${escapeHtml(item.pair_id)}">${escapeHtml(item.status)}</span>
          <p>${escapeHtml(item.segment_a.text)}</p>
          <p>${escapeHtml(item.segment_b.text)}</p>
          <button data-triage="confirmed">Confirmed</button>
          <button data-triage="context_fp">Context-FP</button>
        </li>`,
      )
      .join("");
    this.root.innerHTML = `
      <header class="bar"><h1>triage results</h1>
        <div data-testid="triage-summary">confirmed: ${results.confirmed} / context-fp: ${results.context_fp}</div>
      </header>
      ${notice ? `<p class="notice" data-testid="notice">${escapeHtml(notice)}</p>` : ""}
      <ul class="results" data-testid="results">${rows}</ul>
      <div data-testid="error" class="error" hidden></div>`;

    this.root.querySelectorAll<HTMLLIElement>("li.result").forEach((row) => {
      const pairId = row.dataset.pair!;
      row.querySelectorAll<HTMLButtonElement>("button[data-triage]").forEach((button) => {
        button.addEventListener("click", () =>
          this.triagePair(pairId, button.dataset.triage as "confirmed" | "context_fp"),
        );
      });
    });
  }

  private showError(error: unknown): void {
    const banner = this.root.querySelector<HTMLElement>('[data-testid="error"]');
    if (!banner) return;
    const text =
      error instanceof ApiError
        ? `${error.code}: ${error.body.message}`
        : `request failed: ${String(error)}`;
    banner.hidden = false;
    banner.innerHTML = `<span>${escapeHtml(text)}</span> <button data-testid="retry">Retry</button>`;
    banner
      .querySelector('[data-testid="retry"]')
      ?.addEventListener("click", () => this.lastAction && this.guard(this.lastAction));
  }

  private clearError(): void {
    const banner = this.root.querySelector<HTMLElement>('[data-testid="error"]');
    if (banner) banner.hidden = true;
  }
}

function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
