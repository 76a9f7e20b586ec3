// Review-session state: which queue item is on screen, what is already
// annotated, and whether the phase can advance. No label mapping happens
// here beyond the default *suggestion* (entailment->1, contradiction->2,
// neutral->3); the server computes actual nli/verdict values.

import type { QueueItem } from "./types.js";

export const CASE_DESCRIPTIONS: Record<number, string> = {
  1: "consistent (same statement)",
  2: "inconsistent (conflicting statement)",
  3: "unrelated",
  4: "related, first happens before second",
  5: "related, second happens before first",
  6: "first carries more detail",
  7: "second carries more detail",
};

const SUGGESTION_BY_LABEL: Record<string, number> = {
  entailment: 1,
  contradiction: 2,
  neutral: 3,
};

export function suggestedCase(label: string): number {
  // finer cases 4..7 are never auto-suggested
  return SUGGESTION_BY_LABEL[label] ?? 3;
}

export interface ReviewSession {
  phase: number;
  items: QueueItem[];
  cursor: number;
  annotatedIds: Set<string>;
}

export function newSession(phase: number, items: QueueItem[]): ReviewSession {
  const annotatedIds = new Set(items.filter((i) => i.annotated).map((i) => i.pair_id));
  return { phase, items, cursor: firstPending(items, annotatedIds), annotatedIds };
}

function firstPending(items: QueueItem[], annotated: Set<string>): number {
  const index = items.findIndex((item) => !annotated.has(item.pair_id));
  return index === -1 ? items.length : index;
}

export function currentItem(session: ReviewSession): QueueItem | null {
  return session.cursor < session.items.length ? session.items[session.cursor] : null;
}

export function annotatedCount(session: ReviewSession): number {
  return session.annotatedIds.size;
}

export function pendingCount(session: ReviewSession): number {
  return session.items.length - session.annotatedIds.size;
}

export function progressText(session: ReviewSession): string {
  return `${annotatedCount(session)}/${session.items.length}`;
}

export function canAdvance(session: ReviewSession): boolean {
  return pendingCount(session) === 0;
}

export function markAnnotated(session: ReviewSession, pairId: string): ReviewSession {
  const annotatedIds = new Set(session.annotatedIds);
  annotatedIds.add(pairId);
  const next = { ...session, annotatedIds };
  // auto-advance to the next pending item
  next.cursor = firstPendingFrom(next, session.cursor);
  return next;
}

function firstPendingFrom(session: ReviewSession, start: number): number {
  const n = session.items.length;
  for (let step = 0; step < n; step++) {
    const index = (start + step) % n;
    if (!session.annotatedIds.has(session.items[index].pair_id)) {
      return index;
    }
  }
  return n;
}
