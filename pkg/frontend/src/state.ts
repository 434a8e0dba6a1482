/**
 * Pure screen state. The server state is authoritative; these structures only
 * track what is currently displayed plus in-flight optimistic removals.
 */

import type { FindTask, LabelTask, Promotion } from "./api.js";

export interface LabelQueueState {
  pending: LabelTask[];
  focus: number;
  inFlight: Set<string>;
  notice: string | null;
}

export function emptyLabelQueue(): LabelQueueState {
  return { pending: [], focus: 0, inFlight: new Set(), notice: null };
}

/** Server refresh: pending tasks in rank order, minus optimistic removals. */
export function setLabelTasks(state: LabelQueueState, tasks: LabelTask[]): LabelQueueState {
  const pending = tasks
    .filter((t) => t.status === "pending" && !state.inFlight.has(t.task_id))
    .sort((a, b) => a.rank - b.rank);
  const focus = Math.min(state.focus, Math.max(pending.length - 1, 0));
  return { ...state, pending, focus };
}

export function focusedTask(state: LabelQueueState): LabelTask | null {
  return state.pending[state.focus] ?? null;
}

export function moveFocus(state: LabelQueueState, delta: number): LabelQueueState {
  if (state.pending.length === 0) return state;
  const focus = Math.min(Math.max(state.focus + delta, 0), state.pending.length - 1);
  return { ...state, focus };
}

/** Optimistic removal when a submission goes out. */
export function removeOptimistic(state: LabelQueueState, taskId: string): LabelQueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.add(taskId);
  const pending = state.pending.filter((t) => t.task_id !== taskId);
  const focus = Math.min(state.focus, Math.max(pending.length - 1, 0));
  return { ...state, pending, focus, inFlight, notice: null };
}

/** The submission settled server-side (success or terminal conflict). */
export function settle(state: LabelQueueState, taskId: string, notice: string | null = null): LabelQueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(taskId);
  return { ...state, inFlight, notice };
}

export interface FinderState {
  pending: FindTask[];
  focus: number;
  inFlight: Set<string>;
  notice: string | null;
}

export function emptyFinder(): FinderState {
  return { pending: [], focus: 0, inFlight: new Set(), notice: null };
}

export function setFindTasks(state: FinderState, tasks: FindTask[]): FinderState {
  const pending = tasks
    .filter((t) => t.status === "pending" && !state.inFlight.has(t.task_id))
    .sort((a, b) => a.rank - b.rank);
  const focus = Math.min(state.focus, Math.max(pending.length - 1, 0));
  return { ...state, pending, focus };
}

export function focusedFind(state: FinderState): FindTask | null {
  return state.pending[state.focus] ?? null;
}

export function removeFindOptimistic(state: FinderState, taskId: string): FinderState {
  const inFlight = new Set(state.inFlight);
  inFlight.add(taskId);
  const pending = state.pending.filter((t) => t.task_id !== taskId);
  const focus = Math.min(state.focus, Math.max(pending.length - 1, 0));
  return { ...state, pending, focus, inFlight, notice: null };
}

export function settleFind(state: FinderState, taskId: string, notice: string | null = null): FinderState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(taskId);
  return { ...state, inFlight, notice };
}

export interface PromotionsState {
  pending: Promotion[];
  history: Promotion[];
  busy: Set<string>; // resolution posted, response not yet back
  activeRef: string | null;
}

export function emptyPromotions(): PromotionsState {
  return { pending: [], history: [], busy: new Set(), activeRef: null };
}

export function setPromotions(
  state: PromotionsState,
  promotions: Promotion[],
  activeRef: string | null,
): PromotionsState {
  return {
    ...state,
    pending: promotions.filter((p) => p.decision === "pending"),
    history: promotions.filter((p) => p.decision !== "pending"),
    activeRef,
  };
}

export function markBusy(state: PromotionsState, promoId: string): PromotionsState {
  const busy = new Set(state.busy);
  busy.add(promoId);
  return { ...state, busy };
}

export function clearBusy(state: PromotionsState, promoId: string): PromotionsState {
  const busy = new Set(state.busy);
  busy.delete(promoId);
  return { ...state, busy };
}

export function isActionable(state: PromotionsState, promoId: string): boolean {
  return !state.busy.has(promoId) && state.pending.some((p) => p.promo_id === promoId);
}
