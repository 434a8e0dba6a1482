/**
 * Screen controllers: bind the API client to the pure state, handling
 * optimistic updates and conflict rollback. DOM-free, so the scripted
 * session tests drive them directly.
 */

import { ApiClient, ConflictError } from "./api.js";
import {
  FinderState,
  LabelQueueState,
  PromotionsState,
  clearBusy,
  emptyFinder,
  emptyLabelQueue,
  emptyPromotions,
  focusedFind,
  focusedTask,
  isActionable,
  markBusy,
  moveFocus,
  removeFindOptimistic,
  removeOptimistic,
  setFindTasks,
  setLabelTasks,
  setPromotions,
  settle,
  settleFind,
} from "./state.js";

export type Listener = () => void;

abstract class Controller {
  private listeners: Listener[] = [];

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  protected emit(): void {
    for (const l of this.listeners) l();
  }
}

export class LabelQueueController extends Controller {
  state: LabelQueueState = emptyLabelQueue();

  constructor(
    readonly api: ApiClient,
    readonly runId: string,
  ) {
    super();
  }

  async refresh(): Promise<void> {
    const tasks = await this.api.getLabelTasks(this.runId);
    this.state = setLabelTasks(this.state, tasks);
    this.emit();
  }

  move(delta: number): void {
    this.state = moveFocus(this.state, delta);
    this.emit();
  }

  /** Digit key on the focused card: optimistic removal, rollback on conflict. */
  async pressDigit(digit: number): Promise<void> {
    const task = focusedTask(this.state);
    if (!task || digit < 0 || digit > 9) return;
    this.state = removeOptimistic(this.state, task.task_id);
    this.emit();
    try {
      await this.api.submitLabel(task.task_id, digit);
      this.state = settle(this.state, task.task_id);
    } catch (err) {
      if (err instanceof ConflictError) {
        this.state = settle(this.state, task.task_id,
          `task ${task.task_id} was already resolved elsewhere`);
        await this.refresh();
      } else {
        // network trouble: restore the card, keep a retry notice
        this.state = settle(this.state, task.task_id, `submit failed: ${String(err)}`);
        await this.refresh();
      }
    }
    this.emit();
  }

  async skip(): Promise<void> {
    const task = focusedTask(this.state);
    if (!task) return;
    this.state = removeOptimistic(this.state, task.task_id);
    this.emit();
    try {
      await this.api.skipLabel(task.task_id);
      this.state = settle(this.state, task.task_id);
    } catch (err) {
      this.state = settle(this.state, task.task_id, `skip failed: ${String(err)}`);
      await this.refresh();
    }
    this.emit();
  }
}

export class FinderController extends Controller {
  state: FinderState = emptyFinder();

  constructor(
    readonly api: ApiClient,
    readonly runId: string,
  ) {
    super();
  }

  async refresh(): Promise<void> {
    const tasks = await this.api.getFindTasks(this.runId);
    this.state = setFindTasks(this.state, tasks);
    this.emit();
  }

  /** Click on candidate k of the focused task. */
  async choose(candidateIndex: number): Promise<void> {
    const task = focusedFind(this.state);
    if (!task) return;
    const candidate = task.candidates[candidateIndex];
    if (!candidate) return;
    this.state = removeFindOptimistic(this.state, task.task_id);
    this.emit();
    try {
      await this.api.submitMatch(task.task_id, candidate.train_index);
      this.state = settleFind(this.state, task.task_id);
    } catch (err) {
      const notice = err instanceof ConflictError
        ? `task ${task.task_id} was already resolved elsewhere`
        : `match failed: ${String(err)}`;
      this.state = settleFind(this.state, task.task_id, notice);
      await this.refresh();
    }
    this.emit();
  }

  async noneMatch(): Promise<void> {
    const task = focusedFind(this.state);
    if (!task) return;
    this.state = removeFindOptimistic(this.state, task.task_id);
    this.emit();
    try {
      await this.api.skipFind(task.task_id);
      this.state = settleFind(this.state, task.task_id);
    } catch (err) {
      this.state = settleFind(this.state, task.task_id, `skip failed: ${String(err)}`);
      await this.refresh();
    }
    this.emit();
  }
}

export class PromotionsController extends Controller {
  state: PromotionsState = emptyPromotions();

  constructor(readonly api: ApiClient) {
    super();
  }

  async refresh(): Promise<void> {
    const [promotions, activeRef] = await Promise.all([
      this.api.getPromotions(),
      this.api.activeModel(),
    ]);
    this.state = setPromotions(this.state, promotions, activeRef);
    this.emit();
  }

  /** Buttons disable after the first click; a second call is a no-op. */
  async resolve(promoId: string, decision: "approved" | "rejected"): Promise<void> {
    if (!isActionable(this.state, promoId)) return;
    this.state = markBusy(this.state, promoId);
    this.emit();
    try {
      await this.api.resolvePromotion(promoId, decision);
    } catch (err) {
      if (!(err instanceof ConflictError)) throw err;
    } finally {
      this.state = clearBusy(this.state, promoId);
    }
    await this.refresh();
  }
}
