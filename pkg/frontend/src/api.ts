/**
 * Typed client for the feedback-service endpoints.
 *
 * Every UI action maps to exactly one call here; the server is the only
 * source of truth.
 */

export type LabelStatus = "pending" | "labeled" | "skipped";
export type FindStatus = "pending" | "matched" | "skipped";
export type Decision = "pending" | "approved" | "rejected";

export interface LabelTask {
  task_id: string;
  run_id: string;
  origin_index: number;
  rank: number;
  status: LabelStatus;
  label: number | null;
}

export interface FindCandidate {
  train_index: number;
  distance: number;
}

export interface FindTask {
  task_id: string;
  run_id: string;
  origin_index: number;
  rank: number;
  status: FindStatus;
  match_index: number | null;
  candidates: FindCandidate[];
}

export interface Promotion {
  promo_id: string;
  run_id: string;
  old_model_ref: string;
  new_model_ref: string;
  old_q: number;
  new_q: number;
  delta: number;
  decision: Decision;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message);
  }
}

export class ConflictError extends ApiError {}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let kind = "";
    let message = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string; message?: string };
      kind = body.error ?? "";
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    if (resp.status === 409) throw new ConflictError(resp.status, kind, message);
    throw new ApiError(resp.status, kind, message);
  }
  return (await resp.json()) as T;
}

function post<T>(url: string, payload: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

export class ApiClient {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async getLabelTasks(runId: string, status?: LabelStatus): Promise<LabelTask[]> {
    const qs = status ? `?status=${status}` : "";
    const out = await request<{ tasks: LabelTask[] }>(
      this.url(`/runs/${runId}/label-tasks${qs}`),
    );
    return out.tasks;
  }

  submitLabel(taskId: string, label: number): Promise<LabelTask> {
    return post(this.url(`/label-tasks/${taskId}`), { label });
  }

  skipLabel(taskId: string): Promise<LabelTask> {
    return post(this.url(`/label-tasks/${taskId}`), { skip: true });
  }

  labelImageUrl(taskId: string): string {
    return this.url(`/label-tasks/${taskId}/image.png`);
  }

  async getFindTasks(runId: string, status?: FindStatus): Promise<FindTask[]> {
    const qs = status ? `?status=${status}` : "";
    const out = await request<{ tasks: FindTask[] }>(
      this.url(`/runs/${runId}/find-tasks${qs}`),
    );
    return out.tasks;
  }

  submitMatch(taskId: string, trainIndex: number): Promise<FindTask> {
    return post(this.url(`/find-tasks/${taskId}`), { match_index: trainIndex });
  }

  skipFind(taskId: string): Promise<FindTask> {
    return post(this.url(`/find-tasks/${taskId}`), { skip: true });
  }

  findImageUrl(taskId: string): string {
    return this.url(`/find-tasks/${taskId}/image.png`);
  }

  candidateImageUrl(taskId: string, index: number): string {
    return this.url(`/find-tasks/${taskId}/candidates/${index}/image.png`);
  }

  async getPromotions(decision?: Decision): Promise<Promotion[]> {
    const qs = decision ? `?decision=${decision}` : "";
    const out = await request<{ promotions: Promotion[] }>(
      this.url(`/promotions${qs}`),
    );
    return out.promotions;
  }

  resolvePromotion(promoId: string, decision: "approved" | "rejected"): Promise<Promotion> {
    return post(this.url(`/promotions/${promoId}`), { decision });
  }

  async activeModel(): Promise<string | null> {
    const out = await request<{ ref: string | null }>(this.url("/active-model"));
    return out.ref;
  }
}
