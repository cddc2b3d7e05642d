/**
 * Typed client for the annotation service HTTP API (/api/v1).
 */

export interface Assignment {
  annotator_id: string;
  tuple_id: string;
  texts: string[];
  k: number;
  position: number;
  total: number;
}

export interface JudgmentPayload {
  annotator_id: string;
  tuple_id: string;
  best_index: number;   // 1-based, like the prompt numbering
  worst_index: number;
}

export interface Progress {
  campaign: string;
  annotators: Record<string, { judged: number; total: number }>;
  overall: number;
}

/** Non-2xx response with the service's reason attached. */
export class ApiError extends Error {
  status: number;
  reason: string;

  constructor(status: number, reason: string) {
    super(`HTTP ${status}: ${reason}`);
    this.status = status;
    this.reason = reason;
  }
}

async function reasonOf(res: Response): Promise<string> {
  try {
    const body = await res.json();
    return typeof body.reason === 'string' ? body.reason : res.statusText;
  } catch {
    return res.statusText;
  }
}

/** Next unjudged tuple for this annotator, or 'done' when the slate is empty. */
export async function fetchNext(baseUrl: string, annotator: string): Promise<Assignment | 'done'> {
  const res = await fetch(`${baseUrl}/api/v1/assignments/next?annotator=${encodeURIComponent(annotator)}`);
  if (res.status === 204) return 'done';
  if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
  return (await res.json()) as Assignment;
}

/**
 * Submit one judgment. Resolves on 201 (duplicate=true means the server
 * already had the identical row, which is fine after a queue replay).
 * Throws ApiError on 422, TypeError on network failure.
 */
export async function postJudgment(baseUrl: string, payload: JudgmentPayload): Promise<{ duplicate: boolean }> {
  const res = await fetch(`${baseUrl}/api/v1/judgments`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(payload),
  });
  if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
  const body = await res.json();
  return { duplicate: body.duplicate === true };
}

export async function fetchProgress(baseUrl: string): Promise<Progress> {
  const res = await fetch(`${baseUrl}/api/v1/progress`);
  if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
  return (await res.json()) as Progress;
}

export function exportUrl(baseUrl: string): string {
  return `${baseUrl}/api/v1/export`;
}
