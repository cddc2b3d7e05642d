/**
 * Offline judgment queue.
 *
 * Judgments that fail to POST (network down, server restarting) are kept
 * in localStorage and replayed in order on the next flush. The service
 * accepts identical duplicates idempotently, so a flush that dies halfway
 * can simply run again. A 422 during replay means the server already has
 * a different judgment for that tuple; the server wins and the queued row
 * is dropped with a warning.
 */

import { JudgmentPayload, postJudgment, ApiError } from './api.js';

const STORAGE_KEY = 'bwsq-queue/v1';

type StorageLike = Pick<Storage, 'getItem' | 'setItem' | 'removeItem'>;

export function loadQueue(storage: StorageLike): JudgmentPayload[] {
  const raw = storage.getItem(STORAGE_KEY);
  if (!raw) return [];
  try {
    const parsed = JSON.parse(raw);
    return Array.isArray(parsed) ? parsed : [];
  } catch {
    // a corrupt queue is unrecoverable; better to start clean than to wedge
    storage.removeItem(STORAGE_KEY);
    return [];
  }
}

function saveQueue(storage: StorageLike, queue: JudgmentPayload[]): void {
  if (queue.length === 0) {
    storage.removeItem(STORAGE_KEY);
  } else {
    storage.setItem(STORAGE_KEY, JSON.stringify(queue));
  }
}

export function enqueue(storage: StorageLike, payload: JudgmentPayload): number {
  const queue = loadQueue(storage);
  queue.push(payload);
  saveQueue(storage, queue);
  return queue.length;
}

export function queueLength(storage: StorageLike): number {
  return loadQueue(storage).length;
}

export interface FlushResult {
  sent: number;
  dropped: number;     // server had a conflicting judgment, server wins
  remaining: number;   // still offline, left in the queue
}

/** Replay the queue in order; stops at the first network failure. */
export async function flushQueue(baseUrl: string, storage: StorageLike): Promise<FlushResult> {
  let queue = loadQueue(storage);
  let sent = 0;
  let dropped = 0;
  while (queue.length > 0) {
    const head = queue[0];
    try {
      await postJudgment(baseUrl, head);
      sent += 1;
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        console.warn(`queued judgment for ${head.tuple_id} rejected: ${error.reason}`);
        dropped += 1;
      } else {
        break;   // still offline; keep the queue as is
      }
    }
    queue = queue.slice(1);
    saveQueue(storage, queue);
  }
  return { sent, dropped, remaining: queue.length };
}
