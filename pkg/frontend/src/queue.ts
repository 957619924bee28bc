/**
 * Offline retry queue for label submissions.
 *
 * Delivery contract: a record reaches the server exactly once per submit.
 * Network failures (the POST never reached the server) queue the record for
 * the next flush; HTTP rejections (the server saw it and said no) are
 * surfaced to the caller and never retried — retrying a 400 forever would
 * wedge the queue behind a poison record.
 */

import type { LabelRecord } from "./types.js";

export interface PostResult {
  ok: boolean;
  status: number;
  error?: string;
}

/** Throws on network failure; resolves with the HTTP outcome otherwise. */
export type PostFn = (record: LabelRecord) => Promise<PostResult>;

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export interface SubmitOutcome {
  delivered: boolean;
  queued: boolean;
  error?: string;
}

export interface FlushOutcome {
  delivered: number;
  rejected: Array<{ record: LabelRecord; error: string }>;
  stillQueued: number;
}

export class OfflineQueue {
  private records: LabelRecord[] = [];
  private flushing = false;

  constructor(
    private post: PostFn,
    private storage: StorageLike | null = null,
    private storageKey = "spectrees.pending-labels",
  ) {
    if (this.storage) {
      try {
        this.records = JSON.parse(this.storage.getItem(this.storageKey) ?? "[]");
      } catch {
        this.records = [];
      }
    }
  }

  pending(): LabelRecord[] {
    return [...this.records];
  }

  private persist(): void {
    this.storage?.setItem(this.storageKey, JSON.stringify(this.records));
  }

  /** POST now; queue only when the request never reached the server. */
  async submit(record: LabelRecord): Promise<SubmitOutcome> {
    let result: PostResult;
    try {
      result = await this.post(record);
    } catch {
      this.records.push(record);
      this.persist();
      return { delivered: false, queued: true };
    }
    if (result.ok) return { delivered: true, queued: false };
    return { delivered: false, queued: false, error: result.error ?? `HTTP ${result.status}` };
  }

  /**
   * Retry queued records in submission order. Stops at the first network
   * failure (still offline); drops and reports records the server rejects.
   */
  async flush(): Promise<FlushOutcome> {
    if (this.flushing) return { delivered: 0, rejected: [], stillQueued: this.records.length };
    this.flushing = true;
    const rejected: FlushOutcome["rejected"] = [];
    let delivered = 0;
    try {
      while (this.records.length > 0) {
        const record = this.records[0];
        let result: PostResult;
        try {
          result = await this.post(record);
        } catch {
          break; // still offline; keep the record at the head
        }
        this.records.shift();
        if (result.ok) {
          delivered += 1;
        } else {
          rejected.push({ record, error: result.error ?? `HTTP ${result.status}` });
        }
        this.persist();
      }
    } finally {
      this.flushing = false;
      this.persist();
    }
    return { delivered, rejected, stillQueued: this.records.length };
  }
}
