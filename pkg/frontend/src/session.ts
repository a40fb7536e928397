/** Review session state machine: upload, filter, query, select, validate.
 *
 * Deliberately DOM-free so the flow can be tested headless and driven
 * end-to-end against a live service. The DOM layer subscribes via
 * onChange and calls the methods below; every piece of rendered state is
 * reconstructible from (inputs, last API responses).
 */

import { ApiClient, ApiRequestError } from "./api.js";
import type { AnnotationRecord, ApiError, KeywordVote, QueryResult } from "./types.js";

export const DEFAULT_THRESHOLD = 8.0;
export const DEFAULT_TOP_K = 5;

export class ReviewSession {
  imageId: string | null = null;
  duplicateOf: string | null = null;
  pointCount = 0;

  specialty: string | null = null;
  className: string | null = null;
  subClass: string | null = null;
  threshold = DEFAULT_THRESHOLD;
  topK = DEFAULT_TOP_K;
  variant: "mh" | "h" = "mh";

  results: QueryResult[] = [];
  votes: KeywordVote[] = [];
  hasQueried = false;
  emptyCorpus = false;

  selection: string | null = null;
  draftKeywords: string[] = [];
  storedRecord: AnnotationRecord | null = null;

  lastError: ApiError | null = null;
  busy = false;

  private listeners: Array<() => void> = [];

  constructor(private readonly api: ApiClient) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  dismissError(): void {
    this.lastError = null;
    this.emit();
  }

  /** Wrap an API call: busy flag, error surfacing, single emit. */
  private async run<T>(action: () => Promise<T>): Promise<T | null> {
    this.busy = true;
    this.lastError = null;
    this.emit();
    try {
      return await action();
    } catch (error) {
      if (error instanceof ApiRequestError) {
        this.lastError = { code: error.code, message: error.message };
        return null;
      }
      this.lastError = { code: "NETWORK", message: String(error) };
      return null;
    } finally {
      this.busy = false;
      this.emit();
    }
  }

  async upload(data: Blob | Uint8Array, filename: string): Promise<boolean> {
    const response = await this.run(() => this.api.uploadImage(data, filename));
    if (response === null) return false;
    this.imageId = response.image_id;
    this.duplicateOf = response.duplicate_of ?? null;
    this.pointCount = response.point_count;
    this.results = [];
    this.votes = [];
    this.hasQueried = false;
    this.emptyCorpus = false;
    this.selection = null;
    this.draftKeywords = [];
    this.storedRecord = null;
    this.emit();
    return true;
  }

  setFilter(specialty: string | null, className: string | null = null, subClass: string | null = null): void {
    this.specialty = specialty;
    this.className = className;
    this.subClass = subClass;
    this.emit();
  }

  get canQuery(): boolean {
    return this.imageId !== null && this.specialty !== null && !this.busy;
  }

  async runQuery(): Promise<boolean> {
    if (this.imageId === null || this.specialty === null) return false;
    const imageId = this.imageId;
    const specialty = this.specialty;
    const response = await this.run(async () => {
      try {
        return await this.api.query({
          image_id: imageId,
          specialty,
          class_name: this.className ?? undefined,
          sub_class: this.subClass ?? undefined,
          variant: this.variant,
          top_k: this.topK,
          threshold: this.threshold,
        });
      } catch (error) {
        // an empty candidate set is a designed state, not an error toast
        if (error instanceof ApiRequestError && error.code === "EMPTY_CORPUS") {
          return { results: [], votes: [] };
        }
        throw error;
      }
    });
    if (response === null) return false;
    this.results = response.results;
    this.votes = response.votes;
    this.hasQueried = true;
    this.emptyCorpus = response.results.length === 0;
    const first = response.results[0];
    if (this.selection !== null && !response.results.some((r) => r.image_id === this.selection)) {
      this.selection = null;
      this.draftKeywords = [];
    }
    if (this.selection === null && first !== undefined && first.distance === 0) {
      // exact duplicate of a corpus image: pre-highlight it
      this.select(first.image_id);
    }
    this.emit();
    return true;
  }

  /** The threshold slider: store, then re-query so accepted badges update. */
  async setThreshold(threshold: number): Promise<void> {
    this.threshold = threshold;
    if (this.hasQueried && this.imageId !== null && this.specialty !== null) {
      await this.runQuery();
    } else {
      this.emit();
    }
  }

  select(imageId: string): void {
    const candidate = this.results.find((r) => r.image_id === imageId);
    if (candidate === undefined) return;
    this.selection = imageId;
    this.draftKeywords = this.prefillDraft(candidate);
    this.emit();
  }

  /** Candidate's own keywords first (deduplicated), then top-vote keywords. */
  private prefillDraft(candidate: QueryResult): string[] {
    const draft: string[] = [];
    for (const record of candidate.annotations) {
      for (const keyword of record.keywords) {
        if (!draft.includes(keyword)) draft.push(keyword);
      }
    }
    for (const vote of this.votes) {
      if (!draft.includes(vote.keyword)) draft.push(vote.keyword);
    }
    return draft;
  }

  setDraft(keywords: string[]): void {
    this.draftKeywords = keywords;
    this.emit();
  }

  get canValidate(): boolean {
    return (
      this.selection !== null &&
      this.imageId !== null &&
      this.draftKeywords.some((keyword) => keyword.trim().length > 0) &&
      !this.busy
    );
  }

  async validate(physicianId: string): Promise<AnnotationRecord | null> {
    if (this.imageId === null || this.selection === null) return null;
    const imageId = this.imageId;
    const selection = this.selection;
    const keywords = this.draftKeywords.filter((keyword) => keyword.trim().length > 0);
    const record = await this.run(() =>
      this.api.annotate({
        image_id: imageId,
        selected_image_id: selection,
        physician_id: physicianId,
        keywords,
      }),
    );
    if (record === null) return null; // e.g. 422 INVALID_RECORD: draft stays editable
    this.storedRecord = record;
    this.emit();
    return record;
  }

  /** "Annotate another": keep the filter and threshold, clear the rest. */
  reset(): void {
    this.imageId = null;
    this.duplicateOf = null;
    this.pointCount = 0;
    this.results = [];
    this.votes = [];
    this.hasQueried = false;
    this.emptyCorpus = false;
    this.selection = null;
    this.draftKeywords = [];
    this.storedRecord = null;
    this.lastError = null;
    this.emit();
  }
}
