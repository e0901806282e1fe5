/** UI session state for one bound project.
 *
 * The service owns all authoritative state: a session is rebuilt entirely
 * from `GET /map` and `GET /history`, so a page refresh (or a second tab)
 * reproduces the same sliders. Slider moves update the UI optimistically,
 * go to the server through a debounced single-in-flight sender, and are
 * reconciled against the measured `slider_state` the server returns; a
 * rejected edit rolls the sliders back and pins the server's error message
 * to the slider that caused it.
 */

import {
  ApiClient,
  ApiError,
  AttributeMapInfo,
  GenerationRecord,
  HistoryEntry,
} from "./api.js";
import { DebouncedSender } from "./debounce.js";

export type PreviewMode = "depth" | "mesh" | "overlay";
export type ConnectionState = "ok" | "offline";

export interface SliderRange {
  min: number;
  max: number;
}

export interface SliderView {
  name: string;
  value: number;
  min: number;
  max: number;
  dirty: boolean;
  error: string | null;
}

/** Corpus min/max stretched by 20% of the span at each end. */
export function sliderRanges(map: AttributeMapInfo): Record<string, SliderRange> {
  const ranges: Record<string, SliderRange> = {};
  map.names.forEach((name, i) => {
    const lo = map.attr_min[i];
    const hi = map.attr_max[i];
    const pad = 0.2 * (hi - lo);
    ranges[name] = { min: lo - pad, max: hi + pad };
  });
  return ranges;
}

export class Session {
  readonly values: Record<string, number> = {};
  readonly ranges: Record<string, SliderRange>;
  readonly errors: Record<string, string | null> = {};
  previewMode: PreviewMode = "depth";
  connection: ConnectionState = "ok";
  historyIndex: number;
  entries: HistoryEntry[];
  generations: GenerationRecord[];
  /** Generation selected for the right comparison pane (latest by default). */
  comparisonIndex: number | null = null;

  private confirmed: Record<string, number> = {};
  private readonly sender: DebouncedSender<Record<string, number>>;
  private readonly listeners: Array<() => void> = [];

  constructor(
    readonly api: ApiClient,
    readonly projectId: string,
    map: AttributeMapInfo,
    entries: HistoryEntry[],
    generations: GenerationRecord[] = [],
    debounceMs = 150,
  ) {
    if (entries.length === 0) {
      throw new Error("project has no fit yet; import one before binding the UI");
    }
    this.ranges = sliderRanges(map);
    this.entries = [...entries];
    this.generations = [...generations];
    const latest = this.entries[this.entries.length - 1];
    this.historyIndex = latest.index;
    for (const name of map.names) {
      const value = latest.slider_state[name] ?? 0;
      this.values[name] = value;
      this.confirmed[name] = value;
      this.errors[name] = null;
    }
    if (this.generations.length > 0) {
      this.comparisonIndex = this.generations[this.generations.length - 1].index;
    }
    this.sender = new DebouncedSender(
      (edits) => this.submit(edits),
      (pending, incoming) => ({ ...(pending ?? {}), ...incoming }),
      debounceMs,
    );
  }

  /** Fetch map + history and build a live session. */
  static async bind(api: ApiClient, projectId: string, debounceMs = 150): Promise<Session> {
    const map = await api.getMap();
    const history = await api.getHistory(projectId);
    return new Session(api, projectId, map, history.entries, history.generations, debounceMs);
  }

  onUpdate(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  sliders(): SliderView[] {
    return Object.keys(this.values).map((name) => ({
      name,
      value: this.values[name],
      min: this.ranges[name].min,
      max: this.ranges[name].max,
      dirty: this.values[name] !== this.confirmed[name],
      error: this.errors[name],
    }));
  }

  /** Optimistic slider move; the server call is debounced and coalesced. */
  setSlider(name: string, value: number): void {
    const range = this.ranges[name];
    if (range !== undefined) {
      value = Math.min(Math.max(value, range.min), range.max);
    }
    this.values[name] = value;
    this.errors[name] = null;
    this.notify();
    this.sender.change({ [name]: value });
  }

  setPreviewMode(mode: PreviewMode): void {
    this.previewMode = mode;
    this.notify();
  }

  selectGeneration(index: number): void {
    this.comparisonIndex = index;
    this.notify();
  }

  /** Resolves when no slider request is pending or in flight. */
  settle(): Promise<void> {
    return this.sender.settle();
  }

  get sliderRequestInFlight(): boolean {
    return this.sender.inFlight;
  }

  private async submit(edits: Record<string, number>): Promise<void> {
    try {
      const response = await this.api.applySliders(this.projectId, edits);
      this.historyIndex = response.history_index;
      const stillPending = this.sender.pendingPayload ?? {};
      for (const [name, value] of Object.entries(response.slider_state)) {
        // A slider the user moved again while this request was on the wire
        // keeps its optimistic value; the follow-up request reconciles it.
        if (name in this.values && !(name in stillPending)) {
          this.values[name] = value;
        }
        this.confirmed[name] = value;
      }
      const history = await this.api.getHistory(this.projectId);
      this.entries = history.entries;
      this.generations = history.generations;
      this.connection = "ok";
    } catch (error) {
      if (error instanceof ApiError) {
        // Validation failure: roll the optimistic values back and pin the
        // verbatim server message to the sliders that were in the payload.
        for (const name of Object.keys(edits)) {
          if (name in this.confirmed) this.values[name] = this.confirmed[name];
          this.errors[name] = error.message;
        }
      } else {
        this.connection = "offline";
      }
    } finally {
      this.notify();
    }
  }

  async triggerGeneration(
    prompt: string,
    params?: Record<string, unknown>,
  ): Promise<GenerationRecord> {
    const record = await this.api.generate(this.projectId, {
      prompt,
      params,
      history_index: this.historyIndex,
    });
    this.generations = [...this.generations, record];
    this.comparisonIndex = record.index;
    this.notify();
    return record;
  }
}
