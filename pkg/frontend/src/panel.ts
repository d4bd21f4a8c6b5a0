import { ApiClient, ApiError } from "./api.js";
import { debounce } from "./debounce.js";
import { LatestGate } from "./latest.js";
import {
  ATTRIBUTE_NAMES,
  clamp01,
  type AttributeName,
  type Attrs,
  type CounterfactualReport,
  type SweepResponse,
} from "./types.js";

export interface ViewState {
  seed: number;
  attrs: Attrs;
  /** Attrs the current image/prediction were computed for, or null before first load. */
  shownAttrs: Attrs | null;
  prediction: number | null;
  imageDataUrl: string | null;
  targetStress: number;
  report: CounterfactualReport | null;
  beforeImageDataUrl: string | null;
  afterImageDataUrl: string | null;
  sweep: SweepResponse | null;
  liveBusy: boolean;
  solveBusy: boolean;
  sweepBusy: boolean;
  toast: string | null;
}

const DEBOUNCE_MS = 150;
const RESOLUTION = 64;
const SWEEP_GRID = Array.from({ length: 9 }, (_, i) => 0.1 + (0.8 * i) / 8);

/**
 * Headless controller for the knob panel: owns the view state, talks to the
 * HTTP API, and guarantees the shown prediction always matches the shown
 * attrs (stale responses are dropped via monotone request ids).
 */
export class Panel {
  private state: ViewState;
  private readonly liveGate = new LatestGate<{
    image: string;
    stress: number;
    attrs: Attrs;
    seed: number;
  }>();
  private readonly sweepGate = new LatestGate<SweepResponse>();
  private readonly listeners = new Set<(s: ViewState) => void>();
  private readonly scheduleRefresh: { (): void; flush(): void; cancel(): void };

  constructor(
    private readonly api: ApiClient,
    seed = 42,
  ) {
    this.state = {
      seed,
      attrs: { size: 0.5, porosity: 0.5, dispersity: 0.5, facetness: 0.5 },
      shownAttrs: null,
      prediction: null,
      imageDataUrl: null,
      targetStress: 140,
      report: null,
      beforeImageDataUrl: null,
      afterImageDataUrl: null,
      sweep: null,
      liveBusy: false,
      solveBusy: false,
      sweepBusy: false,
      toast: null,
    };
    this.scheduleRefresh = debounce(() => void this.refreshLive(), DEBOUNCE_MS);
  }

  getState(): ViewState {
    return this.state;
  }

  subscribe(listener: (s: ViewState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Slider movement: clamp, store, and debounce one refresh per burst. */
  onKnobChange(name: AttributeName, value: number): void {
    this.update({ attrs: { ...this.state.attrs, [name]: clamp01(value) } });
    this.scheduleRefresh();
  }

  onSeedChange(seed: number): void {
    this.update({ seed: Math.max(0, Math.round(seed)) });
    this.scheduleRefresh();
  }

  onTargetChange(target: number): void {
    this.update({ targetStress: target });
  }

  /** Fire the pending debounced refresh immediately (initial load, tests). */
  flush(): void {
    this.scheduleRefresh.flush();
  }

  /** Fetch image + prediction for the current attrs; drop if superseded. */
  async refreshLive(): Promise<void> {
    const { seed, attrs } = this.state;
    this.update({ liveBusy: true });
    try {
      const result = await this.liveGate.run(async (signal) => {
        const [rendered, predicted] = await Promise.all([
          this.api.render(seed, attrs, RESOLUTION, signal),
          this.api.predict(seed, attrs, signal),
        ]);
        return { image: rendered.image, stress: predicted.stress, attrs, seed };
      });
      if (result === null) return; // a newer request owns the display now
      this.update({
        imageDataUrl: `data:image/png;base64,${result.image}`,
        prediction: result.stress,
        shownAttrs: result.attrs,
        liveBusy: false,
        toast: null,
      });
    } catch (err) {
      // keep the previous (still internally consistent) display
      this.update({ liveBusy: false, toast: describeError(err) });
    }
  }

  async solveCounterfactual(): Promise<void> {
    const { seed, attrs, targetStress } = this.state;
    this.update({ solveBusy: true });
    try {
      const report = await this.api.counterfactual({
        seed,
        attrs,
        target_stress: targetStress,
      });
      const [before, after] = await Promise.all([
        this.api.render(seed, report.initial_attrs, RESOLUTION),
        this.api.render(seed, report.final_attrs, RESOLUTION),
      ]);
      this.update({
        report,
        beforeImageDataUrl: `data:image/png;base64,${before.image}`,
        afterImageDataUrl: `data:image/png;base64,${after.image}`,
        solveBusy: false,
        toast: null,
      });
    } catch (err) {
      this.update({ solveBusy: false, toast: describeError(err) });
    }
  }

  /** Copy the counterfactual's final attrs into the sliders and re-predict. */
  applyCounterfactual(): void {
    const report = this.state.report;
    if (report === null) return;
    this.update({ attrs: { ...report.final_attrs } });
    this.scheduleRefresh();
    this.scheduleRefresh.flush();
  }

  async showSweep(attrIndex: number): Promise<void> {
    const { seed, attrs } = this.state;
    this.update({ sweepBusy: true });
    try {
      const sweep = await this.sweepGate.run((signal) =>
        this.api.sweep(seed, attrs, attrIndex, SWEEP_GRID, signal),
      );
      if (sweep === null) return;
      this.update({ sweep, sweepBusy: false, toast: null });
    } catch (err) {
      this.update({ sweepBusy: false, toast: describeError(err) });
    }
  }

  dismissToast(): void {
    this.update({ toast: null });
  }
}

export function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? err.message : `${err.status} ${err.code}: ${err.message}`;
  }
  return String(err);
}

export { ATTRIBUTE_NAMES };
