import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "./api.js";
import { Panel } from "./panel.js";
import type { Attrs, CounterfactualReport } from "./types.js";

const MID: Attrs = { size: 0.5, porosity: 0.5, dispersity: 0.5, facetness: 0.5 };

interface MockController {
  client: ApiClient;
  /** stress returned for given attrs; override per test */
  stressFor: (attrs: Attrs) => number;
  delays: { predict?: number };
  report: CounterfactualReport | null;
  failAll: boolean;
  requests: string[];
}

function reportFor(seed: number, attrs: Attrs, target: number): CounterfactualReport {
  const final: Attrs = { ...attrs, size: Math.max(0, attrs.size - 0.2) };
  return {
    schema_version: 1,
    seed,
    initial_attrs: attrs,
    final_attrs: final,
    deltas: {
      size: final.size - attrs.size,
      porosity: 0.05,
      dispersity: 0.02,
      facetness: 0.01,
    },
    initial_prediction: 140,
    target,
    achieved_prediction: target - 0.5,
    objective_trajectory: [1, 0.5, 0.25],
    iterations: 3,
    converged: true,
    config: { lambda: 1, norm_order: 2, step_size: 0.05, max_iters: 300, tol: 1e-7 },
  };
}

function mockApi(): MockController {
  const ctl: MockController = {
    client: null as unknown as ApiClient,
    stressFor: (attrs) => 100 + 40 * (1 - attrs.size) + 25 * attrs.porosity,
    delays: {},
    report: null,
    failAll: false,
    requests: [],
  };
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const path = new URL(url).pathname;
    ctl.requests.push(path);
    if (ctl.failAll) throw new TypeError("fetch failed");
    const body = init?.body ? (JSON.parse(String(init.body)) as Record<string, unknown>) : {};
    const respond = (payload: unknown) =>
      new Response(JSON.stringify(payload), { status: 200 });

    if (path === "/render") {
      return respond({ api_version: 1, image: `png-${JSON.stringify(body.attrs)}`, width: 64, height: 64 });
    }
    if (path === "/predict") {
      const attrs = body.attrs as Attrs;
      const stress = ctl.stressFor(attrs);
      const delay = ctl.delays.predict ?? 0;
      if (delay > 0) await new Promise((r) => setTimeout(r, delay));
      return respond({ api_version: 1, stress });
    }
    if (path === "/sweep") {
      const grid = body.grid as number[];
      const attrs = body.attrs as Attrs;
      const index = body.attr_index as number;
      const names = ["size", "porosity", "dispersity", "facetness"] as const;
      const predictions = grid.map((g) =>
        ctl.stressFor({ ...attrs, [names[index] as string]: g } as Attrs),
      );
      return respond({
        api_version: 1,
        attr_index: index,
        attr_name: names[index],
        grid,
        predictions,
        fixed_attrs: attrs,
      });
    }
    if (path === "/counterfactual") {
      ctl.report = reportFor(body.seed as number, body.attrs as Attrs, body.target_stress as number);
      return respond(ctl.report);
    }
    return new Response(JSON.stringify({ api_version: 1, code: "not_found", message: path }), {
      status: 404,
    });
  }) as typeof fetch;
  ctl.client = new ApiClient("http://test", fetchFn);
  return ctl;
}

describe("Panel", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  async function settle(): Promise<void> {
    await vi.runAllTimersAsync();
  }

  it("knob change debounces to one live refresh per burst", async () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    panel.onKnobChange("size", 0.2);
    panel.onKnobChange("size", 0.3);
    panel.onKnobChange("size", 0.4);
    await settle();
    expect(ctl.requests.filter((p) => p === "/predict")).toHaveLength(1);
    expect(panel.getState().attrs.size).toBe(0.4);
    expect(panel.getState().prediction).toBeCloseTo(ctl.stressFor(panel.getState().attrs));
  });

  it("never displays a prediction for attrs other than the shown ones", async () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    ctl.delays.predict = 50; // slow first answer
    panel.onKnobChange("size", 0.1);
    panel.flush();
    ctl.delays.predict = 0; // fast second answer overtakes
    panel.onKnobChange("size", 0.9);
    panel.flush();
    await settle();
    const state = panel.getState();
    expect(state.shownAttrs).not.toBeNull();
    expect(state.shownAttrs!.size).toBe(0.9);
    expect(state.prediction).toBeCloseTo(ctl.stressFor(state.shownAttrs!));
  });

  it("random slow/fast interleavings keep prediction consistent with attrs", async () => {
    for (let trial = 0; trial < 20; trial++) {
      const ctl = mockApi();
      const panel = new Panel(ctl.client, 1);
      const moves = 4;
      for (let i = 0; i < moves; i++) {
        ctl.delays.predict = ((trial * 31 + i * 17) % 5) * 20;
        panel.onKnobChange("porosity", (i + 1) / 10);
        panel.flush();
      }
      await settle();
      const state = panel.getState();
      expect(state.shownAttrs).toEqual(state.attrs);
      expect(state.prediction).toBeCloseTo(ctl.stressFor(state.attrs));
    }
  });

  it("knob values clamp into [0, 1]", () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    panel.onKnobChange("facetness", 1.7);
    expect(panel.getState().attrs.facetness).toBe(1);
    panel.onKnobChange("facetness", -0.4);
    expect(panel.getState().attrs.facetness).toBe(0);
  });

  it("API failure shows a toast and keeps the previous display", async () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    panel.onKnobChange("size", 0.3);
    await settle();
    const shownBefore = panel.getState().prediction;
    ctl.failAll = true;
    panel.onKnobChange("size", 0.8);
    await settle();
    const state = panel.getState();
    expect(state.toast).toBeTruthy();
    expect(state.prediction).toBe(shownBefore);
    expect(state.shownAttrs!.size).toBe(0.3); // display still self-consistent
  });

  it("counterfactual solve stores report and before/after images", async () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    panel.onTargetChange(160);
    await panel.solveCounterfactual();
    const state = panel.getState();
    expect(state.report).not.toBeNull();
    expect(state.report!.target).toBe(160);
    expect(state.beforeImageDataUrl).toContain("data:image/png;base64,");
    expect(state.afterImageDataUrl).toContain("data:image/png;base64,");
  });

  it("apply copies final attrs into the sliders and re-predicts", async () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    await panel.solveCounterfactual();
    panel.applyCounterfactual();
    await settle();
    const state = panel.getState();
    expect(state.attrs).toEqual(state.report!.final_attrs);
    expect(state.shownAttrs).toEqual(state.report!.final_attrs);
    expect(state.prediction).toBeCloseTo(ctl.stressFor(state.report!.final_attrs));
  });

  it("sweep returns nine points from one request and slopes down in size", async () => {
    const ctl = mockApi();
    const panel = new Panel(ctl.client, 1);
    await panel.showSweep(0);
    const sweep = panel.getState().sweep;
    expect(sweep).not.toBeNull();
    expect(sweep!.grid).toHaveLength(9);
    expect(sweep!.predictions).toHaveLength(9);
    expect(ctl.requests.filter((p) => p === "/sweep")).toHaveLength(1);
    const first = sweep!.predictions[0];
    const last = sweep!.predictions[8];
    expect(first).toBeDefined();
    expect(last).toBeDefined();
    expect(last!).toBeLessThan(first!);
  });
});
