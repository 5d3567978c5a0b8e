import { describe, expect, it } from "vitest";

import { paretoLayout, paretoSvg } from "../src/charts.js";
import type { ParetoFront, ParetoPoint } from "../src/types.js";

function makePoint(dMax: number, ttp: number): ParetoPoint {
  return {
    d_max: dMax,
    regimen: { weekly_doses: [2, 0, 0, 0, 0, dMax / 5 - 2], treatment_start_day: 20, treatment_days_per_week: 5 },
    total_dose: dMax,
    objective: -ttp,
    ttp_superquantile: ttp,
    ttp_quantile: ttp + 1,
    alpha: 0.95,
    report_seed: 0,
    report_n_mc: 1000,
  };
}

const front: ParetoFront = {
  patient_id: "p",
  points: [40, 50, 60, 70, 80, 100].map((d, i) => makePoint(d, 75 + 6 * i)),
  soc_reference: makePoint(60, 80),
};

describe("pareto layout", () => {
  it("renders one marker per front point plus the SOC square", () => {
    const layout = paretoLayout(front);
    expect(layout.markers.length).toBe(7);
    expect(layout.markers.filter((m) => m.kind === "soc").length).toBe(1);
  });

  it("higher caps land further right, longer TTP higher up", () => {
    const layout = paretoLayout(front);
    const optimized = layout.markers.filter((m) => m.kind === "optimized");
    for (let i = 1; i < optimized.length; i++) {
      expect(optimized[i]!.x).toBeGreaterThan(optimized[i - 1]!.x);
      expect(optimized[i]!.y).toBeLessThan(optimized[i - 1]!.y);
    }
  });

  it("svg markers carry the dose cap for click routing", () => {
    const svg = paretoSvg(paretoLayout(front), 60);
    for (const d of [40, 50, 60, 70, 80, 100]) {
      expect(svg).toContain(`data-dmax="${d}"`);
    }
    expect(svg).toContain('data-kind="soc"');
    expect(svg.match(/selected/g)?.length).toBe(1);
  });
});
