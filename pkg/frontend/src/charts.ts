/**
 * Pareto-front chart geometry and SVG assembly. Marker layout is a pure
 * function so click hit-testing and tests share the same coordinates.
 */

import type { ParetoFront } from "./types.js";

export interface ParetoMarker {
  kind: "optimized" | "soc";
  dMax: number | null; // null for the SOC reference
  totalDose: number;
  ttpSuperquantile: number;
  x: number;
  y: number;
}

export interface ParetoLayout {
  markers: ParetoMarker[];
  width: number;
  height: number;
  doseRange: [number, number];
  ttpRange: [number, number];
}

const PADDING = 34;

export function paretoLayout(front: ParetoFront, width = 420, height = 260): ParetoLayout {
  const doses = [...front.points.map((p) => p.d_max), front.soc_reference.total_dose];
  const ttps = [...front.points.map((p) => p.ttp_superquantile), front.soc_reference.ttp_superquantile];
  const doseLo = Math.min(...doses) - 5;
  const doseHi = Math.max(...doses) + 5;
  const ttpLo = Math.min(...ttps) - 5;
  const ttpHi = Math.max(...ttps) + 5;
  const sx = (d: number) => PADDING + ((d - doseLo) / (doseHi - doseLo)) * (width - 2 * PADDING);
  const sy = (t: number) => height - PADDING - ((t - ttpLo) / (ttpHi - ttpLo)) * (height - 2 * PADDING);
  const markers: ParetoMarker[] = front.points.map((p) => ({
    kind: "optimized",
    dMax: p.d_max,
    totalDose: p.total_dose,
    ttpSuperquantile: p.ttp_superquantile,
    x: sx(p.d_max),
    y: sy(p.ttp_superquantile),
  }));
  markers.push({
    kind: "soc",
    dMax: null,
    totalDose: front.soc_reference.total_dose,
    ttpSuperquantile: front.soc_reference.ttp_superquantile,
    x: sx(front.soc_reference.total_dose),
    y: sy(front.soc_reference.ttp_superquantile),
  });
  return { markers, width, height, doseRange: [doseLo, doseHi], ttpRange: [ttpLo, ttpHi] };
}

/** SVG with one clickable circle per optimized point and a square SOC marker. */
export function paretoSvg(layout: ParetoLayout, selectedDMax: number | null): string {
  const parts: string[] = [];
  parts.push(
    `<line class="axis" x1="${PADDING}" y1="${layout.height - PADDING}" x2="${layout.width - PADDING}" y2="${layout.height - PADDING}"></line>`,
  );
  parts.push(`<line class="axis" x1="${PADDING}" y1="${PADDING}" x2="${PADDING}" y2="${layout.height - PADDING}"></line>`);
  parts.push(
    `<text class="axis-label" x="${layout.width / 2}" y="${layout.height - 6}" text-anchor="middle">dose cap (Gy)</text>`,
  );
  for (const m of layout.markers) {
    if (m.kind === "soc") {
      parts.push(
        `<rect class="marker soc" data-kind="soc" x="${(m.x - 5).toFixed(1)}" y="${(m.y - 5).toFixed(1)}" width="10" height="10">` +
          `<title>SOC: ${m.totalDose} Gy, tail TTP ${m.ttpSuperquantile} d</title></rect>`,
      );
    } else {
      const selected = m.dMax === selectedDMax ? " selected" : "";
      parts.push(
        `<circle class="marker optimized${selected}" data-kind="optimized" data-dmax="${m.dMax}" ` +
          `cx="${m.x.toFixed(1)}" cy="${m.y.toFixed(1)}" r="6">` +
          `<title>cap ${m.dMax} Gy -> ${m.totalDose} Gy used, tail TTP ${m.ttpSuperquantile} d</title></circle>`,
      );
    }
  }
  return `<svg viewBox="0 0 ${layout.width} ${layout.height}" class="pareto-chart">${parts.join("")}</svg>`;
}
