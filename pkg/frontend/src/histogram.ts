/**
 * Render model for the progression-time histogram: fixed 1-day bins over
 * [0, 132) plus a distinguished end-of-simulation bin for censored maxima,
 * so successive what-ifs are directly comparable.
 */

import type { TTPHistogram } from "./types.js";

export interface HistogramBar {
  startDay: number;
  count: number;
}

export interface HistogramModel {
  bars: HistogramBar[];
  endOfSimulationCount: number;
  totalSamples: number;
  maxCount: number;
}

export function histogramModel(h: TTPHistogram): HistogramModel {
  const bars = h.bin_start_days.map((startDay, i) => ({ startDay, count: h.counts[i] ?? 0 }));
  const total = bars.reduce((a, b) => a + b.count, 0) + h.end_of_simulation_count;
  const maxCount = Math.max(h.end_of_simulation_count, ...bars.map((b) => b.count), 1);
  return {
    bars,
    endOfSimulationCount: h.end_of_simulation_count,
    totalSamples: total,
    maxCount,
  };
}

export interface HistogramSvgOptions {
  width: number;
  height: number;
  markers?: { label: string; day: number }[];
}

/** Standalone SVG string: bars, the terminal bin, and vertical risk markers. */
export function histogramSvg(h: TTPHistogram, opts: HistogramSvgOptions): string {
  const model = histogramModel(h);
  const { width, height } = opts;
  const plotH = height - 18;
  const nSlots = model.bars.length + 2; // gap + terminal bin
  const slotW = width / nSlots;
  const parts: string[] = [];
  model.bars.forEach((bar) => {
    if (bar.count === 0) return;
    const barH = (bar.count / model.maxCount) * plotH;
    const x = bar.startDay * slotW;
    parts.push(
      `<rect class="bin" x="${x.toFixed(2)}" y="${(plotH - barH).toFixed(2)}" ` +
        `width="${slotW.toFixed(2)}" height="${barH.toFixed(2)}"></rect>`,
    );
  });
  if (model.endOfSimulationCount > 0) {
    const barH = (model.endOfSimulationCount / model.maxCount) * plotH;
    const x = (model.bars.length + 1) * slotW;
    parts.push(
      `<rect class="bin terminal" x="${x.toFixed(2)}" y="${(plotH - barH).toFixed(2)}" ` +
        `width="${slotW.toFixed(2)}" height="${barH.toFixed(2)}"></rect>`,
    );
    parts.push(
      `<text x="${(x + slotW / 2).toFixed(2)}" y="${height - 4}" class="axis terminal-label" text-anchor="end">end of simulation</text>`,
    );
  }
  for (const marker of opts.markers ?? []) {
    const x = marker.day * slotW;
    parts.push(
      `<line class="marker" x1="${x.toFixed(2)}" y1="0" x2="${x.toFixed(2)}" y2="${plotH}"></line>`,
    );
    parts.push(`<text x="${(x + 3).toFixed(2)}" y="12" class="marker-label">${marker.label}</text>`);
  }
  parts.push(`<text x="0" y="${height - 4}" class="axis">0</text>`);
  parts.push(`<text x="${(132 * slotW).toFixed(2)}" y="${height - 4}" class="axis" text-anchor="end">132 d</text>`);
  return `<svg viewBox="0 0 ${width} ${height}" class="ttp-histogram">${parts.join("")}</svg>`;
}
