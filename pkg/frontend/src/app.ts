/**
 * DOM wiring of the decision view: patient picker, posterior panel,
 * Pareto explorer, and the what-if dose editor. All numbers shown in the
 * risk readouts come verbatim from the API.
 */

import { ApiError, TwinApi } from "./api.js";
import { paretoLayout, paretoSvg } from "./charts.js";
import { days, gy, signedDays, verbatim } from "./format.js";
import { histogramSvg } from "./histogram.js";
import {
  EvaluationRecord,
  LatestWins,
  deltaVsSoc,
  freeDosesOf,
  pointAt,
  pushHistory,
} from "./state.js";
import type { EvaluateRequest, ParetoFront, PatientSummary, PosteriorSummary } from "./types.js";
import {
  FIRST_WEEK_DOSE_GY,
  MAX_DAILY_DOSE_GY,
  N_FREE_WEEKS,
  regimenProblems,
  sanitizeFreeDoses,
  totalDoseGy,
} from "./validation.js";

const DEBOUNCE_MS = 300;
const DEFAULT_N_MC = 2000;
const DEFAULT_SEED = 0;

interface ViewState {
  patients: PatientSummary[];
  patientId: string | null;
  posterior: PosteriorSummary | null;
  front: ParetoFront | null;
  selectedDMax: number | null;
  freeDoses: number[];
  alpha: number;
  history: EvaluationRecord[];
  forceOverride: boolean;
  banner: string | null;
  evaluating: boolean;
  lastLatencyMs: number | null;
}

export class DecisionApp {
  private state: ViewState = {
    patients: [],
    patientId: null,
    posterior: null,
    front: null,
    selectedDMax: null,
    freeDoses: [2, 2, 2, 2, 2],
    alpha: 0.95,
    history: [],
    forceOverride: false,
    banner: null,
    evaluating: false,
    lastLatencyMs: null,
  };
  private latest = new LatestWins();
  private debounceHandle: number | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: TwinApi,
  ) {}

  async start(): Promise<void> {
    this.state.patients = await this.api.listPatients();
    this.render();
    const first = this.state.patients[0];
    if (first) await this.selectPatient(first.id);
  }

  async selectPatient(patientId: string): Promise<void> {
    this.state.patientId = patientId;
    this.state.banner = null;
    this.state.history = [];
    this.state.posterior = null;
    this.state.front = null;
    this.render();
    try {
      this.state.posterior = await this.api.posterior(patientId);
    } catch (err) {
      this.state.banner = describeError(err);
    }
    try {
      this.state.front = await this.api.pareto(patientId);
    } catch (err) {
      this.state.banner = describeError(err);
    }
    if (this.state.posterior && !this.state.posterior.diagnostics.converged) {
      this.state.banner = "calibration flagged non-converged; evaluations need an explicit override";
      this.state.forceOverride = true;
    } else {
      this.state.forceOverride = false;
    }
    this.render();
    this.scheduleEvaluate();
  }

  loadFrontPoint(dMax: number): void {
    const front = this.state.front;
    if (!front) return;
    const point = pointAt(front, dMax);
    if (!point) return;
    this.state.selectedDMax = dMax;
    this.state.freeDoses = freeDosesOf(point);
    this.render();
    this.scheduleEvaluate();
  }

  setDose(week: number, value: number): void {
    const doses = this.state.freeDoses.slice();
    doses[week] = value;
    this.state.freeDoses = sanitizeFreeDoses(doses);
    this.state.selectedDMax = null;
    this.renderEditorReadouts();
    this.scheduleEvaluate();
  }

  setAlpha(value: number): void {
    this.state.alpha = value;
    this.renderEditorReadouts();
    this.scheduleEvaluate();
  }

  private scheduleEvaluate(): void {
    if (this.debounceHandle !== null) {
      clearTimeout(this.debounceHandle);
    }
    this.debounceHandle = setTimeout(() => void this.evaluateNow(), DEBOUNCE_MS) as unknown as number;
  }

  private buildRequest(): EvaluateRequest {
    return {
      u: sanitizeFreeDoses(this.state.freeDoses),
      alpha: this.state.alpha,
      n_mc: DEFAULT_N_MC,
      seed: DEFAULT_SEED,
    };
  }

  private async evaluateNow(): Promise<void> {
    const patientId = this.state.patientId;
    if (!patientId) return;
    const request = this.buildRequest();
    if (regimenProblems(request.u).length > 0) return; // sliders cannot produce this
    const token = this.latest.begin();
    this.state.evaluating = true;
    this.renderEditorReadouts();
    const started = performance.now();
    try {
      const response = await this.api.evaluate(patientId, request, this.state.forceOverride);
      if (!this.latest.settle(token)) return; // superseded by a newer edit
      this.state.lastLatencyMs = Math.round(performance.now() - started);
      const record: EvaluationRecord = {
        label: `[${request.u.map((u) => verbatim(u)).join(", ")}] @ a=${request.alpha}`,
        request,
        response,
        deltaVsSoc: deltaVsSoc(response, this.state.front),
      };
      this.state.history = pushHistory(this.state.history, record);
      this.state.banner = null;
    } catch (err) {
      if (!this.latest.settle(token)) return;
      this.state.banner = describeError(err);
    } finally {
      this.state.evaluating = false;
      this.render();
    }
  }

  // --- rendering ---

  render(): void {
    this.root.innerHTML = [
      this.patientBarHtml(),
      this.state.banner ? `<div class="banner">${this.state.banner}</div>` : "",
      `<div class="columns">`,
      `<section class="panel">${this.posteriorHtml()}</section>`,
      `<section class="panel">${this.paretoHtml()}</section>`,
      `</div>`,
      `<section class="panel">${this.editorHtml()}</section>`,
      `<section class="panel">${this.historyHtml()}</section>`,
    ].join("");
    this.bindEvents();
  }

  private renderEditorReadouts(): void {
    const total = this.root.querySelector("#total-dose");
    if (total) total.textContent = gy(totalDoseGy(this.state.freeDoses));
    const alpha = this.root.querySelector("#alpha-readout");
    if (alpha) alpha.textContent = verbatim(this.state.alpha);
    const status = this.root.querySelector("#eval-status");
    if (status) status.textContent = this.state.evaluating ? "evaluating..." : "";
    this.state.freeDoses.forEach((dose, i) => {
      const label = this.root.querySelector(`#dose-readout-${i}`);
      if (label) label.textContent = gy(dose * 5);
    });
  }

  private patientBarHtml(): string {
    const options = this.state.patients
      .map((p) => {
        const flag = p.converged === false ? " (non-converged)" : "";
        const selected = p.id === this.state.patientId ? " selected" : "";
        return `<option value="${p.id}"${selected}>${p.id}${flag}</option>`;
      })
      .join("");
    return `<header><h1>tumor twin decision view</h1><label>patient <select id="patient-select">${options}</select></label></header>`;
  }

  private posteriorHtml(): string {
    const posterior = this.state.posterior;
    if (!posterior) return "<h2>calibrated state</h2><p>loading...</p>";
    const diag = posterior.diagnostics;
    const rows = posterior.marginals
      .map((m) => {
        const peak = Math.max(...m.counts, 1);
        const bars = m.counts
          .map((c, i) => {
            const x = (i / m.counts.length) * 100;
            const h = (c / peak) * 36;
            return `<rect x="${x.toFixed(1)}" y="${(38 - h).toFixed(1)}" width="${(100 / m.counts.length).toFixed(2)}" height="${h.toFixed(1)}"></rect>`;
          })
          .join("");
        return `<div class="marginal"><span class="param">${m.parameter}</span>
          <svg viewBox="0 0 100 40" class="marginal-hist">${bars}</svg>
          <span class="moments">mean ${m.mean.toExponential(3)}, sd ${m.std.toExponential(2)}</span></div>`;
      })
      .join("");
    const rhat = Object.entries(diag.r_hat)
      .map(([k, v]) => `${k}: ${v.toFixed(3)}`)
      .join(", ");
    return `<h2>calibrated state (${posterior.n_samples} samples)</h2>${rows}
      <p class="diag${diag.converged ? "" : " warn"}">R-hat ${rhat}${diag.converged ? "" : " — NOT CONVERGED"}</p>`;
  }

  private paretoHtml(): string {
    const front = this.state.front;
    if (!front) return "<h2>dose / risk trade-off</h2><p>loading...</p>";
    const layout = paretoLayout(front);
    const callout = this.matchedControlCallout(front);
    return `<h2>dose / risk trade-off</h2>${paretoSvg(layout, this.state.selectedDMax)}
      <p class="hint">click a point to load its schedule; square marker is the SOC reference</p>${callout}`;
  }

  private matchedControlCallout(front: ParetoFront): string {
    const ref = front.soc_reference;
    const qualifying = front.points.filter((p) => p.ttp_superquantile >= ref.ttp_superquantile - 1.0);
    if (qualifying.length === 0) return "";
    const cheapest = qualifying.reduce((a, b) => (b.total_dose < a.total_dose ? b : a));
    const saved = ref.total_dose - cheapest.total_dose;
    if (saved <= 0) return "";
    return `<p class="callout">similar tumor control at ${gy(cheapest.total_dose)} — ${gy(saved)} below the SOC dose</p>`;
  }

  private editorHtml(): string {
    const sliders = this.state.freeDoses
      .map((dose, i) => {
        return `<label class="dose-slider">week ${i + 2}
          <input type="range" min="0" max="${MAX_DAILY_DOSE_GY}" step="0.1" value="${dose}" data-week="${i}">
          <span id="dose-readout-${i}">${gy(dose * 5)}</span></label>`;
      })
      .join("");
    const latest = this.state.history[0];
    const latency =
      this.state.lastLatencyMs !== null ? `<span class="latency">${this.state.lastLatencyMs} ms</span>` : "";
    const readout = latest
      ? `<div class="readout">
          <div>tail TTP (a=${verbatim(latest.response.alpha)}): <strong>${days(latest.response.ttp_superquantile)}</strong></div>
          <div>quantile: ${days(latest.response.ttp_quantile)}</div>
          <div>total dose: ${gy(latest.response.total_dose)}</div>
          <div>vs SOC: <strong>${signedDays(latest.deltaVsSoc)}</strong></div>
          ${histogramSvg(latest.response.ttp_samples_histogram, {
            width: 540,
            height: 120,
            markers: [
              { label: "tail", day: latest.response.ttp_superquantile },
              { label: "q", day: latest.response.ttp_quantile },
            ],
          })}
        </div>`
      : `<div class="readout"><p>adjust the sliders to evaluate a schedule</p></div>`;
    return `<h2>what-if schedule</h2>
      <p>week 1 is pinned at ${FIRST_WEEK_DOSE_GY} Gy/day; doses are Gy/day over ${N_FREE_WEEKS} free weeks</p>
      <div class="sliders">${sliders}</div>
      <label class="alpha-slider">risk level a
        <input type="range" min="0.5" max="0.99" step="0.01" value="${this.state.alpha}" id="alpha-slider">
        <span id="alpha-readout">${verbatim(this.state.alpha)}</span></label>
      <div class="totals">planned total dose: <strong id="total-dose">${gy(totalDoseGy(this.state.freeDoses))}</strong>
        <span id="eval-status">${this.state.evaluating ? "evaluating..." : ""}</span>${latency}</div>
      ${readout}`;
  }

  private historyHtml(): string {
    if (this.state.history.length === 0) return "<h2>history</h2><p>no evaluations yet</p>";
    const rows = this.state.history
      .map(
        (r) =>
          `<tr><td>${r.label}</td><td>${days(r.response.ttp_superquantile)}</td>` +
          `<td>${gy(r.response.total_dose)}</td><td>${signedDays(r.deltaVsSoc)}</td></tr>`,
      )
      .join("");
    return `<h2>history (last ${this.state.history.length})</h2>
      <table><thead><tr><th>schedule</th><th>tail TTP</th><th>dose</th><th>vs SOC</th></tr></thead>
      <tbody>${rows}</tbody></table>`;
  }

  private bindEvents(): void {
    const select = this.root.querySelector<HTMLSelectElement>("#patient-select");
    select?.addEventListener("change", () => void this.selectPatient(select.value));
    this.root.querySelectorAll<HTMLInputElement>("input[data-week]").forEach((input) => {
      input.addEventListener("input", () => {
        this.setDose(Number(input.dataset.week), Number(input.value));
      });
    });
    const alpha = this.root.querySelector<HTMLInputElement>("#alpha-slider");
    alpha?.addEventListener("input", () => this.setAlpha(Number(alpha.value)));
    this.root.querySelectorAll<SVGCircleElement>("circle.marker.optimized").forEach((circle) => {
      circle.addEventListener("click", () => this.loadFrontPoint(Number(circle.dataset.dmax)));
    });
  }
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.status === 409) return "posterior flagged non-converged (409); evaluations use an explicit override";
    if (err.status === 422) return `the server rejected the regimen (422): ${JSON.stringify(err.body.detail)}`;
    return `API error ${err.status}`;
  }
  return `request failed: ${String(err)}`;
}
