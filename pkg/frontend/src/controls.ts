// What-if loop: each form change issues classify/estimate/diagnostics
// requests, and responses update the displayed counts, estimate, effective
// sample size bars, influence ranking, and event-study curve. At most one
// response per control group is applied thanks to request sequencing.

import { ApiClient, infeasibilityOf } from './api.js';
import type { DiagnosticsPayload } from './api.js';
import {
  AnalysisState,
  RequestSequencer,
  formErrors,
  specBody,
} from './state.js';

export type Renderer = (state: AnalysisState, error: string | null) => void;

export class WhatIfController {
  private readonly seq = new RequestSequencer();

  constructor(
    private readonly client: ApiClient,
    readonly state: AnalysisState,
    private readonly render: Renderer,
  ) {}

  /** Re-query everything the current form licenses; stale responses from an
   *  earlier toggle are dropped, never merged. */
  async refresh(): Promise<void> {
    const { sessionId, estimand, assumptions, estimator } = this.state;
    if (sessionId === null) return;
    const errors = formErrors(estimand, assumptions);
    if (errors.length) {
      this.render(this.state, errors.join('; '));
      return;
    }
    const spec = specBody(estimand, assumptions);
    const opts = {
      adjust: estimator.adjust,
      nonneg: estimator.nonneg,
      target: estimator.target,
      ...(estimator.delta !== null ? { delta: estimator.delta } : {}),
    };

    const ticket = this.seq.next('whatif');
    this.state.pending['whatif'] = true;
    this.render(this.state, null);
    try {
      const [classify, estimate, diagnostics] = await Promise.all([
        this.client.classify(sessionId, spec),
        this.client.estimate(sessionId, spec, opts),
        this.client.diagnostics(sessionId, spec, {}),
      ]);
      if (!this.seq.isCurrent('whatif', ticket)) return;
      this.state.classify = classify;
      this.state.estimate = estimate;
      this.state.diagnostics = diagnostics;
      this.state.pending['whatif'] = false;
      this.render(this.state, null);
    } catch (err) {
      if (!this.seq.isCurrent('whatif', ticket)) return;
      this.state.pending['whatif'] = false;
      const infeasible = infeasibilityOf(err);
      const message = infeasible
        ? `no weights satisfy the balance tolerances; widening every tolerance by ` +
          `${infeasible.inflation.toPrecision(3)} would restore feasibility`
        : String(err);
      this.render(this.state, message);
    }
  }

  async refreshCurve(lRange: [number, number]): Promise<void> {
    const { sessionId, estimand, assumptions, estimator } = this.state;
    if (sessionId === null) return;
    const spec = specBody(estimand, assumptions);
    const ticket = this.seq.next('curve');
    this.state.pending['curve'] = true;
    this.render(this.state, null);
    try {
      const curve = await this.client.eventStudy(sessionId, spec, {
        family: 'robust',
        l_range: lRange,
        adjust: estimator.adjust,
        nonneg: estimator.nonneg,
      });
      if (!this.seq.isCurrent('curve', ticket)) return;
      this.state.curve = curve;
      this.state.pending['curve'] = false;
      this.render(this.state, null);
    } catch (err) {
      if (!this.seq.isCurrent('curve', ticket)) return;
      this.state.pending['curve'] = false;
      this.render(this.state, String(err));
    }
  }
}

export function renderCounts(classify: AnalysisState['classify']): string {
  if (!classify) return '<p class="placeholder">no classification yet</p>';
  const rows = Object.entries(classify.counts)
    .filter(([g]) => g !== 'Excluded')
    .map(
      ([g, c]) =>
        `<tr data-group="${g}"><td>${g}</td>` +
        `<td class="num">${c.treatment}</td><td class="num">${c.control}</td></tr>`,
    )
    .join('');
  return (
    `<table class="counts"><thead><tr><th>group</th><th>T</th><th>C</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<p class="total">licensed observations: <b>${classify.non_excluded}</b></p>`
  );
}

export function renderEssBars(diagnostics: DiagnosticsPayload | null): string {
  if (!diagnostics) return '<p class="placeholder">no diagnostics yet</p>';
  const entries = Object.entries(diagnostics.ess_by_group);
  const maxEss = Math.max(...entries.map(([, v]) => v), 1);
  return entries
    .map(([g, v]) => {
      const share = diagnostics.info_share[g] ?? 0;
      return (
        `<div class="ess-bar" data-group="${g}">` +
        `<span class="label">${g}</span>` +
        `<span class="bar" style="width:${((100 * v) / maxEss).toFixed(1)}%"></span>` +
        `<span class="value">${v.toFixed(3)}</span>` +
        `<span class="share">${(100 * share).toFixed(1)}%</span></div>`
      );
    })
    .join('');
}

export function renderInfluence(diagnostics: DiagnosticsPayload | null, top = 10): string {
  const entries = (diagnostics?.influence ?? []) as {
    unit?: string;
    time?: number;
    pe?: number;
    note?: string;
  }[];
  if (!entries.length) return '<p class="placeholder">no influence ranking</p>';
  const items = entries
    .slice(0, top)
    .map((e) =>
      e.pe !== undefined
        ? `<li><code>${e.unit} ${e.time}</code> <span class="num">${e.pe >= 0 ? '+' : ''}${e.pe.toFixed(3)}</span></li>`
        : `<li class="flag">${e.note ?? JSON.stringify(e)}</li>`,
    )
    .join('');
  return `<ol class="influence">${items}</ol>`;
}
