// Browser entry point: wires the form controls to the what-if controller and
// paints the grid, counts, bars, influence list, and curve into the page.

import { ApiClient } from './api.js';
import { renderEventStudyChart } from './charts.js';
import {
  WhatIfController,
  renderCounts,
  renderEssBars,
  renderInfluence,
} from './controls.js';
import { buildGrid, renderGrid } from './grid.js';
import { AnalysisState, initialState, toRunConfig } from './state.js';

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function paint(state: AnalysisState, error: string | null): void {
  byId('error').textContent = error ?? '';
  byId('counts').innerHTML = renderCounts(state.classify);
  byId('ess').innerHTML = renderEssBars(state.diagnostics);
  byId('influence').innerHTML = renderInfluence(state.diagnostics);
  byId('estimate').textContent =
    state.estimate !== null ? state.estimate.estimate.toPrecision(6) : '—';
  if (state.classify) {
    const shade = (byId<HTMLInputElement>('weight-shading')).checked;
    const grid = buildGrid(state.classify, {
      weights: shade ? (state.estimate?.weights ?? undefined) : undefined,
    });
    byId('grid').innerHTML = renderGrid(grid);
  }
  if (state.curve) byId('chart').innerHTML = renderEventStudyChart(state.curve.curve);
  byId('busy').hidden = !Object.values(state.pending).some(Boolean);
}

function readForm(state: AnalysisState): void {
  state.estimand.t1 = Number(byId<HTMLInputElement>('t1').value);
  state.estimand.ty = Number(byId<HTMLInputElement>('ty').value);
  state.assumptions.invariance = byId<HTMLSelectElement>('invariance')
    .value as AnalysisState['assumptions']['invariance'];
  const opt = (id: string) => {
    const v = byId<HTMLInputElement>(id).value;
    return v === '' ? null : Number(v);
  };
  state.assumptions.anticipationKappa = opt('kappa');
  state.assumptions.delayPhi = opt('phi');
  state.assumptions.dissipationXi = opt('xi');
  state.estimator.adjust = byId<HTMLInputElement>('adjust')
    .value.split(',')
    .map((s) => s.trim())
    .filter(Boolean);
  state.estimator.nonneg = byId<HTMLInputElement>('nonneg').checked;
}

async function main(): Promise<void> {
  const client = new ApiClient(window.location.origin.replace(/:\d+$/, ':8000'));
  const state = initialState();
  const controller = new WhatIfController(client, state, paint);

  byId<HTMLInputElement>('csv-file').addEventListener('change', async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const session = await client.createSession(await file.text());
    state.sessionId = session.id;
    byId('session-info').textContent =
      `${session.units} units x ${session.times} periods, ` +
      `cohorts ${Object.keys(session.cohorts).join(', ')}`;
    readForm(state);
    await controller.refresh();
  });

  for (const id of ['t1', 'ty', 'invariance', 'kappa', 'phi', 'xi', 'adjust', 'nonneg']) {
    byId(id).addEventListener('change', async () => {
      readForm(state);
      await controller.refresh();
    });
  }
  byId('weight-shading').addEventListener('change', () => paint(state, null));
  byId('run-curve').addEventListener('click', async () => {
    const lo = Number(byId<HTMLInputElement>('l-lo').value);
    const hi = Number(byId<HTMLInputElement>('l-hi').value);
    await controller.refreshCurve([lo, hi]);
  });
  byId('export-config').addEventListener('click', () => {
    const blob = new Blob([JSON.stringify(toRunConfig(state), null, 2)], {
      type: 'application/json',
    });
    const a = document.createElement('a');
    a.href = URL.createObjectURL(blob);
    a.download = 'run-config.json';
    a.click();
  });
}

main().catch((err) => {
  document.body.insertAdjacentHTML('beforeend', `<pre class="fatal">${err}</pre>`);
});
