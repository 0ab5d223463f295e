import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import {
  WhatIfController,
  renderCounts,
  renderEssBars,
  renderInfluence,
} from '../src/controls.js';
import { initialState } from '../src/state.js';
import { toyClassifyPayload } from './fixtures.js';

const diagnostics = {
  ess_by_group: { IdealExperiment: 3.346, TimeInvariance: 10.0 },
  group_sizes: { IdealExperiment: 6, TimeInvariance: 10 },
  info_share: { IdealExperiment: 0.007, TimeInvariance: 0.993 },
  dispersion: {},
  balance: [],
  sign_reversal: [],
  influence: [
    { unit: 'CA', time: 1972, pe: -0.381 },
    { unit: 'RI', time: 1977, pe: 0.227 },
  ],
};

const estimate = {
  estimate: 2.0,
  provenance: { solver: 'interval-qp' },
  solver: {},
  weights: [],
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function clientWith(handler: (url: string, init?: RequestInit) => Promise<Response>) {
  return new ApiClient('http://test', ((url: string, init?: RequestInit) =>
    handler(url, init)) as typeof fetch);
}

describe('what-if controller', () => {
  it('applies the classify/estimate/diagnostics responses verbatim', async () => {
    const client = clientWith(async (url) => {
      if (url.endsWith('/classify')) return jsonResponse(toyClassifyPayload());
      if (url.endsWith('/estimate')) return jsonResponse(estimate);
      if (url.endsWith('/diagnostics')) return jsonResponse(diagnostics);
      throw new Error(`unexpected ${url}`);
    });
    const state = initialState();
    state.sessionId = 's1';
    state.estimand = { t1: 2002, ty: 2003 };
    let lastError: string | null = 'unset';
    const controller = new WhatIfController(client, state, (_, err) => {
      lastError = err;
    });
    await controller.refresh();
    expect(lastError).toBeNull();
    expect(state.classify).toEqual(toyClassifyPayload());
    expect(state.estimate?.estimate).toBe(2.0);
    expect(state.diagnostics?.ess_by_group['IdealExperiment']).toBe(3.346);
    expect(state.pending['whatif']).toBe(false);
  });

  it('discards a stale response that resolves after a newer one', async () => {
    let call = 0;
    const gates: (() => void)[] = [];
    const client = clientWith(async (url) => {
      if (url.endsWith('/classify')) {
        const n = call++;
        await new Promise<void>((r) => gates.push(r));
        const payload = toyClassifyPayload();
        payload.non_excluded = n === 0 ? 111 : 6;
        return jsonResponse(payload);
      }
      if (url.endsWith('/estimate')) return jsonResponse(estimate);
      return jsonResponse(diagnostics);
    });
    const state = initialState();
    state.sessionId = 's1';
    state.estimand = { t1: 2002, ty: 2003 };
    const controller = new WhatIfController(client, state, () => {});

    const first = controller.refresh();
    const second = controller.refresh();
    gates[1]();            // newer request resolves first
    await second;
    gates[0]();            // stale response arrives late
    await first;
    expect(state.classify?.non_excluded).toBe(6);
  });

  it('blocks submission and reports form errors without a request', async () => {
    const client = clientWith(async () => {
      throw new Error('no request expected');
    });
    const state = initialState();
    state.sessionId = 's1';
    state.estimand = { t1: 2002, ty: 2003 };
    state.assumptions.delayPhi = 5;
    let lastError: string | null = null;
    const controller = new WhatIfController(client, state, (_, err) => {
      lastError = err;
    });
    await controller.refresh();
    expect(lastError).toContain('onset delay');
  });

  it('surfaces the minimal-inflation suggestion on infeasibility', async () => {
    const client = clientWith(async (url) => {
      if (url.endsWith('/estimate')) {
        return jsonResponse(
          { error: 'balance constraints are infeasible', diagnosis: { inflation: 0.0123 } },
          422,
        );
      }
      if (url.endsWith('/classify')) return jsonResponse(toyClassifyPayload());
      return jsonResponse(diagnostics);
    });
    const state = initialState();
    state.sessionId = 's1';
    state.estimand = { t1: 2002, ty: 2003 };
    let lastError: string | null = null;
    const controller = new WhatIfController(client, state, (_, err) => {
      lastError = err;
    });
    await controller.refresh();
    expect(lastError).toContain('0.0123');
    expect(lastError).toContain('restore feasibility');
  });
});

describe('display fragments', () => {
  it('formats counts straight from the payload fields', () => {
    const html = renderCounts(toyClassifyPayload());
    expect(html).toContain('<td>IdealExperiment</td>');
    expect(html).toContain('<td class="num">5</td><td class="num">1</td>');
    expect(html).toContain('licensed observations: <b>6</b>');
    expect(html).not.toContain('<tr data-group="Excluded">');
  });

  it('renders one bar per group with the payload value verbatim', () => {
    const html = renderEssBars(diagnostics);
    expect(html).toContain('data-group="IdealExperiment"');
    expect(html).toContain('3.346');
    expect(html).toContain('0.7%');
    expect(html).toContain('width:33.5%');
  });

  it('lists influence entries in payload order', () => {
    const html = renderInfluence(diagnostics);
    expect(html.indexOf('CA')).toBeLessThan(html.indexOf('RI'));
    expect(html).toContain('-0.381');
    expect(html).toContain('+0.227');
  });
});
