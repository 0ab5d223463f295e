import { describe, expect, it } from 'vitest';

import {
  RequestSequencer,
  countDiff,
  formErrors,
  initialState,
  specBody,
  toRunConfig,
} from '../src/state.js';
import { toyClassifyPayload } from './fixtures.js';

describe('form constraints', () => {
  const estimand = { t1: 2002, ty: 2005 }; // horizon l = 3

  it('accepts a consistent assumption chain', () => {
    expect(
      formErrors(estimand, {
        invariance: 'strong',
        anticipationKappa: 0,
        delayPhi: 2,
        dissipationXi: 4,
      }),
    ).toEqual([]);
  });

  it('rejects an onset delay past the horizon', () => {
    const errors = formErrors(estimand, {
      invariance: 'off',
      anticipationKappa: null,
      delayPhi: 3,
      dissipationXi: null,
    });
    expect(errors).toHaveLength(1);
    expect(errors[0]).toContain('at most 2');
  });

  it('rejects dissipation at or before the horizon', () => {
    const errors = formErrors(estimand, {
      invariance: 'off',
      anticipationKappa: null,
      delayPhi: null,
      dissipationXi: 3,
    });
    expect(errors[0]).toContain('4 or later');
  });

  it('rejects a negative anticipation window', () => {
    const errors = formErrors(estimand, {
      invariance: 'off',
      anticipationKappa: -1,
      delayPhi: null,
      dissipationXi: null,
    });
    expect(errors[0]).toContain('nonnegative');
  });
});

describe('request sequencing', () => {
  it('keeps only the newest request of a group current', () => {
    const seq = new RequestSequencer();
    const first = seq.next('whatif');
    const second = seq.next('whatif');
    expect(seq.isCurrent('whatif', first)).toBe(false);
    expect(seq.isCurrent('whatif', second)).toBe(true);
  });

  it('tracks control groups independently', () => {
    const seq = new RequestSequencer();
    const a = seq.next('whatif');
    const b = seq.next('curve');
    expect(seq.isCurrent('whatif', a)).toBe(true);
    expect(seq.isCurrent('curve', b)).toBe(true);
  });
});

describe('run configuration export', () => {
  it('serializes the forms into a replayable document', () => {
    const state = initialState();
    state.estimand = { t1: 2002, ty: 2003 };
    state.assumptions = {
      invariance: 'per-cohort',
      anticipationKappa: 0,
      delayPhi: null,
      dissipationXi: null,
    };
    state.estimator = { adjust: ['x_0'], nonneg: true, target: 'study', delta: 0.01 };
    const config = toRunConfig(state);
    expect(config).toEqual({
      spec: {
        estimand: { t1: 2002, ty: 2003 },
        assumptions: {
          invariance: 'per-cohort',
          anticipation_kappa: 0,
          delay_phi: null,
          dissipation_xi: null,
        },
      },
      estimator: { adjust: ['x_0'], nonneg: true, target: 'study', delta: 0.01 },
    });
    expect(() => JSON.stringify(config)).not.toThrow();
  });

  it('builds the request body the server expects', () => {
    const body = specBody(
      { t1: 2002, ty: 2003, reference: { never: 1 } },
      { invariance: 'strong', anticipationKappa: null, delayPhi: null, dissipationXi: null },
    );
    expect(body.estimand.reference).toEqual({ never: 1 });
    expect(body.assumptions?.invariance).toBe('strong');
  });
});

describe('classification diff', () => {
  it('reports exactly the groups whose counts changed', () => {
    const before = toyClassifyPayload();
    const after = structuredClone(before);
    after.counts['TimeInvariance'] = { treatment: 0, control: 5 };
    after.counts['Excluded'] = { treatment: 0, control: 25 };
    after.non_excluded = 11;
    const diffs = countDiff(before, after);
    expect(diffs.map((d) => d.group)).toEqual(['Excluded', 'TimeInvariance']);
    expect(diffs[1]).toEqual({
      group: 'TimeInvariance',
      treatment: [0, 0],
      control: [0, 5],
    });
  });

  it('is empty when nothing changed', () => {
    const payload = toyClassifyPayload();
    expect(countDiff(payload, structuredClone(payload))).toEqual([]);
  });
});
