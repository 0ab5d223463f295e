// What-if session state. Every displayed number comes verbatim from a server
// payload stored here; the only client-side work is formatting. The state is
// plain JSON so a session can be exported as a run configuration and replayed
// exactly on the command line.

import type {
  ClassifyPayload,
  DiagnosticsPayload,
  EstimatePayload,
  EventStudyPayload,
  SpecBody,
} from './api.js';

export interface EstimandForm {
  t1: number;
  ty: number;
  reference?: Record<string, number>;
}

export interface AssumptionForm {
  invariance: 'off' | 'per-cohort' | 'strong';
  anticipationKappa: number | null;
  delayPhi: number | null;
  dissipationXi: number | null;
}

export interface EstimatorForm {
  adjust: string[];
  nonneg: boolean;
  target: 'study' | 'twfe';
  delta: number | null;
}

export interface AnalysisState {
  sessionId: string | null;
  estimand: EstimandForm;
  assumptions: AssumptionForm;
  estimator: EstimatorForm;
  classify: ClassifyPayload | null;
  estimate: EstimatePayload | null;
  diagnostics: DiagnosticsPayload | null;
  curve: EventStudyPayload | null;
  pending: Record<string, boolean>;
}

export function initialState(): AnalysisState {
  return {
    sessionId: null,
    estimand: { t1: 0, ty: 0 },
    assumptions: {
      invariance: 'off',
      anticipationKappa: null,
      delayPhi: null,
      dissipationXi: null,
    },
    estimator: { adjust: [], nonneg: false, target: 'study', delta: null },
    classify: null,
    estimate: null,
    diagnostics: null,
    curve: null,
    pending: {},
  };
}

export function horizonOf(estimand: EstimandForm): number {
  return estimand.ty - estimand.t1;
}

/** Form-level checks mirroring the server's assumption invariants, so bad
 *  combinations are caught before a request is issued. */
export function formErrors(estimand: EstimandForm, asm: AssumptionForm): string[] {
  const errors: string[] = [];
  const l = horizonOf(estimand);
  if (!Number.isInteger(estimand.t1) || !Number.isInteger(estimand.ty)) {
    errors.push('t1 and ty must be integers');
  }
  if (asm.anticipationKappa !== null && asm.anticipationKappa < 0) {
    errors.push('anticipation window must be nonnegative');
  }
  if (asm.delayPhi !== null) {
    if (asm.delayPhi < 0) errors.push('onset delay must be nonnegative');
    else if (asm.delayPhi > l - 1) {
      errors.push(`onset delay must be at most ${l - 1} for this horizon`);
    }
  }
  if (asm.dissipationXi !== null && asm.dissipationXi < l + 1) {
    errors.push(`dissipation must start at ${l + 1} or later for this horizon`);
  }
  return errors;
}

export function specBody(estimand: EstimandForm, asm: AssumptionForm): SpecBody {
  return {
    estimand: {
      t1: estimand.t1,
      ty: estimand.ty,
      ...(estimand.reference ? { reference: estimand.reference } : {}),
    },
    assumptions: {
      invariance: asm.invariance,
      anticipation_kappa: asm.anticipationKappa,
      delay_phi: asm.delayPhi,
      dissipation_xi: asm.dissipationXi,
    },
  };
}

/** Exportable run configuration: the same document the command line accepts,
 *  so a browser session replays exactly. */
export function toRunConfig(state: AnalysisState): Record<string, unknown> {
  return {
    spec: specBody(state.estimand, state.assumptions),
    estimator: {
      adjust: state.estimator.adjust,
      nonneg: state.estimator.nonneg,
      target: state.estimator.target,
      ...(state.estimator.delta !== null ? { delta: state.estimator.delta } : {}),
    },
  };
}

/** Per-control-group request sequencing: a response is applied only when it
 *  belongs to the newest request of its group, so a slow stale response can
 *  never overwrite a fresher one. */
export class RequestSequencer {
  private readonly latest = new Map<string, number>();

  next(group: string): number {
    const seq = (this.latest.get(group) ?? 0) + 1;
    this.latest.set(group, seq);
    return seq;
  }

  isCurrent(group: string, seq: number): boolean {
    return this.latest.get(group) === seq;
  }
}

export interface GroupCountDiff {
  group: string;
  treatment: [number, number];
  control: [number, number];
}

/** Per-group count changes between two classifications, for showing exactly
 *  what an assumption toggle licensed or excluded. */
export function countDiff(
  before: ClassifyPayload,
  after: ClassifyPayload,
): GroupCountDiff[] {
  const groups = new Set([...Object.keys(before.counts), ...Object.keys(after.counts)]);
  const diffs: GroupCountDiff[] = [];
  for (const g of [...groups].sort()) {
    const b = before.counts[g] ?? { treatment: 0, control: 0 };
    const a = after.counts[g] ?? { treatment: 0, control: 0 };
    if (b.treatment !== a.treatment || b.control !== a.control) {
      diffs.push({
        group: g,
        treatment: [b.treatment, a.treatment],
        control: [b.control, a.control],
      });
    }
  }
  return diffs;
}
