// Typed client for the analysis service. Every payload is validated with zod
// before the UI sees it, so rendering code never touches unchecked JSON.

import { z } from 'zod';

export const GroupCount = z.object({
  treatment: z.number().int(),
  control: z.number().int(),
});

export const TagRecord = z.object({
  unit: z.string(),
  time: z.number(),
  group: z.string(),
  role: z.string(),
  assumption: z.string().nullable().optional(),
});

export const ClassifyPayload = z.object({
  counts: z.record(GroupCount),
  non_excluded: z.number().int(),
  tags: z.array(TagRecord),
});
export type ClassifyPayload = z.infer<typeof ClassifyPayload>;

export const WeightRecord = z.object({
  unit: z.string(),
  time: z.number(),
  component: z.string(),
  weight: z.number(),
  group: z.string().optional(),
});

export const EstimatePayload = z.object({
  estimate: z.number(),
  provenance: z.record(z.string()),
  solver: z.record(z.unknown()),
  weights: z.array(WeightRecord),
});
export type EstimatePayload = z.infer<typeof EstimatePayload>;

export const DiagnosticsPayload = z.object({
  ess_by_group: z.record(z.number()),
  group_sizes: z.record(z.number()),
  info_share: z.record(z.number()),
  dispersion: z.record(z.unknown()),
  balance: z.array(z.record(z.unknown())),
  sign_reversal: z.array(z.unknown()),
  influence: z.array(z.unknown()).nullable(),
});
export type DiagnosticsPayload = z.infer<typeof DiagnosticsPayload>;

export const CurvePoint = z
  .object({
    l: z.number(),
    estimate: z.number().nullable(),
    lo: z.number().nullable().optional(),
    hi: z.number().nullable().optional(),
  })
  .passthrough();
export type CurvePoint = z.infer<typeof CurvePoint>;

export const EventStudyPayload = z.object({
  estimator: z.string(),
  information_set: z.string(),
  curve: z.array(CurvePoint),
});
export type EventStudyPayload = z.infer<typeof EventStudyPayload>;

export const SessionPayload = z.object({
  id: z.string(),
  units: z.number().int(),
  times: z.number().int(),
  time_range: z.tuple([z.number(), z.number()]),
  cohorts: z.record(z.number()),
  covariates: z.array(z.string()),
  missing_cells: z.number().int(),
});
export type SessionPayload = z.infer<typeof SessionPayload>;

export const JobAccepted = z.object({ job: z.string() });

export interface SpecBody {
  estimand: {
    t1: number;
    ty: number;
    reference?: Record<string, number>;
    target_population?: string;
  };
  assumptions?: {
    invariance?: string;
    anticipation_kappa?: number | null;
    delay_phi?: number | null;
    dissipation_xi?: number | null;
  };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`request failed with status ${status}`);
  }
}

/** Infeasibility diagnosis attached to 422 responses. */
export function infeasibilityOf(err: unknown): { inflation: number } | null {
  if (err instanceof ApiError && err.status === 422) {
    const body = err.body as { diagnosis?: { inflation?: number } };
    if (body?.diagnosis?.inflation !== undefined) {
      return { inflation: body.diagnosis.inflation };
    }
  }
  return null;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const text = await res.text();
    const body = text ? JSON.parse(text) : null;
    if (!res.ok && res.status !== 202) throw new ApiError(res.status, body);
    return body;
  }

  private post(path: string, body: unknown): Promise<unknown> {
    return this.request(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  async createSession(csv: string, schema?: Record<string, unknown>): Promise<SessionPayload> {
    return SessionPayload.parse(await this.post('/sessions', { csv, schema }));
  }

  async classify(sid: string, spec: SpecBody): Promise<ClassifyPayload> {
    return ClassifyPayload.parse(await this.post(`/sessions/${sid}/classify`, spec));
  }

  async estimate(
    sid: string,
    spec: SpecBody,
    estimator?: Record<string, unknown>,
  ): Promise<EstimatePayload> {
    return EstimatePayload.parse(
      await this.post(`/sessions/${sid}/estimate`, { ...spec, estimator }),
    );
  }

  async diagnostics(
    sid: string,
    spec: SpecBody,
    estimator?: Record<string, unknown>,
  ): Promise<DiagnosticsPayload> {
    return DiagnosticsPayload.parse(
      await this.post(`/sessions/${sid}/diagnostics`, { ...spec, estimator }),
    );
  }

  async eventStudy(
    sid: string,
    spec: SpecBody,
    estimator?: Record<string, unknown>,
  ): Promise<EventStudyPayload> {
    return EventStudyPayload.parse(
      await this.post(`/sessions/${sid}/event-study`, { ...spec, estimator }),
    );
  }

  /** Bootstrap-backed curve: submit the job, then poll until it resolves. */
  async eventStudyJob(
    sid: string,
    spec: SpecBody,
    estimator: Record<string, unknown>,
    pollMs = 250,
  ): Promise<EventStudyPayload> {
    const accepted = JobAccepted.parse(
      await this.post(`/sessions/${sid}/event-study`, { ...spec, estimator }),
    );
    for (;;) {
      const res = await this.fetchFn(`${this.baseUrl}/sessions/${sid}/jobs/${accepted.job}`);
      const body = await res.json();
      if (res.status === 409) {
        await new Promise((r) => setTimeout(r, pollMs));
        continue;
      }
      if (!res.ok) throw new ApiError(res.status, body);
      return EventStudyPayload.parse(body.result);
    }
  }
}
