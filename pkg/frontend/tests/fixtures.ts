// Shared toy panel: five units adopting in 2002, one never-treated, observed
// 2000-2005. Under base assumptions only the outcome year itself is licensed:
// five treated units and the single never-treated unit at 2003.

import type { ClassifyPayload } from '../src/api.js';

export function toyCsv(): string {
  const lines = ['unit,time,outcome,g'];
  for (let k = 1; k <= 6; k++) {
    const g = k <= 5 ? '2002' : 'never';
    for (let t = 2000; t <= 2005; t++) {
      const y = 0.5 * k + 0.1 * (t - 2000) + (g !== 'never' && t >= 2002 ? 2.0 : 0.0);
      lines.push(`u${k},${t},${y},${g}`);
    }
  }
  return lines.join('\n') + '\n';
}

export function toyClassifyPayload(): ClassifyPayload {
  const tags: ClassifyPayload['tags'] = [];
  for (let k = 1; k <= 6; k++) {
    for (let t = 2000; t <= 2005; t++) {
      const licensed = t === 2003;
      tags.push({
        unit: `u${k}`,
        time: t,
        group: licensed ? 'IdealExperiment' : 'Excluded',
        role: licensed ? (k <= 5 ? 'Treatment' : 'Control') : 'None',
      });
    }
  }
  return {
    counts: {
      IdealExperiment: { treatment: 5, control: 1 },
      Excluded: { treatment: 0, control: 30 },
    },
    non_excluded: 6,
    tags,
  };
}
