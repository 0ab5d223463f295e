// Event-study chart as an SVG string: per-horizon point estimates with an
// optional confidence band, a horizontal zero line, and a vertical marker at
// the reference period l = -1.

import type { CurvePoint } from './api.js';

export interface ChartOptions {
  width?: number;
  height?: number;
  margin?: number;
}

interface Scale {
  (v: number): number;
}

function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (v) => r0 + ((v - d0) / span) * (r1 - r0);
}

export function renderEventStudyChart(
  curve: CurvePoint[],
  options: ChartOptions = {},
): string {
  const width = options.width ?? 560;
  const height = options.height ?? 320;
  const m = options.margin ?? 40;

  const points = curve.filter((p) => p.estimate !== null);
  const ls = curve.map((p) => p.l);
  const values = points.flatMap((p) => [
    p.estimate as number,
    ...(p.lo !== null && p.lo !== undefined ? [p.lo] : []),
    ...(p.hi !== null && p.hi !== undefined ? [p.hi] : []),
  ]);
  const lMin = Math.min(...ls, -1);
  const lMax = Math.max(...ls, 0);
  const vMin = Math.min(...values, 0);
  const vMax = Math.max(...values, 0);
  const pad = 0.05 * (vMax - vMin || 1);

  const x = linearScale(lMin, lMax, m, width - m);
  const y = linearScale(vMin - pad, vMax + pad, height - m, m);

  const banded = points.filter(
    (p) => p.lo !== null && p.lo !== undefined && p.hi !== null && p.hi !== undefined,
  );
  let band = '';
  if (banded.length > 1) {
    const upper = banded.map((p) => `${x(p.l)},${y(p.hi as number)}`);
    const lower = [...banded].reverse().map((p) => `${x(p.l)},${y(p.lo as number)}`);
    band = `<polygon class="ci-band" points="${[...upper, ...lower].join(' ')}" />`;
  }

  const path = points
    .map((p, i) => `${i === 0 ? 'M' : 'L'}${x(p.l)},${y(p.estimate as number)}`)
    .join(' ');
  const dots = points
    .map(
      (p) =>
        `<circle class="estimate" data-l="${p.l}" cx="${x(p.l)}" cy="${y(
          p.estimate as number,
        )}" r="3" />`,
    )
    .join('');

  return (
    `<svg viewBox="0 0 ${width} ${height}" class="event-study">` +
    `<line class="zero-line" x1="${m}" y1="${y(0)}" x2="${width - m}" y2="${y(0)}" />` +
    `<line class="reference-line" data-l="-1" x1="${x(-1)}" y1="${m}" x2="${x(-1)}" y2="${
      height - m
    }" />` +
    band +
    `<path class="curve" d="${path}" fill="none" />` +
    dots +
    `</svg>`
  );
}
