import { describe, expect, it } from 'vitest';

import { renderEventStudyChart } from '../src/charts.js';

const curve = [
  { l: -3, estimate: 0.1, lo: -0.2, hi: 0.4 },
  { l: -2, estimate: -0.05, lo: -0.3, hi: 0.2 },
  { l: -1, estimate: 0, lo: null, hi: null },
  { l: 0, estimate: 1.4, lo: 1.0, hi: 1.8 },
  { l: 1, estimate: 1.6, lo: 1.1, hi: 2.1 },
];

describe('event-study chart', () => {
  it('draws the zero line and the reference marker at l = -1', () => {
    const svg = renderEventStudyChart(curve);
    expect(svg).toContain('class="zero-line"');
    expect(svg).toContain('class="reference-line" data-l="-1"');
  });

  it('includes one point per estimated horizon', () => {
    const svg = renderEventStudyChart(curve);
    for (const p of curve) expect(svg).toContain(`data-l="${p.l}"`);
    expect(svg.match(/<circle/g)).toHaveLength(5);
  });

  it('draws a confidence band over the horizons that have one', () => {
    const svg = renderEventStudyChart(curve);
    const band = svg.match(/class="ci-band" points="([^"]+)"/);
    expect(band).not.toBeNull();
    // 4 banded horizons -> 8 polygon vertices (upper edge + reversed lower edge)
    expect(band![1].trim().split(/\s+/)).toHaveLength(8);
  });

  it('omits the band without interval data and skips null estimates', () => {
    const svg = renderEventStudyChart([
      { l: -1, estimate: null },
      { l: 0, estimate: 1.0 },
    ]);
    expect(svg).not.toContain('ci-band');
    expect(svg.match(/<circle/g)).toHaveLength(1);
  });

  it('keeps the reference marker even when the curve starts at l = 0', () => {
    const svg = renderEventStudyChart([
      { l: 0, estimate: 1.0 },
      { l: 1, estimate: 1.2 },
    ]);
    expect(svg).toContain('data-l="-1"');
  });
});
