// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from 'vitest';

import { renderForcePlot } from '../src/forcePlot';
import { EXPLANATIONS } from './fixtureService';

let host: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="plot"></div>';
  host = document.getElementById('plot')!;
});

describe('renderForcePlot', () => {
  it('colors bars red toward completion and blue toward non-completion', () => {
    renderForcePlot(host, EXPLANATIONS['student-a'].force_plot);
    const fills = [...host.querySelectorAll('.force-bar')];
    const completion = fills.filter((f) => f.classList.contains('toward-completion'));
    const nonCompletion = fills.filter((f) =>
      f.classList.contains('toward-non-completion'),
    );
    expect(completion).toHaveLength(1);
    expect(nonCompletion).toHaveLength(3);
  });

  it('shows base and final values from the payload', () => {
    renderForcePlot(host, EXPLANATIONS['student-a'].force_plot);
    const header = host.querySelector('.force-plot-header')?.textContent ?? '';
    expect(header).toContain('1.823');
    expect(header).toContain('-1.620');
  });

  it('scales the strongest pull to full width', () => {
    renderForcePlot(host, EXPLANATIONS['student-a'].force_plot);
    const widths = [...host.querySelectorAll<HTMLElement>('.force-bar')].map(
      (f) => f.style.width,
    );
    expect(widths[0]).toBe('100%');
  });
});
