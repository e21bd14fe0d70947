// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api';
import { ExplanationView, formatRiskPercent } from '../src/explanation';
import { EXPLANATIONS, FixtureService } from './fixtureService';

let host: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="host"></div>';
  host = document.getElementById('host')!;
});

function viewFor(service: FixtureService): ExplanationView {
  return new ExplanationView(new ApiClient('http://svc.test', '', service.fetch), host);
}

describe('ExplanationView', () => {
  it('shows the non-completion probability as a percentage', async () => {
    await viewFor(new FixtureService()).load('student-a');
    expect(host.querySelector('.risk-headline')?.textContent).toContain('97%');
  });

  it('renders one condition row per anchor predicate', async () => {
    await viewFor(new FixtureService()).load('student-a');
    const rows = host.querySelectorAll('.anchor-condition');
    expect(rows).toHaveLength(3);
    expect(rows[0].textContent).toBe('papers_failed_year > 1');
  });

  it('renders force-plot bars with service values verbatim', async () => {
    await viewFor(new FixtureService()).load('student-a');
    const bars = host.querySelectorAll('.force-bar-row');
    expect(bars).toHaveLength(EXPLANATIONS['student-a'].force_plot.bars.length);
    expect(host.textContent).toContain('53.0%');
  });

  it('shows a placeholder for an empty explanation instead of crashing', async () => {
    const service = new FixtureService();
    EXPLANATIONS['student-empty'] = {
      learner_id: 'student-empty',
      completion_probability: 0.2,
      force_plot: { base: 0, final: 0, target_space: 'log-odds', bars: [] },
      anchor: {
        predicates: [], precision: 0, precision_lb: 0, coverage: 0,
        predicted_class: 0, anchored: false,
      },
    };
    await viewFor(service).load('student-empty');
    expect(host.querySelectorAll('.placeholder').length).toBeGreaterThan(0);
    delete EXPLANATIONS['student-empty'];
  });

  it('offers an inline retry after a service error, and recovers', async () => {
    const service = new FixtureService();
    service.failNextExplanations = 1;
    const view = viewFor(service);
    await view.load('student-a');
    const retry = host.querySelector<HTMLButtonElement>('.retry-button');
    expect(retry).not.toBeNull();
    expect(host.querySelector('.inline-error')?.textContent).toContain('temporarily unavailable');

    retry!.click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(host.querySelector('.inline-error')).toBeNull();
    expect(host.querySelector('.risk-headline')?.textContent).toContain('97%');
  });
});

describe('formatRiskPercent', () => {
  it('rounds the displayed risk', () => {
    expect(formatRiskPercent(0.03)).toBe('97%');
    expect(formatRiskPercent(0.1)).toBe('90%');
  });
});
