/**
 * Risk and explanation panel: prediction probability, attribution bars and
 * the anchor rule as one condition row per predicate. Service failures show
 * an inline error with a retry action instead of breaking the page.
 */
import { ApiClient } from './api';
import { renderForcePlot } from './forcePlot';
import type { Explanation } from './types';

export function formatRiskPercent(completionProbability: number): string {
  return `${Math.round(100 * (1 - completionProbability))}%`;
}

export class ExplanationView {
  constructor(
    private readonly api: ApiClient,
    private readonly container: HTMLElement,
  ) {}

  async load(learnerId: string): Promise<void> {
    this.container.replaceChildren();
    try {
      const explanation = await this.api.explanation(learnerId);
      this.render(explanation);
    } catch (error) {
      this.renderError(learnerId, error);
    }
  }

  private render(explanation: Explanation): void {
    this.container.replaceChildren();

    const risk = document.createElement('div');
    risk.className = 'risk-headline';
    risk.textContent =
      `Predicted non-completion probability: ` +
      `${formatRiskPercent(explanation.completion_probability)}`;
    this.container.appendChild(risk);

    const plotHost = document.createElement('div');
    plotHost.className = 'force-plot-host';
    this.container.appendChild(plotHost);
    if (explanation.force_plot.bars.length === 0) {
      plotHost.className = 'placeholder';
      plotHost.textContent = 'No attribution data available for this learner.';
    } else {
      renderForcePlot(plotHost, explanation.force_plot);
    }

    const anchorHost = document.createElement('div');
    anchorHost.className = 'anchor-rule';
    const title = document.createElement('h3');
    title.textContent = explanation.anchor.anchored
      ? 'Why the model is confident'
      : 'Closest rule found (below the precision bar)';
    anchorHost.appendChild(title);
    if (explanation.anchor.predicates.length === 0) {
      const empty = document.createElement('div');
      empty.className = 'placeholder';
      empty.textContent = 'No rule conditions to show.';
      anchorHost.appendChild(empty);
    } else {
      for (const predicate of explanation.anchor.predicates) {
        const line = document.createElement('div');
        line.className = 'anchor-condition';
        line.textContent = predicate;
        anchorHost.appendChild(line);
      }
      const meta = document.createElement('div');
      meta.className = 'anchor-meta';
      meta.textContent =
        `precision ${explanation.anchor.precision.toFixed(2)}, ` +
        `coverage ${explanation.anchor.coverage.toFixed(2)}`;
      anchorHost.appendChild(meta);
    }
    this.container.appendChild(anchorHost);
  }

  private renderError(learnerId: string, error: unknown): void {
    this.container.replaceChildren();
    const box = document.createElement('div');
    box.className = 'inline-error';
    const message = document.createElement('span');
    message.textContent = `Could not load the explanation: ${String(
      error instanceof Error ? error.message : error,
    )}`;
    const retry = document.createElement('button');
    retry.className = 'retry-button';
    retry.textContent = 'Retry';
    retry.addEventListener('click', () => void this.load(learnerId));
    box.append(message, retry);
    this.container.appendChild(box);
  }
}
