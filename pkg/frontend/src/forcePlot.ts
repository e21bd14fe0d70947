/**
 * Tug-of-war bar rendering for one prediction's attributions.
 *
 * Red bars pull toward completion, blue bars toward non-completion; widths
 * scale with the strongest pull. All numbers come from the service payload.
 */
import type { ForcePlotData } from './types';

function formatPhi(phi: number): string {
  return (phi >= 0 ? '+' : '') + phi.toFixed(3);
}

export function renderForcePlot(container: HTMLElement, data: ForcePlotData): void {
  container.replaceChildren();
  container.classList.add('force-plot');

  const header = document.createElement('div');
  header.className = 'force-plot-header';
  header.textContent =
    `base ${data.base.toFixed(3)} → final ${data.final.toFixed(3)} (${data.target_space})`;
  container.appendChild(header);

  const maxPull = Math.max(...data.bars.map((b) => Math.abs(b.phi)), 1e-9);
  for (const bar of data.bars) {
    const row = document.createElement('div');
    row.className = 'force-bar-row';

    const label = document.createElement('span');
    label.className = 'force-bar-label';
    label.textContent = bar.value_display
      ? `${bar.feature} = ${bar.value_display}`
      : bar.feature;

    const track = document.createElement('span');
    track.className = 'force-bar-track';
    const fill = document.createElement('span');
    fill.className =
      bar.direction === 'completion'
        ? 'force-bar toward-completion'
        : 'force-bar toward-non-completion';
    fill.style.width = `${Math.round((100 * Math.abs(bar.phi)) / maxPull)}%`;
    fill.title = formatPhi(bar.phi);
    track.appendChild(fill);

    const value = document.createElement('span');
    value.className = 'force-bar-value';
    value.textContent = formatPhi(bar.phi);

    row.append(label, track, value);
    container.appendChild(row);
  }
}
