/**
 * What-if loop: the advisor narrows constraints (freeze features, tighten
 * ranges, cap changes), re-runs the pathway search and compares the
 * returned pathway cards side by side. Cards can be discarded from view or
 * selected as the basis for drafting feedback.
 */
import { ApiClient, ApiError } from './api';
import type { Pathway, WhatIfRequest, WhatIfResponse } from './types';

export interface ConstraintState {
  frozen: Set<string>;
  ranges: Map<string, [number, number]>;
  maxChanged: number;
  k: number;
  seed: number;
}

export function newConstraintState(seed = 0): ConstraintState {
  return { frozen: new Set(), ranges: new Map(), maxChanged: 3, k: 3, seed };
}

export function buildRequest(state: ConstraintState): WhatIfRequest {
  const request: WhatIfRequest = { seed: state.seed };
  if (state.frozen.size > 0) request.frozen = [...state.frozen].sort();
  if (state.ranges.size > 0) {
    request.ranges = {};
    for (const [feature, range] of [...state.ranges.entries()].sort()) {
      request.ranges[feature] = range;
    }
  }
  request.max_changed = state.maxChanged;
  request.k = state.k;
  return request;
}

export type SelectionListener = (pfIndex: number | null) => void;

export class WhatIfController {
  readonly state: ConstraintState;
  private response: WhatIfResponse | null = null;
  private discarded = new Set<number>();
  private selected: number | null = null;
  private selectionListeners: SelectionListener[] = [];
  private locked = false;

  constructor(
    private readonly api: ApiClient,
    private readonly learnerId: string,
    private readonly cardsHost: HTMLElement,
    private readonly tableHost: HTMLElement,
    private readonly errorHost: HTMLElement,
    seed = 0,
  ) {
    this.state = newConstraintState(seed);
  }

  onSelectionChange(listener: SelectionListener): void {
    this.selectionListeners.push(listener);
  }

  get selectedPathway(): Pathway | null {
    if (this.selected === null || this.response === null) return null;
    return this.response.pathways.find((p) => p.index === this.selected) ?? null;
  }

  get lastResponse(): WhatIfResponse | null {
    return this.response;
  }

  /** Approval locks the loop: no further re-runs, edits or selections. */
  lock(): void {
    this.locked = true;
    this.renderCards();
  }

  get isLocked(): boolean {
    return this.locked;
  }

  freeze(feature: string, frozen: boolean): void {
    if (this.locked) return;
    if (frozen) this.state.frozen.add(feature);
    else this.state.frozen.delete(feature);
  }

  setRange(feature: string, lo: number, hi: number): void {
    if (this.locked) return;
    this.state.ranges.set(feature, [lo, hi]);
  }

  discard(pfIndex: number): void {
    if (this.locked) return;
    this.discarded.add(pfIndex);
    if (this.selected === pfIndex) this.select(null);
    this.renderCards();
  }

  select(pfIndex: number | null): void {
    if (this.locked) return;
    this.selected = pfIndex;
    for (const listener of this.selectionListeners) listener(pfIndex);
    this.renderCards();
  }

  async run(): Promise<void> {
    if (this.locked) return;
    this.errorHost.replaceChildren();
    try {
      this.response = await this.api.whatIf(this.learnerId, buildRequest(this.state));
      this.discarded.clear();
      this.select(null);
      this.renderCards();
      this.renderTable();
    } catch (error) {
      this.response = null;
      this.renderCards();
      this.renderTable();
      const banner = document.createElement('div');
      banner.className = 'reason-banner';
      banner.textContent =
        error instanceof ApiError
          ? `The service rejected this configuration: ${error.detail}`
          : `Request failed: ${String(error)}`;
      this.errorHost.appendChild(banner);
    }
  }

  visiblePathways(): Pathway[] {
    if (!this.response) return [];
    return this.response.pathways.filter((p) => !this.discarded.has(p.index));
  }

  private renderCards(): void {
    this.cardsHost.replaceChildren();
    const pathways = this.visiblePathways();
    if (pathways.length === 0) {
      const empty = document.createElement('div');
      empty.className = 'placeholder';
      empty.textContent = 'No pathways to show. Adjust the constraints and re-run.';
      this.cardsHost.appendChild(empty);
      return;
    }
    for (const pathway of pathways) {
      this.cardsHost.appendChild(this.renderCard(pathway));
    }
  }

  private renderCard(pathway: Pathway): HTMLElement {
    const card = document.createElement('div');
    card.className = 'pathway-card';
    card.dataset.pfIndex = String(pathway.index);
    if (this.selected === pathway.index) card.classList.add('selected');

    const title = document.createElement('h4');
    title.textContent = `PF${pathway.index}`;
    const probability = document.createElement('div');
    probability.className = 'pathway-probability';
    probability.textContent =
      `completion ${(100 * pathway.predicted_completion_probability).toFixed(1)}%` +
      ` after ${pathway.sparsity} change${pathway.sparsity === 1 ? '' : 's'}`;
    card.append(title, probability);

    const list = document.createElement('ul');
    list.className = 'delta-list';
    for (const delta of pathway.raw_deltas) {
      const item = document.createElement('li');
      item.className = `delta delta-${delta.direction}`;
      item.dataset.feature = delta.feature;
      item.textContent = `${delta.display}: ${delta.from} → ${delta.to}`;
      list.appendChild(item);
    }
    card.appendChild(list);

    const actions = document.createElement('div');
    actions.className = 'card-actions';
    const selectButton = document.createElement('button');
    selectButton.className = 'select-pathway';
    selectButton.textContent = this.selected === pathway.index ? 'Selected' : 'Select';
    selectButton.disabled = this.locked;
    selectButton.addEventListener('click', () => this.select(pathway.index));
    const discardButton = document.createElement('button');
    discardButton.className = 'discard-pathway';
    discardButton.textContent = 'Discard';
    discardButton.disabled = this.locked;
    discardButton.addEventListener('click', () => this.discard(pathway.index));
    actions.append(selectButton, discardButton);
    card.appendChild(actions);
    return card;
  }

  private renderTable(): void {
    this.tableHost.replaceChildren();
    if (!this.response) return;
    const table = document.createElement('table');
    table.className = 'whatif-table';
    const head = document.createElement('tr');
    for (const column of this.response.table.columns) {
      const th = document.createElement('th');
      th.textContent = column;
      head.appendChild(th);
    }
    table.appendChild(head);
    for (const row of this.response.table.rows) {
      const tr = document.createElement('tr');
      for (const cell of row) {
        const td = document.createElement('td');
        td.textContent = cell;
        tr.appendChild(td);
      }
      table.appendChild(tr);
    }
    this.tableHost.appendChild(table);
  }
}
