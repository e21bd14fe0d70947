/**
 * Page wiring: student list on the left, explanation plus what-if loop for
 * the selected student on the right. Configuration comes from the page's
 * data attributes (service base URL and optional bearer token).
 */
import { ApiClient } from './api';
import { ApprovalFlow } from './approval';
import { ExplanationView, formatRiskPercent } from './explanation';
import { WhatIfController } from './whatif';

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

export async function bootstrap(root: HTMLElement): Promise<void> {
  const baseUrl = root.dataset.serviceUrl ?? 'http://127.0.0.1:8000';
  const token = root.dataset.serviceToken ?? '';
  const api = new ApiClient(baseUrl, token);

  const listHost = el('student-list');
  const explanationHost = el('explanation');
  const whatifControls = el('whatif-controls');
  const cardsHost = el('pathway-cards');
  const tableHost = el('pathway-table');
  const errorHost = el('whatif-errors');
  const approvalHost = el('approval');

  const students = await api.listStudents();
  const atRisk = students.filter((s) => s.risk_probability >= 0.5);

  const openStudent = async (learnerId: string) => {
    const view = new ExplanationView(api, explanationHost);
    await view.load(learnerId);

    const whatIf = new WhatIfController(
      api, learnerId, cardsHost, tableHost, errorHost,
    );
    new ApprovalFlow(api, learnerId, whatIf, approvalHost);
    renderControls(whatifControls, whatIf);
    await whatIf.run();
  };

  listHost.replaceChildren();
  for (const student of atRisk) {
    const row = document.createElement('button');
    row.className = 'student-row';
    row.textContent =
      `${student.learner_id} (${student.academic_year}) ` +
      `risk ${formatRiskPercent(student.completion_probability)}`;
    row.addEventListener('click', () => void openStudent(student.learner_id));
    listHost.appendChild(row);
  }
  if (atRisk.length > 0) await openStudent(atRisk[0].learner_id);
}

function renderControls(host: HTMLElement, whatIf: WhatIfController): void {
  host.replaceChildren();

  const freezable = [
    'grade_mark_mean',
    'assignment_mark_mean',
    'full_time_status',
    'study_mode',
    'qualification_percent_completed',
    'papers_failed_year',
    'papers_withdrawn_year',
    'ontime_submissions',
    'programme_credits_required',
  ];
  const list = document.createElement('div');
  list.className = 'freeze-list';
  for (const feature of freezable) {
    const label = document.createElement('label');
    const checkbox = document.createElement('input');
    checkbox.type = 'checkbox';
    checkbox.className = 'freeze-toggle';
    checkbox.dataset.feature = feature;
    checkbox.addEventListener('change', () =>
      whatIf.freeze(feature, checkbox.checked),
    );
    label.append(checkbox, document.createTextNode(` hold ${feature}`));
    list.appendChild(label);
  }
  host.appendChild(list);

  const seedInput = document.createElement('input');
  seedInput.type = 'number';
  seedInput.value = String(whatIf.state.seed);
  seedInput.className = 'seed-input';
  seedInput.addEventListener('change', () => {
    whatIf.state.seed = Number(seedInput.value) || 0;
  });

  const maxChanged = document.createElement('input');
  maxChanged.type = 'number';
  maxChanged.min = '1';
  maxChanged.max = '3';
  maxChanged.value = String(whatIf.state.maxChanged);
  maxChanged.className = 'max-changed-input';
  maxChanged.addEventListener('change', () => {
    whatIf.state.maxChanged = Math.max(1, Number(maxChanged.value) || 3);
  });

  const rerun = document.createElement('button');
  rerun.className = 'rerun-button';
  rerun.textContent = 'Re-run pathways';
  rerun.addEventListener('click', () => void whatIf.run());

  const controls = document.createElement('div');
  controls.className = 'run-controls';
  controls.append(
    labelled('seed', seedInput),
    labelled('max changes', maxChanged),
    rerun,
  );
  host.appendChild(controls);
}

function labelled(text: string, input: HTMLElement): HTMLElement {
  const label = document.createElement('label');
  label.append(document.createTextNode(`${text} `), input);
  return label;
}

const root = typeof document !== 'undefined' ? document.getElementById('app') : null;
if (root) {
  void bootstrap(root);
}
