/**
 * Draft-and-approve flow for a selected pathway.
 *
 * The approve action stays disabled until a pathway is selected and the
 * advisor has marked the drafted text as reviewed; a successful approval
 * freezes the whole what-if loop against further edits.
 */
import { ApiClient, ApiError } from './api';
import type { FeedbackDraft } from './types';
import { WhatIfController, buildRequest } from './whatif';

export class ApprovalFlow {
  private draft: FeedbackDraft | null = null;
  private reviewed = false;

  readonly draftButton: HTMLButtonElement;
  readonly approveButton: HTMLButtonElement;
  readonly reviewedCheckbox: HTMLInputElement;
  readonly noteInput: HTMLInputElement;
  private readonly statusHost: HTMLElement;
  private readonly remedialHost: HTMLElement;
  private readonly messageHost: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly learnerId: string,
    private readonly whatIf: WhatIfController,
    host: HTMLElement,
  ) {
    host.replaceChildren();
    this.draftButton = document.createElement('button');
    this.draftButton.className = 'draft-button';
    this.draftButton.textContent = 'Draft feedback';
    this.draftButton.disabled = true;

    this.statusHost = document.createElement('div');
    this.statusHost.className = 'feedback-status';
    this.remedialHost = document.createElement('div');
    this.remedialHost.className = 'feedback-remedial';

    const reviewLabel = document.createElement('label');
    this.reviewedCheckbox = document.createElement('input');
    this.reviewedCheckbox.type = 'checkbox';
    this.reviewedCheckbox.className = 'reviewed-checkbox';
    this.reviewedCheckbox.disabled = true;
    reviewLabel.append(this.reviewedCheckbox, document.createTextNode(' I have reviewed this text'));

    this.noteInput = document.createElement('input');
    this.noteInput.type = 'text';
    this.noteInput.className = 'advisor-note';
    this.noteInput.placeholder = 'Advisor note';

    this.approveButton = document.createElement('button');
    this.approveButton.className = 'approve-button';
    this.approveButton.textContent = 'Approve';
    this.approveButton.disabled = true;

    this.messageHost = document.createElement('div');
    this.messageHost.className = 'approval-messages';

    host.append(
      this.draftButton,
      this.statusHost,
      this.remedialHost,
      reviewLabel,
      this.noteInput,
      this.approveButton,
      this.messageHost,
    );

    this.whatIf.onSelectionChange((pfIndex) => {
      this.draftButton.disabled = pfIndex === null || this.whatIf.isLocked;
      this.clearDraft();
    });
    this.draftButton.addEventListener('click', () => void this.draftSelected());
    this.reviewedCheckbox.addEventListener('change', () => {
      this.reviewed = this.reviewedCheckbox.checked;
      this.syncApprove();
    });
    this.approveButton.addEventListener('click', () => void this.approveDraft());
  }

  get currentDraft(): FeedbackDraft | null {
    return this.draft;
  }

  private clearDraft(): void {
    this.draft = null;
    this.reviewed = false;
    this.reviewedCheckbox.checked = false;
    this.reviewedCheckbox.disabled = true;
    this.statusHost.replaceChildren();
    this.remedialHost.replaceChildren();
    this.syncApprove();
  }

  private syncApprove(): void {
    const selected = this.whatIf.selectedPathway !== null;
    this.approveButton.disabled =
      !selected || this.draft === null || !this.reviewed ||
      this.draft.approved || this.whatIf.isLocked;
  }

  /** Bold segments in the drafted text render as emphasized spans. */
  private renderText(host: HTMLElement, heading: string, text: string): void {
    host.replaceChildren();
    const title = document.createElement('h4');
    title.textContent = heading;
    host.appendChild(title);
    for (const line of text.split('\n')) {
      const paragraph = document.createElement('p');
      const parts = line.split('**');
      parts.forEach((part, i) => {
        if (i % 2 === 1) {
          const strong = document.createElement('strong');
          strong.className = 'derived-value';
          strong.textContent = part;
          paragraph.appendChild(strong);
        } else if (part) {
          paragraph.appendChild(document.createTextNode(part));
        }
      });
      host.appendChild(paragraph);
    }
  }

  async draftSelected(): Promise<void> {
    const pathway = this.whatIf.selectedPathway;
    if (!pathway || this.whatIf.isLocked) return;
    this.messageHost.replaceChildren();
    try {
      this.draft = await this.api.draftFeedback(this.learnerId, {
        ...buildRequest(this.whatIf.state),
        pf_index: pathway.index,
      });
      this.renderText(this.statusHost, 'Current standing', this.draft.status_text);
      this.renderText(this.remedialHost, 'Suggested adjustments', this.draft.remedial_text);
      this.reviewedCheckbox.disabled = false;
      this.syncApprove();
    } catch (error) {
      this.showMessage(
        error instanceof ApiError
          ? `Drafting failed: ${error.detail}`
          : `Drafting failed: ${String(error)}`,
      );
    }
  }

  async approveDraft(): Promise<void> {
    if (!this.draft || this.approveButton.disabled) return;
    this.messageHost.replaceChildren();
    try {
      this.draft = await this.api.approve(this.draft.draft_id, this.noteInput.value);
      this.showMessage(`Approved ${this.draft.draft_id}; feedback is now locked.`);
      this.lockEverything();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // another advisor won the race; reconcile by locking this view too
        this.showMessage('This draft was already approved elsewhere.');
        this.lockEverything();
      } else {
        this.showMessage(`Approval failed: ${String(error)}`);
      }
    }
  }

  private lockEverything(): void {
    this.whatIf.lock();
    this.draftButton.disabled = true;
    this.approveButton.disabled = true;
    this.reviewedCheckbox.disabled = true;
    this.noteInput.disabled = true;
  }

  private showMessage(text: string): void {
    const note = document.createElement('div');
    note.className = 'approval-note';
    note.textContent = text;
    this.messageHost.appendChild(note);
  }
}
