/**
 * Payload types of the advisor service API. The UI renders these values
 * verbatim and never recomputes model numbers on the client.
 */

export interface StudentSummary {
  learner_id: string;
  academic_year: number;
  completion_probability: number;
  risk_probability: number;
}

export interface Prediction {
  learner_id: string;
  completion_probability: number;
  risk_probability: number;
  predicted_outcome: 'completed' | 'non_completed';
}

export interface ForcePlotBar {
  feature: string;
  value_display: string;
  phi: number;
  direction: 'completion' | 'non_completion';
}

export interface ForcePlotData {
  base: number;
  final: number;
  target_space: string;
  bars: ForcePlotBar[];
}

export interface AnchorData {
  predicates: string[];
  precision: number;
  precision_lb: number;
  coverage: number;
  predicted_class: number;
  anchored: boolean;
}

export interface Explanation {
  learner_id: string;
  completion_probability: number;
  force_plot: ForcePlotData;
  anchor: AnchorData;
}

export interface DeltaValue {
  from: number | string;
  to: number | string;
}

export interface RawDelta {
  feature: string;
  display: string;
  from: string;
  to: string;
  direction: 'increase' | 'decrease' | 'switch';
}

export interface Pathway {
  index: number;
  deltas: Record<string, DeltaValue>;
  predicted_completion_probability: number;
  valid: boolean;
  sparsity: number;
  proximity: number;
  raw_deltas: RawDelta[];
}

export interface WhatIfTable {
  columns: string[];
  rows: string[][];
}

export interface WhatIfResponse {
  learner_id: string;
  seed: number;
  cohort_key: string;
  pathways: Pathway[];
  table: WhatIfTable;
}

export interface WhatIfRequest {
  ranges?: Record<string, [number, number]>;
  frozen?: string[];
  max_changed?: number;
  k?: number;
  seed: number;
}

export interface DraftRequest extends WhatIfRequest {
  pf_index: number;
}

export interface FeedbackDraft {
  draft_id: string;
  student_ref: string;
  pf_index: number;
  status_text: string;
  remedial_text: string;
  provenance: string;
  created_at: number;
  approved: boolean;
  advisor_note: string;
}
