// Payload shapes of the speclint HTTP API. The client renders these
// verbatim; all label/verdict logic stays on the server.

export interface SegmentView {
  segment_id: string;
  section_path: string;
  text: string;
}

export interface PredictionView {
  label: string;
  probs: Record<string, number>;
  confidence: number;
}

export interface QueueItem {
  pair_id: string;
  segment_a: SegmentView;
  segment_b: SegmentView;
  psi: number;
  model_prediction: PredictionView;
  annotated: boolean;
}

export interface QueueResponse {
  phase: number;
  total: number;
  pending: number;
  offset: number;
  items: QueueItem[];
}

export interface ProjectSummary {
  project_id: string;
  phase_state: { current_phase: number; status: string };
  phase_label: string;
  k_phases: number;
  sample_size: number;
  confidence_threshold: number;
  segments: number;
  pairs: number;
  candidates: number;
  annotations: number;
}

export interface AnnotationResponse {
  pair_id: string;
  case: number;
  nli: string;
  verdict: string;
  pending: number;
}

export interface AdvanceResponse {
  status: string;
  completed_phase: number | null;
  report: Record<string, unknown> | null;
  next_phase: number | null;
  pending: number;
}

export interface ResultItem {
  pair_id: string;
  segment_a: SegmentView;
  segment_b: SegmentView;
  psi: number;
  final: string;
  verdict: string;
  confidence: number;
  status: string;
}

export interface ResultsResponse {
  phase: number;
  total: number;
  confirmed: number;
  context_fp: number;
  items: ResultItem[];
}

export interface TriageResponse {
  pair_id: string;
  status: string;
  confirmed: number;
  context_fp: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  [extra: string]: unknown;
}
