// Wire types mirroring the service JSON (snake_case fields kept verbatim)
// plus the UI message model. The UI never computes nutrition values; every
// displayed number traces back to one of these fields.

export interface ParsedIngredientJson {
  name: string;
  quantity: number;
  unit: string;
  unit_kind: string;
  raw_line: string;
}

export interface EstimateJson {
  ingredient: ParsedIngredientJson;
  matched_food_id: string | null;
  grams: number;
  kcal: number;
  match_score: number;
  flags: string[];
}

export interface ReportJson {
  estimates: EstimateJson[];
  total_kcal: number;
  generated_answer: string;
}

export interface HitJson {
  doc_id: string;
  score: number;
  text: string;
}

export interface EvidenceJson {
  query_text: string;
  hits: HitJson[];
  k_requested: number;
}

export interface AnalysisJson {
  stage1_text: string;
  parsed: ParsedIngredientJson[];
  report: ReportJson;
  final_answer: string;
  evidence: EvidenceJson[];
}

export interface ChatResponseJson {
  session_id: string;
  assistant_text: string;
}

export interface HealthJson {
  status: string;
  kb_digest: string;
  vlm_mode: string;
  max_image_bytes: number;
}

export type UiRole = "user" | "assistant";

export interface UiMessage {
  role: UiRole;
  text: string;
  imageName?: string;
  report?: ReportJson;
  evidence?: EvidenceJson[];
  banner?: string;
}

export const ALLOWED_IMAGE_TYPES = ["image/jpeg", "image/png", "image/webp"] as const;
