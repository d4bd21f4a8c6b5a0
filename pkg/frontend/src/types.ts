export const ATTRIBUTE_NAMES = ["size", "porosity", "dispersity", "facetness"] as const;

export type AttributeName = (typeof ATTRIBUTE_NAMES)[number];

export type Attrs = Record<AttributeName, number>;

export interface HealthResponse {
  api_version: number;
  status: string;
  model_loaded: boolean;
  version: string;
}

export interface RenderResponse {
  api_version: number;
  image: string; // base64 PNG
  width: number;
  height: number;
}

export interface PredictResponse {
  api_version: number;
  stress: number;
}

export interface SweepResponse {
  api_version: number;
  attr_index: number;
  attr_name: AttributeName;
  grid: number[];
  predictions: number[];
  fixed_attrs: Attrs;
}

export interface CounterfactualConfigEcho {
  lambda: number;
  norm_order: number;
  step_size: number;
  max_iters: number;
  tol: number;
}

export interface CounterfactualReport {
  schema_version: number;
  seed: number;
  initial_attrs: Attrs;
  final_attrs: Attrs;
  deltas: Attrs;
  initial_prediction: number;
  target: number;
  achieved_prediction: number;
  objective_trajectory: number[];
  iterations: number;
  converged: boolean;
  config: CounterfactualConfigEcho;
}

export interface ApiErrorBody {
  api_version: number;
  code: string;
  message: string;
}

export function clamp01(value: number): number {
  return Math.min(1, Math.max(0, value));
}

export function attrsToArray(attrs: Attrs): [number, number, number, number] {
  return [attrs.size, attrs.porosity, attrs.dispersity, attrs.facetness];
}
