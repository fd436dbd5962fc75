/** Semantic payload types mirrored from the hub, plus canvas-only layout. */

export const NODE_KINDS = [
  "sample_root",
  "material_spec", "material_run",
  "ingredient_spec", "ingredient_run",
  "process_spec", "process_run",
  "measurement_spec", "measurement_run",
  "instrument_run",
  "person", "organization", "project",
  "dataset", "report", "tool", "service", "infrastructure",
] as const;

export type NodeKind = (typeof NODE_KINDS)[number];

export type EdgeLabel = "has_spec" | "flows_to" | "uses" | "role_in" | "part_of";

export const SPEC_FOR_RUN: Partial<Record<NodeKind, NodeKind>> = {
  material_run: "material_spec",
  ingredient_run: "ingredient_spec",
  process_run: "process_spec",
  measurement_run: "measurement_spec",
};

export const FLOW_KINDS: ReadonlySet<NodeKind> = new Set([
  "material_run", "ingredient_run", "process_run", "sample_root",
]);

export const FILE_REF_KINDS: ReadonlySet<NodeKind> = new Set([
  "measurement_run", "dataset", "report",
]);

export type AttributeType =
  | "real_scalar" | "uniform_real" | "integer" | "categorical" | "text" | "fraction";

export interface AttributeValue {
  type: AttributeType;
  value?: number | string;
  units?: string;
  lower_bound?: number;
  upper_bound?: number;
  basis?: "mass" | "volume" | "absolute";
}

/** A draft node: semantic fields plus layout. Layout never leaves the browser. */
export interface CanvasNode {
  nodeId: string;
  kind: NodeKind;
  name: string;
  attributes: Record<string, AttributeValue>;
  tags: string[];
  fileRef?: string;
  ontologyRef?: string;
  x: number;
  y: number;
}

export interface CanvasEdge {
  src: string;
  dst: string;
  label: EdgeLabel;
  attributes: Record<string, AttributeValue>;
}

/** The metadata form; the sample_root node is synthesized from it. */
export interface SampleMetadata {
  sampleId: string;
  name: string;
  projectId?: string;
  description?: string;
  owner?: string;
  date?: string;
  status?: string;
}

export interface Violation {
  code: string;
  subject: string;
  message: string;
}

export interface ValidationReport {
  ok: boolean;
  violations: Violation[];
}

export interface PaletteKind {
  kind: NodeKind;
  spec_kind: NodeKind | null;
  file_ref_allowed: boolean;
}

export interface PaletteTemplate {
  name: string;
  kind: NodeKind;
  attributes: Record<string, AttributeValue>;
}

export interface ProcedureLibrary {
  kinds: PaletteKind[];
  templates: PaletteTemplate[];
}

export interface FieldError {
  field: string;
  code: string;
  message: string;
}
