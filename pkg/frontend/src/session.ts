/** The editor session: a draft graph, its metadata form, and the
 * validate-then-submit lifecycle.
 *
 * The hub stays authoritative for semantics; the session only enforces
 * what must be blocked inline (attribute shapes, unknown endpoints,
 * label inference) and tracks which exact bytes the server last saw, so
 * a submit always carries the validated document byte-for-byte.
 */

import { checkAttribute } from "./attributes.js";
import { exportGraphml } from "./graphml.js";
import { HubClient } from "./api.js";
import {
  FILE_REF_KINDS,
  FLOW_KINDS,
  SPEC_FOR_RUN,
  type AttributeValue,
  type CanvasEdge,
  type CanvasNode,
  type EdgeLabel,
  type FieldError,
  type NodeKind,
  type ProcedureLibrary,
  type SampleMetadata,
  type ValidationReport,
  type Violation,
} from "./types.js";

export class DraftError extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

export interface SubmitResult {
  sampleId: string;
  historyNodes: Array<{ node_id: string; kind: string; name: string }>;
  row: Record<string, unknown> | null;
}

export function inferEdgeLabel(src: NodeKind, dst: NodeKind): EdgeLabel {
  if (SPEC_FOR_RUN[src] === dst) return "has_spec";
  if (src === "measurement_run" && dst === "instrument_run") return "uses";
  if ((src === "person" || src === "organization")
      && (dst === "project" || dst === "process_run")) return "role_in";
  if (FLOW_KINDS.has(src) && FLOW_KINDS.has(dst)) return "flows_to";
  return "part_of";
}

export class EditorSession {
  metadata: SampleMetadata;
  nodes = new Map<string, CanvasNode>();
  edges: CanvasEdge[] = [];
  library: ProcedureLibrary | null = null;
  lastReport: ValidationReport | null = null;
  unsavedChanges = false;

  private counter = 0;
  private lastValidatedBytes: string | null = null;

  constructor(public client: HubClient, metadata: SampleMetadata) {
    this.metadata = { ...metadata };
  }

  async loadLibrary(): Promise<ProcedureLibrary> {
    this.library = await this.client.library();
    return this.library;
  }

  // ---- edit actions -----------------------------------------------------

  private touch(): void {
    this.unsavedChanges = true;
  }

  setMetadata(update: Partial<SampleMetadata>): void {
    this.metadata = { ...this.metadata, ...update };
    this.touch();
  }

  addNode(kind: NodeKind, name: string, layout: { x: number; y: number },
          attributes: Record<string, AttributeValue> = {},
          options: { nodeId?: string; fileRef?: string; ontologyRef?: string;
                     tags?: string[] } = {}): CanvasNode {
    if (kind === "sample_root") {
      throw new DraftError("ROOT_IS_METADATA",
                           "the root comes from the sample metadata form");
    }
    for (const [attrName, value] of Object.entries(attributes)) {
      const errors = checkAttribute(value);
      if (errors.length > 0) {
        throw new DraftError("BAD_ATTRIBUTE",
                             `${attrName}: ${errors.map(e => e.message).join("; ")}`);
      }
    }
    if (options.fileRef !== undefined && !FILE_REF_KINDS.has(kind)) {
      throw new DraftError("FILE_REF_FORBIDDEN", `${kind} cannot carry a file`);
    }
    this.counter += 1;
    const nodeId = options.nodeId ?? `${this.metadata.sampleId}-n${this.counter}`;
    if (this.nodes.has(nodeId) || nodeId === this.metadata.sampleId) {
      throw new DraftError("DUPLICATE_NODE_ID", `node id '${nodeId}' already in draft`);
    }
    const node: CanvasNode = {
      nodeId, kind, name,
      attributes: { ...attributes },
      tags: [...(options.tags ?? [])],
      fileRef: options.fileRef,
      ontologyRef: options.ontologyRef,
      x: layout.x, y: layout.y,
    };
    this.nodes.set(nodeId, node);
    this.touch();
    return node;
  }

  /** Drop a palette entry onto the canvas. */
  addFromTemplate(templateName: string, layout: { x: number; y: number }): CanvasNode {
    if (!this.library) throw new DraftError("NO_LIBRARY", "palette not loaded yet");
    const template = this.library.templates.find(t => t.name === templateName);
    if (!template) throw new DraftError("NO_TEMPLATE", `no template '${templateName}'`);
    return this.addNode(template.kind, template.name, layout,
                        structuredClone(template.attributes));
  }

  connect(srcId: string, dstId: string, label?: EdgeLabel,
          attributes: Record<string, AttributeValue> = {}): CanvasEdge {
    const src = this.resolveEndpoint(srcId);
    const dst = this.resolveEndpoint(dstId);
    const edge: CanvasEdge = {
      src: srcId, dst: dstId,
      label: label ?? inferEdgeLabel(src, dst),
      attributes: { ...attributes },
    };
    this.edges.push(edge);
    this.touch();
    return edge;
  }

  private resolveEndpoint(nodeId: string): NodeKind {
    if (nodeId === this.metadata.sampleId) return "sample_root";
    const node = this.nodes.get(nodeId);
    if (!node) throw new DraftError("UNKNOWN_NODE", `no draft node '${nodeId}'`);
    return node.kind;
  }

  removeDraftNode(nodeId: string): void {
    if (!this.nodes.delete(nodeId)) {
      throw new DraftError("UNKNOWN_NODE", `no draft node '${nodeId}'`);
    }
    this.edges = this.edges.filter(e => e.src !== nodeId && e.dst !== nodeId);
    this.touch();
  }

  disconnect(srcId: string, dstId: string, label: EdgeLabel): void {
    const before = this.edges.length;
    this.edges = this.edges.filter(
      e => !(e.src === srcId && e.dst === dstId && e.label === label));
    if (this.edges.length === before) {
      throw new DraftError("UNKNOWN_EDGE", `no ${label} edge ${srcId} -> ${dstId}`);
    }
    this.touch();
  }

  /** Returns field errors instead of applying when the value is malformed
   * (the form renders them inline and keeps the previous value). */
  configureAttribute(nodeId: string, name: string, value: AttributeValue): FieldError[] {
    const node = this.nodes.get(nodeId);
    if (!node) throw new DraftError("UNKNOWN_NODE", `no draft node '${nodeId}'`);
    const errors = checkAttribute(value);
    if (errors.length > 0) return errors;
    node.attributes[name] = value;
    this.touch();
    return [];
  }

  moveNode(nodeId: string, x: number, y: number): void {
    const node = this.nodes.get(nodeId);
    if (!node) throw new DraftError("UNKNOWN_NODE", `no draft node '${nodeId}'`);
    node.x = x;
    node.y = y;
    // layout is canvas-only: not a semantic change, draft stays clean
  }

  // ---- validate and submit ----------------------------------------------------

  exportGraphml(): string {
    return exportGraphml(this.metadata, [...this.nodes.values()], this.edges);
  }

  violationsFor(nodeId: string): Violation[] {
    if (!this.lastReport) return [];
    return this.lastReport.violations.filter(
      v => v.subject === nodeId || v.subject.startsWith(`${nodeId}:`)
        || v.subject.startsWith(`${nodeId}->`) || v.subject.endsWith(`->${nodeId}`));
  }

  async liveValidate(): Promise<ValidationReport> {
    const bytes = this.exportGraphml();
    const report = await this.client.validateProcedure(bytes);
    this.lastReport = report;
    this.lastValidatedBytes = bytes;
    this.unsavedChanges = false;
    return report;
  }

  /** Submit exactly the bytes the server last validated. */
  async submit(): Promise<SubmitResult> {
    if (!this.lastReport || this.lastValidatedBytes === null) {
      throw new DraftError("NOT_VALIDATED", "validate the draft before submitting");
    }
    if (!this.lastReport.ok) {
      throw new DraftError("DRAFT_INVALID", "fix the reported violations first");
    }
    if (this.unsavedChanges || this.exportGraphml() !== this.lastValidatedBytes) {
      throw new DraftError("STALE_VALIDATION",
                           "the draft changed since validation; validate again");
    }
    const receipt = await this.client.submitProcedure(this.lastValidatedBytes);
    const view = await this.client.sample(receipt.sample_id, "history");
    return {
      sampleId: receipt.sample_id,
      historyNodes: view.graph.nodes.map(n => ({
        node_id: String(n.node_id), kind: String(n.kind), name: String(n.name),
      })),
      row: view.row,
    };
  }
}
