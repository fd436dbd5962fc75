/** DOM editor: palette on the left, canvas in the middle, inspector on the
 * right. Nodes are absolutely positioned cards, edges an SVG underlay.
 * Violations from the last validation render as badges on the offending
 * cards, and the submit button only arms on a green report. */

import { ApiError, NetworkError } from "./api.js";
import { DraftError, EditorSession } from "./session.js";
import type { AttributeValue, CanvasNode, NodeKind } from "./types.js";

const KIND_COLORS: Partial<Record<NodeKind, string>> = {
  sample_root: "#f2c14e",      // the Fig-2 palette: roots yellow,
  process_run: "#4e79d0",      // processes blue,
  process_spec: "#9fb6e8",
  material_run: "#b08fd0",     // materials purple, ingredients orange
  material_spec: "#d6c6ea",
  ingredient_run: "#e08a4a",
  ingredient_spec: "#f0c4a0",
  measurement_run: "#56a877",
  measurement_spec: "#a8d4bc",
  instrument_run: "#8a8f98",
};

export class EditorApp {
  private selected: string | null = null;
  private statusBar!: HTMLElement;
  private canvas!: HTMLElement;
  private edgeLayer!: SVGSVGElement;
  private inspector!: HTMLElement;
  private submitButton!: HTMLButtonElement;

  constructor(private root: HTMLElement, private session: EditorSession) {}

  async start(): Promise<void> {
    this.root.innerHTML = `
      <div class="editor">
        <aside class="palette"><h2>Palette</h2><ul id="palette-list"></ul></aside>
        <main class="canvas-wrap">
          <div class="toolbar">
            <button id="validate-btn">Validate</button>
            <button id="submit-btn" disabled>Submit</button>
            <span id="status"></span>
          </div>
          <div id="canvas" class="canvas">
            <svg id="edges" class="edges"></svg>
          </div>
        </main>
        <aside class="inspector"><h2>Sample</h2><div id="meta-form"></div>
          <h2>Node</h2><div id="inspector-body">select a node</div></aside>
      </div>`;
    this.statusBar = this.query("#status");
    this.canvas = this.query("#canvas");
    this.edgeLayer = this.query("#edges");
    this.inspector = this.query("#inspector-body");
    this.submitButton = this.query("#submit-btn");

    this.query<HTMLButtonElement>("#validate-btn").onclick = () => void this.validate();
    this.submitButton.onclick = () => void this.submit();
    this.renderMetadataForm();
    await this.renderPalette();
    this.wireCanvas();
    this.redraw();
  }

  private query<T extends Element>(selector: string): T {
    const el = this.root.querySelector(selector);
    if (!el) throw new Error(`missing element ${selector}`);
    return el as T;
  }

  private async renderPalette(): Promise<void> {
    const library = await this.session.loadLibrary();
    const list = this.query<HTMLUListElement>("#palette-list");
    for (const template of library.templates) {
      const item = document.createElement("li");
      item.textContent = `${template.name} (${template.kind})`;
      item.draggable = true;
      item.style.borderLeft = `6px solid ${KIND_COLORS[template.kind] ?? "#ccc"}`;
      item.addEventListener("dragstart", ev => {
        ev.dataTransfer?.setData("application/x-qdh-template", template.name);
      });
      list.appendChild(item);
    }
  }

  private renderMetadataForm(): void {
    const form = this.query<HTMLDivElement>("#meta-form");
    form.innerHTML = "";
    for (const field of ["sampleId", "name", "projectId", "description"] as const) {
      const label = document.createElement("label");
      label.textContent = field;
      const input = document.createElement("input");
      input.value = String(this.session.metadata[field] ?? "");
      input.onchange = () => {
        this.session.setMetadata({ [field]: input.value });
        this.setStatus("draft changed; validate again", "warn");
      };
      label.appendChild(input);
      form.appendChild(label);
    }
  }

  private wireCanvas(): void {
    this.canvas.addEventListener("dragover", ev => ev.preventDefault());
    this.canvas.addEventListener("drop", ev => {
      ev.preventDefault();
      const name = ev.dataTransfer?.getData("application/x-qdh-template");
      if (!name) return;
      const rect = this.canvas.getBoundingClientRect();
      try {
        this.session.addFromTemplate(name, { x: ev.clientX - rect.left,
                                             y: ev.clientY - rect.top });
        this.redraw();
      } catch (err) {
        this.showError(err);
      }
    });
  }

  private redraw(): void {
    for (const el of Array.from(this.canvas.querySelectorAll(".node-card"))) el.remove();
    for (const node of this.session.nodes.values()) {
      this.canvas.appendChild(this.nodeCard(node));
    }
    this.drawEdges();
    this.submitButton.disabled = !(this.session.lastReport?.ok
                                   && !this.session.unsavedChanges);
  }

  private nodeCard(node: CanvasNode): HTMLElement {
    const card = document.createElement("div");
    card.className = "node-card";
    card.style.left = `${node.x}px`;
    card.style.top = `${node.y}px`;
    card.style.background = KIND_COLORS[node.kind] ?? "#e8e8e8";
    card.dataset.nodeId = node.nodeId;
    card.innerHTML = `<strong>${node.name}</strong><br><small>${node.kind}</small>`;
    const violations = this.session.violationsFor(node.nodeId);
    if (violations.length > 0) {
      const badge = document.createElement("span");
      badge.className = "violation-badge";
      badge.title = violations.map(v => `${v.code}: ${v.message}`).join("\n");
      badge.textContent = violations[0]!.code;
      card.appendChild(badge);
    }
    card.onclick = ev => {
      if (ev.shiftKey && this.selected && this.selected !== node.nodeId) {
        try {
          this.session.connect(this.selected, node.nodeId);
          this.setStatus("edge drawn; validate again", "warn");
        } catch (err) {
          this.showError(err);
        }
        this.selected = null;
      } else {
        this.selected = node.nodeId;
        this.renderInspector(node);
      }
      this.redraw();
    };
    return card;
  }

  private drawEdges(): void {
    this.edgeLayer.innerHTML = "";
    for (const edge of this.session.edges) {
      const src = this.session.nodes.get(edge.src);
      const dst = this.session.nodes.get(edge.dst);
      if (!src || !dst) continue;  // edges to the metadata root are implicit
      const line = document.createElementNS("http://www.w3.org/2000/svg", "line");
      line.setAttribute("x1", String(src.x + 60));
      line.setAttribute("y1", String(src.y + 20));
      line.setAttribute("x2", String(dst.x + 60));
      line.setAttribute("y2", String(dst.y + 20));
      line.setAttribute("class", `edge edge-${edge.label}`);
      this.edgeLayer.appendChild(line);
      const text = document.createElementNS("http://www.w3.org/2000/svg", "text");
      text.setAttribute("x", String((src.x + dst.x) / 2 + 60));
      text.setAttribute("y", String((src.y + dst.y) / 2 + 14));
      text.textContent = edge.label;
      this.edgeLayer.appendChild(text);
    }
  }

  private renderInspector(node: CanvasNode): void {
    this.inspector.innerHTML = `<p><strong>${node.nodeId}</strong> (${node.kind})</p>`;
    for (const [name, value] of Object.entries(node.attributes)) {
      const row = document.createElement("div");
      row.className = "attr-row";
      row.textContent = `${name}: ${JSON.stringify(value)}`;
      this.inspector.appendChild(row);
    }
    const addBounds = document.createElement("button");
    addBounds.textContent = "set uniform_real attribute";
    addBounds.onclick = () => {
      const name = prompt("attribute name", "temperature") ?? "temperature";
      const lo = Number(prompt("lower bound", "450.5"));
      const hi = Number(prompt("upper bound", "451.5"));
      const units = prompt("units", "celsius") ?? "celsius";
      const value: AttributeValue = { type: "uniform_real", units,
                                      lower_bound: lo, upper_bound: hi };
      const errors = this.session.configureAttribute(node.nodeId, name, value);
      if (errors.length > 0) {
        this.setStatus(errors.map(e => e.message).join("; "), "error");
      } else {
        this.renderInspector(node);
        this.setStatus("attribute set; validate again", "warn");
      }
    };
    this.inspector.appendChild(addBounds);
    const remove = document.createElement("button");
    remove.textContent = "delete from draft";
    remove.onclick = () => {
      this.session.removeDraftNode(node.nodeId);
      this.selected = null;
      this.inspector.textContent = "select a node";
      this.redraw();
    };
    this.inspector.appendChild(remove);
  }

  private async validate(): Promise<void> {
    try {
      const report = await this.session.liveValidate();
      this.setStatus(report.ok ? "draft is valid — submit enabled"
                               : `${report.violations.length} violation(s)`,
                     report.ok ? "ok" : "error");
    } catch (err) {
      this.showError(err);  // the draft is untouched on network failure
    }
    this.redraw();
  }

  private async submit(): Promise<void> {
    try {
      const result = await this.session.submit();
      this.setStatus(`submitted as ${result.sampleId}`, "ok");
      this.renderHistory(result.sampleId, result.historyNodes);
    } catch (err) {
      this.showError(err);
    }
  }

  private renderHistory(sampleId: string,
                        nodes: Array<{ node_id: string; kind: string; name: string }>): void {
    const panel = document.createElement("div");
    panel.className = "history-panel";
    panel.innerHTML = `<h2>Material history of ${sampleId} (read-only)</h2>`;
    for (const node of nodes) {
      const chip = document.createElement("span");
      chip.className = "history-chip";
      chip.style.background = KIND_COLORS[node.kind as NodeKind] ?? "#e8e8e8";
      chip.textContent = `${node.name} [${node.kind}]`;
      panel.appendChild(chip);
    }
    this.canvas.appendChild(panel);
  }

  private setStatus(text: string, level: "ok" | "warn" | "error"): void {
    this.statusBar.textContent = text;
    this.statusBar.className = `status-${level}`;
  }

  private showError(err: unknown): void {
    if (err instanceof NetworkError) {
      this.setStatus(`server unreachable — draft preserved (${err.message})`, "error");
    } else if (err instanceof ApiError || err instanceof DraftError) {
      this.setStatus(err.message, "error");
    } else {
      this.setStatus(String(err), "error");
    }
  }
}
