import { describe, expect, it } from "vitest";

import { exportGraphml } from "../src/graphml.js";
import type { CanvasEdge, CanvasNode, SampleMetadata } from "../src/types.js";

const META: SampleMetadata = {
  sampleId: "draft-1",
  name: "Test sample",
  projectId: "proj-x",
  description: "a <description> with \"quotes\" & ampersands",
};

function someNodes(): CanvasNode[] {
  return [
    {
      nodeId: "n-mat", kind: "material_run", name: "Feed & stock",
      attributes: {
        purity: { type: "real_scalar", value: 99.5, units: "percent" },
        temperature: { type: "uniform_real", units: "celsius",
                       lower_bound: 450.5, upper_bound: 451.5 },
      },
      tags: ["starting"], x: 10, y: 20,
    },
    {
      nodeId: "n-mat-spec", kind: "material_spec", name: "Feed spec",
      attributes: {}, tags: [], x: 200, y: 20,
    },
  ];
}

function someEdges(): CanvasEdge[] {
  return [{ src: "n-mat", dst: "n-mat-spec", label: "has_spec", attributes: {} },
          { src: "n-mat", dst: "draft-1", label: "flows_to", attributes: {} }];
}

describe("graphML export", () => {
  it("is deterministic regardless of insertion order", () => {
    const a = exportGraphml(META, someNodes(), someEdges());
    const b = exportGraphml(META, someNodes().reverse(), someEdges().reverse());
    expect(a).toBe(b);
  });

  it("never includes layout coordinates", () => {
    const doc = exportGraphml(META, someNodes(), someEdges());
    expect(doc).not.toMatch(/"x"|"y"|layout/);
  });

  it("escapes XML-significant characters", () => {
    const doc = exportGraphml(META, someNodes(), someEdges());
    expect(doc).toContain("Feed &amp; stock");
    // the description rides inside a JSON payload, so quotes are first
    // JSON-escaped, then XML-escaped
    expect(doc).toContain("a &lt;description&gt; with \\&quot;quotes\\&quot; &amp; ampersands");
    expect(doc).not.toContain("<description>");
  });

  it("synthesizes the root from metadata with text attributes", () => {
    const doc = exportGraphml(META, [], []);
    expect(doc).toContain('<node id="draft-1">');
    expect(doc).toContain("<data key=\"kind\">sample_root</data>");
    expect(doc).toContain("attr:project_id");
    expect(doc).toContain("proj-x");
  });

  it("serializes attribute payloads with sorted keys", () => {
    const doc = exportGraphml(META, someNodes(), []);
    expect(doc).toContain(xmlEscaped(
      '{"lower_bound":450.5,"type":"uniform_real","units":"celsius","upper_bound":451.5}'));
  });
});

function xmlEscaped(text: string): string {
  return text.replaceAll("&", "&amp;").replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;").replaceAll('"', "&quot;");
}
