import { describe, expect, it } from "vitest";

import { TopologyEditor } from "../src/topology.js";
import type { ExperimentSpec } from "../src/types.js";
import { fixture } from "./util.js";

function loadPreset(name: string): { editor: TopologyEditor; spec: ExperimentSpec } {
  const spec = fixture<ExperimentSpec>(name);
  const editor = new TopologyEditor();
  editor.load(Object.keys(spec.nodes).map(Number), spec.topology.adjacency);
  return { editor, spec };
}

describe("TopologyEditor", () => {
  it.each(["preset_ring_5.json", "preset_star_4.json", "preset_eclipse_4.json"])(
    "reproduces %s adjacency verbatim after a no-op edit",
    (name) => {
      const { editor, spec } = loadPreset(name);
      expect(JSON.stringify(editor.exportAdjacency())).toBe(
        JSON.stringify(spec.topology.adjacency),
      );
    },
  );

  it("turns a ring into a line when one link is removed", () => {
    const { editor } = loadPreset("preset_ring_5.json");
    editor.toggle(1, 2);
    expect(editor.exportAdjacency()).toEqual({
      "1": [5],
      "2": [3],
      "3": [2, 4],
      "4": [3, 5],
      "5": [1, 4],
    });
    expect(editor.connected()).toBe(true);
  });

  it("restores the exact ring when the removed link is re-added", () => {
    const { editor, spec } = loadPreset("preset_ring_5.json");
    editor.toggle(1, 2);
    editor.toggle(2, 1);
    expect(JSON.stringify(editor.exportAdjacency())).toBe(
      JSON.stringify(spec.topology.adjacency),
    );
  });

  it("treats links as undirected", () => {
    const editor = new TopologyEditor();
    editor.load([1, 2], { "1": [2], "2": [] });
    expect(editor.linked(2, 1)).toBe(true);
    editor.toggle(2, 1);
    expect(editor.exportAdjacency()).toEqual({ "1": [], "2": [] });
  });

  it("rejects adjacency entries for unknown node ids", () => {
    const editor = new TopologyEditor();
    expect(() => editor.load([1, 2], { "1": [2], "9": [1] })).toThrow(/unknown node id 9/);
    expect(() => editor.load([1, 2], { "1": [7] })).toThrow(/unknown node id 7/);
    expect(() => editor.load([1, 2], { "1": [1] })).toThrow(/self link/);
  });

  it("shows the eclipse victim as isolated in the rendered grid", () => {
    const { editor } = loadPreset("preset_eclipse_4.json");
    expect(editor.isolated(1)).toBe(true);
    expect(editor.isolated(2)).toBe(false);

    const root = document.createElement("div");
    editor.render(root);
    const victim = root.querySelector<HTMLElement>('th[data-node="1"]')!;
    expect(victim.classList.contains("isolated")).toBe(true);
    expect(victim.querySelector(".badge.warn")).not.toBeNull();
    expect(root.querySelectorAll("th.isolated")).toHaveLength(1);
    // Disconnected is a warning, not an error: the grid stays usable.
    expect(root.querySelector(".warn.disconnected")).not.toBeNull();
    expect(root.querySelectorAll("button.cell:not(.self):not([disabled])").length).toBeGreaterThan(0);
  });

  it("keeps connected graphs free of the disconnect warning", () => {
    const { editor } = loadPreset("preset_ring_5.json");
    const root = document.createElement("div");
    editor.render(root);
    expect(root.querySelector(".warn.disconnected")).toBeNull();
    expect(root.querySelectorAll("th.isolated")).toHaveLength(0);
  });

  it("disables self-link cells", () => {
    const { editor } = loadPreset("preset_star_4.json");
    const root = document.createElement("div");
    editor.render(root);
    const self = root.querySelector<HTMLButtonElement>('button[data-a="2"][data-b="2"]')!;
    expect(self.disabled).toBe(true);
    expect(self.classList.contains("self")).toBe(true);
    editor.toggle(2, 2);
    expect(editor.exportAdjacency()["2"]).toEqual([1]);
  });

  it("toggles links from grid clicks and re-renders", () => {
    const { editor } = loadPreset("preset_star_4.json");
    const root = document.createElement("div");
    editor.render(root);
    expect(editor.linked(2, 3)).toBe(false);
    root.querySelector<HTMLButtonElement>('button[data-a="2"][data-b="3"]')!.click();
    expect(editor.linked(2, 3)).toBe(true);
    expect(
      root.querySelector<HTMLButtonElement>('button[data-a="2"][data-b="3"]')!.classList.contains("on"),
    ).toBe(true);
  });

  it("ignores toggles while locked", () => {
    const { editor, spec } = loadPreset("preset_ring_5.json");
    editor.locked = true;
    editor.toggle(1, 2);
    expect(JSON.stringify(editor.exportAdjacency())).toBe(
      JSON.stringify(spec.topology.adjacency),
    );
  });
});
