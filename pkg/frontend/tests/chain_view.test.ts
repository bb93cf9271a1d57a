import { describe, expect, it } from "vitest";

import { renderChainView, UNKNOWN_COLOR } from "../src/chain_view.js";
import type { ChainView } from "../src/types.js";
import { cssColor, fixture } from "./util.js";

// Matches the palette order the backend assigns to nodes 1..3.
const COLORS = { 1: "#e6194b", 2: "#3cb44b", 3: "#4363d8" };

function render(view: ChainView | null, colors = COLORS): HTMLElement {
  const root = document.createElement("div");
  renderChainView(root, view, colors);
  return root;
}

describe("renderChainView", () => {
  it("draws the forked window as three canonical blocks and one side block", () => {
    const root = render(fixture<ChainView>("chain_view_fork.json"));
    expect(root.querySelectorAll(".block.canonical")).toHaveLength(3);
    expect(root.querySelectorAll(".block.side")).toHaveLength(1);
    expect(root.querySelectorAll(".block.genesis")).toHaveLength(1);
    expect(root.querySelectorAll(".block.genesis.canonical")).toHaveLength(0);
  });

  it("orders the main row left to right by height", () => {
    const root = render(fixture<ChainView>("chain_view_fork.json"));
    const heights = [...root.querySelectorAll<HTMLElement>(".chain-col")].map(
      (c) => c.dataset.height,
    );
    expect(heights).toEqual(["0", "1", "2", "3"]);
  });

  it("hangs the side block off the column where its canonical sibling sits", () => {
    // The loser of the height-2 fork shares its parent with the canonical
    // height-2 block, so both live in the same column.
    const root = render(fixture<ChainView>("chain_view_fork.json"));
    const side = root.querySelector<HTMLElement>(".block.side")!;
    expect(side.dataset.height).toBe("2");
    const col = side.closest<HTMLElement>(".chain-col")!;
    expect(col.querySelector(".block.canonical")).not.toBeNull();
    expect(col.querySelector<HTMLElement>(".block.canonical")!.dataset.height).toBe("2");
  });

  it("fills each block with its miner's color", () => {
    const root = render(fixture<ChainView>("chain_view_fork.json"));
    const byMiner = (m: string) =>
      root.querySelector<HTMLElement>(`.block.canonical[data-miner="${m}"]`)!;
    expect(byMiner("1").style.background).toBe(cssColor(COLORS[1]));
    expect(byMiner("3").style.background).toBe(cssColor(COLORS[3]));
    const side = root.querySelector<HTMLElement>(".block.side")!;
    expect(side.style.background).toBe(cssColor(COLORS[2]));
  });

  it("marks miners without a known color gray with a warning badge", () => {
    const root = render(fixture<ChainView>("chain_view_fork.json"), { 1: "#e6194b", 2: "#3cb44b" });
    const unknown = root.querySelector<HTMLElement>(".block.unknown")!;
    expect(unknown.dataset.miner).toBe("3");
    expect(unknown.style.background).toBe(cssColor(UNKNOWN_COLOR));
    expect(unknown.querySelector(".badge.warn")).not.toBeNull();
    expect(root.querySelectorAll(".badge.warn")).toHaveLength(1);
  });

  it("renders a linear chain as a single row without branches", () => {
    const root = render(fixture<ChainView>("chain_view_linear.json"));
    expect(root.querySelectorAll(".block.side")).toHaveLength(0);
    expect(root.querySelectorAll(".block.canonical")).toHaveLength(3);
  });

  it("shows a genesis placeholder before the node has any view", () => {
    for (const view of [null, { head_height: 0, window: [] }]) {
      const root = render(view as ChainView | null);
      expect(root.querySelectorAll(".block")).toHaveLength(1);
      expect(root.querySelector(".block.genesis.placeholder")).not.toBeNull();
    }
  });

  it("replaces earlier content on re-render instead of appending", () => {
    const root = document.createElement("div");
    renderChainView(root, fixture<ChainView>("chain_view_fork.json"), COLORS);
    renderChainView(root, fixture<ChainView>("chain_view_fork.json"), COLORS);
    expect(root.querySelectorAll(".block.side")).toHaveLength(1);
    expect(root.querySelectorAll(".block.canonical")).toHaveLength(3);
  });
});
