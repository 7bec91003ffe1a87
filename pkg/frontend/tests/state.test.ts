import { describe, expect, it } from "vitest";

import { emptySelection, isComplete, setBest, setWorst, toggleRank } from "../src/state.js";

describe("best/worst selection", () => {
  it("starts empty and incomplete", () => {
    const state = emptySelection();
    expect(state.best).toBeNull();
    expect(state.worst).toBeNull();
    expect(isComplete(state, "best_worst")).toBe(false);
  });

  it("requires both picks to differ", () => {
    let state = setBest(emptySelection(), "2");
    expect(isComplete(state, "best_worst")).toBe(false);
    state = setWorst(state, "4");
    expect(isComplete(state, "best_worst")).toBe(true);
  });

  it("picking the same key for both clears the older pick", () => {
    let state = setBest(emptySelection(), "2");
    state = setWorst(state, "2");
    expect(state.best).toBeNull();
    expect(state.worst).toBe("2");

    state = setBest(state, "2");
    expect(state.worst).toBeNull();
    expect(state.best).toBe("2");
  });

  it("clicking an active pick toggles it off", () => {
    let state = setBest(emptySelection(), "1");
    state = setBest(state, "1");
    expect(state.best).toBeNull();
  });
});

describe("rank selection", () => {
  it("appends ranks in click order", () => {
    let state = emptySelection();
    for (const key of ["3", "1", "4", "2"] as const) state = toggleRank(state, key);
    expect(state.ranking).toEqual(["3", "1", "4", "2"]);
    expect(isComplete(state, "rank")).toBe(true);
  });

  it("toggling a ranked key removes it", () => {
    let state = toggleRank(emptySelection(), "3");
    state = toggleRank(state, "1");
    state = toggleRank(state, "3");
    expect(state.ranking).toEqual(["1"]);
    expect(isComplete(state, "rank")).toBe(false);
  });

  it("partial rankings are incomplete", () => {
    let state = toggleRank(emptySelection(), "1");
    state = toggleRank(state, "2");
    expect(isComplete(state, "rank")).toBe(false);
  });
});
