import { DISPLAY_KEYS, type DisplayKey, type Mode, type SelectionState } from "./types.js";

export function emptySelection(): SelectionState {
  return { best: null, worst: null, ranking: [] };
}

/** Mark a candidate best; clears worst if it would collide. */
export function setBest(state: SelectionState, key: DisplayKey): SelectionState {
  return {
    ...state,
    best: state.best === key ? null : key,
    worst: state.worst === key ? null : state.worst,
  };
}

/** Mark a candidate worst; clears best if it would collide. */
export function setWorst(state: SelectionState, key: DisplayKey): SelectionState {
  return {
    ...state,
    worst: state.worst === key ? null : key,
    best: state.best === key ? null : state.best,
  };
}

/** Append the next rank position, or remove the key if already ranked. */
export function toggleRank(state: SelectionState, key: DisplayKey): SelectionState {
  const ranking = state.ranking.includes(key)
    ? state.ranking.filter((k) => k !== key)
    : [...state.ranking, key];
  return { ...state, ranking };
}

export function isComplete(state: SelectionState, mode: Mode): boolean {
  if (mode === "best_worst") {
    return state.best !== null && state.worst !== null && state.best !== state.worst;
  }
  return (
    state.ranking.length === DISPLAY_KEYS.length &&
    new Set(state.ranking).size === DISPLAY_KEYS.length
  );
}
