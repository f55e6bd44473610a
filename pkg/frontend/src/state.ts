/** Client view state and the selection-arity rules enforced before any I/O. */

import type { EditKind } from "./types.js";

/** How many selected trajectories each action consumes. */
export const ACTION_ARITY: Record<EditKind, number> = {
  Break: 1,
  Delete: 1,
  Relabel: 1,
  Join: 2,
  Disentangle: 2,
  AddMissing: 0,
};

export const MAX_SELECTION = 2;

export interface ViewState {
  sessionId: string | null;
  /** Shared session time, seconds on the label grid. */
  currentTime: number;
  playbackRate: number;
  playing: boolean;
  /** Selected trajectory ids, in click order, at most MAX_SELECTION. */
  selected: number[];
  pending: EditKind | null;
  /** Last head seen from the server; sent as client_seq with every mutation. */
  head: number;
}

export function initialView(): ViewState {
  return {
    sessionId: null,
    currentTime: 0,
    playbackRate: 1,
    playing: false,
    selected: [],
    pending: null,
    head: 0,
  };
}

/** Toggle a trajectory in the selection; a third pick replaces the oldest. */
export function toggleSelect(state: ViewState, id: number): ViewState {
  const selected = state.selected.includes(id)
    ? state.selected.filter((s) => s !== id)
    : [...state.selected, id].slice(-MAX_SELECTION);
  return { ...state, selected };
}

export function clearSelection(state: ViewState): ViewState {
  return { ...state, selected: [], pending: null };
}

/** True when the pending action's arity matches the current selection. */
export function canSubmit(state: ViewState): boolean {
  return state.pending !== null && state.selected.length === ACTION_ARITY[state.pending];
}

/** Why submission is blocked, for the UI to display; null when allowed. */
export function submitBlocker(state: ViewState): string | null {
  if (state.pending === null) return "no action selected";
  const need = ACTION_ARITY[state.pending];
  if (state.selected.length !== need) {
    return `${state.pending} needs ${need} selected trajectories, have ${state.selected.length}`;
  }
  return null;
}
