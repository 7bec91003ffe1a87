export type Mode = "best_worst" | "rank";

export const DISPLAY_KEYS = ["1", "2", "3", "4"] as const;
export type DisplayKey = (typeof DISPLAY_KEYS)[number];

export interface Progress {
  answered: number;
  total: number;
}

/** Raw payload of GET /api/tasks/next; task_id is null when the judge is done. */
export interface NextTaskPayload {
  task_id: string | null;
  done?: boolean;
  figure_id?: string;
  image_url?: string;
  mode?: Mode;
  track?: string;
  candidates?: Record<string, string>;
  progress: Progress;
}

/** Validated, render-ready view of one annotation task. */
export interface TaskView {
  taskId: string;
  figureId: string;
  imageUrl: string;
  mode: Mode;
  candidates: Record<DisplayKey, string>;
  progress: Progress;
}

export interface SelectionState {
  best: DisplayKey | null;
  worst: DisplayKey | null;
  ranking: DisplayKey[];
}

export interface ResponsePayload {
  task_id: string;
  judge_id: string;
  best?: string;
  worst?: string;
  ranking?: string[];
}
