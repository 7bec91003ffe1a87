import { ApiClient, ApiError } from "./api.js";
import { emptySelection, isComplete } from "./state.js";
import {
  DISPLAY_KEYS,
  type DisplayKey,
  type NextTaskPayload,
  type Progress,
  type ResponsePayload,
  type SelectionState,
  type TaskView,
} from "./types.js";

export type SessionStatus = "idle" | "loading" | "ready" | "submitting" | "done" | "error";

const FORBIDDEN_PAYLOAD_KEYS = ["shuffled", "hidden_label", "labels", "backend_id", "texts"];

/** The server must never leak source labels; refuse to render if it does. */
export function toTaskView(payload: NextTaskPayload): TaskView {
  for (const key of FORBIDDEN_PAYLOAD_KEYS) {
    if (key in payload) throw new Error(`de-identification violated: payload has '${key}'`);
  }
  const candidates = payload.candidates ?? {};
  const keys = Object.keys(candidates).sort();
  if (keys.join(",") !== DISPLAY_KEYS.join(",")) {
    throw new Error(`expected candidates keyed 1-4, got [${keys.join(",")}]`);
  }
  if (!payload.task_id || !payload.figure_id || !payload.mode) {
    throw new Error("incomplete task payload");
  }
  return {
    taskId: payload.task_id,
    figureId: payload.figure_id,
    imageUrl: payload.image_url ?? "",
    mode: payload.mode,
    candidates: candidates as TaskView["candidates"],
    progress: payload.progress,
  };
}

/**
 * One judge's annotation flow: fetch next task, collect a selection, submit,
 * advance. The server is the source of truth; reloading mid-task comes back
 * to the same task with a cleared selection.
 */
export class AnnotationSession {
  status: SessionStatus = "idle";
  task: TaskView | null = null;
  selection: SelectionState = emptySelection();
  progress: Progress = { answered: 0, total: 0 };
  errorMessage = "";
  inlineError = "";
  private inFlight = false;
  private lastFailure: "load" | "submit" | null = null;
  onChange: () => void = () => {};

  constructor(
    private readonly api: ApiClient,
    readonly judgeId: string,
  ) {}

  private update(mutate: () => void): void {
    mutate();
    this.onChange();
  }

  canSubmit(): boolean {
    return (
      this.status === "ready" &&
      this.task !== null &&
      !this.inFlight &&
      isComplete(this.selection, this.task.mode)
    );
  }

  setSelection(selection: SelectionState): void {
    this.update(() => {
      this.selection = selection;
      this.inlineError = "";
    });
  }

  /** Fetch and present the next unanswered task (or the completion screen). */
  async loadNext(): Promise<void> {
    this.update(() => {
      this.status = "loading";
      this.errorMessage = "";
    });
    let payload: NextTaskPayload;
    try {
      payload = await this.api.nextTask(this.judgeId);
    } catch (error) {
      // network failure: keep current task and selection, show retry banner
      this.update(() => {
        this.status = "error";
        this.lastFailure = "load";
        this.errorMessage = error instanceof Error ? error.message : String(error);
      });
      return;
    }
    this.update(() => {
      this.lastFailure = null;
      this.progress = payload.progress;
      if (payload.task_id === null) {
        this.status = "done";
        this.task = null;
      } else {
        const view = toTaskView(payload);
        if (this.task?.taskId !== view.taskId) this.selection = emptySelection();
        this.task = view;
        this.status = "ready";
      }
    });
  }

  /** POST the selection; double-click-safe (one in-flight mutation at most). */
  async submit(): Promise<void> {
    if (!this.canSubmit() || this.task === null) return;
    const task = this.task;
    const payload: ResponsePayload = { task_id: task.taskId, judge_id: this.judgeId };
    if (task.mode === "best_worst") {
      payload.best = this.selection.best as DisplayKey;
      payload.worst = this.selection.worst as DisplayKey;
    } else {
      payload.ranking = [...this.selection.ranking];
    }
    this.inFlight = true;
    this.update(() => {
      this.status = "submitting";
    });
    try {
      await this.api.submitResponse(payload);
    } catch (error) {
      this.inFlight = false;
      if (error instanceof ApiError && error.code === "CONFLICT") {
        // already answered (other tab, earlier session): just advance
        await this.loadNext();
        return;
      }
      if (error instanceof ApiError && error.code === "VALIDATION") {
        this.update(() => {
          this.status = "ready";
          this.inlineError = error.message;
        });
        return;
      }
      this.update(() => {
        this.status = "error";
        this.lastFailure = "submit";
        this.errorMessage = error instanceof Error ? error.message : String(error);
      });
      return;
    }
    this.inFlight = false;
    this.selection = emptySelection();
    await this.loadNext();
  }

  /** Retry after a failure; a failed submit keeps its selection for resubmit. */
  async retry(): Promise<void> {
    if (this.lastFailure === "submit" && this.task !== null) {
      this.update(() => {
        this.status = "ready";
        this.errorMessage = "";
      });
      return;
    }
    await this.loadNext();
  }
}
