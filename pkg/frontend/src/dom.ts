import type { AnnotationSession } from "./session.js";
import { setBest, setWorst, toggleRank } from "./state.js";
import { DISPLAY_KEYS, type DisplayKey } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderCandidate(session: AnnotationSession, key: DisplayKey): HTMLElement {
  const task = session.task!;
  const card = el("div", "candidate");
  card.dataset.key = key;
  const header = el("div", "candidate-header");
  header.append(el("span", "candidate-number", `Caption ${key}`));

  if (task.mode === "best_worst") {
    if (session.selection.best === key) card.classList.add("is-best");
    if (session.selection.worst === key) card.classList.add("is-worst");
    const bestBtn = el("button", "pick-best", "Best");
    bestBtn.onclick = () => session.setSelection(setBest(session.selection, key));
    const worstBtn = el("button", "pick-worst", "Worst");
    worstBtn.onclick = () => session.setSelection(setWorst(session.selection, key));
    header.append(bestBtn, worstBtn);
  } else {
    const position = session.selection.ranking.indexOf(key);
    if (position >= 0) {
      card.classList.add("is-ranked");
      header.append(el("span", "rank-badge", `#${position + 1}`));
    }
    const rankBtn = el("button", "pick-rank", position >= 0 ? "Unrank" : "Rank next");
    rankBtn.onclick = () => session.setSelection(toggleRank(session.selection, key));
    header.append(rankBtn);
  }

  card.append(header, el("p", "candidate-text", task.candidates[key]));
  return card;
}

export function render(session: AnnotationSession, root: HTMLElement): void {
  root.replaceChildren();

  const progress = el(
    "div",
    "progress",
    `Judge ${session.judgeId} — ${session.progress.answered} of ${session.progress.total} answered`,
  );
  root.append(progress);

  if (session.status === "error") {
    const banner = el("div", "banner error", session.errorMessage || "Request failed.");
    const retry = el("button", "retry", "Retry");
    retry.onclick = () => void session.retry();
    banner.append(retry);
    root.append(banner);
    if (session.task === null) return;
  }

  if (session.status === "loading") {
    root.append(el("div", "banner", "Loading…"));
    return;
  }

  if (session.status === "done") {
    root.append(el("div", "banner done", "All tasks answered. Thank you!"));
    return;
  }

  const task = session.task;
  if (task === null) return;

  const figure = el("figure", "figure");
  const img = el("img");
  img.src = task.imageUrl;
  img.alt = `Figure ${task.figureId}`;
  figure.append(img);
  root.append(figure);

  const hint =
    task.mode === "best_worst"
      ? "Pick the best and the worst caption (keys 1-4 = best, Shift+1-4 = worst)."
      : "Rank all four captions from best to worst.";
  root.append(el("p", "hint", hint));

  const list = el("div", "candidates");
  for (const key of DISPLAY_KEYS) list.append(renderCandidate(session, key));
  root.append(list);

  if (session.inlineError) root.append(el("div", "banner inline-error", session.inlineError));

  const submit = el("button", "submit", session.status === "submitting" ? "Submitting…" : "Submit");
  submit.disabled = !session.canSubmit();
  submit.onclick = () => void session.submit();
  root.append(submit);
}

export function bindKeyboard(session: AnnotationSession): void {
  document.addEventListener("keydown", (event) => {
    if (session.status !== "ready" || session.task === null) return;
    // event.code survives Shift (Shift+1 reports key "!")
    const match = /^Digit([1-4])$/.exec(event.code);
    if (!match) return;
    const key = match[1] as DisplayKey;
    if (session.task.mode === "best_worst") {
      session.setSelection(
        event.shiftKey ? setWorst(session.selection, key) : setBest(session.selection, key),
      );
    } else {
      session.setSelection(toggleRank(session.selection, key));
    }
  });
}
