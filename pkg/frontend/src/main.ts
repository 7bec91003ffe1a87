import { ApiClient } from "./api.js";
import { bindKeyboard, render } from "./dom.js";
import { AnnotationSession } from "./session.js";

const JUDGE_KEY = "mlbcap.judge_id";

function getJudgeId(): string {
  let judgeId = localStorage.getItem(JUDGE_KEY) ?? "";
  while (!judgeId) {
    judgeId = (window.prompt("Enter your judge id") ?? "").trim();
  }
  localStorage.setItem(JUDGE_KEY, judgeId);
  return judgeId;
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const session = new AnnotationSession(new ApiClient(""), getJudgeId());
  session.onChange = () => render(session, root);
  bindKeyboard(session);
  void session.loadNext();
}

boot();
