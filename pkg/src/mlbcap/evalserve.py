"""Human-annotation HTTP service.

Serves de-identified, per-figure-shuffled candidate captions to judges,
collects best/worst picks or full rankings, persists them append-only, and
exports agreement statistics. Source labels (A-D) and backend identities
never leave the server except through the operator-token-protected export.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import random
import threading
import time
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import FileResponse, JSONResponse

from .errors import Conflict, Degenerate, MlbcapError, NotFound, Validation
from .metrics import AgreementReport, fleiss_kappa, kendall_tau
from .prompts import CANDIDATE_LABELS, Track, TrackKind

logger = logging.getLogger(__name__)

DISPLAY_KEYS = ("1", "2", "3", "4")
MODE_BEST_WORST = "best_worst"
MODE_RANK = "rank"
OPERATOR_TOKEN_ENV = "MLBCAP_OPERATOR_TOKEN"


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    figure_id: str
    image_ref: str | None
    shuffled: tuple[tuple[str, str], ...]  # (display_key, hidden_label)
    texts: tuple[tuple[str, str], ...]  # (display_key, caption text)
    mode: str
    track: Track

    def label_for(self, display_key: str) -> str:
        for key, label in self.shuffled:
            if key == display_key:
                return label
        raise KeyError(display_key)

    def client_view(self, answered: int, total: int) -> dict:
        """Client-facing payload; hidden labels are deliberately absent."""
        return {
            "task_id": self.task_id,
            "figure_id": self.figure_id,
            "image_url": f"/api/figures/{self.figure_id}/image",
            "mode": self.mode,
            "track": self.track.kind.value,
            "candidates": dict(self.texts),
            "progress": {"answered": answered, "total": total},
        }


def _shuffle_seed(seed: int, figure_id: str) -> int:
    return int.from_bytes(sha256(f"{seed}:{figure_id}".encode("utf-8")).digest()[:8], "big")


def create_tasks(
    results_path: str | Path,
    mode: str = MODE_BEST_WORST,
    shuffle_seed: int = 0,
    track: Track | None = None,
    image_refs: dict[str, str] | None = None,
) -> list[AnnotationTask]:
    """One task per result figure, candidates shuffled per (seed, figure_id).

    Figures with incomplete candidate sets are skipped with a warning.
    """
    if mode not in (MODE_BEST_WORST, MODE_RANK):
        raise ValueError(f"unknown mode {mode!r}")
    track = track or Track(TrackKind.LONG)
    image_refs = image_refs or {}
    tasks: list[AnnotationTask] = []
    for line in Path(results_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        figure_id = row["figure_id"]
        candidates = row.get("candidates") or {}
        if sorted(candidates) != list(CANDIDATE_LABELS) or not all(candidates.values()):
            logger.warning("skipping %s: incomplete candidate set", figure_id)
            continue
        labels = list(CANDIDATE_LABELS)
        random.Random(_shuffle_seed(shuffle_seed, figure_id)).shuffle(labels)
        shuffled = tuple(zip(DISPLAY_KEYS, labels))
        tasks.append(
            AnnotationTask(
                task_id=f"t{len(tasks) + 1:04d}",
                figure_id=figure_id,
                image_ref=image_refs.get(figure_id),
                shuffled=shuffled,
                texts=tuple((key, candidates[label]) for key, label in shuffled),
                mode=mode,
                track=track,
            )
        )
    return tasks


def _canonical_payload(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True)


class AnnotationStore:
    """Append-only JSONL response log with an in-memory index."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._by_key: dict[tuple[str, str], dict] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    self._by_key[(row["task_id"], row["judge_id"])] = row

    def answered(self, judge_id: str) -> set[str]:
        with self._lock:
            return {task for task, judge in self._by_key if judge == judge_id}

    def rows(self) -> list[dict]:
        with self._lock:
            return list(self._by_key.values())

    def submit(self, payload: dict) -> dict:
        """Durably append one response; idempotent on exact duplicates."""
        key = (payload["task_id"], payload["judge_id"])
        with self._lock:
            existing = self._by_key.get(key)
            if existing is not None:
                stripped = {k: v for k, v in existing.items() if k != "received_at"}
                if _canonical_payload(stripped) == _canonical_payload(payload):
                    return existing
                raise Conflict(
                    "a different response for this task is already stored",
                    task_id=payload["task_id"],
                )
            row = dict(payload)
            row["received_at"] = time.time()
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(row, sort_keys=True) + "\n")
                handle.flush()
                os.fsync(handle.fileno())
            self._by_key[key] = row
            return row


class AnnotationService:
    def __init__(self, tasks: list[AnnotationTask], store: AnnotationStore):
        self.tasks = tasks
        self.store = store
        self._by_id = {task.task_id: task for task in tasks}

    def next_task(self, judge_id: str) -> AnnotationTask | None:
        """Lowest-indexed task this judge has not answered, or None when done."""
        if not judge_id:
            raise Validation("judge id must be nonempty")
        answered = self.store.answered(judge_id)
        for task in self.tasks:
            if task.task_id not in answered:
                return task
        return None

    def progress(self, judge_id: str) -> tuple[int, int]:
        answered = self.store.answered(judge_id)
        return len([t for t in self.tasks if t.task_id in answered]), len(self.tasks)

    def submit_response(self, payload: dict) -> dict:
        task = self._by_id.get(str(payload.get("task_id")))
        if task is None:
            raise NotFound(f"unknown task {payload.get('task_id')!r}")
        judge_id = str(payload.get("judge_id") or "")
        if not judge_id:
            raise Validation("judge_id must be nonempty")
        clean: dict = {"task_id": task.task_id, "judge_id": judge_id}
        if task.mode == MODE_BEST_WORST:
            best = payload.get("best")
            worst = payload.get("worst")
            if best not in DISPLAY_KEYS or worst not in DISPLAY_KEYS:
                raise Validation("best and worst must be display keys 1-4")
            if best == worst:
                raise Validation("best and worst must differ")
            clean.update(best=best, worst=worst)
        else:
            ranking = payload.get("ranking")
            if not isinstance(ranking, list) or sorted(ranking) != sorted(DISPLAY_KEYS):
                raise Validation("ranking must be a permutation of display keys 1-4")
            clean["ranking"] = list(ranking)
        return self.store.submit(clean)

    # --- export ---

    def _resolved_rows(self) -> list[dict]:
        rows = []
        for row in self.store.rows():
            task = self._by_id[row["task_id"]]
            resolved = {"figure_id": task.figure_id, "judge_id": row["judge_id"]}
            if task.mode == MODE_BEST_WORST:
                resolved["best"] = task.label_for(row["best"])
                resolved["worst"] = task.label_for(row["worst"])
            else:
                resolved["ranking"] = [task.label_for(key) for key in row["ranking"]]
            rows.append(resolved)
        return rows

    def export_agreement(self) -> tuple[list[dict], AgreementReport]:
        """Re-attach hidden labels and compute inter-judge agreement.

        BEST_WORST mode yields Fleiss' kappa over best picks; RANK mode yields
        mean pairwise Kendall tau over per-figure rank vectors. Items are
        restricted to figures answered by every participating judge.
        """
        resolved = self._resolved_rows()
        judges = sorted({row["judge_id"] for row in resolved})
        if len(judges) < 2:
            raise Degenerate("need at least two judges")
        by_figure: dict[str, dict[str, dict]] = {}
        for row in resolved:
            by_figure.setdefault(row["figure_id"], {})[row["judge_id"]] = row
        common = [
            task.figure_id
            for task in self.tasks
            if len(by_figure.get(task.figure_id, {})) == len(judges)
        ]
        if not common:
            raise Degenerate("no task answered by every judge")

        mode = self.tasks[0].mode if self.tasks else MODE_BEST_WORST
        if mode == MODE_BEST_WORST:
            table = []
            for figure_id in common:
                counts = {label: 0 for label in CANDIDATE_LABELS}
                for judge_id in judges:
                    counts[by_figure[figure_id][judge_id]["best"]] += 1
                table.append([counts[label] for label in CANDIDATE_LABELS])
            report = AgreementReport(
                fleiss_kappa=fleiss_kappa(table),
                kendall_tau=None,
                n_items=len(common),
                n_raters=len(judges),
            )
        else:
            taus = []
            for i, judge_a in enumerate(judges):
                for judge_b in judges[i + 1 :]:
                    for figure_id in common:
                        rank_a = _rank_vector(by_figure[figure_id][judge_a]["ranking"])
                        rank_b = _rank_vector(by_figure[figure_id][judge_b]["ranking"])
                        taus.append(kendall_tau(rank_a, rank_b))
            report = AgreementReport(
                fleiss_kappa=None,
                kendall_tau=sum(taus) / len(taus),
                n_items=len(common),
                n_raters=len(judges),
            )
        return resolved, report


def _rank_vector(ranking: list[str]) -> list[float]:
    """Rank (1=best) of each label A-D given a best-to-worst label ordering."""
    return [float(ranking.index(label) + 1) for label in CANDIDATE_LABELS]


def _error_response(exc: MlbcapError) -> JSONResponse:
    status = {
        "VALIDATION": 400,
        "NOT_FOUND": 404,
        "CONFLICT": 409,
        "DEGENERATE": 409,
    }.get(exc.code, 500)
    return JSONResponse(
        status_code=status, content={"code": exc.code, "message": exc.message}
    )


def build_app(
    service: AnnotationService,
    token_env: str = OPERATOR_TOKEN_ENV,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="caption annotation service")

    @app.exception_handler(MlbcapError)
    async def _handle(request: Request, exc: MlbcapError):
        return _error_response(exc)

    @app.get("/api/tasks/next")
    def next_task(judge: str = Query(..., min_length=1)):
        answered, total = service.progress(judge)
        task = service.next_task(judge)
        if task is None:
            return {"task_id": None, "done": True, "progress": {"answered": answered, "total": total}}
        return task.client_view(answered, total)

    @app.post("/api/responses")
    async def submit_response(request: Request):
        payload = await request.json()
        if not isinstance(payload, dict):
            raise Validation("body must be a JSON object")
        stored = service.submit_response(payload)
        return {"status": "stored", "task_id": stored["task_id"]}

    @app.get("/api/progress")
    def progress(judge: str = Query(..., min_length=1)):
        answered, total = service.progress(judge)
        return {"answered": answered, "total": total}

    @app.get("/api/export")
    def export(request: Request):
        token = os.environ.get(token_env, "")
        supplied = request.headers.get("authorization", "")
        if not token or supplied != f"Bearer {token}":
            return JSONResponse(
                status_code=401,
                content={"code": "UNAUTHORIZED", "message": "operator token required"},
            )
        rows, report = service.export_agreement()
        return {"responses": rows, "report": report.as_dict()}

    @app.get("/api/figures/{figure_id}/image")
    def figure_image(figure_id: str):
        for task in service.tasks:
            if task.figure_id == figure_id and task.image_ref:
                path = Path(task.image_ref)
                if path.is_file():
                    media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
                    return FileResponse(path, media_type=media_type)
        raise NotFound(f"no image for figure {figure_id!r}")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
