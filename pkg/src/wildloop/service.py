"""HTTP facade over the labeling loop for the web console.

All mutations funnel through one engine lock (single logical writer); the
long-running iterate/finalize calls run as background jobs that clients
poll.  Label submission is idempotent: repeating a request with the same
idempotency key returns the recorded response without double-counting.
"""
from __future__ import annotations

import csv
import io
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, PlainTextResponse
from pydantic import BaseModel

from . import active, store
from .errors import WildloopError
from .merge import PipelineConfig, predict_dataset


class SelectRequest(BaseModel):
    batch_size: int | None = None
    stratified: bool | None = None


class LabelItem(BaseModel):
    image_id: str
    label: str


class LabelsRequest(BaseModel):
    labels: list[LabelItem]
    idempotency_key: str = ""


class IterateRequest(BaseModel):
    skip_tuning: bool | None = None
    start_mode: str | None = None
    idempotency_key: str = ""


class FinalizeRequest(BaseModel):
    idempotency_key: str = ""


class Job:
    def __init__(self, kind: str):
        self.id = uuid.uuid4().hex
        self.kind = kind
        self.state = "pending"
        self.result = None
        self.error = None


class ProjectEngine:
    """Owns the project state and serializes every mutation."""

    def __init__(self, project_root):
        self.lock = threading.Lock()  # serializes state mutations
        self.jobs_lock = threading.Lock()  # short-held job admission
        self.project = store.load(project_root)
        if self.project.al is None:
            raise WildloopError("project has no labeling loop state; run al-init first")
        self.dataset = self.project.load_dataset()
        self.runtime = self.project.build_runtime()
        self.jobs: dict[str, Job] = {}
        self.active_job: Job | None = None
        self.idempotency: dict[str, dict] = {}
        self.job_keys: dict[str, str] = {}  # idempotency key -> job id
        self.final_predictions = None

    # -- helpers ---------------------------------------------------------

    @property
    def al(self) -> active.ALState:
        return self.project.al

    def deps(self) -> active.ALDeps:
        grid = None
        if not self.al.skip_tuning:
            # In-loop tuning stays on the reduced grid (best-known embedder
            # x all thresholds) to bound iteration latency.
            from .tuning import HyperGrid

            known = (
                self.al.last_lambda[0] if self.al.last_lambda else self.project.pipeline.embedder
            )
            grid = HyperGrid(
                alphas=self.project.grid.alphas,
                embedders=(known,),
                metric=self.project.grid.metric,
            )
        return active.ALDeps(
            dataset=self.dataset.with_labels(self.al.labels),
            runtime=self.runtime,
            default_lambda=(self.project.pipeline.embedder, self.project.pipeline.alpha),
            grid=grid,
            train_config=self.project.train_config,
            beta=self.project.pipeline.beta,
            checkpoint_dir=self.project.root / store.CHECKPOINT_DIR,
        )

    def pool_predictions(self):
        if self.al.last_head is None:
            return []
        embedder, alpha = self.al.last_lambda
        cfg = PipelineConfig(alpha=alpha, beta=self.project.pipeline.beta, embedder=embedder)
        return predict_dataset(
            self.dataset, self.al.last_head, cfg, self.runtime, sorted(self.al.unlabeled_pool)
        )

    def save(self) -> None:
        store.save(self.project)

    def start_job(self, kind: str, target, idempotency_key: str = "") -> Job:
        # Admission must not wait on the state lock a running job holds,
        # otherwise the conflict answer would block instead of refusing.
        with self.jobs_lock:
            if idempotency_key and idempotency_key in self.job_keys:
                return self.jobs[self.job_keys[idempotency_key]]  # retried request
            if self.active_job is not None and self.active_job.state in ("pending", "running"):
                raise HTTPException(status_code=409, detail="another job is running")
            job = Job(kind)
            self.jobs[job.id] = job
            self.active_job = job
            if idempotency_key:
                self.job_keys[idempotency_key] = job.id

        def run():
            job.state = "running"
            try:
                job.result = target()
                job.state = "done"
            except Exception as exc:  # surfaced through the job API
                job.error = str(exc)
                job.state = "failed"

        threading.Thread(target=run, daemon=True).start()
        return job


def _record_payload(rec: active.IterationRecord) -> dict:
    return {
        "iteration": rec.iteration,
        "queried": rec.queried,
        "lambda": {"embedder": rec.lam[0], "alpha": rec.lam[1]},
        "labeled_count": rec.labeled_count,
        "accuracy": rec.test_accuracy,
        "weighted_f1": rec.test_weighted_f1,
        "checkpoint": rec.checkpoint,
    }


def create_app(project_root, ui_dir=None) -> FastAPI:
    engine = ProjectEngine(project_root)
    app = FastAPI(title="wildloop labeling service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.engine = engine

    @app.get("/api/status")
    def status():
        al = engine.al
        last = al.history[-1] if al.history else None
        return {
            "iteration": al.iteration,
            "labeled": len(al.labeled_pool),
            "unlabeled": len(al.unlabeled_pool),
            "test_size": len(al.frozen_test),
            "last_metrics": None
            if last is None
            else {"accuracy": last.test_accuracy, "weighted_f1": last.test_weighted_f1},
        }

    @app.post("/api/select")
    def select(req: SelectRequest):
        with engine.lock:
            al = engine.al
            if req.stratified is not None:
                al.stratify_by_station = req.stratified
            try:
                preds = engine.pool_predictions() if al.iteration > 0 else []
                batch = active.select_batch(al, preds, req.batch_size, engine.dataset)
            except WildloopError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            al.queued = batch
            engine.save()
            return {"queued": batch}

    @app.get("/api/queue")
    def queue():
        al = engine.al
        scores_by_id = {}
        if al.last_head is not None and al.queued:
            embedder, alpha = al.last_lambda
            cfg = PipelineConfig(alpha=alpha, embedder=embedder)
            for pred in predict_dataset(engine.dataset, al.last_head, cfg, engine.runtime, al.queued):
                scores_by_id[pred.image_id] = {
                    name: float(v)
                    for name, v in zip(engine.dataset.label_space.classes, pred.scores)
                }
        items = []
        for image_id in al.queued:
            ds = engine.dataset.detections[image_id]
            items.append(
                {
                    "image_id": image_id,
                    "url": f"/api/images/{image_id}",
                    "boxes": [
                        {"bbox": list(d.bbox), "confidence": d.confidence, "category": d.category}
                        for d in ds.detections
                    ],
                    "current_scores": scores_by_id.get(image_id),
                }
            )
        return {"queue": items, "classes": list(engine.dataset.label_space.classes)}

    @app.get("/api/images/{image_id}")
    def image_bytes(image_id: str):
        record = engine.dataset.images.get(image_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown image '{image_id}'")
        if record.file_path is None:
            raise HTTPException(status_code=404, detail=f"image '{image_id}' has no file")
        path = (engine.dataset.root or Path(".")) / record.file_path
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"missing file: {record.file_path}")
        return FileResponse(path)

    @app.post("/api/labels")
    def labels(req: LabelsRequest):
        with engine.lock:
            key = req.idempotency_key
            if key and key in engine.idempotency:
                return engine.idempotency[key]
            accepted, rejected = 0, []
            for item in req.labels:
                try:
                    active.submit_labels(engine.al, [(item.image_id, item.label)])
                    accepted += 1
                except WildloopError as exc:
                    rejected.append({"image_id": item.image_id, "reason": str(exc)})
            engine.save()
            response = {"accepted": accepted, "rejected": rejected}
            if key:
                engine.idempotency[key] = response
            return response

    @app.post("/api/iterate")
    def iterate_endpoint(req: IterateRequest):
        al = engine.al
        if req.skip_tuning is not None:
            al.skip_tuning = req.skip_tuning
        if req.start_mode is not None:
            if req.start_mode not in active.START_MODES:
                raise HTTPException(status_code=422, detail=f"bad start_mode '{req.start_mode}'")
            al.start_mode = req.start_mode

        def work():
            with engine.lock:
                _, rec = active.iterate(al, engine.deps())
                engine.save()
                return _record_payload(rec)

        job = engine.start_job("iterate", work, req.idempotency_key)
        return {"job_id": job.id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = engine.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job '{job_id}'")
        payload = {"state": job.state, "kind": job.kind}
        if job.state == "done" and job.kind == "iterate":
            payload["record"] = job.result
        if job.state == "done" and job.kind == "finalize":
            payload["predictions"] = len(job.result)
        if job.error:
            payload["error"] = job.error
        return payload

    @app.get("/api/history")
    def history():
        return {"rows": active.history_rows(engine.al)}

    @app.get("/api/review")
    def review(limit: int = 12):
        """Error-analysis samples from the frozen test set: the current
        model's lowest-confidence predictions and its disagreements with
        the existing human labels."""
        al = engine.al
        if al.last_head is None or al.last_lambda is None:
            return {"lowest_confidence": [], "disagreements": []}
        embedder, alpha = al.last_lambda
        cfg = PipelineConfig(alpha=alpha, beta=engine.project.pipeline.beta, embedder=embedder)
        view = engine.dataset.with_labels(al.labels)
        preds = predict_dataset(view, al.last_head, cfg, engine.runtime, sorted(al.frozen_test))
        items = []
        for pred in preds:
            ds = engine.dataset.detections[pred.image_id]
            items.append(
                {
                    "image_id": pred.image_id,
                    "url": f"/api/images/{pred.image_id}",
                    "label": al.labels.get(pred.image_id),
                    "predicted": pred.label,
                    "confidence": pred.confidence,
                    "boxes": [
                        {"bbox": list(d.bbox), "confidence": d.confidence, "category": d.category}
                        for d in ds.detections
                    ],
                }
            )
        lowest = sorted(items, key=lambda x: x["confidence"])[:limit]
        wrong = sorted(
            (x for x in items if x["predicted"] != x["label"]),
            key=lambda x: -x["confidence"],
        )[:limit]
        return {"lowest_confidence": lowest, "disagreements": wrong}

    @app.post("/api/finalize")
    def finalize_endpoint(req: FinalizeRequest | None = None):
        def work():
            with engine.lock:
                preds = active.finalize(engine.al, engine.deps())
                engine.final_predictions = preds
                return preds

        job = engine.start_job("finalize", work, req.idempotency_key if req else "")
        return {"job_id": job.id}

    @app.get("/api/export/predictions")
    def export_predictions():
        if engine.final_predictions is None:
            raise HTTPException(status_code=404, detail="no finalized predictions yet")
        buf = io.StringIO()
        _write_predictions(buf, engine)
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="console")

    return app


def _write_predictions(buf, engine: ProjectEngine) -> None:
    from .ingest import EMPTY_CLASS

    space = engine.dataset.label_space
    non_empty = [c for c in space.classes if c != EMPTY_CLASS]
    writer = csv.writer(buf)
    writer.writerow(
        ["image_id", "label", "confidence", "abstained"]
        + [f"score_{c}" for c in space.classes]
        + [f"count_{c}" for c in non_empty]
    )
    for pred in engine.final_predictions:
        writer.writerow(
            [pred.image_id, pred.label, repr(pred.confidence), str(pred.abstained).lower()]
            + [repr(float(v)) for v in pred.scores]
            + [pred.counts[c] for c in non_empty]
        )


def serve(project_root, host: str = "127.0.0.1", port: int = 8765, ui_dir=None) -> None:
    """Run the labeling service until interrupted."""
    import uvicorn

    from .errors import BindFailure

    lock = store.ProjectLock(project_root).acquire()
    try:
        app = create_app(project_root, ui_dir=ui_dir)
        try:
            uvicorn.run(app, host=host, port=port, log_level="warning")
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        lock.release()
