"""FastAPI service wrapping the core package.

Summaries, cost analysis, benchmarking, gradient self-checks and evaluation
run synchronously; training runs as a background job (submit via POST /train,
poll GET /train/{job_id}).  Domain precondition violations surface as 400s.
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import run_benchmark
from ..checkpoint import CheckpointError, load_checkpoint
from ..costs import PUBLISHED_PARAMS, analyze, render_csv, render_text
from ..data import (DATA_DIR_ENV, DataFormatError, channel_stats, load_dataset,
                    load_stats, save_stats, subset)
from ..gradcheck import run_all
from ..graph import (GraphError, ModelGraph, build, dry_run_shapes,
                     model_config, stage_sizes)
from ..tensor import ShapeError
from ..training import DATASET_EPOCHS, TrainConfig, TrainingDiverged, evaluate, train
from . import schemas as S

_DOMAIN_ERRORS = (GraphError, ShapeError, DataFormatError, CheckpointError,
                  FileNotFoundError, ValueError)


@dataclass
class _TrainJob:
    job_id: str
    dataset: str
    model: str
    epochs: int
    state: str = "running"
    metrics: list = field(default_factory=list)
    error: Optional[str] = None
    checkpoint_path: Optional[str] = None
    log_path: Optional[str] = None
    stats_path: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def status(self) -> S.TrainStatusResponse:
        with self.lock:
            return S.TrainStatusResponse(
                job_id=self.job_id, state=self.state, dataset=self.dataset,
                model=self.model, epochs=self.epochs,
                epochs_done=len(self.metrics),
                metrics=[S.EpochMetricModel(**m) for m in self.metrics],
                error=self.error, checkpoint_path=self.checkpoint_path,
                log_path=self.log_path, stats_path=self.stats_path)


def _build_graph(model: str, input_size: int, classes: int,
                 bottleneck=None, seed: int = 0) -> ModelGraph:
    overrides = {}
    if bottleneck is not None:
        overrides["bottleneck_mid"] = bottleneck
    return build(model_config(model, input_size=input_size,
                              num_classes=classes, **overrides), seed=seed)


def _stage_rows(graph: ModelGraph) -> list[S.StageRow]:
    cfg = graph.config

    def size_of(node_name: str) -> str:
        _, h, w = graph.node(node_name).out_shape
        return f"{h}x{w}"

    rows = [
        S.StageRow(stage="first-layer", output_size=size_of("stem/conv1"),
                   composition=f"3x3 conv, stride 2, {cfg.stem_channels}ch"),
        S.StageRow(stage="first-layer", output_size=size_of("stem/conv2"),
                   composition=f"3x3 conv, {cfg.stem_channels}ch"),
        S.StageRow(stage="first-layer", output_size=size_of("stem/pool"),
                   composition="3x3 maxpool, stride 2"),
    ]
    for bi in range(5):
        block = f"block{bi + 1}"
        depth = cfg.block_depths[bi]
        g = cfg.growth_rates[bi]
        out_node = graph.stage_nodes[block]
        if bi == 0:
            comp = f"[dense unit: 1x1 conv {cfg.dense_expansion * g} " \
                   f"+ 3x3 conv {g}] x {depth}"
        elif bi < 4:
            comp = f"[harmonic unit: 3x3 conv, growth {g}] x {depth}"
        else:
            width = cfg.block_channels[4]
            mid = cfg.bottleneck_mid_channels(width, g)
            comp = f"[residual unit: 1x1 {width // 2} + 3x3 {mid} " \
                   f"+ 1x1 {width}] x {depth}"
        rows.append(S.StageRow(stage=block, output_size=size_of(out_node),
                               composition=comp))
        if bi < 4:
            conv_node = f"transition{bi + 1}/conv"
            rows.append(S.StageRow(
                stage=f"transition{bi + 1}", output_size=size_of(conv_node),
                composition=f"1x1 conv, {cfg.block_channels[bi + 1]}ch"))
            pool_node = f"transition{bi + 1}/pool"
            if bi != 2:
                rows.append(S.StageRow(
                    stage=f"transition{bi + 1}", output_size=size_of(pool_node),
                    composition=f"2x2 {cfg.transition_pool}pool, stride 2"))
    rows.append(S.StageRow(stage="classifier",
                           output_size=size_of("classifier/gap"),
                           composition="global avgpool"))
    rows.append(S.StageRow(stage="classifier", output_size="-",
                           composition=f"linear, {cfg.num_classes} classes"))
    return rows


def _render_table(rows: list[S.StageRow]) -> str:
    widths = [max(len(r.stage) for r in rows), max(len(r.output_size) for r in rows)]
    lines = [f"{'stage':<{widths[0]}}  {'output':<{widths[1]}}  composition",
             "-" * (widths[0] + widths[1] + 16)]
    for r in rows:
        lines.append(f"{r.stage:<{widths[0]}}  {r.output_size:<{widths[1]}}  "
                     f"{r.composition}")
    return "\n".join(lines) + "\n"


def _resolve_data_dir(data_dir: Optional[str]) -> Path:
    path = data_dir or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise HTTPException(400, f"no data directory given and "
                                 f"{DATA_DIR_ENV} is not set")
    resolved = Path(path)
    if not resolved.is_dir():
        raise HTTPException(400, f"data directory does not exist: {resolved}")
    return resolved


def create_app() -> FastAPI:
    app = FastAPI(title="triplenet", version=__version__)
    app.state.jobs = {}

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/summarize", response_model=S.SummarizeResponse)
    def summarize(req: S.SummarizeRequest):
        try:
            graph = _build_graph(req.model, req.input_size, req.classes)
            dry_run_shapes(graph)
            rows = _stage_rows(graph)
            return S.SummarizeResponse(
                variant=graph.config.variant, input_size=req.input_size,
                classes=req.classes,
                final_channels=graph.node(graph.stage_nodes["block5"]).out_shape[0],
                stage_sizes=stage_sizes(graph), rows=rows,
                table=_render_table(rows))
        except _DOMAIN_ERRORS as exc:
            raise HTTPException(400, str(exc))

    @app.post("/analyze", response_model=S.AnalyzeResponse)
    def analyze_model(req: S.AnalyzeRequest):
        try:
            graph = _build_graph(req.model, req.input_size, req.classes,
                                 bottleneck=req.bottleneck)
            report = analyze(graph)
        except _DOMAIN_ERRORS as exc:
            raise HTTPException(400, str(exc))
        t = report.totals
        ref = PUBLISHED_PARAMS.get(report.variant)
        return S.AnalyzeResponse(
            variant=report.variant, input_size=report.input_size,
            classes=report.num_classes,
            totals=S.CostTotalsModel(params=t.params, macs=t.macs, madd=t.madd,
                                     act_bytes=t.act_bytes, rw_bytes=t.rw_bytes),
            peak_act_bytes=report.peak_act_bytes,
            madd_macs_ratio=t.madd / t.macs,
            published_params=ref,
            params_deviation_pct=(100.0 * (t.params - ref) / ref) if ref else None,
            readings=report.readings,
            rows=[S.CostRowModel(name=r.name, kind=r.kind,
                                 out_shape="x".join(map(str, r.out_shape)),
                                 params=r.params, macs=r.macs, madd=r.madd,
                                 act_bytes=r.act_bytes, rw_bytes=r.rw_bytes)
                  for r in report.rows],
            text=render_text(report), csv=render_csv(report))

    @app.post("/bench", response_model=S.BenchResponse)
    def bench(req: S.BenchRequest):
        try:
            graph = _build_graph(req.model, req.input_size, req.classes,
                                 seed=req.seed)
            if req.weights:
                graph.load_states(load_checkpoint(req.weights))
            result = run_benchmark(graph, images=req.images, warmup=req.warmup,
                                   seed=req.seed)
        except _DOMAIN_ERRORS as exc:
            raise HTTPException(400, str(exc))
        return S.BenchResponse(model=req.model, input_size=req.input_size,
                               images=result.images, warmup=result.warmup,
                               total_seconds=result.total_seconds,
                               mean_ms=result.mean_ms, std_ms=result.std_ms)

    @app.post("/gradcheck", response_model=S.GradcheckResponse)
    def gradcheck(req: S.GradcheckRequest):
        results = run_all(seed=req.seed, instances=req.instances)
        return S.GradcheckResponse(
            passed=all(r.passed for r in results),
            checks=[S.GradcheckRow(name=r.name, max_rel_error=r.max_rel_error,
                                   tolerance=r.tolerance, passed=r.passed)
                    for r in results])

    @app.post("/train", response_model=S.TrainSubmitResponse)
    def submit_train(req: S.TrainRequest):
        data_dir = _resolve_data_dir(req.data_dir)
        epochs = req.epochs if req.epochs is not None else DATASET_EPOCHS[req.dataset]
        if epochs < 1 or req.batch_size < 1:
            raise HTTPException(400, "epochs and batch size must be >= 1")
        job_id = uuid.uuid4().hex[:12]
        out_dir = Path(req.out_dir) if req.out_dir else Path("runs") / job_id
        job = _TrainJob(job_id=job_id, dataset=req.dataset, model=req.model,
                        epochs=epochs)
        app.state.jobs[job_id] = job
        worker = threading.Thread(
            target=_run_train_job, name=f"train-{job_id}",
            args=(job, req, data_dir, out_dir, epochs), daemon=True)
        worker.start()
        return S.TrainSubmitResponse(job_id=job_id, state=job.state)

    @app.get("/train/{job_id}", response_model=S.TrainStatusResponse)
    def train_status(job_id: str):
        job = app.state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown training job {job_id!r}")
        return job.status()

    @app.post("/evaluate", response_model=S.EvaluateResponse)
    def evaluate_model(req: S.EvaluateRequest):
        data_dir = _resolve_data_dir(req.data_dir)
        try:
            graph = _build_graph(req.model, 32, 10)
            graph.load_states(load_checkpoint(req.weights))
            train_set, test_set = load_dataset(req.dataset, data_dir)
            target = train_set if req.split == "train" else test_set
            mean = std = None
            if req.stats:
                mean, std = load_stats(req.stats)
            error = evaluate(graph, target, req.batch_size, mean, std)
        except _DOMAIN_ERRORS as exc:
            raise HTTPException(400, str(exc))
        return S.EvaluateResponse(error_rate_pct=error, examples=len(target))

    return app


def _run_train_job(job: _TrainJob, req: S.TrainRequest, data_dir: Path,
                   out_dir: Path, epochs: int) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        train_set, test_set = load_dataset(req.dataset, data_dir)
        if req.subset:
            train_set = subset(train_set, req.subset)
        mean, std = channel_stats(train_set)
        stats_path = out_dir / "stats.txt"
        save_stats(stats_path, mean, std)
        graph = _build_graph(req.model, 32, 10, seed=req.seed)
        config = TrainConfig(epochs=epochs, batch_size=req.batch_size,
                             seed=req.seed)
        checkpoint_path = out_dir / "model.tpln"
        log_path = out_dir / "train.log"
        with job.lock:
            job.checkpoint_path = str(checkpoint_path)
            job.log_path = str(log_path)
            job.stats_path = str(stats_path)

        def record(m):
            with job.lock:
                job.metrics.append(dict(epoch=m.epoch, lr=m.lr,
                                        train_loss=m.train_loss,
                                        test_error=m.test_error))

        train(graph, train_set, config,
              test_set=test_set if req.test_eval else None,
              callbacks=[record], mean=mean, std=std,
              log_path=log_path, checkpoint_path=checkpoint_path)
        with job.lock:
            job.state = "done"
    except (TrainingDiverged, *_DOMAIN_ERRORS, OSError) as exc:
        with job.lock:
            job.state = "error"
            job.error = f"{type(exc).__name__}: {exc}"


app = create_app()
