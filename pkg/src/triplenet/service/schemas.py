"""Pydantic request/response models for the service endpoints."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

ModelName = Literal["s", "b"]
DatasetName = Literal["cifar10", "svhn"]


class HealthResponse(BaseModel):
    status: str
    version: str


class SummarizeRequest(BaseModel):
    model: ModelName = "s"
    input_size: int = 224
    classes: int = 10


class StageRow(BaseModel):
    stage: str
    output_size: str
    composition: str


class SummarizeResponse(BaseModel):
    variant: str
    input_size: int
    classes: int
    final_channels: int
    stage_sizes: list[int]
    rows: list[StageRow]
    table: str


class AnalyzeRequest(BaseModel):
    model: ModelName = "s"
    input_size: int = 224
    classes: int = 10
    bottleneck: Optional[Union[int, str]] = Field(
        default=None, description="override the block-5 3x3 width reading")


class CostRowModel(BaseModel):
    name: str
    kind: str
    out_shape: str
    params: int
    macs: int
    madd: int
    act_bytes: int
    rw_bytes: int


class CostTotalsModel(BaseModel):
    params: int
    macs: int
    madd: int
    act_bytes: int
    rw_bytes: int


class AnalyzeResponse(BaseModel):
    variant: str
    input_size: int
    classes: int
    totals: CostTotalsModel
    peak_act_bytes: int
    madd_macs_ratio: float
    published_params: Optional[int]
    params_deviation_pct: Optional[float]
    readings: dict[str, str]
    rows: list[CostRowModel]
    text: str
    csv: str


class BenchRequest(BaseModel):
    model: ModelName = "s"
    input_size: int = 32
    classes: int = 10
    images: int = 100
    warmup: int = 10
    weights: Optional[str] = None
    seed: int = 0


class BenchResponse(BaseModel):
    model: str
    input_size: int
    images: int
    warmup: int
    total_seconds: float
    mean_ms: float
    std_ms: float


class GradcheckRequest(BaseModel):
    seed: int = 0
    instances: int = 5


class GradcheckRow(BaseModel):
    name: str
    max_rel_error: float
    tolerance: float
    passed: bool


class GradcheckResponse(BaseModel):
    passed: bool
    checks: list[GradcheckRow]


class TrainRequest(BaseModel):
    dataset: DatasetName
    data_dir: Optional[str] = None      # falls back to $TRIPLENET_DATA_DIR
    model: ModelName = "s"
    epochs: Optional[int] = None        # default: 200 (cifar10) / 60 (svhn)
    batch_size: int = 64
    subset: Optional[int] = None
    seed: int = 0
    out_dir: Optional[str] = None
    test_eval: bool = True              # evaluate the test split each epoch


class EpochMetricModel(BaseModel):
    epoch: int
    lr: float
    train_loss: float
    test_error: Optional[float] = None


class TrainSubmitResponse(BaseModel):
    job_id: str
    state: str


class TrainStatusResponse(BaseModel):
    job_id: str
    state: Literal["running", "done", "error"]
    dataset: str
    model: str
    epochs: int
    epochs_done: int
    metrics: list[EpochMetricModel]
    error: Optional[str] = None
    checkpoint_path: Optional[str] = None
    log_path: Optional[str] = None
    stats_path: Optional[str] = None


class EvaluateRequest(BaseModel):
    model: ModelName = "s"
    weights: str
    dataset: DatasetName
    data_dir: Optional[str] = None
    split: Literal["train", "test"] = "test"
    batch_size: int = 64
    stats: Optional[str] = None         # normalization sidecar; raw [0,1] if absent


class EvaluateResponse(BaseModel):
    error_rate_pct: float
    examples: int
