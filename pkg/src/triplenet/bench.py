"""Single-image inference latency harness.

Builds (or receives) a graph, runs discarded warmup inferences, then times
`images` eval-mode forwards at batch 1 with a monotonic clock.  Construction,
weight loading and input generation all happen before the timed section; GC
is paused while timing.  Numbers are platform-relative.
"""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graph import ModelGraph, forward


@dataclass(frozen=True)
class BenchResult:
    images: int
    warmup: int
    total_seconds: float
    mean_ms: float
    std_ms: float

    def __post_init__(self):
        if self.images < 1:
            raise ValueError("images must be >= 1")
        if self.mean_ms <= 0:
            raise ValueError("mean latency must be positive")


def run_benchmark(graph: ModelGraph, images: int = 100, warmup: int = 10,
                  seed: int = 0) -> BenchResult:
    if images < 1:
        raise ValueError(f"images must be >= 1, got {images}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    rng = np.random.default_rng(seed)
    side = graph.config.input_size
    inputs = [T.Tensor(rng.standard_normal((1, 3, side, side)).astype(np.float32))
              for _ in range(images)]

    for _ in range(warmup):
        forward(graph, inputs[0], "eval")

    times = np.empty(images)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for i, x in enumerate(inputs):
            t0 = time.perf_counter()
            forward(graph, x, "eval")
            times[i] = time.perf_counter() - t0
    finally:
        if gc_was_enabled:
            gc.enable()
    return BenchResult(images=images, warmup=warmup,
                       total_seconds=float(times.sum()),
                       mean_ms=float(times.mean() * 1000.0),
                       std_ms=float(times.std() * 1000.0))
