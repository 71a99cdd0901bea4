"""TripleNet: lightweight CNN family with dense, harmonic and residual blocks.

The package builds TripleNet-S/B model graphs, executes and trains them on a
self-contained numpy tensor engine with reverse-mode differentiation, and
statically analyzes their parameter/compute/memory costs.  A FastAPI service
(triplenet.service.app) exposes the functionality; the CLI (triplenet.cli) is
a thin client for it.
"""

__version__ = "0.1.0"

from .bench import BenchResult, run_benchmark
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .connectivity import (LinkSet, block_output_members, dense_links,
                           harmonic_links, layer_width)
from .costs import (CostReport, CostTotals, NodeCost, analyze, compare,
                    render_csv, render_text)
from .data import (DataFormatError, LabeledImageSet, batches, channel_stats,
                   load_cifar10, load_dataset, load_stats, load_svhn,
                   read_record_file, save_stats, subset, write_record_file)
from .gradcheck import CheckResult, finite_diff_gradients, run_all, run_check
from .graph import (GraphError, ModelConfig, ModelGraph, NodeSpec, build,
                    dry_run_shapes, forward, model_config, stage_sizes)
from .tensor import ShapeError, Tape, Tensor, backward, softmax
from .training import (AdamState, DATASET_EPOCHS, EpochMetrics, TrainConfig,
                       TrainingDiverged, adam_step, evaluate, lr_at, train)

__all__ = [
    "AdamState", "BenchResult", "CheckResult", "CheckpointError", "CostReport",
    "CostTotals", "DATASET_EPOCHS", "DataFormatError", "EpochMetrics",
    "GraphError", "LabeledImageSet", "LinkSet", "ModelConfig", "ModelGraph",
    "NodeCost", "NodeSpec", "ShapeError", "Tape", "Tensor", "TrainConfig",
    "TrainingDiverged", "adam_step", "analyze", "backward", "batches", "build",
    "block_output_members", "channel_stats", "compare", "dense_links",
    "dry_run_shapes", "evaluate", "finite_diff_gradients", "forward",
    "harmonic_links", "layer_width", "load_checkpoint", "load_cifar10",
    "load_dataset", "load_stats", "load_svhn", "lr_at", "model_config",
    "read_record_file", "render_csv", "render_text", "run_all",
    "run_benchmark", "run_check", "save_checkpoint", "save_stats", "softmax",
    "stage_sizes", "subset", "train", "write_record_file", "__version__",
]
