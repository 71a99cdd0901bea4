"""TripleNet model graphs: configuration, construction, shape checks, execution.

A built ModelGraph is a topologically ordered list of typed NodeSpec entries
plus named parameter tensors (and batch-norm running buffers).  The builder
realizes the five-stage layout:

  stem (3x3 conv s2, 3x3 conv, 3x3 maxpool s2)
  block 1: dense units         BN -> ReLU -> 1x1 conv (4g) -> BN -> ReLU -> 3x3 conv (g)
  blocks 2-4: harmonic units   3x3 conv -> BN -> ReLU
  block 5: residual bottlenecks at constant width C with an identity add
  transitions: 1x1 conv (+ 2x2 pool after blocks 1, 2 and 4; none after 3)
  classifier: global average pool -> linear

Graphs are immutable once built; eval-mode forward calls may share one graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .connectivity import (block_output_members, dense_links, harmonic_links,
                           layer_width)


class GraphError(ValueError):
    """Raised for invalid graph configuration or structure."""


# Variant rows: depths, per-block channel widths (read as each block's input
# width), growth rates.  S and B differ only in the final block.
_VARIANTS = {
    "s": dict(block_depths=(6, 16, 16, 16, 2),
              block_channels=(128, 192, 256, 320, 720),
              growth_rates=(32, 16, 20, 40, 160)),
    "b": dict(block_depths=(6, 16, 16, 16, 3),
              block_channels=(128, 192, 256, 320, 1080),
              growth_rates=(32, 16, 20, 40, 160)),
}

# Selectable readings of the block-5 bottleneck 3x3 width (the middle conv of
# the 1x1 / 3x3 / 1x1 unit).  "triple-growth" (3 x growth rate) is the default:
# it is the only reading whose parameter totals stay inside the diagnostic
# bands for both variants.  The alternatives are kept for sensitivity checks.
BOTTLENECK_READINGS = ("triple-growth", "half", "third", "growth")


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    block_depths: tuple[int, ...]
    block_channels: tuple[int, ...]
    growth_rates: tuple[int, ...]
    num_classes: int = 10
    input_size: int = 224
    stem_channels: int = 128
    dense_expansion: int = 4          # dense unit 1x1 width = expansion * growth
    bottleneck_mid: str | int = "triple-growth"
    transition_pool: str = "avg"      # "avg" per prose; "max" selectable
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise GraphError(f"unknown variant {self.variant!r}; expected one of "
                             f"{sorted(_VARIANTS)}")
        for name in ("block_depths", "block_channels", "growth_rates"):
            if len(getattr(self, name)) != 5:
                raise GraphError(f"{name} must have 5 entries")
        if any(d < 1 for d in self.block_depths):
            raise GraphError("block depths must be >= 1")
        if self.input_size < 32 or self.input_size % 32 != 0:
            raise GraphError(f"input_size must be >= 32 and divisible by 32, "
                             f"got {self.input_size}")
        if self.num_classes < 2:
            raise GraphError("num_classes must be >= 2")
        if self.transition_pool not in ("avg", "max"):
            raise GraphError(f"transition_pool must be 'avg' or 'max', "
                             f"got {self.transition_pool!r}")
        if isinstance(self.bottleneck_mid, str) and \
                self.bottleneck_mid not in BOTTLENECK_READINGS:
            raise GraphError(f"bottleneck_mid must be an int or one of "
                             f"{BOTTLENECK_READINGS}, got {self.bottleneck_mid!r}")

    def bottleneck_mid_channels(self, width: int, growth: int) -> int:
        """Resolve the 3x3 width of a residual bottleneck unit."""
        rule = self.bottleneck_mid
        if isinstance(rule, int):
            value = rule
        elif rule == "triple-growth":
            value = 3 * growth
        elif rule == "half":
            value = width // 2
        elif rule == "third":
            value = width // 3
        else:  # "growth"
            value = growth
        if value < 1:
            raise GraphError(f"bottleneck mid width resolved to {value}")
        return value


def model_config(variant: str, input_size: int = 224, num_classes: int = 10,
                 **overrides) -> ModelConfig:
    """Standard configuration for TripleNet-S ('s') or TripleNet-B ('b')."""
    key = variant.lower()
    if key not in _VARIANTS:
        raise GraphError(f"unknown variant {variant!r}; expected 's' or 'b'")
    return ModelConfig(variant=key, input_size=input_size,
                       num_classes=num_classes, **_VARIANTS[key], **overrides)


KINDS = ("conv", "bn", "relu", "maxpool", "avgpool", "gap", "concat", "add", "linear")


@dataclass(frozen=True)
class NodeSpec:
    """One typed layer node; `inputs` name earlier nodes ('input' = model input)."""

    name: str
    kind: str                      # conv|bn|relu|maxpool|avgpool|gap|concat|add|linear
    inputs: tuple[str, ...]
    out_shape: tuple[int, int, int]   # (C, H, W), batch-free
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    in_channels: int = 0
    out_channels: int = 0
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "conv" and self.kernel not in (1, 3):
            raise GraphError(f"{self.name}: conv kernel must be 1 or 3")
        if self.kind in ("maxpool", "avgpool") and self.kernel < 1:
            raise GraphError(f"{self.name}: pool kernel must be >= 1")


def _infer_shape(kind: str, in_shapes: list[tuple[int, int, int]],
                 node: NodeSpec) -> tuple[int, int, int]:
    """Shape-arithmetic for one node, from its input shapes and attributes."""
    c, h, w = in_shapes[0]
    if kind == "conv":
        ho = (h + 2 * node.pad - node.kernel) // node.stride + 1
        wo = (w + 2 * node.pad - node.kernel) // node.stride + 1
        if c != node.in_channels:
            raise GraphError(f"{node.name}: expects {node.in_channels} input "
                             f"channels, feed has {c}")
        return (node.out_channels, ho, wo)
    if kind in ("maxpool", "avgpool"):
        ho = (h + 2 * node.pad - node.kernel) // node.stride + 1
        wo = (w + 2 * node.pad - node.kernel) // node.stride + 1
        return (c, ho, wo)
    if kind in ("bn", "relu"):
        return (c, h, w)
    if kind == "gap":
        return (c, 1, 1)
    if kind == "concat":
        for cc, hh, ww in in_shapes[1:]:
            if (hh, ww) != (h, w):
                raise GraphError(f"{node.name}: concat spatial mismatch {in_shapes}")
        return (sum(s[0] for s in in_shapes), h, w)
    if kind == "add":
        if in_shapes[1] != in_shapes[0]:
            raise GraphError(f"{node.name}: add shape mismatch {in_shapes}")
        return in_shapes[0]
    if kind == "linear":
        feats = c * h * w
        if feats != node.in_features:
            raise GraphError(f"{node.name}: expects {node.in_features} features, "
                             f"feed has {feats}")
        return (node.out_features, 1, 1)
    raise GraphError(f"{node.name}: unknown kind {kind!r}")


@dataclass
class ModelGraph:
    config: ModelConfig
    nodes: list[NodeSpec]
    parameters: dict[str, T.Tensor]          # trainable, insertion-ordered
    buffers: dict[str, np.ndarray]           # bn running stats
    output_name: str = ""
    stage_nodes: dict[str, str] = field(default_factory=dict)

    def node(self, name: str) -> NodeSpec:
        index = getattr(self, "_node_index", None)
        if index is None:
            index = {n.name: n for n in self.nodes}
            self._node_index = index
        return index[name]

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (3, self.config.input_size, self.config.input_size)

    def parameter_count(self) -> int:
        """Number of trainable scalars."""
        return sum(t.size for t in self.parameters.values())

    def named_states(self) -> dict[str, np.ndarray]:
        """All persistent state (weights plus running stats), checkpoint order."""
        states: dict[str, np.ndarray] = {k: t.data for k, t in self.parameters.items()}
        states.update(self.buffers)
        return states

    def load_states(self, states: dict[str, np.ndarray]) -> None:
        own = self.named_states()
        missing = sorted(set(own) - set(states))
        extra = sorted(set(states) - set(own))
        if missing or extra:
            raise GraphError(f"state mismatch: missing {missing[:5]}, "
                             f"unexpected {extra[:5]}")
        for name, t in self.parameters.items():
            arr = np.asarray(states[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise GraphError(f"{name}: shape {arr.shape} != {t.data.shape}")
            t.data[...] = arr
        for name in self.buffers:
            arr = np.asarray(states[name], dtype=self.buffers[name].dtype)
            if arr.shape != self.buffers[name].shape:
                raise GraphError(f"{name}: shape mismatch")
            self.buffers[name][...] = arr


class _Builder:
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.nodes: list[NodeSpec] = []
        self.shapes: dict[str, tuple[int, int, int]] = {
            "input": (3, config.input_size, config.input_size)}
        self.params: dict[str, T.Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def emit(self, kind: str, name: str, inputs, **attrs) -> str:
        inputs = tuple(inputs)
        proto = NodeSpec(name=name, kind=kind, inputs=inputs,
                         out_shape=(0, 0, 0), **attrs)
        shape = _infer_shape(kind, [self.shapes[i] for i in inputs], proto)
        self.nodes.append(replace(proto, out_shape=shape))
        self.shapes[name] = shape
        return name

    def he_conv(self, name: str, cin: int, cout: int, k: int) -> None:
        std = math.sqrt(2.0 / (cin * k * k))
        self.params[name + ".w"] = T.Tensor(
            (self.rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32),
            requires_grad=True, name=name + ".w")

    def conv(self, name: str, src: str, cout: int, k: int, stride: int = 1) -> str:
        cin = self.shapes[src][0]
        self.he_conv(name, cin, cout, k)
        return self.emit("conv", name, (src,), kernel=k, stride=stride,
                         pad=1 if k == 3 else 0, in_channels=cin, out_channels=cout)

    def bn(self, name: str, src: str) -> str:
        c = self.shapes[src][0]
        self.params[name + ".gamma"] = T.Tensor(
            np.ones(c, dtype=np.float32), requires_grad=True, name=name + ".gamma")
        self.params[name + ".beta"] = T.Tensor(
            np.zeros(c, dtype=np.float32), requires_grad=True, name=name + ".beta")
        self.buffers[name + ".running_mean"] = np.zeros(c, dtype=np.float32)
        self.buffers[name + ".running_var"] = np.ones(c, dtype=np.float32)
        return self.emit("bn", name, (src,), in_channels=c, out_channels=c)

    def concat(self, name: str, srcs: list[str]) -> str:
        if len(srcs) == 1:
            return srcs[0]
        return self.emit("concat", name, tuple(srcs))


def build(config: ModelConfig, seed: int = 0) -> ModelGraph:
    """Construct a fully initialized TripleNet graph for `config`.

    Weight init is He fan-in for convs and the classifier, gamma=1/beta=0 for
    batch norm; identical (config, seed) pairs build bit-identical graphs.
    """
    b = _Builder(config, np.random.default_rng(seed))
    stages: dict[str, str] = {}

    cur = b.conv("stem/conv1", "input", config.stem_channels, 3, stride=2)
    stages["stem"] = cur
    cur = b.conv("stem/conv2", cur, config.stem_channels, 3, stride=1)
    cur = b.emit("maxpool", "stem/pool", (cur,), kernel=3, stride=2, pad=1)

    for bi in range(5):
        block = f"block{bi + 1}"
        depth = config.block_depths[bi]
        growth = config.growth_rates[bi]
        if bi == 0:
            cur = _dense_block(b, block, cur, depth, growth)
        elif bi < 4:
            cur = _harmonic_block(b, block, cur, depth, growth)
        else:
            cur = _residual_block(b, block, cur, depth, growth)
        stages[block] = cur
        if bi < 4:
            cur = b.conv(f"transition{bi + 1}/conv", cur,
                         config.block_channels[bi + 1], 1)
            if bi != 2:  # the block-3 transition keeps the spatial size
                kind = "avgpool" if config.transition_pool == "avg" else "maxpool"
                cur = b.emit(kind, f"transition{bi + 1}/pool", (cur,),
                             kernel=2, stride=2)

    cur = b.emit("gap", "classifier/gap", (cur,))
    stages["pool"] = cur
    feats = b.shapes[cur][0]
    wname = "classifier/fc"
    std = math.sqrt(2.0 / feats)
    b.params[wname + ".w"] = T.Tensor(
        (b.rng.standard_normal((feats, config.num_classes)) * std).astype(np.float32),
        requires_grad=True, name=wname + ".w")
    b.params[wname + ".b"] = T.Tensor(
        np.zeros(config.num_classes, dtype=np.float32),
        requires_grad=True, name=wname + ".b")
    out = b.emit("linear", wname, (cur,), in_features=feats,
                 out_features=config.num_classes)

    return ModelGraph(config=config, nodes=b.nodes, parameters=b.params,
                      buffers=b.buffers, output_name=out, stage_nodes=stages)


def _dense_block(b: _Builder, block: str, x0: str, depth: int, growth: int) -> str:
    cfg = b.config
    outputs = {0: x0}
    for n in range(1, depth + 1):
        unit = f"{block}/unit{n:02d}"
        srcs = [outputs[s] for s in dense_links(n).sources]
        cur = b.concat(f"{unit}/concat", srcs)
        cur = b.bn(f"{unit}/bn1", cur)
        cur = b.emit("relu", f"{unit}/relu1", (cur,))
        cur = b.conv(f"{unit}/conv1", cur, cfg.dense_expansion * growth, 1)
        cur = b.bn(f"{unit}/bn2", cur)
        cur = b.emit("relu", f"{unit}/relu2", (cur,))
        cur = b.conv(f"{unit}/conv2", cur, growth, 3)
        outputs[n] = cur
    members = block_output_members("dense", depth)
    return b.concat(f"{block}/out", [outputs[m] for m in members])


def _harmonic_block(b: _Builder, block: str, x0: str, depth: int, growth: int) -> str:
    outputs = {0: x0}
    for n in range(1, depth + 1):
        unit = f"{block}/unit{n:02d}"
        srcs = [outputs[s] for s in harmonic_links(n).sources]
        cur = b.concat(f"{unit}/concat", srcs)
        cur = b.conv(f"{unit}/conv", cur, layer_width(n, "harmonic", growth), 3)
        cur = b.bn(f"{unit}/bn", cur)
        cur = b.emit("relu", f"{unit}/relu", (cur,))
        outputs[n] = cur
    members = block_output_members("harmonic", depth)
    return b.concat(f"{block}/out", [outputs[m] for m in members])


def _residual_block(b: _Builder, block: str, x0: str, depth: int, growth: int) -> str:
    cfg = b.config
    width = b.shapes[x0][0]
    mid = cfg.bottleneck_mid_channels(width, growth)
    cur = x0
    for n in range(1, depth + 1):
        unit = f"{block}/unit{n:02d}"
        identity = cur
        y = b.conv(f"{unit}/conv1", cur, width // 2, 1)
        y = b.bn(f"{unit}/bn1", y)
        y = b.emit("relu", f"{unit}/relu1", (y,))
        y = b.conv(f"{unit}/conv2", y, mid, 3)
        y = b.bn(f"{unit}/bn2", y)
        y = b.emit("relu", f"{unit}/relu2", (y,))
        y = b.conv(f"{unit}/conv3", y, width, 1)
        y = b.bn(f"{unit}/bn3", y)
        y = b.emit("add", f"{unit}/add", (identity, y))
        cur = b.emit("relu", f"{unit}/relu3", (y,))
    return cur


# ---------------------------------------------------------------------------
# shape dry-run and execution

def dry_run_shapes(graph: ModelGraph, batch: int = 1) -> list[tuple[str, str, tuple]]:
    """Re-infer every node's output shape and check it against the metadata.

    Returns (name, kind, (batch, C, H, W)) rows; raises GraphError naming the
    first mismatching node.  This is a consistency probe, not execution.
    """
    if not graph.nodes:
        raise GraphError("graph has no nodes")
    if batch < 1:
        raise GraphError(f"batch must be >= 1, got {batch}")
    shapes = {"input": graph.input_shape}
    rows = []
    for node in graph.nodes:
        inferred = _infer_shape(node.kind, [shapes[i] for i in node.inputs], node)
        if inferred != node.out_shape:
            raise GraphError(f"{node.name}: declared shape {node.out_shape} but "
                             f"inference gives {inferred}")
        shapes[node.name] = inferred
        rows.append((node.name, node.kind, (batch,) + inferred))
    return rows


def stage_sizes(graph: ModelGraph) -> list[int]:
    """Spatial sizes of the seven reference stages (stem convs, blocks 1-5, pool)."""
    order = ["stem", "block1", "block2", "block3", "block4", "block5", "pool"]
    return [graph.node(graph.stage_nodes[s]).out_shape[1] for s in order]


def forward(graph: ModelGraph, x: T.Tensor, mode: str = "eval",
            tape: T.Tape | None = None,
            trace: dict[str, T.Tensor] | None = None) -> T.Tensor:
    """Run the graph on x[B,3,S,S] and return logits [B, num_classes].

    mode 'train' uses batch statistics in batch norm (and requires a tape so
    a backward pass is possible); 'eval' uses running statistics.  A `trace`
    dict, when given, collects every node's output tensor by name.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and tape is None:
        raise ValueError("train-mode forward requires a tape")
    expected = graph.input_shape
    if x.data.ndim != 4 or tuple(x.data.shape[1:]) != expected:
        raise T.ShapeError(f"input shape {x.data.shape} does not match the "
                           f"graph's (B, {expected[0]}, {expected[1]}, {expected[2]})")

    params, buffers, cfg = graph.parameters, graph.buffers, graph.config
    values: dict[str, T.Tensor] = {"input": x}
    for node in graph.nodes:
        ins = [values[i] for i in node.inputs]
        if node.kind == "conv":
            out = T.conv2d(ins[0], params[node.name + ".w"], stride=node.stride,
                           pad=node.pad, tape=tape)
        elif node.kind == "bn":
            out = T.batchnorm2d(ins[0], params[node.name + ".gamma"],
                                params[node.name + ".beta"],
                                buffers[node.name + ".running_mean"],
                                buffers[node.name + ".running_var"],
                                training=(mode == "train"),
                                momentum=cfg.bn_momentum, eps=cfg.bn_eps, tape=tape)
        elif node.kind == "relu":
            out = T.relu(ins[0], tape=tape)
        elif node.kind == "maxpool":
            out = T.maxpool2d(ins[0], node.kernel, node.stride, node.pad, tape=tape)
        elif node.kind == "avgpool":
            out = T.avgpool2d(ins[0], node.kernel, node.stride, tape=tape)
        elif node.kind == "gap":
            out = T.global_avgpool(ins[0], tape=tape)
        elif node.kind == "concat":
            out = T.concat_channels(ins, tape=tape)
        elif node.kind == "add":
            out = T.add(ins[0], ins[1], tape=tape)
        elif node.kind == "linear":
            out = T.linear(T.flatten2(ins[0], tape=tape),
                           params[node.name + ".w"], params[node.name + ".b"],
                           tape=tape)
        else:
            raise GraphError(f"{node.name}: unknown kind {node.kind!r}")
        values[node.name] = out
    if trace is not None:
        trace.update(values)
    return values[graph.output_name]
