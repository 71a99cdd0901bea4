"""Static per-node cost model: parameters, MACs, MAdd, activation and R+W bytes.

Counting rules (integer arithmetic throughout, unit formatting happens only
at render time):

  conv    params = k^2*Cin*Cout          macs = params*H'*W'   madd = 2*macs
  linear  params = F*K + K               macs = F*K            madd = 2*macs
  bn      params = 2C (gamma, beta)      macs = 0              madd = 2*C*H*W
  pool / relu / concat / add / gap: params 0, macs 0, madd = output elements

  act_bytes = 4 * batch * output elements
  rw_bytes  = 4 * (batch * input elements + weight elements + batch * output
              elements) -- one read of every input and weight, one write of
              the output, no cache modeling.

The peak activation figure walks the graph with a simple liveness schedule
(a tensor is live from production until its last consumer) at batch 1; it is
a model of the resident-memory column, not a measurement.

Units used by the renderers: G = 10^9, M = 10^6, MB = 2^20 bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

from .graph import GraphError, ModelGraph

CSV_HEADER = "name,kind,out_shape,params,macs,madd,act_bytes,rw_bytes"

# Published totals for the TripleNet variants, used as a diagnostic reference
# by the renderers (deviation lines), never as an oracle.
PUBLISHED_PARAMS = {"s": 9_670_000, "b": 12_630_000}
PUBLISHED_MACS = {"s": 4_170_000_000, "b": 4_290_000_000}


@dataclass(frozen=True)
class NodeCost:
    name: str
    kind: str
    out_shape: tuple[int, ...]   # (batch, C, H, W)
    params: int
    macs: int
    madd: int
    act_bytes: int
    rw_bytes: int


@dataclass(frozen=True)
class CostTotals:
    params: int
    macs: int
    madd: int
    act_bytes: int
    rw_bytes: int


@dataclass(frozen=True)
class CostReport:
    variant: str
    input_size: int
    num_classes: int
    batch: int
    rows: tuple[NodeCost, ...]
    totals: CostTotals
    peak_act_bytes: int
    readings: dict[str, str]

    def column(self, name: str) -> int:
        return getattr(self.totals, name)


def analyze(graph: ModelGraph, batch: int = 1) -> CostReport:
    """Compute the per-node and aggregate cost report without executing."""
    if batch < 1:
        raise GraphError(f"batch must be >= 1, got {batch}")
    cfg = graph.config
    param_sizes: dict[str, int] = {}
    for pname, t in graph.parameters.items():
        node_name = pname.rsplit(".", 1)[0]
        param_sizes[node_name] = param_sizes.get(node_name, 0) + t.size

    shapes = {"input": graph.input_shape}
    rows: list[NodeCost] = []
    for node in graph.nodes:
        shapes[node.name] = node.out_shape
        c, h, w = node.out_shape
        out_elems = c * h * w
        params = param_sizes.get(node.name, 0)
        if node.kind == "conv":
            macs = params * h * w
            madd = 2 * macs
        elif node.kind == "linear":
            macs = node.in_features * node.out_features
            madd = 2 * macs
        elif node.kind == "bn":
            macs, madd = 0, 2 * out_elems
        else:
            macs, madd = 0, out_elems
        in_elems = sum(prod(shapes[i]) for i in node.inputs)
        rows.append(NodeCost(
            node.name, node.kind, (batch,) + node.out_shape, params,
            batch * macs, batch * madd, 4 * batch * out_elems,
            4 * (batch * in_elems + params + batch * out_elems)))

    totals = CostTotals(
        params=sum(r.params for r in rows),
        macs=sum(r.macs for r in rows),
        madd=sum(r.madd for r in rows),
        act_bytes=sum(r.act_bytes for r in rows),
        rw_bytes=sum(r.rw_bytes for r in rows),
    )
    materialized = graph.parameter_count()
    if totals.params != materialized:
        raise GraphError(f"cost model counted {totals.params} trainable scalars "
                         f"but the graph materializes {materialized}")

    mid = cfg.bottleneck_mid
    readings = {
        "channel-table": "per-block input widths, stem at channel[0]",
        "bottleneck-3x3": mid if isinstance(mid, str) else f"fixed({mid})",
        "transition-pool": cfg.transition_pool,
    }
    return CostReport(variant=cfg.variant, input_size=cfg.input_size,
                      num_classes=cfg.num_classes, batch=batch,
                      rows=tuple(rows), totals=totals,
                      peak_act_bytes=_peak_activation_bytes(graph),
                      readings=readings)


def _peak_activation_bytes(graph: ModelGraph) -> int:
    """Peak live activation footprint at batch 1 under produce-to-last-use liveness."""
    names = ["input"] + [n.name for n in graph.nodes]
    produced = {name: i for i, name in enumerate(names)}  # input at step 0
    nbytes = {"input": 4 * prod(graph.input_shape)}
    last_use = {name: produced[name] for name in names}
    for node in graph.nodes:
        nbytes[node.name] = 4 * prod(node.out_shape)
        for src in node.inputs:
            last_use[src] = max(last_use[src], produced[node.name])
    last_use[graph.output_name] = len(names)  # the output survives the run

    peak = 0
    for step in range(len(names)):
        live = sum(nbytes[n] for n in names
                   if produced[n] <= step <= last_use[n])
        peak = max(peak, live)
    return peak


@dataclass(frozen=True)
class ColumnDelta:
    absolute: int
    relative: float


def compare(a: CostReport, b: CostReport) -> dict[str, ColumnDelta]:
    """Per-column deltas of a minus b (relative to b)."""
    out = {}
    for col in ("params", "macs", "madd", "act_bytes", "rw_bytes"):
        va, vb = a.column(col), b.column(col)
        out[col] = ColumnDelta(va - vb, (va - vb) / vb if vb else 0.0)
    pa, pb = a.peak_act_bytes, b.peak_act_bytes
    out["peak_act_bytes"] = ColumnDelta(pa - pb, (pa - pb) / pb if pb else 0.0)
    return out


# ---------------------------------------------------------------------------
# rendering

def _fmt_shape(shape: tuple[int, ...]) -> str:
    return "x".join(str(e) for e in shape)


def render_csv(report: CostReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(f"{r.name},{r.kind},{_fmt_shape(r.out_shape)},"
                     f"{r.params},{r.macs},{r.madd},{r.act_bytes},{r.rw_bytes}")
    t = report.totals
    lines.append(f"total,total,,{t.params},{t.macs},{t.madd},{t.act_bytes},{t.rw_bytes}")
    return "\n".join(lines) + "\n"


def render_text(report: CostReport) -> str:
    t = report.totals
    header = [
        f"cost report: triplenet-{report.variant} @ {report.input_size}x"
        f"{report.input_size}, {report.num_classes} classes, batch {report.batch}",
        "units: G = 1e9, M = 1e6, MB = 2^20 bytes",
        "readings: " + "; ".join(f"{k}={v}" for k, v in report.readings.items()),
        "",
    ]
    cols = f"{'name':<28} {'kind':<8} {'out_shape':<16} {'params':>10} " \
           f"{'macs':>13} {'madd':>13} {'act_bytes':>11} {'rw_bytes':>11}"
    lines = header + [cols, "-" * len(cols)]
    for r in report.rows:
        lines.append(f"{r.name:<28} {r.kind:<8} {_fmt_shape(r.out_shape):<16} "
                     f"{r.params:>10} {r.macs:>13} {r.madd:>13} "
                     f"{r.act_bytes:>11} {r.rw_bytes:>11}")
    lines.append("-" * len(cols))
    lines.append(f"totals: params {t.params:,} ({t.params / 1e6:.2f}M)  "
                 f"macs {t.macs / 1e9:.2f}G  madd {t.madd / 1e9:.2f}G  "
                 f"act {t.act_bytes / 2**20:.2f}MB  rw {t.rw_bytes / 2**20:.2f}MB")
    lines.append(f"peak activation (batch 1): {report.peak_act_bytes / 2**20:.2f}MB")
    lines.append(f"madd/macs ratio: {t.madd / t.macs:.3f}")
    ref = PUBLISHED_PARAMS.get(report.variant)
    if ref:
        dev = 100.0 * (t.params - ref) / ref
        lines.append(f"published params for triplenet-{report.variant}: "
                     f"{ref / 1e6:.2f}M; deviation {dev:+.1f}% "
                     f"(bottleneck-3x3 reading: {report.readings['bottleneck-3x3']})")
    refm = PUBLISHED_MACS.get(report.variant)
    if refm and report.input_size == 224:
        devm = 100.0 * (t.macs - refm) / refm
        lines.append(f"published flops (as MACs): {refm / 1e9:.2f}G; "
                     f"deviation {devm:+.1f}%")
    return "\n".join(lines) + "\n"
