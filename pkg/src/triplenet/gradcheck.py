"""Finite-difference verification of every primitive's backward pass.

Each check builds small float64 instances, scalarizes the op output with a
fixed random weighting L = sum(out * R), and compares the tape gradients with
central differences (h = 1e-4).  The reported figure is the worst per-element
relative error max|ga-gn| / max(|ga|, |gn|, 1e-6) across inputs and instances.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T

DEFAULT_H = 1e-4
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float((np.abs(analytic - numeric) / denom).max())


def finite_diff_gradients(out_fn: Callable[[T.Tape | None], T.Tensor],
                          wrt: list[T.Tensor], h: float = DEFAULT_H,
                          rng: np.random.Generator | None = None) -> float:
    """Worst relative error between tape gradients and central differences.

    `out_fn(tape)` must rebuild the forward value from the current contents of
    the `wrt` tensors (float64).  Non-scalar outputs are weighted by a fixed
    random array so the whole Jacobian is probed.
    """
    rng = rng or np.random.default_rng(0)
    probe = out_fn(None)
    weights = (rng.standard_normal(probe.data.shape)
               if probe.data.shape else np.asarray(1.0))

    for t in wrt:
        t.zero_grad()
    tape = T.Tape()
    out = out_fn(tape)
    T.backward(tape, out, seed=weights)

    def value() -> float:
        return float((out_fn(None).data * weights).sum())

    worst = 0.0
    for t in wrt:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = value()
            flat[i] = orig - h
            fm = value()
            flat[i] = orig
            num_flat[i] = (fp - fm) / (2.0 * h)
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst


def _f64(rng, shape, scale=1.0):
    return T.Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _separated(rng, shape, gap=0.01):
    """Values pairwise separated by >= gap, so +-h never flips a window max."""
    vals = rng.permutation(np.prod(shape)).astype(np.float64) * gap
    return T.Tensor(vals.reshape(shape), requires_grad=True)


def _check_conv2d(rng):
    stride = int(rng.integers(1, 3))
    k = 3 if rng.integers(2) else 1
    x = _f64(rng, (2, 3, 6, 6))
    w = _f64(rng, (4, 3, k, k), 0.5)
    pad = 1 if k == 3 else 0
    return [x, w], lambda tape: T.conv2d(x, w, stride=stride, pad=pad, tape=tape)


def _check_batchnorm2d(rng):
    x = _f64(rng, (4, 3, 5, 5))
    gamma = T.Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    beta = _f64(rng, (3,))
    rm = np.zeros(3)
    rv = np.ones(3)
    return [x, gamma, beta], lambda tape: T.batchnorm2d(
        x, gamma, beta, rm, rv, training=True, tape=tape)


def _check_relu(rng):
    # keep inputs away from the kink at 0
    mag = rng.uniform(0.1, 1.5, (2, 3, 4, 4))
    sign = rng.choice([-1.0, 1.0], (2, 3, 4, 4))
    x = T.Tensor(mag * sign, requires_grad=True)
    return [x], lambda tape: T.relu(x, tape=tape)


def _check_maxpool2d(rng):
    if rng.integers(2):
        k, stride, pad = 2, 2, 0
    else:
        k, stride, pad = 3, 2, 1
    x = _separated(rng, (2, 3, 6, 6))
    return [x], lambda tape: T.maxpool2d(x, k, stride, pad, tape=tape)


def _check_avgpool2d(rng):
    k, stride = (2, 2) if rng.integers(2) else (3, 2)
    x = _f64(rng, (2, 3, 6, 6))
    return [x], lambda tape: T.avgpool2d(x, k, stride, tape=tape)


def _check_global_avgpool(rng):
    x = _f64(rng, (2, 5, 4, 4))
    return [x], lambda tape: T.global_avgpool(x, tape=tape)


def _check_concat(rng):
    xs = [_f64(rng, (2, c, 4, 4)) for c in (1, 3, 2)]
    return list(xs), lambda tape: T.concat_channels(xs, tape=tape)


def _check_add(rng):
    a = _f64(rng, (2, 3, 4, 4))
    b = _f64(rng, (2, 3, 4, 4))
    return [a, b], lambda tape: T.add(a, b, tape=tape)


def _check_linear(rng):
    x = _f64(rng, (3, 5))
    w = _f64(rng, (5, 4), 0.5)
    b = _f64(rng, (4,))
    return [x, w, b], lambda tape: T.linear(x, w, b, tape=tape)


def _check_softmax_cross_entropy(rng):
    logits = _f64(rng, (4, 6))
    labels = rng.integers(0, 6, 4)
    return [logits], lambda tape: T.softmax_cross_entropy(logits, labels, tape=tape)


def _composite_is_smooth_at(x, w, gamma, beta, margin=5e-3) -> bool:
    """True when the chain sits safely away from its non-smooth boundaries:
    no relu input within `margin` of zero, no near-tie at a pooling window's
    top (so the +-h probes of the central difference never cross a kink)."""
    y = T.conv2d(x, w, stride=1, pad=1)
    y = T.batchnorm2d(y, gamma, beta, np.zeros(4), np.ones(4), training=True)
    if np.abs(y.data).min() < margin:
        return False
    r = np.maximum(y.data, 0)
    win = np.lib.stride_tricks.sliding_window_view(r, (2, 2), axis=(2, 3))
    flat = np.sort(win[:, :, ::2, ::2].reshape(-1, 4), axis=1)
    top, runner_up = flat[:, 3], flat[:, 2]
    return bool(np.all((top == 0.0) | (top - runner_up >= margin)))


def _check_composite(rng):
    # conv -> bn -> relu -> maxpool -> linear -> cross-entropy on [2,3,8,8];
    # instances are resampled until the chain is locally smooth
    for _ in range(200):
        x = _f64(rng, (2, 3, 8, 8))
        w = _f64(rng, (4, 3, 3, 3), 0.4)
        gamma = T.Tensor(rng.uniform(0.5, 1.5, 4), requires_grad=True)
        beta = _f64(rng, (4,))
        if _composite_is_smooth_at(x, w, gamma, beta):
            break
    else:
        raise RuntimeError("no smooth composite instance found")
    fw = _f64(rng, (64, 3), 0.3)
    fb = _f64(rng, (3,))
    labels = rng.integers(0, 3, 2)
    rm = np.zeros(4)
    rv = np.ones(4)

    def run(tape):
        y = T.conv2d(x, w, stride=1, pad=1, tape=tape)
        y = T.batchnorm2d(y, gamma, beta, rm, rv, training=True, tape=tape)
        y = T.relu(y, tape=tape)
        y = T.maxpool2d(y, 2, 2, tape=tape)
        y = T.flatten2(y, tape=tape)
        y = T.linear(y, fw, fb, tape=tape)
        return T.softmax_cross_entropy(y, labels, tape=tape)
    return [x, w, gamma, beta, fw, fb], run


CHECKS: dict[str, Callable] = {
    "conv2d": _check_conv2d,
    "batchnorm2d": _check_batchnorm2d,
    "relu": _check_relu,
    "maxpool2d": _check_maxpool2d,
    "avgpool2d": _check_avgpool2d,
    "global_avgpool": _check_global_avgpool,
    "concat_channels": _check_concat,
    "add": _check_add,
    "linear": _check_linear,
    "softmax_cross_entropy": _check_softmax_cross_entropy,
    "composite": _check_composite,
}


def run_check(name: str, seed: int = 0, instances: int = 5,
              h: float = DEFAULT_H, tol: float = DEFAULT_TOL) -> CheckResult:
    builder = CHECKS[name]
    worst = 0.0
    for i in range(instances):
        # crc32, not hash(): reports must be identical across processes
        rng = np.random.default_rng((seed, i, zlib.crc32(name.encode())))
        wrt, out_fn = builder(rng)
        worst = max(worst, finite_diff_gradients(out_fn, wrt, h=h, rng=rng))
    return CheckResult(name, worst, tol)


def run_all(seed: int = 0, instances: int = 5,
            h: float = DEFAULT_H, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    """Check every primitive; >= `instances` seeded random instances each."""
    return [run_check(name, seed, instances, h, tol) for name in CHECKS]
