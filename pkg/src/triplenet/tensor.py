"""Dense float tensor engine with tape-based reverse-mode differentiation.

Every primitive the TripleNet graphs need lives here: 2d convolution,
batch norm, relu, max/avg/global pooling, channel concat, elementwise add,
linear, and softmax cross-entropy.  Each op optionally records itself on a
Tape; backward() replays the tape in reverse and accumulates gradients into
the .grad slot of every input tensor, so a tensor consumed by k ops receives
the sum of k contributions.

Arrays are plain numpy.  Ops preserve the input dtype: production graphs run
float32, the finite-difference harness re-runs everything in float64.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_finite_checks = False


def set_finite_checks(enabled: bool) -> None:
    """Globally toggle NaN/Inf assertions after every forward op (slow; for tests)."""
    global _finite_checks
    _finite_checks = bool(enabled)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if _finite_checks and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} produced non-finite values")


class Tensor:
    """A dense n-d float array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype})"


def tensor(data, dtype=np.float32, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad, name=name)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


class Tape:
    """Ordered record of executed primitives, replayed in reverse by backward()."""

    def __init__(self):
        self._entries: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._spent = False

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._entries.append((out, backward_fn))

    def __len__(self) -> int:
        return len(self._entries)


def backward(tape: Tape, loss: Tensor, seed=1.0) -> None:
    """Run reverse-mode accumulation for everything recorded on `tape`.

    Seeds loss.grad with `seed` (a scalar, or an upstream-gradient array
    broadcastable to the loss shape) and visits records in exact reverse
    execution order.  A tape can be consumed once; re-running forward builds
    a new one.  Ops whose output never received a gradient are skipped.
    """
    if tape._spent:
        raise RuntimeError("tape already consumed by backward(); re-run forward first")
    _accumulate(loss, np.broadcast_to(
        np.asarray(seed, dtype=loss.data.dtype), loss.data.shape))
    for out, fn in reversed(tape._entries):
        if out.grad is not None:
            fn(out.grad)
    tape._spent = True


# ---------------------------------------------------------------------------
# convolution

def _conv_out_size(extent: int, k: int, stride: int, pad: int) -> int:
    return (extent + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0,
           tape: Optional[Tape] = None) -> Tensor:
    """Bias-free cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,k,k]."""
    xd, wd = x.data, w.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError(f"conv2d expects 4d operands, got {xd.shape} and {wd.shape}")
    kh, kw = wd.shape[2], wd.shape[3]
    if kh != kw or kh not in (1, 3):
        raise ShapeError(f"conv2d kernel must be square 1x1 or 3x3, got {kh}x{kw}")
    if stride not in (1, 2):
        raise ShapeError(f"conv2d stride must be 1 or 2, got {stride}")
    if xd.shape[1] != wd.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input {xd.shape} has {xd.shape[1]} channels, "
            f"kernel {wd.shape} expects {wd.shape[1]}")
    b, cin, h, wdt = xd.shape
    cout = wd.shape[0]
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(wdt, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {xd.shape}, "
                         f"kernel {kh}, stride {stride}, pad {pad}")

    if kh == 1 and stride == 1 and pad == 0:
        # pointwise fast path: a plain channel matmul
        w00 = wd[:, :, 0, 0]
        out_d = np.ascontiguousarray(
            np.tensordot(xd, w00, axes=([1], [1])).transpose(0, 3, 1, 2))
        cols = None
        xp = xd
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
        cols = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        cols = cols[:, :, ::stride, ::stride]  # [B, Cin, Ho, Wo, kh, kw] view
        out_d = np.ascontiguousarray(
            np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2))
    out = Tensor(out_d)
    _check_finite("conv2d", out_d)

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            if cols is None:
                _accumulate(w, np.tensordot(dout, xd, axes=([0, 2, 3], [0, 2, 3]))
                            [:, :, None, None])
                _accumulate(x, np.ascontiguousarray(
                    np.tensordot(dout, wd[:, :, 0, 0], axes=([1], [0]))
                    .transpose(0, 3, 1, 2)))
                return
            _accumulate(w, np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3])))
            dcols = np.tensordot(dout, wd, axes=([1], [0]))  # [B, Ho, Wo, Cin, kh, kw]
            gxp = np.zeros_like(xp)
            for u in range(kh):
                for v in range(kw):
                    gxp[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += \
                        dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
            _accumulate(x, gxp[:, :, pad:pad + h, pad:pad + wdt] if pad else gxp)
        tape.record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# batch normalization

def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5,
                tape: Optional[Tape] = None) -> Tensor:
    """Per-channel normalization of x[B,C,H,W].

    Train mode uses batch statistics and folds them into the running buffers
    with an exponential moving average; eval mode uses the running buffers.
    eps keeps zero-variance channels finite.
    """
    xd = x.data
    c = xd.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm2d affine params must have shape ({c},), "
                         f"got gamma {gamma.data.shape}, beta {beta.data.shape}")
    gd = gamma.data.reshape(1, c, 1, 1)
    bd = beta.data.reshape(1, c, 1, 1)

    if training:
        m = xd.shape[0] * xd.shape[2] * xd.shape[3]
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (xd - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
        unbiased = var * m / (m - 1) if m > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = Tensor(gd * xhat + bd)
    _check_finite("batchnorm2d", out.data)

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            _accumulate(gamma, (dout * xhat).sum(axis=(0, 2, 3)))
            _accumulate(beta, dout.sum(axis=(0, 2, 3)))
            if training:
                dxhat = dout * gd
                dx = (dxhat
                      - dxhat.mean(axis=(0, 2, 3), keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
                      ) * inv_std.reshape(1, c, 1, 1)
                _accumulate(x, dx)
            else:
                _accumulate(x, dout * gd * inv_std.reshape(1, c, 1, 1))
        tape.record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# activations and pooling

def relu(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    if tape is not None:
        mask = x.data > 0

        def bwd(dout: np.ndarray) -> None:
            _accumulate(x, dout * mask)
        tape.record(out, bwd)
    return out


def _pool_windows(xp: np.ndarray, k: int, stride: int):
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]  # [B, C, Ho, Wo, k, k]


def maxpool2d(x: Tensor, k: int, stride: int, pad: int = 0,
              tape: Optional[Tape] = None) -> Tensor:
    """Max pooling; padding positions are -inf so they never win."""
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError(f"maxpool2d expects 4d input, got {xd.shape}")
    b, c, h, w = xd.shape
    ho, wo = _conv_out_size(h, k, stride, pad), _conv_out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool2d output would be empty for input {xd.shape}")
    if pad:
        xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                    constant_values=-np.inf)
    else:
        xp = xd
    flat = _pool_windows(xp, k, stride).reshape(b, c, ho, wo, k * k)
    arg = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0])
    _check_finite("maxpool2d", out.data)

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            gxp = np.zeros_like(xp)
            bi, ci, ii, ji = np.ogrid[:b, :c, :ho, :wo]
            rows = ii * stride + arg // k
            cols = ji * stride + arg % k
            np.add.at(gxp, (bi, ci, rows, cols), dout)
            _accumulate(x, gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp)
        tape.record(out, bwd)
    return out


def avgpool2d(x: Tensor, k: int, stride: int, tape: Optional[Tape] = None) -> Tensor:
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError(f"avgpool2d expects 4d input, got {xd.shape}")
    b, c, h, w = xd.shape
    ho, wo = _conv_out_size(h, k, stride, 0), _conv_out_size(w, k, stride, 0)
    if ho < 1 or wo < 1:
        raise ShapeError(f"avgpool2d output would be empty for input {xd.shape}")
    out = Tensor(_pool_windows(xd, k, stride).mean(axis=(-2, -1)))

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            g = dout / (k * k)
            gx = np.zeros_like(xd)
            for u in range(k):
                for v in range(k):
                    gx[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += g
            _accumulate(x, gx)
        tape.record(out, bwd)
    return out


def global_avgpool(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError(f"global_avgpool expects 4d input, got {xd.shape}")
    h, w = xd.shape[2], xd.shape[3]
    out = Tensor(xd.mean(axis=(2, 3), keepdims=True))

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            _accumulate(x, np.broadcast_to(dout / (h * w), xd.shape).copy())
        tape.record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# structural ops

def concat_channels(xs: Sequence[Tensor], tape: Optional[Tape] = None) -> Tensor:
    if not xs:
        raise ShapeError("concat_channels needs at least one input")
    shapes = [t.data.shape for t in xs]
    base = shapes[0]
    for s in shapes[1:]:
        if len(s) != 4 or s[0] != base[0] or s[2:] != base[2:]:
            raise ShapeError(f"concat_channels batch/spatial mismatch: {shapes}")
    out = Tensor(np.concatenate([t.data for t in xs], axis=1))

    if tape is not None:
        offsets = np.cumsum([0] + [s[1] for s in shapes])

        def bwd(dout: np.ndarray) -> None:
            for t, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
                _accumulate(t, dout[:, lo:hi])
        tape.record(out, bwd)
    return out


def add(a: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            _accumulate(a, dout)
            _accumulate(b, dout)
        tape.record(out, bwd)
    return out


def flatten2(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Collapse all non-batch axes: [B, ...] -> [B, F]."""
    shape = x.data.shape
    out = Tensor(x.data.reshape(shape[0], -1))

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            _accumulate(x, dout.reshape(shape))
        tape.record(out, bwd)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Affine map of x[B,F] by w[F,K] plus bias b[K]."""
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[0]:
        raise ShapeError(f"linear shape mismatch: input {xd.shape} vs weight {wd.shape}")
    if bd.shape != (wd.shape[1],):
        raise ShapeError(f"linear bias must have shape ({wd.shape[1]},), got {bd.shape}")
    out = Tensor(xd @ wd + bd)
    _check_finite("linear", out.data)

    if tape is not None:
        def bwd(dout: np.ndarray) -> None:
            _accumulate(x, dout @ wd.T)
            _accumulate(w, xd.T @ dout)
            _accumulate(b, dout.sum(axis=0))
        tape.record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# loss

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a [B,K] array (numerically stabilized)."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray,
                          tape: Optional[Tape] = None) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], max-subtracted."""
    ld = logits.data
    if ld.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects [B,K] logits, got {ld.shape}")
    bsz, k = ld.shape
    labels = np.asarray(labels)
    if labels.shape != (bsz,):
        raise ShapeError(f"labels must have shape ({bsz},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels out of range [0, {k}): "
                         f"min {labels.min()}, max {labels.max()}")
    z = ld - ld.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss_val = (lse[:, 0] - z[np.arange(bsz), labels]).mean()
    out = Tensor(np.asarray(loss_val, dtype=ld.dtype))
    _check_finite("softmax_cross_entropy", out.data)

    if tape is not None:
        probs = np.exp(z - lse)

        def bwd(dout: np.ndarray) -> None:
            g = probs.copy()
            g[np.arange(bsz), labels] -= 1.0
            _accumulate(logits, g * (dout / bsz))
        tape.record(out, bwd)
    return out
