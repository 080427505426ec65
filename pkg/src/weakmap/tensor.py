"""Dense tensors with tape-based reverse-mode differentiation.

Only the operators the weak-localization network needs are provided.  Every
spatial operator accepts either a single feature map ``[H, W, C]`` or a batch
``[N, H, W, C]``; the leading axis is treated as independent samples except in
``batchnorm`` (train mode), which pools statistics over it.
"""

from __future__ import annotations

import contextlib
import threading
import weakref
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


@contextlib.contextmanager
def no_grad():
    """Disable recording; values are still computed."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """An n-d float64 array with an accompanying gradient buffer."""

    __slots__ = ("values", "requires_grad", "_grad", "_record", "name", "__weakref__")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        arr = np.array(values, dtype=DTYPE)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._record = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.requires_grad = False
        t._grad = None
        t._record = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = np.asarray(value, dtype=DTYPE).reshape(self.values.shape)

    def zero_grad(self) -> None:
        self._grad = None

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"expected a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.values)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    __rmul__ = __mul__


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# tape


class Record:
    """One recorded operation: how to recompute its output and pull back grads.

    The output is held weakly (it owns this record), so a discarded graph is
    freed by reference counting alone.
    """

    __slots__ = ("name", "inputs", "_output", "forward", "backward", "ctx")

    def __init__(self, name: str, inputs: tuple[Tensor, ...], output: Tensor, forward: Callable,
                 backward: Callable, ctx: object = None):
        self.name = name
        self.inputs = inputs
        self._output = weakref.ref(output)
        self.forward = forward
        self.backward = backward
        self.ctx = ctx

    @property
    def output(self) -> Tensor | None:
        return self._output()

    def replay(self) -> None:
        out, ctx = self.forward(*(t.values for t in self.inputs))
        target = self.output
        if target is not None:
            target.values = out
        self.ctx = ctx


@dataclass
class ComputationTape:
    """Records reachable from one output, inputs before consumers."""

    records: list[Record] = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputationTape":
        """Collect the records reachable from ``out`` in topological order."""
        order: list[Record] = []
        seen: set[int] = set()
        stack: list[tuple[Record, bool]] = []
        if out._record is not None:
            stack.append((out._record, False))
        while stack:
            rec, expanded = stack.pop()
            if expanded:
                order.append(rec)
                continue
            if id(rec) in seen:
                continue
            seen.add(id(rec))
            stack.append((rec, True))
            for t in rec.inputs:
                if t._record is not None and id(t._record) not in seen:
                    stack.append((t._record, False))
        return cls(order)

    def replay(self) -> None:
        for rec in self.records:
            rec.replay()

    def __len__(self) -> int:
        return len(self.records)


def apply_op(name: str, fwd: Callable, bwd: Callable, *inputs: Tensor) -> Tensor:
    """Run ``fwd`` on the input values and record it if any input needs grads.

    ``fwd(*arrays) -> (out, ctx)``; ``bwd(ctx, gout) -> tuple`` with one entry
    per input (``None`` where no gradient flows).
    """
    out_arr, ctx = fwd(*(t.values for t in inputs))
    out = Tensor._wrap(np.asarray(out_arr, dtype=DTYPE))
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._record = Record(name, inputs, out, fwd, bwd, ctx)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape."""
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = ComputationTape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(tape.records):
        out = rec.output
        if out is None:
            continue
        gout = grads.pop(id(out), None)
        if gout is None:
            continue
        _deposit(out, gout)
        gins = rec.backward(rec.ctx, gout)
        for t, g in zip(rec.inputs, gins):
            if g is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                holders[key] = t
    # leaves (and any tensor whose record was not reached)
    for key, g in grads.items():
        _deposit(holders[key], g)


def _deposit(t: Tensor, g: np.ndarray) -> None:
    # gradient arrays may be shared between tensors, so never update in place
    g = np.asarray(g, dtype=DTYPE)
    if g.shape != t.values.shape:
        g = np.broadcast_to(g, t.values.shape).copy()
    t._grad = g if t._grad is None else t._grad + g


# ---------------------------------------------------------------------------
# helpers


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_spatial(x: Tensor, what: str) -> None:
    if x.ndim not in (3, 4):
        raise ShapeError(f"{what}: expected [H,W,C] or [N,H,W,C], got shape {x.shape}")


def _batched(a: np.ndarray) -> tuple[np.ndarray, bool]:
    return (a[None], True) if a.ndim == 3 else (a, False)


# ---------------------------------------------------------------------------
# elementwise


def relu(x: Tensor) -> Tensor:
    def fwd(a):
        mask = a > 0
        return np.where(mask, a, 0.0), mask

    def bwd(mask, g):
        return (g * mask,)

    return apply_op("relu", fwd, bwd, x)


def sigmoid(x: Tensor) -> Tensor:
    def fwd(a):
        with np.errstate(over="ignore"):
            out = 1.0 / (1.0 + np.exp(-a))
        return out, out

    def bwd(s, g):
        return (g * s * (1.0 - s),)

    return apply_op("sigmoid", fwd, bwd, x)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def fwd(x, y):
        return x + y, (x.shape, y.shape)

    def bwd(shapes, g):
        return _unbroadcast(g, shapes[0]), _unbroadcast(g, shapes[1])

    return apply_op("add", fwd, bwd, a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; a ``[C]`` operand broadcasts over spatial axes."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def fwd(x, y):
        return x * y, (x, y)

    def bwd(ctx, g):
        x, y = ctx
        return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

    return apply_op("mul", fwd, bwd, a, b)


elementwise_mul = mul


def scalar_mul(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def fwd(x):
        return x * s, None

    def bwd(_, g):
        return (g * s,)

    return apply_op("scalar_mul", fwd, bwd, a)


def concat_channels(*parts: Tensor) -> Tensor:
    """Concatenate along the last (channel) axis."""
    if len(parts) < 1:
        raise ShapeError("concat_channels needs at least one operand")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat_channels: leading extents differ, {parts[0].shape} vs {p.shape}")
    sizes = [p.shape[-1] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def fwd(*arrs):
        return np.concatenate(arrs, axis=-1), None

    def bwd(_, g):
        return tuple(np.split(g, cuts, axis=-1))

    return apply_op("concat_channels", fwd, bwd, *parts)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    def fwd(a):
        return a[..., start:stop].copy(), a.shape

    def bwd(shape, g):
        full = np.zeros(shape, dtype=DTYPE)
        full[..., start:stop] = g
        return (full,)

    return apply_op("slice_channels", fwd, bwd, x)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)

    def fwd(a):
        return a.reshape(shape), a.shape

    def bwd(orig, g):
        return (g.reshape(orig),)

    return apply_op("reshape", fwd, bwd, x)


def sum_all(x: Tensor) -> Tensor:
    def fwd(a):
        return np.array(a.sum()), a.shape

    def bwd(shape, g):
        return (np.full(shape, float(g)),)

    return apply_op("sum", fwd, bwd, x)


def mean_all(x: Tensor) -> Tensor:
    n = x.size

    def fwd(a):
        return np.array(a.mean()), a.shape

    def bwd(shape, g):
        return (np.full(shape, float(g) / n),)

    return apply_op("mean", fwd, bwd, x)


def mean_axis(x: Tensor, axis: int) -> Tensor:
    ax = axis % x.ndim
    n = x.shape[ax]

    def fwd(a):
        return a.mean(axis=ax), a.shape

    def bwd(shape, g):
        return (np.broadcast_to(np.expand_dims(g, ax) / n, shape).copy(),)

    return apply_op("mean_axis", fwd, bwd, x)


def log(x: Tensor) -> Tensor:
    def fwd(a):
        return np.log(a), a

    def bwd(a, g):
        return (g / a,)

    return apply_op("log", fwd, bwd, x)


# ---------------------------------------------------------------------------
# linear maps


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``weight @ x (+ bias)`` on the last axis of ``x``; ``weight`` is ``[Mout, N]``."""
    if weight.ndim != 2 or weight.shape[1] != x.shape[-1]:
        raise ShapeError(
            f"dense: weight {weight.shape} incompatible with input length {x.shape[-1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense: bias {bias.shape} does not match {weight.shape[0]} outputs")

    def fwd(a, w, *b):
        out = a @ w.T
        if b:
            out = out + b[0]
        return out, (a, w)

    def bwd(ctx, g):
        a, w = ctx
        ga = g @ w
        gw = g.reshape(-1, g.shape[-1]).T @ a.reshape(-1, a.shape[-1])
        if bias is None:
            return ga, gw
        return ga, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    ins = (x, weight) if bias is None else (x, weight, bias)
    return apply_op("dense", fwd, bwd, *ins)


def conv2d(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation of ``[.., H, W, Cin]`` with ``[Kh, Kw, Cin, Cout]`` kernels."""
    _check_spatial(x, "conv2d")
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d: kernels must be [Kh,Kw,Cin,Cout], got {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"conv2d: input has {x.shape[-1]} channels, kernels expect {cin}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} / padding={padding}")
    h, w = x.shape[-3] + 2 * padding, x.shape[-2] + 2 * padding
    if kh > h or kw > w:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h}x{w}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {cout} output channels")
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    p, s = padding, stride
    pointwise = kh == 1 and kw == 1 and p == 0
    # Two lowering strategies for spatial kernels, chosen by intermediate size:
    #  - im2col: gather windows then one matmul (cheap when Cin is small);
    #  - taps: one matmul of the flattened padded input against all taps, then
    #    each tap's output is added at its flat offset.  Rows of the padded
    #    grid that wrap into the next row/image only feed positions discarded
    #    when cropping to the valid output window.
    use_im2col = not pointwise and ho * wo * cin <= h * w * cout
    need_ga = x.requires_grad
    offsets = [(i * w + j, (i * kw + j) * cout) for i in range(kh) for j in range(kw)]

    def fwd(a, k, *b):
        a, single = _batched(a)
        n = a.shape[0]
        if pointwise:
            src = a[:, ::s, ::s, :] if s > 1 else a
            out = (src.reshape(-1, cin) @ k.reshape(cin, cout)).reshape(n, ho, wo, cout)
            saved = src
        elif use_im2col:
            ap = np.pad(a, ((0, 0), (p, p), (p, p), (0, 0))) if p else a
            win = sliding_window_view(ap, (kh, kw), axis=(1, 2))[:, ::s, ::s]
            # rows ordered (kh, kw, cin) to match the kernel layout
            saved = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(-1, kh * kw * cin)
            out = (saved @ k.reshape(kh * kw * cin, cout)).reshape(n, ho, wo, cout)
        else:
            ap = np.pad(a, ((0, 0), (p, p), (p, p), (0, 0))) if p else a
            flat = ap.reshape(-1, cin)
            taps = flat @ k.transpose(2, 0, 1, 3).reshape(cin, kh * kw * cout)
            rows = flat.shape[0]
            full = np.zeros((rows, cout), dtype=DTYPE)
            for off, col in offsets:
                full[: rows - off] += taps[off:, col : col + cout]
            full = full.reshape(n, h, w, cout)
            out = full[:, : s * (ho - 1) + 1 : s, : s * (wo - 1) + 1 : s, :]
            saved = flat
        if b:
            out = out + b[0]
        else:
            out = np.ascontiguousarray(out)
        return (out[0] if single else out), (saved, k, a.shape, single)

    def bwd(ctx, g):
        saved, k, ashape, single = ctx
        g = g[None] if single else g
        n = ashape[0]
        g2 = g.reshape(-1, cout)
        ga = None
        if pointwise:
            gk = (saved.reshape(-1, cin).T @ g2).reshape(1, 1, cin, cout)
            if need_ga:
                gsrc = (g2 @ k.reshape(cin, cout).T).reshape(n, ho, wo, cin)
                if s > 1:
                    ga = np.zeros(ashape, dtype=DTYPE)
                    ga[:, ::s, ::s, :] = gsrc
                else:
                    ga = gsrc
        elif use_im2col:
            gk = (saved.T @ g2).reshape(kh, kw, cin, cout)
            if need_ga:
                gp = np.zeros((n, h, w, cin), dtype=DTYPE)
                for i in range(kh):
                    for j in range(kw):
                        tap = (g2 @ k[i, j].T).reshape(n, ho, wo, cin)
                        gp[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s, :] += tap
                ga = gp[:, p : p + ashape[1], p : p + ashape[2], :] if p else gp
        else:
            rows = saved.shape[0]
            gfull = np.zeros((n, h, w, cout), dtype=DTYPE)
            gfull[:, : s * (ho - 1) + 1 : s, : s * (wo - 1) + 1 : s, :] = g
            gfull = gfull.reshape(rows, cout)
            gtaps = np.zeros((rows, kh * kw * cout), dtype=DTYPE)
            for off, col in offsets:
                gtaps[off:, col : col + cout] = gfull[: rows - off]
            gk = (saved.T @ gtaps).reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3)
            if need_ga:
                gp = (gtaps @ k.transpose(2, 0, 1, 3).reshape(cin, kh * kw * cout).T).reshape(n, h, w, cin)
                ga = gp[:, p : p + ashape[1], p : p + ashape[2], :] if p else gp
        if single and ga is not None:
            ga = ga[0]
        if bias is None:
            return ga, gk
        return ga, gk, g2.sum(axis=0)

    ins = (x, kernels) if bias is None else (x, kernels, bias)
    return apply_op("conv2d", fwd, bwd, *ins)


# ---------------------------------------------------------------------------
# pooling


def avg_pool2d(x: Tensor, window: int, stride: int | None = None) -> Tensor:
    _check_spatial(x, "avg_pool2d")
    stride = window if stride is None else stride
    h, w = x.shape[-3], x.shape[-2]
    if window > h or window > w:
        raise ShapeError(f"avg_pool2d: window {window} exceeds spatial extent {h}x{w}")
    if window < 1 or stride < 1:
        raise ShapeError("avg_pool2d: window and stride must be positive")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    k, s = window, stride
    scale = 1.0 / (k * k)

    def fwd(a):
        a, single = _batched(a)
        if k == s and ho * k == h and wo * k == w:
            out = a.reshape(a.shape[0], ho, k, wo, k, a.shape[3]).mean(axis=(2, 4))
        else:
            win = sliding_window_view(a, (k, k), axis=(1, 2))[:, ::s, ::s]
            out = win.mean(axis=(4, 5))
        return (out[0] if single else out), (a.shape, single)

    def bwd(ctx, g):
        ashape, single = ctx
        g = (g[None] if single else g) * scale
        if k == s and ho * k == h and wo * k == w:
            ga = np.broadcast_to(g[:, :, None, :, None, :], (ashape[0], ho, k, wo, k, ashape[3]))
            ga = ga.reshape(ashape)
        else:
            ga = np.zeros(ashape, dtype=DTYPE)
            for i in range(k):
                for j in range(k):
                    ga[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s, :] += g
        return (ga[0] if single else np.ascontiguousarray(ga),)

    return apply_op("avg_pool2d", fwd, bwd, x)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the two spatial axes: ``[.., H, W, C] -> [.., C]``."""
    _check_spatial(x, "global_avg_pool")
    h, w = x.shape[-3], x.shape[-2]

    def fwd(a):
        return a.mean(axis=(-3, -2)), a.shape

    def bwd(shape, g):
        g = np.expand_dims(g, (-3, -2)) / (h * w)
        return (np.broadcast_to(g, shape).copy(),)

    return apply_op("global_avg_pool", fwd, bwd, x)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int) -> "RunningStats":
        return cls(np.zeros(channels, dtype=DTYPE), np.ones(channels, dtype=DTYPE))


BN_EPS = 1e-5


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    training: bool,
    running: RunningStats | None = None,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel normalization over all leading axes.

    In train mode the batch-and-spatial statistics are used and ``running`` is
    updated in place (unbiased variance, fixed momentum).  Eval mode reads
    ``running`` only.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm: gamma/beta must be [{c}], got {gamma.shape}/{beta.shape}")
    count = x.size // c
    if training and count < 2:
        raise ShapeError("batchnorm: train mode needs at least 2 positions per channel")
    if not training and running is None:
        raise ShapeError("batchnorm: eval mode needs running statistics")
    axes = tuple(range(x.ndim - 1))

    if training:
        mu_now = x.values.mean(axis=axes)
        var_now = x.values.var(axis=axes)
        if running is not None and grad_enabled():
            m = running.momentum
            running.mean *= 1.0 - m
            running.mean += m * mu_now
            running.var *= 1.0 - m
            running.var += m * var_now * count / (count - 1)

        def fwd(a, gm, bt):
            mu = a.mean(axis=axes)
            var = a.var(axis=axes)
            inv = 1.0 / np.sqrt(var + eps)
            xhat = (a - mu) * inv
            return xhat * gm + bt, (xhat, inv, gm)

        def bwd(ctx, g):
            xhat, inv, gm = ctx
            gbeta = g.sum(axis=axes)
            ggamma = (g * xhat).sum(axis=axes)
            gx = (gm * inv / count) * (count * g - gbeta - xhat * ggamma)
            return gx, ggamma, gbeta

    else:
        rmean = running.mean.copy()
        rinv = 1.0 / np.sqrt(running.var + eps)

        def fwd(a, gm, bt):
            xhat = (a - rmean) * rinv
            return xhat * gm + bt, (xhat, gm)

        def bwd(ctx, g):
            xhat, gm = ctx
            return g * gm * rinv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return apply_op("batchnorm", fwd, bwd, x, gamma, beta)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between autodiff and central finite differences.

    ``fn`` must map the input tensor(s) to a scalar tensor.  The relative error
    per coordinate is ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``.
    """
    ins = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    for t in ins:
        t.requires_grad = True
        t.zero_grad()
    out = fn(*ins)
    if out.size != 1:
        raise ShapeError("grad_check: fn must return a scalar")
    backward(out)
    worst = 0.0
    with no_grad():
        for t in ins:
            analytic = t.grad.copy()
            flat = t.values.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = float(fn(*ins).values)
                flat[i] = orig - eps
                fm = float(fn(*ins).values)
                flat[i] = orig
                fd = (fp - fm) / (2 * eps)
                ad = analytic.reshape(-1)[i]
                err = abs(ad - fd) / max(1e-8, abs(ad) + abs(fd))
                worst = max(worst, err)
    return worst
