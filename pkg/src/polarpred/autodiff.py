"""Reverse-mode differentiation over the fixed op set used by the predictors.

A `Var` wraps a numpy array and records how it was produced.  `backward` walks
the graph once in reverse topological order and accumulates cotangents into
`.grad` slots.  The op set is deliberately small: elementwise arithmetic with
broadcasting, sum/mean reductions, sqrt, relu, basic slicing, reshape, channel
pair interleaving, stack, and the two convolution kernels from `tensor`.

Conventions:
  * relu subgradient at 0 is 0;
  * sqrt backward floors its output at a tiny constant, so the subgradient at
    exactly 0 is treated as 0 instead of overflowing (zero-amplitude complex
    coefficients hit this point; see `polar.phase_advance`).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T

_SQRT_FLOOR = 1e-30


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """Graph node: value, gradient slot, parents, and a vector-Jacobian hook."""

    __slots__ = ("value", "grad", "parents", "vjp", "name")

    def __init__(self, value, parents=(), vjp=None, name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = tuple(parents)
        self.vjp = vjp  # callable(grad_out) -> tuple of parent cotangents
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape}, dtype={self.value.dtype})"

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other):
        other = as_var(other, self.dtype)
        out = Var(self.value + other.value, (self, other))
        out.vjp = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = as_var(other, self.dtype)
        out = Var(self.value - other.value, (self, other))
        out.vjp = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape))
        return out

    def __rsub__(self, other):
        return as_var(other, self.dtype) - self

    def __neg__(self):
        out = Var(-self.value, (self,))
        out.vjp = lambda g: (-g,)
        return out

    def __mul__(self, other):
        other = as_var(other, self.dtype)
        a, b = self, other
        out = Var(a.value * b.value, (a, b))
        out.vjp = lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape),
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other, self.dtype)
        a, b = self, other
        out = Var(a.value / b.value, (a, b))

        def vjp(g):
            inv = 1.0 / b.value
            return (
                _unbroadcast(g * inv, a.shape),
                _unbroadcast(-g * a.value * inv * inv, b.shape),
            )

        out.vjp = vjp
        return out

    def __rtruediv__(self, other):
        return as_var(other, self.dtype) / self

    def __getitem__(self, idx):
        out = Var(self.value[idx], (self,))

        def vjp(g):
            full = np.zeros_like(self.value)
            full[idx] = g
            return (full,)

        out.vjp = vjp
        return out


def as_var(x, dtype=None) -> Var:
    if isinstance(x, Var):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Var(arr)


def constant(x, dtype=None) -> Var:
    return as_var(x, dtype)


# -- reductions and shape ops ------------------------------------------------


def vsum(x: Var, axis=None, keepdims=False) -> Var:
    out = Var(x.value.sum(axis=axis, keepdims=keepdims), (x,))

    def vjp(g):
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a % x.value.ndim for a in axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)

    out.vjp = vjp
    return out


def vmean(x: Var, axis=None, keepdims=False) -> Var:
    if axis is None:
        count = x.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.value.shape[a] for a in axes]))
    return vsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(x: Var, shape) -> Var:
    out = Var(x.value.reshape(shape), (x,))
    out.vjp = lambda g: (g.reshape(x.shape),)
    return out


def sqrt(x: Var) -> Var:
    val = np.sqrt(x.value)
    out = Var(val, (x,))
    out.vjp = lambda g: (g / (2.0 * np.maximum(val, _SQRT_FLOOR)),)
    return out


def relu(x: Var) -> Var:
    mask = x.value > 0
    out = Var(np.where(mask, x.value, 0), (x,))
    out.vjp = lambda g: (g * mask,)
    return out


def stack_pairs(re: Var, im: Var) -> Var:
    """Interleave two [B,K,H,W] maps into [B,2K,H,W]: channel 2k real, 2k+1 imag."""
    B, K, H, W = re.shape
    val = np.empty((B, 2 * K, H, W), dtype=re.dtype)
    val[:, 0::2] = re.value
    val[:, 1::2] = im.value
    out = Var(val, (re, im))
    out.vjp = lambda g: (g[:, 0::2], g[:, 1::2])
    return out


# -- convolution ---------------------------------------------------------------


def conv2d(x: Var, kernels: Var) -> Var:
    """Valid cross-correlation, input [B,C,H,W], kernels [C_out,C_in,k,k]."""
    out = Var(T.conv2d_valid(x.value, kernels.value), (x, kernels))
    kh, kw = kernels.shape[2], kernels.shape[3]

    def vjp(g):
        return (
            T.conv2d_transpose(g, kernels.value),
            T.conv2d_grad_kernels(x.value, g, kh, kw),
        )

    out.vjp = vjp
    return out


def conv2d_transpose(y: Var, kernels: Var) -> Var:
    """Adjoint convolution, input [B,C_out,H',W'] -> [B,C_in,H'+k-1,W'+k-1]."""
    out = Var(T.conv2d_transpose(y.value, kernels.value), (y, kernels))
    kh, kw = kernels.shape[2], kernels.shape[3]

    def vjp(g):
        return (
            T.conv2d_valid(g, kernels.value),
            T.conv2d_transpose_grad_kernels(y.value, g, kh, kw),
        )

    out.vjp = vjp
    return out


# -- composite ops -------------------------------------------------------------


def batchnorm_scale(
    x: Var,
    gamma: Var,
    eps: float = 1e-5,
    center: bool = False,
    running_var: np.ndarray | None = None,
    momentum: float = 0.1,
    training: bool = True,
) -> Var:
    """Per-channel rescale y = gamma_c * x / sqrt(var_c + eps), no shift term.

    Variance is taken over batch and spatial axes of a [B,C,H,W] input.  With
    `center=True` the mean is also subtracted (config-selectable variant; the
    default matches divide-by-std with no additive terms).  In training mode
    batch statistics are used and `running_var` (population variance EMA,
    updated in place) tracks them for inference.
    """
    if x.value.ndim != 4:
        raise ValueError(f"batchnorm_scale expects [B,C,H,W], got rank {x.value.ndim}")
    B, C, H, W = x.shape
    if B * H * W < 2 and training:
        raise ValueError("batchnorm_scale needs at least 2 samples per channel in training mode")
    gamma_b = reshape(gamma, (1, C, 1, 1))
    axes = (0, 2, 3)
    if training:
        mu = vmean(x, axis=axes, keepdims=True)
        dev = x - mu
        var = vmean(dev * dev, axis=axes, keepdims=True)
        if running_var is not None:
            running_var *= 1.0 - momentum
            running_var += momentum * var.value.reshape(C).astype(running_var.dtype)
        base = (x - mu) if center else x
        return base * gamma_b / sqrt(var + eps)
    if running_var is None:
        raise ValueError("inference-mode batchnorm_scale requires running statistics")
    denom = np.sqrt(running_var.reshape(1, C, 1, 1) + eps).astype(x.dtype)
    base = x - vmean(x, axis=axes, keepdims=True) if center else x
    return base * gamma_b * constant(1.0 / denom)


def mse(pred: Var, target: Var) -> Var:
    diff = pred - target
    return vmean(diff * diff)


# -- backward pass ---------------------------------------------------------------


def topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Var, params: list[Var] | None = None) -> None:
    """Populate `.grad` for every node reachable from the scalar `loss`.

    Parameters listed in `params` but unreachable from the loss get zero
    gradients.  Each node is visited exactly once, in reverse topological
    order; accumulation order is fixed by graph construction order.
    """
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    order = topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node.vjp is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += g
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.value)


# -- finite-difference checking ----------------------------------------------------


def directional_derivative(f, params: list[Var], directions, h: float) -> float:
    """Central finite difference of scalar f() along unit `directions` per param."""
    for p, d in zip(params, directions):
        p.value = p.value + h * d
    up = float(f().value)
    for p, d in zip(params, directions):
        p.value = p.value - 2.0 * h * d
    down = float(f().value)
    for p, d in zip(params, directions):
        p.value = p.value + h * d
    return (up - down) / (2.0 * h)


def gradcheck(
    f,
    params: list[Var],
    rng: np.random.Generator,
    n_directions: int = 10,
    h: float = 1e-3,
    rel_tol: float = 1e-3,
) -> float:
    """Compare analytic gradients of scalar f() against central differences.

    Returns the max relative error over `n_directions` random unit directions;
    raises AssertionError when it exceeds `rel_tol`.
    """
    loss = f()
    backward(loss, params)
    grads = [p.grad.copy() for p in params]
    worst = 0.0
    for _ in range(n_directions):
        dirs = []
        norm_sq = 0.0
        for p in params:
            d = rng.standard_normal(p.value.shape)
            norm_sq += float((d * d).sum())
            dirs.append(d)
        scale = 1.0 / np.sqrt(norm_sq)
        dirs = [(d * scale).astype(p.value.dtype) for p, d in zip(params, dirs)]
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, dirs))
        numeric = directional_derivative(f, params, dirs, h)
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    if worst > rel_tol:
        raise AssertionError(f"gradcheck failed: max relative error {worst:.3e} > {rel_tol:g}")
    return worst
