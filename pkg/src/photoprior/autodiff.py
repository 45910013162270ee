"""Minimal dense-tensor reverse-mode autodiff.

Covers exactly the operations the feature extractor, heads and losses
need: matmul, elementwise arithmetic, relu, sigmoid, sqrt, the standard
normal CDF, clipping, gather, conv2d and reductions. Values are float64
numpy arrays; tensors are immutable after construction and each op
records its parents so `backward` can run one reverse topological sweep.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CycleDetected, ShapeMismatch

_CHECK_FINITE = False


def set_debug_checks(enabled: bool) -> None:
    """Validate every op output for NaN/Inf (slow; for debugging)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, _parents=(),
                 _backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        if _CHECK_FINITE and not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite tensor values")
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to `shape` by summing."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape}") from None


# -- elementwise ops ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")

    def back(out):
        a._accum(_unbroadcast(out.grad, a.shape))
        b._accum(_unbroadcast(out.grad, b.shape))

    return Tensor(a.values + b.values, _parents=(a, b), _backward=back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")

    def back(out):
        a._accum(_unbroadcast(out.grad * b.values, a.shape))
        b._accum(_unbroadcast(out.grad * a.values, b.shape))

    return Tensor(a.values * b.values, _parents=(a, b), _backward=back)


def relu(a) -> Tensor:
    a = _as_tensor(a)

    def back(out):
        a._accum(out.grad * (a.values > 0.0))

    return Tensor(np.maximum(a.values, 0.0), _parents=(a,), _backward=back)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # stable two-branch logistic
    v = a.values
    y = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                 np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def back(out):
        a._accum(out.grad * (y * (1.0 - y)))

    return Tensor(y, _parents=(a,), _backward=back)


def sqrt(a, grad_eps: float = 1e-6) -> Tensor:
    """Elementwise square root; the backward rule clamps its input at
    `grad_eps` so the gradient stays bounded near zero."""
    a = _as_tensor(a)

    def back(out):
        a._accum(out.grad * (0.5 / np.sqrt(np.maximum(a.values, grad_eps))))

    return Tensor(np.sqrt(a.values), _parents=(a,), _backward=back)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclamped."""
    a = _as_tensor(a)

    def back(out):
        inside = (a.values > lo) & (a.values < hi)
        a._accum(out.grad * inside)

    return Tensor(np.clip(a.values, lo, hi), _parents=(a,), _backward=back)


# -- standard normal CDF (Cody-style rational erfc) --------------------

_ERFC_A = (3.16112374387056560e00, 1.13864154151050156e02,
           3.77485237685302021e02, 3.20937758913846947e03,
           1.85777706184603153e-1)
_ERFC_B = (2.36012909523441209e01, 2.44024637934444173e02,
           1.28261652607737228e03, 2.84423683343917062e03)
_ERFC_C = (5.64188496988670089e-1, 8.88314979438837594e00,
           6.61191906371416295e01, 2.98635138197400131e02,
           8.81952221241769090e02, 1.71204761263407058e03,
           2.05107837782607147e03, 1.23033935479799725e03,
           2.15311535474403846e-8)
_ERFC_D = (1.57449261107098347e01, 1.17693950891312499e02,
           5.37181101862009858e02, 1.62138957456669019e03,
           3.29079923573345963e03, 4.36261909014324716e03,
           3.43936767414372164e03, 1.23033935480374942e03)
_ERFC_P = (3.05326634961232344e-1, 3.60344899949804439e-1,
           1.25781726111229246e-1, 1.60837851487422766e-2,
           6.58749161529837803e-4, 1.63153871373020978e-2)
_ERFC_Q = (2.56852019228982242e00, 1.87295284992346047e00,
           5.27905102951428412e-1, 6.05183413124413191e-2,
           2.33520497626869185e-3)
_INV_SQRT_PI = 5.6418958354775628694e-1

NORMAL_CDF_SATURATION = 8.0


def _erfc_scaled_mid(y: np.ndarray) -> np.ndarray:
    xnum = _ERFC_C[8] * y
    xden = y.copy()
    for i in range(7):
        xnum = (xnum + _ERFC_C[i]) * y
        xden = (xden + _ERFC_D[i]) * y
    res = (xnum + _ERFC_C[7]) / (xden + _ERFC_D[7])
    ysq = np.floor(y * 16.0) / 16.0
    dl = (y - ysq) * (y + ysq)
    return np.exp(-ysq * ysq) * np.exp(-dl) * res


def _erfc_scaled_far(y: np.ndarray) -> np.ndarray:
    z = 1.0 / (y * y)
    xnum = _ERFC_P[5] * z
    xden = z.copy()
    for i in range(4):
        xnum = (xnum + _ERFC_P[i]) * z
        xden = (xden + _ERFC_Q[i]) * z
    res = z * (xnum + _ERFC_P[4]) / (xden + _ERFC_Q[4])
    res = (_INV_SQRT_PI - res) / y
    ysq = np.floor(y * 16.0) / 16.0
    dl = (y - ysq) * (y + ysq)
    return np.exp(-ysq * ysq) * np.exp(-dl) * res


def erfc(x) -> np.ndarray:
    """Complementary error function, |error| < 1e-14 everywhere."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    y = np.abs(x)
    out = np.empty_like(y)

    near = y <= 0.46875
    if near.any():
        xs = x[near]
        z = xs * xs
        xnum = _ERFC_A[4] * z
        xden = z.copy()
        for i in range(3):
            xnum = (xnum + _ERFC_A[i]) * z
            xden = (xden + _ERFC_B[i]) * z
        out[near] = 1.0 - xs * (xnum + _ERFC_A[3]) / (xden + _ERFC_B[3])

    mid = (y > 0.46875) & (y <= 4.0)
    if mid.any():
        out[mid] = _erfc_scaled_mid(y[mid])
    far = y > 4.0
    if far.any():
        out[far] = _erfc_scaled_far(y[far])

    neg = (x < 0.0) & ~near
    out[neg] = 2.0 - out[neg]
    return out[0] if scalar else out


def normal_cdf_values(x) -> np.ndarray:
    """Standard normal CDF on raw arrays, input saturated to [-8, 8]."""
    x = np.clip(np.asarray(x, dtype=np.float64),
                -NORMAL_CDF_SATURATION, NORMAL_CDF_SATURATION)
    return 0.5 * erfc(-x / math.sqrt(2.0))


def normal_pdf_values(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_cdf(a) -> Tensor:
    a = _as_tensor(a)
    sat = NORMAL_CDF_SATURATION

    def back(out):
        inside = np.abs(a.values) <= sat
        a._accum(out.grad * (normal_pdf_values(np.clip(a.values, -sat, sat))
                             * inside))

    return Tensor(normal_cdf_values(a.values), _parents=(a,), _backward=back)


# -- linear algebra / structure ----------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 \
            or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape}")

    def back(out):
        a._accum(out.grad @ b.values.T)
        b._accum(a.values.T @ out.grad)

    return Tensor(a.values @ b.values, _parents=(a, b), _backward=back)


def take(a, indices) -> Tensor:
    """Gather rows along axis 0; backward scatter-adds."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)

    def back(out):
        g = np.zeros_like(a.values)
        np.add.at(g, idx, out.grad)
        a._accum(g)

    return Tensor(a.values[idx], _parents=(a,), _backward=back)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)

    def back(out):
        a._accum(out.grad.reshape(a.shape))

    return Tensor(a.values.reshape(shape), _parents=(a,), _backward=back)


def tsum(a) -> Tensor:
    a = _as_tensor(a)

    def back(out):
        a._accum(np.full(a.shape, out.grad))

    return Tensor(a.values.sum(), _parents=(a,), _backward=back)


def tmean(a) -> Tensor:
    a = _as_tensor(a)
    n = a.values.size

    def back(out):
        a._accum(np.full(a.shape, out.grad / n))

    return Tensor(a.values.mean(), _parents=(a,), _backward=back)


def mean_pool(a) -> Tensor:
    """Global spatial mean: (B, C, H, W) -> (B, C)."""
    a = _as_tensor(a)
    if a.values.ndim != 4:
        raise ShapeMismatch(f"mean_pool: expected 4-d input, got {a.shape}")
    hw = a.shape[2] * a.shape[3]

    def back(out):
        a._accum(np.broadcast_to((out.grad / hw)[:, :, None, None], a.shape))

    return Tensor(a.values.mean(axis=(2, 3)), _parents=(a,), _backward=back)


def conv2d(x, weight, bias, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation: x (B,C,H,W), weight (O,C,kh,kw), bias (O,)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.values.ndim != 4 or weight.values.ndim != 4 \
            or x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise ShapeMismatch(
            f"conv2d: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    b, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch("conv2d: kernel larger than padded input")

    xp = np.pad(x.values, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out_values = np.einsum("bchwuv,ocuv->bohw", win, weight.values) \
        + bias.values[None, :, None, None]

    def back(out):
        g = out.grad
        weight._accum(np.einsum("bchwuv,bohw->ocuv", win, g))
        bias._accum(g.sum(axis=(0, 2, 3)))
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] \
                    += np.einsum("bohw,oc->bchw", g, weight.values[:, :, u, v])
        x._accum(gxp[:, :, pad:pad + h, pad:pad + w])

    return Tensor(out_values, _parents=(x, weight, bias), _backward=back)


# -- reverse sweep ------------------------------------------------------

def _topo_order(root: Tensor):
    order = []
    state = {}  # id -> 1 while on stack, 2 when done
    stack = [(root, iter(root._parents))]
    state[id(root)] = 1
    while stack:
        node, parents = stack[-1]
        advanced = False
        for parent in parents:
            s = state.get(id(parent))
            if s == 1:
                raise CycleDetected("tape contains a cycle")
            if s is None:
                state[id(parent)] = 1
                stack.append((parent, iter(parent._parents)))
                advanced = True
                break
        if not advanced:
            state[id(node)] = 2
            order.append(node)
            stack.pop()
    return order


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root; fills .grad on every node."""
    if root.values.size != 1:
        raise ShapeMismatch(f"backward root must be scalar, got {root.shape}")
    order = _topo_order(root)
    root.grad = np.ones_like(root.values)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node)
