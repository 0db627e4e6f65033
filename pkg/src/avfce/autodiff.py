"""Minimal float64 tensor engine.

Two differentiation modes live here:

* reverse mode, through a :class:`Tape` that records every op applied to a
  tracked tensor while the tape is active, and :func:`backward`;
* forward mode, through :class:`DualTensor` values that carry a tangent next
  to the primal.  Each primitive owns an explicit dual rule, and
  :func:`jvp` pushes tangents through any function built from primitives.

The two modes compose: a dual op computes its primal through the ordinary
primitive, so running a dual pass under an active tape records the primal
graph while the tangent stays detached.

Tensors may carry an explicit leading batch extent; the engine itself never
batches implicitly.
"""

from __future__ import annotations

import contextlib
import functools
import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "DualTensor",
    "Tape",
    "UnsupportedOpError",
    "NonFiniteError",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "silu",
    "relu",
    "conv2d",
    "broadcast_planes",
    "concat",
    "linear",
    "mse",
    "tensor_sum",
    "tensor_mean",
    "stop_gradient",
    "backward",
    "jvp",
    "checked_mode",
    "is_checked",
]


class UnsupportedOpError(TypeError):
    """Raised when a dual value reaches an op without a forward-mode rule."""

    def __init__(self, op_name: str):
        super().__init__(f"op '{op_name}' has no registered dual rule")
        self.op_name = op_name


class NonFiniteError(FloatingPointError):
    pass


_CHECKED = True


def is_checked() -> bool:
    return _CHECKED


@contextlib.contextmanager
def checked_mode(enabled: bool = True):
    """Toggle shape and finiteness assertions inside the block."""
    global _CHECKED
    previous = _CHECKED
    _CHECKED = bool(enabled)
    try:
        yield
    finally:
        _CHECKED = previous


def _check_finite(arr: np.ndarray, where: str) -> None:
    if _CHECKED and not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {where}")


class Tensor:
    """Immutable n-dimensional float64 array.

    ``requires_grad=True`` marks a leaf (typically a parameter) whose
    gradient :func:`backward` can report.
    """

    __slots__ = ("data", "requires_grad", "_tracked", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "Tensor construction")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._tracked = self.requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, tracked: bool = False, where: str = "op") -> "Tensor":
        # Takes ownership of ``arr``; no copy.
        out = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        _check_finite(arr, where)
        if arr.flags.writeable:
            arr.flags.writeable = False
        out.data = arr
        out.requires_grad = False
        out._tracked = tracked
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)


class DualTensor:
    """A primal value paired with a directional derivative of the same shape."""

    __slots__ = ("primal", "tangent")

    def __init__(self, primal, tangent=None):
        primal = as_tensor(primal)
        if tangent is None:
            tangent = np.zeros(primal.shape)
        tangent = tangent.data if isinstance(tangent, Tensor) else tangent
        tangent = np.broadcast_to(np.asarray(tangent, dtype=np.float64), primal.shape)
        self.primal = primal
        self.tangent = Tensor._wrap(np.array(tangent), where="dual tangent")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.primal.shape

    def __repr__(self) -> str:
        return f"DualTensor(shape={self.shape})"

    def __array__(self, *args, **kwargs):
        raise UnsupportedOpError("numpy conversion")

    __add__ = Tensor.__add__
    __radd__ = Tensor.__radd__
    __sub__ = Tensor.__sub__
    __rsub__ = Tensor.__rsub__
    __mul__ = Tensor.__mul__
    __rmul__ = Tensor.__rmul__
    __neg__ = Tensor.__neg__


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, DualTensor):
        raise UnsupportedOpError("as_tensor")
    return Tensor._wrap(np.array(x, dtype=np.float64), where="as_tensor")


# --------------------------------------------------------------------------
# tape


class _Node:
    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op, inputs, output, vjp):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


_local = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


class Tape:
    """Records ops on tracked tensors while active (``with Tape() as tape``)."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "tapes"):
            _local.tapes = []
        _local.tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.tapes.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def _emit(op: str, arr: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    tape = _active_tape()
    tracked = tape is not None and any(t._tracked for t in inputs)
    out = Tensor._wrap(arr, tracked=tracked, where=op)
    if tracked:
        tape.nodes.append(_Node(op, inputs, out, vjp))
    return out


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Reverse accumulation of ``d loss / d param`` for each of ``params``.

    Parameters that do not influence ``loss`` get a zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp._tracked:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return [np.array(grads.get(id(p), np.zeros(p.shape)), dtype=np.float64) for p in params]


def stop_gradient(x) -> Tensor:
    """Value-identical constant; reverse accumulation does not pass through it."""
    if isinstance(x, DualTensor):
        x = x.primal
    x = as_tensor(x)
    return Tensor._wrap(x.data, tracked=False)


# --------------------------------------------------------------------------
# primitive registry

_DUAL_RULES: dict[str, Callable] = {}


def _has_dual(args) -> bool:
    for a in args:
        if isinstance(a, DualTensor):
            return True
        if isinstance(a, (list, tuple)) and any(isinstance(b, DualTensor) for b in a):
            return True
    return False


def primitive(name: str):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            if _has_dual(args):
                rule = _DUAL_RULES.get(name)
                if rule is None:
                    raise UnsupportedOpError(name)
                return rule(*args, **kwargs)
            return fn(*args, **kwargs)

        wrapper.op_name = name
        return wrapper

    return deco


def dual_rule(name: str):
    def deco(fn):
        _DUAL_RULES[name] = fn
        return fn

    return deco


def _split(x) -> tuple[Tensor, np.ndarray | None]:
    if isinstance(x, DualTensor):
        return x.primal, x.tangent.data
    return as_tensor(x), None


def _dual(primal: Tensor, tangent: np.ndarray | None) -> DualTensor:
    out = DualTensor.__new__(DualTensor)
    out.primal = primal
    if tangent is None:
        tangent = np.zeros(primal.shape)
    out.tangent = Tensor._wrap(np.broadcast_to(tangent, primal.shape).copy(), where="dual tangent")
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _tsum(*terms):
    acc = None
    for t in terms:
        if t is None:
            continue
        acc = t if acc is None else acc + t
    return acc


# --------------------------------------------------------------------------
# elementwise


@primitive("add")
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


@dual_rule("add")
def _add_dual(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    return _dual(add(pa, pb), _tsum(ta, tb))


@primitive("sub")
def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


@dual_rule("sub")
def _sub_dual(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    return _dual(sub(pa, pb), _tsum(ta, None if tb is None else -tb))


@primitive("mul")
def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    da, db = a.data, b.data
    return _emit(
        "mul",
        da * db,
        (a, b),
        lambda g: (_unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)),
    )


@dual_rule("mul")
def _mul_dual(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    tangent = _tsum(
        None if ta is None else ta * pb.data,
        None if tb is None else pa.data * tb,
    )
    return _dual(mul(pa, pb), tangent)


@primitive("neg")
def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


@dual_rule("neg")
def _neg_dual(a):
    pa, ta = _split(a)
    return _dual(neg(pa), None if ta is None else -ta)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) keeps full relative precision in both tails without overflow.
    e = np.exp(-np.abs(x))
    sig = 1.0 / (1.0 + e)
    np.multiply(sig, e, out=sig, where=x < 0)
    return sig


def _silu_slope(x: np.ndarray, sig: np.ndarray) -> np.ndarray:
    slope = 1.0 - sig
    slope *= x
    slope += 1.0
    slope *= sig
    return slope


def _silu(x: Tensor) -> tuple[Tensor, np.ndarray]:
    sig = _sigmoid(x.data)
    return _emit("silu", x.data * sig, (x,), lambda g: (g * _silu_slope(x.data, sig),)), sig


@primitive("silu")
def silu(x) -> Tensor:
    """x * sigmoid(x), elementwise."""
    return _silu(as_tensor(x))[0]


@dual_rule("silu")
def _silu_dual(x):
    px, tx = _split(x)
    out, sig = _silu(px)
    if tx is None:
        return _dual(out, None)
    return _dual(out, _silu_slope(px.data, sig) * tx)


@primitive("relu")
def relu(x) -> Tensor:
    # Reverse mode only: the kink makes forward-mode targets ill-defined.
    x = as_tensor(x)
    mask = x.data > 0
    return _emit("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------------
# convolution


def _correlate_nchw(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Shape-preserving cross-correlation of a [B,C,H,W] batch, no bias."""
    b, c, h, wd = x.shape
    k = w.shape[-1]
    p = (k - 1) // 2
    xl = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    if p:
        xl = np.pad(xl, ((0, 0), (p, p), (p, p), (0, 0)))
    wl = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    out = None
    for i in range(k):
        for j in range(k):
            term = xl[:, i : i + h, j : j + wd, :] @ wl[i, j]
            out = term if out is None else out + term
    return out.transpose(0, 3, 1, 2)


def _kernel_grad(x: np.ndarray, g: np.ndarray, k: int) -> np.ndarray:
    b, c, h, wd = x.shape
    o = g.shape[1]
    p = (k - 1) // 2
    xl = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    if p:
        xl = np.pad(xl, ((0, 0), (p, p), (p, p), (0, 0)))
    gl = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
    dw = np.empty((k, k, c, o))
    for i in range(k):
        for j in range(k):
            dw[i, j] = xl[:, i : i + h, j : j + wd, :].reshape(-1, c).T @ gl
    return dw.transpose(3, 2, 0, 1)


def _conv_shapes(x: Tensor, w: Tensor, b: Tensor, padding) -> None:
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValueError(f"kernel must be [C_out, C_in, k, k], got {w.shape}")
    k = w.shape[-1]
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if padding is not None and padding != (k - 1) // 2:
        raise ValueError(f"padding must be (k-1)/2 = {(k - 1) // 2}, got {padding}")
    if x.ndim not in (3, 4):
        raise ValueError(f"input must be [C,H,W] or [B,C,H,W], got {x.shape}")
    if x.shape[-3] != w.shape[1]:
        raise ValueError(f"input has {x.shape[-3]} planes but kernel expects C_in={w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match C_out={w.shape[0]}")


@primitive("conv2d")
def conv2d(x, w, b, padding: int | None = None) -> Tensor:
    """Shape-preserving 2-D cross-correlation, odd k, zero padding (k-1)/2.

    ``x`` is [C_in,H,W] or [B,C_in,H,W]; ``w`` is [C_out,C_in,k,k].
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    _conv_shapes(x, w, b, padding)
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    wd = w.data
    out = _correlate_nchw(xd, wd) + b.data[:, None, None]
    if unbatched:
        out = out[0]
    if _CHECKED and out.shape[-2:] != x.shape[-2:]:
        raise AssertionError("conv2d changed spatial extent")
    k = wd.shape[-1]

    def vjp(g):
        gb = g[None] if unbatched else g
        flipped = wd[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        gx = _correlate_nchw(gb, flipped)
        gw = _kernel_grad(xd, gb, k)
        gbias = gb.sum(axis=(0, 2, 3))
        return (gx[0] if unbatched else gx), gw, gbias

    return _emit("conv2d", out, (x, w, b), vjp)


@dual_rule("conv2d")
def _conv2d_dual(x, w, b, padding: int | None = None):
    (px, tx), (pw, tw), (pb, tb) = _split(x), _split(w), _split(b)
    out = conv2d(px, pw, pb, padding)
    unbatched = px.ndim == 3
    terms = []
    if tx is not None:
        terms.append(_correlate_nchw(tx[None] if unbatched else tx, pw.data))
    if tw is not None:
        terms.append(_correlate_nchw(px.data[None] if unbatched else px.data, tw))
    if tb is not None:
        terms.append(np.broadcast_to(tb[:, None, None], out.shape[-3:]))
    tangent = _tsum(*terms)
    if tangent is not None and unbatched and tangent.ndim == 4:
        tangent = tangent[0]
    return _dual(out, tangent)


# --------------------------------------------------------------------------
# structural


@primitive("broadcast_planes")
def broadcast_planes(s, height: int, width: int) -> Tensor:
    """Per-sample scalars ``s`` ([B] or []) to constant planes [B,1,H,W] or [1,H,W]."""
    s = as_tensor(s)
    if s.ndim > 1:
        raise ValueError(f"expected scalar or [B] values, got {s.shape}")
    if s.ndim == 0:
        arr = np.full((1, height, width), s.data)
    else:
        arr = np.broadcast_to(s.data[:, None, None, None], (s.shape[0], 1, height, width)).copy()
    return _emit("broadcast_planes", arr, (s,), lambda g: (g.sum(axis=(-3, -2, -1)),))


@dual_rule("broadcast_planes")
def _broadcast_planes_dual(s, height: int, width: int):
    ps, ts = _split(s)
    out = broadcast_planes(ps, height, width)
    if ts is None:
        return _dual(out, None)
    if ts.ndim == 0:
        tangent = np.full(out.shape, ts)
    else:
        tangent = np.broadcast_to(ts[:, None, None, None], out.shape)
    return _dual(out, tangent)


@primitive("concat")
def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    arr = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", arr, tuple(parts), vjp)


@dual_rule("concat")
def _concat_dual(tensors: Sequence, axis: int = 0):
    split = [_split(t) for t in tensors]
    out = concat([p for p, _ in split], axis=axis)
    if all(t is None for _, t in split):
        return _dual(out, None)
    tangent = np.concatenate([np.zeros(p.shape) if t is None else t for p, t in split], axis=axis)
    return _dual(out, tangent)


@primitive("linear")
def linear(x, w, b) -> Tensor:
    """``x @ w.T + b`` for x [..., in], w [out, in], b [out]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    xd, wd = x.data, w.data
    if xd.shape[-1] != wd.shape[1]:
        raise ValueError(f"linear: input width {xd.shape[-1]} != weight fan-in {wd.shape[1]}")

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xd.reshape(-1, xd.shape[-1])
        return g @ wd, g2.T @ x2, g2.sum(axis=0)

    return _emit("linear", xd @ wd.T + b.data, (x, w, b), vjp)


@dual_rule("linear")
def _linear_dual(x, w, b):
    (px, tx), (pw, tw), (pb, tb) = _split(x), _split(w), _split(b)
    out = linear(px, pw, pb)
    tangent = _tsum(
        None if tx is None else tx @ pw.data.T,
        None if tw is None else px.data @ tw.T,
        tb,
    )
    return _dual(out, tangent)


# --------------------------------------------------------------------------
# reductions


@primitive("sum")
def tensor_sum(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


@dual_rule("sum")
def _sum_dual(x):
    px, tx = _split(x)
    return _dual(tensor_sum(px), None if tx is None else np.asarray(tx.sum()))


@primitive("mean")
def tensor_mean(x) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return _emit("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, g / n),))


@dual_rule("mean")
def _mean_dual(x):
    px, tx = _split(x)
    return _dual(tensor_mean(px), None if tx is None else np.asarray(tx.mean()))


@primitive("mse")
def mse(a, b) -> Tensor:
    """Mean of squared differences over every element."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def vjp(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return _emit("mse", np.asarray(np.mean(diff * diff)), (a, b), vjp)


@dual_rule("mse")
def _mse_dual(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    out = mse(pa, pb)
    dt = _tsum(ta, None if tb is None else -tb)
    if dt is None:
        return _dual(out, None)
    diff = pa.data - pb.data
    return _dual(out, np.asarray(2.0 * np.mean(diff * dt)))


# --------------------------------------------------------------------------
# forward mode driver


def jvp(net_fn: Callable, inputs: Sequence, tangents: Sequence) -> tuple[Tensor, Tensor]:
    """Evaluate ``net_fn(*inputs)`` and its directional derivative along ``tangents``.

    Anything ``net_fn`` closes over (parameters) is held constant.
    """
    if len(inputs) != len(tangents):
        raise ValueError("inputs and tangents differ in length")
    duals = []
    for x, v in zip(inputs, tangents):
        x = as_tensor(x)
        v = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
        if v.shape != x.shape:
            raise ValueError(f"tangent shape {v.shape} does not match input shape {x.shape}")
        duals.append(_dual(x, v))
    out = net_fn(*duals)
    if isinstance(out, DualTensor):
        return out.primal, out.tangent
    out = as_tensor(out)
    return out, Tensor._wrap(np.zeros(out.shape))
