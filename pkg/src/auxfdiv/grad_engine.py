"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tape` records every primitive applied to :class:`Tensor` values.
Parameters enter the tape as named leaves; :meth:`Tape.backward` returns the
gradient of a scalar output with respect to every named leaf.

    >>> params = ParameterSet({"x": np.array([3.0])})
    >>> with Tape() as tape:
    ...     out = (params.leaf("x") ** 2).sum()
    >>> tape.backward(out)["x"]
    array([6.])

Only a small, fixed set of primitives exists. Elementwise binary ops require
identical shapes; the single broadcasting primitive is ``bias_add``.
"""
from __future__ import annotations

import contextvars
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import ContractViolation, DomainError

LEAKY_SLOPE = 0.01

_ACTIVE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "active_tape", default=None
)


def current_tape() -> "Tape":
    tape = _ACTIVE.get()
    if tape is None:
        raise ContractViolation("no active tape; use `with Tape():`")
    return tape


# ---------------------------------------------------------------------------
# primitive registry: forward(attrs, *values) and backward(attrs, g, out, *values)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Primitive:
    forward: Callable
    backward: Callable
    check: Callable | None = None


def _same_shape(attrs, a, b):
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")


def _check_matmul(attrs, a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul needs (n,k)@(k,m), got {a.shape}@{b.shape}")


def _check_bias(attrs, a, b):
    if a.ndim != 2 or b.ndim != 1 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"bias_add needs (n,k)+(k,), got {a.shape}+{b.shape}")


def _check_log(attrs, a):
    if np.any(a <= 0):
        raise DomainError("log of non-positive input")


def _check_sqdist(attrs, a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractViolation(f"sqdist needs (n,d),(m,d), got {a.shape},{b.shape}")


def _check_take(attrs, a):
    idx = attrs["index"]
    if a.ndim < 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.shape[0])):
        raise ContractViolation("take index out of range")


def _expand_reduced(g, shape, axis):
    if axis is None:
        return np.broadcast_to(g, shape)
    return np.broadcast_to(np.expand_dims(g, axis), shape)


def _lse_forward(attrs, a):
    axis = attrs["axis"]
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(s, axis=axis) if axis is not None else s.reshape(())


def _lse_backward(attrs, g, out, a):
    axis = attrs["axis"]
    full = out if axis is None else np.expand_dims(out, axis)
    soft = np.exp(a - full)
    return (_expand_reduced(g, a.shape, axis) * soft,)


def _softplus(a):
    return np.logaddexp(0.0, a)


def _sigmoid(a):
    return np.exp(-np.logaddexp(0.0, -a))


def _sqdist_forward(attrs, a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def _sqdist_backward(attrs, g, out, a, b):
    diff = a[:, None, :] - b[None, :, :]
    ga = 2.0 * np.einsum("nm,nmd->nd", g, diff)
    gb = -2.0 * np.einsum("nm,nmd->md", g, diff)
    return ga, gb


def _take_backward(attrs, g, out, a):
    ga = np.zeros_like(a)
    np.add.at(ga, attrs["index"], g)
    return (ga,)


def _mean_backward(attrs, g, out, a):
    axis = attrs["axis"]
    count = a.size if axis is None else a.shape[axis]
    return (_expand_reduced(g, a.shape, axis) / count,)


_PRIMS: dict[str, _Primitive] = {
    "add": _Primitive(lambda at, a, b: a + b, lambda at, g, o, a, b: (g, g), _same_shape),
    "subtract": _Primitive(lambda at, a, b: a - b, lambda at, g, o, a, b: (g, -g), _same_shape),
    "multiply": _Primitive(
        lambda at, a, b: a * b, lambda at, g, o, a, b: (g * b, g * a), _same_shape
    ),
    "matmul": _Primitive(
        lambda at, a, b: a @ b, lambda at, g, o, a, b: (g @ b.T, a.T @ g), _check_matmul
    ),
    "bias_add": _Primitive(
        lambda at, a, b: a + b, lambda at, g, o, a, b: (g, g.sum(axis=0)), _check_bias
    ),
    "leaky_relu": _Primitive(
        lambda at, a: np.where(a > 0, a, at["slope"] * a),
        lambda at, g, o, a: (np.where(a > 0, g, at["slope"] * g),),
    ),
    "relu": _Primitive(
        lambda at, a: np.maximum(a, 0.0), lambda at, g, o, a: (np.where(a > 0, g, 0.0),)
    ),
    "exp": _Primitive(lambda at, a: np.exp(a), lambda at, g, o, a: (g * o,)),
    "log": _Primitive(lambda at, a: np.log(a), lambda at, g, o, a: (g / a,), _check_log),
    "square": _Primitive(lambda at, a: a * a, lambda at, g, o, a: (2.0 * a * g,)),
    "softplus": _Primitive(
        lambda at, a: _softplus(a), lambda at, g, o, a: (g * _sigmoid(a),)
    ),
    "sum": _Primitive(
        lambda at, a: np.sum(a, axis=at["axis"]),
        lambda at, g, o, a: (_expand_reduced(g, a.shape, at["axis"]).copy(),),
    ),
    "mean": _Primitive(lambda at, a: np.mean(a, axis=at["axis"]), _mean_backward),
    "logsumexp": _Primitive(_lse_forward, _lse_backward),
    "scale": _Primitive(lambda at, a: at["c"] * a, lambda at, g, o, a: (at["c"] * g,)),
    "shift": _Primitive(lambda at, a: a + at["c"], lambda at, g, o, a: (g,)),
    "reshape": _Primitive(
        lambda at, a: a.reshape(at["shape"]), lambda at, g, o, a: (g.reshape(a.shape),)
    ),
    "take": _Primitive(lambda at, a: a[at["index"]], _take_backward, _check_take),
    "clip": _Primitive(
        lambda at, a: np.clip(a, at["lo"], at["hi"]),
        lambda at, g, o, a: (np.where((a >= at["lo"]) & (a <= at["hi"]), g, 0.0),),
    ),
    "sqdist": _Primitive(_sqdist_forward, _sqdist_backward, _check_sqdist),
}

PRIMITIVES = tuple(_PRIMS)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


@dataclass
class _Node:
    op: str  # primitive name, "param" or "const"
    inputs: tuple[int, ...]
    attrs: dict
    value: np.ndarray
    name: str | None = None


class Tape:
    """Append-only record of primitive operations.

    Node references only point backward, so node order is a topological
    order. Leaves are either named parameters or anonymous constants.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._params: dict[str, int] = {}
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)

    # leaves -----------------------------------------------------------------
    def param(self, name: str, value) -> "Tensor":
        """Return the leaf for ``name``, creating it on first use."""
        idx = self._params.get(name)
        if idx is None:
            value = np.asarray(value, dtype=np.float64)
            idx = self._append(_Node("param", (), {}, value, name))
            self._params[name] = idx
        return Tensor(self, idx)

    def constant(self, value) -> "Tensor":
        value = np.asarray(value, dtype=np.float64)
        return Tensor(self, self._append(_Node("const", (), {}, value)))

    @property
    def param_names(self) -> list[str]:
        return list(self._params)

    # recording --------------------------------------------------------------
    def record(self, op_kind: str, inputs, **attrs) -> "Tensor":
        if op_kind not in _PRIMS:
            raise ContractViolation(f"unknown primitive {op_kind!r}")
        prim = _PRIMS[op_kind]
        ids = tuple(self._as_node(x) for x in inputs)
        values = [self.nodes[i].value for i in ids]
        if prim.check is not None:
            try:
                prim.check(attrs, *values)
            except DomainError as err:
                raise DomainError(f"{err} at node {len(self.nodes)} ({op_kind})") from None
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = np.asarray(prim.forward(attrs, *values), dtype=np.float64)
        if not np.all(np.isfinite(out)) and all(np.all(np.isfinite(v)) for v in values):
            raise DomainError(
                f"non-finite result at node {len(self.nodes)} ({op_kind})"
            )
        return Tensor(self, self._append(_Node(op_kind, ids, attrs, out)))

    def _as_node(self, x) -> int:
        if isinstance(x, Tensor):
            if x.tape is not self:
                raise ContractViolation("tensor belongs to a different tape")
            return x.index
        return self.constant(x).index

    def _append(self, node: _Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    # reverse sweep -----------------------------------------------------------
    def backward(self, output: "Tensor") -> dict[str, np.ndarray]:
        """Gradient of a 0-d ``output`` with respect to every named leaf.

        Leaves the output does not depend on receive zero gradients.
        """
        if output.tape is not self:
            raise ContractViolation("output belongs to a different tape")
        if output.value.shape != ():
            raise ContractViolation(f"backward needs a scalar, got shape {output.shape}")
        grads: dict[int, np.ndarray] = {output.index: np.ones(())}
        for i in range(output.index, -1, -1):
            node = self.nodes[i]
            if node.op in ("param", "const"):
                continue
            g = grads.pop(i, None)
            if g is None:
                continue
            ins = [self.nodes[j].value for j in node.inputs]
            parts = _PRIMS[node.op].backward(node.attrs, g, node.value, *ins)
            for j, gj in zip(node.inputs, parts):
                if self.nodes[j].op == "const":
                    continue
                if j in grads:
                    grads[j] = grads[j] + gj
                else:
                    grads[j] = np.array(gj, dtype=np.float64)
        out = {}
        for name, idx in self._params.items():
            g = grads.get(idx)
            out[name] = np.zeros_like(self.nodes[idx].value) if g is None else g
        return out

    def replay(self, params: dict[str, np.ndarray] | None = None) -> list[np.ndarray]:
        """Re-run every recorded primitive forward and return all node values.

        ``params`` optionally overrides named leaf values; otherwise the
        recorded leaves are used and the cached values are reproduced exactly.
        """
        params = params or {}
        values: list[np.ndarray] = []
        for node in self.nodes:
            if node.op == "param":
                values.append(np.asarray(params.get(node.name, node.value), dtype=np.float64))
            elif node.op == "const":
                values.append(node.value)
            else:
                ins = [values[j] for j in node.inputs]
                values.append(np.asarray(_PRIMS[node.op].forward(node.attrs, *ins)))
        return values


# ---------------------------------------------------------------------------
# tensor handle
# ---------------------------------------------------------------------------


class Tensor:
    """Immutable handle to a node on a tape."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def data(self) -> np.ndarray:
        return self.value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node={self.index})"

    def _rec(self, op, *inputs, **attrs):
        return self.tape.record(op, (self, *inputs), **attrs)

    def __add__(self, other):
        if np.isscalar(other):
            return self._rec("shift", c=float(other))
        return self._rec("add", other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if np.isscalar(other):
            return self._rec("shift", c=-float(other))
        return self._rec("subtract", other)

    def __rsub__(self, other):
        if np.isscalar(other):
            return (-self) + float(other)
        return self.tape.record("subtract", (other, self))

    def __mul__(self, other):
        if np.isscalar(other):
            return self._rec("scale", c=float(other))
        return self._rec("multiply", other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return self._rec("scale", c=float(other))
        return self.tape.record("multiply", (other, self))

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise ContractViolation("division only by python scalars")
        return self._rec("scale", c=1.0 / float(other))

    def __neg__(self):
        return self._rec("scale", c=-1.0)

    def __matmul__(self, other):
        return self._rec("matmul", other)

    def __rmatmul__(self, other):
        return self.tape.record("matmul", (other, self))

    def __pow__(self, power):
        if power != 2:
            raise ContractViolation("only square is supported")
        return self._rec("square")

    def sum(self, axis=None):
        return self._rec("sum", axis=axis)

    def mean(self, axis=None):
        return self._rec("mean", axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self._rec("reshape", shape=tuple(shape))


# functional forms ------------------------------------------------------------


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    return current_tape()


def record(op_kind: str, *inputs, **attrs) -> Tensor:
    return _tape_of(*inputs).record(op_kind, inputs, **attrs)


def add(a, b):
    return record("add", a, b)


def subtract(a, b):
    return record("subtract", a, b)


def multiply(a, b):
    return record("multiply", a, b)


def matmul(a, b):
    return record("matmul", a, b)


def bias_add(a, b):
    return record("bias_add", a, b)


def leaky_relu(a, slope: float = LEAKY_SLOPE):
    return record("leaky_relu", a, slope=slope)


def relu(a):
    return record("relu", a)


def exp(a):
    return record("exp", a)


def log(a):
    return record("log", a)


def square(a):
    return record("square", a)


def softplus(a):
    return record("softplus", a)


def tsum(a, axis=None):
    return record("sum", a, axis=axis)


def tmean(a, axis=None):
    return record("mean", a, axis=axis)


def logsumexp(a, axis=None):
    return record("logsumexp", a, axis=axis)


def scale(a, c: float):
    return record("scale", a, c=float(c))


def shift(a, c: float):
    return record("shift", a, c=float(c))


def reshape(a, shape):
    return record("reshape", a, shape=tuple(shape))


def take(a, index):
    return record("take", a, index=np.asarray(index, dtype=np.intp))


def clip(a, lo: float, hi: float):
    return record("clip", a, lo=float(lo), hi=float(hi))


def sqdist(a, b):
    """Pairwise squared Euclidean distances between rows, shape (n, m)."""
    return record("sqdist", a, b)


def tile_rows(a, n: int):
    """Stack ``n`` copies of a 1-d tensor into an (n, k) tensor."""
    k = a.shape[0]
    return matmul(np.ones((n, 1)), reshape(a, (1, k)))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


class ParameterSet:
    """Named float64 arrays with a stable order and a role tag.

    ``role`` is ``"theta"`` for generator-side and ``"phi"`` for the
    variational / discriminator side. Arrays are replaced, never mutated, so
    values cached on a tape stay valid.
    """

    ROLES = ("theta", "phi")

    def __init__(self, values: dict | None = None, role: str = "theta"):
        if role not in self.ROLES:
            raise ContractViolation(f"unknown role {role!r}")
        self.role = role
        self._values: OrderedDict[str, np.ndarray] = OrderedDict()
        for k, v in (values or {}).items():
            self[k] = v

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value) -> None:
        self._values[name] = np.array(value, dtype=np.float64)

    def __contains__(self, name):
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def items(self):
        return self._values.items()

    def leaf(self, name: str, tape: Tape | None = None) -> Tensor:
        return (tape or current_tape()).param(name, self._values[name])

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self._values.items()}, self.role)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._values.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for k in self._values:
            self[k] = values[k]

    def flat(self) -> np.ndarray:
        if not self._values:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._values.values()])

    def merged(self, *others: "ParameterSet") -> "ParameterSet":
        out = self.copy()
        for other in others:
            for k, v in other.items():
                if k in out:
                    raise ContractViolation(f"duplicate parameter name {k!r}")
                out[k] = v
        return out


def disjoint_roles(*sets: ParameterSet) -> bool:
    seen: dict[str, str] = {}
    for ps in sets:
        for name in ps:
            if name in seen and seen[name] != ps.role:
                return False
            seen[name] = ps.role
    return True


# ---------------------------------------------------------------------------
# finite-difference validation
# ---------------------------------------------------------------------------


def gradient_check(
    function: Callable[[ParameterSet], Tensor],
    params: ParameterSet | list[ParameterSet],
    eps: float = 1e-4,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``function`` is called inside a fresh tape and must build its scalar from
    the leaves of ``params``. Returns ``max |a-b| / max(1e-12, |a|+|b|)`` over
    every coordinate of every parameter.
    """
    if eps <= 0:
        raise ContractViolation("eps must be positive")
    sets = params if isinstance(params, list) else [params]

    def evaluate() -> float:
        with Tape():
            return float(function(params).value)

    with Tape() as tape:
        out = function(params)
    analytic = tape.backward(out)

    worst = 0.0
    for ps in sets:
        for name in ps.names():
            base = ps[name]
            a = analytic.get(name, np.zeros_like(base))
            for idx in np.ndindex(base.shape):
                plus = base.copy()
                plus[idx] += eps
                ps[name] = plus
                f_plus = evaluate()
                minus = base.copy()
                minus[idx] -= eps
                ps[name] = minus
                f_minus = evaluate()
                ps[name] = base
                fd = (f_plus - f_minus) / (2.0 * eps)
                ai = float(a[idx])
                err = abs(ai - fd) / max(1e-12, abs(ai) + abs(fd))
                worst = max(worst, err)
    return worst


def backward(tape: Tape, scalar_output: Tensor) -> dict[str, np.ndarray]:
    return tape.backward(scalar_output)
