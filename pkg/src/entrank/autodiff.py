"""Reverse-mode automatic differentiation over real and complex arrays.

The ranking models in this package are trained by gradient descent on a
real-valued loss that flows through complex intermediate quantities
(states, measurement amplitudes).  Rather than pulling in a framework,
this module implements the small set of primitives the models need on a
classic Wengert tape.

Conventions
-----------
* Values are numpy arrays: ``complex128`` for complex quantities,
  ``float64`` for real ones.  Scalars are 0-d arrays.
* Complex arrays are differentiated by treating their real and
  imaginary parts as independent real coordinates.  For a real scalar
  loss ``L`` and a complex value ``z = x + iy`` the tape carries the
  *packed* gradient ``dL/dx + 1j * dL/dy`` in a single ``complex128``
  array of the same shape.  Real values carry ordinary ``float64``
  gradients.  ``z.view(np.float64)`` therefore aliases exactly the real
  coordinates that an optimizer should update.
* Every primitive is a module-level function that accepts
  :class:`Node` or plain ``ndarray`` arguments.  If no argument is a
  node the computation short-circuits to plain numpy, so the same
  forward code serves both training (traced) and inference (untraced).

The tape records operations in creation order; since an operation can
only consume values that already exist, iterating the records in
reverse replays the adjoints in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .linalg import EPS_NORM, DegenerateStateError, DimensionMismatchError

__all__ = [
    "Node",
    "Tape",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "matvec",
    "kron",
    "conjugate",
    "real_part",
    "imag_part",
    "abs2",
    "inner",
    "l2_normalize",
    "polar",
    "take_row",
    "stack_rows",
    "concat",
    "max_over_rows",
    "rdot",
    "sqrt",
    "relu",
    "divide",
    "nsum",
]


class Node:
    """A value tracked on a :class:`Tape`."""

    __slots__ = ("value", "tape")

    def __init__(self, value: np.ndarray, tape: "Tape"):
        self.value = value
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self) -> np.dtype:
        return self.value.dtype

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Node(shape={self.value.shape}, dtype={self.value.dtype})"


#: A vector-Jacobian product: maps the output gradient to one input gradient.
Vjp = Callable[[np.ndarray], np.ndarray]


class Tape:
    """Ordered record of primitive operations for one backward pass.

    Parameters are registered with :meth:`param`; intermediate nodes are
    created by the primitive functions in this module.  A tape is
    single-use and single-threaded: build the forward computation, call
    :meth:`backward` once, then discard it.
    """

    def __init__(self) -> None:
        self._records: list[tuple[Node, tuple[tuple[Node, Vjp], ...]]] = []
        self._params: list[Node] = []

    def param(self, value) -> Node:
        """Register ``value`` as a tracked leaf and return its node."""
        arr = np.asarray(value)
        if np.issubdtype(arr.dtype, np.complexfloating):
            arr = np.asarray(arr, dtype=np.complex128, order="C")
        else:
            arr = np.asarray(arr, dtype=np.float64, order="C")
        node = Node(arr, self)
        self._params.append(node)
        return node

    @property
    def num_records(self) -> int:
        return len(self._records)

    def _record(self, value: np.ndarray, pairs: Sequence[tuple[Node, Vjp]]) -> Node:
        node = Node(value, self)
        self._records.append((node, tuple(pairs)))
        return node

    def backward(self, loss: Node) -> dict[Node, np.ndarray]:
        """Accumulate gradients of ``loss`` w.r.t. every registered param.

        ``loss`` must be a real scalar node on this tape.  Returns a
        mapping from parameter node to its (packed) gradient; parameters
        the loss does not depend on map to zero arrays.
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise ValueError("loss is not a node on this tape")
        if loss.value.shape != () or np.issubdtype(loss.value.dtype, np.complexfloating):
            raise ValueError(
                f"loss must be a real scalar, got shape {loss.value.shape} "
                f"dtype {loss.value.dtype}"
            )
        grads: dict[Node, np.ndarray] = {loss: np.asarray(1.0)}
        for out, pairs in reversed(self._records):
            g = grads.pop(out, None)
            if g is None:
                continue
            for parent, vjp in pairs:
                contrib = vjp(g)
                acc = grads.get(parent)
                grads[parent] = contrib if acc is None else acc + contrib
        return {
            p: grads.get(p, np.zeros_like(p.value)) for p in self._params
        }


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x)


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Node):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands belong to different tapes")
    return tape


def _is_complex(arr: np.ndarray) -> bool:
    return np.issubdtype(arr.dtype, np.complexfloating)


def _check_same_kind(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if _is_complex(a) != _is_complex(b):
        raise DimensionMismatchError(
            f"{op}: cannot mix real and complex operands "
            f"({a.dtype} vs {b.dtype})"
        )


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce an output gradient back to an operand's shape.

    Only scalar-vs-array broadcasting is supported (enough for margin
    constants and scalar losses)."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(np.sum(g))
    raise DimensionMismatchError(
        f"cannot reduce gradient of shape {g.shape} to {shape}"
    )


def _check_addable(av: np.ndarray, bv: np.ndarray, op: str) -> None:
    _check_same_kind(av, bv, op)
    if av.shape != bv.shape and av.shape != () and bv.shape != ():
        raise DimensionMismatchError(
            f"{op}: shapes {av.shape} and {bv.shape} do not match"
        )


def add(a, b):
    """Elementwise ``a + b`` (same shape, or one scalar)."""
    av, bv = _value(a), _value(b)
    _check_addable(av, bv, "add")
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: _unbroadcast(g, av.shape)))
    if isinstance(b, Node):
        pairs.append((b, lambda g: _unbroadcast(g, bv.shape)))
    return tape._record(out, pairs)


def sub(a, b):
    """Elementwise ``a - b`` (same shape, or one scalar)."""
    av, bv = _value(a), _value(b)
    _check_addable(av, bv, "sub")
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: _unbroadcast(g, av.shape)))
    if isinstance(b, Node):
        pairs.append((b, lambda g: _unbroadcast(-g, bv.shape)))
    return tape._record(out, pairs)


def neg(a):
    av = _value(a)
    out = -av
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape._record(out, [(a, lambda g: -g)])


def mul(a, b):
    """Elementwise product; operands must share shape and kind."""
    av, bv = _value(a), _value(b)
    _check_same_kind(av, bv, "mul")
    if av.shape != bv.shape:
        raise DimensionMismatchError(
            f"mul: shapes {av.shape} and {bv.shape} do not match"
        )
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: np.conj(bv) * g))
    if isinstance(b, Node):
        pairs.append((b, lambda g: np.conj(av) * g))
    return tape._record(out, pairs)


def scale(v, s):
    """Scale an array by a *real* scalar ``s``."""
    vv, sv = _value(v), _value(s)
    if sv.shape != () or _is_complex(sv):
        raise DimensionMismatchError("scale: s must be a real scalar")
    out = vv * sv
    tape = _tape_of(v, s)
    if tape is None:
        return out
    pairs = []
    if isinstance(v, Node):
        pairs.append((v, lambda g: g * sv))
    if isinstance(s, Node):
        pairs.append(
            (s, lambda g: np.asarray(np.real(np.vdot(g, vv)), dtype=np.float64))
        )
    return tape._record(out, pairs)


def matvec(m, v):
    """Matrix-vector product ``m @ v``."""
    mv, vv = _value(m), _value(v)
    if mv.ndim != 2 or vv.ndim != 1 or mv.shape[1] != vv.shape[0]:
        raise DimensionMismatchError(
            f"matvec: incompatible shapes {mv.shape} @ {vv.shape}"
        )
    out = mv @ vv
    tape = _tape_of(m, v)
    if tape is None:
        return out
    pairs = []
    if isinstance(m, Node):
        pairs.append((m, lambda g: np.outer(g, np.conj(vv))))
    if isinstance(v, Node):
        pairs.append((v, lambda g: np.conj(mv).T @ g))
    return tape._record(out, pairs)


def kron(a, b):
    """Tensor (Kronecker) product of two vectors.

    ``kron([a1, a2], [b1, b2]) == [a1*b1, a1*b2, a2*b1, a2*b2]``, i.e.
    the product state of two subsystems with the left factor varying
    slowest.
    """
    av, bv = _value(a), _value(b)
    if av.ndim != 1 or bv.ndim != 1:
        raise DimensionMismatchError("kron: operands must be vectors")
    _check_same_kind(av, bv, "kron")
    out = np.kron(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    na, nb = av.shape[0], bv.shape[0]
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: g.reshape(na, nb) @ np.conj(bv)))
    if isinstance(b, Node):
        pairs.append((b, lambda g: np.conj(av) @ g.reshape(na, nb)))
    return tape._record(out, pairs)


def conjugate(z):
    zv = _value(z)
    out = np.conj(zv)
    tape = _tape_of(z)
    if tape is None:
        return out
    return tape._record(out, [(z, lambda g: np.conj(g))])


def real_part(z):
    zv = _value(z)
    out = np.real(zv).copy() if _is_complex(zv) else zv
    tape = _tape_of(z)
    if tape is None:
        return out
    if _is_complex(zv):
        vjp: Vjp = lambda g: g.astype(np.complex128)
    else:
        vjp = lambda g: g
    return tape._record(out, [(z, vjp)])


def imag_part(z):
    zv = _value(z)
    if not _is_complex(zv):
        raise DimensionMismatchError("imag_part: input is not complex")
    out = np.imag(zv).copy()
    tape = _tape_of(z)
    if tape is None:
        return out
    return tape._record(out, [(z, lambda g: 1j * g)])


def abs2(z):
    """Elementwise squared magnitude ``|z|^2`` (real output)."""
    zv = _value(z)
    out = (zv.real * zv.real + zv.imag * zv.imag) if _is_complex(zv) else zv * zv
    tape = _tape_of(z)
    if tape is None:
        return out
    return tape._record(out, [(z, lambda g: 2.0 * g * zv)])


def inner(a, b):
    """Inner product ``sum(conj(a) * b)``, conjugate-linear in ``a``."""
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape or av.ndim != 1:
        raise DimensionMismatchError(
            f"inner: incompatible shapes {av.shape}, {bv.shape}"
        )
    out = np.asarray(np.vdot(av, bv))
    tape = _tape_of(a, b)
    if tape is None:
        return out
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: np.conj(g) * bv))
    if isinstance(b, Node):
        pairs.append((b, lambda g: g * av))
    return tape._record(out, pairs)


def l2_normalize(v):
    """Return ``v / ||v||``; raises on (near-)zero norm."""
    vv = _value(v)
    if vv.ndim != 1:
        raise DimensionMismatchError("l2_normalize: input must be a vector")
    n = np.linalg.norm(vv)
    if n <= EPS_NORM:
        raise DegenerateStateError(
            f"cannot normalize vector with norm {n:.3e}"
        )
    out = vv / n
    tape = _tape_of(v)
    if tape is None:
        return out

    def vjp(g: np.ndarray) -> np.ndarray:
        # Project out the radial component: the output is scale-free.
        return (g - np.real(np.vdot(g, out)) * out) / n

    return tape._record(out, [(v, vjp)])


def polar(r, phi):
    """Complex array ``r * exp(1j * phi)`` from real magnitude and phase."""
    rv, pv = _value(r), _value(phi)
    if rv.shape != pv.shape or _is_complex(rv) or _is_complex(pv):
        raise DimensionMismatchError("polar: r and phi must be real, same shape")
    phase = np.exp(1j * pv)
    out = rv * phase
    tape = _tape_of(r, phi)
    if tape is None:
        return out
    pairs = []
    if isinstance(r, Node):
        pairs.append((r, lambda g: np.real(np.conj(g) * phase)))
    if isinstance(phi, Node):
        pairs.append((phi, lambda g: np.real(np.conj(g) * 1j * out)))
    return tape._record(out, pairs)


def take_row(m, i: int):
    """Select row ``i`` of a 2-d array."""
    mv = _value(m)
    if mv.ndim != 2:
        raise DimensionMismatchError("take_row: input must be 2-d")
    out = np.array(mv[i])
    tape = _tape_of(m)
    if tape is None:
        return out

    def vjp(g: np.ndarray) -> np.ndarray:
        z = np.zeros_like(mv)
        z[i] = g
        return z

    return tape._record(out, [(m, vjp)])


def stack_rows(rows: Sequence):
    """Stack same-length vectors into a matrix (one vector per row)."""
    values = [_value(r) for r in rows]
    out = np.stack(values)
    tape = _tape_of(*rows)
    if tape is None:
        return out
    pairs = [
        (r, lambda g, k=k: g[k]) for k, r in enumerate(rows) if isinstance(r, Node)
    ]
    return tape._record(out, pairs)


def concat(parts: Sequence):
    """Concatenate vectors end to end."""
    values = [_value(p) for p in parts]
    out = np.concatenate(values)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    pairs = []
    offset = 0
    for p, val in zip(parts, values):
        n = val.shape[0]
        if isinstance(p, Node):
            pairs.append((p, lambda g, o=offset, n=n: g[o : o + n]))
        offset += n
    return tape._record(out, pairs)


def max_over_rows(m):
    """Columnwise maximum of a real matrix; ties route the gradient to
    the first maximal row."""
    mv = _value(m)
    if mv.ndim != 2 or _is_complex(mv):
        raise DimensionMismatchError("max_over_rows: input must be a real matrix")
    out = mv.max(axis=0)
    tape = _tape_of(m)
    if tape is None:
        return out
    idx = mv.argmax(axis=0)

    def vjp(g: np.ndarray) -> np.ndarray:
        z = np.zeros_like(mv)
        z[idx, np.arange(mv.shape[1])] = g
        return z

    return tape._record(out, [(m, vjp)])


def rdot(a, b):
    """Dot product of two real vectors (real scalar output)."""
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape or av.ndim != 1 or _is_complex(av) or _is_complex(bv):
        raise DimensionMismatchError("rdot: operands must be real vectors")
    out = np.asarray(av @ bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: g * bv))
    if isinstance(b, Node):
        pairs.append((b, lambda g: g * av))
    return tape._record(out, pairs)


def sqrt(x):
    """Elementwise square root of a positive real array."""
    xv = _value(x)
    if _is_complex(xv):
        raise DimensionMismatchError("sqrt: input must be real")
    out = np.sqrt(xv)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape._record(out, [(x, lambda g: g / (2.0 * out))])


def relu(x):
    """Elementwise ``max(x, 0)`` with zero subgradient at the kink."""
    xv = _value(x)
    if _is_complex(xv):
        raise DimensionMismatchError("relu: input must be real")
    out = np.maximum(xv, 0.0)
    tape = _tape_of(x)
    if tape is None:
        return out
    mask = (xv > 0.0).astype(np.float64)
    return tape._record(out, [(x, lambda g: g * mask)])


def divide(a, b):
    """Elementwise real division ``a / b``."""
    av, bv = _value(a), _value(b)
    if _is_complex(av) or _is_complex(bv):
        raise DimensionMismatchError("divide: operands must be real")
    _check_addable(av, bv, "divide")
    out = av / bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    pairs = []
    if isinstance(a, Node):
        pairs.append((a, lambda g: _unbroadcast(g / bv, av.shape)))
    if isinstance(b, Node):
        pairs.append((b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape)))
    return tape._record(out, pairs)


def nsum(xs: Sequence):
    """Sum a sequence of same-shape arrays."""
    values = [_value(x) for x in xs]
    out = values[0].copy()
    for v in values[1:]:
        out = out + v
    tape = _tape_of(*xs)
    if tape is None:
        return out
    pairs = [(x, lambda g: g) for x in xs if isinstance(x, Node)]
    return tape._record(out, pairs)
