"""Shared complex linear-algebra helpers: validation, norms, and SVD.

All quantum-state vectors in this package are one-dimensional
``complex128`` arrays; operators are two-dimensional ``complex128``
arrays.  The helpers here centralise the shape/dtype checks so the rest
of the code can assume well-formed inputs, and wrap the singular value
decomposition behind a small contract used by the entropy tooling.
"""

from __future__ import annotations

import numpy as np

#: Norms at or below this threshold are treated as numerically zero.
EPS_NORM = 1e-12


class DimensionMismatchError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class DegenerateStateError(ValueError):
    """A vector with (near-)zero norm was used where a state is required."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge."""


def as_cvector(x, name: str = "vector") -> np.ndarray:
    """Validate and return ``x`` as a 1-d complex128 array.

    Real input is promoted; anything that is not one-dimensional raises
    :class:`DimensionMismatchError`.
    """
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DimensionMismatchError(
            f"{name} must be 1-d, got shape {arr.shape}"
        )
    return np.ascontiguousarray(arr, dtype=np.complex128)


def as_cmatrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and return ``x`` as a 2-d complex128 array."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise DimensionMismatchError(
            f"{name} must be 2-d, got shape {arr.shape}"
        )
    return np.ascontiguousarray(arr, dtype=np.complex128)


def norm(v: np.ndarray) -> float:
    """Euclidean norm of a vector (real or complex)."""
    return float(np.linalg.norm(v))


def normalized(v: np.ndarray, name: str = "vector") -> np.ndarray:
    """Return ``v / ||v||``, raising :class:`DegenerateStateError` when
    the norm does not exceed :data:`EPS_NORM`."""
    n = norm(v)
    if n <= EPS_NORM:
        raise DegenerateStateError(
            f"cannot normalize {name}: norm {n:.3e} <= {EPS_NORM:.0e}"
        )
    return v / n


def svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition ``m = U @ diag(s) @ V.conj().T``.

    Returns ``(U, s, V)`` with singular values sorted in descending
    order and ``U``, ``V`` column-unitary.  Note that ``V`` (not its
    conjugate transpose) is returned, so the columns of ``V`` are the
    right singular vectors.

    Raises
    ------
    NumericalError
        If the underlying iteration fails to converge.
    """
    mat = as_cmatrix(m, "svd input")
    try:
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError(
            f"SVD did not converge for shape {mat.shape}: {exc}"
        ) from exc
    return u, s, vh.conj().T
