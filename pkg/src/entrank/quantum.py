"""Pure/mixed state containers and measurement/entropy operations.

States are finite-dimensional complex vectors of unit Euclidean norm;
mixtures are Hermitian, unit-trace density matrices.  The bipartite
entanglement entropy is computed from the Schmidt coefficients of the
state reshaped over a declared subsystem split, i.e. the singular
values of the ``(left_dim, right_dim)`` coefficient matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import DegenerateStateError, DimensionMismatchError

#: Tolerance used when validating unit norms and unit traces.
UNIT_TOL = 1e-8


@dataclass(frozen=True)
class PureState:
    """A unit-norm complex state vector."""

    vector: np.ndarray

    def __post_init__(self):
        vec = linalg.as_cvector(self.vector, "state vector")
        n = linalg.norm(vec)
        if abs(n - 1.0) > UNIT_TOL:
            raise DegenerateStateError(
                f"state vector is not unit norm (||v|| = {n!r})"
            )
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """A Hermitian, unit-trace, finite-dimensional mixed state."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = linalg.as_cmatrix(self.matrix, "density matrix")
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatchError(
                f"density matrix must be square, got {mat.shape}"
            )
        if not np.allclose(mat, mat.conj().T, atol=1e-8):
            raise ValueError("density matrix must be Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > UNIT_TOL:
            raise ValueError(f"density matrix trace must be 1, got {tr!r}")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SchmidtSplit:
    """A bipartition of a state space into (left, right) factor dims."""

    left: int
    right: int

    def __post_init__(self):
        if self.left < 1 or self.right < 1:
            raise DimensionMismatchError("split dimensions must be positive")

    def check(self, dim: int) -> None:
        if self.left * self.right != dim:
            raise DimensionMismatchError(
                f"split {self.left}x{self.right} does not factor dimension {dim}"
            )


def pure_state(amplitudes) -> PureState:
    """Normalize an amplitude vector into a :class:`PureState`."""
    vec = linalg.as_cvector(amplitudes, "amplitudes")
    return PureState(linalg.normalized(vec, "state vector"))


def product_state(states: list[PureState] | tuple[PureState, ...]) -> PureState:
    """Tensor product of pure states, left factor varying slowest."""
    if not states:
        raise DimensionMismatchError("product_state needs at least one factor")
    vec = states[0].vector
    for s in states[1:]:
        vec = np.kron(vec, s.vector)
    return PureState(vec)


def mixed_state(states: list[PureState], weights=None) -> DensityMatrix:
    """Convex mixture ``sum_k w_k |s_k><s_k|`` (uniform by default)."""
    if not states:
        raise DimensionMismatchError("mixed_state needs at least one state")
    dim = states[0].dim
    if weights is None:
        w = np.full(len(states), 1.0 / len(states))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(states),):
            raise DimensionMismatchError(
                f"need {len(states)} weights, got shape {w.shape}"
            )
        if np.any(w < 0):
            raise ValueError("mixture weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("mixture weights must sum to a positive value")
        w = w / total
    rho = np.zeros((dim, dim), dtype=np.complex128)
    for wk, s in zip(w, states):
        if s.dim != dim:
            raise DimensionMismatchError(
                f"mixture states must share a dimension ({s.dim} != {dim})"
            )
        rho += wk * np.outer(s.vector, s.vector.conj())
    return DensityMatrix(rho)


def measure_pure(state: PureState, direction: PureState) -> float:
    """Probability ``|<m|s>|^2`` of projecting ``state`` onto ``direction``."""
    if state.dim != direction.dim:
        raise DimensionMismatchError(
            f"state dim {state.dim} != measurement dim {direction.dim}"
        )
    amp = np.vdot(direction.vector, state.vector)
    return float(np.clip(amp.real * amp.real + amp.imag * amp.imag, 0.0, 1.0))


def measure_density(rho: DensityMatrix, direction: PureState) -> float:
    """Expectation ``<m|rho|m>`` of the projector onto ``direction``."""
    if rho.dim != direction.dim:
        raise DimensionMismatchError(
            f"density dim {rho.dim} != measurement dim {direction.dim}"
        )
    m = direction.vector
    val = np.vdot(m, rho.matrix @ m)
    return float(np.clip(val.real, 0.0, 1.0))


def measure_density_bank(rho: DensityMatrix, bank: np.ndarray) -> np.ndarray:
    """``<m_j|rho|m_j>`` for every row ``m_j`` of ``bank`` at once."""
    b = linalg.as_cmatrix(bank, "measurement bank")
    if b.shape[1] != rho.dim:
        raise DimensionMismatchError(
            f"bank row dim {b.shape[1]} != density dim {rho.dim}"
        )
    vals = np.einsum("ja,ab,jb->j", b.conj(), rho.matrix, b).real
    return np.clip(vals, 0.0, 1.0)


def fidelity(a: PureState, b: PureState) -> float:
    """Squared overlap ``|<a|b>|^2`` between two pure states."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"state dims differ: {a.dim} != {b.dim}")
    amp = np.vdot(a.vector, b.vector)
    return float(np.clip(amp.real * amp.real + amp.imag * amp.imag, 0.0, 1.0))


def schmidt_coefficients(state: PureState, split: SchmidtSplit) -> np.ndarray:
    """Schmidt coefficients (descending) of ``state`` across ``split``."""
    split.check(state.dim)
    coeff = state.vector.reshape(split.left, split.right)
    _, s, _ = linalg.svd(coeff)
    return s


def entanglement_entropy(state: PureState, split: SchmidtSplit) -> float:
    """Von Neumann entropy (natural log) of either reduced state.

    The convention ``0 * log(0) = 0`` applies, and the result is clamped
    to the mathematically valid interval ``[0, ln(min(left, right))]``.
    """
    s = schmidt_coefficients(state, split)
    p = s * s
    p = p[p > 1e-300]
    ent = float(-(p * np.log(p)).sum())
    return float(np.clip(ent, 0.0, np.log(min(split.left, split.right))))
