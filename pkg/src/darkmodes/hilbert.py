"""Truncated Fock spaces for M bosonic modes plus an optional two-level atom.

Tensor factors are always ordered ``(atom, mode 0, mode 1, ..., mode M-1)``;
within each factor the basis index ascends with the excitation number, and
the atom uses ``|g> = 0``, ``|e> = 1``.  A state index therefore reads like
a mixed-radix number whose most significant digit is the atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    InvalidDimensionError,
)

ATOM = "atom"

# Dense matrices above this size are not something a desk-scale run can hold.
MAX_DENSE_DIM = 1 << 15


@dataclass(frozen=True)
class ModeSpec:
    """One bosonic mode: Fock cutoff, detuning from the atom (units of gamma)
    and initial thermal occupation."""

    cutoff: int
    detuning: float = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise InvalidDimensionError(f"cutoff must be an integer >= 2, got {self.cutoff}")
        if not np.isfinite(self.detuning):
            raise ConfigurationError(f"detuning must be finite, got {self.detuning}")
        if not (self.nbar >= 0 and np.isfinite(self.nbar)):
            raise ConfigurationError(f"nbar must be finite and >= 0, got {self.nbar}")


@dataclass(frozen=True)
class SystemSpec:
    """Modes, atomic decay rate and whether the atom is part of the space."""

    modes: tuple[ModeSpec, ...]
    gamma: float = 1.0
    atom_included: bool = True

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.modes) < 1:
            raise ConfigurationError("a system needs at least one mode")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.dim > MAX_DENSE_DIM:
            raise InvalidDimensionError(
                f"total dimension {self.dim} exceeds the dense limit {MAX_DENSE_DIM}")

    @classmethod
    def uniform(cls, m: int, cutoff: int, nbar: float = 0.0, gamma: float = 1.0,
                detunings: Sequence[float] | None = None,
                atom_included: bool = True) -> "SystemSpec":
        if m < 1:
            raise ConfigurationError(f"need at least one mode, got {m}")
        detunings = [0.0] * m if detunings is None else list(detunings)
        if len(detunings) != m:
            raise ConfigurationError("one detuning per mode required")
        modes = tuple(ModeSpec(cutoff, float(d), nbar) for d in detunings)
        return cls(modes, gamma, atom_included)

    @property
    def m(self) -> int:
        return len(self.modes)

    @property
    def cutoffs(self) -> tuple[int, ...]:
        return tuple(md.cutoff for md in self.modes)

    @property
    def local_dims(self) -> tuple[int, ...]:
        head = (2,) if self.atom_included else ()
        return head + self.cutoffs

    @property
    def field_dim(self) -> int:
        return math.prod(self.cutoffs)

    @property
    def dim(self) -> int:
        return (2 if self.atom_included else 1) * self.field_dim

    def slot_position(self, slot) -> int:
        """Position of ``slot`` (``ATOM`` or a mode index) in ``local_dims``."""
        offset = 1 if self.atom_included else 0
        if slot == ATOM:
            if not self.atom_included:
                raise ConfigurationError("system has no atom")
            return 0
        if isinstance(slot, (bool, np.bool_)) or not isinstance(slot, (int, np.integer)):
            raise ConfigurationError(f"slot must be ATOM or a mode index, got {slot!r}")
        if not 0 <= slot < self.m:
            raise ConfigurationError(f"mode index {slot} out of range for M={self.m}")
        return offset + int(slot)


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense square matrix with a label."""

    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"operator must be square, got shape {a.shape}")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dag(self) -> "Operator":
        return Operator(self.entries.conj().T, f"{self.label}^dag" if self.label else "")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.entries @ other.entries)
        return self.entries @ np.asarray(other)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace matrix.  Positivity is checked on demand only."""

    entries: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"density matrix must be square, got {a.shape}")
        object.__setattr__(self, "entries", a)
        if self.validate:
            herm = hermiticity_error(a)
            if herm > 1e-10:
                raise ConfigurationError(f"density matrix not Hermitian (max|rho - rho^dag| = {herm:.3g})")
            tr = np.trace(a).real
            if abs(tr - 1.0) > 1e-8:
                raise ConfigurationError(f"density matrix trace is {tr!r}, expected 1")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def check_positive(self, tol: float = 1e-8) -> None:
        lam = self.min_eigenvalue()
        if lam < -tol:
            raise ConfigurationError(f"density matrix has eigenvalue {lam:.3g} < -{tol:g}")

    @classmethod
    def from_state(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi.entries if isinstance(psi, StateVector) else psi, dtype=complex)
        return cls(np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class StateVector:
    entries: np.ndarray
    normalized: bool = True
    null: bool = False

    def __post_init__(self):
        v = np.asarray(self.entries, dtype=complex)
        if v.ndim != 1:
            raise DimensionMismatchError(f"state vector must be 1-D, got shape {v.shape}")
        object.__setattr__(self, "entries", v)
        nrm = np.linalg.norm(v)
        if self.null and nrm != 0.0:
            raise ConfigurationError("vector flagged null is not zero")
        if self.normalized and not self.null and abs(nrm - 1.0) > 1e-10:
            raise ConfigurationError(f"vector flagged normalized has norm {nrm!r}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def hermiticity_error(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T), initial=0.0))


def as_matrix(x) -> np.ndarray:
    if isinstance(x, (Operator, DensityMatrix)):
        return x.entries
    return np.asarray(x, dtype=complex)


def annihilation_op(d: int) -> Operator:
    """Truncated annihilation operator with ``A[n-1, n] = sqrt(n)``."""
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"Fock dimension must be >= 2, got {d}")
    return Operator(np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1), "a")


def creation_op(d: int) -> Operator:
    return Operator(annihilation_op(d).entries.T.copy(), "a^dag")


def number_op(d: int) -> Operator:
    return Operator(np.diag(np.arange(d, dtype=float)), "n")


def sigma_minus() -> Operator:
    """Atomic lowering operator |g><e| with |g> = index 0."""
    return Operator(np.array([[0.0, 1.0], [0.0, 0.0]]), "sigma_-")


def sigma_plus() -> Operator:
    return Operator(np.array([[0.0, 0.0], [1.0, 0.0]]), "sigma_+")


def embed(op, slot, spec: SystemSpec) -> Operator:
    """Lift a single-factor operator to the full space.

    ``slot`` is ``ATOM`` or a mode index.  The result is
    ``I x ... x op x ... x I`` with factors in the fixed (atom, modes...) order.
    """
    local = as_matrix(op)
    pos = spec.slot_position(slot)
    dims = spec.local_dims
    if local.shape != (dims[pos], dims[pos]):
        raise DimensionMismatchError(
            f"operator of shape {local.shape} does not fit slot {slot!r} (local dim {dims[pos]})")
    left = math.prod(dims[:pos])
    right = math.prod(dims[pos + 1:])
    full = np.kron(np.kron(np.eye(left), local), np.eye(right))
    label = op.label if isinstance(op, Operator) else ""
    return Operator(full, f"{label}[{slot}]" if label else "")


def embed_sparse(factors: dict, spec: SystemSpec) -> sp.csr_matrix:
    """Sparse Kronecker product placing ``factors[slot]`` at each slot, identity elsewhere.

    ``embed_sparse({ATOM: sp_, 2: a}, spec)`` is ``sigma_+ a_2`` without ever
    forming a dense full-space matrix.
    """
    dims = spec.local_dims
    locals_ = [sp.identity(d, dtype=complex, format="csr") for d in dims]
    for slot, op in factors.items():
        pos = spec.slot_position(slot)
        m = as_matrix(op)
        if m.shape != (dims[pos], dims[pos]):
            raise DimensionMismatchError(
                f"operator of shape {m.shape} does not fit slot {slot!r} (local dim {dims[pos]})")
        locals_[pos] = sp.csr_matrix(m)
    out = locals_[0]
    for f in locals_[1:]:
        out = sp.kron(out, f, format="csr")
    return sp.csr_matrix(out)


def identity(spec: SystemSpec) -> Operator:
    return Operator(np.eye(spec.dim), "I")


def expectation(rho, op) -> complex:
    """``Tr(rho op)``."""
    r = as_matrix(rho)
    o = as_matrix(op)
    if r.shape != o.shape:
        raise DimensionMismatchError(f"rho is {r.shape}, operator is {o.shape}")
    # Tr(AB) = sum_ij A_ij B_ji without forming the product
    return complex(np.sum(r * o.T))


def basis_index(spec: SystemSpec, occupations: Sequence[int], atom: int = 0) -> int:
    """Flat index of ``|atom> |n_0, ..., n_{M-1}>``."""
    occ = list(occupations)
    if len(occ) != spec.m:
        raise ConfigurationError(f"need {spec.m} occupations, got {len(occ)}")
    digits = ([atom] if spec.atom_included else []) + occ
    if not spec.atom_included and atom != 0:
        raise ConfigurationError("system has no atom")
    for dgt, dim in zip(digits, spec.local_dims):
        if not 0 <= dgt < dim:
            raise ConfigurationError(f"occupation {dgt} outside local dimension {dim}")
    return int(np.ravel_multi_index(digits, spec.local_dims))


def basis_state(spec: SystemSpec, occupations: Sequence[int], atom: int = 0) -> StateVector:
    v = np.zeros(spec.dim, dtype=complex)
    v[basis_index(spec, occupations, atom)] = 1.0
    return StateVector(v)


def vacuum(spec: SystemSpec) -> StateVector:
    return basis_state(spec, [0] * spec.m, 0)


def occupation_table(spec: SystemSpec) -> np.ndarray:
    """Array of shape (dim, len(local_dims)) giving each basis state's digits."""
    grids = np.indices(spec.local_dims).reshape(len(spec.local_dims), -1)
    return grids.T.copy()


def thermal_tail_mass(nbar: float, d: int) -> float:
    """Probability a Bose-Einstein mode with mean ``nbar`` holds >= d quanta."""
    if nbar == 0:
        return 0.0
    return (nbar / (1.0 + nbar)) ** d


def default_cutoff(nbar: float, tail: float = 1e-8) -> int:
    """Smallest cutoff ``d >= 2`` whose thermal tail mass is below ``tail``."""
    if nbar < 0:
        raise ConfigurationError(f"nbar must be >= 0, got {nbar}")
    d = 2
    while thermal_tail_mass(nbar, d) >= tail:
        d += 1
    return d
