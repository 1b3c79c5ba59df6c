"""Bright/dark collective modes.

The collective annihilators are ``A_mu = sum_j U[mu, j] a_j``.  Row 0 of ``U``
is the uniform (bright) mode; every other row sums to zero, which is what
decouples it from an atom that sees all modes with equal coupling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    InvalidDimensionError,
    TruncationError,
)
from .hilbert import (
    Operator,
    StateVector,
    SystemSpec,
    annihilation_op,
    as_matrix,
    embed,
    embed_sparse,
    vacuum,
)


@dataclass(frozen=True, eq=False)
class CollectiveBasis:
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise InvalidDimensionError(f"basis matrix must be square, got {u.shape}")
        object.__setattr__(self, "u", u)

    @property
    def m(self) -> int:
        return self.u.shape[0]

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(self.u @ self.u.conj().T - np.eye(self.m))))

    def dark_row_sums(self) -> np.ndarray:
        return np.abs(self.u[1:].sum(axis=1))


@dataclass(frozen=True)
class CollectiveIndex:
    """Occupations ``(n_0, ..., n_{M-1})`` of the collective modes; ``n_0`` is bright."""

    occupations: tuple[int, ...]

    def __post_init__(self):
        occ = tuple(int(n) for n in self.occupations)
        if any(n < 0 for n in occ):
            raise ConfigurationError(f"occupations must be >= 0, got {occ}")
        if not occ:
            raise ConfigurationError("need at least one collective mode")
        object.__setattr__(self, "occupations", occ)

    @property
    def total(self) -> int:
        return sum(self.occupations)

    @property
    def n0(self) -> int:
        return self.occupations[0]

    @property
    def is_dark(self) -> bool:
        return self.n0 == 0

    @property
    def is_bright(self) -> bool:
        return self.n0 == self.total

    def __iter__(self):
        return iter(self.occupations)

    def __len__(self):
        return len(self.occupations)


def build_basis(m: int) -> CollectiveBasis:
    """Real orthogonal collective basis for ``m`` modes.

    Row 0 is ``1/sqrt(m)``.  Rows 1..m-1 come from Gram-Schmidt over the
    mean-subtracted unit vectors ``e_j - 1/m`` for ``j = 0..m-2``, taken in
    index order, so the result is fixed for a given ``m``.
    """
    if int(m) != m or m < 1:
        raise InvalidDimensionError(f"need m >= 1, got {m}")
    rows = [np.full(m, 1.0 / np.sqrt(m))]
    for j in range(m - 1):
        v = -np.full(m, 1.0 / m)
        v[j] += 1.0
        # two passes of modified Gram-Schmidt keep the zero-sum rows orthogonal to 1e-16
        for _ in range(2):
            for r in rows:
                v = v - (r @ v) * r
        rows.append(v / np.linalg.norm(v))
    return CollectiveBasis(np.array(rows))


def _check_equal_cutoffs(spec: SystemSpec) -> None:
    if len(set(spec.cutoffs)) != 1:
        raise ConfigurationError(f"collective operators need equal cutoffs, got {spec.cutoffs}")


def collective_annihilator(basis: CollectiveBasis, mu: int, spec: SystemSpec) -> Operator:
    """``A_mu = sum_j U[mu, j] a_j`` embedded in the full space of ``spec``."""
    if basis.m != spec.m:
        raise ConfigurationError(f"basis has M={basis.m}, system has M={spec.m}")
    if not 0 <= mu < spec.m:
        raise ConfigurationError(f"collective index {mu} out of range for M={spec.m}")
    _check_equal_cutoffs(spec)
    a = annihilation_op(spec.cutoffs[0])
    out = np.zeros((spec.dim, spec.dim), dtype=complex)
    for j in range(spec.m):
        if basis.u[mu, j] != 0.0:
            out += basis.u[mu, j] * embed(a, j, spec).entries
    return Operator(out, f"A_{mu}")


def collective_state(basis: CollectiveBasis, index: CollectiveIndex | Sequence[int],
                     spec: SystemSpec) -> StateVector:
    """``prod_mu (A_mu^dag)^{n_mu} / sqrt(n_mu!) |vac>`` built by repeated application.

    The atom, if present, is left in ``|g>``.
    """
    if not isinstance(index, CollectiveIndex):
        index = CollectiveIndex(tuple(index))
    if len(index) != spec.m:
        raise ConfigurationError(f"index has {len(index)} entries, system has M={spec.m}")
    if index.total > min(spec.cutoffs) - 1:
        raise TruncationError(
            f"N={index.total} photons do not fit below cutoff {min(spec.cutoffs)}")
    v = vacuum(spec).entries.copy()
    for mu, n in enumerate(index.occupations):
        if n == 0:
            continue
        raise_op = collective_annihilator(basis, mu, spec).entries.conj().T
        for _ in range(n):
            v = raise_op @ v
        v = v / math.sqrt(math.factorial(n))
    nrm = np.linalg.norm(v)
    return StateVector(v / nrm)


def field_correlations(rho, spec: SystemSpec) -> np.ndarray:
    """Matrix ``C[j, k] = <a_j^dag a_k>``."""
    r = as_matrix(rho)
    if r.shape != (spec.dim, spec.dim):
        raise DimensionMismatchError(f"rho is {r.shape}, system dimension is {spec.dim}")
    lowers = [embed_sparse({j: annihilation_op(d).entries}, spec) for j, d in enumerate(spec.cutoffs)]
    m = spec.m
    c = np.empty((m, m), dtype=complex)
    for k in range(m):
        rho_ak = lowers[k] @ r  # a_k rho
        for j in range(m):
            # <a_j^dag a_k> = Tr(a_k rho a_j^dag) = sum (a_k rho) * conj(a_j)
            c[j, k] = lowers[j].conj().multiply(rho_ak).sum()
    return c


def occupation_expectations(rho, basis: CollectiveBasis, spec: SystemSpec) -> np.ndarray:
    """``<A_mu^dag A_mu>`` for every collective mode."""
    if basis.m != spec.m:
        raise ConfigurationError(f"basis has M={basis.m}, system has M={spec.m}")
    c = field_correlations(rho, spec)
    u = basis.u
    # <A_mu^dag A_mu> = sum_jk conj(U_mu j) U_mu k C_jk
    occ = np.einsum("mj,jk,mk->m", u.conj(), c, u)
    return occ.real


def compositions(n_total: int, m: int) -> Iterator[tuple[int, ...]]:
    """Weak compositions of ``n_total`` into ``m`` parts, lexicographic order."""
    if m == 1:
        yield (n_total,)
        return
    for first in range(n_total + 1):
        for rest in compositions(n_total - first, m - 1):
            yield (first,) + rest


def enumerate_collective_indices(n_total: int, m: int) -> list[CollectiveIndex]:
    if n_total < 0 or m < 1:
        raise ConfigurationError(f"need n_total >= 0 and m >= 1, got ({n_total}, {m})")
    return [CollectiveIndex(c) for c in compositions(n_total, m)]
