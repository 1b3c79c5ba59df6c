"""Bose-Einstein thermal states and their overlap with collective states."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    DomainError,
    InvalidDimensionError,
    TruncationWarning,
)
from .hilbert import DensityMatrix, StateVector, SystemSpec, as_matrix, thermal_tail_mass

#: Tail mass above which a truncated thermal state triggers a TruncationWarning.
TAIL_WARN = 1e-6


@dataclass(frozen=True)
class ThermalSpec:
    nbar: float
    cutoff: int

    def __post_init__(self):
        if not (self.nbar >= 0 and math.isfinite(self.nbar)):
            raise ConfigurationError(f"nbar must be finite and >= 0, got {self.nbar}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise InvalidDimensionError(f"cutoff must be an integer >= 2, got {self.cutoff}")

    @property
    def tail_mass(self) -> float:
        return thermal_tail_mass(self.nbar, self.cutoff)


def thermal_weights(nbar: float, cutoff: int) -> np.ndarray:
    """Untruncated weights ``P_n = (1/(1+nbar)) (nbar/(1+nbar))^n`` for n < cutoff."""
    n = np.arange(cutoff)
    if nbar == 0:
        return (n == 0).astype(float)
    return (1.0 / (1.0 + nbar)) * (nbar / (1.0 + nbar)) ** n


def thermal_dm(spec: ThermalSpec, warn: bool = True) -> DensityMatrix:
    """Single-mode thermal state, truncated at ``spec.cutoff`` and renormalized."""
    if warn and spec.tail_mass >= TAIL_WARN:
        warnings.warn(
            f"thermal state nbar={spec.nbar} loses {spec.tail_mass:.2e} of its mass "
            f"above cutoff {spec.cutoff}", TruncationWarning, stacklevel=2)
    p = thermal_weights(spec.nbar, spec.cutoff)
    return DensityMatrix(np.diag(p / p.sum()).astype(complex))


def product_thermal(spec: SystemSpec, warn: bool = True) -> DensityMatrix:
    """Tensor product of per-mode thermal states; the atom (if any) sits in ``|g>``."""
    diags = []
    if spec.atom_included:
        diags.append(np.array([1.0, 0.0]))
    for md in spec.modes:
        ts = ThermalSpec(md.nbar, md.cutoff)
        if warn and ts.tail_mass >= TAIL_WARN:
            warnings.warn(
                f"thermal mode nbar={md.nbar} loses {ts.tail_mass:.2e} of its mass "
                f"above cutoff {md.cutoff}", TruncationWarning, stacklevel=2)
        p = thermal_weights(md.nbar, md.cutoff)
        diags.append(p / p.sum())
    diag = reduce(np.kron, diags)
    return DensityMatrix(np.diag(diag).astype(complex))


def dark_projection(rho, psi: StateVector) -> float:
    """Population ``<psi|rho|psi>`` of a normalized state."""
    r = as_matrix(rho)
    v = psi.entries if isinstance(psi, StateVector) else np.asarray(psi, dtype=complex)
    if r.shape != (v.shape[0], v.shape[0]):
        raise DimensionMismatchError(f"rho is {r.shape}, state has length {v.shape[0]}")
    val = np.vdot(v, r @ v)
    if abs(val.imag) > 1e-10:
        raise ConfigurationError(f"projection has imaginary part {val.imag:.3g}; rho not Hermitian?")
    return float(val.real)


def bose_einstein(omega_over_kT: float) -> float:
    """Mean occupation ``1/(e^x - 1)`` at ``x = hbar*omega/(k_B T)``."""
    x = float(omega_over_kT)
    if not x > 0:
        raise DomainError(f"hbar*omega/kT must be positive, got {x}")
    return 1.0 / math.expm1(x)
