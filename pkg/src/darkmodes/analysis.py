"""Intensity, bright/dark energy split, and free-space Planck-integral ratios."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .collective import CollectiveBasis, field_correlations, occupation_expectations
from .errors import ConfigurationError, DimensionMismatchError, DomainError
from .hilbert import SystemSpec, annihilation_op, embed

# CODATA 2018 exact/recommended SI values
HBAR = 1.054571817e-34   # J s
K_B = 1.380649e-23       # J / K
C_LIGHT = 2.99792458e8   # m / s

CONSTANTS = {"hbar": HBAR, "k_B": K_B, "c": C_LIGHT}


@dataclass(frozen=True)
class EnergyPartition:
    """Bright and dark energy in units of hbar*omega."""

    bright: float
    dark: float
    total: float

    @property
    def dark_fraction(self) -> float:
        return self.dark / self.total if self.total else 0.0


@dataclass(frozen=True)
class PlanckReport:
    temperature: float
    u_total: float
    u_one: float
    ratio: float
    u_total_quad: float
    u_one_quad: float

    def as_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "u_total": self.u_total,
            "u_one": self.u_one,
            "ratio": self.ratio,
            "u_total_quadrature": self.u_total_quad,
            "u_one_quadrature": self.u_one_quad,
            "u_total_rel_err": abs(self.u_total_quad / self.u_total - 1.0),
            "u_one_rel_err": abs(self.u_one_quad / self.u_one - 1.0),
        }


def _check_signs(signs: Sequence[float], m: int) -> np.ndarray:
    s = np.asarray(signs, dtype=float)
    if s.shape != (m,):
        raise DimensionMismatchError(f"need {m} signs, got shape {s.shape}")
    if not np.all(np.abs(s) == 1.0):
        raise ConfigurationError(f"signs must be +1 or -1, got {s.tolist()}")
    return s


def g1_intensity(rho, signs: Sequence[float], spec: SystemSpec) -> float:
    """First-order correlation ``<E^- E^+>`` with ``E^+ = sum_k s_k a_k``."""
    s = _check_signs(signs, spec.m)
    c = field_correlations(rho, spec)
    return float((s @ c @ s).real)


def intensity_operator(signs: Sequence[float], spec: SystemSpec) -> np.ndarray:
    """Dense ``E^- E^+`` on the full space, for use as a trajectory observable."""
    s = _check_signs(signs, spec.m)
    e_plus = sum(s[k] * embed(annihilation_op(d), k, spec).entries
                 for k, d in enumerate(spec.cutoffs))
    return e_plus.conj().T @ e_plus


def energy_partition(rho, basis: CollectiveBasis, spec: SystemSpec) -> EnergyPartition:
    """Split photon energy into bright-mode and dark-mode parts.

    Requires degenerate modes; with unequal detunings the collective modes are
    not energy eigenmodes and the split is refused.
    """
    detunings = {md.detuning for md in spec.modes}
    if len(detunings) != 1:
        raise ConfigurationError(
            f"energy partition needs degenerate modes, got detunings {sorted(detunings)}")
    occ = occupation_expectations(rho, basis, spec)
    bright = float(occ[0])
    dark = float(occ[1:].sum())
    return EnergyPartition(bright, dark, bright + dark)


def mode_density(omega: float) -> float:
    """Free-space mode density ``omega^2 / (pi^2 c^3)`` in s/m^3."""
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega}")
    return omega**2 / (math.pi**2 * C_LIGHT**3)


def effective_modes(omega: float, linewidth: float) -> float:
    """Modes per unit volume within a linewidth of ``omega``."""
    if not linewidth > 0:
        raise DomainError(f"linewidth must be positive, got {linewidth}")
    return mode_density(omega) * linewidth


def _bose_integrand(x: float, power: int) -> float:
    if x == 0.0:
        return 1.0 if power == 1 else 0.0
    # x^p e^{-x} / (1 - e^{-x}) cannot overflow at large x
    return x**power * math.exp(-x) / -math.expm1(-x)


def _bose_moment(power: int) -> float:
    """``int_0^inf x^p / (e^x - 1) dx`` by adaptive quadrature."""
    val, _ = integrate.quad(_bose_integrand, 0.0, np.inf, args=(power,),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def planck_report(temperature: float) -> PlanckReport:
    """Total Planck energy density against the single-mode-per-frequency density.

    The ratio follows the closed form ``(2/5) (k_B T)^2 / (hbar^2 c^3)``.  Note
    that ``u_total`` is an energy density (J/m^3) while ``u_one`` carries J/s,
    so the ratio is not dimensionless; it is reported as a bare number.
    """
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    kt = K_B * temperature
    u_total = (math.pi**2 / 15.0) * kt**4 / (HBAR**3 * C_LIGHT**3)
    u_one = (math.pi**2 / 6.0) * kt**2 / HBAR
    ratio = 0.4 * kt**2 / (HBAR**2 * C_LIGHT**3)
    u_total_quad = kt**4 / (math.pi**2 * HBAR**3 * C_LIGHT**3) * _bose_moment(3)
    u_one_quad = kt**2 / HBAR * _bose_moment(1)
    return PlanckReport(temperature, u_total, u_one, ratio, u_total_quad, u_one_quad)
