"""Atom-field master-equation dynamics.

The full model is an atom (decay rate ``gamma``) coupled to M bosonic modes,

    H(t) = sum_j delta_j a_j^dag a_j + sum_k g_k(t) (sigma_+ a_k + sigma_- a_k^dag),
    drho/dt = -i [H, rho] + gamma (sigma_- rho sigma_+ - 1/2 {sigma_+ sigma_-, rho}),

written in the frame rotating at the atomic frequency, with time measured in
units of 1/gamma when ``gamma = 1``.  Couplings are piecewise constant in time
(``CouplingSchedule``).  Integration is fixed-step classical RK4 on the block
layout of ``darkmodes._sectors``; the inner loop runs in the compiled kernel
when it is available.
"""
from __future__ import annotations

import bisect
import hashlib
import json
import logging
import math
import time as _time
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import _backend
from ._sectors import choose_layout
from .collective import CollectiveBasis, CollectiveIndex, build_basis
from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    IntegrationError,
)
from .hilbert import (
    ATOM,
    DensityMatrix,
    Operator,
    SystemSpec,
    annihilation_op,
    as_matrix,
    default_cutoff,
    embed_sparse,
    sigma_plus,
)
from .thermal import ThermalSpec, thermal_dm

log = logging.getLogger(__name__)

# relative slack on the dt guard so that dt = 0.01/x passes despite rounding
_GUARD_SLACK = 1e-9


@dataclass(frozen=True)
class CouplingSchedule:
    """Piecewise-constant signed couplings ``g_k(t)``.

    ``segments[i]`` holds the M couplings active on
    ``[breakpoints[i-1], breakpoints[i])``; the last segment runs to infinity.
    """

    breakpoints: tuple[float, ...]
    segments: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        segs = tuple(tuple(float(g) for g in seg) for seg in self.segments)
        if len(segs) != len(bps) + 1:
            raise ConfigurationError(
                f"{len(bps)} breakpoints need {len(bps) + 1} segments, got {len(segs)}")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ConfigurationError(f"breakpoints must be strictly ascending: {bps}")
        if any(b < 0 for b in bps):
            raise ConfigurationError("breakpoints must be >= 0")
        widths = {len(s) for s in segs}
        if len(widths) != 1:
            raise ConfigurationError("every segment needs the same number of couplings")
        if not all(math.isfinite(g) for s in segs for g in s):
            raise ConfigurationError("couplings must be finite")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, couplings: Sequence[float]) -> "CouplingSchedule":
        return cls((), (tuple(couplings),))

    @property
    def m(self) -> int:
        return len(self.segments[0])

    @property
    def max_abs_coupling(self) -> float:
        return max(abs(g) for s in self.segments for g in s)

    def segment_index(self, t: float) -> int:
        return bisect.bisect_right(self.breakpoints, t)

    def couplings_at(self, t: float) -> tuple[float, ...]:
        return self.segments[self.segment_index(t)]

    def digest(self) -> str:
        payload = json.dumps({"breakpoints": self.breakpoints, "segments": self.segments})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EvolutionConfig:
    t_end: float
    dt: float
    sample_every: int = 100
    observables: Mapping[str, object] = field(default_factory=dict)
    trace_tol: float = 1e-7
    hermiticity_tol: float = 1e-10
    eigenvalue_tol: float = 1e-8

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ConfigurationError(f"sample_every must be an integer >= 1, got {self.sample_every}")
        object.__setattr__(self, "observables", dict(self.observables))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    values: dict[str, np.ndarray]
    metadata: dict
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    final_state: DensityMatrix | None = None

    def __post_init__(self):
        n = len(self.times)
        for name, series in {**self.values, **self.diagnostics}.items():
            if len(series) != n:
                raise ConfigurationError(f"series {name!r} has {len(series)} samples, expected {n}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def at(self, name: str, t: float) -> float:
        """Value of ``name`` at the sample closest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[name][i])


def stability_limit(spec: SystemSpec, schedule: CouplingSchedule) -> float:
    """Largest ``dt`` accepted by the step-size guard."""
    rate = max(spec.gamma, spec.m * schedule.max_abs_coupling,
               max(abs(md.detuning) for md in spec.modes))
    return 0.01 / rate


def _check_schedule(spec: SystemSpec, schedule: CouplingSchedule) -> None:
    if not spec.atom_included:
        raise ConfigurationError("the atom-field Hamiltonian needs the atom in the system")
    if schedule.m != spec.m:
        raise ConfigurationError(f"schedule has {schedule.m} couplings, system has M={spec.m}")


def _hamiltonian_sparse(spec: SystemSpec, couplings: Sequence[float]) -> sp.csr_matrix:
    h = sp.csr_matrix((spec.dim, spec.dim), dtype=complex)
    sp_ = sigma_plus().entries
    for j, md in enumerate(spec.modes):
        a = annihilation_op(md.cutoff).entries
        if md.detuning != 0.0:
            h = h + md.detuning * embed_sparse({j: a.T @ a}, spec)
        g = couplings[j]
        if g != 0.0:
            term = embed_sparse({ATOM: sp_, j: a}, spec)
            h = h + g * (term + term.conj().T)
    return sp.csr_matrix(h)


def hamiltonian_at(spec: SystemSpec, schedule: CouplingSchedule, t: float) -> Operator:
    """Atom-field Hamiltonian for the coupling segment active at time ``t``."""
    _check_schedule(spec, schedule)
    if t < 0:
        raise ConfigurationError(f"time must be >= 0, got {t}")
    h = _hamiltonian_sparse(spec, schedule.couplings_at(t)).toarray()
    return Operator(h, f"H(t={t:g})")


def lindblad_rhs(rho, h, gamma: float) -> np.ndarray:
    """Dense right-hand side ``-i[H, rho] + gamma D[sigma_-] rho``.

    The atom is the leading tensor factor, so ``sigma_-`` maps the upper half
    of the basis (atom excited) onto the lower half (atom in ground state).
    """
    r = as_matrix(rho)
    hm = as_matrix(h)
    if r.shape != hm.shape:
        raise DimensionMismatchError(f"rho is {r.shape}, H is {hm.shape}")
    dim = r.shape[0]
    if dim % 2:
        raise DimensionMismatchError("no atom factor: dimension is odd")
    half = dim // 2
    out = -1j * (hm @ r - r @ hm)
    # sigma_- rho sigma_+ puts rho_ee into the gg block
    out[:half, :half] += gamma * r[half:, half:]
    # -1/2 {P_e, rho}
    out[half:, :] -= 0.5 * gamma * r[half:, :]
    out[:, half:] -= 0.5 * gamma * r[:, half:]
    return out


def kappa(m: int, g: float, gamma: float) -> float:
    """Bright-mode decay rate ``4 M g^2 / gamma`` after eliminating the atom."""
    if not gamma > 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    return 4.0 * m * g * g / gamma


def effective_nbar(t: float, m: int, nbar0: float, kappa: float) -> float:
    """Total photon number when only the bright mode decays.

    ``nbar0`` is the total over all M modes; a fraction 1/M sits in the bright
    mode and decays at ``kappa``, the rest is frozen in the dark modes.
    """
    if t < 0:
        raise ConfigurationError(f"time must be >= 0, got {t}")
    return nbar0 * math.exp(-kappa * t) / m + nbar0 * (m - 1) / m


def interaction_action(index: CollectiveIndex | Sequence[int], spec: SystemSpec,
                       basis: CollectiveBasis) -> tuple[float, CollectiveIndex]:
    """Action of equal-coupling ``H`` on ``|Psi^N_{n0,...}>|g>``, per unit ``g``.

    Returns ``(sqrt(M n0), index with n0 - 1)``; the atom ends up in ``|e>``.
    A dark index (``n0 = 0``) gives amplitude 0 and is returned unchanged.
    """
    if not isinstance(index, CollectiveIndex):
        index = CollectiveIndex(tuple(index))
    if len(index) != spec.m or basis.m != spec.m:
        raise ConfigurationError("index, basis and system must agree on M")
    n0 = index.n0
    if n0 == 0:
        return 0.0, index
    occ = (n0 - 1,) + index.occupations[1:]
    return math.sqrt(spec.m * n0), CollectiveIndex(occ)


# --- evolution ------------------------------------------------------------------

def _snap(t: float, dt: float, what: str) -> int:
    steps = int(round(t / dt))
    if abs(steps * dt - t) > 1e-9 * max(dt, abs(t)):
        warnings.warn(f"{what} {t!r} is not a multiple of dt={dt!r}; snapped to {steps * dt!r}",
                      RuntimeWarning, stacklevel=3)
    return steps


def _observable_rows(observables: Mapping[str, object], layout, dim: int):
    names = list(observables)
    rows_idx = layout.flat_index // dim
    cols_idx = layout.flat_index % dim
    mat = np.empty((len(names), layout.n_entries), dtype=complex)
    for k, name in enumerate(names):
        op = observables[name]
        if isinstance(op, Operator):
            op = op.entries
        if sp.issparse(op):
            op = sp.csr_matrix(op)
            if op.shape != (dim, dim):
                raise DimensionMismatchError(f"observable {name!r} has shape {op.shape}")
            if abs(op - op.conj().T).max() > 1e-12:
                raise ConfigurationError(f"observable {name!r} is not Hermitian")
            # Tr(rho O) = sum_ij rho_ij O_ji
            mat[k] = np.asarray(op[cols_idx, rows_idx]).ravel()
        else:
            op = np.asarray(op, dtype=complex)
            if op.shape != (dim, dim):
                raise DimensionMismatchError(f"observable {name!r} has shape {op.shape}")
            if np.max(np.abs(op - op.conj().T), initial=0.0) > 1e-12:
                raise ConfigurationError(f"observable {name!r} is not Hermitian")
            mat[k] = op[cols_idx, rows_idx]
    return names, mat


def evolve(spec: SystemSpec, schedule: CouplingSchedule, initial, config: EvolutionConfig,
           backend: str | None = None) -> TrajectoryRecord:
    """Integrate the full master equation and sample ``config.observables``.

    Observables are recorded at t = 0, every ``config.sample_every`` steps and
    at the final step.  Each sample also records the trace error, the
    Hermiticity error and the smallest eigenvalue of the state; exceeding the
    tolerances in ``config`` raises IntegrationError.

    ``backend`` selects "compiled" or "python" kernels; default is whichever
    is available.
    """
    _check_schedule(spec, schedule)
    rho0 = as_matrix(initial)
    if rho0.shape != (spec.dim, spec.dim):
        raise DimensionMismatchError(f"initial state is {rho0.shape}, system dimension is {spec.dim}")
    limit = stability_limit(spec, schedule)
    if config.dt > limit * (1 + _GUARD_SLACK):
        raise ConfigurationError(f"dt={config.dt} exceeds the stability guard {limit:.6g}")

    kern = _backend.get_kernels(backend)
    dt = config.dt
    n_steps = _snap(config.t_end, dt, "t_end")
    if n_steps < 1:
        raise ConfigurationError("t_end is shorter than one step")
    bp_steps = [_snap(b, dt, "breakpoint") for b in schedule.breakpoints]

    layout = choose_layout(spec, rho0)
    hams = []
    for seg in schedule.segments:
        hams.append(layout.permuted_csr(_hamiltonian_sparse(spec, seg)))
    names, obs_mat = _observable_rows(config.observables, layout, spec.dim)
    rho = layout.pack(rho0).astype(complex)
    lay = (layout.sizes, layout.offsets, layout.starts, layout.n_exc, layout.jump_target)

    times, samples = [], []
    trace_err, herm_err, min_eig = [], [], []

    def record(step):
        t = round(step * dt, 12)
        vals = obs_mat @ rho
        tr = 0.0
        herm = 0.0
        lam = math.inf
        for blk in layout.blocks(rho):
            tr += float(np.trace(blk).real)
            herm = max(herm, float(np.max(np.abs(blk - blk.conj().T), initial=0.0)))
            lam = min(lam, float(np.linalg.eigvalsh(blk)[0]))
        if not np.all(np.isfinite(rho)):
            raise IntegrationError("state became non-finite", t)
        if abs(tr - 1.0) > config.trace_tol:
            raise IntegrationError(f"trace drifted to {tr!r}", t)
        if herm > config.hermiticity_tol:
            raise IntegrationError(f"Hermiticity error {herm:.3g}", t)
        if lam < -config.eigenvalue_tol:
            raise IntegrationError(f"negative eigenvalue {lam:.3g}", t)
        if vals.size and np.max(np.abs(vals.imag)) > 1e-8:
            raise IntegrationError(f"observable imaginary part {np.max(np.abs(vals.imag)):.3g}", t)
        times.append(t)
        samples.append(vals.real.copy())
        trace_err.append(abs(tr - 1.0))
        herm_err.append(herm)
        min_eig.append(lam)

    def build(elapsed, final=None):
        values = {name: np.array([s[k] for s in samples]) for k, name in enumerate(names)}
        metadata = {
            "m": spec.m,
            "gamma": spec.gamma,
            "cutoffs": list(spec.cutoffs),
            "detunings": [md.detuning for md in spec.modes],
            "nbar": [md.nbar for md in spec.modes],
            "breakpoints": list(schedule.breakpoints),
            "segments": [list(s) for s in schedule.segments],
            "schedule_digest": schedule.digest(),
            "dt": dt,
            "steps": n_steps,
            "blocks": layout.n_blocks,
            "sector_blocked": layout.blocked,
            "backend": backend or _backend.BACKEND,
            "wall_seconds": elapsed,
        }
        diagnostics = {
            "trace_error": np.array(trace_err),
            "hermiticity_error": np.array(herm_err),
            "min_eigenvalue": np.array(min_eig),
        }
        return TrajectoryRecord(np.array(times), values, metadata, diagnostics, final)

    started = _time.perf_counter()
    try:
        _run(record, kern, rho, lay, hams, bp_steps, n_steps, config.sample_every, spec.gamma, dt)
    except IntegrationError as err:
        err.partial = build(_time.perf_counter() - started)
        raise
    elapsed = _time.perf_counter() - started
    log.debug("evolve: %d steps on %d blocks in %.2fs (%s)", n_steps, layout.n_blocks,
              elapsed, _backend.BACKEND if backend is None else backend)
    return build(elapsed, DensityMatrix(layout.unpack(rho), validate=False))


def _run(record, kern, rho, lay, hams, bp_steps, n_steps, sample_every, gamma, dt):
    record(0)
    step = 0
    while step < n_steps:
        seg = bisect.bisect_right(bp_steps, step)
        nxt = min((step // sample_every + 1) * sample_every, n_steps)
        if seg < len(bp_steps):
            nxt = min(nxt, bp_steps[seg])
        h_data, h_idx, h_ptr = hams[seg]
        kern.rk4_advance(rho, *lay, h_data, h_idx, h_ptr, gamma, dt, nxt - step)
        step = nxt
        if step % sample_every == 0 or step == n_steps:
            record(step)


def standard_observables(spec: SystemSpec, basis: CollectiveBasis | None = None,
                         signs: Sequence[float] | None = None) -> dict[str, sp.csr_matrix]:
    """Sparse observables used by the scenario presets.

    ``n_mode_k`` bare occupations, ``n_coll_mu`` collective occupations (equal
    cutoffs only), ``nbar_total``, ``pe`` (atomic excited population) and
    ``g1_intensity`` with the given coupling signs (uniform by default).
    """
    obs: dict[str, sp.csr_matrix] = {}
    lowers = [embed_sparse({j: annihilation_op(d).entries}, spec) for j, d in enumerate(spec.cutoffs)]
    total = sp.csr_matrix((spec.dim, spec.dim), dtype=complex)
    for j, a in enumerate(lowers):
        n = sp.csr_matrix(a.conj().T @ a)
        obs[f"n_mode_{j}"] = n
        total = total + n
    obs["nbar_total"] = sp.csr_matrix(total)
    if spec.atom_included:
        obs["pe"] = embed_sparse({ATOM: np.diag([0.0, 1.0])}, spec)
    if len(set(spec.cutoffs)) == 1:
        basis = basis or build_basis(spec.m)
        for mu in range(spec.m):
            amu = sum(basis.u[mu, j] * lowers[j] for j in range(spec.m))
            obs[f"n_coll_{mu}"] = sp.csr_matrix(amu.conj().T @ amu)
    s = np.ones(spec.m) if signs is None else np.asarray(signs, dtype=float)
    e_plus = sum(s[k] * lowers[k] for k in range(spec.m))
    obs["g1_intensity"] = sp.csr_matrix(e_plus.conj().T @ e_plus)
    return obs


# --- effective radiation-only dynamics --------------------------------------------

def _effective_rhs(rho, a, n_op, rate):
    return rate * (a @ rho @ a.conj().T - 0.5 * (n_op @ rho + rho @ n_op))


def effective_evolve(nbar0: float, m: int, g: float, gamma: float,
                     config: EvolutionConfig, cutoff: int | None = None) -> TrajectoryRecord:
    """Bright-mode-only dynamics with decay rate ``kappa = 4 M g^2 / gamma``.

    The bright mode starts thermal with mean ``nbar0 / m`` and is integrated
    with RK4; the dark population ``(m - 1)/m * nbar0`` is frozen and added
    back.  Records ``nbar_bright``, ``nbar`` and ``nbar_norm``.
    """
    if m < 1:
        raise ConfigurationError(f"need m >= 1, got {m}")
    if not g < gamma:
        log.info("effective dynamics assumes g << gamma; got g/gamma = %.3g", g / gamma)
    rate = kappa(m, g, gamma)
    nb = nbar0 / m
    d = cutoff or max(default_cutoff(nb, 1e-12), 3)
    rho = thermal_dm(ThermalSpec(nb, d), warn=False).entries.copy()
    a = annihilation_op(d).entries
    n_op = a.conj().T @ a
    dt = config.dt
    limit = 0.01 / max(gamma, m * abs(g), rate)
    if dt > limit * (1 + _GUARD_SLACK):
        raise ConfigurationError(f"dt={dt} exceeds the stability guard {limit:.6g}")
    n_steps = _snap(config.t_end, dt, "t_end")
    dark = nbar0 * (m - 1) / m
    times, bright = [], []

    def record(step):
        times.append(round(step * dt, 12))
        bright.append(float(np.trace(n_op @ rho).real))

    record(0)
    for step in range(1, n_steps + 1):
        k1 = _effective_rhs(rho, a, n_op, rate)
        k2 = _effective_rhs(rho + 0.5 * dt * k1, a, n_op, rate)
        k3 = _effective_rhs(rho + 0.5 * dt * k2, a, n_op, rate)
        k4 = _effective_rhs(rho + dt * k3, a, n_op, rate)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        if step % config.sample_every == 0 or step == n_steps:
            record(step)
    bright_arr = np.array(bright)
    total = bright_arr + dark
    values = {"nbar_bright": bright_arr, "nbar": total, "nbar_norm": total / total[0]}
    metadata = {"m": m, "g": g, "gamma": gamma, "kappa": rate, "cutoff": d,
                "dt": dt, "steps": n_steps, "nbar0": nbar0}
    return TrajectoryRecord(np.array(times), values, metadata, {},
                            DensityMatrix(rho, validate=False))
