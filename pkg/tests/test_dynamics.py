import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from darkmodes.collective import CollectiveIndex, build_basis, collective_annihilator, collective_state
from darkmodes.dynamics import (
    CouplingSchedule,
    EvolutionConfig,
    TrajectoryRecord,
    effective_evolve,
    effective_nbar,
    evolve,
    hamiltonian_at,
    interaction_action,
    kappa,
    lindblad_rhs,
    stability_limit,
    standard_observables,
)
from darkmodes.errors import ConfigurationError, DimensionMismatchError, IntegrationError
from darkmodes.hilbert import (
    ATOM,
    DensityMatrix,
    ModeSpec,
    SystemSpec,
    annihilation_op,
    basis_state,
    embed,
    number_op,
    sigma_minus,
    sigma_plus,
)
from darkmodes.thermal import product_thermal

from conftest import random_density


def excited_vacuum(spec):
    psi = basis_state(spec, (0,) * spec.m, atom=1)
    return DensityMatrix.from_state(psi).entries


def dark_projector(spec):
    """|g><g| x |Psi_{0,1}><Psi_{0,1}| for M=2."""
    psi = collective_state(build_basis(2), (0, 1), spec)
    return DensityMatrix.from_state(psi).entries


# --- schedule and config ----------------------------------------------------------

def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        CouplingSchedule((1.0,), ((0.1,),))
    with pytest.raises(ConfigurationError):
        CouplingSchedule((2.0, 1.0), ((0.1,), (0.1,), (0.1,)))
    with pytest.raises(ConfigurationError):
        CouplingSchedule((), ((math.inf,),))
    with pytest.raises(ConfigurationError):
        CouplingSchedule((1.0,), ((0.1, 0.1), (0.1,)))


def test_schedule_lookup_and_digest():
    s = CouplingSchedule((50.0,), ((0.25, 0.25), (-0.25, 0.25)))
    assert s.couplings_at(0.0) == (0.25, 0.25)
    assert s.couplings_at(49.999) == (0.25, 0.25)
    assert s.couplings_at(50.0) == (-0.25, 0.25)
    assert s.digest() == CouplingSchedule((50,), ((0.25, 0.25), (-0.25, 0.25))).digest()
    assert s.digest() != CouplingSchedule.constant((0.25, 0.25)).digest()


def test_config_validation():
    for kw in ({"t_end": 0, "dt": 0.1}, {"t_end": 1, "dt": -1}, {"t_end": 1, "dt": 0.1, "sample_every": 0}):
        with pytest.raises(ConfigurationError):
            EvolutionConfig(**kw)


def test_record_length_invariant():
    with pytest.raises(ConfigurationError):
        TrajectoryRecord(np.arange(3.0), {"x": np.arange(2.0)}, {})


# --- Hamiltonian ------------------------------------------------------------------------

def test_jaynes_cummings():
    spec = SystemSpec.uniform(1, 4)
    g = 0.3
    h = hamiltonian_at(spec, CouplingSchedule.constant((g,)), 0.0).entries
    sp_ = embed(sigma_plus(), ATOM, spec).entries
    a = embed(annihilation_op(4), 0, spec).entries
    assert np.allclose(h, g * (sp_ @ a + sp_.conj().T @ a.conj().T), atol=1e-15)


@pytest.mark.parametrize("m", [2, 3])
def test_equal_couplings_bright_mode(m):
    spec = SystemSpec.uniform(m, 3)
    g = 0.2
    h = hamiltonian_at(spec, CouplingSchedule.constant((g,) * m), 0.0).entries
    a0 = collective_annihilator(build_basis(m), 0, spec).entries
    sp_ = embed(sigma_plus(), ATOM, spec).entries
    expect = g * math.sqrt(m) * (sp_ @ a0 + (sp_ @ a0).conj().T)
    assert np.max(np.abs(h - expect)) <= 1e-10


def test_flipped_coupling_targets_dark_mode():
    spec = SystemSpec.uniform(2, 3)
    g = 0.25
    h = hamiltonian_at(spec, CouplingSchedule((50.0,), ((g, g), (-g, g))), 60.0).entries
    a1 = collective_annihilator(build_basis(2), 1, spec).entries
    sp_ = embed(sigma_plus(), ATOM, spec).entries
    expect = -g * math.sqrt(2) * (sp_ @ a1 + (sp_ @ a1).conj().T)
    assert np.max(np.abs(h - expect)) <= 1e-10


@given(st.integers(1, 3), st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3))
def test_hamiltonian_hermitian(m, gs, deltas):
    spec = SystemSpec(tuple(ModeSpec(3, deltas[j]) for j in range(m)))
    h = hamiltonian_at(spec, CouplingSchedule.constant(gs[:m]), 0.0).entries
    assert np.max(np.abs(h - h.conj().T)) <= 1e-12
    n_exc = embed(np.diag([0.0, 1.0]), ATOM, spec).entries + sum(
        embed(number_op(3), j, spec).entries for j in range(m))
    assert np.max(np.abs(h @ n_exc - n_exc @ h)) <= 1e-12


def test_hamiltonian_errors():
    with pytest.raises(ConfigurationError):
        hamiltonian_at(SystemSpec.uniform(2, 3, atom_included=False), CouplingSchedule.constant((0.1, 0.1)), 0)
    with pytest.raises(ConfigurationError):
        hamiltonian_at(SystemSpec.uniform(2, 3), CouplingSchedule.constant((0.1,)), 0)
    with pytest.raises(ConfigurationError):
        hamiltonian_at(SystemSpec.uniform(1, 3), CouplingSchedule.constant((0.1,)), -1.0)


# --- master equation ---------------------------------------------------------------------

def test_rhs_ground_state_is_stationary():
    spec = SystemSpec.uniform(2, 3)
    h = hamiltonian_at(spec, CouplingSchedule.constant((0.3, -0.2)), 0)
    rho = DensityMatrix.from_state(basis_state(spec, (0, 0))).entries
    assert np.max(np.abs(lindblad_rhs(rho, h, 1.0))) == 0


def test_rhs_pure_decay():
    spec = SystemSpec.uniform(1, 2)
    rho = excited_vacuum(spec)
    ground = DensityMatrix.from_state(basis_state(spec, (0,))).entries
    out = lindblad_rhs(rho, np.zeros_like(rho), 0.7)
    assert np.allclose(out, 0.7 * (ground - rho), atol=0)


def test_rhs_dark_state_inert():
    spec = SystemSpec.uniform(2, 3)
    h = hamiltonian_at(spec, CouplingSchedule.constant((0.1, 0.1)), 0)
    assert np.max(np.abs(lindblad_rhs(dark_projector(spec), h, 1.0))) <= 1e-10


def test_rhs_matches_textbook_form():
    spec = SystemSpec.uniform(2, 2)
    rng = np.random.default_rng(3)
    rho = random_density(rng, spec.dim)
    h = hamiltonian_at(spec, CouplingSchedule.constant((0.3, -0.1)), 0).entries
    sm = embed(sigma_minus(), ATOM, spec).entries
    sp_ = sm.conj().T
    gamma = 0.8
    ref = -1j * (h @ rho - rho @ h) + gamma * (sm @ rho @ sp_ - 0.5 * (sp_ @ sm @ rho + rho @ sp_ @ sm))
    assert np.max(np.abs(lindblad_rhs(rho, h, gamma) - ref)) <= 1e-14


@given(st.integers(1, 2), st.integers(0, 2**32 - 1), st.floats(0.1, 2.0))
def test_rhs_trace_hermiticity_and_bookkeeping(m, seed, gamma):
    rng = np.random.default_rng(seed)
    spec = SystemSpec(tuple(ModeSpec(3, rng.uniform(-0.3, 0.3)) for _ in range(m)), gamma=gamma)
    rho = random_density(rng, spec.dim)
    h = hamiltonian_at(spec, CouplingSchedule.constant(rng.uniform(-1, 1, m)), 0)
    out = lindblad_rhs(rho, h, gamma)
    assert abs(np.trace(out)) <= 1e-10
    assert np.max(np.abs(out - out.conj().T)) <= 1e-10
    pe = embed(np.diag([0.0, 1.0]), ATOM, spec).entries
    n_exc = pe + sum(embed(number_op(3), j, spec).entries for j in range(m))
    # quanta only leave through the atom
    lhs = np.trace(n_exc @ out).real
    assert lhs == pytest.approx(-gamma * np.trace(pe @ rho).real, abs=1e-10)


def test_rhs_dimension_errors():
    with pytest.raises(DimensionMismatchError):
        lindblad_rhs(np.eye(4) / 4, np.eye(6), 1.0)
    with pytest.raises(DimensionMismatchError):
        lindblad_rhs(np.eye(3) / 3, np.eye(3), 1.0)


# --- analytic pieces ------------------------------------------------------------------------

def test_kappa():
    assert kappa(1, 0.1, 1.0) == pytest.approx(0.04)
    assert kappa(2, 0.25, 1.0) == pytest.approx(0.5)
    assert kappa(6, 0.1, 1.0) == pytest.approx(3 * kappa(2, 0.1, 1.0))
    with pytest.raises(ConfigurationError):
        kappa(2, 0.1, 0.0)


def test_effective_nbar():
    assert effective_nbar(0.0, 3, 0.3, 0.1) == pytest.approx(0.3)
    assert effective_nbar(1e4, 100, 1.0, 1.0) == pytest.approx(0.99)
    assert effective_nbar(2.0, 1, 0.5, 0.3) == pytest.approx(0.5 * math.exp(-0.6))


def test_effective_evolve_matches_closed_form():
    m, g = 3, 0.1
    k = kappa(m, g, 1.0)
    rec = effective_evolve(0.3, m, g, 1.0, EvolutionConfig(40.0, 0.01, 10))
    expect = np.array([effective_nbar(t, m, 0.3, k) for t in rec.times])
    assert np.max(np.abs(rec["nbar"] - expect)) <= 1e-4
    assert rec.times[-1] == pytest.approx(40.0)


def test_effective_evolve_single_mode_decay():
    rec = effective_evolve(0.2, 1, 0.1, 1.0, EvolutionConfig(25.0, 0.01, 50))
    assert np.allclose(rec["nbar"], 0.2 * np.exp(-0.04 * rec.times), atol=1e-6)


@pytest.mark.parametrize("m,occ,amp,result", [
    (2, (2, 0), 2.0, (1, 0)),
    (3, (1, 1, 1), math.sqrt(3), (0, 1, 1)),
    (3, (0, 2, 0), 0.0, (0, 2, 0)),
])
def test_interaction_action(m, occ, amp, result):
    spec = SystemSpec.uniform(m, 4)
    basis = build_basis(m)
    a, idx = interaction_action(occ, spec, basis)
    assert a == pytest.approx(amp, abs=1e-15)
    assert idx.occupations == result
    # oracle: apply H with unit couplings to |Psi>|g> and compare
    h = hamiltonian_at(spec, CouplingSchedule.constant((1.0,) * m), 0).entries
    out = h @ collective_state(basis, CollectiveIndex(occ), spec).entries
    assert np.linalg.norm(out) == pytest.approx(amp, abs=1e-10)
    if amp:
        target = embed(sigma_plus(), ATOM, spec).entries @ collective_state(basis, idx, spec).entries
        assert np.allclose(out, amp * target, atol=1e-10)


# --- evolution ----------------------------------------------------------------------------

def dense_rk4(rho, h, gamma, dt, steps):
    for _ in range(steps):
        k1 = lindblad_rhs(rho, h, gamma)
        k2 = lindblad_rhs(rho + 0.5 * dt * k1, h, gamma)
        k3 = lindblad_rhs(rho + 0.5 * dt * k2, h, gamma)
        k4 = lindblad_rhs(rho + dt * k3, h, gamma)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
    return rho


@pytest.mark.parametrize("backend", ["python", "compiled"])
@pytest.mark.parametrize("coherent", [False, True])
def test_evolve_matches_dense_reference(backend, coherent):
    if backend == "compiled":
        pytest.importorskip("darkmodes._kernels")
    spec = SystemSpec((ModeSpec(3, 0.05, 0.2), ModeSpec(3, -0.1, 0.1)), gamma=1.0)
    sched = CouplingSchedule((1.0,), ((0.3, 0.2), (-0.3, 0.2)))
    rho0 = product_thermal(spec, warn=False).entries
    if coherent:
        # couple excitation sectors so the single-block layout is used
        psi = (basis_state(spec, (0, 0)).entries + basis_state(spec, (1, 0)).entries) / math.sqrt(2)
        rho0 = 0.5 * rho0 + 0.5 * np.outer(psi, psi.conj())
    dt = 0.01
    rec = evolve(spec, sched, rho0, EvolutionConfig(2.0, dt, 50), backend=backend)
    h1 = hamiltonian_at(spec, sched, 0).entries
    h2 = hamiltonian_at(spec, sched, 1.5).entries
    ref = dense_rk4(dense_rk4(rho0, h1, 1.0, dt, 100), h2, 1.0, dt, 100)
    assert rec.metadata["sector_blocked"] is (not coherent)
    assert np.max(np.abs(rec.final_state.entries - ref)) <= 1e-12


def test_backends_agree_on_observables():
    pytest.importorskip("darkmodes._kernels")
    spec = SystemSpec.uniform(3, 3, 0.1, detunings=[0.0, 0.05, -0.05])
    sched = CouplingSchedule.constant((0.2, 0.2, 0.2))
    cfg = EvolutionConfig(5.0, 0.01, 100, standard_observables(spec))
    rho0 = product_thermal(spec, warn=False)
    a = evolve(spec, sched, rho0, cfg, backend="python")
    b = evolve(spec, sched, rho0, cfg, backend="compiled")
    for name in a.values:
        assert np.max(np.abs(a[name] - b[name])) <= 1e-13


def test_single_photon_exact_solution():
    # |g,1> couples only to |e,0>, whose decay lands in the dark |g,0>
    g = 0.1
    spec = SystemSpec.uniform(1, 3)
    rho0 = DensityMatrix.from_state(basis_state(spec, (1,)))
    rec = evolve(spec, CouplingSchedule.constant((g,)), rho0,
                 EvolutionConfig(30.0, 0.01, 50, standard_observables(spec)))
    disc = math.sqrt(1 / 16 - g * g)
    lp, lm = -0.25 + disc, -0.25 - disc
    amp = (lm * np.exp(lp * rec.times) - lp * np.exp(lm * rec.times)) / (lm - lp)
    assert np.max(np.abs(rec["nbar_total"] - amp**2)) <= 1e-9


def test_sampling_times():
    spec = SystemSpec.uniform(1, 3, 0.1)
    rec = evolve(spec, CouplingSchedule.constant((0.1,)), product_thermal(spec, warn=False),
                 EvolutionConfig(1.05, 0.01, 20, standard_observables(spec)))
    assert rec.times[0] == 0.0
    assert rec.times[-1] == pytest.approx(1.05)
    assert np.allclose(np.diff(rec.times[:-1]), 0.2)
    assert len(rec.times) == len(rec["pe"]) == len(rec.diagnostics["trace_error"])


def test_dark_sector_frozen():
    spec = SystemSpec.uniform(3, 5, 0.1)
    rec = evolve(spec, CouplingSchedule.constant((0.2,) * 3), product_thermal(spec, warn=False),
                 EvolutionConfig(30.0, 0.01, 100, standard_observables(spec)))
    for mu in (1, 2):
        series = rec[f"n_coll_{mu}"]
        assert np.max(np.abs(series - series[0])) <= 1e-4
    assert rec["n_coll_0"][-1] < 0.5 * rec["n_coll_0"][0]


def test_stability_guard():
    spec = SystemSpec.uniform(5, 2)
    sched = CouplingSchedule.constant((1 / 3,) * 5)
    assert stability_limit(spec, sched) == pytest.approx(0.006)
    rho0 = product_thermal(spec, warn=False)
    evolve(spec, sched, rho0, EvolutionConfig(0.006, 0.006))
    with pytest.raises(ConfigurationError):
        evolve(spec, sched, rho0, EvolutionConfig(0.1, 0.0061))


def test_breakpoint_snapping_warns():
    spec = SystemSpec.uniform(1, 2)
    sched = CouplingSchedule((0.105,), ((0.1,), (-0.1,)))
    with pytest.warns(RuntimeWarning, match="snapped"):
        evolve(spec, sched, product_thermal(spec, warn=False), EvolutionConfig(0.2, 0.01))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evolve(spec, CouplingSchedule((0.1,), ((0.1,), (-0.1,))), product_thermal(spec, warn=False),
               EvolutionConfig(0.2, 0.01))


def test_invariant_violation_carries_time():
    spec = SystemSpec.uniform(1, 2)
    bad = np.diag([1.2, -0.2, 0.0, 0.0]).astype(complex)
    with pytest.raises(IntegrationError) as info:
        evolve(spec, CouplingSchedule.constant((0.1,)), bad, EvolutionConfig(1.0, 0.01))
    assert info.value.time == 0.0
    assert info.value.partial is not None
    assert len(info.value.partial.times) == 0


def test_evolve_errors():
    spec = SystemSpec.uniform(1, 2)
    with pytest.raises(DimensionMismatchError):
        evolve(spec, CouplingSchedule.constant((0.1,)), np.eye(2) / 2, EvolutionConfig(1.0, 0.01))
    with pytest.raises(ConfigurationError):
        evolve(spec, CouplingSchedule.constant((0.1,)), product_thermal(spec, warn=False),
               EvolutionConfig(1.0, 0.01, observables={"x": np.triu(np.ones((4, 4)))}))


def test_final_state_is_density_matrix():
    spec = SystemSpec.uniform(2, 3, 0.1)
    rec = evolve(spec, CouplingSchedule.constant((0.2, 0.2)), product_thermal(spec, warn=False),
                 EvolutionConfig(3.0, 0.01))
    DensityMatrix(rec.final_state.entries).check_positive()
    assert np.max(rec.diagnostics["trace_error"]) <= 1e-7
