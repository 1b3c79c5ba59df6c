import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from darkmodes import _backend
from darkmodes._sectors import choose_layout, full_layout, respects_sectors, sector_layout
from darkmodes.dynamics import CouplingSchedule, _hamiltonian_sparse, lindblad_rhs
from darkmodes.hilbert import ModeSpec, SystemSpec, occupation_table
from darkmodes.thermal import product_thermal

from conftest import random_density

BACKENDS = ["python"]
try:
    from darkmodes import _kernels  # noqa: F401
    BACKENDS.append("compiled")
except ImportError:
    pass


def random_spec(rng, m):
    cut = [int(rng.integers(2, 4)) for _ in range(m)]
    return SystemSpec(tuple(ModeSpec(c, float(rng.uniform(-0.3, 0.3))) for c in cut),
                      gamma=float(rng.uniform(0.2, 2.0)))


def sector_state(rng, layout):
    flat = np.zeros(layout.n_entries, dtype=complex)
    for blk in layout.blocks(flat):
        s = blk.shape[0]
        a = rng.normal(size=(s, s)) + 1j * rng.normal(size=(s, s))
        blk[...] = a @ a.conj().T
    return flat / sum(np.trace(b).real for b in layout.blocks(flat))


def args(layout, h, gamma):
    hd, hi, hp = layout.permuted_csr(h)
    return (layout.sizes, layout.offsets, layout.starts, layout.n_exc, layout.jump_target,
            hd, hi, hp, gamma)


@pytest.mark.parametrize("backend", BACKENDS)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.booleans())
def test_block_rhs_matches_dense(backend, m, seed, blocked):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, m)
    h = _hamiltonian_sparse(spec, rng.uniform(-1, 1, m))
    if blocked:
        layout = sector_layout(spec)
        flat = sector_state(rng, layout)
        rho = layout.unpack(flat)
    else:
        layout = full_layout(spec)
        rho = random_density(rng, spec.dim)
        flat = layout.pack(rho)
    kern = _backend.get_kernels(backend)
    out = layout.unpack(kern.lindblad_rhs_blocks(flat.copy(), *args(layout, h, spec.gamma)))
    ref = lindblad_rhs(rho, h.toarray(), spec.gamma)
    assert np.max(np.abs(out - ref)) <= 1e-12


@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_compiled_and_python_rk4_agree(m, seed, steps):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, m)
    layout = sector_layout(spec)
    flat = sector_state(rng, layout)
    a = args(layout, _hamiltonian_sparse(spec, rng.uniform(-1, 1, m)), spec.gamma)
    x = flat.copy()
    y = flat.copy()
    _backend.get_kernels("python").rk4_advance(x, *a, 0.01, steps)
    _backend.get_kernels("compiled").rk4_advance(y, *a, 0.01, steps)
    assert np.max(np.abs(x - y)) <= 1e-13


def test_sector_layout_structure():
    spec = SystemSpec.uniform(2, 3)
    layout = sector_layout(spec)
    assert layout.blocked
    assert sorted(layout.perm.tolist()) == list(range(spec.dim))
    assert sum(layout.sizes) == spec.dim
    occ = occupation_table(spec)
    q = occ.sum(axis=1)
    # every block holds a single excitation number
    for st_, s in zip(layout.starts, layout.sizes):
        assert len(set(q[layout.perm[st_:st_ + s]])) == 1


def test_pack_unpack_roundtrip():
    spec = SystemSpec.uniform(2, 3, 0.2)
    rho = product_thermal(spec, warn=False).entries
    layout = choose_layout(spec, rho)
    assert layout.blocked
    assert np.array_equal(layout.unpack(layout.pack(rho)), rho)


def test_coherent_state_falls_back_to_single_block():
    spec = SystemSpec.uniform(1, 3)
    rho = np.full((spec.dim, spec.dim), 1.0 / spec.dim, dtype=complex)
    assert not respects_sectors(spec, rho)
    assert choose_layout(spec, rho).n_blocks == 1


def test_permuted_csr_rejects_block_coupling():
    spec = SystemSpec.uniform(1, 3)
    layout = sector_layout(spec)
    import scipy.sparse as sp
    with pytest.raises(ValueError):
        layout.permuted_csr(sp.csr_matrix(np.ones((spec.dim, spec.dim))))


def test_compiled_kernel_type_checks():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    spec = SystemSpec.uniform(1, 2)
    layout = sector_layout(spec)
    a = args(layout, _hamiltonian_sparse(spec, [0.1]), 1.0)
    with pytest.raises(TypeError):
        _backend.get_kernels("compiled").lindblad_rhs_blocks(np.zeros(layout.n_entries), *a)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get_kernels("fortran")


def test_constant_schedule_helper():
    assert CouplingSchedule.constant([0.1, 0.2]).m == 2
