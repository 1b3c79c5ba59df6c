"""Block layout of the density matrix by total excitation number.

The atom-field Hamiltonian conserves ``q = sigma_+ sigma_- + sum_k a_k^dag a_k``
and the atomic jump lowers ``q`` by one.  A state with no coherence between
different ``q`` keeps that property, so only the diagonal blocks need to be
propagated.

Within a block the ground-atom states come first and the excited-atom states
last, each sorted by field index.  The decay image ``|e, f> -> |g, f>`` of the
excited tail of block ``q`` is then exactly the head of block ``q - 1``, in
the same order; the kernels rely on this.

When the initial state does carry inter-sector coherence the layout falls
back to one block spanning the whole space in natural order (ground half,
then excited half), which satisfies the same head/tail convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hilbert import SystemSpec, occupation_table


@dataclass(frozen=True, eq=False)
class SectorLayout:
    dim: int
    perm: np.ndarray          # natural index of each permuted position
    sizes: np.ndarray         # block sizes
    offsets: np.ndarray       # block offsets into the flat state
    starts: np.ndarray        # first permuted index of each block
    n_exc: np.ndarray         # excited-atom states at the tail of each block
    jump_target: np.ndarray   # block receiving the decay image, or -1
    flat_index: np.ndarray    # natural flat index (row*dim + col) of every stored entry
    blocked: bool

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def n_entries(self) -> int:
        return int(self.flat_index.shape[0])

    def pack(self, rho: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(rho.ravel()[self.flat_index])

    def unpack(self, flat: np.ndarray) -> np.ndarray:
        full = np.zeros(self.dim * self.dim, dtype=complex)
        full[self.flat_index] = flat
        return full.reshape(self.dim, self.dim)

    def blocks(self, flat: np.ndarray):
        for s, off in zip(self.sizes, self.offsets):
            yield flat[off:off + s * s].reshape(s, s)

    def permuted_csr(self, h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR arrays of ``h`` in permuted order, restricted to the diagonal blocks.

        Raises ValueError if ``h`` couples different blocks.
        """
        hs = sp.csr_matrix(h)
        hp = hs[self.perm][:, self.perm].tocoo()
        block_of = np.repeat(np.arange(self.n_blocks), self.sizes)
        inside = block_of[hp.row] == block_of[hp.col]
        if np.any(np.abs(hp.data[~inside]) > 0):
            raise ValueError("operator couples different excitation sectors")
        kept = sp.csr_matrix((hp.data[inside], (hp.row[inside], hp.col[inside])),
                             shape=hp.shape)
        kept.sort_indices()
        return (np.ascontiguousarray(kept.data, dtype=complex),
                np.ascontiguousarray(kept.indices, dtype=np.int64),
                np.ascontiguousarray(kept.indptr, dtype=np.int64))


def _finish(dim, groups, n_exc, jump_target, blocked) -> SectorLayout:
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes**2)[:-1]]).astype(np.int64)
    perm = np.concatenate(groups).astype(np.int64)
    flat = np.concatenate([(g[:, None] * dim + g[None, :]).ravel() for g in groups])
    return SectorLayout(dim, perm, sizes, offsets, starts,
                        np.asarray(n_exc, dtype=np.int64),
                        np.asarray(jump_target, dtype=np.int64),
                        flat.astype(np.int64), blocked)


def full_layout(spec: SystemSpec) -> SectorLayout:
    dim = spec.dim
    half = dim // 2
    return _finish(dim, [np.arange(dim)], [half], [0], False)


def sector_layout(spec: SystemSpec) -> SectorLayout:
    digits = occupation_table(spec)
    atom = digits[:, 0]
    photons = digits[:, 1:].sum(axis=1)
    q = atom + photons
    groups, n_exc, targets = [], [], []
    for level in range(int(q.max()) + 1):
        ground = np.flatnonzero((q == level) & (atom == 0))
        excited = np.flatnonzero((q == level) & (atom == 1))
        groups.append(np.concatenate([ground, excited]))
        n_exc.append(len(excited))
        targets.append(level - 1 if len(excited) else -1)
    return _finish(spec.dim, groups, n_exc, targets, True)


def respects_sectors(spec: SystemSpec, rho: np.ndarray, tol: float = 1e-14) -> bool:
    """True if ``rho`` has no coherence between different excitation numbers."""
    digits = occupation_table(spec)
    q = digits.sum(axis=1)
    mask = q[:, None] != q[None, :]
    return not np.any(np.abs(rho[mask]) > tol)


def choose_layout(spec: SystemSpec, rho: np.ndarray) -> SectorLayout:
    if respects_sectors(spec, rho):
        return sector_layout(spec)
    return full_layout(spec)
