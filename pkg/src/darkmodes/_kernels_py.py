"""Pure-Python (numpy/scipy) implementation of the block Lindblad kernel.

Same signatures and numerics as the compiled ``_kernels`` module; used when
the extension is unavailable or ``DARKMODES_PURE_PYTHON`` is set.

State layout: blocks stored row-major, concatenated, as described in
``darkmodes._sectors``.  The only jump operator is the atomic lowering
``sqrt(gamma) sigma_-``, which maps the excited tail of a block onto the head
of its ``jump_target`` block.
"""
import numpy as np
import scipy.sparse as sp


def _block_matrices(sizes, starts, h_data, h_indices, h_indptr):
    dim = int(sizes.sum())
    h = sp.csr_matrix((h_data, h_indices, h_indptr), shape=(dim, dim))
    return [h[st:st + s, st:st + s].tocsr() for s, st in zip(sizes, starts)]


def _rhs_blocks(rho, out, sizes, offsets, n_exc, jump_target, hblocks, gamma):
    for b, (s, off) in enumerate(zip(sizes, offsets)):
        r = rho[off:off + s * s].reshape(s, s)
        x = hblocks[b] @ r
        o = -1j * (x - x.conj().T)
        ne = n_exc[b]
        if ne:
            # -gamma/2 {P_e, rho}; P_e is 1 on the excited tail
            o[s - ne:, :] -= 0.5 * gamma * r[s - ne:, :]
            o[:, s - ne:] -= 0.5 * gamma * r[:, s - ne:]
        out[off:off + s * s] = o.ravel()
    for b, (s, off) in enumerate(zip(sizes, offsets)):
        t = jump_target[b]
        ne = n_exc[b]
        if t < 0 or ne == 0:
            continue
        r = rho[off:off + s * s].reshape(s, s)
        st = sizes[t]
        tgt = out[offsets[t]:offsets[t] + st * st].reshape(st, st)
        tgt[:ne, :ne] += gamma * r[s - ne:, s - ne:]


def lindblad_rhs_blocks(rho, sizes, offsets, starts, n_exc, jump_target,
                        h_data, h_indices, h_indptr, gamma):
    """Right-hand side of the master equation for a packed block state."""
    hblocks = _block_matrices(sizes, starts, h_data, h_indices, h_indptr)
    out = np.empty_like(rho)
    _rhs_blocks(rho, out, sizes, offsets, n_exc, jump_target, hblocks, gamma)
    return out


def _hermitize(rho, sizes, offsets):
    for s, off in zip(sizes, offsets):
        r = rho[off:off + s * s].reshape(s, s)
        r[...] = 0.5 * (r + r.conj().T)


def rk4_advance(rho, sizes, offsets, starts, n_exc, jump_target,
                h_data, h_indices, h_indptr, gamma, dt, n_steps):
    """Advance ``rho`` in place by ``n_steps`` classical RK4 steps of size ``dt``.

    The state is re-Hermitized after every step.
    """
    hblocks = _block_matrices(sizes, starts, h_data, h_indices, h_indptr)
    k = np.empty_like(rho)
    acc = np.empty_like(rho)
    tmp = np.empty_like(rho)
    half = 0.5 * dt
    args = (sizes, offsets, n_exc, jump_target, hblocks, gamma)
    for _ in range(int(n_steps)):
        _rhs_blocks(rho, k, *args)
        acc[:] = k
        np.multiply(k, half, out=tmp)
        tmp += rho
        _rhs_blocks(tmp, k, *args)
        acc += 2.0 * k
        np.multiply(k, half, out=tmp)
        tmp += rho
        _rhs_blocks(tmp, k, *args)
        acc += 2.0 * k
        np.multiply(k, dt, out=tmp)
        tmp += rho
        _rhs_blocks(tmp, k, *args)
        acc += k
        rho += (dt / 6.0) * acc
        _hermitize(rho, sizes, offsets)
    return rho
