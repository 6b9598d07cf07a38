"""Compiled scanline sweeps.

Layout: unary (N, L), messages (R, N, L), per-direction planes (R, N) holding
the incoming-edge weight and tree coefficient of node i for direction r.
``VT[lam, mu]`` is V(mu, lam).  Within one sweep each scanline writes only its
own nodes, so lines run under ``prange`` without changing results.  Argmins
keep the lowest index on ties.
"""
import types

import numpy as np
from numba import njit, prange

_OPTS = dict(parallel=True, cache=True, nogil=True)


@njit(**_OPTS)
def isgmr_sweep(unary, VT, win, m_old, m_new, nodes, line_off, line_dir, line_edge0,
                keep, p, q):
    R, N, L = m_old.shape
    for t in prange(line_dir.shape[0]):
        r = line_dir[t]
        start = line_off[t]
        stop = line_off[t + 1]
        base = np.empty(L, dtype=m_new.dtype)
        head = nodes[start]
        for lam in range(L):
            m_new[r, head, lam] = 0.0
        e = line_edge0[t]
        for pos in range(start + 1, stop):
            i = nodes[pos]
            j = nodes[pos - 1]
            for mu in range(L):
                s = unary[j, mu] + m_new[r, j, mu]
                for d in range(R):
                    if keep[r, d]:
                        s += m_old[d, j, mu]
                base[mu] = s
            w = win[r, i]
            lowest = np.inf
            qa = 0
            for lam in range(L):
                best = base[0] + w * VT[lam, 0]
                arg = 0
                for mu in range(1, L):
                    v = base[mu] + w * VT[lam, mu]
                    if v < best:
                        best = v
                        arg = mu
                m_new[r, i, lam] = best
                p[e, lam] = arg
                if best < lowest:
                    lowest = best
                    qa = lam
            q[e] = qa
            for lam in range(L):
                m_new[r, i, lam] -= lowest
            e += 1


@njit(**_OPTS)
def trwp_sweep(unary, VT, win, rin, m, r, ropp, nodes, line_off, line_edge0, lo, hi, p, q):
    R, N, L = m.shape
    for t in prange(lo, hi):
        start = line_off[t]
        stop = line_off[t + 1]
        base = np.empty(L, dtype=m.dtype)
        head = nodes[start]
        for lam in range(L):
            m[r, head, lam] = 0.0
        e = line_edge0[t]
        for pos in range(start + 1, stop):
            i = nodes[pos]
            j = nodes[pos - 1]
            rho = rin[r, i]
            for mu in range(L):
                s = unary[j, mu]
                for d in range(R):
                    s += m[d, j, mu]
                s = rho * s
                if ropp >= 0:
                    s -= m[ropp, j, mu]
                base[mu] = s
            w = win[r, i]
            lowest = np.inf
            qa = 0
            for lam in range(L):
                best = base[0] + w * VT[lam, 0]
                arg = 0
                for mu in range(1, L):
                    v = base[mu] + w * VT[lam, mu]
                    if v < best:
                        best = v
                        arg = mu
                m[r, i, lam] = best
                p[e, lam] = arg
                if best < lowest:
                    lowest = best
                    qa = lam
            q[e] = qa
            for lam in range(L):
                m[r, i, lam] -= lowest
            e += 1


@njit(**_OPTS)
def sgm_sweep(unary, VT, win, m, nodes, line_off, line_dir, revised):
    R, N, L = m.shape
    for t in prange(line_dir.shape[0]):
        r = line_dir[t]
        start = line_off[t]
        stop = line_off[t + 1]
        base = np.empty(L, dtype=m.dtype)
        head = nodes[start]
        for lam in range(L):
            m[r, head, lam] = 0.0 if revised else unary[head, lam]
        for pos in range(start + 1, stop):
            i = nodes[pos]
            j = nodes[pos - 1]
            prev_min = np.inf
            for mu in range(L):
                s = m[r, j, mu]
                if revised:
                    s += unary[j, mu]
                base[mu] = s
                if m[r, j, mu] < prev_min:
                    prev_min = m[r, j, mu]
            w = win[r, i]
            lowest = np.inf
            for lam in range(L):
                best = base[0] + w * VT[lam, 0]
                for mu in range(1, L):
                    v = base[mu] + w * VT[lam, mu]
                    if v < best:
                        best = v
                if not revised:
                    best += unary[i, lam] - prev_min
                m[r, i, lam] = best
                if best < lowest:
                    lowest = best
            if revised:
                for lam in range(L):
                    m[r, i, lam] -= lowest


@njit(**_OPTS)
def isgmr_backward_sweep(gm_hat, acc, gw, gV_blocks, block_off, V, win, nodes, line_off,
                         line_dir, line_edge0, p, q):
    """Reverse one ISGMR iteration for every direction at once.

    ``acc[r, j, mu]`` collects what direction r routes to node j = i - r; it
    feeds both the unary gradient and the other-direction message gradients.
    """
    R, N, L = gm_hat.shape
    for b in prange(block_off.shape[0] - 1):
        gV = gV_blocks[b]
        for t in range(block_off[b], block_off[b + 1]):
            r = line_dir[t]
            start = line_off[t]
            stop = line_off[t + 1]
            e = line_edge0[t] + (stop - start - 2)
            for pos in range(stop - 1, start, -1):
                i = nodes[pos]
                j = nodes[pos - 1]
                total = 0.0
                for lam in range(L):
                    total += gm_hat[r, i, lam]
                gm_hat[r, i, q[e]] -= total
                w = win[r, i]
                gwi = 0.0
                for lam in range(L):
                    g = gm_hat[r, i, lam]
                    if g == 0.0:
                        continue
                    mu = p[e, lam]
                    acc[r, j, mu] += g
                    gm_hat[r, j, mu] += g
                    gwi += g * V[mu, lam]
                    gV[mu, lam] += w * g
                gw[r, i] += gwi
                e -= 1


@njit(**_OPTS)
def trwp_backward_sweep(gm, gtheta, gw, gV_blocks, block_off, V, win, rin, r, ropp, nodes,
                        line_off, line_edge0, p, q):
    R, N, L = gm.shape
    for b in prange(block_off.shape[0] - 1):
        gV = gV_blocks[b]
        # per-predecessor sums, flushed once per node instead of per label
        up = np.empty(L, dtype=gm.dtype)
        back = np.empty(L, dtype=gm.dtype)
        for t in range(block_off[b], block_off[b + 1]):
            start = line_off[t]
            stop = line_off[t + 1]
            e = line_edge0[t] + (stop - start - 2)
            for pos in range(stop - 1, start, -1):
                i = nodes[pos]
                j = nodes[pos - 1]
                total = 0.0
                for lam in range(L):
                    total += gm[r, i, lam]
                gm[r, i, q[e]] -= total
                w = win[r, i]
                rho = rin[r, i]
                gwi = 0.0
                up[:] = 0.0
                back[:] = 0.0
                for lam in range(L):
                    g = gm[r, i, lam]
                    if g == 0.0:
                        continue
                    mu = p[e, lam]
                    up[mu] += rho * g
                    back[mu] += g
                    gwi += g * V[mu, lam]
                    gV[mu, lam] += w * g
                for mu in range(L):
                    gtheta[j, mu] += up[mu]
                for d in range(R):
                    for mu in range(L):
                        gm[d, j, mu] += up[mu]
                if ropp >= 0:
                    for mu in range(L):
                        gm[ropp, j, mu] -= back[mu]
                gw[r, i] += gwi
                e -= 1


def _serial_twin(kernel):
    # Same body without the parallel launch; a distinct qualname keeps the
    # on-disk cache entries of the two builds apart.
    fn = kernel.py_func
    twin = types.FunctionType(fn.__code__, fn.__globals__, fn.__name__ + "_serial",
                              fn.__defaults__, fn.__closure__)
    twin.__qualname__ = fn.__qualname__ + "_serial"
    return njit(cache=True, nogil=True)(twin)


# Below this many (node, label) cells the thread-pool launch costs more than the sweep.
SERIAL_WORK = 1 << 14

_PARALLEL = {k.py_func.__name__: k for k in
             (isgmr_sweep, trwp_sweep, sgm_sweep, isgmr_backward_sweep, trwp_backward_sweep)}
_SERIAL = {name: _serial_twin(k) for name, k in _PARALLEL.items()}


def pick(name: str, work: int, parallel=None):
    """Kernel ``name`` in its parallel or serial build; both give identical results."""
    if parallel is None:
        parallel = work >= SERIAL_WORK
    return (_PARALLEL if parallel else _SERIAL)[name]
