"""Reference oracles for tests: exhaustive MAP, chain min-marginals, finite differences.

Nothing here touches the message-passing kernels or the scanline topology.
"""
from __future__ import annotations

import numpy as np

BRUTE_FORCE_LIMIT = 10 ** 7
CHAIN_MAX_LENGTH = 14
CHAIN_MAX_LABELS = 6

_STENCILS = {
    2: ((1.0, -1.0), (0.5, -0.5)),
    4: ((2.0, 1.0, -1.0, -2.0), (-1 / 12, 8 / 12, -8 / 12, 1 / 12)),
}

# undirected neighbour offsets by edge-weight family
_FAMILY_STEPS = [(0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (1, -2), (2, 1), (2, -1)]
_FAMILIES_FOR = {4: 2, 8: 4, 16: 8}


def _edge_list(H: int, W: int, weights: np.ndarray, connectivity: int):
    a, b, w = [], [], []
    for f in range(_FAMILIES_FOR[connectivity]):
        dh, dw = _FAMILY_STEPS[f]
        for h in range(H):
            for x in range(W):
                h2, x2 = h + dh, x + dw
                if 0 <= h2 < H and 0 <= x2 < W:
                    a.append(h * W + x)
                    b.append(h2 * W + x2)
                    w.append(float(weights[f, h, x]))
    return np.array(a, dtype=np.int64), np.array(b, dtype=np.int64), np.array(w)


def brute_force_map(potentials, connectivity: int = 4):
    """Exhaustive minimum-energy labelling.

    Labellings are scanned in lexicographic order (row-major node order, first
    node most significant) and only a strictly lower energy replaces the
    incumbent, so ties resolve to the lexicographically smallest labelling.
    """
    theta = np.asarray(potentials.unary, dtype=np.float64)
    H, W, L = theta.shape
    N = H * W
    if float(L) ** N > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{L}^{N} labellings exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")
    if connectivity not in _FAMILIES_FOR:
        raise ValueError(f"unsupported connectivity {connectivity}")
    V = np.asarray(potentials.pairwise, dtype=np.float64)
    a, b, w = _edge_list(H, W, np.asarray(potentials.edge_weights), connectivity)
    flat = theta.reshape(N, L)

    # energy tensor with one axis per node, built by broadcast adds; C order
    # puts node 0 most significant, and argmin returns the first minimum
    def axis_shape(*nodes):
        shape = [1] * N
        for n in nodes:
            shape[n] = L
        return shape

    e = np.zeros([L] * N)
    for n in range(N):
        e += flat[n].reshape(axis_shape(n))
    for i, j, wt in zip(a, b, w):
        e += (wt * V).reshape(axis_shape(i, j)) if i < j else (wt * V.T).reshape(axis_shape(j, i))
    best = int(np.argmin(e))
    labels = np.array(np.unravel_index(best, e.shape), dtype=np.int64) if N else np.zeros(0, np.int64)
    return labels.reshape(H, W), float(e.reshape(-1)[best])


def chain_min_marginals(theta, weights, V) -> np.ndarray:
    """Exact min-marginals of a chain by forward and backward dynamic programming.

    ``theta`` is (n, L), ``weights[i]`` belongs to the edge (i, i+1) and the
    edge cost is ``weights[i] * V[x_i, x_{i+1}]``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2:
        raise ValueError("theta must be (length, labels)")
    n, L = theta.shape
    if n < 1 or n > CHAIN_MAX_LENGTH:
        raise ValueError(f"chain length must be in 1..{CHAIN_MAX_LENGTH}")
    if L > CHAIN_MAX_LABELS:
        raise ValueError(f"at most {CHAIN_MAX_LABELS} labels")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != n - 1:
        raise ValueError("need one weight per chain edge")
    V = np.asarray(V, dtype=np.float64)

    fwd = np.empty((n, L))
    bwd = np.empty((n, L))
    fwd[0] = theta[0]
    for i in range(1, n):
        fwd[i] = theta[i] + np.min(fwd[i - 1][:, None] + w[i - 1] * V, axis=0)
    bwd[n - 1] = theta[n - 1]
    for i in range(n - 2, -1, -1):
        bwd[i] = theta[i] + np.min(w[i] * V + bwd[i + 1][None, :], axis=1)
    return fwd + bwd - theta


def finite_difference(lossfn, x: np.ndarray, step: float = 1e-3, probes: int | None = None,
                      rng: np.random.Generator | None = None, order: int = 2):
    """Central-difference gradient of a scalar ``lossfn`` at ``x`` (64-bit).

    ``order=2`` is the three-point stencil; ``order=4`` uses the five-point
    stencil at the same step, whose truncation error is O(step^4).  With
    ``probes`` set, returns ``(directions, slopes)`` for that many random unit
    directions instead of the full gradient.
    """
    if order not in _STENCILS:
        raise ValueError("order must be 2 or 4")
    offsets, coefs = _STENCILS[order]
    x = np.array(x, dtype=np.float64)

    def ev(v):
        out = float(lossfn(v))
        if not np.isfinite(out):
            raise ValueError("non-finite loss")
        return out

    def slope(along):
        return sum(c * ev(x + o * step * along) for o, c in zip(offsets, coefs)) / step

    if probes is not None:
        rng = rng or np.random.default_rng(0)
        dirs = rng.standard_normal((probes,) + x.shape)
        dirs /= np.sqrt((dirs ** 2).reshape(probes, -1).sum(axis=1)).reshape((probes,) + (1,) * x.ndim)
        return dirs, np.array([slope(d) for d in dirs])

    grad = np.zeros_like(x)
    unit = np.zeros_like(x)
    u = unit.reshape(-1)
    g = grad.reshape(-1)
    for k in range(x.size):
        u[k] = 1.0
        g[k] = slope(unit)
        u[k] = 0.0
    return grad
