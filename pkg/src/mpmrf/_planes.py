"""Conversion between undirected family arrays (F, H, W) and per-direction incoming planes (R, N)."""
import numpy as np

from .grid import Topology, build_topology
from .potentials import Potentials


def to_direction_planes(topo: Topology, family_values, dtype) -> np.ndarray:
    R, N = topo.num_directions, topo.grid.num_nodes
    out = np.zeros((R, N), dtype=dtype)
    if np.ndim(family_values) == 0:
        for r in range(R):
            out[r, topo.pred[r] >= 0] = family_values
        return out
    flat = np.asarray(family_values).reshape(np.shape(family_values)[0], N)
    for r in range(R):
        f = topo.family[r]
        has = topo.pred[r] >= 0
        if topo.reverse[r]:
            out[r, has] = flat[f, has]
        else:
            out[r, has] = flat[f, topo.pred[r][has]]
    return out


def fold_direction_planes(topo: Topology, planes: np.ndarray, num_families: int) -> np.ndarray:
    """Adjoint of :func:`to_direction_planes`: both orientations of an edge land in one slot."""
    H, W = topo.grid.height, topo.grid.width
    out = np.zeros((num_families, H * W), dtype=planes.dtype)
    for r in range(topo.num_directions):
        f = topo.family[r]
        has = topo.pred[r] >= 0
        if topo.reverse[r]:
            out[f, has] += planes[r, has]
        else:
            # pred is injective, so plain fancy-index assignment adds once per slot
            out[f, topo.pred[r][has]] += planes[r, has]
    return out.reshape(num_families, H, W)


def prepare(potentials: Potentials, dirs):
    """Topology and flattened kernel inputs shared by every engine."""
    if not np.all(np.isfinite(potentials.unary)):
        raise ValueError("non-finite unary potential")
    H, W, L = potentials.unary.shape
    topo = build_topology(H, W, dirs)
    if topo.num_families > potentials.num_families:
        raise ValueError(f"direction set needs {topo.num_families} edge-weight families, "
                         f"potentials carry {potentials.num_families}")
    dtype = potentials.unary.dtype
    unary = np.ascontiguousarray(potentials.unary.reshape(H * W, L))
    V = np.ascontiguousarray(potentials.pairwise, dtype=dtype)
    VT = np.ascontiguousarray(V.T)
    win = to_direction_planes(topo, potentials.edge_weights, dtype)
    return topo, unary, V, VT, win


def keep_matrix(topo: Topology) -> np.ndarray:
    """keep[r, d] is True when d is neither r nor r⁻."""
    R = topo.num_directions
    keep = np.ones((R, R), dtype=np.bool_)
    for r in range(R):
        keep[r, r] = False
        if topo.opposite[r] >= 0:
            keep[r, topo.opposite[r]] = False
    return keep


def line_blocks(lo: int, hi: int, max_blocks: int = 64) -> np.ndarray:
    """Fixed partition of lines [lo, hi) into private-accumulator blocks.

    The partition depends only on the line count, never on the thread count,
    so block-wise reductions are reproducible.
    """
    n = hi - lo
    b = max(1, min(max_blocks, n))
    return (lo + (np.arange(b + 1) * n) // b).astype(np.int64)
