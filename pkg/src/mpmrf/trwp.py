"""Parallel tree-reweighted message passing: directions in a fixed sequence, scanlines in parallel."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from . import _kernels
from ._planes import prepare, to_direction_planes
from .isgmr import _check_iterations
from .potentials import Potentials, energy
from .results import CostOutput, IndexStore, MessageField, aggregate


def rho_planes(topo, rho, dtype) -> np.ndarray:
    rho_arr = np.asarray(rho)
    if np.any(rho_arr <= 0) or np.any(rho_arr > 1):
        raise ValueError("rho must lie in (0, 1]")
    planes = to_direction_planes(topo, rho if rho_arr.ndim == 0 else rho_arr, dtype)
    # Heads never read their plane entry; keep it finite and harmless.
    planes[planes == 0] = 1
    return planes


def trwp_forward(potentials: Potentials, rho=None, dirs=4, iterations: int = 1, record: bool = True,
                 callback: Optional[Callable[[int, CostOutput], None]] = None):
    """Run TRWP.  ``rho`` defaults to ``potentials.rho`` and may be a scalar or (F, H, W).

    A single message buffer is updated in place: direction r reads the current
    messages of every direction, including those already refreshed earlier in
    the same iteration.
    """
    K = _check_iterations(iterations)
    topo, unary, V, VT, win = prepare(potentials, dirs)
    H, W, L = potentials.unary.shape
    R, N, E = topo.num_directions, H * W, topo.num_edges
    rin = rho_planes(topo, potentials.rho if rho is None else rho, unary.dtype)
    m = np.zeros((R, N, L), dtype=unary.dtype)
    depth = K if record else 1
    p = np.zeros((depth, E, L), dtype=np.uint8)
    q = np.zeros((depth, E), dtype=np.uint8)

    sweep = _kernels.pick("trwp_sweep", unary.size)
    for k in range(K):
        slot = k if record else 0
        for r in range(R):
            lo, hi = topo.dir_line_start[r], topo.dir_line_start[r + 1]
            sweep(unary, VT, win, rin, m, r, topo.opposite[r], topo.nodes,
                  topo.line_off, topo.line_edge0, lo, hi, p[slot], q[slot])
        if callback is not None:
            out = aggregate(unary, m)
            callback(k + 1, CostOutput(out.costs.reshape(H, W, L), out.labels.reshape(H, W)))

    out = aggregate(unary, m)
    result = CostOutput(out.costs.reshape(H, W, L), out.labels.reshape(H, W))
    store = IndexStore(p, q, topo) if record else None
    return result, MessageField(m=m.reshape(R, H, W, L)), store


def trwp_iterate_energy(potentials: Potentials, rho=None, dirs=4, iterations: int = 1,
                        eval_connectivity: Optional[int] = 4) -> list[float]:
    energies = []

    def record(k, out):
        energies.append(energy(potentials, out.labels, eval_connectivity))

    trwp_forward(potentials, rho, dirs, iterations, record=False, callback=record)
    return energies
