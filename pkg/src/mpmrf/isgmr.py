"""Iterative revised semi-global matching (double-buffered forward pass)."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from . import _kernels
from ._planes import keep_matrix, prepare
from .potentials import Potentials, energy
from .results import CostOutput, IndexStore, MessageField, aggregate


def _check_iterations(K: int) -> int:
    K = int(K)
    if K < 1:
        raise ValueError(f"iteration count must be >= 1, got {K}")
    return K


def isgmr_forward(potentials: Potentials, dirs=4, iterations: int = 1, record: bool = True,
                  callback: Optional[Callable[[int, CostOutput], None]] = None):
    """Run ISGMR for ``iterations`` sweeps.

    Every direction updates its own fresh buffer from the previous iteration's
    messages of all other directions except its opposite; buffers are swapped
    only after all directions finish.  ``callback(k, cost_output)`` is called
    after each iteration with gridded costs.

    Returns ``(CostOutput, MessageField, IndexStore | None)``.
    """
    K = _check_iterations(iterations)
    topo, unary, V, VT, win = prepare(potentials, dirs)
    H, W, L = potentials.unary.shape
    R, N, E = topo.num_directions, H * W, topo.num_edges
    keep = keep_matrix(topo)
    m = np.zeros((R, N, L), dtype=unary.dtype)
    m_hat = np.zeros_like(m)
    depth = K if record else 1
    p = np.zeros((depth, E, L), dtype=np.uint8)
    q = np.zeros((depth, E), dtype=np.uint8)

    sweep = _kernels.pick("isgmr_sweep", unary.size)
    for k in range(K):
        slot = k if record else 0
        sweep(unary, VT, win, m, m_hat, topo.nodes, topo.line_off, topo.line_dir,
              topo.line_edge0, keep, p[slot], q[slot])
        m, m_hat = m_hat, m
        if callback is not None:
            out = aggregate(unary, m)
            callback(k + 1, CostOutput(out.costs.reshape(H, W, L), out.labels.reshape(H, W)))

    out = aggregate(unary, m)
    result = CostOutput(out.costs.reshape(H, W, L), out.labels.reshape(H, W))
    grid_m = m.reshape(R, H, W, L)
    fields = MessageField(m=grid_m, m_hat=grid_m)
    store = IndexStore(p, q, topo) if record else None
    return result, fields, store


def isgmr_iterate_energy(potentials: Potentials, dirs=4, iterations: int = 1,
                         eval_connectivity: Optional[int] = 4) -> list[float]:
    """Energy of the argmin labelling after each iteration (4-connected evaluation by default)."""
    energies = []

    def record(k, out):
        energies.append(energy(potentials, out.labels, eval_connectivity))

    isgmr_forward(potentials, dirs, iterations, record=False, callback=record)
    return energies
