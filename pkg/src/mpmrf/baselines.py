"""Comparison inferences: one-shot SGM (standard and revised), iterative SGM, local mean-field."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import _kernels
from ._planes import prepare
from .grid import resolve_directions
from .isgmr import _check_iterations
from .potentials import Potentials, energy
from .results import CostOutput

SGM_VARIANTS = ("standard", "revised")


def sgm_forward(potentials: Potentials, dirs=4, variant: str = "standard") -> CostOutput:
    """Single-pass SGM.

    ``standard`` adds the node's own unary inside every directional message and
    normalizes by the predecessor's minimum, then sums messages only.
    ``revised`` carries the predecessor unary instead, subtracts each message's
    own minimum, and adds the unary once at aggregation.
    """
    if variant not in SGM_VARIANTS:
        raise ValueError(f"unknown SGM variant {variant!r}")
    topo, unary, V, VT, win = prepare(potentials, dirs)
    H, W, L = potentials.unary.shape
    R = topo.num_directions
    m = np.zeros((R, H * W, L), dtype=unary.dtype)
    revised = variant == "revised"
    sweep = _kernels.pick("sgm_sweep", unary.size)
    sweep(unary, VT, win, m, topo.nodes, topo.line_off, topo.line_dir, revised)
    costs = m.sum(axis=0)
    if revised:
        costs += unary
    costs = costs.reshape(H, W, L)
    return CostOutput(costs, np.argmin(costs, axis=-1))


def sgm_iterative(potentials: Potentials, dirs=4, iterations: int = 1, variant: str = "standard",
                  callback=None) -> list[CostOutput]:
    """Repeated SGM where each pass's aggregated cost becomes the next pass's unary.

    With the standard variant the cost grows roughly |R|-fold per pass, so the
    chain runs in float64 regardless of the input precision.
    """
    K = _check_iterations(iterations)
    current = potentials.astype(np.float64)
    outs = []
    for k in range(K):
        out = sgm_forward(current, dirs, variant)
        outs.append(out)
        if not np.all(np.isfinite(out.costs)):
            raise FloatingPointError("iterative SGM costs overflowed")
        if callback is not None:
            callback(k + 1, out)
        current = replace(current, unary=out.costs)
    return outs


def sgm_iterate_energy(potentials: Potentials, dirs=4, iterations: int = 1, variant: str = "standard",
                       eval_connectivity: int | None = 4) -> list[float]:
    return [energy(potentials, o.labels, eval_connectivity)
            for o in sgm_iterative(potentials, dirs, iterations, variant)]


def _softmin(c: np.ndarray) -> np.ndarray:
    z = -(c - c.min(axis=-1, keepdims=True))
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def meanfield_forward(potentials: Potentials, dirs=4, iterations: int = 1, callback=None) -> CostOutput:
    """Synchronous local mean-field.

    Q starts at softmax(-theta); each iteration recomputes every node from its
    neighbours' previous Q.  ``dirs`` picks the neighbourhood (one undirected
    edge per direction pair).
    """
    K = _check_iterations(iterations)
    directions = resolve_directions(dirs)
    families = sorted({d.family for d in directions})
    if families and families[-1] >= potentials.num_families:
        raise ValueError("potentials carry too few edge-weight families for this neighbourhood")
    theta = potentials.unary.astype(np.float64)
    V = potentials.pairwise.astype(np.float64)
    H, W, L = theta.shape
    Q = _softmin(theta)
    for k in range(K):
        field = theta.copy()
        for f in families:
            sh, sw = _family_step(f)
            a_rows = slice(max(0, -sh), H - max(0, sh))
            a_cols = slice(max(0, -sw), W - max(0, sw))
            b_rows = slice(max(0, sh), H + min(0, sh))
            b_cols = slice(max(0, sw), W + min(0, sw))
            w = potentials.edge_weights[f, a_rows, a_cols].astype(np.float64)[..., None]
            # edge (a, b) costs w V(x_a, x_b)
            field[a_rows, a_cols] += w * (Q[b_rows, b_cols] @ V.T)
            field[b_rows, b_cols] += w * (Q[a_rows, a_cols] @ V)
        Q = _softmin(field)
        if callback is not None:
            callback(k + 1, Q)
    costs = -np.log(np.maximum(Q, np.finfo(np.float64).tiny))
    return CostOutput(costs, np.argmax(Q, axis=-1))


def meanfield_iterate_energy(potentials: Potentials, dirs=4, iterations: int = 1,
                             eval_connectivity: int | None = 4) -> list[float]:
    energies = []
    meanfield_forward(potentials, dirs, iterations,
                      callback=lambda k, Q: energies.append(
                          energy(potentials, np.argmax(Q, axis=-1), eval_connectivity)))
    return energies


def _family_step(f: int) -> tuple[int, int]:
    return resolve_directions([2 * f])[0].step
