"""Analytic gradients: soft-min regression head and index-routed backward passes.

The backward passes never re-run a minimization.  Each stored argmin routes
an incoming message gradient to exactly one predecessor label, and the stored
reparametrization index takes the negated row sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._planes import fold_direction_planes, keep_matrix, line_blocks, prepare
from .potentials import Potentials
from .results import IndexStore
from .trwp import rho_planes


@dataclass
class GradientSet:
    unary: np.ndarray         # (H, W, L)
    edge_weights: np.ndarray  # (F, H, W), both orientations accumulated
    pairwise: np.ndarray      # (L, L)


@dataclass
class SoftHead:
    confidence: np.ndarray  # f, (H, W, L)
    disparity: np.ndarray   # d, (H, W)
    loss: float


def soft_head_forward(costs: np.ndarray, target: np.ndarray) -> SoftHead:
    """Soft-min confidences, expected-label regression and mean L1 loss."""
    c = np.asarray(costs, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise ValueError("non-finite costs")
    z = -(c - c.min(axis=-1, keepdims=True))
    f = np.exp(z)
    f /= f.sum(axis=-1, keepdims=True)
    labels = np.arange(c.shape[-1], dtype=np.float64)
    d = f @ labels
    loss = float(np.mean(np.abs(d - np.asarray(target, dtype=np.float64))))
    return SoftHead(f, d, loss)


def soft_head_backward(head: SoftHead, target: np.ndarray) -> np.ndarray:
    f, d = head.confidence, head.disparity
    # sign(0) = 0 keeps the flat point at zero gradient
    gd = np.sign(d - np.asarray(target, dtype=np.float64)) / d.size
    labels = np.arange(f.shape[-1], dtype=np.float64)
    return -gd[..., None] * f * (labels - d[..., None])


def _check_store(store: IndexStore, topo, K: int):
    if store.topology is not topo and (store.topology.grid != topo.grid
                                       or store.topology.directions != topo.directions):
        raise ValueError("index store was recorded for a different grid or direction set")
    if store.iterations != K:
        raise ValueError(f"index store holds {store.iterations} iterations, backward asked for {K}")
    if store.p.shape[1] != topo.num_edges:
        raise ValueError("index store edge count does not match the topology")


def isgmr_backward(grad_costs: np.ndarray, store: IndexStore, potentials: Potentials, dirs=4,
                   iterations: int | None = None) -> GradientSet:
    topo, unary, V, VT, win = prepare(potentials, dirs)
    K = store.iterations if iterations is None else int(iterations)
    _check_store(store, topo, K)
    H, W, L = potentials.unary.shape
    R, N = topo.num_directions, H * W
    dtype = unary.dtype
    keep = keep_matrix(topo).astype(dtype)

    gc = np.ascontiguousarray(np.asarray(grad_costs, dtype=dtype).reshape(N, L))
    g_unary = gc.copy()
    # back through c = theta + sum_r m^r
    g_hat = np.broadcast_to(gc, (R, N, L)).copy()
    acc = np.zeros((R, N, L), dtype=dtype)
    gw = np.zeros((R, N), dtype=dtype)
    blocks = line_blocks(0, topo.num_lines)
    gV_blocks = np.zeros((blocks.shape[0] - 1, L, L), dtype=dtype)

    sweep = _kernels.pick("isgmr_backward_sweep", unary.size)
    for k in range(K - 1, -1, -1):
        acc[:] = 0
        sweep(g_hat, acc, gw, gV_blocks, blocks, V, win, topo.nodes, topo.line_off, topo.line_dir,
              topo.line_edge0, store.p[k], store.q[k])
        # consumed gradients of this iteration's outputs are dropped (zero-out);
        # what remains flows to the previous iteration's messages
        g_unary += acc.sum(axis=0)
        g_hat = np.einsum("rd,rnl->dnl", keep, acc)

    gV = gV_blocks.sum(axis=0)
    g_edges = fold_direction_planes(topo, gw, potentials.num_families)
    return GradientSet(g_unary.reshape(H, W, L), g_edges, gV)


def trwp_backward(grad_costs: np.ndarray, store: IndexStore, potentials: Potentials, rho=None,
                  dirs=4, iterations: int | None = None) -> GradientSet:
    topo, unary, V, VT, win = prepare(potentials, dirs)
    K = store.iterations if iterations is None else int(iterations)
    _check_store(store, topo, K)
    H, W, L = potentials.unary.shape
    R, N = topo.num_directions, H * W
    dtype = unary.dtype
    rin = rho_planes(topo, potentials.rho if rho is None else rho, dtype)

    gc = np.ascontiguousarray(np.asarray(grad_costs, dtype=dtype).reshape(N, L))
    g_unary = gc.copy()
    gm = np.broadcast_to(gc, (R, N, L)).copy()
    gw = np.zeros((R, N), dtype=dtype)
    blocks = [line_blocks(topo.dir_line_start[r], topo.dir_line_start[r + 1]) for r in range(R)]
    gV_blocks = np.zeros((max(b.shape[0] - 1 for b in blocks), L, L), dtype=dtype)

    sweep = _kernels.pick("trwp_backward_sweep", unary.size)
    for k in range(K - 1, -1, -1):
        for r in range(R - 1, -1, -1):
            sweep(gm, g_unary, gw, gV_blocks, blocks[r], V, win, rin, r, topo.opposite[r],
                  topo.nodes, topo.line_off, topo.line_edge0, store.p[k], store.q[k])
            # old values of plane r are never read by its own sweep
            gm[r] = 0

    gV = gV_blocks.sum(axis=0)
    g_edges = fold_direction_planes(topo, gw, potentials.num_families)
    return GradientSet(g_unary.reshape(H, W, L), g_edges, gV)


def loss_and_gradients(method: str, potentials: Potentials, target: np.ndarray, dirs=4,
                       iterations: int = 1, rho=None):
    """Forward, soft head, and analytic backward in one call.

    Returns ``(loss, GradientSet, IndexStore)``.
    """
    from .isgmr import isgmr_forward
    from .trwp import trwp_forward

    if method == "isgmr":
        out, _, store = isgmr_forward(potentials, dirs, iterations)
    elif method == "trwp":
        out, _, store = trwp_forward(potentials, rho, dirs, iterations)
    else:
        raise ValueError(f"no analytic backward for method {method!r}")
    head = soft_head_forward(out.costs, target)
    gc = soft_head_backward(head, target)
    if method == "isgmr":
        grads = isgmr_backward(gc, store, potentials, dirs, iterations)
    else:
        grads = trwp_backward(gc, store, potentials, rho, dirs, iterations)
    return head.loss, grads, store
