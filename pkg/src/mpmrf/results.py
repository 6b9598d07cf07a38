from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Topology


@dataclass
class CostOutput:
    costs: np.ndarray   # (H, W, L)
    labels: np.ndarray  # (H, W), lowest label on ties


@dataclass
class MessageField:
    """Final messages (R, H, W, L); ``m_hat`` is only kept by the double-buffered engine."""

    m: np.ndarray
    m_hat: np.ndarray | None = None


@dataclass
class IndexStore:
    """One-byte argmin indices recorded per iteration for the backward pass.

    ``p[k, e, lam]`` is the minimizing predecessor label of edge slot ``e``
    (see :class:`~mpmrf.grid.Topology`) at iteration ``k``; ``q[k, e]`` is the
    label subtracted by reparametrization.
    """

    p: np.ndarray  # (K, E, L) uint8
    q: np.ndarray  # (K, E) uint8
    topology: Topology

    @property
    def iterations(self) -> int:
        return self.p.shape[0]

    @property
    def nbytes(self) -> int:
        return self.p.nbytes + self.q.nbytes

    @staticmethod
    def expected_nbytes(iterations: int, topology: Topology, num_labels: int) -> int:
        return iterations * topology.num_edges * (num_labels + 1)


def aggregate(unary: np.ndarray, messages: np.ndarray) -> CostOutput:
    """c = theta + sum_r m^r, labels by argmin.  Shapes (N, L) and (R, N, L) or gridded."""
    costs = unary.copy()
    for r in range(messages.shape[0]):
        costs += messages[r]
    return CostOutput(costs, np.argmin(costs, axis=-1))
