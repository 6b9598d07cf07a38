"""MRF parameters: unary volume, pairwise label function, edge weights, tree coefficients."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .grid import CONNECTIVITIES, build_direction_set

MAX_LABELS = 256

PAIRWISE_KINDS = ("potts", "truncated_linear", "truncated_quadratic", "sgm_p1p2", "explicit_matrix")
_ALIASES = {"tl": "truncated_linear", "tq": "truncated_quadratic", "p1p2": "sgm_p1p2",
            "linear": "truncated_linear", "quadratic": "truncated_quadratic"}


def check_label_count(n: int) -> int:
    n = int(n)
    if not 1 <= n <= MAX_LABELS:
        raise ValueError(f"label count must be in [1, {MAX_LABELS}] so indices fit one byte, got {n}")
    return n


@dataclass(frozen=True)
class PairwiseFunction:
    kind: str
    params: dict
    matrix: np.ndarray  # V[a, b], (L, L)

    @property
    def num_labels(self) -> int:
        return self.matrix.shape[0]


def build_pairwise(kind: str, params: Optional[dict] = None, num_labels: int = 2) -> PairwiseFunction:
    """Realize V as an L x L matrix.

    ``truncated_linear``/``truncated_quadratic`` take ``trunc`` (tau, may be
    ``inf``); ``sgm_p1p2`` takes ``p1`` and ``p2``; ``explicit_matrix`` takes
    ``matrix``.
    """
    kind = _ALIASES.get(kind, kind)
    params = dict(params or {})
    L = check_label_count(num_labels)
    lam = np.arange(L, dtype=np.float64)
    diff = np.abs(lam[:, None] - lam[None, :])
    if kind == "potts":
        V = (diff > 0).astype(np.float64)
    elif kind in ("truncated_linear", "truncated_quadratic"):
        tau = float(params.get("trunc", np.inf))
        if not tau > 0:
            raise ValueError(f"truncation must be > 0, got {tau}")
        V = np.minimum(diff if kind == "truncated_linear" else diff ** 2, tau)
    elif kind == "sgm_p1p2":
        p1, p2 = float(params["p1"]), float(params["p2"])
        if not 0 < p1 <= p2:
            raise ValueError(f"need 0 < P1 <= P2, got P1={p1}, P2={p2}")
        V = np.where(diff == 0, 0.0, np.where(diff == 1, p1, p2))
    elif kind == "explicit_matrix":
        V = np.array(params["matrix"], dtype=np.float64)
        if V.shape != (L, L):
            raise ValueError(f"explicit matrix must be {L}x{L}, got {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("explicit matrix has non-finite entries")
    else:
        raise ValueError(f"unknown pairwise kind {kind!r}")
    return PairwiseFunction(kind, params, V)


def default_rho(connectivity: int, override: Optional[float] = None) -> float:
    """Uniform tree coefficient; 0.5 for every built-in connectivity, 1.0 gives loopy BP."""
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"unsupported connectivity {connectivity!r}")
    rho = 0.5 if override is None else float(override)
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    return rho


def _valid_mask(height: int, width: int, family: int) -> np.ndarray:
    sh, sw = build_direction_set(16)[2 * family].step
    hh, ww = np.mgrid[0:height, 0:width]
    return (hh + sh >= 0) & (hh + sh < height) & (ww + sw >= 0) & (ww + sw < width)


def edge_mask(height: int, width: int, num_families: int) -> np.ndarray:
    """(F, H, W) bool: slot [f, h, w] holds the edge (h, w) -- (h, w) + step_f."""
    return np.stack([_valid_mask(height, width, f) for f in range(num_families)])


def constant_edge_weights(height: int, width: int, connectivity: int, value: float = 1.0,
                          dtype=np.float32) -> np.ndarray:
    F = connectivity // 2
    return np.where(edge_mask(height, width, F), value, 0.0).astype(dtype)


def gradient_edge_weights(image: np.ndarray, connectivity: int, weightfn, dtype=np.float32) -> np.ndarray:
    """Edge weights from a user function of the two endpoint intensities."""
    H, W = image.shape
    F = connectivity // 2
    out = np.zeros((F, H, W), dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    for f in range(F):
        sh, sw = build_direction_set(16)[2 * f].step
        mask = _valid_mask(H, W, f)
        hh, ww = np.nonzero(mask)
        out[f, hh, ww] = weightfn(img[hh, ww], img[hh + sh, ww + sw])
    return out.astype(dtype)


@dataclass(frozen=True)
class Potentials:
    """Unary volume (H, W, L), pairwise matrix V (L, L), and undirected edge
    weights (F, H, W) where slot [f, h, w] is the edge from (h, w) to
    (h, w) + step of direction 2f.  ``rho`` is a scalar or an (F, H, W) array.
    """

    unary: np.ndarray
    pairwise: np.ndarray
    edge_weights: np.ndarray
    rho: object = 0.5

    def __post_init__(self):
        u = np.asarray(self.unary)
        if u.ndim != 3:
            raise ValueError(f"unary must be H x W x L, got shape {u.shape}")
        check_label_count(u.shape[2])
        if self.pairwise.shape != (u.shape[2], u.shape[2]):
            raise ValueError(f"pairwise matrix shape {self.pairwise.shape} does not match {u.shape[2]} labels")
        if self.edge_weights.ndim != 3 or self.edge_weights.shape[1:] != u.shape[:2]:
            raise ValueError(f"edge weights must be F x H x W, got {self.edge_weights.shape}")
        for name in ("unary", "pairwise", "edge_weights"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")
        if np.any(self.edge_weights < 0):
            raise ValueError("edge weights must be nonnegative")
        rho = np.asarray(self.rho)
        if np.any(rho <= 0) or np.any(rho > 1):
            raise ValueError("rho must lie in (0, 1]")

    @property
    def height(self) -> int:
        return self.unary.shape[0]

    @property
    def width(self) -> int:
        return self.unary.shape[1]

    @property
    def num_labels(self) -> int:
        return self.unary.shape[2]

    @property
    def num_families(self) -> int:
        return self.edge_weights.shape[0]

    @property
    def dtype(self):
        return self.unary.dtype

    def astype(self, dtype) -> "Potentials":
        rho = self.rho if np.ndim(self.rho) == 0 else np.asarray(self.rho, dtype=dtype)
        return replace(self, unary=self.unary.astype(dtype), pairwise=self.pairwise.astype(dtype),
                       edge_weights=self.edge_weights.astype(dtype), rho=rho)

    def with_unary(self, unary: np.ndarray) -> "Potentials":
        return replace(self, unary=unary)


def make_potentials(unary, pairwise, connectivity: int = 4, weight: float = 1.0, rho: float = 0.5,
                    dtype=np.float32) -> Potentials:
    """Convenience constructor with constant edge weights."""
    unary = np.asarray(unary, dtype=dtype)
    V = pairwise.matrix if isinstance(pairwise, PairwiseFunction) else np.asarray(pairwise)
    H, W, _ = unary.shape
    ew = constant_edge_weights(H, W, connectivity, weight, dtype=dtype)
    return Potentials(unary, V.astype(dtype), ew, rho)


def energy(potentials: Potentials, labels: np.ndarray, connectivity: Optional[int] = None) -> float:
    """Sum of unary costs plus weighted pairwise costs over each undirected edge once.

    ``connectivity`` restricts the edge set (4 reads only the first two
    families); by default every family in ``potentials`` is used.
    """
    x = np.asarray(labels)
    H, W, L = potentials.unary.shape
    if x.shape != (H, W):
        raise ValueError(f"labelling shape {x.shape} does not match grid {H}x{W}")
    if x.size and (x.min() < 0 or x.max() >= L):
        raise ValueError(f"labels must lie in [0, {L})")
    x = x.astype(np.int64)
    F = potentials.num_families if connectivity is None else connectivity // 2
    if F > potentials.num_families:
        raise ValueError(f"potentials carry {potentials.num_families} edge families, {F} requested")
    u = potentials.unary.astype(np.float64)
    V = potentials.pairwise.astype(np.float64)
    total = np.take_along_axis(u, x[..., None], axis=2).sum()
    steps = build_direction_set(16)
    for f in range(F):
        sh, sw = steps[2 * f].step
        mask = _valid_mask(H, W, f)
        hh, ww = np.nonzero(mask)
        w = potentials.edge_weights[f, hh, ww].astype(np.float64)
        total += np.sum(w * V[x[hh, ww], x[hh + sh, ww + sw]])
    return float(total)
