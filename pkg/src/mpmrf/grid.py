"""Grid lattice, connectivity directions and scanline (tree) enumeration.

Directions use (row, column) steps.  Scanline heads are generated from
interpolated first-node candidates; candidates that fall outside the image
are advanced along the direction until they enter it, and empty lines are
dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

# Fixed global order, opposites adjacent (id ^ 1 is the opposite).
_STEPS = (
    (0, 1), (0, -1),      # E, W
    (1, 0), (-1, 0),      # S, N
    (1, 1), (-1, -1),     # SE, NW
    (1, -1), (-1, 1),     # SW, NE
    (1, 2), (-1, -2),     # wide diagonals
    (1, -2), (-1, 2),
    (2, 1), (-2, -1),     # narrow diagonals
    (2, -1), (-2, 1),
)

CONNECTIVITIES = (4, 8, 16)


@dataclass(frozen=True)
class GridGraph:
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")

    @property
    def num_nodes(self) -> int:
        return self.height * self.width

    def node_id(self, h: int, w: int) -> int:
        return h * self.width + w

    def coords(self, node: int) -> tuple[int, int]:
        return divmod(node, self.width)

    def contains(self, h: int, w: int) -> bool:
        return 0 <= h < self.height and 0 <= w < self.width


@dataclass(frozen=True)
class Direction:
    id: int
    step: tuple[int, int]
    opposite_id: int

    @property
    def family(self) -> int:
        """Index of the undirected edge family {r, r⁻}."""
        return self.id // 2


@dataclass(frozen=True)
class Scanline:
    first_node: tuple[int, int]
    direction_id: int
    node_sequence: tuple[int, ...]


def build_direction_set(connectivity: int) -> list[Direction]:
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"unsupported connectivity {connectivity!r}; expected one of {CONNECTIVITIES}")
    return [Direction(r, _STEPS[r], r ^ 1) for r in range(connectivity)]


def direction_for_step(step: tuple[int, int]) -> Direction:
    """Direction object for an arbitrary step; canonical ids for the 16 built-ins, -1 otherwise."""
    step = (int(step[0]), int(step[1]))
    if step in _STEPS:
        r = _STEPS.index(step)
        return Direction(r, step, r ^ 1)
    return Direction(-1, step, -1)


def previous_node(g: GridGraph, node: tuple[int, int], r: Direction) -> Optional[tuple[int, int]]:
    h, w = node
    if not g.contains(h, w):
        raise ValueError(f"node {node} outside {g.height}x{g.width} grid")
    ph, pw = h - r.step[0], w - r.step[1]
    return (ph, pw) if g.contains(ph, pw) else None


def _first_node_candidates(H: int, W: int, sh: int, sw: int) -> list[tuple[int, int]]:
    ash, asw = abs(sh), abs(sw)
    if sh == 0 and asw == 1:
        col = 0 if sw > 0 else W - 1
        return [(ph, col) for ph in range(H)]
    if sw == 0 and ash == 1:
        row = 0 if sh > 0 else H - 1
        return [(row, pw) for pw in range(W)]
    if ash == 1:
        # wide (and symmetric) trees
        n = W + (H - 1) * asw
        ph = 0 if sh > 0 else H - 1
        shift = (H - 1) * max(sw, 0)
        return [(ph, t - shift) for t in range(n)]
    if asw == 1:
        # narrow trees: interpolated heads inside the first |S_h| rows
        n = H + ash * (W - 1)
        shift = (H - 1) if sw > 0 else 0
        out = []
        for t in range(n):
            ts = t - shift
            c1 = ts % ash
            c2 = float(ts) / float(ash)
            if sw > 0:
                ph = (ash - c1) % ash
                pw = math.ceil(c2)
            else:
                ph = c1
                pw = math.floor(c2)
            if sh < 0:
                ph = H - 1 - ph
            out.append((ph, pw))
        return out
    return []


def _generic_heads(H: int, W: int, sh: int, sw: int) -> list[tuple[int, int]]:
    return [(h, w) for h in range(H) for w in range(W)
            if not (0 <= h - sh < H and 0 <= w - sw < W)]


def _walk(H: int, W: int, start: tuple[int, int], sh: int, sw: int) -> list[int]:
    h, w = start
    # Advance a virtual head until it enters the image.  A lattice line meets
    # the rectangle in a contiguous run, so H + W steps always suffice.
    for _ in range(H + W + 2):
        if 0 <= h < H and 0 <= w < W:
            break
        h += sh
        w += sw
    else:
        return []
    nodes = []
    while 0 <= h < H and 0 <= w < W:
        nodes.append(h * W + w)
        h += sh
        w += sw
    return nodes


def enumerate_scanlines(g: GridGraph, r: Direction) -> list[Scanline]:
    sh, sw = r.step
    if (sh, sw) == (0, 0):
        raise ValueError("degenerate step (0, 0)")
    if abs(sh) > 2 or abs(sw) > 2:
        raise ValueError(f"step {r.step} exceeds the supported |S| <= 2")
    H, W = g.height, g.width
    candidates = _first_node_candidates(H, W, sh, sw)
    if not candidates:
        # steps outside the 16-set, e.g. (0, 2) or (2, 2)
        candidates = _generic_heads(H, W, sh, sw)
    lines = []
    for cand in candidates:
        nodes = _walk(H, W, cand, sh, sw)
        if nodes:
            lines.append(Scanline(g.coords(nodes[0]), r.id, tuple(nodes)))
    return lines


def resolve_directions(dirs) -> tuple[Direction, ...]:
    """Accept a connectivity (4, 8, 16) or an iterable of direction ids."""
    if isinstance(dirs, (int, np.integer)):
        return tuple(build_direction_set(int(dirs)))
    out = []
    for d in dirs:
        d = d.id if isinstance(d, Direction) else int(d)
        if not 0 <= d < len(_STEPS):
            raise ValueError(f"unknown direction id {d}")
        out.append(Direction(d, _STEPS[d], d ^ 1))
    ids = [d.id for d in out]
    if not out or len(set(ids)) != len(ids):
        raise ValueError(f"direction ids must be non-empty and unique, got {ids}")
    return tuple(out)


@dataclass(frozen=True, eq=False)
class Topology:
    """Packed scanline layout for a grid and a direction set.

    Scanlines of every direction are concatenated in direction order.  Each
    non-head node of a scanline owns one edge slot; edges are numbered in the
    same concatenated order, so the slot of position ``pos`` on line ``t`` is
    ``line_edge0[t] + pos - line_off[t] - 1``.

    Arrays indexed by direction use the local position in ``directions``;
    ``opposite`` holds the local index of r⁻, or -1 when r⁻ is not in the set.
    """

    grid: GridGraph
    directions: tuple[Direction, ...]
    steps: np.ndarray          # (R, 2)
    opposite: np.ndarray       # (R,)
    family: np.ndarray         # (R,) global undirected family id
    reverse: np.ndarray        # (R,) 1 if the step is the negated family step
    nodes: np.ndarray          # (R * N,)
    line_off: np.ndarray       # (n_lines + 1,)
    line_dir: np.ndarray       # (n_lines,)
    line_edge0: np.ndarray     # (n_lines,)
    dir_line_start: np.ndarray  # (R + 1,)
    pred: np.ndarray           # (R, N) predecessor node id or -1

    @property
    def num_directions(self) -> int:
        return len(self.directions)

    @property
    def num_lines(self) -> int:
        return int(self.line_dir.shape[0])

    @property
    def edges_per_direction(self) -> np.ndarray:
        return self.grid.num_nodes - np.diff(self.dir_line_start)

    @property
    def num_edges(self) -> int:
        return int(self.edges_per_direction.sum())

    @property
    def num_families(self) -> int:
        """Edge-weight planes needed to cover every family in the set."""
        return int(self.family.max()) + 1

    def scanlines(self, r: int) -> list[np.ndarray]:
        lo, hi = self.dir_line_start[r], self.dir_line_start[r + 1]
        return [self.nodes[self.line_off[t]:self.line_off[t + 1]] for t in range(lo, hi)]


def build_topology(height: int, width: int, dirs) -> Topology:
    ids = tuple(d.id for d in resolve_directions(dirs))
    return _build_topology(int(height), int(width), ids)


@lru_cache(maxsize=64)
def _build_topology(height: int, width: int, ids: tuple[int, ...]) -> Topology:
    g = GridGraph(height, width)
    dirs = resolve_directions(ids)
    R, N = len(dirs), g.num_nodes
    nodes, line_off, line_dir, line_edge0 = [], [0], [], []
    dir_line_start = [0]
    edge = 0
    for local, r in enumerate(dirs):
        for line in enumerate_scanlines(g, r):
            nodes.extend(line.node_sequence)
            line_off.append(len(nodes))
            line_dir.append(local)
            line_edge0.append(edge)
            edge += len(line.node_sequence) - 1
        dir_line_start.append(len(line_dir))

    hh, ww = np.divmod(np.arange(N), width)
    pred = np.full((R, N), -1, dtype=np.int64)
    for local, r in enumerate(dirs):
        ph, pw = hh - r.step[0], ww - r.step[1]
        ok = (ph >= 0) & (ph < height) & (pw >= 0) & (pw < width)
        pred[local, ok] = ph[ok] * width + pw[ok]

    pos = {r.id: k for k, r in enumerate(dirs)}
    arr = lambda x: np.asarray(x, dtype=np.int64)  # noqa: E731
    topo = Topology(
        grid=g,
        directions=dirs,
        steps=arr([r.step for r in dirs]).reshape(R, 2),
        opposite=arr([pos.get(r.opposite_id, -1) for r in dirs]),
        family=arr([r.family for r in dirs]),
        reverse=arr([r.id & 1 for r in dirs]),
        nodes=arr(nodes),
        line_off=arr(line_off),
        line_dir=arr(line_dir),
        line_edge0=arr(line_edge0),
        dir_line_start=arr(dir_line_start),
        pred=pred,
    )
    for name in ("steps", "opposite", "family", "reverse", "nodes", "line_off",
                 "line_dir", "line_edge0", "dir_line_start", "pred"):
        getattr(topo, name).setflags(write=False)
    return topo
