import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpmrf.potentials import (Potentials, build_pairwise, constant_edge_weights, default_rho, energy,
                              gradient_edge_weights, make_potentials)


def _energy_by_pairs(P, x, conn):
    """Second energy routine: visit every ordered neighbour pair and halve."""
    H, W, _ = P.unary.shape
    steps = [(0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (1, -2), (2, 1), (2, -1)][:conn // 2]
    total = sum(float(P.unary[h, w, x[h, w]]) for h in range(H) for w in range(W))
    pair = 0.0
    for f, (dh, dw) in enumerate(steps):
        for h in range(H):
            for w in range(W):
                for s in (1, -1):
                    h2, w2 = h + s * dh, w + s * dw
                    if 0 <= h2 < H and 0 <= w2 < W:
                        a, b = ((h, w), (h2, w2)) if s == 1 else ((h2, w2), (h, w))
                        wt = float(P.edge_weights[f, a[0], a[1]])
                        pair += 0.5 * wt * float(P.pairwise[x[a], x[b]])
    return total + pair


def test_pairwise_examples():
    assert build_pairwise("p1p2", {"p1": 1, "p2": 4}, 4).matrix[0].tolist() == [0, 1, 4, 4]
    assert build_pairwise("tl", {"trunc": 2}, 4).matrix[0].tolist() == [0, 1, 2, 2]
    assert build_pairwise("potts", None, 2).matrix.tolist() == [[0, 1], [1, 0]]
    assert build_pairwise("tq", {"trunc": 5}, 4).matrix[0].tolist() == [0, 1, 4, 5]


@pytest.mark.parametrize("kind,params", [("tl", {"trunc": 0}), ("tq", {"trunc": -1}),
                                         ("p1p2", {"p1": 3, "p2": 1}), ("p1p2", {"p1": 0, "p2": 1}),
                                         ("huber", {})])
def test_pairwise_errors(kind, params):
    with pytest.raises(ValueError):
        build_pairwise(kind, params, 4)


def test_label_limit():
    build_pairwise("potts", None, 256)
    with pytest.raises(ValueError):
        build_pairwise("potts", None, 257)


@given(st.sampled_from(["potts", "tl", "tq", "p1p2"]), st.integers(1, 12),
       st.floats(0.5, 20), st.floats(0.1, 5))
def test_builtin_pairwise_symmetric_zero_diagonal(kind, L, a, b):
    params = {"trunc": a, "p1": min(a, a + b), "p2": a + b}
    V = build_pairwise(kind, params, L).matrix
    assert np.array_equal(V, V.T)
    assert np.all(np.diag(V) == 0)


def test_default_rho():
    assert default_rho(4) == 0.5
    assert default_rho(8) == 0.5
    assert default_rho(4, 1.0) == 1.0
    with pytest.raises(ValueError):
        default_rho(4, 0.0)
    with pytest.raises(ValueError):
        default_rho(5)


def test_energy_examples():
    P = make_potentials(np.array([[[3.0, 1.0]]]), build_pairwise("potts", None, 2))
    assert energy(P, np.array([[1]])) == 1.0
    P = make_potentials(np.zeros((1, 2, 2)), build_pairwise("potts", None, 2))
    assert energy(P, np.array([[0, 1]])) == 1.0
    with pytest.raises(ValueError):
        energy(P, np.array([[0, 2]]))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.sampled_from([4, 8, 16]),
       st.integers(0, 2 ** 31))
def test_energy_matches_pairwise_visit(H, W, L, conn, seed):
    rng = np.random.default_rng(seed)
    ew = rng.uniform(0, 2, size=(conn // 2, H, W)) * constant_edge_weights(H, W, conn, 1.0, np.float64)
    P = Potentials(rng.normal(size=(H, W, L)), rng.uniform(0, 3, size=(L, L)), ew)
    x = rng.integers(0, L, size=(H, W))
    assert energy(P, x) == pytest.approx(_energy_by_pairs(P, x, conn), rel=1e-12, abs=1e-12)


def test_energy_lower_bound(rng):
    P = make_potentials(rng.normal(size=(3, 4, 3)), build_pairwise("tl", {"trunc": 2}, 3), 8, 0.7,
                        dtype=np.float64)
    floor = P.unary.min(axis=-1).sum()
    for x in itertools.islice(itertools.product(range(3), repeat=12), 0, 3 ** 12, 997):
        assert energy(P, np.array(x).reshape(3, 4)) >= floor - 1e-12


def test_energy_connectivity_restriction(rng):
    P = make_potentials(rng.normal(size=(3, 3, 2)), build_pairwise("potts", None, 2), 8, 1.0,
                        dtype=np.float64)
    x = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    # the checkerboard disagrees on all 12 lattice edges and agrees on all 8 diagonals
    assert energy(P, x, 4) - P.unary[..., 0][x == 0].sum() - P.unary[..., 1][x == 1].sum() == pytest.approx(12)
    assert energy(P, x, 8) == pytest.approx(energy(P, x, 4))


def test_potentials_validation():
    V = np.zeros((2, 2))
    with pytest.raises(ValueError):
        Potentials(np.zeros((2, 2)), V, np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        Potentials(np.full((1, 1, 2), np.nan), V, np.zeros((2, 1, 1)))
    with pytest.raises(ValueError):
        Potentials(np.zeros((1, 2, 2)), V, -np.ones((2, 1, 2)))
    with pytest.raises(ValueError):
        Potentials(np.zeros((1, 2, 2)), V, np.zeros((2, 1, 2)), rho=1.5)


def test_gradient_edge_weights():
    img = np.array([[0.0, 10.0], [0.0, 0.0]])
    ew = gradient_edge_weights(img, 4, lambda a, b: np.exp(-np.abs(a - b)))
    assert ew.shape == (2, 2, 2)
    assert ew[0, 0, 0] == pytest.approx(np.exp(-10))
    assert ew[0, 1, 0] == pytest.approx(1.0)
    assert ew[0, 0, 1] == 0.0  # no east neighbour
