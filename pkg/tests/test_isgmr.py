import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpmrf import _kernels
from mpmrf.grid import build_topology
from mpmrf.isgmr import isgmr_forward, isgmr_iterate_energy
from mpmrf.oracles import brute_force_map, chain_min_marginals
from mpmrf.potentials import Potentials, build_pairwise, energy, make_potentials
from mpmrf.results import IndexStore


def _random(rng, H, W, L, conn=4, dtype=np.float64):
    V = build_pairwise("tl", {"trunc": 2.0}, L).matrix
    ew = rng.uniform(0.2, 2.0, size=(conn // 2, H, W))
    return Potentials(rng.normal(size=(H, W, L)).astype(dtype), V.astype(dtype), ew.astype(dtype))


def test_two_node_example():
    P = make_potentials(np.array([[[0.0, 2.0], [0.0, 0.0]]]), build_pairwise("potts", None, 2),
                        dtype=np.float64)
    out, msgs, store = isgmr_forward(P, dirs=[0, 1], iterations=1)
    assert msgs.m[0, 0, 1].tolist() == [0.0, 1.0]  # min already 0, so reparametrization is a no-op
    assert store.p[0, 0].tolist() == [0, 0]
    assert store.q[0, 0] == 0


def test_single_label():
    P = make_potentials(np.arange(6.0).reshape(2, 3, 1), build_pairwise("potts", None, 1), dtype=np.float64)
    out, msgs, _ = isgmr_forward(P, 4, 3)
    assert np.all(msgs.m == 0)
    assert np.array_equal(out.costs, P.unary)


@given(st.integers(1, 12), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_chain_min_marginals(n, L, seed):
    rng = np.random.default_rng(seed)
    P = _random(rng, 1, n, L)
    out, _, _ = isgmr_forward(P, dirs=[0, 1], iterations=1)
    mm = chain_min_marginals(P.unary[0], P.edge_weights[0, 0, :n - 1], P.pairwise)
    c = out.costs[0]
    assert np.allclose(c - c.min(1, keepdims=True), mm - mm.min(1, keepdims=True), rtol=0, atol=1e-9)


def test_chain_exact_for_many_iterations(rng):
    P = _random(rng, 1, 9, 4)
    mm = chain_min_marginals(P.unary[0], P.edge_weights[0, 0, :8], P.pairwise)
    for K in (1, 2, 5):
        c = isgmr_forward(P, dirs=[0, 1], iterations=K)[0].costs[0]
        assert np.allclose(c - c.min(1, keepdims=True), mm - mm.min(1, keepdims=True), atol=1e-9)
    labels, e = brute_force_map(P)
    assert energy(P, isgmr_forward(P, dirs=[0, 1], iterations=3)[0].labels) == pytest.approx(e)


def test_reparametrized_messages_have_zero_minimum(rng):
    P = _random(rng, 5, 6, 4, 8)
    _, msgs, _ = isgmr_forward(P, 8, 3)
    assert np.all(msgs.m.min(axis=-1) == 0)


def test_zero_pairwise_gives_unary_argmin(rng):
    P = _random(rng, 6, 5, 4)
    P = Potentials(P.unary, np.zeros_like(P.pairwise), P.edge_weights)
    out, _, _ = isgmr_forward(P, 4, 4)
    assert np.array_equal(out.labels, P.unary.argmin(-1))
    assert np.allclose(out.costs, P.unary)


def test_node_constant_shift_keeps_labels(rng):
    P = _random(rng, 6, 7, 5)
    shifted = P.with_unary(P.unary + rng.normal(size=(6, 7, 1)) * 10)
    a = isgmr_forward(P, 4, 3)[0]
    b = isgmr_forward(shifted, 4, 3)[0]
    assert np.array_equal(a.labels, b.labels)


def test_direction_order_invariance(rng):
    P = _random(rng, 7, 6, 4, 8)
    ids = list(range(8))
    perm = [5, 2, 7, 0, 3, 6, 1, 4]
    a_out, a_msg, a_st = isgmr_forward(P, ids, 3)
    b_out, b_msg, _ = isgmr_forward(P, perm, 3)
    # equal up to summation order of the direction terms
    assert np.allclose(a_out.costs, b_out.costs, rtol=0, atol=1e-12)
    assert np.array_equal(a_out.labels, b_out.labels)
    for local, d in enumerate(perm):
        assert np.allclose(b_msg.m[local], a_msg.m[d], rtol=0, atol=1e-12)


def test_serial_and_parallel_builds_agree(rng):
    P = _random(rng, 9, 11, 5, 8, np.float32)
    runs = []
    for parallel in (False, True):
        old = _kernels.SERIAL_WORK
        _kernels.SERIAL_WORK = 0 if parallel else 1 << 40
        try:
            runs.append(isgmr_forward(P, 8, 3))
        finally:
            _kernels.SERIAL_WORK = old
    (a, am, ast), (b, bm, bst) = runs
    assert np.array_equal(a.costs, b.costs)
    assert np.array_equal(ast.p, bst.p) and np.array_equal(ast.q, bst.q)


def test_repeat_runs_identical(rng):
    P = _random(rng, 8, 8, 6, 16, np.float32)
    a = isgmr_forward(P, 16, 2)
    b = isgmr_forward(P, 16, 2)
    assert np.array_equal(a[0].costs, b[0].costs)
    assert np.array_equal(a[2].p, b[2].p)


@pytest.mark.parametrize("conn,K,L", [(4, 1, 3), (8, 3, 5), (16, 2, 2)])
def test_index_store_size(rng, conn, K, L):
    P = _random(rng, 5, 7, L, conn)
    _, _, store = isgmr_forward(P, conn, K)
    topo = build_topology(5, 7, conn)
    assert store.nbytes == IndexStore.expected_nbytes(K, topo, L) == K * topo.num_edges * (L + 1)
    assert store.p.dtype == np.uint8 and store.q.dtype == np.uint8
    assert store.p.max() < L and store.q.max() < L


def test_iterate_energy_consistency(rng):
    P = _random(rng, 8, 8, 4)
    es = isgmr_iterate_energy(P, 4, 5)
    assert len(es) == 5
    assert es[0] == pytest.approx(energy(P, isgmr_forward(P, 4, 1)[0].labels, 4))
    assert es[-1] == pytest.approx(energy(P, isgmr_forward(P, 4, 5)[0].labels, 4))


def test_errors(rng):
    P = _random(rng, 3, 3, 2)
    with pytest.raises(ValueError):
        isgmr_forward(P, 4, 0)
    with pytest.raises(ValueError):
        isgmr_forward(P, 8, 1)  # only two edge families
    bad = np.array(P.unary)
    bad[0, 0, 0] = np.inf
    broken = object.__new__(Potentials)
    object.__setattr__(broken, "unary", bad)
    for name in ("pairwise", "edge_weights", "rho"):
        object.__setattr__(broken, name, getattr(P, name))
    with pytest.raises(ValueError, match="non-finite"):
        isgmr_forward(broken, 4, 1)
