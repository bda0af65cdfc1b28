import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latticett import cross, eigen as E
from latticett import lattice as L
from latticett import oracle, tt


def smith(n, d):
    return tt.meet_tt(L.LatticeSet.range(n), L.identity(), d)


def unit(rng, n):
    x = rng.uniform(-1, 1, n)
    return x / np.linalg.norm(x)


def fd_gradient(f, x, h=1e-5):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(len(x))])


def fd_hessian(f, x, h=1e-4):
    n = len(x)
    I = np.eye(n) * h
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            H[i, j] = (f(x + I[i] + I[j]) - f(x + I[i] - I[j]) - f(x - I[i] + I[j]) + f(x - I[i] - I[j])) / (4 * h * h)
    return H


def providers(n, d):
    return [
        E.KroneckerProvider(n, d),
        E.IdentityProvider(n, d),
        E.TTProvider(smith(n, d)),
        E.TTProvider(cross.lcm_tt(n, d)),
        E.NegatedProvider(E.TTProvider(smith(n, d))),
    ]


@pytest.mark.parametrize("n,d", [(3, 4), (4, 6), (3, 3), (4, 2)])
def test_provider_derivative_consistency(n, d):
    rng = np.random.default_rng(n + d)
    for p in providers(n, d):
        for _ in range(3):
            x = rng.uniform(-1, 1, n)
            g = fd_gradient(p.scalar, x)
            assert np.abs(d * p.vector(x) - g).max() <= 1e-5 * np.abs(g).max(), p
            H = fd_hessian(p.scalar, x)
            assert np.abs(d * (d - 1) * p.matrix(x) - H).max() <= 1e-5 * np.abs(H).max(), p


def test_provider_batches_and_contractions():
    p = E.TTProvider(smith(4, 4))
    X = np.random.default_rng(0).uniform(-1, 1, (3, 4))
    s, v, M = p.contractions(X)
    np.testing.assert_allclose(s, p.scalar(X), rtol=1e-13)
    np.testing.assert_allclose(v, p.vector(X), rtol=1e-13)
    np.testing.assert_allclose(M, p.matrix(X), rtol=1e-13)
    with pytest.raises(TypeError):
        E.as_provider(np.ones((2, 2)))


def test_config_validation():
    with pytest.raises(ValueError):
        E.SolverConfig(mode="X")
    with pytest.raises(ValueError):
        E.SolverConfig(beta=0)
    with pytest.raises(ValueError):
        E.SolverConfig(tau=0)
    with pytest.raises(ValueError):
        E.SolverConfig(tol=-1)


def test_shopm_smith_matrix():
    cfg = E.SolverConfig(mode="H")
    p = E.shopm(smith(2, 2), cfg, np.ones(2) / math.sqrt(2))
    assert abs(p.lam - (3 + math.sqrt(5)) / 2) < 1e-12
    assert p.converged and abs(np.linalg.norm(p.x) - 1) < 1e-14


def test_shopm_rank_one_z():
    u = np.array([0.3, 1.2, 0.7, 2.0])
    t = tt.rank1_tt(u, 4)
    p = E.shopm(t, E.SolverConfig(mode="Z"), np.ones(4) / 2)
    assert math.isclose(p.lam, np.linalg.norm(u) ** 4, rel_tol=1e-13)
    np.testing.assert_allclose(p.x, u / np.linalg.norm(u), atol=1e-12)


@pytest.mark.parametrize("n", range(2, 7))
@pytest.mark.parametrize("d", [3, 4, 5])
def test_shopm_matches_dense_power_method(n, d):
    cfg = E.SolverConfig(mode="H", max_iters=100)
    x0 = E.random_guesses(n, 1, n * d, low=0.0)[0]
    p = E.shopm(smith(n, d), cfg, x0)
    q = oracle.dense_shopm(oracle.dense_meet(L.LatticeSet.range(n), L.identity(), d), cfg, x0)
    assert abs(p.lam - q.lam) <= 1e-10 * max(1.0, abs(q.lam))
    assert p.iterations == q.iterations


def test_shopm_bound_and_residual():
    a = smith(4, 4)
    for mode in "HZ":
        p = E.shopm(a, E.SolverConfig(mode=mode, max_iters=100))
        assert p.converged
        assert 0 < p.lam < E.eigen_bound(a)
        b = E.KroneckerProvider(4, 4) if mode == "H" else E.IdentityProvider(4, 4)
        assert E.residual(a, b, p) <= 1e-8 * max(1.0, abs(p.lam))
        assert math.isclose(E.residual(a, b, p), p.residual, rel_tol=1e-6, abs_tol=1e-12)


def test_shopm_mixed_sign_error():
    with pytest.raises(E.MixedSignError):
        E.shopm(smith(3, 4), E.SolverConfig(mode="H"), -np.ones(3))


def test_shopm_not_converged_flag():
    p = E.shopm(smith(6, 4), E.SolverConfig(mode="Z", max_iters=1))
    assert not p.converged and p.iterations == 1


def test_shopm_extended_precision():
    a = smith(6, 6)
    lo = E.shopm(a, E.SolverConfig(mode="H"))
    hi = E.shopm(a, E.SolverConfig(mode="H", precision="extended"))
    assert hi.lam.dtype == np.longdouble
    assert math.isclose(float(hi.lam), float(lo.lam), rel_tol=1e-13)


def test_geap_same_tensor():
    a = E.TTProvider(smith(3, 4))
    p = E.geap(a, a, E.SolverConfig(mode="B", beta=1), np.ones(3))
    assert p.converged and p.iterations == 1
    assert all(v == pytest.approx(1.0, abs=1e-15) for v in p.history)


@pytest.mark.parametrize("d", [4, 6])
@pytest.mark.parametrize("mode", ["H", "Z"])
def test_geap_minimum_against_scan(d, mode):
    a = smith(2, d)
    b = E.KroneckerProvider(2, d) if mode == "H" else E.IdentityProvider(2, d)
    cfg = E.SolverConfig(mode=mode, beta=-1, tau=10, max_iters=5000)
    x0 = E.prescreen(a, b, cfg, 200, 50)
    p = E.geap(a, b, cfg, x0)
    ref = oracle.eigenvalues_2d(oracle.dense_meet(L.LatticeSet.range(2), L.identity(), d), mode)
    assert p.converged
    assert abs(p.lam - ref.min()) < 1e-10
    assert ref.min() > 0


def test_geap_maximum_against_scan():
    a = smith(2, 4)
    p = E.geap(a, E.IdentityProvider(2, 4), E.SolverConfig(mode="Z", beta=1, max_iters=2000), np.array([0.6, 0.8]))
    ref = oracle.eigenvalues_2d(oracle.dense_meet(L.LatticeSet.range(2), L.identity(), 4), "Z")
    assert abs(p.lam - ref.max()) < 1e-10


def test_geap_sign_flip_recovers_negative_minimum():
    d = 4
    a = E.TTProvider(smith(2, d))
    b = E.TTProvider(cross.lcm_tt(2, d))
    ref = oracle.eigenvalues_2d(oracle.dense_meet(L.LatticeSet.range(2), L.identity(), d),
                                oracle.dense_join(L.LatticeSet.range(2), L.identity(), d))
    negative = ref[ref < 0]
    assert negative.size
    cfg = E.SolverConfig(mode="B", beta=-1, tau=1, max_iters=2000)
    flipped = E.NegatedProvider(b)
    p = E.geap(a, flipped, cfg, E.prescreen(a, flipped, cfg, 200, 50))
    assert abs(-p.lam - negative.max()) < 1e-10


def test_geap_indefinite_denominator():
    a = smith(2, 4)
    b = cross.lcm_tt(2, 4)
    with pytest.raises(E.IndefiniteError):
        E.geap(a, b, E.SolverConfig(mode="B"), np.array([1.0, -1.0]))


def test_geap_monotone_and_shift():
    rng = np.random.default_rng(8)
    for beta in (1, -1):
        for b in (E.KroneckerProvider(4, 4), E.IdentityProvider(4, 4)):
            cfg = E.SolverConfig(mode="H", beta=beta, tau=10, max_iters=3000)
            p = E.geap(smith(4, 4), b, cfg, rng.uniform(0.1, 1, 4))
            steps = np.diff(p.history) * beta
            assert np.all(steps >= -1e-12 * np.maximum(1.0, np.abs(p.history[1:])))
            assert min(p.shifted_min) >= cfg.tau - 1e-10
            assert len(p.trace) == p.iterations + 1


def test_write_trace(tmp_path):
    p = E.geap(smith(3, 4), E.IdentityProvider(3, 4), E.SolverConfig(mode="Z", max_iters=50), np.ones(3))
    path = tmp_path / "trace.csv"
    E.write_trace(p, path)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"iter,lambda,alpha,residual"
    assert len([x for x in lines if x]) == len(p.trace) + 1


def test_hessian_scalar_case():
    # f(x) = |x|^d when A = B, so the second derivative at x = 1 is d(d-1)
    for d in (2, 4, 6):
        t = tt.rank1_tt(np.array([3.0]), d)
        H = E.hessian(t, t, np.array([1.0]))
        assert H.shape == (1, 1)
        assert H[0, 0] == pytest.approx(d * (d - 1), rel=1e-12)


@pytest.mark.parametrize("which", ["delta", "identity", "lcm"])
def test_hessian_finite_differences(which):
    n, d = 3, 4
    a = E.TTProvider(smith(n, d))
    b = {"delta": E.KroneckerProvider(n, d), "identity": E.IdentityProvider(n, d),
         "lcm": E.TTProvider(cross.lcm_tt(n, d))}[which]
    f = lambda x: a.scalar(x) / b.scalar(x) * np.linalg.norm(x) ** d
    rng = np.random.default_rng(12)
    for _ in range(10):
        x = unit(rng, n)
        H = E.hessian(a, b, x)
        ref = fd_hessian(f, x)
        np.testing.assert_allclose(H, H.T, atol=1e-12 * np.abs(H).max())
        assert np.abs(H - ref).max() <= 1e-5 * np.abs(ref).max()


def test_hessian_singular_denominator():
    zero = oracle.DenseProvider(np.zeros((2, 2, 2, 2)))
    with pytest.raises(E.IndefiniteError):
        E.hessian(smith(2, 4), zero, np.array([1.0, 0.0]))


@pytest.mark.parametrize("h,tau,beta,d,alpha", [
    (3 * np.eye(2), 1, 1, 5, 0.0),
    (-np.eye(3), 1, 1, 4, 0.5),
    (np.diag([5.0, -2.0]), 10, -1, 6, -2.5),
])
def test_shift_alpha_examples(h, tau, beta, d, alpha):
    assert E.shift_alpha(h, tau, beta, d) == pytest.approx(alpha, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(2, 8), st.sampled_from([1, -1]), st.floats(0.1, 50), st.integers(0, 2**32 - 1))
def test_shift_alpha_makes_shifted_hessian_definite(n, d, beta, tau, seed):
    m = np.random.default_rng(seed).standard_normal((n, n)) * 20
    h = m + m.T
    alpha = E.shift_alpha(h, tau, beta, d)
    assert beta * alpha >= 0
    assert np.linalg.eigvalsh(beta * (h + alpha * d * np.eye(n)))[0] >= tau - 1e-10


def test_eigen_bound_examples():
    assert E.eigen_bound(smith(2, 2)) == 3
    assert E.eigen_bound(smith(2, 3)) == 5
    disks = E.gershgorin_disks(L.LatticeSet.range(4), L.identity(), 4)
    assert E.eigen_bound(smith(4, 4)) == max(c + r for c, r in disks)


def test_gershgorin_examples():
    assert E.gershgorin_disks(L.LatticeSet.range(2), L.identity(), 3) == [(1.0, 3.0), (2.0, 3.0)]
    assert E.gershgorin_disks(L.LatticeSet.range(1), L.identity(), 5) == [(1.0, 0.0)]


def test_gershgorin_signed_function_against_enumeration():
    f = L.ScalarFunction("alt", lambda k: (-1) ** k * k, lambda a: np.where(a % 2, -a, a).astype(float), nonnegative=False)
    S = L.LatticeSet.range(4)
    d = 3
    dense = oracle.dense_meet(S, f, d)
    got = E.gershgorin_disks(S, f, d)
    for k, (c, r) in enumerate(got):
        assert c == f(k + 1)
        assert r == pytest.approx(np.abs(dense[k]).sum() - abs(dense[k, k, k]))
    with pytest.raises(ValueError):
        E.gershgorin_disks(L.LatticeSet.range(30), f, 6, cap=1000)


def test_dominant_eigenvalue_inside_disks():
    S = L.LatticeSet.range(4)
    disks = E.gershgorin_disks(S, L.identity(), 3)
    p = E.shopm(smith(4, 3), E.SolverConfig(mode="H", max_iters=100))
    assert p.converged
    assert any(abs(p.lam - c) <= r for c, r in disks)


def test_prescreen_single_and_deterministic():
    a, b = smith(3, 4), E.KroneckerProvider(3, 4)
    cfg = E.SolverConfig(mode="H", beta=-1, seed=5)
    np.testing.assert_array_equal(E.prescreen(a, b, cfg, 1, 10), E.random_guesses(3, 1, 5)[0])
    x1 = E.prescreen(a, b, cfg, 50, 20)
    x2 = E.prescreen(a, b, cfg, 50, 20)
    np.testing.assert_array_equal(x1, x2)
    with pytest.raises(ValueError):
        E.prescreen(a, b, cfg, 0, 10)


def test_prescreen_then_geap_converges():
    a, b = smith(3, 6), E.KroneckerProvider(3, 6)
    cfg = E.SolverConfig(mode="H", beta=-1, tau=10, max_iters=5000)
    p = E.geap(a, b, cfg, E.prescreen(a, b, cfg, 1000, 100))
    assert p.converged and p.lam > 0


def test_random_guesses_streams():
    X = E.random_guesses(4, 10, 3)
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0)
    np.testing.assert_array_equal(X[7], E.random_guesses(4, 8, 3)[7])
    assert np.all(E.random_guesses(5, 4, 0, low=0.0) >= 0)


def test_residual_examples():
    A = np.gcd.outer(np.arange(1, 6), np.arange(1, 6)).astype(float)
    w, V = np.linalg.eigh(A)
    a, b = smith(5, 2), E.KroneckerProvider(5, 2)
    assert E.residual(a, b, E.Eigenpair(w[0], V[:, 0], 0, True, 0.0)) <= 1e-12
    x = np.ones(5) / math.sqrt(5)
    assert E.residual(a, b, E.Eigenpair(x @ A @ x, x, 0, False, 0.0)) > 0


@pytest.mark.parametrize("d", [4, 6])
def test_smith_even_order_is_convex(d):
    # y^T (A x^{d-2}) y >= 0 for every x, y
    rng = np.random.default_rng(d)
    for n in (3, 10, 50):
        t = smith(n, d)
        for _ in range(100 if n < 50 else 20):
            x, y = rng.standard_normal(n), rng.standard_normal(n)
            M = tt.contract_matrix(t, x)
            assert y @ M @ y >= -1e-12 * np.abs(M).sum() * (y @ y)


def test_matrix_case_small():
    n = 10
    A = np.gcd.outer(np.arange(1, n + 1), np.arange(1, n + 1)).astype(float)
    w = np.linalg.eigvalsh(A)
    a, b = smith(n, 2), E.KroneckerProvider(n, 2)
    assert abs(E.shopm(a, E.SolverConfig(mode="Z", max_iters=500)).lam - w[-1]) < 1e-10
    lo = E.geap(a, b, E.SolverConfig(mode="H", beta=-1, max_iters=100000), np.ones(n))
    assert abs(lo.lam - w[0]) < 1e-10
