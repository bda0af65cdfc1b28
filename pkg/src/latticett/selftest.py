"""Small oracle-equivalence checks runnable from the command line."""
from __future__ import annotations

import itertools

import numpy as np

from . import cross, eigen, lattice, oracle, tt


def _meet_exact():
    for n, d, name in itertools.product(range(1, 6), range(2, 5), ("id", "sq", "inv")):
        f = lattice.get_function(name)
        S = lattice.LatticeSet.range(n)
        a, b = tt.to_dense(tt.meet_tt(S, f, d)), oracle.dense_meet(S, f, d)
        if not np.allclose(a, b, rtol=1e-12, atol=0):
            return f"meet tensor n={n} d={d} f={name}"


def _contractions():
    rng = np.random.default_rng(7)
    for n, d in itertools.product(range(2, 5), range(2, 5)):
        t = tt.meet_tt(lattice.LatticeSet.range(n), lattice.identity(), d)
        a = oracle.dense_meet(lattice.LatticeSet.range(n), lattice.identity(), d)
        for _ in range(5):
            x = rng.uniform(-1, 1, n)
            for got, times in ((tt.contract_scalar(t, x), d), (tt.contract_vector(t, x), d - 1),
                               (tt.contract_matrix(t, x), d - 2)):
                ref = oracle.dense_contract(a, x, times)
                if not np.allclose(got, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max()):
                    return f"contraction n={n} d={d} times={times}"


def _lcm_cross():
    for n, d in ((3, 3), (4, 4), (5, 4)):
        t = cross.lcm_tt(n, d)
        ref = oracle.dense_join(lattice.LatticeSet.range(n), lattice.identity(), d)
        if not np.array_equal(np.rint(tt.to_dense(t)), ref):
            return f"lcm cross n={n} d={d}"


def _power_method():
    for n, d in ((3, 3), (4, 4), (5, 4)):
        S = lattice.LatticeSet.range(n)
        cfg = eigen.SolverConfig(mode="H", max_iters=50)
        x0 = eigen.random_guesses(n, 1, 0, low=0.0)[0]
        p = eigen.shopm(tt.meet_tt(S, lattice.identity(), d), cfg, x0)
        q = oracle.dense_shopm(oracle.dense_meet(S, lattice.identity(), d), cfg, x0)
        if abs(p.lam - q.lam) > 1e-10 * max(1.0, abs(q.lam)):
            return f"power method n={n} d={d}"


def _hessian():
    rng = np.random.default_rng(3)
    n, d = 3, 4
    a = tt.meet_tt(lattice.LatticeSet.range(n), lattice.identity(), d)
    b = eigen.KroneckerProvider(n, d)
    A = eigen.as_provider(a)
    f = lambda x: A.scalar(x) / b.scalar(x) * np.linalg.norm(x) ** d
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    h = 1e-4
    fd = np.empty((n, n))
    I = np.eye(n) * h
    for i, j in itertools.product(range(n), repeat=2):
        fd[i, j] = (f(x + I[i] + I[j]) - f(x + I[i] - I[j]) - f(x - I[i] + I[j]) + f(x - I[i] - I[j])) / (4 * h * h)
    H = eigen.hessian(a, b, x)
    if np.abs(H - fd).max() > 1e-5 * np.abs(fd).max():
        return "hessian"


CHECKS = [
    ("meet tensor entries", _meet_exact),
    ("TT contractions", _contractions),
    ("LCM cross interpolation", _lcm_cross),
    ("power method", _power_method),
    ("GEAP Hessian", _hessian),
]


def run(out) -> int:
    failures = 0
    for label, check in CHECKS:
        try:
            problem = check()
        except Exception as exc:  # report and keep going
            problem = f"{type(exc).__name__}: {exc}"
        status = "ok" if problem is None else f"FAIL ({problem})"
        failures += problem is not None
        out.write(f"{label}: {status}\n")
    return failures
