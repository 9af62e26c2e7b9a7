"""Independent reference values for the test suite.

Nothing here imports the package under test.
"""

import math

import numpy as np


def expm_taylor(A, terms: int = 30) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a truncated Taylor series."""
    A = np.asarray(A, dtype=float)
    norm = np.abs(A).sum(axis=1).max()
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    B = A / 2.0**s
    term = np.eye(A.shape[0])
    out = term.copy()
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def largest_singular_value(M) -> float:
    """sqrt of the top eigenvalue of M^T M (power iteration, many rounds)."""
    M = np.asarray(M, dtype=float)
    G = M.T @ M
    v = np.ones(G.shape[0]) / math.sqrt(G.shape[0])
    v = v + 0.1 * np.arange(G.shape[0])
    for _ in range(2000):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
    return math.sqrt(float(v @ G @ v))


def delayed_decay_unit_history(t: float) -> float:
    """u' = -u(t - 1), u = 1 on [-1, 0], by hand on the first two steps."""
    if t <= 0:
        return 1.0
    if t <= 1:
        return 1.0 - t
    if t <= 2:
        return 1.5 - 2.0 * t + 0.5 * t * t
    raise ValueError("oracle only covers [0, 2]")


def lambda_a_integral(t: float, lam0=-3.0, q=0.1, d=5.0) -> float:
    """int_0^t (lam0 + q sin(d s)) ds."""
    return lam0 * t + q * (1.0 - math.cos(d * t)) / d


def cubic_blowup_time(r: float) -> float:
    """Blow-up time of y' = -y + y^3 from y(0) = r > 1."""
    return -0.5 * math.log(1.0 - 1.0 / (r * r))


def cubic_positive_root(p: float, lin: float, cub: float) -> float:
    """Smallest positive root of p y + lin y + cub y^3 via numpy's companion matrix."""
    roots = np.roots([cub, 0.0, p + lin, 0.0])
    pos = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
    return min(pos)
