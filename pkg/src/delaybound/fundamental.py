"""Fundamental matrix of ``x' = A(t) x`` and the coefficients ``p(t)``, ``c(t)``.

``p(t) = d ln|w(t)| / dt`` and ``c(t) = |w(t)| |w^{-1}(t)|`` (running
condition number) with ``w(t0) = I`` and the induced 2-norm.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .dde_core import DelayEquation, DelaySpec, HistoryFunction, ToleranceConfig, integrate
from .errors import NonPositiveNorm, SingularFundamental, WindowMismatch


def induced_norm2(M) -> float:
    """Largest singular value of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape == (1, 1):
        return abs(float(M[0, 0]))
    return float(np.linalg.svd(M, compute_uv=False)[0])


class ScalarMatrix:
    """``A(t) = lam(t) I_n``; lets the fundamental matrix be taken in closed form."""

    def __init__(self, lam: Callable[[float], float], n: int, antiderivative: Callable[[float], float] | None = None):
        self.lam = lam
        self.n = n
        self.antiderivative = antiderivative

    def __call__(self, t: float) -> np.ndarray:
        return self.lam(t) * np.eye(self.n)

    def apply(self, t, x):
        return self.lam(t) * x


class DiagonalMatrix:
    """``A(t) = diag(lam_1(t), ..., lam_n(t))``."""

    def __init__(self, lams: Sequence[Callable[[float], float]]):
        self.lams = tuple(lams)
        self.n = len(self.lams)

    def _diag(self, t):
        return np.array([lam(t) for lam in self.lams])

    def __call__(self, t: float) -> np.ndarray:
        return np.diag(self._diag(t))

    def apply(self, t, x):
        d = self._diag(t)
        return d[:, None] * x if np.ndim(x) == 2 else d * x


class PiecewiseLinear:
    """Cheap scalar linear interpolant, constant beyond the end samples."""

    def __init__(self, ts, vals):
        self.ts = [float(v) for v in ts]
        self.vals = [float(v) for v in vals]

    def __call__(self, t: float) -> float:
        ts = self.ts
        if t <= ts[0]:
            return self.vals[0]
        if t >= ts[-1]:
            return self.vals[-1]
        k = bisect_right(ts, t) - 1
        ta, tb = ts[k], ts[k + 1]
        va, vb = self.vals[k], self.vals[k + 1]
        return va + (vb - va) * (t - ta) / (tb - ta)


def sup_over_window(fn: Callable[[float], float], t0: float, t1: float, samples: int = 10_000) -> float:
    """Supremum of a scalar function on ``[t0, t1]``.

    Dense sampling followed by a bounded local refinement around the best
    few samples, so the result does not undershoot smooth maxima.
    """
    ts = np.linspace(t0, t1, samples)
    vals = np.array([fn(t) for t in ts])
    best = float(vals.max())
    if samples < 3:
        return best
    dt = ts[1] - ts[0]
    for j in np.argsort(vals)[-3:]:
        lo, hi = max(t0, ts[j] - dt), min(t1, ts[j] + dt)
        if hi <= lo:
            continue
        res = minimize_scalar(lambda s: -fn(s), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        best = max(best, float(-res.fun))
    return best


@dataclass(frozen=True)
class FundamentalData:
    """Tabulated ``|w|``, ``|w^{-1}|``, ``c`` and ``p`` with interpolants."""

    grid: np.ndarray
    w_norm: np.ndarray
    w_inv_norm: np.ndarray
    c_samples: np.ndarray
    p_samples: np.ndarray
    c: Callable[[float], float]
    p: Callable[[float], float]
    method: str = "matrix"

    @property
    def t0(self) -> float:
        return float(self.grid[0])

    @property
    def t_end(self) -> float:
        return float(self.grid[-1])

    def covers(self, t0: float, t_end: float) -> bool:
        span = max(1.0, abs(t_end))
        return abs(self.t0 - t0) <= 1e-12 * span and self.t_end >= t_end - 1e-9 * span

    def require_window(self, t0: float, t_end: float) -> None:
        if not self.covers(t0, t_end):
            raise WindowMismatch(
                f"fundamental data on [{self.t0}, {self.t_end}] does not cover [{t0}, {t_end}]"
            )

    def p_hat(self, samples: int = 10_000) -> float:
        """Sup of ``p`` over the tabulated window."""
        return sup_over_window(self.p, self.t0, self.t_end, samples)

    def c_hat(self, samples: int = 10_000) -> float:
        return sup_over_window(self.c, self.t0, self.t_end, samples)

    def p_inf(self) -> float:
        return float(np.min(self.p_samples))

    def reconstruct_w_norm(self) -> np.ndarray:
        """``exp(cumulative trapezoid of p)`` on the grid."""
        inc = 0.5 * (self.p_samples[1:] + self.p_samples[:-1]) * np.diff(self.grid)
        return np.exp(np.concatenate([[0.0], np.cumsum(inc)]))


def log_norm_rate(w_norm, grid) -> np.ndarray:
    """``p = d ln|w| / dt`` by finite differences on a (possibly non-uniform) grid.

    Second-order central differences inside, second-order one-sided
    formulas at both ends.
    """
    w_norm = np.asarray(w_norm, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if np.any(~(w_norm > 0)):
        raise NonPositiveNorm("|w(t)| must be positive on the grid")
    if grid.size < 3:
        raise ValueError("need at least three grid points")
    log_w = np.log(w_norm)
    p = np.gradient(log_w, grid, edge_order=2)
    drift = abs(float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(grid))) - (log_w[-1] - log_w[0]))
    if drift > 1e-4:
        warnings.warn(f"integrated log-norm rate drifts from ln|w| by {drift:.2e}; refine the grid", RuntimeWarning)
    return p


def _closed_form_exponents(A, grid: np.ndarray) -> np.ndarray:
    """Integrated diagonal rates ``Lambda_i(t_j) = int_{t0}^{t_j} lam_i``, shape (n, N)."""
    lams = [A.lam] if isinstance(A, ScalarMatrix) else list(A.lams)
    out = np.zeros((len(lams), grid.size))
    for i, lam in enumerate(lams):
        anti = getattr(A, "antiderivative", None) if isinstance(A, ScalarMatrix) else None
        if anti is not None:
            out[i] = [anti(t) - anti(grid[0]) for t in grid]
            continue
        pieces = [quad(lam, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0] for a, b in zip(grid[:-1], grid[1:])]
        out[i, 1:] = np.cumsum(pieces)
    return out


def compute_fundamental(
    A,
    t0: float,
    t_end: float,
    grid_step: float | None = None,
    tol: ToleranceConfig | None = None,
) -> FundamentalData:
    """Tabulate the fundamental matrix data on ``[t0, t_end]``.

    ``A`` is a matrix-valued callable.  :class:`ScalarMatrix` and
    :class:`DiagonalMatrix` inputs are handled in closed form
    (``w = diag(exp int lam_i)``); anything else is integrated as the matrix
    problem ``W' = A(t) W, W(t0) = I`` with the delay-free path of
    :func:`~delaybound.dde_core.integrate`, the grid being forced into the mesh.
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    if grid_step is None:
        grid_step = (t_end - t0) / 2000
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    n_int = max(2, int(math.ceil((t_end - t0) / grid_step - 1e-9)))
    grid = np.linspace(t0, t_end, n_int + 1)

    if isinstance(A, (ScalarMatrix, DiagonalMatrix)):
        return _closed_form(A, grid)

    n = np.atleast_2d(np.asarray(A(t0), dtype=float)).shape[0]
    eq = DelayEquation(
        lambda t, x, d: (np.asarray(A(t), dtype=float) @ x.reshape(n, n)).ravel(),
        DelaySpec.of(),
        HistoryFunction.constant(np.eye(n).ravel(), t0),
        n * n,
    )
    traj = integrate(eq, t_end, tol, tstops=grid[1:-1])
    Ws = traj.sample(grid).reshape(-1, n, n)
    sv = np.linalg.svd(Ws, compute_uv=False)
    smax, smin = sv[:, 0], sv[:, -1]
    with np.errstate(divide="ignore", over="ignore"):
        inv = 1.0 / smin
    if np.any(~(smin > 0)) or np.any(~np.isfinite(inv)):
        j = int(np.argmax(~np.isfinite(inv) | ~(smin > 0)))
        raise SingularFundamental(f"w(t) is numerically singular at t={grid[j]:g}")
    c = smax * inv
    p = log_norm_rate(smax, grid)
    return FundamentalData(grid, smax, inv, c, p, PiecewiseLinear(grid, c), PiecewiseLinear(grid, p), "matrix")


def _closed_form(A, grid: np.ndarray) -> FundamentalData:
    expo = _closed_form_exponents(A, grid)
    top = expo.max(axis=0)
    bottom = expo.min(axis=0)
    w_norm = np.exp(top)
    w_inv = np.exp(-bottom)
    c_samples = np.exp(top - bottom)
    if isinstance(A, ScalarMatrix):
        lam = A.lam
        p_samples = np.array([lam(t) for t in grid])
        return FundamentalData(grid, w_norm, w_inv, np.ones_like(grid), p_samples, lambda t: 1.0, lam, "closed-form")
    lams = A.lams
    lead = [int(i) for i in expo.argmax(axis=0)]
    p_samples = np.array([lams[i](t) for i, t in zip(lead, grid)])
    grid_list = grid.tolist()

    # dominant diagonal entry taken from the sample at or below t
    def p(t: float) -> float:
        k = min(max(bisect_right(grid_list, t) - 1, 0), len(lead) - 1)
        return lams[lead[k]](t)

    log_c = PiecewiseLinear(grid, top - bottom)
    return FundamentalData(grid, w_norm, w_inv, c_samples, p_samples, lambda t: math.exp(log_c(t)), p, "closed-form")
