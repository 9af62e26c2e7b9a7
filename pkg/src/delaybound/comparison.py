"""Numerical checks of solution orderings and finite-time stability.

Orderings can only be sampled.  Every check evaluates the dense outputs on
a uniform grid (2000 points by default) joined with the mesh of the coarsest
trajectory, and allows the slack ``k * (tol_a + tol_b)`` where ``tol`` is
``atol + rtol * |value|`` of each run (``k = 2``).  A comparison that passes
with slack but fails without it is reported as tight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .auxiliary import ScalarDelaySystem, StabilityVerdict
from .dde_core import DelaySpec, HistoryFunction, ToleranceConfig, Trajectory, integrate
from .errors import BadParameters, WindowMismatch
from .nonlinearity import DominatingL

SLACK_FACTOR = 2.0


@dataclass(frozen=True)
class PairCheck:
    """``lower <= upper + slack`` on the grid."""

    max_violation: float
    worst_time: float
    passed: bool
    tight: bool


@dataclass(frozen=True)
class DominationReport:
    """Ordering of ``|x(t)|`` against a chain of scalar bounds (inner to outer)."""

    grid: np.ndarray
    lhs_norm: np.ndarray
    levels: tuple
    slack: np.ndarray
    pairs: tuple
    max_violation: float
    passed: bool
    tight: bool

    @property
    def mid(self) -> np.ndarray:
        return self.levels[0]

    @property
    def outer(self) -> np.ndarray | None:
        return self.levels[1] if len(self.levels) > 1 else None

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "tight": self.tight,
            "max_violation": float(self.max_violation),
            "grid_points": int(self.grid.size),
            "pairs": [
                {"max_violation": float(p.max_violation), "worst_time": float(p.worst_time), "passed": p.passed, "tight": p.tight}
                for p in self.pairs
            ],
        }


def _same_window(trajs: Sequence[Trajectory]) -> None:
    t0, t1 = trajs[0].t_start, trajs[0].t_end
    span = max(1.0, abs(t1))
    for tr in trajs[1:]:
        if abs(tr.t_start - t0) > 1e-9 * span or abs(tr.t_end - t1) > 1e-9 * span:
            raise WindowMismatch(
                f"trajectories cover [{t0}, {t1}] and [{tr.t_start}, {tr.t_end}]"
            )


def check_grid(trajs: Sequence[Trajectory], grid_points: int = 2000) -> np.ndarray:
    """Uniform grid joined with the mesh of the coarsest trajectory."""
    _same_window(trajs)
    t0, t1 = trajs[0].t_start, min(tr.t_end for tr in trajs)
    coarse = min(trajs, key=lambda tr: len(tr.t))
    mesh = coarse.t[(coarse.t >= t0) & (coarse.t <= t1)]
    return np.union1d(np.linspace(t0, t1, grid_points), mesh)


def _pair(lower: np.ndarray, upper: np.ndarray, slack: np.ndarray, grid: np.ndarray) -> PairCheck:
    diff = lower - upper
    j = int(np.argmax(diff))
    worst = float(diff[j])
    passed = bool(np.all(diff <= slack))
    return PairCheck(worst, float(grid[j]), passed, passed and worst > 0)


def verify_domination(
    vec_traj: Trajectory,
    scalar_trajs: Sequence[Trajectory],
    grid_points: int = 2000,
    slack: float | None = None,
    tols: Sequence[ToleranceConfig] | None = None,
    k: float = SLACK_FACTOR,
) -> DominationReport:
    """Check ``|x(t)| <= y_1(t) <= y_2(t) <= ...`` on the check grid.

    With ``slack=None`` each adjacent pair gets ``k * (tol_a.slack(v) +
    tol_b.slack(v))`` with ``v`` the larger of the two values and ``tols``
    the tolerances the runs were made with (defaults for missing entries).
    A float ``slack`` instead means ``slack * (1 + v)``.
    """
    trajs = [vec_traj, *scalar_trajs]
    if len(trajs) < 2:
        raise ValueError("need at least one scalar trajectory")
    grid = check_grid(trajs, grid_points)
    tols = list(tols or [])
    tols += [ToleranceConfig()] * (len(trajs) - len(tols))
    values = [vec_traj.norms(grid)] + [tr.sample(grid)[:, 0] for tr in scalar_trajs]
    pairs = []
    slacks = []
    for i in range(len(trajs) - 1):
        a, b = values[i], values[i + 1]
        mag = np.maximum(np.abs(a), np.abs(b))
        if slack is None:
            s = k * (tols[i].slack(mag) + tols[i + 1].slack(mag))
        else:
            s = slack * (1.0 + mag)
        slacks.append(s)
        pairs.append(_pair(a, b, s, grid))
    passed = all(p.passed for p in pairs)
    return DominationReport(
        grid=grid,
        lhs_norm=values[0],
        levels=tuple(values[1:]),
        slack=np.max(slacks, axis=0),
        pairs=tuple(pairs),
        max_violation=max(p.max_violation for p in pairs),
        passed=passed,
        tight=passed and any(p.tight for p in pairs),
    )


@dataclass(frozen=True)
class OrderingResult:
    passed: bool
    max_violation: float
    tight: bool
    lower: Trajectory = field(repr=False)
    upper: Trajectory = field(repr=False)

    def reversed(self, grid_points: int = 2000, tol: ToleranceConfig | None = None) -> "OrderingResult":
        """The same pair checked in the opposite order (negative control)."""
        return compare_trajectories(self.upper, self.lower, grid_points, tol, tol)


def compare_trajectories(
    lower: Trajectory,
    upper: Trajectory,
    grid_points: int = 2000,
    tol_lower: ToleranceConfig | None = None,
    tol_upper: ToleranceConfig | None = None,
    k: float = SLACK_FACTOR,
) -> OrderingResult:
    grid = check_grid([lower, upper], grid_points)
    a = lower.sample(grid)[:, 0]
    b = upper.sample(grid)[:, 0]
    mag = np.maximum(np.abs(a), np.abs(b))
    s = k * ((tol_lower or ToleranceConfig()).slack(mag) + (tol_upper or ToleranceConfig()).slack(mag))
    p = _pair(a, b, s, grid)
    return OrderingResult(p.passed, p.max_violation, p.tight, lower, upper)


def check_ordering_lemma(
    lower_sys,
    upper_sys,
    horizon: float,
    tol: ToleranceConfig | None = None,
    grid_points: int = 2000,
) -> OrderingResult:
    """Integrate two scalar systems and check ``u_1(t) <= u_2(t)`` on ``[t0, t0 + horizon]``.

    The caller supplies pairs whose right-hand sides and histories are
    ordered, with the upper right-hand side nondecreasing in the delayed
    arguments (true for every :class:`DominatingL`-based system).
    """
    t_end = lower_sys.t0 + horizon
    u1 = integrate(lower_sys, t_end, tol)
    u2 = integrate(upper_sys, t_end, tol)
    return compare_trajectories(u1, u2, grid_points, tol, tol)


@dataclass(frozen=True)
class MonotonicityResult:
    constant: OrderingResult
    variable: OrderingResult | None

    @property
    def passed(self) -> bool:
        return self.constant.passed and (self.variable is None or self.variable.passed)


def check_history_monotonicity(
    scalar_sys: ScalarDelaySystem,
    c1: float,
    c2: float,
    horizon: float,
    variable: Callable[[float], float] | None = None,
    tol: ToleranceConfig | None = None,
    grid_points: int = 2000,
) -> MonotonicityResult:
    """Solutions from constant levels ``c1 <= c2`` stay ordered; a variable
    history with ``sup <= c2`` is dominated by the level-``c2`` solution."""
    if not 0 <= c1 <= c2:
        raise BadParameters("need 0 <= c1 <= c2")
    t_end = scalar_sys.t0 + horizon
    span = scalar_sys.delays.h_upper
    y1 = integrate(scalar_sys.with_constant_history(c1), t_end, tol)
    y2 = integrate(scalar_sys.with_constant_history(c2), t_end, tol)
    const = compare_trajectories(y1, y2, grid_points, tol, tol)
    var = None
    if variable is not None:
        hist = HistoryFunction(variable, scalar_sys.t0, span)
        if hist.sup_norm(1001) > c2 * (1 + 1e-12):
            raise BadParameters("variable history exceeds the constant level")
        yv = integrate(scalar_sys.with_history(hist), t_end, tol)
        var = compare_trajectories(yv, y2, grid_points, tol, tol)
    return MonotonicityResult(const, var)


def check_fts(
    traj: Trajectory,
    alpha: float,
    beta: float,
    T: float,
    gamma: float | None = None,
    grid_points: int = 2000,
) -> StabilityVerdict:
    """Finite-time stability of a trajectory with respect to ``(alpha, beta, T)``.

    FTS holds when the history norm is at most ``alpha`` and
    ``sup_{[t0, t0 + T]} |x| < beta``.  With ``gamma`` the contractive variant
    (FTCS) also needs a ``t1`` in ``(t0, t0 + T)`` after which ``|x| < gamma``;
    the earliest such ``t1`` is reported (refined on the dense output).
    """
    if not (0 < alpha < beta) or not T > 0:
        raise BadParameters("need 0 < alpha < beta and T > 0")
    if gamma is not None and not (0 < gamma < beta):
        raise BadParameters("need 0 < gamma < beta")
    t0 = traj.t_start
    t_end = t0 + T
    if traj.t_end < t_end - 1e-9 * max(1.0, abs(t_end)):
        raise BadParameters(f"trajectory ends at {traj.t_end}, before t0 + T = {t_end}")
    hist_sup = traj.history.sup_norm(1001)
    if hist_sup > alpha * (1 + 1e-12):
        raise BadParameters(f"history norm {hist_sup:g} exceeds alpha = {alpha:g}")
    mesh = traj.t[traj.t <= t_end]
    grid = np.union1d(np.linspace(t0, t_end, grid_points), mesh)
    norms = traj.norms(grid)
    sup = float(norms.max())
    evidence = {"alpha": alpha, "beta": beta, "T": T, "sup": sup, "history_sup": hist_sup}
    if not sup < beta:
        return StabilityVerdict("inconclusive", 0.0, T, {**evidence, "fts": False})
    if gamma is None:
        return StabilityVerdict("FTS", alpha, T, {**evidence, "fts": True})
    above = np.flatnonzero(norms >= gamma)
    evidence["gamma"] = gamma
    if above.size == 0:
        t1 = float(grid[1]) if grid.size > 1 else t0
    elif above[-1] == grid.size - 1:
        return StabilityVerdict("FTS", alpha, T, {**evidence, "fts": True, "ftcs": False})
    else:
        j = int(above[-1])
        g = lambda s: float(np.linalg.norm(np.atleast_1d(traj(s)))) - gamma
        a, b = float(grid[j]), float(grid[j + 1])
        t1 = brentq(g, a, b, xtol=1e-12) if g(a) >= 0 > g(b) else b
    return StabilityVerdict("FTCS", alpha, T, {**evidence, "fts": True, "ftcs": True, "t1": t1})


# --- randomized ordered pairs ---------------------------------------------


def _scalar(p: float, terms, h: float, level, label: str) -> ScalarDelaySystem:
    L = DominatingL(tuple(terms), 2)
    spec = DelaySpec.of(h)
    if callable(level):
        hist = HistoryFunction(level, 0.0, h)
    else:
        hist = HistoryFunction.constant(float(level), 0.0, h)
    return ScalarDelaySystem(p=p, c=1.0, L=L, delays=spec, history=hist, label=label)


def random_ordered_pair(rng: np.random.Generator, kind: str):
    """A pair ``(lower, upper)`` of scalar delay systems whose solutions must be ordered.

    ``kind``:
      ``"history"``  same right-hand side, constant histories ``c1 < c2``;
      ``"rhs"``      same history, upper right-hand side larger by a
                     nonnegative term;
      ``"variable"`` same right-hand side, oscillating history with
                     ``sup = c`` against the constant history ``c``.
    Coefficients keep solutions bounded on the horizons used by the tests.
    """
    h = float(rng.uniform(0.2, 1.5))
    a_cur = float(rng.uniform(0.0, 0.4))
    # a delayed gain bounded away from 0 keeps history differences visible
    a_del = float(rng.uniform(0.1, 0.6))
    cubic = float(rng.uniform(0.0, 0.2))
    bump = (float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.0, 0.3)), float(rng.uniform(0.0, 0.1)))
    # histories stay below 2, so cubic y^3 <= 4 cubic y; a decay rate beyond the
    # upper system's total gain keeps both solutions below their history level
    total = (a_cur + bump[0]) + (a_del + bump[1]) + 4.0 * (cubic + bump[2])
    p = -(total + float(rng.uniform(0.2, 2.0)))
    terms = [(a_cur, (1, 0)), (a_del, (0, 1)), (cubic, (0, 3))]
    if kind == "history":
        c1 = float(rng.uniform(0.05, 0.8))
        c2 = c1 + float(rng.uniform(0.05, 0.4))
        return _scalar(p, terms, h, c1, "lower"), _scalar(p, terms, h, c2, "upper")
    if kind == "rhs":
        level = float(rng.uniform(0.2, 1.0))
        extra = [(a_cur + bump[0], (1, 0)), (a_del + bump[1], (0, 1)), (cubic + bump[2], (0, 3))]
        return _scalar(p, terms, h, level, "lower"), _scalar(p, extra, h, level, "upper")
    if kind == "variable":
        c = float(rng.uniform(0.1, 1.0))
        w = float(rng.uniform(0.5, 4.0))
        depth = float(rng.uniform(0.2, 0.9))
        # values in [c (1 - depth), c]; strictly below c on part of the window
        phase = float(rng.uniform(0, 2 * math.pi))
        shape = lambda t, c=c, w=w, d=depth, ph=phase: c * (1 - d * (1 - math.cos(w * t + ph)) / 2)
        return _scalar(p, terms, h, shape, "variable"), _scalar(p, terms, h, c, "constant")
    raise ValueError(f"unknown pair kind {kind!r}")
