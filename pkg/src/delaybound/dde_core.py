"""Method-of-steps integrator for retarded delay differential equations.

The scheme is the Bogacki-Shampine 3(2) embedded pair (the same pair used by
MATLAB's ``dde23``) with the cubic Hermite interpolant as dense output.  The
step is capped at the smallest delay so every delayed argument lands on a
completed step or on the history, and the mesh is forced through the points
where derivative discontinuities propagate from the initial time.

Systems are duck-typed: anything exposing ``delays`` (a :class:`DelaySpec`),
``history`` (a :class:`HistoryFunction`), ``dim`` and ``rhs(t, x, delayed)``
can be integrated.  ``x`` and each entry of ``delayed`` are float arrays of
shape ``(dim,)``.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BlowUp, DelayViolation, InvalidSystem, OutOfDomain, StepUnderflow

Delay = Union[float, Callable[[float], float]]

# Bogacki-Shampine 3(2) tableau
_C2, _C3 = 0.5, 0.75
_B1, _B2, _B3 = 2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0
_E1, _E2, _E3, _E4 = -5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0

# derivative discontinuities are tracked up to this order; beyond it the
# solution is smooth enough for a third-order pair
_MAX_DISC_ORDER = 3


@dataclass(frozen=True)
class ToleranceConfig:
    """Accuracy and safety knobs for :func:`integrate`.

    ``rtol``/``atol`` are the accuracy the caller asks for.  Steps are
    accepted when the norm-wise local error estimate is below
    ``local_fraction * (atol + rtol |y|)``; a 3(2) pair accumulates several
    local errors into the global one, and the default fraction keeps the
    global error of typical runs within ``atol + rtol |y|``.  ``residual`` bounds the relative defect
    ``|x'(t) - rhs(t)| / (1 + |rhs(t)|)`` of the dense output, see
    :meth:`Trajectory.residual`.
    """

    rtol: float = 1e-6
    atol: float = 1e-9
    residual: float = 1e-3
    overflow: float = 1e6
    min_step: float = 1e-12
    max_step: float = math.inf
    local_fraction: float = 0.1

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.local_fraction <= 1:
            raise ValueError("local_fraction must be in (0, 1]")

    def refined(self, factor: float = 0.5) -> "ToleranceConfig":
        """Same config with rtol, atol and residual scaled by ``factor``."""
        return ToleranceConfig(
            rtol=self.rtol * factor,
            atol=self.atol * factor,
            residual=self.residual * factor,
            overflow=self.overflow,
            min_step=self.min_step,
            max_step=self.max_step,
            local_fraction=self.local_fraction,
        )

    def slack(self, magnitude: float | np.ndarray = 0.0):
        """Error allowance ``atol + rtol * magnitude`` used by ordering checks."""
        return self.atol + self.rtol * np.abs(magnitude)


def _refine_extreme(fn, ts: np.ndarray, vals: np.ndarray, sign: float) -> float:
    """Max (sign=1) or min (sign=-1) of ``fn`` refined around the best sample,
    so sampled delay bounds do not undershoot smooth extrema."""
    j = int(np.argmax(sign * vals))
    lo, hi = ts[max(j - 1, 0)], ts[min(j + 1, len(ts) - 1)]
    best = float(vals[j])
    if hi > lo:
        res = minimize_scalar(lambda s: -sign * fn(s), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        cand = float(fn(res.x))
        best = max(best, cand) if sign > 0 else min(best, cand)
    return best


@dataclass(frozen=True)
class DelaySpec:
    """Bounded delays ``h_i(t)`` with ``0 < h_lower <= h_i(t) <= h_upper``.

    Entries are floats (constant delays) or callables.  Use :meth:`of` to
    build one; it samples callable delays on ``window`` to find the bounds
    unless they are given explicitly.  An empty spec (no delays) is allowed
    and has ``h_lower = inf``, ``h_upper = 0``.
    """

    delays: tuple
    h_lower: float
    h_upper: float

    @classmethod
    def of(
        cls,
        *delays: Delay,
        window: tuple[float, float] = (0.0, 100.0),
        samples: int = 4001,
        h_lower: float | None = None,
        h_upper: float | None = None,
    ) -> "DelaySpec":
        normalized = []
        lows, highs = [], []
        ts = np.linspace(window[0], window[1], samples)
        for d in delays:
            if callable(d):
                vals = np.array([float(d(t)) for t in ts])
                normalized.append(d)
            else:
                vals = np.array([float(d)])
                normalized.append(float(d))
            if not np.all(np.isfinite(vals)):
                raise DelayViolation("delay is not finite on the sampling window")
            if callable(d) and samples > 2:
                lows.append(_refine_extreme(d, ts, vals, -1.0))
                highs.append(_refine_extreme(d, ts, vals, 1.0))
            else:
                lows.append(vals.min())
                highs.append(vals.max())
        lo = min(lows) if lows else math.inf
        hi = max(highs) if highs else 0.0
        if h_lower is not None:
            lo = float(h_lower)
        if h_upper is not None:
            hi = float(h_upper)
        spec = cls(tuple(normalized), lo, hi)
        spec._validate_bounds()
        return spec

    def _validate_bounds(self):
        if not self.delays:
            return
        if not (self.h_lower > 0):
            raise DelayViolation(f"h_lower must be positive, got {self.h_lower}")
        if not math.isfinite(self.h_upper):
            raise DelayViolation("h_upper must be finite")
        if self.h_upper < self.h_lower:
            raise DelayViolation("h_upper < h_lower")

    def __len__(self) -> int:
        return len(self.delays)

    def is_constant(self, i: int) -> bool:
        return not callable(self.delays[i])

    def value(self, i: int, t: float) -> float:
        d = self.delays[i]
        return d(t) if callable(d) else d

    def check(self, t0: float, t_end: float, samples: int = 2001) -> None:
        """Raise :class:`DelayViolation` if a sampled delay leaves its band."""
        self._validate_bounds()
        ts = np.linspace(t0, t_end, samples)
        lo = self.h_lower * (1 - 1e-12)
        hi = self.h_upper * (1 + 1e-12)
        for i, d in enumerate(self.delays):
            if not callable(d):
                vals = (d,)
            else:
                vals = [d(t) for t in ts]
            for v in vals:
                if not (lo <= v <= hi):
                    raise DelayViolation(
                        f"delay {i} takes value {v:g} outside "
                        f"[{self.h_lower:g}, {self.h_upper:g}]"
                    )

    def concat(self, other: "DelaySpec") -> "DelaySpec":
        """Delay set ``self`` followed by ``other`` (indices of self unchanged)."""
        if not other.delays:
            return self
        if not self.delays:
            return other
        return DelaySpec(
            self.delays + other.delays,
            min(self.h_lower, other.h_lower),
            max(self.h_upper, other.h_upper),
        )


class HistoryFunction:
    """Initial function on ``[t0 - span, t0]``.

    ``func`` returns a float (scalar systems) or a 1-D array.  Constant
    histories should be built with :meth:`constant`, which skips the call.
    """

    def __init__(self, func: Callable, t0: float = 0.0, span: float = 0.0, *, const=None):
        self.func = func
        self.t0 = float(t0)
        self.span = float(span)
        self._const = const
        self._scalar = np.ndim(func(self.t0)) == 0

    @classmethod
    def constant(cls, value, t0: float = 0.0, span: float = 0.0) -> "HistoryFunction":
        if np.ndim(value) == 0:
            v = float(value)
            return cls(lambda t, v=v: v, t0, span, const=v)
        arr = np.array(value, dtype=float)
        arr.setflags(write=False)
        return cls(lambda t, a=arr: a, t0, span, const=arr)

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    @property
    def is_scalar(self) -> bool:
        return self._scalar

    @property
    def x0(self):
        return self(self.t0)

    def __call__(self, t: float):
        if self._const is not None:
            return self._const
        return self.func(t)

    def as_array(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self(t), dtype=float))

    def sample_times(self, samples: int = 201) -> np.ndarray:
        if self.span <= 0:
            return np.array([self.t0])
        return np.linspace(self.t0 - self.span, self.t0, samples)

    def sup_norm(self, samples: int = 201) -> float:
        if self._const is not None:
            return float(np.linalg.norm(np.atleast_1d(self._const)))
        return max(float(np.linalg.norm(self.as_array(t))) for t in self.sample_times(samples))

    def check_continuity(self, samples: int = 1001, jump: float = 1e-2) -> bool:
        """Sampled continuity test: no jump between neighbours larger than ``jump``
        times the sup-norm (plus one)."""
        if self._const is not None:
            return True
        vals = np.array([self.as_array(t) for t in self.sample_times(samples)])
        steps = np.linalg.norm(np.diff(vals, axis=0), axis=1)
        return bool(np.all(steps <= jump * (1.0 + self.sup_norm(samples))))

    def with_span(self, span: float) -> "HistoryFunction":
        h = HistoryFunction.__new__(HistoryFunction)
        h.func, h.t0, h.span, h._const, h._scalar = self.func, self.t0, float(span), self._const, self._scalar
        return h

    def norm_history(self) -> "HistoryFunction":
        """Scalar history ``t -> |phi(t)|``."""
        if self._const is not None:
            return HistoryFunction.constant(float(np.linalg.norm(np.atleast_1d(self._const))), self.t0, self.span)
        f = self.func
        return HistoryFunction(lambda t: float(np.linalg.norm(np.atleast_1d(f(t)))), self.t0, self.span)


class DelaySystem(Protocol):
    delays: DelaySpec
    history: HistoryFunction
    dim: int

    def rhs(self, t: float, x: np.ndarray, delayed: Sequence[np.ndarray]) -> np.ndarray: ...


@dataclass(frozen=True)
class DelayEquation:
    """Generic retarded equation ``x' = rhs(t, x, [x(t - h_i(t))])``."""

    func: Callable[[float, np.ndarray, Sequence[np.ndarray]], np.ndarray]
    delays: DelaySpec
    history: HistoryFunction
    dim: int = 1

    def rhs(self, t, x, delayed):
        return self.func(t, x, delayed)

    @property
    def is_scalar(self) -> bool:
        return self.history.is_scalar

    def with_history(self, history: HistoryFunction) -> "DelayEquation":
        return DelayEquation(self.func, self.delays, history, self.dim)


def _hermite(th, hh, ya, yb, fa, fb):
    th2 = th * th
    th3 = th2 * th
    h00 = 2 * th3 - 3 * th2 + 1
    h10 = th3 - 2 * th2 + th
    h01 = -2 * th3 + 3 * th2
    h11 = th3 - th2
    return h00 * ya + (h10 * hh) * fa + h01 * yb + (h11 * hh) * fb


def _hermite_derivative(th, hh, ya, yb, fa, fb):
    th2 = th * th
    d00 = 6 * th2 - 6 * th
    d10 = 3 * th2 - 4 * th + 1
    d01 = -6 * th2 + 6 * th
    d11 = 3 * th2 - 2 * th
    return (d00 * ya + d01 * yb) / hh + d10 * fa + d11 * fb


class Trajectory:
    """Dense-output solution on ``[t_start - h_upper, t_end]``.

    For ``t <= t_start`` evaluation passes through to the history function;
    at mesh nodes the stored node values are returned exactly.
    """

    def __init__(self, t, y, f, history: HistoryFunction, h_upper: float, *, scalar: bool, stats=None):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.f = np.asarray(f, dtype=float)
        for arr in (self.t, self.y, self.f):
            arr.setflags(write=False)
        self.history = history
        self.h_upper = float(h_upper)
        self.scalar = scalar
        self.stats = dict(stats or {})

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    def _check(self, t: float):
        lo = self.t_start - self.h_upper
        span = max(1.0, abs(self.t_end))
        if t < lo - 1e-12 * span or t > self.t_end + 1e-12 * span:
            raise OutOfDomain(f"t={t!r} outside [{lo!r}, {self.t_end!r}]")

    def _segment(self, t: float) -> int:
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        return min(max(k, 0), len(self.t) - 2)

    def evaluate(self, t: float):
        """State at ``t`` (float for scalar trajectories, array otherwise)."""
        self._check(t)
        if t <= self.t_start:
            return self.history(t) if t < self.t_start else self._out(self.y[0])
        if len(self.t) == 1:
            return self._out(self.y[0])
        k = self._segment(t)
        ta, tb = self.t[k], self.t[k + 1]
        if t == ta:
            return self._out(self.y[k])
        if t >= tb:
            return self._out(self.y[k + 1])
        hh = tb - ta
        val = _hermite((t - ta) / hh, hh, self.y[k], self.y[k + 1], self.f[k], self.f[k + 1])
        return self._out(val)

    __call__ = evaluate

    def _out(self, v):
        return float(v[0]) if self.scalar else np.array(v)

    def sample(self, ts: Iterable[float]) -> np.ndarray:
        """Vectorized evaluation; returns shape ``(len(ts), dim)``."""
        ts = np.asarray(ts, dtype=float)
        out = np.empty((ts.size, self.dim))
        if ts.size == 0:
            return out
        self._check(float(ts.min()))
        self._check(float(ts.max()))
        past = ts < self.t_start
        for j in np.flatnonzero(past):
            out[j] = self.history.as_array(ts[j])
        idx = np.flatnonzero(~past)
        if idx.size:
            tq = ts[idx]
            if len(self.t) == 1:
                out[idx] = self.y[0]
                return out
            k = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
            ta, tb = self.t[k], self.t[k + 1]
            hh = (tb - ta)[:, None]
            th = ((tq - ta) / (tb - ta))[:, None]
            out[idx] = _hermite(th, hh, self.y[k], self.y[k + 1], self.f[k], self.f[k + 1])
            exact = tq == ta
            out[idx[exact]] = self.y[k[exact]]
            exact_b = tq == tb
            out[idx[exact_b]] = self.y[k[exact_b] + 1]
        return out

    def norms(self, ts: Iterable[float]) -> np.ndarray:
        return np.linalg.norm(self.sample(ts), axis=1)

    def derivative(self, ts: Iterable[float]) -> np.ndarray:
        """Derivative of the dense output for ``t_start <= t <= t_end``."""
        ts = np.asarray(ts, dtype=float)
        k = np.clip(np.searchsorted(self.t, ts, side="right") - 1, 0, len(self.t) - 2)
        ta, tb = self.t[k], self.t[k + 1]
        hh = (tb - ta)[:, None]
        th = ((ts - ta) / (tb - ta))[:, None]
        return _hermite_derivative(th, hh, self.y[k], self.y[k + 1], self.f[k], self.f[k + 1])

    def residual(self, system: DelaySystem, points: Iterable[float] | None = None) -> float:
        """Max relative defect ``|u'(t) - rhs(t, u(t), u(t - h_i))| / (1 + |rhs|)``.

        Defaults to the midpoints of all accepted steps.
        """
        if points is None:
            points = 0.5 * (self.t[:-1] + self.t[1:])
        points = np.asarray(points, dtype=float)
        if points.size == 0:
            return 0.0
        du = self.derivative(points)
        u = self.sample(points)
        worst = 0.0
        delays = system.delays
        for j, s in enumerate(points):
            delayed = [self.sample([s - delays.value(i, s)])[0] for i in range(len(delays))]
            r = np.atleast_1d(np.asarray(system.rhs(s, u[j], delayed), dtype=float))
            worst = max(worst, float(np.linalg.norm(du[j] - r) / (1.0 + np.linalg.norm(r))))
        return worst

    @property
    def mesh(self) -> np.ndarray:
        return self.t


def _breakpoints(delays: DelaySpec, t0: float, t_end: float, extra: Iterable[float]) -> list[float]:
    pts = set()
    if delays.delays and math.isfinite(delays.h_lower):
        k = 1
        while True:
            b = t0 + k * delays.h_lower
            if b >= t_end:
                break
            pts.add(b)
            k += 1
    consts = [d for d in delays.delays if not callable(d)]
    level = {t0}
    for _ in range(_MAX_DISC_ORDER):
        level = {b + h for b in level for h in consts if b + h < t_end}
        pts |= level
    for s in extra:
        if t0 < s < t_end:
            pts.add(float(s))
    pts.add(float(t_end))
    merged = []
    tiny = 1e-12 * max(1.0, abs(t_end), abs(t0))
    for b in sorted(pts):
        if b - t0 <= tiny:
            continue
        if merged and b - merged[-1] <= tiny:
            continue
        merged.append(b)
    if merged and abs(merged[-1] - t_end) <= tiny:
        merged[-1] = float(t_end)
    return merged


def _next_disc(delays: DelaySpec, var_idx, discs, t: float, dt: float, span: float):
    """Earliest ``s`` in ``(t, t + dt)`` where ``s - h_i(s)`` hits a tracked
    discontinuity, as ``(s, order)``; None if there is none."""
    hit = None
    for i in var_idx:
        hf = delays.delays[i]
        a = t - hf(t)
        b = t + dt - hf(t + dt)
        for d, order in discs:
            if order >= _MAX_DISC_ORDER or not (a < d < b):
                continue
            s_star = brentq(lambda s, d=d, hf=hf: s - hf(s) - d, t, t + dt, xtol=1e-14 * span)
            if s_star - t > 1e-12 * span and (hit is None or s_star < hit[0]):
                hit = (s_star, order + 1)
    return hit


def integrate(
    system: DelaySystem,
    t_end: float,
    tol: ToleranceConfig | None = None,
    *,
    monitor: Callable[[float, float], bool] | None = None,
    tstops: Iterable[float] = (),
) -> Trajectory:
    """Integrate ``system`` from its history's ``t0`` to ``t_end``.

    Parameters
    ----------
    system
        Vector, scalar or generic delay system (see module docstring).
    t_end
        Final time, must exceed ``t0``.
    tol
        Tolerances; defaults to ``ToleranceConfig()``.
    monitor
        Optional callback ``monitor(t, |x(t)|)`` run after every accepted
        step.  Returning True aborts with :class:`BlowUp`.
    tstops
        Extra times forced into the mesh.

    Raises
    ------
    BlowUp
        The state norm exceeded ``tol.overflow`` (or the monitor fired).
    StepUnderflow
        The adaptive step dropped below ``tol.min_step``.
    DelayViolation
        A delay left ``[h_lower, h_upper]``.
    """
    tol = tol or ToleranceConfig()
    hist = system.history
    delays = system.delays
    t0 = hist.t0
    t_end = float(t_end)
    if not t_end > t0:
        raise ValueError(f"t_end={t_end} must exceed t0={t0}")
    delays.check(t0, t_end)
    check_window = getattr(system, "check_window", None)
    if check_window is not None:
        check_window(t_end)

    rhs = system.rhs
    rtol, atol = tol.rtol * tol.local_fraction, tol.atol * tol.local_fraction
    overflow = tol.overflow
    n_delays = len(delays)
    h_lo, h_hi = delays.h_lower, delays.h_upper
    lo_ok = h_lo * (1 - 1e-12)
    hi_ok = h_hi * (1 + 1e-12)
    const_h = [None if callable(d) else d for d in delays.delays]
    var_idx = [i for i, d in enumerate(delays.delays) if callable(d)]
    step_cap = min(tol.max_step, h_lo)

    T: list[float] = [t0]
    Y: list[np.ndarray] = []
    F: list[np.ndarray] = []
    hist_const = None if not hist.is_constant else hist.as_array(t0)

    def past(s: float) -> np.ndarray:
        if s <= t0:
            if hist_const is not None:
                return hist_const
            return hist.as_array(s)
        k = bisect_right(T, s) - 1
        if k >= len(T) - 1:
            if s - T[-1] <= 1e-12 * max(1.0, abs(s)):
                return Y[-1]
            raise DelayViolation(f"delayed argument {s} beyond computed solution {T[-1]}")
        ta = T[k]
        hh = T[k + 1] - ta
        return _hermite((s - ta) / hh, hh, Y[k], Y[k + 1], F[k], F[k + 1])

    def delayed_at(s: float) -> list:
        out = []
        for i in range(n_delays):
            h = const_h[i]
            if h is None:
                h = delays.delays[i](s)
                if not (lo_ok <= h <= hi_ok):
                    raise DelayViolation(f"delay {i} = {h:g} at t={s:g} outside [{h_lo:g}, {h_hi:g}]")
            out.append(past(s - h))
        return out

    def ev(s: float, y: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(rhs(s, y, delayed_at(s)), dtype=float))

    def norm(v: np.ndarray) -> float:
        return math.sqrt(float(v @ v))

    y = hist.as_array(t0).copy()
    f = ev(t0, y)
    Y.append(y)
    F.append(f)

    bps = _breakpoints(delays, t0, t_end, tstops)
    bp_i = 0
    discs: list[tuple[float, int]] = [(t0, 0)]

    # initial step (Hairer-Wanner heuristic)
    ny = norm(y)
    sc = atol + rtol * ny
    d0, d1 = ny / sc, norm(f) / sc
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, step_cap, bps[0] - t0)
    f1 = ev(t0 + h0, y + h0 * f)
    d2 = norm(f1 - f) / sc / h0
    big = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if big <= 1e-15 else (0.01 / big) ** (1.0 / 3.0)
    dt = min(100 * h0, h1)

    t = t0
    n_acc = n_rej = 0
    min_step = tol.min_step
    span = max(1.0, abs(t_end))
    while t < t_end:
        while bp_i < len(bps) and bps[bp_i] <= t + 1e-12 * span:
            bp_i += 1
        target = bps[bp_i] if bp_i < len(bps) else t_end
        dt = min(dt, step_cap)
        hit_disc = None
        if dt >= target - t:
            dt = target - t
        if var_idx:
            hit_disc = _next_disc(delays, var_idx, discs, t, dt, span)
            if hit_disc is not None:
                dt = hit_disc[0] - t
        if dt < min_step * span:
            raise StepUnderflow(t, dt)
        last = dt == target - t

        k1 = f
        k2 = ev(t + _C2 * dt, y + (_C2 * dt) * k1)
        k3 = ev(t + _C3 * dt, y + (_C3 * dt) * k2)
        y_new = y + dt * (_B1 * k1 + _B2 * k2 + _B3 * k3)
        t_new = target if last else t + dt
        k4 = ev(t_new, y_new)
        err = dt * (_E1 * k1 + _E2 * k2 + _E3 * k3 + _E4 * k4)
        ny_new = norm(y_new)
        if not math.isfinite(ny_new):
            n_rej += 1
            dt *= 0.25
            continue
        sc = atol + rtol * max(ny, ny_new)
        en = norm(err) / sc
        if not math.isfinite(en):
            n_rej += 1
            dt *= 0.25
            continue
        if en > 1.0:
            n_rej += 1
            dt *= max(0.2, 0.9 * en ** (-1.0 / 3.0))
            continue

        # accepted
        if ny_new > overflow:
            raise BlowUp(t_new, ny_new, "overflow")
        if var_idx and hit_disc is not None and t_new == hit_disc[0]:
            discs.append(hit_disc)
        T.append(t_new)
        Y.append(y_new)
        F.append(k4)
        t, y, f, ny = t_new, y_new, k4, ny_new
        n_acc += 1
        if monitor is not None and monitor(t, ny):
            raise BlowUp(t, ny, "growth")
        if var_idx and len(discs) > 1:
            discs = [(d, o) for d, o in discs if d > t - h_hi - 1e-12 * span]
        fac = 5.0 if en == 0 else min(5.0, 0.9 * en ** (-1.0 / 3.0))
        dt = dt * fac

    return Trajectory(
        T, Y, F, hist, h_hi if n_delays else 0.0,
        scalar=bool(getattr(system, "is_scalar", hist.is_scalar)),
        stats={"accepted": n_acc, "rejected": n_rej},
    )


@dataclass(frozen=True)
class BatchOutcome:
    """Per-ray result of :func:`integrate_batch`."""

    blown: np.ndarray
    t_blow: np.ndarray
    reasons: tuple
    final_norm: np.ndarray
    stats: dict


def integrate_batch(
    system: DelaySystem,
    states,
    t_end: float,
    tol: ToleranceConfig | None = None,
    *,
    monitor: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None,
    tstops: Iterable[float] = (),
) -> BatchOutcome:
    """Integrate ``K`` constant-history copies of ``system`` on one shared mesh.

    ``states`` has shape ``(dim, K)``; copy ``k`` starts from the constant
    history ``states[:, k]``.  ``system.rhs`` must broadcast over a trailing
    batch axis.  Step control uses the worst active copy.  A copy whose norm
    passes ``tol.overflow``, that ``monitor(t, norms, active)`` flags, or
    that alone forces the step below ``tol.min_step`` is frozen at zero and
    dropped from error control.  Only blow-up information is returned; use
    :func:`integrate` when the trajectory itself is needed.
    """
    tol = tol or ToleranceConfig()
    hist = system.history
    delays = system.delays
    t0 = hist.t0
    t_end = float(t_end)
    if not t_end > t0:
        raise ValueError(f"t_end={t_end} must exceed t0={t0}")
    delays.check(t0, t_end)
    check_window = getattr(system, "check_window", None)
    if check_window is not None:
        check_window(t_end)

    X0 = np.array(states, dtype=float)
    if X0.ndim != 2:
        raise ValueError("states must have shape (dim, K)")
    K = X0.shape[1]
    rhs = system.rhs
    rtol, atol = tol.rtol * tol.local_fraction, tol.atol * tol.local_fraction
    n_delays = len(delays)
    h_lo, h_hi = delays.h_lower, delays.h_upper
    const_h = [None if callable(d) else d for d in delays.delays]
    var_idx = [i for i, d in enumerate(delays.delays) if callable(d)]
    step_cap = min(tol.max_step, h_lo)

    active = np.ones(K, dtype=bool)
    t_blow = np.full(K, np.nan)
    reasons = [""] * K
    T: list[float] = [t0]
    Y: list[np.ndarray] = []
    F: list[np.ndarray] = []

    def past(s: float) -> np.ndarray:
        if s <= t0:
            return X0
        k = bisect_right(T, s) - 1
        if k >= len(T) - 1:
            return Y[-1]
        ta = T[k]
        hh = T[k + 1] - ta
        return _hermite((s - ta) / hh, hh, Y[k], Y[k + 1], F[k], F[k + 1])

    def ev(s: float, y: np.ndarray) -> np.ndarray:
        delayed = [past(s - (const_h[i] if const_h[i] is not None else delays.delays[i](s))) for i in range(n_delays)]
        val = np.asarray(rhs(s, y, delayed), dtype=float)
        return np.where(active, val, 0.0)

    def norms(v: np.ndarray) -> np.ndarray:
        return np.sqrt(np.einsum("ik,ik->k", v, v))

    def freeze(mask: np.ndarray, when: float, why: str):
        for k in np.flatnonzero(mask & active):
            t_blow[k] = when
            reasons[k] = why
        active[mask] = False

    with np.errstate(all="ignore"):
        y = X0.copy()
        f = ev(t0, y)
        Y.append(y)
        F.append(f)
        bps = _breakpoints(delays, t0, t_end, tstops)
        bp_i = 0
        discs: list[tuple[float, int]] = [(t0, 0)]

        ny = norms(y)
        sc = atol + rtol * ny
        d0 = float(np.max(ny / sc))
        d1 = float(np.max(norms(f) / sc))
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, step_cap, bps[0] - t0)
        f1 = ev(t0 + h0, y + h0 * f)
        d2 = float(np.max(norms(f1 - f) / sc)) / h0
        big = max(d1, d2)
        h1 = max(1e-6, h0 * 1e-3) if not big > 1e-15 else (0.01 / big) ** (1.0 / 3.0)
        dt = min(100 * h0, h1)

        t = t0
        n_acc = n_rej = 0
        span = max(1.0, abs(t_end))
        min_step = tol.min_step * span
        while t < t_end and active.any():
            while bp_i < len(bps) and bps[bp_i] <= t + 1e-12 * span:
                bp_i += 1
            target = bps[bp_i] if bp_i < len(bps) else t_end
            dt = min(dt, step_cap)
            hit_disc = None
            if dt >= target - t:
                dt = target - t
            if var_idx:
                hit_disc = _next_disc(delays, var_idx, discs, t, dt, span)
                if hit_disc is not None:
                    dt = hit_disc[0] - t
            last = dt == target - t

            k1 = f
            k2 = ev(t + _C2 * dt, y + (_C2 * dt) * k1)
            k3 = ev(t + _C3 * dt, y + (_C3 * dt) * k2)
            y_new = y + dt * (_B1 * k1 + _B2 * k2 + _B3 * k3)
            t_new = target if last else t + dt
            k4 = ev(t_new, y_new)
            err = dt * (_E1 * k1 + _E2 * k2 + _E3 * k3 + _E4 * k4)
            ny_new = norms(y_new)
            ratio = np.where(active, norms(err) / (atol + rtol * np.maximum(ny, ny_new)), 0.0)
            ratio = np.where(np.isfinite(ny_new), ratio, np.inf)
            en = float(np.max(ratio))
            if not en <= 1.0:
                n_rej += 1
                if dt < min_step:
                    # the copy that alone pins the step down is treated as escaping
                    worst = np.zeros(K, dtype=bool)
                    worst[int(np.argmax(ratio))] = True
                    freeze(worst, t, "underflow")
                    dt = step_cap
                    f = np.where(active, f, 0.0)
                    y = np.where(active, y, 0.0)
                    continue
                dt *= 0.25 if not math.isfinite(en) else max(0.2, 0.9 * en ** (-1.0 / 3.0))
                continue

            over = active & (ny_new > tol.overflow)
            freeze(over, t_new, "overflow")
            if monitor is not None:
                fired = np.asarray(monitor(t_new, ny_new, active.copy()), dtype=bool) & active
                freeze(fired, t_new, "growth")
            y_new = np.where(active, y_new, 0.0)
            k4 = np.where(active, k4, 0.0)
            if var_idx and hit_disc is not None and t_new == hit_disc[0]:
                discs.append(hit_disc)
            T.append(t_new)
            Y.append(y_new)
            F.append(k4)
            t, y, f, ny = t_new, y_new, k4, norms(y_new)
            n_acc += 1
            if var_idx and len(discs) > 1:
                discs = [(d, o) for d, o in discs if d > t - h_hi - 1e-12 * span]
            fac = 5.0 if en == 0 else min(5.0, 0.9 * en ** (-1.0 / 3.0))
            dt = dt * fac

    return BatchOutcome(
        blown=~active,
        t_blow=t_blow,
        reasons=tuple(reasons),
        final_norm=np.where(active, ny, np.nan),
        stats={"accepted": n_acc, "rejected": n_rej, "t_reached": t},
    )


def evaluate(traj: Trajectory, t: float):
    """Functional alias for :meth:`Trajectory.evaluate`."""
    return traj.evaluate(t)


@dataclass(frozen=True)
class VectorDelaySystem:
    """``x' = A(t) x + f(t, x(t), x(t - h_1), ...) + F0 e(t)`` with history ``phi``.

    ``A`` holds the part of the linear dynamics whose fundamental matrix is
    used by the reduction; everything else (including linear delayed terms,
    or linear undelayed terms deliberately moved out of ``A``) goes in ``f``.
    ``e`` is rescaled on construction so that its sampled sup-norm is 1.
    """

    A: Callable[[float], np.ndarray]
    f: Callable[..., np.ndarray] | None
    delays: DelaySpec
    history: HistoryFunction
    F0: float = 0.0
    e: Callable[[float], np.ndarray] | None = None
    sample_window: float = 100.0
    _apply: Callable | None = field(default=None, init=False, repr=False, compare=False)
    _e_scale: float = field(default=1.0, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.F0 < 0:
            raise ValueError("F0 must be non-negative")
        if self.history.span < self.delays.h_upper:
            object.__setattr__(self, "history", self.history.with_span(self.delays.h_upper))
        n = self.dim
        t0 = self.t0
        ts = np.linspace(t0, t0 + self.sample_window, 10_001)
        if self.f is not None:
            zero = np.zeros(n)
            for t in ts[:: 1000]:
                val = np.asarray(self.f(t, zero, *([zero] * len(self.delays))), dtype=float)
                if val.shape != (n,):
                    raise ValueError(f"f must return shape ({n},), got {val.shape}")
                if np.any(val != 0):
                    raise InvalidSystem(f"f(t, 0, ..., 0) != 0 at t={t}")
        if self.e is not None:
            sup = max(float(np.linalg.norm(self.e(t))) for t in ts)
            if sup > 0 and abs(sup - 1.0) > 1e-3:
                object.__setattr__(self, "_e_scale", 1.0 / sup)
        object.__setattr__(self, "_apply", getattr(self.A, "apply", None))

    @property
    def dim(self) -> int:
        return self.history.as_array(self.history.t0).size

    @property
    def t0(self) -> float:
        return self.history.t0

    @property
    def is_scalar(self) -> bool:
        return False

    def forcing(self, t: float) -> np.ndarray:
        """``F(t) = F0 e(t)`` (with the normalized ``e``)."""
        if self.e is None or self.F0 == 0:
            return np.zeros(self.dim)
        return self.F0 * self._e_scale * np.asarray(self.e(t), dtype=float)

    def e_normalized(self, t: float) -> np.ndarray:
        if self.e is None:
            return np.zeros(self.dim)
        return self._e_scale * np.asarray(self.e(t), dtype=float)

    def rhs(self, t, x, delayed):
        if self._apply is not None:
            out = self._apply(t, x)
        else:
            out = np.asarray(self.A(t), dtype=float) @ x
        if self.f is not None:
            out = out + self.f(t, x, *delayed)
        if self.e is not None and self.F0 != 0:
            force = (self.F0 * self._e_scale) * np.asarray(self.e(t), dtype=float)
            out = out + (force[:, None] if np.ndim(x) == 2 else force)
        return out

    def with_history(self, history: HistoryFunction) -> "VectorDelaySystem":
        """Same system with another history (no re-validation of ``f`` and ``e``)."""
        if history.span < self.delays.h_upper:
            history = history.with_span(self.delays.h_upper)
        if np.size(history.as_array(history.t0)) != self.dim:
            raise ValueError("history dimension does not match the system")
        clone = object.__new__(VectorDelaySystem)
        for name in ("A", "f", "delays", "F0", "e", "sample_window", "_apply", "_e_scale"):
            object.__setattr__(clone, name, getattr(self, name))
        object.__setattr__(clone, "history", history)
        return clone

    def with_constant_history(self, x0) -> "VectorDelaySystem":
        return self.with_history(HistoryFunction.constant(np.asarray(x0, dtype=float), self.t0, self.delays.h_upper))
