"""Scalar auxiliary equations that dominate the norm of a vector delay system.

For ``x' = A(t) x + f(t, x, x(t - h_i)) + F0 e(t)`` with fundamental matrix
``w`` of ``A`` and a dominating function ``L`` of ``f``, the scalar equation

    y' = p(t) y + c(t) (L(t, y, y(t - h_1), ...) + F0 |e(t)|)

with ``p = d ln|w| / dt`` and ``c = |w| |w^{-1}|`` has ``|x(t)| <= y(t)``
whenever ``|phi| <= psi`` on the history interval.  This module builds that
equation and its relatives (autonomous majorant, linearization, perturbed
form), the closed-form sign criterion for autonomous majorants and the
superposition split of linear responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .dde_core import DelaySpec, HistoryFunction, ToleranceConfig, Trajectory, integrate
from .errors import BlowUp, InvalidSup, NotLinear, WindowMismatch
from .fundamental import FundamentalData, sup_over_window
from .nonlinearity import Coef, DominatingL, coef_value, linear_L, linearize_L

VERDICT_KINDS = (
    "stable",
    "uniformly-stable",
    "asymptotically-stable",
    "uniformly-asymptotically-stable",
    "bounded",
    "FTS",
    "FTCS",
    "inconclusive",
)


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of a stability or boundedness check.

    ``certified_radius`` is the radius of the ball of histories the check
    covers; it may be ``inf`` when the criterion holds for every level.
    """

    kind: str
    certified_radius: float = 0.0
    horizon: float = math.inf
    evidence: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in VERDICT_KINDS:
            raise ValueError(f"unknown verdict kind {self.kind!r}")
        if self.certified_radius < 0:
            raise ValueError("certified_radius must be non-negative")
        if self.kind == "inconclusive" and self.certified_radius > 0:
            raise ValueError("an inconclusive verdict cannot certify a radius")

    @property
    def conclusive(self) -> bool:
        return self.kind != "inconclusive"

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, Mapping):
                return {k: clean(w) for k, w in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(w) for w in v]
            if isinstance(v, np.generic):
                return clean(v.item())
            return v

        return clean(
            {
                "kind": self.kind,
                "certified_radius": float(self.certified_radius),
                "horizon": float(self.horizon),
                "evidence": dict(self.evidence),
            }
        )


class _Rate:
    """``p(t) + c(t) * mu(t)``."""

    def __init__(self, p: Coef, c: Coef, mu: Coef):
        self.p, self.c, self.mu = p, c, mu

    def __call__(self, t):
        return coef_value(self.p, t) + coef_value(self.c, t) * coef_value(self.mu, t)


class _AbsShape:
    """``t -> |e(t)|`` for the normalized forcing shape of a vector system."""

    def __init__(self, sys):
        self.sys = sys

    def __call__(self, t):
        return float(np.linalg.norm(self.sys.e_normalized(t)))


@dataclass(frozen=True)
class ScalarDelaySystem:
    """``y' = p y + c (L(t, y, y(t - h_1), ...) + F0 s(t)) + sum_R L_R(...)``.

    ``forcing_shape`` is ``s(t) >= 0`` (``None`` means no forcing).
    ``extra`` holds perturbation terms as ``(L_R, arg_map)`` pairs; they act
    outside ``c`` and read the arguments ``chi[arg_map[k]]``, where
    ``chi = (y, y(t - h_1), ..., y(t - h_M))`` runs over the full delay set.
    ``window`` is the time interval the tabulated coefficients are valid
    on; integrating past it raises :class:`WindowMismatch`.
    """

    p: Coef
    c: Coef
    L: DominatingL
    delays: DelaySpec
    history: HistoryFunction
    F0: float = 0.0
    forcing_shape: Callable[[float], float] | None = None
    extra: tuple = ()
    window: tuple[float, float] | None = None
    label: str = ""

    def __post_init__(self):
        if self.F0 < 0:
            raise ValueError("F0 must be non-negative")
        if not self.history.is_scalar:
            raise ValueError("scalar systems need a scalar history")
        base = 1 + self._n_base_delays
        if self.L.arity != base:
            raise ValueError(f"L has arity {self.L.arity}, expected {base}")
        if self.history.span < self.delays.h_upper:
            object.__setattr__(self, "history", self.history.with_span(self.delays.h_upper))
        forced = self.forcing_shape is not None and self.F0 != 0
        object.__setattr__(self, "_forced", forced)
        object.__setattr__(self, "_p_fn", self.p if callable(self.p) else None)
        object.__setattr__(self, "_c_fn", self.c if callable(self.c) else None)

    @property
    def _n_base_delays(self) -> int:
        used = sum(len(m) - 1 for _, m in self.extra)
        return len(self.delays) - used

    dim = 1

    @property
    def t0(self) -> float:
        return self.history.t0

    @property
    def is_scalar(self) -> bool:
        return True

    @property
    def is_linear(self) -> bool:
        return self.L.is_linear and all(LR.is_linear for LR, _ in self.extra)

    @property
    def is_autonomous(self) -> bool:
        coefs = [self.p, self.c] + [c for c, _ in self.L.terms]
        for LR, _ in self.extra:
            coefs += [c for c, _ in LR.terms]
        return not any(callable(c) for c in coefs) and not (self._forced and not _is_const_shape(self.forcing_shape))

    def forcing(self, t: float) -> float:
        """``F0 * s(t)``."""
        if not self._forced:
            return 0.0
        return self.F0 * self.forcing_shape(t)

    def check_window(self, t_end: float) -> None:
        if self.window is None:
            return
        lo, hi = self.window
        span = max(1.0, abs(hi))
        if abs(self.t0 - lo) > 1e-12 * span or t_end > hi + 1e-9 * span:
            raise WindowMismatch(
                f"coefficients tabulated on [{lo}, {hi}] but integration requested on [{self.t0}, {t_end}]"
            )

    def rhs(self, t, x, delayed):
        y = x[0]
        chi = (y,) + tuple(d[0] for d in delayed)
        p = self._p_fn(t) if self._p_fn is not None else self.p
        c = self._c_fn(t) if self._c_fn is not None else self.c
        inner = self.L(t, *chi[: self.L.arity])
        if self._forced:
            inner = inner + self.F0 * self.forcing_shape(t)
        out = p * y + c * inner
        for LR, arg_map in self.extra:
            out = out + LR(t, *(chi[k] for k in arg_map))
        return np.array([out])

    def with_history(self, history: HistoryFunction) -> "ScalarDelaySystem":
        return replace(self, history=history)

    def with_constant_history(self, level: float) -> "ScalarDelaySystem":
        return replace(self, history=HistoryFunction.constant(float(level), self.t0, self.delays.h_upper))

    def with_forcing_amplitude(self, F0: float) -> "ScalarDelaySystem":
        return replace(self, F0=float(F0))


class ConstantShape:
    """Forcing shape ``s(t) = value``."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, t):
        return self.value


def _is_const_shape(s) -> bool:
    return isinstance(s, ConstantShape)


def build_auxiliary(sys, fund: FundamentalData, L: DominatingL, t_end: float | None = None) -> ScalarDelaySystem:
    """Scalar auxiliary equation of a :class:`~delaybound.dde_core.VectorDelaySystem`.

    ``fund`` must start at the system's ``t0`` (so ``w(t0) = I``) and cover
    ``t_end`` when given.  The scalar history is ``t -> |phi(t)|``.
    """
    t_end = fund.t_end if t_end is None else t_end
    fund.require_window(sys.t0, t_end)
    if L.arity != 1 + len(sys.delays):
        raise ValueError(f"L has arity {L.arity}; the system has {len(sys.delays)} delays")
    shape = _AbsShape(sys) if sys.e is not None and sys.F0 != 0 else None
    return ScalarDelaySystem(
        p=fund.p,
        c=fund.c,
        L=L,
        delays=sys.delays,
        history=sys.history.norm_history(),
        F0=sys.F0 if shape is not None else 0.0,
        forcing_shape=shape,
        window=(fund.t0, fund.t_end),
        label="auxiliary",
    )


def _sup(c: Coef, t0: float, t1: float, samples: int) -> float:
    return sup_over_window(c, t0, t1, samples) if callable(c) else float(c)


def build_autonomous_majorant(
    aux: ScalarDelaySystem,
    window: tuple[float, float] | None = None,
    samples: int = 10_000,
    overrides: Mapping | None = None,
) -> ScalarDelaySystem:
    """Replace every time-varying coefficient by its supremum over ``window``.

    ``overrides`` may supply analytic values: ``"p"``, ``"c"`` (floats),
    ``"L"`` (a constant-coefficient :class:`DominatingL` with the same
    exponents) and ``"forcing"`` (sup of ``F0 s(t)``).
    """
    overrides = dict(overrides or {})
    if window is None:
        if aux.window is None:
            raise ValueError("a window is required for systems without a tabulation window")
        window = aux.window
    t0, t1 = window
    p_hat = float(overrides["p"]) if "p" in overrides else _sup(aux.p, t0, t1, samples)
    c_hat = float(overrides["c"]) if "c" in overrides else _sup(aux.c, t0, t1, samples)
    if "L" in overrides:
        L_hat = overrides["L"]
        if L_hat.exponents != aux.L.exponents or any(callable(c) for c, _ in L_hat.terms):
            raise ValueError("L override must be constant with the same exponents")
    else:
        L_hat = aux.L.sup(t0, t1, samples)
    extra = tuple((LR.sup(t0, t1, samples), m) for LR, m in aux.extra)
    if aux._forced:
        level = float(overrides["forcing"]) if "forcing" in overrides else aux.F0 * _sup(aux.forcing_shape, t0, t1, samples)
        F0, shape = level, ConstantShape(1.0)
    else:
        F0, shape = 0.0, None
    return replace(aux, p=p_hat, c=c_hat, L=L_hat, F0=F0, forcing_shape=shape, extra=extra, window=None, label="majorant")


def build_linearized(aux: ScalarDelaySystem, mu: Sequence[Coef], chi_tilde: float) -> ScalarDelaySystem:
    """Linear comparison equation ``u' = P u + c (sum_{i>=1} mu_i u(t - h_i) + F0 s)``.

    ``P = p + c mu_0``.  Perturbation terms are linearized with the same
    ``chi_tilde`` and stay outside ``c``.
    """
    if len(mu) != aux.L.arity:
        raise ValueError(f"expected {aux.L.arity} coefficients, got {len(mu)}")
    mu0 = mu[0]
    if callable(mu0) or callable(aux.p) or callable(aux.c):
        P = _Rate(aux.p, aux.c, mu0) if (callable(mu0) or mu0 != 0) else aux.p
    else:
        P = float(aux.p) + float(aux.c) * float(mu0)
    L_lin = linear_L(mu, skip_current=True)
    extra = tuple((linear_L(linearize_L(LR, chi_tilde)), m) for LR, m in aux.extra)
    return replace(aux, p=P, L=L_lin, extra=extra, label="linearized")


def build_perturbed_auxiliary(aux: ScalarDelaySystem, L_R: DominatingL, perturbed_delays: DelaySpec) -> ScalarDelaySystem:
    """Add ``L_R(t, y, y(t - h*_1), ...)`` with its own delays to ``aux``.

    The new delays are appended after the existing ones.  ``L_R`` may have
    a constant term (``L_R(t, 0) != 0``).
    """
    if L_R.is_zero:
        return aux
    if L_R.arity != 1 + len(perturbed_delays):
        raise ValueError(f"L_R has arity {L_R.arity}; {len(perturbed_delays)} perturbed delays given")
    offset = 1 + len(aux.delays)
    arg_map = (0,) + tuple(offset + k for k in range(len(perturbed_delays)))
    delays = aux.delays.concat(perturbed_delays)
    return replace(aux, delays=delays, extra=aux.extra + ((L_R, arg_map),), label="perturbed")


def _as_profile(L_hat) -> Callable[[float], float]:
    if isinstance(L_hat, DominatingL):
        if any(callable(c) for c, _ in L_hat.terms):
            raise InvalidSup("L_hat must have constant coefficients; take its sup first")
        return lambda y: L_hat.diagonal(0.0, y)
    return L_hat


def closed_form_criterion(
    p_hat: float,
    c_hat: float,
    L_hat,
    y_max: float = 1e6,
    eps: float = 1e-12,
    require: bool = False,
    samples: int = 4000,
) -> StabilityVerdict:
    """Sign criterion ``p_hat y + c_hat L_hat(y) < 0`` on ``(0, y_plus)``.

    ``L_hat`` is a one-variable function ``y -> sup_t L(t, y, ..., y)`` or a
    constant-coefficient :class:`DominatingL`.  The sign is tested on
    ``g(y) / y`` at log-spaced points in ``[y_max * 1e-15, y_max]``; strict
    negativity means ``g(y) / y < -eps * max(1, |p_hat|)``.  The first sign
    change is refined with ``brentq``.  A positive verdict's radius is
    ``y_plus`` (``inf`` if no sign change occurs below ``y_max``).

    With ``require=True`` a non-negative ``p_hat`` raises :class:`InvalidSup`
    instead of returning an inconclusive verdict.
    """
    evidence = {"p_hat": float(p_hat), "c_hat": float(c_hat), "y_max": float(y_max)}
    if not p_hat < 0:
        if require:
            raise InvalidSup(f"p_hat = {p_hat} is not negative")
        return StabilityVerdict("inconclusive", 0.0, math.inf, {**evidence, "reason": "p_hat >= 0"})
    if not c_hat > 0:
        raise InvalidSup(f"c_hat = {c_hat} must be positive")
    profile = _as_profile(L_hat)
    thresh = eps * max(1.0, abs(p_hat))

    def s(y: float) -> float:
        return p_hat + c_hat * profile(y) / y

    ys = np.logspace(math.log10(y_max) - 15.0, math.log10(y_max), samples)
    vals = np.array([s(y) for y in ys])
    bad = np.flatnonzero(~(vals < -thresh))
    if bad.size and bad[0] == 0:
        return StabilityVerdict("inconclusive", 0.0, math.inf, {**evidence, "reason": "no negative interval at the origin"})
    if not bad.size:
        return StabilityVerdict(
            "uniformly-asymptotically-stable", math.inf, math.inf, {**evidence, "y_plus": math.inf, "capped": True}
        )
    j = int(bad[0])
    lo, hi = float(ys[j - 1]), float(ys[j])
    if s(hi) >= 0:
        y_plus = brentq(s, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    else:
        # dips into (-thresh, 0) without crossing: treat the tangency as the edge
        y_plus = brentq(lambda y: s(y) + thresh, lo, hi, xtol=1e-14, maxiter=200)
    return StabilityVerdict(
        "uniformly-asymptotically-stable", float(y_plus), math.inf, {**evidence, "y_plus": float(y_plus), "capped": False}
    )


def decompose_linear_response(
    lin: ScalarDelaySystem, t_end: float, tol: ToleranceConfig | None = None
) -> tuple[Trajectory, Trajectory]:
    """Split a linear scalar response into ``u_h`` (own history, no forcing)
    and ``u_nh`` (zero history, unit amplitude).  ``u = u_h + F0 u_nh``."""
    if not lin.is_linear:
        raise NotLinear("superposition needs a linear system")
    u_h = integrate(replace(lin, F0=0.0), t_end, tol)
    zero = HistoryFunction.constant(0.0, lin.t0, lin.delays.h_upper)
    forced = replace(lin, F0=1.0, history=zero) if lin.forcing_shape is not None else replace(lin, F0=0.0, history=zero)
    u_nh = integrate(forced, t_end, tol)
    return u_h, u_nh


def superposition_residual(direct: Trajectory, u_h: Trajectory, u_nh: Trajectory, F0: float, points=None) -> float:
    """Max ``|u - (u_h + F0 u_nh)|`` over ``points`` (default: mesh of ``direct``)."""
    ts = direct.t if points is None else np.asarray(points, dtype=float)
    rec = u_h.sample(ts)[:, 0] + F0 * u_nh.sample(ts)[:, 0]
    return float(np.max(np.abs(direct.sample(ts)[:, 0] - rec)))


def chi_tilde_max(
    aux: ScalarDelaySystem,
    horizon: float,
    chi_hi: float = 10.0,
    rel_tol: float = 1e-3,
    tol: ToleranceConfig | None = None,
) -> float:
    """Largest ``chi_tilde`` whose homogeneous linearization decays on ``[t0, t0 + horizon]``.

    Finite-horizon surrogate: the unit-history response must end below half
    its initial level and never exceed the overflow bound.  Monotone in
    ``chi_tilde`` because every ``mu_i`` grows with it, so bisection applies.
    Returns 0.0 when even the linear part does not decay.
    """
    t_end = aux.t0 + horizon

    def decays(chi: float) -> bool:
        lin = build_linearized(aux.with_forcing_amplitude(0.0), linearize_L(aux.L, chi), chi)
        try:
            u = integrate(lin.with_constant_history(1.0), t_end, tol)
        except BlowUp:
            return False
        tail = np.abs(u.sample(np.linspace(aux.t0 + 0.75 * horizon, t_end, 200))[:, 0])
        return bool(tail.max() < 0.5)

    lo = 0.0
    small = chi_hi * 1e-9
    if not decays(small):
        return 0.0
    lo = small
    hi = chi_hi
    if decays(hi):
        return hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if decays(mid):
            lo = mid
        else:
            hi = mid
    return lo
