"""Boundedness-region estimates by ray bisection on constant histories.

Every estimate is relative to a horizon ``T`` and a :class:`BlowUpDetector`:
a history "escapes" when the detector fires before ``T``.  Along each ray
the radius is doubled from a seed until the first escape and then bisected.
Rays are integrated together on a shared mesh (see
:func:`~delaybound.dde_core.integrate_batch`) when the system's right-hand
side broadcasts over a batch axis; otherwise one ray at a time.  Results are
ordered by angle and bit-reproducible for a fixed configuration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dde_core import HistoryFunction, StepUnderflow, ToleranceConfig, integrate, integrate_batch
from .errors import BlowUp, ConfigMismatch, NoBlowUpFound, SeedBlowsUp


@dataclass(frozen=True)
class BlowUpDetector:
    """Escape test: the norm exceeds ``overflow``, or it grows by a factor of
    at least ``growth_ratio`` on each of ``consecutive_steps`` accepted steps.

    Growth only counts once the norm is above the history level, so rapid
    relative changes of a state near zero are ignored.
    """

    overflow: float = 1e6
    growth_ratio: float = 10.0
    consecutive_steps: int = 2

    def __post_init__(self):
        if not self.overflow > 0 or not self.growth_ratio > 1 or self.consecutive_steps < 1:
            raise ValueError("invalid blow-up detector configuration")

    def tolerance(self, tol: ToleranceConfig | None) -> ToleranceConfig:
        # escape classification only needs to be right to search_tol, so the
        # default controls the local error at the requested level itself
        tol = tol or ToleranceConfig(local_fraction=1.0)
        return replace(tol, overflow=self.overflow)

    def monitor(self, floor: float):
        """Stateful ``(t, norm) -> bool`` callback for :func:`integrate`."""
        state = {"prev": None, "count": 0}

        def check(t: float, norm: float) -> bool:
            prev = state["prev"]
            state["prev"] = norm
            if prev is not None and prev > 0 and norm > floor and norm >= self.growth_ratio * prev:
                state["count"] += 1
            else:
                state["count"] = 0
            return state["count"] >= self.consecutive_steps

        return check

    def batch_monitor(self, floors: np.ndarray):
        """Vectorized counterpart of :meth:`monitor` for :func:`integrate_batch`."""
        floors = np.asarray(floors, dtype=float)
        prev = np.full(floors.shape, np.nan)
        count = np.zeros(floors.shape, dtype=int)

        def check(t: float, norms: np.ndarray, active: np.ndarray) -> np.ndarray:
            with np.errstate(invalid="ignore"):
                grow = (prev > 0) & (norms > floors) & (norms >= self.growth_ratio * prev)
            count[:] = np.where(grow, count + 1, 0)
            prev[:] = norms
            return count >= self.consecutive_steps

        return check

    def as_dict(self) -> dict:
        return {"overflow": self.overflow, "growth_ratio": self.growth_ratio, "consecutive_steps": self.consecutive_steps}


@dataclass(frozen=True)
class RegionBoundary:
    """Boundary radius per direction, with the final bisection bracket.

    ``flags[k]`` is ``"ok"`` for a located boundary and ``"cap"`` when no
    escape was found up to ``r_cap`` (the radius is then reported as the cap).
    """

    angles: np.ndarray
    radii: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    flags: tuple
    horizon: float
    search_tol: float
    detector: BlowUpDetector
    r_cap: float
    directions: np.ndarray = field(repr=False, default=None)

    @property
    def min_radius(self) -> float:
        return float(np.min(self.radii))

    @property
    def all_capped(self) -> bool:
        return all(f == "cap" for f in self.flags)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "radius", "log_radius", "flag"])
        for th, r, flag in zip(self.angles, self.radii, self.flags):
            w.writerow([_fmt(th), _fmt(r), _fmt(math.log(r)), flag])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class DiskRadius:
    """Largest constant history level (to ``search_tol``) that stays bounded."""

    radius: float
    lower: float
    upper: float
    horizon: float
    search_tol: float
    detector: BlowUpDetector
    capped: bool

    def __float__(self) -> float:
        return self.radius


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _escapes(sys, level_or_state, T: float, detector: BlowUpDetector, tol: ToleranceConfig) -> bool:
    x0 = level_or_state
    hist = HistoryFunction.constant(x0, sys.t0, sys.delays.h_upper)
    floor = float(np.linalg.norm(np.atleast_1d(x0)))
    try:
        integrate(sys.with_history(hist), sys.t0 + T, detector.tolerance(tol), monitor=detector.monitor(floor))
    except (BlowUp, StepUnderflow):
        return True
    return False


def _supports_batch(sys) -> bool:
    n = sys.dim
    probe = np.full((n, 2), 1e-3)
    try:
        out = np.asarray(sys.rhs(sys.t0, probe, [probe] * len(sys.delays)), dtype=float)
    except (ValueError, TypeError, IndexError):
        return False
    return out.shape == (n, 2)


class _RayEvaluator:
    """Escape verdicts for many initial states, batched when possible."""

    def __init__(self, sys, T: float, detector: BlowUpDetector, tol: ToleranceConfig, batch: bool | None):
        self.sys, self.T, self.detector = sys, T, detector
        self.tol = detector.tolerance(tol)
        self.batch = _supports_batch(sys) if batch is None else batch

    def __call__(self, states: np.ndarray) -> np.ndarray:
        """``states`` has shape (n, K); returns a bool array (True = escaped)."""
        if states.shape[1] == 0:
            return np.zeros(0, dtype=bool)
        if self.batch:
            floors = np.linalg.norm(states, axis=0)
            out = integrate_batch(
                self.sys, states, self.sys.t0 + self.T, self.tol, monitor=self.detector.batch_monitor(floors)
            )
            return out.blown
        return np.array([_escapes(self.sys, states[:, k], self.T, self.detector, self.tol) for k in range(states.shape[1])])


def _ray_search(escapes, directions: np.ndarray, r_seed: float, search_tol: float, r_cap: float):
    """Doubling then bisection along every direction, all rays advanced together.

    ``escapes(states)`` maps an (n, K) array of initial states to escape flags.
    Returns (lower, upper, capped) with ``upper = inf`` for capped rays.
    """
    K = directions.shape[1]
    lo = np.zeros(K)
    hi = np.full(K, np.inf)
    seed_bad = escapes(directions * r_seed)
    if seed_bad.any():
        k = int(np.argmax(seed_bad))
        raise SeedBlowsUp(r_seed, f" along direction {k}")
    lo[:] = r_seed
    # doubling
    growing = np.ones(K, dtype=bool)
    while growing.any():
        idx = np.flatnonzero(growing)
        trial = np.minimum(lo[idx] * 2.0, r_cap)
        esc = escapes(directions[:, idx] * trial)
        hi[idx[esc]] = trial[esc]
        lo[idx[~esc]] = trial[~esc]
        growing[idx[esc]] = False
        growing[idx[~esc & (trial >= r_cap)]] = False
    capped = ~np.isfinite(hi)
    # bisection to relative width: (hi - lo) <= search_tol * (hi + lo)
    open_ = ~capped & ((hi - lo) > search_tol * (hi + lo))
    while open_.any():
        idx = np.flatnonzero(open_)
        mid = 0.5 * (lo[idx] + hi[idx])
        esc = escapes(directions[:, idx] * mid)
        hi[idx[esc]] = mid[esc]
        lo[idx[~esc]] = mid[~esc]
        open_ = ~capped & ((hi - lo) > search_tol * (hi + lo))
    return lo, hi, capped


def polar_directions(angle_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Angles ``k * angle_step`` covering ``[0, 2 pi)`` and their unit vectors (2, K)."""
    if not angle_step > 0:
        raise ValueError("angle_step must be positive")
    count = int(round(2 * math.pi / angle_step))
    if count < 1 or abs(count * angle_step - 2 * math.pi) > 1e-9:
        count = int(math.ceil(2 * math.pi / angle_step - 1e-9))
    angles = np.arange(count) * angle_step
    return angles, np.vstack([np.cos(angles), np.sin(angles)])


def estimate_boundary_polar(
    sys,
    angle_step: float = math.pi / 100,
    r_seed: float = 0.05,
    T: float = 40.0,
    detector: BlowUpDetector | None = None,
    search_tol: float = 5e-3,
    r_cap: float = 1e3,
    tol: ToleranceConfig | None = None,
    directions: Sequence | None = None,
    strict: bool = False,
    batch: bool | None = None,
) -> RegionBoundary:
    """Boundary of the set of constant histories that stay bounded on ``[t0, t0 + T]``.

    Two-dimensional systems are probed along ``angle_step``-spaced angles.
    For other dimensions pass unit ``directions`` (shape (n, K)); the
    reported angles are then the direction indices.

    The reported radius is the bracket midpoint, so a history at
    ``R (1 - search_tol)`` stays bounded and one at ``R (1 + search_tol)``
    escapes (assuming escape is monotone along the ray).  Directions with no
    escape up to ``r_cap`` get the cap and the ``"cap"`` flag; with
    ``strict=True`` they raise :class:`NoBlowUpFound` instead.
    """
    detector = detector or BlowUpDetector()
    if directions is None:
        if sys.dim != 2:
            raise ValueError("polar search needs a 2-D system; pass directions for other dimensions")
        angles, dirs = polar_directions(angle_step)
    else:
        dirs = np.asarray(directions, dtype=float)
        if dirs.ndim != 2 or dirs.shape[0] != sys.dim:
            raise ValueError(f"directions must have shape ({sys.dim}, K)")
        dirs = dirs / np.linalg.norm(dirs, axis=0)
        angles = np.arange(dirs.shape[1], dtype=float)
    if not 0 < r_seed < r_cap:
        raise ValueError("need 0 < r_seed < r_cap")
    evaluator = _RayEvaluator(sys, T, detector, tol, batch)
    lo, hi, capped = _ray_search(evaluator, dirs, r_seed, search_tol, r_cap)
    if strict and capped.any():
        k = int(np.argmax(capped))
        raise NoBlowUpFound(float(angles[k]), r_cap)
    radii = np.where(capped, r_cap, 0.5 * (lo + hi))
    flags = tuple("cap" if c else "ok" for c in capped)
    return RegionBoundary(angles, radii, lo, np.where(capped, np.inf, hi), flags, float(T), float(search_tol),
                          detector, float(r_cap), dirs)


def embedded_disk_radius(
    scalar_sys,
    T: float = 40.0,
    detector: BlowUpDetector | None = None,
    search_tol: float = 5e-3,
    r_seed: float = 0.05,
    r_cap: float = 1e3,
    tol: ToleranceConfig | None = None,
    threshold: float | None = None,
    strict: bool = False,
) -> DiskRadius:
    """Largest constant history level whose scalar solution stays bounded on ``[t0, t0 + T]``.

    Solutions are ordered in the history level, so one doubling-plus-bisection
    search suffices.  ``threshold`` additionally treats any solution that
    exceeds it as escaping.
    """
    detector = detector or BlowUpDetector()
    if threshold is not None:
        detector = BlowUpDetector(min(detector.overflow, threshold), detector.growth_ratio, detector.consecutive_steps)

    def escapes(states: np.ndarray) -> np.ndarray:
        return np.array([_escapes(scalar_sys, float(s), T, detector, tol) for s in states[0]])

    lo, hi, capped = _ray_search(escapes, np.ones((1, 1)), r_seed, search_tol, r_cap)
    if capped[0]:
        if strict:
            raise NoBlowUpFound(None, r_cap)
        return DiskRadius(float(r_cap), float(lo[0]), math.inf, float(T), search_tol, detector, True)
    # report the bounded end of the bracket: it is the certified level
    return DiskRadius(float(lo[0]), float(lo[0]), float(hi[0]), float(T), search_tol, detector, False)


def verify_disk_in_region(boundary: RegionBoundary, r: float | DiskRadius) -> bool:
    """``r <= min_k R(theta_k) (1 + search_tol)``.

    A :class:`DiskRadius` must come from the same horizon and detector as
    the boundary, otherwise :class:`ConfigMismatch` is raised.
    """
    if isinstance(r, DiskRadius):
        if r.horizon != boundary.horizon or r.detector != boundary.detector:
            raise ConfigMismatch("disk and boundary were computed with different horizons or detectors")
        if r.capped and boundary.all_capped:
            return True
        r = r.radius
    return float(r) <= boundary.min_radius * (1 + boundary.search_tol)


def disks_csv(disks: Sequence[tuple[str, DiskRadius]], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "radius", "log_radius", "flag"])
    for name, d in disks:
        w.writerow([name, _fmt(d.radius), _fmt(math.log(d.radius)), "cap" if d.capped else "ok"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
