"""Benchmark scenario: a damped oscillator with time-varying stiffness,
isotropic time-varying decay, delayed linear feedback and a delayed cubic term.

    x' = (A0(t) + k A1(t)) x + rho k A1(t) x(t - h) + b [0, x2(t - h)^3] + F0 e(t)

with ``A0 = lambda(t) I``, ``A1 = [[0, 1], [-omega(t), -alpha1]]``,
``lambda = lambda0 + lambda_plus(t)``, ``omega = omega0 + a1 sin(r1 t) + a2 sin(r2 t)``
and ``e = [0, sin(r3 t)]``.  ``k`` is the ``coupling`` scale (1 by default).

Scenarios live in YAML files; see the README for the schema.  Files with
``kind: section6`` describe this system, files with ``kind: scalar_criterion``
describe a bare closed-form criterion ``p_hat y + c_hat L_hat(y)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml

from .auxiliary import ScalarDelaySystem, build_autonomous_majorant, build_auxiliary
from .dde_core import DelaySpec, HistoryFunction, VectorDelaySystem
from .errors import InvalidParameters, InvalidSystem, ScenarioError
from .fundamental import FundamentalData, ScalarMatrix, compute_fundamental
from .nonlinearity import DominatingL, LinearTerm, MonomialTerm, NormCoef, PolynomialField, dominating_L

SPLITS = ("a0", "full")


@dataclass(frozen=True)
class LambdaPlus:
    """``q sin(d t)`` (form ``sinusoidal``) or ``q exp(-d t)`` (form ``exponential``)."""

    form: str = "sinusoidal"
    q: float = 0.1
    d: float = 5.0

    def __call__(self, t: float) -> float:
        if self.form == "sinusoidal":
            return self.q * math.sin(self.d * t)
        return self.q * math.exp(-self.d * t)

    def antiderivative(self, t: float) -> float:
        if self.form == "sinusoidal":
            return 0.0 if self.d == 0 else -self.q * math.cos(self.d * t) / self.d
        if self.d == 0:
            return self.q * t
        return -self.q * math.exp(-self.d * t) / self.d

    def sup(self, t0: float, t1: float) -> float:
        """Exact supremum on ``[t0, t1]``."""
        cands = [self(t0), self(t1)]
        if self.form == "sinusoidal" and self.d != 0:
            # critical points of sin(d t): d t = pi/2 + k pi
            k_lo = math.ceil((self.d * t0 - math.pi / 2) / math.pi)
            k_hi = math.floor((self.d * t1 - math.pi / 2) / math.pi)
            for k in range(k_lo, min(k_hi, k_lo + 1) + 1):
                cands.append(self((math.pi / 2 + k * math.pi) / self.d))
        return max(cands)


@dataclass(frozen=True)
class Section6Scenario:
    lambda0: float = -3.0
    lambda_plus: LambdaPlus = field(default_factory=LambdaPlus)
    omega0: float = 1.0
    a1: float = 0.1
    a2: float = 0.1
    r1: float = 1.0
    r2: float = 3.14
    r3: float = 10.0
    alpha1: float = 1.0
    rho: float = 0.1
    b: float = 0.1
    h: float = 0.5
    F0: float = 0.1
    x0: tuple = (0.1, 0.1)
    t_end: float = 20.0
    coupling: float = 1.0
    split: str = "a0"

    def __post_init__(self):
        if isinstance(self.lambda_plus, dict):
            object.__setattr__(self, "lambda_plus", LambdaPlus(**self.lambda_plus))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        self.validate()

    def validate(self) -> None:
        lp = self.lambda_plus
        if lp.form not in ("sinusoidal", "exponential"):
            raise InvalidParameters(f"lambda_plus.form must be sinusoidal or exponential, got {lp.form!r}")
        if lp.form == "exponential" and lp.d < 0:
            raise InvalidParameters("exponential lambda_plus needs d >= 0")
        if not self.h > 0:
            raise InvalidParameters("h must be positive")
        for name in ("rho", "b", "F0", "coupling"):
            if getattr(self, name) < 0:
                raise InvalidParameters(f"{name} must be non-negative")
        if len(self.x0) != 2:
            raise InvalidParameters("x0 must have two components")
        if not self.t_end > 0:
            raise InvalidParameters("t_end must be positive")
        if self.split not in SPLITS:
            raise InvalidParameters(f"split must be one of {SPLITS}")
        vals = [self.lambda0, lp.q, lp.d, self.omega0, self.a1, self.a2, self.r1, self.r2, self.r3,
                self.alpha1, self.rho, self.b, self.h, self.F0, self.t_end, self.coupling, *self.x0]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParameters("all parameters must be finite")

    def lam(self, t: float) -> float:
        return self.lambda0 + self.lambda_plus(t)

    def lambda_hat(self, t1: float | None = None) -> float:
        """Exact ``sup lambda`` on ``[0, t1]`` (default ``t_end``)."""
        return self.lambda0 + self.lambda_plus.sup(0.0, self.t_end if t1 is None else t1)

    def omega(self, t: float) -> float:
        return self.omega0 + self.a1 * math.sin(self.r1 * t) + self.a2 * math.sin(self.r2 * t)

    def A0(self) -> ScalarMatrix:
        lam, lp, l0 = self.lam, self.lambda_plus, self.lambda0
        return ScalarMatrix(lam, 2, antiderivative=lambda t: l0 * t + lp.antiderivative(t))

    def A1(self, t: float) -> np.ndarray:
        k = self.coupling
        return np.array([[0.0, k], [-k * self.omega(t), -k * self.alpha1]])

    def e(self, t: float) -> np.ndarray:
        return np.array([0.0, math.sin(self.r3 * t)])

    def with_(self, **changes) -> "Section6Scenario":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return Section6Scenario(**data)


@dataclass(frozen=True)
class ScalarCriterionScenario:
    """``p_hat y + c_hat sum_j coef_j y^power_j``."""

    p_hat: float
    L_hat: tuple
    c_hat: float = 1.0

    def __post_init__(self):
        terms = []
        for term in self.L_hat:
            if isinstance(term, dict):
                unknown = set(term) - {"coef", "power"}
                if unknown:
                    raise ScenarioError(f"unknown L_hat keys {sorted(unknown)}")
                term = (term["coef"], term["power"])
            coef, power = float(term[0]), int(term[1])
            if coef < 0 or power < 1:
                raise InvalidParameters("L_hat terms need coef >= 0 and power >= 1")
            terms.append((coef, power))
        object.__setattr__(self, "L_hat", tuple(terms))

    def profile(self, y: float) -> float:
        return sum(c * y**k for c, k in self.L_hat)


@dataclass
class Section6Instance:
    """Vector system, its auxiliary equation and the autonomous majorant.

    Iterating yields ``(vector, aux, majorant)``.
    """

    scenario: Section6Scenario
    vector: VectorDelaySystem
    aux: ScalarDelaySystem
    majorant: ScalarDelaySystem
    fundamental: FundamentalData
    L: DominatingL
    window: tuple

    def __iter__(self) -> Iterator:
        return iter((self.vector, self.aux, self.majorant))


def vector_field(cfg: Section6Scenario) -> PolynomialField:
    """Nonlinear part ``f`` for the configured split."""
    terms = []
    if cfg.split == "a0" and cfg.coupling != 0:
        terms.append(LinearTerm(cfg.A1, 0))
    if cfg.rho != 0 and cfg.coupling != 0:
        rho, A1 = cfg.rho, cfg.A1
        terms.append(LinearTerm(lambda t: rho * A1(t), 1))
    if cfg.b != 0:
        terms.append(MonomialTerm(cfg.b, 1, ((1, 1, 3),)))
    return PolynomialField(2, terms, n_args=2)


def hand_coded_L(cfg: Section6Scenario) -> DominatingL:
    """``|A1(t)| chi_0 + rho |A1(t)| chi_1 + |b| chi_1^3`` written out directly."""
    terms = []
    if cfg.coupling != 0:
        terms.append((NormCoef(cfg.A1), (1, 0)))
        if cfg.rho != 0:
            terms.append((NormCoef(cfg.A1, cfg.rho), (0, 1)))
    if cfg.b != 0:
        terms.append((abs(cfg.b), (0, 3)))
    return DominatingL(tuple(terms), 2)


def instantiate(cfg: Section6Scenario, horizon: float | None = None, check: bool = True) -> Section6Instance:
    """Build the vector system and its two scalar comparison equations.

    Coefficients are tabulated on ``[0, max(t_end, horizon)]``.  With the
    ``a0`` split the auxiliary equation produced by the generic reduction is
    checked against :func:`hand_coded_L` (``check=True``).
    """
    t1 = max(cfg.t_end, horizon or 0.0)
    delays = DelaySpec.of(cfg.h)
    history = HistoryFunction.constant(np.array(cfg.x0), 0.0, cfg.h)
    f = vector_field(cfg)
    if cfg.split == "a0":
        A = cfg.A0()
    else:
        lam, A1 = cfg.lam, cfg.A1
        A = lambda t: lam(t) * np.eye(2) + A1(t)
    vec = VectorDelaySystem(A, f, delays, history, F0=cfg.F0, e=cfg.e, sample_window=t1)
    fund = compute_fundamental(A, 0.0, t1)
    L = dominating_L(f)
    aux = build_auxiliary(vec, fund, L)
    if cfg.split == "a0" and check:
        probe = np.linspace(0.0, t1, 97)
        if not L.structurally_equal(hand_coded_L(cfg), probe):
            raise InvalidSystem("reduced dominating function disagrees with the hand-written one")
    overrides = {"p": cfg.lambda_hat(t1)} if cfg.split == "a0" else {}
    maj = build_autonomous_majorant(aux, (0.0, t1), overrides=overrides)
    return Section6Instance(cfg, vec, aux, maj, fund, L, (0.0, t1))


def hand_coded_aux(cfg: Section6Scenario, horizon: float | None = None) -> ScalarDelaySystem:
    """The ``a0``-split auxiliary equation assembled term by term."""
    t1 = max(cfg.t_end, horizon or 0.0)
    x0 = float(np.hypot(*cfg.x0))
    r3 = cfg.r3
    return ScalarDelaySystem(
        p=cfg.lam,
        c=1.0,
        L=hand_coded_L(cfg),
        delays=DelaySpec.of(cfg.h),
        history=HistoryFunction.constant(x0, 0.0, cfg.h),
        F0=cfg.F0,
        forcing_shape=(lambda t: abs(math.sin(r3 * t))) if cfg.F0 != 0 else None,
        window=(0.0, t1),
        label="hand-coded",
    )


# --- YAML ------------------------------------------------------------------

_S6_KEYS = {f.name for f in fields(Section6Scenario)}
_LP_KEYS = {f.name for f in fields(LambdaPlus)}
_SC_KEYS = {f.name for f in fields(ScalarCriterionScenario)}


def scenario_from_dict(data: dict):
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    data = dict(data)
    kind = data.pop("kind", "section6")
    if kind == "section6":
        unknown = set(data) - _S6_KEYS
        if unknown:
            raise ScenarioError(f"unknown keys {sorted(unknown)}")
        lp = data.get("lambda_plus")
        if lp is not None:
            if not isinstance(lp, dict):
                raise ScenarioError("lambda_plus must be a mapping")
            bad = set(lp) - _LP_KEYS
            if bad:
                raise ScenarioError(f"unknown lambda_plus keys {sorted(bad)}")
            data["lambda_plus"] = LambdaPlus(**{k: (v if k == "form" else float(v)) for k, v in lp.items()})
        for k, v in list(data.items()):
            if k not in ("lambda_plus", "x0", "split"):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ScenarioError(f"{k} must be a number")
                data[k] = float(v)
        return Section6Scenario(**data)
    if kind == "scalar_criterion":
        unknown = set(data) - _SC_KEYS
        if unknown:
            raise ScenarioError(f"unknown keys {sorted(unknown)}")
        if "p_hat" not in data or "L_hat" not in data:
            raise ScenarioError("scalar_criterion needs p_hat and L_hat")
        return ScalarCriterionScenario(float(data["p_hat"]), tuple(data["L_hat"]), float(data.get("c_hat", 1.0)))
    raise ScenarioError(f"unknown scenario kind {kind!r}")


def scenario_to_dict(cfg) -> dict:
    if isinstance(cfg, Section6Scenario):
        out = {"kind": "section6"}
        out.update(asdict(cfg))
        out["x0"] = list(cfg.x0)
        return out
    if isinstance(cfg, ScalarCriterionScenario):
        return {
            "kind": "scalar_criterion",
            "p_hat": cfg.p_hat,
            "c_hat": cfg.c_hat,
            "L_hat": [{"coef": c, "power": k} for c, k in cfg.L_hat],
        }
    raise TypeError(f"not a scenario: {cfg!r}")


def load_scenario(path) -> Section6Scenario | ScalarCriterionScenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    try:
        return scenario_from_dict(data)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from exc


def dump_scenario(cfg, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
