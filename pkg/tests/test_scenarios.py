import math

import numpy as np
import pytest

from delaybound.dde_core import ToleranceConfig, integrate
from delaybound.errors import InvalidParameters, InvalidSystem, ScenarioError
from delaybound.fundamental import induced_norm2
from delaybound.scenarios import (
    ScalarCriterionScenario,
    Section6Scenario,
    dump_scenario,
    hand_coded_aux,
    instantiate,
    load_scenario,
    scenario_from_dict,
)

SCEN = __import__("pathlib").Path(__file__).resolve().parents[1] / "scenarios"


def test_defaults():
    cfg = Section6Scenario()
    assert (cfg.lambda0, cfg.lambda_plus.q, cfg.lambda_plus.d) == (-3.0, 0.1, 5.0)
    assert (cfg.omega0, cfg.a1, cfg.a2, cfg.r1, cfg.r2, cfg.r3) == (1.0, 0.1, 0.1, 1.0, 3.14, 10.0)
    t = 0.37
    assert np.array_equal(cfg.e(t), [0.0, math.sin(10 * t)])
    assert np.array_equal(cfg.A1(t), [[0.0, 1.0], [-cfg.omega(t), -1.0]])
    assert np.allclose(cfg.A0()(t), cfg.lam(t) * np.eye(2))


def test_block_structure_of_vector_field():
    cfg = Section6Scenario(b=0.0, F0=0.0)
    vec = instantiate(cfg).vector
    x, xd = np.array([0.3, -0.2]), np.array([0.1, 0.4])
    t = 1.1
    expected = (cfg.lam(t) * np.eye(2) + cfg.A1(t)) @ x + cfg.rho * cfg.A1(t) @ xd
    assert np.allclose(vec.rhs(t, x, [xd]), expected)


@pytest.mark.parametrize("lp, expected", [({"form": "sinusoidal", "q": 0.1, "d": 5.0}, -2.9),
                                          ({"form": "exponential", "q": 1.0, "d": 1.0}, -2.0)])
def test_lambda_hat(lp, expected):
    cfg = Section6Scenario(lambda_plus=lp)
    assert cfg.lambda_hat() == pytest.approx(expected, abs=1e-12)
    assert cfg.lambda_hat() == pytest.approx(cfg.lambda0 + cfg.lambda_plus.q)


def test_lambda_plus_sup_on_short_window():
    lp = Section6Scenario().lambda_plus
    # sin(5t) on [0, 0.2] peaks at the right end
    assert lp.sup(0.0, 0.2) == pytest.approx(0.1 * math.sin(1.0))


def test_degenerate_case_reduces_to_linear_aux():
    cfg = Section6Scenario(rho=0.0, b=0.0, F0=0.0)
    aux = instantiate(cfg).aux
    assert aux.L.exponents == ((1, 0),) and aux.forcing_shape is None
    t = 2.3
    assert aux.rhs(t, np.array([1.0]), [np.array([5.0])])[0] == pytest.approx(cfg.lam(t) + induced_norm2(cfg.A1(t)))


def test_pipeline_aux_matches_hand_coded():
    tol = ToleranceConfig()
    cfg = Section6Scenario()
    a = integrate(instantiate(cfg).aux, 20.0, tol)
    b = integrate(hand_coded_aux(cfg), 20.0, tol)
    ts = np.linspace(0, 20, 2000)
    va, vb = a.sample(ts)[:, 0], b.sample(ts)[:, 0]
    assert np.all(np.abs(va - vb) <= 2 * 2 * tol.slack(np.maximum(va, vb)))


def test_structural_check_catches_mismatch(monkeypatch):
    import delaybound.scenarios as sc
    monkeypatch.setattr(sc, "hand_coded_L", lambda cfg: sc.DominatingL(((1.0, (0, 3)),), 2))
    with pytest.raises(InvalidSystem):
        instantiate(Section6Scenario())


def test_A1_norm_is_continuous():
    cfg = Section6Scenario()
    ts = np.linspace(0, 20, 20001)
    norms = np.array([induced_norm2(cfg.A1(t)) for t in ts])
    assert np.max(np.abs(np.diff(norms))) < 1e-2


def test_full_split_puts_A1_in_fundamental():
    cfg = Section6Scenario(split="full", b=0.0, F0=0.0, t_end=5.0)
    inst = instantiate(cfg)
    assert inst.L.exponents == ((0, 1),)
    assert np.max(inst.fundamental.c_samples) > 1.0
    rep_x = integrate(inst.vector, 5.0)
    rep_y = integrate(inst.aux, 5.0)
    ts = np.linspace(0, 5, 500)
    assert np.all(rep_x.norms(ts) <= rep_y.sample(ts)[:, 0] + 1e-5)


@pytest.mark.parametrize("changes", [{"h": 0.0}, {"rho": -1.0}, {"F0": -0.1}, {"b": -0.1}, {"x0": (1.0,)},
                                     {"lambda_plus": {"form": "cubic"}}, {"split": "other"},
                                     {"t_end": math.nan}])
def test_invalid_parameters(changes):
    with pytest.raises(InvalidParameters):
        Section6Scenario().with_(**changes)


def test_unknown_keys_rejected():
    with pytest.raises(ScenarioError):
        scenario_from_dict({"kind": "section6", "lamda0": -3.0})
    with pytest.raises(ScenarioError):
        scenario_from_dict({"kind": "section6", "lambda_plus": {"q": 1, "period": 2}})
    with pytest.raises(ScenarioError):
        scenario_from_dict({"kind": "weird"})
    with pytest.raises(ScenarioError):
        scenario_from_dict({"kind": "section6", "h": "half"})


def test_yaml_round_trip(tmp_path):
    for cfg in (Section6Scenario(b=0.3, x0=(0.2, -0.1)), ScalarCriterionScenario(-2.0, ((1.0, 2),), 1.5)):
        path = tmp_path / "s.yaml"
        dump_scenario(cfg, path)
        assert load_scenario(path) == cfg


def test_shipped_scenarios_load():
    names = sorted(p.stem for p in SCEN.glob("*.yaml"))
    assert {"section6_a", "section6_b", "isotropic", "linear_stable"} <= set(names)
    a = load_scenario(SCEN / "section6_a.yaml")
    assert a == Section6Scenario()
    assert load_scenario(SCEN / "section6_b.yaml").lambda_hat() == -2.0


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario(SCEN / "nope.yaml")
