import math

import numpy as np
import pytest

from delaybound.auxiliary import (
    ScalarDelaySystem,
    StabilityVerdict,
    build_autonomous_majorant,
    build_auxiliary,
    build_linearized,
    build_perturbed_auxiliary,
    chi_tilde_max,
    closed_form_criterion,
    decompose_linear_response,
    superposition_residual,
)
from delaybound.dde_core import DelaySpec, HistoryFunction, ToleranceConfig, VectorDelaySystem, integrate
from delaybound.errors import InvalidSup, NotLinear, WindowMismatch
from delaybound.fundamental import ScalarMatrix, compute_fundamental
from delaybound.nonlinearity import DominatingL, linearize_L
from delaybound.scenarios import Section6Scenario, hand_coded_aux, instantiate

from oracles import cubic_positive_root, lambda_a_integral

TIGHT = ToleranceConfig(rtol=1e-10, atol=1e-12)


def lam_a(t):
    return -3.0 + 0.1 * math.sin(5.0 * t)


def cubic_aux(b=0.1, F0=0.1, level=0.2):
    return ScalarDelaySystem(
        p=lam_a,
        c=1.0,
        L=DominatingL(((b, (0, 3)),), 2),
        delays=DelaySpec.of(0.5),
        history=HistoryFunction.constant(level, 0.0, 0.5),
        F0=F0,
        forcing_shape=lambda t: abs(math.sin(10 * t)),
    )


def test_benchmark_aux_matches_hand_coded():
    cfg = Section6Scenario()
    inst = instantiate(cfg)
    hand = hand_coded_aux(cfg)
    a = integrate(inst.aux, cfg.t_end, TIGHT)
    b = integrate(hand, cfg.t_end, TIGHT)
    ts = np.linspace(0, cfg.t_end, 501)
    assert np.max(np.abs(a.sample(ts) - b.sample(ts))) < 1e-8
    for t in np.linspace(0, 20, 23):
        assert inst.aux.p(t) == pytest.approx(lam_a(t)) and inst.aux.c(t) == 1.0


def test_isotropic_linear_flow_is_tight():
    x0 = np.array([0.3, -0.4])
    vec = VectorDelaySystem(ScalarMatrix(lam_a, 2), None, DelaySpec.of(), HistoryFunction.constant(x0))
    fund = compute_fundamental(vec.A, 0.0, 10.0)
    aux = build_auxiliary(vec, fund, DominatingL.zero(1))
    y = integrate(aux, 10.0, TIGHT)
    for t in np.linspace(0, 10, 41):
        exact = 0.5 * math.exp(lambda_a_integral(t))
        assert y(t) == pytest.approx(exact, rel=1e-8, abs=1e-10)


def test_zero_history_gives_zero_solution():
    aux = cubic_aux(F0=0.0, level=0.0)
    y = integrate(aux, 10.0)
    assert np.all(y.y == 0.0)


@pytest.mark.parametrize("form, q, d, expected", [("sinusoidal", 0.1, 5.0, -2.9), ("exponential", 1.0, 1.0, -2.0)])
def test_majorant_rates(form, q, d, expected):
    inst = instantiate(Section6Scenario(lambda_plus={"form": form, "q": q, "d": d}))
    assert inst.majorant.p == pytest.approx(expected, abs=1e-12)
    assert inst.majorant.is_autonomous


def test_majorant_sampling_agrees_with_analytic_value():
    inst = instantiate(Section6Scenario())
    sampled = build_autonomous_majorant(inst.aux)
    assert sampled.p == pytest.approx(-2.9, abs=1e-9)


def test_majorant_of_constant_system_is_identity():
    aux = ScalarDelaySystem(-2.0, 1.5, DominatingL(((0.3, (0, 2)),), 2), DelaySpec.of(1.0),
                            HistoryFunction.constant(0.5, 0, 1.0), window=(0.0, 5.0))
    maj = build_autonomous_majorant(aux)
    assert (maj.p, maj.c, maj.L.terms, maj.F0) == (aux.p, aux.c, aux.L.terms, aux.F0)
    a = integrate(aux, 5.0)
    b = integrate(maj, 5.0)
    assert np.array_equal(a.y, b.y)


def test_majorant_dominates_aux():
    inst = instantiate(Section6Scenario())
    y = integrate(inst.aux, 20.0)
    yh = integrate(inst.majorant, 20.0)
    ts = np.linspace(0, 20, 2000)
    assert np.all(y.sample(ts) <= yh.sample(ts) + 1e-6)


def test_linearized_cubic():
    aux = cubic_aux()
    chi = 0.8
    lin = build_linearized(aux, linearize_L(aux.L, chi), chi)
    assert lin.is_linear and lin.p is aux.p
    assert lin.L.exponents == ((0, 1),) and lin.L.coefficient(0, 0.0) == pytest.approx(0.1 * chi**2)
    for t, u, ud in [(0.3, 1.0, 2.0), (2.2, -0.5, 0.25)]:
        expected = lam_a(t) * u + (0.1 * chi**2 * ud + 0.1 * abs(math.sin(10 * t)))
        assert lin.rhs(t, np.array([u]), [np.array([ud])])[0] == pytest.approx(expected)


def test_linearized_zero_L():
    aux = cubic_aux(b=0.0)
    lin = build_linearized(aux, [0.0, 0.0], 1.0)
    assert lin.rhs(1.0, np.array([2.0]), [np.array([5.0])])[0] == pytest.approx(2 * lam_a(1.0) + 0.1 * abs(math.sin(10)))


def test_linearized_constant_coefficients():
    aux = ScalarDelaySystem(-2.0, 1.5, DominatingL(((0.3, (2, 0)), (0.2, (0, 1))), 2), DelaySpec.of(1.0),
                            HistoryFunction.constant(0.5, 0, 1.0))
    chi = 2.0
    lin = build_linearized(aux, linearize_L(aux.L, chi), chi)
    assert lin.p == pytest.approx(-2.0 + 1.5 * 0.3 * chi)
    assert lin.is_autonomous


def test_perturbed_zero_is_identity():
    aux = cubic_aux()
    assert build_perturbed_auxiliary(aux, DominatingL.zero(2), DelaySpec.of(0.7)) is aux


def test_constant_perturbation_dominates():
    aux = cubic_aux()
    pert = build_perturbed_auxiliary(aux, DominatingL(((0.05, (0,)),), 1), DelaySpec.of())
    a = integrate(aux, 10.0)
    b = integrate(pert, 10.0)
    ts = np.linspace(0, 10, 1001)
    diff = b.sample(ts)[:, 0] - a.sample(ts)[:, 0]
    assert np.all(diff >= -1e-8) and diff[-1] > 1e-3


def test_shifted_delay_perturbation_structure():
    aux = cubic_aux()
    pert = build_perturbed_auxiliary(aux, DominatingL(((0.01, (0, 1)),), 2), DelaySpec.of(0.6))
    assert len(pert.delays) == 2 and pert.extra[0][1] == (0, 2)
    assert pert.history.span >= 0.6
    tr = integrate(pert, 5.0)
    assert np.all(np.isfinite(tr.y))


def test_criterion_quadratic_root():
    v = closed_form_criterion(-2.0, 1.0, lambda y: y * y)
    assert v.kind == "uniformly-asymptotically-stable"
    assert v.certified_radius == pytest.approx(2.0, abs=1e-10)


def test_criterion_linear_is_inconclusive():
    v = closed_form_criterion(-2.0, 1.0, lambda y: 3 * y)
    assert v.kind == "inconclusive" and v.certified_radius == 0.0


def test_criterion_benchmark_cubic():
    maj = instantiate(Section6Scenario(), horizon=40).majorant
    A1_hat = maj.L.coefficient(0, 0.0)
    v = closed_form_criterion(maj.p, maj.c, maj.L)
    ref = cubic_positive_root(-2.9, 1.1 * A1_hat, 0.1)
    assert v.certified_radius == pytest.approx(ref, rel=1e-10)
    ys = np.linspace(1e-6, ref * (1 - 1e-6), 500)
    assert np.all(maj.p * ys + maj.c * np.array([maj.L.diagonal(0.0, y) for y in ys]) < 0)


def test_criterion_radius_shrinks_with_c_hat():
    radii = [closed_form_criterion(-2.0, c, lambda y: y * y).certified_radius for c in (0.5, 1.0, 2.0, 4.0)]
    assert radii == sorted(radii, reverse=True)


def test_criterion_rejects_nonnegative_rate_on_request():
    assert closed_form_criterion(0.5, 1.0, lambda y: y * y).kind == "inconclusive"
    with pytest.raises(InvalidSup):
        closed_form_criterion(0.0, 1.0, lambda y: y * y, require=True)


def test_verdict_serialization():
    d = closed_form_criterion(-1.0, 1.0, lambda y: 0.0).to_dict()
    assert d["certified_radius"] == "inf"
    with pytest.raises(ValueError):
        StabilityVerdict("inconclusive", 1.0)


def linearized_scenario(F0=0.1, level=0.2):
    aux = cubic_aux(F0=F0, level=level)
    return build_linearized(aux, linearize_L(aux.L, 1.0), 1.0)


def test_decomposition_without_forcing():
    lin = linearized_scenario(F0=0.0)
    u_h, u_nh = decompose_linear_response(lin, 10.0)
    direct = integrate(lin, 10.0)
    assert np.array_equal(direct.y, u_h.y)
    assert superposition_residual(direct, u_h, u_nh, lin.F0) == 0.0


def test_decomposition_zero_history():
    lin = linearized_scenario(level=0.0)
    u_h, u_nh = decompose_linear_response(lin, 10.0, TIGHT)
    assert np.all(u_h.y == 0.0)
    direct = integrate(lin, 10.0, TIGHT)
    assert superposition_residual(direct, u_h, u_nh, lin.F0) < 1e-9


def test_superposition_residual_small():
    lin = linearized_scenario()
    u_h, u_nh = decompose_linear_response(lin, 20.0, TIGHT)
    direct = integrate(lin, 20.0, TIGHT)
    assert superposition_residual(direct, u_h, u_nh, lin.F0, np.linspace(0, 20, 2000)) < 1e-6
    assert u_nh.y.min() >= -1e-12


def test_decomposition_rejects_nonlinear():
    with pytest.raises(NotLinear):
        decompose_linear_response(cubic_aux(), 5.0)


def test_window_mismatch():
    inst = instantiate(Section6Scenario(t_end=5.0))
    with pytest.raises(WindowMismatch):
        integrate(inst.aux, 8.0)


def test_chi_tilde_max_bounds():
    aux = cubic_aux(F0=0.0)
    chi = chi_tilde_max(aux, 20.0)
    # P = -3 + 0.1 sin(5t), delayed gain 0.1 chi^2: decays while 0.1 chi^2 < 2.9
    assert 0.5 * math.sqrt(29) < chi <= math.sqrt(31) * 1.01
    assert chi_tilde_max(ScalarDelaySystem(0.5, 1.0, DominatingL(((1.0, (0, 3)),), 2), DelaySpec.of(0.5),
                                           HistoryFunction.constant(1.0, 0, 0.5)), 10.0) == 0.0
