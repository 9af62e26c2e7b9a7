"""Small reference systems shared by several test modules."""

import math

import numpy as np

from delaybound.auxiliary import ScalarDelaySystem
from delaybound.dde_core import DelaySpec, HistoryFunction, VectorDelaySystem
from delaybound.fundamental import ScalarMatrix
from delaybound.nonlinearity import DominatingL, LinearTerm, MonomialTerm, PolynomialField


def radial_cubic(x0=(0.1, 0.0)) -> VectorDelaySystem:
    """``x' = -x + |x|^2 x``: the norm obeys ``r' = -r + r^3``, separatrix at ``|x| = 1``."""
    f = PolynomialField(2, [
        MonomialTerm(1.0, 0, ((0, 0, 3),)),
        MonomialTerm(1.0, 0, ((0, 0, 1), (0, 1, 2))),
        MonomialTerm(1.0, 1, ((0, 0, 2), (0, 1, 1))),
        MonomialTerm(1.0, 1, ((0, 1, 3),)),
    ], n_args=1)
    return VectorDelaySystem(ScalarMatrix(lambda t: -1.0, 2), f, DelaySpec.of(), HistoryFunction.constant(np.array(x0)))


def scalar_cubic(level=0.1) -> ScalarDelaySystem:
    """``y' = -y + y^3``."""
    return ScalarDelaySystem(-1.0, 1.0, DominatingL(((1.0, (3,)),), 1), DelaySpec.of(), HistoryFunction.constant(level))


def linear_stable(x0=(0.1, 0.1)) -> VectorDelaySystem:
    A = np.array([[-1.0, 0.5], [-0.5, -1.0]])
    return VectorDelaySystem(lambda t: A, None, DelaySpec.of(), HistoryFunction.constant(np.array(x0)))


def a1(t):
    return 0.5 * math.sin(t) - 0.2


def a2(t):
    return math.cos(2 * t)


def polynomial_example():
    # [a1 x1^3 x2(t-h1)^2, a2 x2(t-h2)^3]
    return PolynomialField(
        2, [MonomialTerm(a1, 0, ((0, 0, 3), (1, 1, 2))), MonomialTerm(a2, 1, ((2, 1, 3),))]
    )


def cubic_feedback(b=0.1):
    A1 = lambda t: np.array([[0.0, 1.0], [-(1 + 0.1 * math.sin(t)), -1.0]])
    return PolynomialField(
        2, [LinearTerm(A1, 0), LinearTerm(lambda t: 0.1 * A1(t), 1), MonomialTerm(b, 1, ((1, 1, 3),))], n_args=2
    )
