"""Polynomial nonlinearities and their scalar dominating functions.

A field ``f(t, x(t), x(t - h_1), ..., x(t - h_m))`` is written as a sum of
:class:`MonomialTerm` (scalar coefficient times a product of state
components, landing in one output component) and :class:`LinearTerm`
(matrix coefficient times one argument).  Argument index 0 is the current
state ``x(t)``; index ``k >= 1`` is ``x(t - h_k(t))``.

:func:`dominating_L` turns such a field into a :class:`DominatingL`
``L(t, chi_0, ..., chi_m) = sum_j |a_j(t)| prod_k chi_k^e_jk`` with
``|f(t, x_0, ..., x_m)| <= L(t, |x_0|, ..., |x_m|)`` for every argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .errors import DegreeZeroTerm, UnsupportedForm
from .fundamental import induced_norm2, sup_over_window

Coef = Union[float, Callable[[float], float]]


def coef_value(c: Coef, t: float) -> float:
    return c(t) if callable(c) else c


def _norm2_fast(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.shape == (2, 2):
        a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
        return 0.5 * (math.hypot(a + d, b - c) + math.hypot(a - d, b + c))
    return induced_norm2(M)


class AbsCoef:
    """``t -> |a(t)|``."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, t):
        return abs(self.fn(t))


class NormCoef:
    """``t -> factor * |B(t)|`` (induced 2-norm)."""

    def __init__(self, fn, factor: float = 1.0):
        self.fn = fn
        self.factor = factor

    def __call__(self, t):
        return self.factor * _norm2_fast(self.fn(t))


class SumCoef:
    """Sum of scaled coefficients, each a float or callable."""

    def __init__(self, parts: Sequence[tuple[float, Coef]]):
        self.const = sum(w * c for w, c in parts if not callable(c))
        self.funcs = tuple((w, c) for w, c in parts if callable(c))

    def __call__(self, t):
        return self.const + sum(w * c(t) for w, c in self.funcs)


def _combine(parts: Sequence[tuple[float, Coef]]) -> Coef:
    if all(not callable(c) for _, c in parts):
        return float(sum(w * c for w, c in parts))
    if len(parts) == 1 and parts[0][0] == 1.0:
        return parts[0][1]
    return SumCoef(parts)


@dataclass(frozen=True)
class MonomialTerm:
    """``a(t) * prod x_{arg}[component] ** exponent`` added to output ``target``.

    ``powers`` is a tuple of ``(arg_index, component, exponent)`` triples;
    arg 0 is ``x(t)``, arg ``k`` is ``x(t - h_k)``.
    """

    coefficient: Coef
    target: int
    powers: tuple

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(tuple(int(v) for v in p) for p in self.powers))
        if any(e < 1 for _, _, e in self.powers):
            raise UnsupportedForm("monomial exponents must be positive integers")
        if self.degree < 1:
            raise UnsupportedForm("monomial of total degree 0 breaks f(t, 0) = 0")

    @property
    def degree(self) -> int:
        return sum(e for _, _, e in self.powers)

    def exponents(self, n_args: int) -> tuple[int, ...]:
        out = [0] * n_args
        for arg, _, e in self.powers:
            out[arg] += e
        return tuple(out)


@dataclass(frozen=True)
class LinearTerm:
    """``B(t) @ x_{arg}`` with ``B`` a constant matrix or a callable."""

    matrix: object
    arg: int

    def at(self, t: float) -> np.ndarray:
        return np.asarray(self.matrix(t) if callable(self.matrix) else self.matrix, dtype=float)


class PolynomialField:
    """Sum of monomial and linear-matrix terms; callable as ``f(t, x, *delayed)``.

    Evaluation broadcasts over a trailing batch axis, so ``x`` may be
    ``(n,)`` or ``(n, K)``.
    """

    def __init__(self, dim: int, terms: Iterable, n_args: int | None = None):
        self.dim = int(dim)
        self.terms = tuple(terms)
        for term in self.terms:
            if not isinstance(term, (MonomialTerm, LinearTerm)):
                raise UnsupportedForm(f"unsupported term {term!r}")
        used = [0]
        for term in self.terms:
            if isinstance(term, MonomialTerm):
                used += [a for a, _, _ in term.powers]
            else:
                used.append(term.arg)
        self.n_args = max(used) + 1 if n_args is None else int(n_args)
        if max(used) >= self.n_args:
            raise ValueError("term refers to an argument beyond n_args")

    def __call__(self, t, x, *delayed):
        args = (x,) + delayed
        out = np.zeros_like(np.asarray(x, dtype=float))
        for term in self.terms:
            if isinstance(term, LinearTerm):
                out = out + term.at(t) @ args[term.arg]
            else:
                val = coef_value(term.coefficient, t)
                for arg, comp, e in term.powers:
                    val = val * args[arg][comp] ** e
                out[term.target] = out[term.target] + val
        return out


@dataclass(frozen=True)
class DominatingL:
    """``L(t, chi_0, ..., chi_m) = sum_j coef_j(t) prod_k chi_k ** e_jk``.

    Coefficients are non-negative floats or callables, exponents
    non-negative integers, so ``L`` is nondecreasing in every argument on
    the non-negative orthant.  A term with all-zero exponents is a constant
    (used for perturbation bounds whose ``L_R(t, 0)`` may be nonzero).
    """

    terms: tuple
    arity: int

    def __post_init__(self):
        terms = tuple((c, tuple(int(e) for e in ex)) for c, ex in self.terms)
        for _, ex in terms:
            if len(ex) != self.arity:
                raise ValueError(f"exponent tuple {ex} does not match arity {self.arity}")
            if any(e < 0 for e in ex):
                raise ValueError("exponents must be non-negative")
        object.__setattr__(self, "terms", terms)
        compiled = tuple(
            (c if callable(c) else None, 0.0 if callable(c) else float(c), tuple((k, e) for k, e in enumerate(ex) if e))
            for c, ex in terms
        )
        object.__setattr__(self, "_compiled", compiled)

    @classmethod
    def zero(cls, arity: int) -> "DominatingL":
        return cls((), arity)

    def __call__(self, t: float, *chi):
        total = 0.0
        for fn, const, factors in self._compiled:
            v = fn(t) if fn is not None else const
            for k, e in factors:
                v = v * (chi[k] if e == 1 else chi[k] ** e)
            total = total + v
        return total

    def coefficient(self, j: int, t: float) -> float:
        return coef_value(self.terms[j][0], t)

    @property
    def exponents(self) -> tuple[tuple[int, ...], ...]:
        return tuple(ex for _, ex in self.terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_homogeneous(self) -> bool:
        """True when ``L(t, 0, ..., 0) = 0``."""
        return all(sum(ex) >= 1 for ex in self.exponents)

    @property
    def is_linear(self) -> bool:
        return all(sum(ex) == 1 for ex in self.exponents)

    def degrees(self) -> tuple[int, ...]:
        return tuple(sum(ex) for ex in self.exponents)

    def sup(self, t0: float, t1: float, samples: int = 10_000) -> "DominatingL":
        """Same structure with every coefficient replaced by its sup on ``[t0, t1]``."""
        terms = []
        for c, ex in self.terms:
            terms.append((sup_over_window(c, t0, t1, samples) if callable(c) else float(c), ex))
        return DominatingL(tuple(terms), self.arity)

    def diagonal(self, t: float, y: float) -> float:
        """``L(t, y, ..., y)``."""
        return self(t, *([y] * self.arity))

    def structurally_equal(self, other: "DominatingL", times: Iterable[float], rtol: float = 1e-12) -> bool:
        """Same exponent multiset and matching coefficients at ``times``."""
        if self.arity != other.arity:
            return False
        mine = sorted(range(len(self.terms)), key=lambda j: self.terms[j][1])
        theirs = sorted(range(len(other.terms)), key=lambda j: other.terms[j][1])
        if [self.terms[j][1] for j in mine] != [other.terms[j][1] for j in theirs]:
            return False
        for t in times:
            for a, b in zip(mine, theirs):
                va, vb = self.coefficient(a, t), other.coefficient(b, t)
                if not math.isclose(va, vb, rel_tol=rtol, abs_tol=1e-15):
                    return False
        return True


def dominating_L(f) -> DominatingL:
    """Build ``L`` with ``|f(t, chi)|_2 <= L(t, |chi_0|, ..., |chi_m|)``.

    Uses ``|f|_2 <= |f|_1``, ``|x_i|^n <= |x|^n`` for monomials and
    ``|B x| <= |B| |x|`` for linear terms.  Terms with the same exponent
    pattern are merged by adding coefficient magnitudes.

    ``f`` is a :class:`PolynomialField` or an iterable of terms.
    """
    if isinstance(f, PolynomialField):
        terms, arity = f.terms, f.n_args
    else:
        try:
            terms = tuple(f)
        except TypeError:
            raise UnsupportedForm(f"cannot build a dominating function for {f!r}") from None
        for term in terms:
            if not isinstance(term, (MonomialTerm, LinearTerm)):
                raise UnsupportedForm(f"unsupported term {term!r}")
        arity = PolynomialField(1, terms).n_args if terms else 1
    grouped: dict[tuple[int, ...], list] = {}
    for term in terms:
        if isinstance(term, MonomialTerm):
            ex = term.exponents(arity)
            c = term.coefficient
            mag = AbsCoef(c) if callable(c) else abs(float(c))
        elif isinstance(term, LinearTerm):
            ex = tuple(1 if k == term.arg else 0 for k in range(arity))
            m = term.matrix
            mag = NormCoef(m) if callable(m) else induced_norm2(m)
        else:
            raise UnsupportedForm(f"unsupported term {term!r}")
        grouped.setdefault(ex, []).append((1.0, mag))
    return DominatingL(tuple((_combine(parts), ex) for ex, parts in grouped.items()), arity)


def linearize_L(L: DominatingL, chi_tilde: float) -> list[Coef]:
    """Coefficients ``mu_k(t)`` with ``L(t, chi) <= sum_k mu_k(t) chi_k`` on ``[0, chi_tilde]^{m+1}``.

    Each term ``|a| prod chi_k^e_k`` of degree ``d`` is charged to the lowest
    argument index carrying a positive exponent and bounded by
    ``|a| chi_tilde^(d-1) chi_k``.  The returned list has ``L.arity``
    entries (floats or callables; 0.0 where nothing was charged).
    """
    if not chi_tilde > 0:
        raise ValueError("chi_tilde must be positive")
    parts: list[list] = [[] for _ in range(L.arity)]
    for c, ex in L.terms:
        deg = sum(ex)
        if deg == 0:
            raise DegreeZeroTerm("cannot linearize a constant term")
        k = next(i for i, e in enumerate(ex) if e > 0)
        parts[k].append((chi_tilde ** (deg - 1), c))
    return [_combine(p) if p else 0.0 for p in parts]


def linear_L(mu: Sequence[Coef], skip_current: bool = False) -> DominatingL:
    """``L(t, chi) = sum_k mu_k(t) chi_k`` (optionally without the ``k = 0`` term)."""
    arity = len(mu)
    terms = []
    for k, m in enumerate(mu):
        if skip_current and k == 0:
            continue
        if not callable(m) and m == 0:
            continue
        terms.append((m, tuple(1 if j == k else 0 for j in range(arity))))
    return DominatingL(tuple(terms), arity)
