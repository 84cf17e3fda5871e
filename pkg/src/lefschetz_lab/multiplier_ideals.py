"""Multiplier ideals ``I(phi) = {f : |f|^2 e^{-2 phi} locally integrable}`` of model weights.

Ideals are monomial (staircase) ideals in at most three local coordinates.  Every closed
form here is exact rational arithmetic; :func:`integrability_oracle` is an independent
numerical check used by the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np
import sympy as sp
from scipy.special import logsumexp

from .singular_weights import (LogMonomial, LogSum, ModelWeight, PolydiscDomain, RePolynomial,
                               SmoothTrig, _frac, e1_isolated_check)

AMBIGUITY = 1e-9
MAX_VARS = 3


class ThresholdAmbiguity(ValueError):
    pass


def _floor(x: Fraction) -> int:
    return math.floor(x)


# ---------------------------------------------------------------------------
# staircase ideals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StaircaseIdeal:
    nvars: int
    generators: tuple
    point: tuple | None = None

    def __post_init__(self):
        if self.nvars > MAX_VARS:
            raise ValueError(f"ideals in {self.nvars} variables are unsupported (at most {MAX_VARS})")
        gens = {tuple(int(e) for e in g) for g in self.generators}
        if any(len(g) != self.nvars or min(g, default=0) < 0 for g in gens):
            raise ValueError("generators must be nonnegative exponent vectors of the right length")
        minimal = sorted(g for g in gens if not any(h != g and _divides(h, g) for h in gens))
        object.__setattr__(self, "generators", tuple(minimal))
        if not minimal:
            raise ValueError("the zero ideal is not a staircase ideal")

    @classmethod
    def unit(cls, nvars, point=None):
        return cls(nvars, ((0,) * nvars,), point)

    @property
    def is_unit(self) -> bool:
        return self.generators == ((0,) * self.nvars,)

    def contains(self, exps) -> bool:
        return any(_divides(g, tuple(exps)) for g in self.generators)

    def __le__(self, other: "StaircaseIdeal") -> bool:
        return all(other.contains(g) for g in self.generators)

    def __lt__(self, other):
        return self <= other and self != other

    def __eq__(self, other):
        return isinstance(other, StaircaseIdeal) and self.nvars == other.nvars \
            and self.generators == other.generators

    def __hash__(self):
        return hash((self.nvars, self.generators))

    def __str__(self):
        names = ["z", "w", "u"] if self.nvars > 1 else ["z"]
        if self.point is not None:
            names = [n if not p else f"({n}-{_fmt(p)})" for n, p in zip(names, self.point)]

        def mono(g):
            f = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, g) if e]
            return "*".join(f) or "1"

        return "(" + ", ".join(mono(g) for g in self.generators) + ")"

    def to_json(self):
        out = {"generators": [list(g) for g in self.generators], "text": str(self)}
        if self.point is not None:
            out["point"] = [_fmt(p) for p in self.point]
        return out


def _fmt(x):
    x = complex(x)
    return x.real if x.imag == 0 else [x.real, x.imag]


def _divides(g, h) -> bool:
    return all(a <= b for a, b in zip(g, h))


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def mis_snc(alphas) -> StaircaseIdeal:
    """``I(sum alpha_j log|z_j|) = (prod z_j^{floor alpha_j})``."""
    al = [_frac(a) for a in alphas]
    if any(a < 0 for a in al):
        raise ValueError(f"SNC coefficients must be nonnegative, got {alphas}")
    return StaircaseIdeal(len(al), (tuple(_floor(a) for a in al),))


@dataclass(frozen=True)
class SiuParams:
    """``a log|z| + log(|z|^b + |w|^c)``."""
    a: Fraction
    b: Fraction
    c: Fraction

    def __post_init__(self):
        for k in ("a", "b", "c"):
            object.__setattr__(self, k, _frac(getattr(self, k)))
        a, b, c = self.a, self.b, self.c
        if min(a, b, c) <= 0:
            raise ValueError("a, b, c must be positive")
        if a.denominator == 1:
            raise ValueError(f"constraint a not in Z fails: a = {a}")
        gap = math.ceil(a) - a
        if not gap < b:
            raise ValueError(f"constraint ceil(a)-a < b fails: {gap} >= {b}")
        if not b < 1:
            raise ValueError(f"constraint b < 1 fails: b = {b}")
        x = c * (1 - gap / b)
        if x.denominator == 1:
            raise ValueError(f"constraint c(1-(ceil(a)-a)/b) not in Z fails: value {x}")


def siu_generators(p: SiuParams) -> StaircaseIdeal:
    """``(z^{p0+1}, z^{p0} w^{q0})`` with ``p0 = ceil(a-1)``, ``q0 = floor(c(1-(ceil(a)-a)/b))``."""
    p0 = math.ceil(p.a - 1)
    q0 = _floor(p.c * (1 - (math.ceil(p.a) - p.a) / p.b))
    return StaircaseIdeal(2, ((p0 + 1, 0), (p0, q0)))


@dataclass(frozen=True)
class LocalModel:
    """``sum_j alpha_j log|z_j| + E log(|z_s|^b + |z_o|^c)`` at a point; ``E = 0`` is SNC.

    ``s``/``o`` are the variable indices of the two-term sum.  When ``E > 0`` the
    monomial part may only involve ``z_s``.
    """
    alphas: tuple
    E: Fraction = Fraction(0)
    b: Fraction = Fraction(1)
    c: Fraction = Fraction(1)
    s: int = 0
    o: int = 1
    point: tuple | None = None

    @property
    def nvars(self):
        return len(self.alphas)

    def scaled(self, t: Fraction) -> "LocalModel":
        return LocalModel(tuple(a * t for a in self.alphas), self.E * t, self.b, self.c, self.s, self.o, self.point)

    def ideal(self) -> StaircaseIdeal:
        """Exact ideal.  For the two-term model ``z_s^p z_o^q`` lies in ``I`` iff

        ``p > a - 1`` and ``q > c'(1 - (p - a + 1)/b') - 1`` with ``a = alpha_s``,
        ``b' = E b``, ``c' = E c`` (split the polydisc along ``|z_s|^b' = |z_o|^c'``).
        """
        n = self.nvars
        if self.E == 0:
            return StaircaseIdeal(n, (tuple(_floor(a) for a in self.alphas),), self.point)
        a = self.alphas[self.s]
        bp, cp = self.E * self.b, self.E * self.c
        p_min = _floor(a - 1) + 1
        gens = []
        p = p_min
        while True:
            X = cp * (1 - (p - a + 1) / bp)
            q = max(0, _floor(X - 1) + 1)
            g = [0] * n
            g[self.s], g[self.o] = p, q
            gens.append(tuple(g))
            if q == 0:
                break
            p += 1
        return StaircaseIdeal(n, tuple(gens), self.point)

    def jump_candidates(self, t_max: Fraction) -> set:
        out = set()
        for al in self.alphas:
            if al > 0:
                out |= {Fraction(m) / al for m in range(1, _floor(t_max * al) + 1)}
        if self.E:
            a, b, c = self.alphas[self.s], self.E * self.b, self.E * self.c
            # X_p(t) = t c (a + b) / b - (c / b)(p + 1) crosses an integer m >= 1
            slope = c * (a + b) / b
            for p in range(0, _floor(t_max * (a + b)) + 2):
                top = slope * t_max - c / b * (p + 1)
                for m in range(1, _floor(top) + 1):
                    out.add((m + c / b * (p + 1)) / slope)
        return {t for t in out if 0 < t <= t_max}

    def jumping_numbers(self, t_max) -> list:
        t_max = _frac(t_max)
        cands = sorted(self.jump_candidates(t_max))
        jumps, prev = [], Fraction(0)
        for t in cands:
            mid = (prev + t) / 2
            if self.scaled(t).ideal() != self.scaled(mid).ideal():
                jumps.append(t)
            prev = t
        return jumps


def local_model(w: ModelWeight, point=None) -> LocalModel:
    """Reduce a grammar weight to its singular part at ``point`` (default: origin).

    Terms not vanishing at the point are smooth there and bounded, as are the
    pluriharmonic and trigonometric terms; none of them changes the stalk.
    """
    n = w.n
    x = tuple(complex(v) for v in (point if point is not None else (0,) * n))
    alphas = [Fraction(0)] * n
    sums = []
    for t in w.terms:
        if isinstance(t, LogMonomial):
            for j, e in enumerate(t.exps):
                if e and t.center[j] == x[j]:
                    alphas[j] += t.coef * e
        elif isinstance(t, LogSum):
            if all(complex(x[v]) == a for v, a, _ in t.parts):
                sums.append(t)
        elif not isinstance(t, (RePolynomial, SmoothTrig)):
            raise ValueError(f"unsupported term {t}")
    pt = x if any(x) else None
    if n > MAX_VARS:
        raise ValueError(f"ideals in {n} variables are unsupported")
    if not sums:
        return LocalModel(tuple(alphas), point=pt)
    if len(sums) > 1:
        raise ValueError("more than one singular sum term at the point is outside the grammar")
    t = sums[0]
    parts = t.parts
    if len(parts) == 1:
        v, _, b = parts[0]
        alphas[v] += t.coef * b
        return LocalModel(tuple(alphas), point=pt)
    if len(parts) != 2 or parts[0][0] == parts[1][0]:
        raise ValueError("sum terms must have two parts in distinct variables")
    (v1, _, b1), (v2, _, b2) = parts
    others = [j for j in range(n) if alphas[j] and j not in (v1, v2)]
    if others:
        raise ValueError("monomial factors outside the two-term sum are outside the grammar")
    if alphas[v1] and alphas[v2]:
        raise ValueError("monomial factors in both variables of the sum are outside the grammar")
    if alphas[v2]:
        v1, b1, v2, b2 = v2, b2, v1, b1
    return LocalModel(tuple(alphas), t.coef, b1, b2, v1, v2, pt)


def scaled_ideal(w: ModelWeight, t, point=None) -> StaircaseIdeal:
    """``I(t phi)`` at ``point``; refuses ``t`` within ``1e-9`` of a jumping number."""
    t = _frac(t)
    if t <= 0:
        raise ValueError("t must be positive")
    model = local_model(w, point)
    near = [j for j in model.jumping_numbers(t + 1) if abs(j - t) <= AMBIGUITY]
    if near:
        raise ThresholdAmbiguity(f"threshold ambiguity: t = {float(t)} is within 1e-9 of the jump {near[0]}")
    return model.scaled(t).ideal()


def jumping_numbers(w: ModelWeight, t_max, point=None) -> list:
    return local_model(w, point).jumping_numbers(t_max)


def lower_regularization(w: ModelWeight, point=None) -> StaircaseIdeal:
    """``I_-(phi) = I((1 - delta) phi)`` for ``delta`` below the gap to the last jump ``< 1``."""
    model = local_model(w, point)
    below = [j for j in model.jumping_numbers(1) if j < 1]
    t = (max(below, default=Fraction(0)) + 1) / 2
    return model.scaled(t).ideal()


def lower_gap(w: ModelWeight, point=None) -> Fraction:
    below = [j for j in jumping_numbers(w, 1, point) if j < 1]
    return 1 - max(below, default=Fraction(0))


def siu_weight(p: SiuParams) -> ModelWeight:
    return ModelWeight.parse(f"{p.a}*log|z1| + log(|z1|^{p.b} + |z2|^{p.c})", 2)


def snc_weight(alphas) -> ModelWeight:
    n = len(alphas)
    return ModelWeight(n, tuple(LogMonomial(_frac(a), tuple(int(j == i) for j in range(n)), (0j,) * n)
                                for i, a in enumerate(alphas) if _frac(a)))


# ---------------------------------------------------------------------------
# the non-coherent example
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prop2Family:
    """``log|z| + sum_{k<=K} eps_k log(|z| + |w - a_k|^{N_k})`` (``k`` is 1-based)."""
    a: tuple
    eps: tuple
    N: tuple

    def __post_init__(self):
        for name in ("a", "eps"):
            object.__setattr__(self, name, tuple(_frac(v) for v in getattr(self, name)))
        object.__setattr__(self, "N", tuple(int(v) for v in self.N))
        K = len(self.a)
        if not (len(self.eps) == len(self.N) == K) or K == 0:
            raise ValueError("a, eps and N must have the same positive length")
        if len(set(self.a)) != K:
            raise ValueError("points a_k must be distinct")
        if any(v == 0 or abs(v) >= Fraction(1, 2) for v in self.a):
            raise ValueError("points a_k must satisfy 0 < |a_k| < 1/2")
        if any(e <= 0 for e in self.eps):
            raise ValueError("eps_k must be positive")
        prods = self.products
        if any(p.denominator == 1 for p in prods):
            raise ValueError("N_k eps_k must not be an integer")
        if min(prods) <= 1:
            raise ValueError("N_k eps_k must be bounded below by a constant C > 1")

    @classmethod
    def default(cls, K: int = 6):
        """``a_k = 2^{-k-1}``, ``eps_k = 2^{-k}``, ``N_k`` minimal with ``N_k eps_k`` in ``[1.5, 1.6)``."""
        a, eps, N = [], [], []
        for k in range(1, K + 1):
            e = Fraction(1, 2 ** k)
            n = 1
            while not (Fraction(3, 2) <= n * e < Fraction(8, 5) and (n * e).denominator != 1):
                n += 1
            a.append(Fraction(1, 2 ** (k + 1)))
            eps.append(e)
            N.append(n)
        return cls(tuple(a), tuple(eps), tuple(N))

    @property
    def K(self):
        return len(self.a)

    @property
    def products(self):
        return [n * e for n, e in zip(self.N, self.eps)]

    @property
    def C(self):
        return min(self.products)

    def weight(self) -> ModelWeight:
        terms = [LogMonomial(Fraction(1), (1, 0), (0j, 0j))]
        for a, e, n in zip(self.a, self.eps, self.N):
            terms.append(LogSum(e, ((0, 0j, Fraction(1)), (1, complex(a), Fraction(n)))))
        return ModelWeight(2, tuple(terms), PolydiscDomain.standard(2))

    def reordered(self, perm) -> "Prop2Family":
        return Prop2Family(tuple(self.a[i] for i in perm), tuple(self.eps[i] for i in perm),
                           tuple(self.N[i] for i in perm))


def prop2_q(f: Prop2Family, k: int, delta, rule: str = "exact") -> int:
    """Exponent ``q`` with ``I((1-delta) phi)_{(0,a_k)} = (z, (w-a_k)^q)`` (0 means the unit ideal).

    ``rule="exact"``: the singular part at ``(0, a_k)`` is ``t log|z| + t eps_k log(|z| + |w-a_k|^N_k)``,
    equisingular to Siu's model with ``a = t``, ``b = t eps_k``, ``c = t N_k eps_k``.
    ``rule="lemma"``: the closed form ``floor(N_k eps_k (1 - 2 delta))`` obtained from Siu's
    formula with ``a = b = 1 - delta`` and ``c = (1-delta) N_k eps_k``.
    """
    if not 1 <= k <= f.K:
        raise ValueError(f"k must lie in 1..{f.K}")
    d = _frac(delta)
    if not 0 < d < 1:
        raise ValueError("delta must lie in (0, 1)")
    ne = f.products[k - 1]
    if rule == "lemma":
        return _floor(ne * (1 - 2 * d))
    if rule != "exact":
        raise ValueError(f"unknown rule {rule!r}")
    ideal = scaled_ideal(f.weight(), 1 - d, (0, f.a[k - 1]))
    if ideal.is_unit:
        return 0
    if ideal.generators != ((0, ideal.generators[0][1]), (1, 0)):
        raise AssertionError(f"unexpected stalk {ideal}")
    return ideal.generators[0][1]


def prop2_stalk(f: Prop2Family, k: int, delta, rule: str = "exact") -> StaircaseIdeal:
    q = prop2_q(f, k, delta, rule)
    if q < 1:
        raise ValueError(f"delta = {delta} too large at k = {k}: q = {q} < 1 (the stalk is the unit ideal)")
    return StaircaseIdeal(2, ((1, 0), (0, q)), (0, f.a[k - 1]))


def coherence_diagnostic(f: Prop2Family, degree: int) -> dict:
    """Desk-scale obstruction to coherence of ``I_-(phi)`` at the origin.

    A polynomial ``g`` of degree ``<= degree`` lying in every stalk of ``I_-`` at ``(0, a_k)``
    has ``g(0, w)`` vanishing at every ``a_k``; with more than ``degree`` distinct points
    exact linear algebra shows ``g(0, w) = 0``, i.e. ``z | g``.  Such sections never
    restrict to ``(w - a_k)^{q_k}`` on ``{z = 0}``, although that element lies in the stalk.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if f.K < degree + 2:
        raise ValueError(f"K = {f.K} too small for degree {degree}: need K >= degree + 2")
    qs = [_floor(p) for p in f.products]
    w = sp.Symbol("w")
    # unknowns: coefficients of w^j in g(0, w); vanishing of w-derivatives r < q_k at a_k
    rows = []
    for a, q in zip(f.a, qs):
        for r in range(q):
            rows.append([sp.Rational(math.perm(j, r)) * sp.Rational(a) ** (j - r) if j >= r else 0
                         for j in range(degree + 1)])
    M = sp.Matrix(rows)
    kernel = M.nullspace()
    z_divisible = len(kernel) == 0
    if not z_divisible:
        return {"verdict": "no witness", "kernel_dim": len(kernel), "K": f.K, "degree": degree}
    k_star = max(range(f.K), key=lambda i: (abs(f.a[i]), -i))
    witness = {"k": k_star + 1, "point": [0, float(f.a[k_star])], "exponent": qs[k_star],
               "monomial": f"(w-{f.a[k_star]})^{qs[k_star]}"}
    return {"verdict": "non-coherent witness found", "witness": witness, "rank": M.rank(),
            "K": f.K, "degree": degree, "z_divisible": True}


def zero_lelong_absorption(w1: ModelWeight, w2: ModelWeight, point=None, max_degree: int = 4) -> bool:
    """Oracle comparison of ``I(w1)`` and ``I(w1 + w2)`` on monomials up to ``max_degree``."""
    if any(t.lelong(point or (0,) * w2.n) for t in w2.terms) or w2.log_terms:
        raise ValueError("w2 must have zero Lelong numbers (smooth terms only)")
    model = local_model(w1, point)
    ideal = model.ideal()
    smooth = None if not w2.terms else w2
    for exps in _monomials(model.nvars, max_degree):
        a = integrability_oracle(model, exps)
        b = integrability_oracle(model, exps, smooth=smooth)
        if a != b or a != ideal.contains(exps):
            return False
    return True


def _monomials(n, d):
    return [e for e in product(range(d + 1), repeat=n) if sum(e) <= d]


# ---------------------------------------------------------------------------
# numerical integrability oracle
# ---------------------------------------------------------------------------

_X, _WX = np.polynomial.legendre.leggauss(12)
_U = (5e4, 1e5)


def _graded_nodes(centre: float, scale: float):
    """Gauss-Legendre panels on ``[0, 5 centre + 200]`` graded toward ``0`` and ``centre``."""
    h = 1.0 / (4 * max(scale, 1.0))
    edges = {0.0, centre}
    j = 0
    while h * 2 ** j < 4 * centre + 200:
        edges.add(centre + h * 2 ** j)
        if centre - h * 2 ** j > 0:
            edges.add(centre - h * 2 ** j)
        if h * 2 ** j < centre:
            edges.add(h * 2 ** j)
        j += 1
    e = np.array(sorted(edges))
    a, b = e[:-1], e[1:]
    v = ((a + b) / 2)[:, None] + ((b - a) / 2)[:, None] * _X[None, :]
    w = ((b - a) / 2)[:, None] * _WX[None, :]
    return v.ravel(), w.ravel()


def _log_profile(model: LocalModel, exps, u: float, smooth=None) -> float:
    """``log`` of the inner integral over ``v = -log|z_o|`` at ``u = -log|z_s|`` (one angle)."""
    a = float(model.alphas[model.s])
    p, q = exps[model.s], exps[model.o]
    E, b, c = float(model.E), float(model.b), float(model.c)
    v, wv = _graded_nodes(b * u / c, c)
    L = -(2 * q + 2) * v - 2 * E * np.logaddexp(-b * u, -c * v) + np.log(wv)
    if smooth is not None:
        L = L - 2 * _smooth_at(model, smooth, np.full_like(v, u), v)
    return -(2 * p + 2 - 2 * a) * u + float(logsumexp(L))


def _smooth_at(model, w2: ModelWeight, u, v):
    base = np.array(model.point or (0,) * model.nvars, dtype=complex)
    Zs = np.tile(base, (len(u), 1))
    Zs[:, model.s] += np.exp(-u) * np.exp(0.37j)
    if model.nvars > 1:
        Zs[:, model.o] += np.exp(-v) * np.exp(1.91j)
    return w2.value(Zs)


def integrability_oracle(model: LocalModel, exps, smooth: ModelWeight | None = None) -> bool:
    """Is ``|z^exps|^2 e^{-2 phi}`` integrable near the point?  Decided numerically.

    In log-polar coordinates ``u = -log|z_s|``, ``v = -log|z_o|`` the integral becomes
    ``int e^{h(u)} du`` with ``h`` built from an accurate inner quadrature in ``v``; the
    verdict is the sign of the slope of ``h`` at large ``u``.  Variables outside the
    two-term sum are 1-D radial factors decided the same way.  Slope resolution ~1e-7.
    """
    exps = tuple(exps)
    paired = (model.s, model.o) if model.E else ()
    for j in range(model.nvars):
        if j not in paired and _radial_slope(model, j, exps[j], smooth) >= -1e-7:
            return False
    if not paired:
        return True
    h1, h2 = (_log_profile(model, exps, u, smooth) for u in _U)
    return (h2 - h1) / (_U[1] - _U[0]) < -1e-7


def _radial_slope(model: LocalModel, j: int, p: int, smooth=None) -> float:
    """Slope in ``U`` of ``log int_U^{U+200} e^{-(2p+2-2 alpha_j) s - 2 psi} ds`` (``s = -log|z_j|``)."""
    alpha = float(model.alphas[j])
    v, wv = _graded_nodes(0.0, 1.0)
    out = []
    for U in _U:
        s = U + v
        L = -(2 * p + 2 - 2 * alpha) * s + np.log(wv)
        if smooth is not None:
            base = np.array(model.point or (0,) * model.nvars, dtype=complex)
            Zs = np.tile(base, (len(s), 1))
            Zs[:, j] += np.exp(-s) * np.exp(0.37j)
            L = L - 2 * smooth.value(Zs)
        out.append(float(logsumexp(L)))
    return (out[1] - out[0]) / (_U[1] - _U[0])


def oracle_ideal_agrees(model: LocalModel, max_degree: int = 6) -> tuple:
    """Compare the closed-form ideal with the oracle on all monomials of degree ``<= max_degree``."""
    ideal = model.ideal()
    bad = [e for e in _monomials(model.nvars, max_degree) if integrability_oracle(model, e) != ideal.contains(e)]
    return not bad, bad


__all__ = [
    "StaircaseIdeal", "SiuParams", "Prop2Family", "LocalModel", "ThresholdAmbiguity",
    "mis_snc", "siu_generators", "scaled_ideal", "jumping_numbers", "lower_regularization", "lower_gap",
    "prop2_q", "prop2_stalk", "coherence_diagnostic", "zero_lelong_absorption", "e1_isolated_check",
    "integrability_oracle", "oracle_ideal_agrees", "local_model", "siu_weight", "snc_weight",
]
