"""Model psh weights on polydiscs, Lelong numbers, and currents built from ``dphi``.

Coordinates are ``z_1..z_n`` (0-based in the API).  ``dV = omega^n / n! = 2^n dlambda``
with ``omega = i sum dz_j ^ dzbar_j``, as in :mod:`lefschetz_lab.fourier_forms`.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import sympy as sp

from .extalg import BigradedForm, DegreeError, _letters, _perm_sign, _split
from .fourier_forms import TWISTED, TrigPoly, _sign_of, _top_coefficient, parse_trig_weight

Z = sp.symbols("z1:7")
ZB = sp.symbols("zb1:7")

NEAR_ZERO = 1e-8
COUNTEREXAMPLE = 1e-2


class QuadratureDivergence(RuntimeError):
    pass


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolydiscDomain:
    center: tuple
    radii: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(complex(c) for c in self.center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if len(self.center) != len(self.radii):
            raise ValueError("center and radii must have the same length")
        if any(r <= 0 or r > 0.5 for r in self.radii):
            raise ValueError(f"radii must lie in (0, 1/2], got {self.radii}")

    @classmethod
    def standard(cls, n, radius=0.5, center=None):
        return cls(center or (0,) * n, (radius,) * n)

    @property
    def n(self):
        return len(self.center)

    def contains(self, x, tol=1e-12) -> bool:
        return all(abs(complex(a) - c) <= r + tol for a, c, r in zip(x, self.center, self.radii))

    def contains_domain(self, other: "PolydiscDomain") -> bool:
        return all(abs(c2 - c1) + r2 <= r1 + 1e-12
                   for c1, r1, c2, r2 in zip(self.center, self.radii, other.center, other.radii))


# ---------------------------------------------------------------------------
# weight primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogMonomial:
    """``coef * sum_j exps[j] log|z_j - center[j]|``."""
    coef: Fraction
    exps: tuple
    center: tuple

    def value(self, Zs):
        out = 0.0
        for j, e in enumerate(self.exps):
            if e:
                out = out + float(e) * np.log(np.abs(Zs[..., j] - self.center[j]))
        return float(self.coef) * out

    def grad(self, Zs, out):
        for j, e in enumerate(self.exps):
            if e:
                out[..., j] += float(self.coef) * float(e) / (2 * (Zs[..., j] - self.center[j]))

    def lelong(self, x) -> Fraction:
        return self.coef * sum((Fraction(e) for j, e in enumerate(self.exps)
                                if e and complex(x[j]) == self.center[j]), Fraction(0))

    def singular_centers(self):
        return [(j, self.center[j]) for j, e in enumerate(self.exps) if e]

    def scaled(self, t):
        return LogMonomial(self.coef * t, self.exps, self.center)

    def __str__(self):
        fac = []
        for j, e in enumerate(self.exps):
            if not e:
                continue
            base = f"z{j + 1}" if self.center[j] == 0 else f"(z{j + 1}-{_num(self.center[j])})"
            fac.append(base if e == 1 else f"{base}^{e}")
        return f"{_coef(self.coef)}log|{'*'.join(fac)}|"


@dataclass(frozen=True)
class LogSum:
    """``coef * log(sum_i |z_{v_i} - a_i|^{b_i})`` with ``parts = ((v, a, b), ...)``."""
    coef: Fraction
    parts: tuple

    def _moduli(self, Zs):
        return [np.abs(Zs[..., v] - a) ** float(b) for v, a, b in self.parts]

    def value(self, Zs):
        return float(self.coef) * np.log(sum(self._moduli(Zs)))

    def grad(self, Zs, out):
        mods = self._moduli(Zs)
        S = sum(mods)
        for (v, a, b), m in zip(self.parts, mods):
            out[..., v] += float(self.coef) * (float(b) / 2) * m / ((Zs[..., v] - a) * S)

    def lelong(self, x) -> Fraction:
        if all(complex(x[v]) == a for v, a, _ in self.parts):
            return self.coef * min(Fraction(b) for _, _, b in self.parts)
        return Fraction(0)

    def singular_centers(self):
        return [(v, a) for v, a, _ in self.parts]

    def scaled(self, t):
        return LogSum(self.coef * t, self.parts)

    def __str__(self):
        inner = " + ".join(
            (f"|z{v + 1}|" if a == 0 else f"|z{v + 1}-{_num(a)}|") + ("" if b == 1 else f"^{_num(b)}")
            for v, a, b in self.parts)
        return f"{_coef(self.coef)}log({inner})"


@dataclass(frozen=True)
class RePolynomial:
    """Pluriharmonic term ``coef * Re(z^exps)``."""
    coef: Fraction
    exps: tuple

    def _mono(self, Zs):
        out = 1.0
        for j, e in enumerate(self.exps):
            if e:
                out = out * Zs[..., j] ** e
        return out

    def value(self, Zs):
        return float(self.coef) * np.real(self._mono(Zs) * np.ones(Zs.shape[:-1]))

    def grad(self, Zs, out):
        for j, e in enumerate(self.exps):
            if e:
                ex = list(self.exps)
                ex[j] -= 1
                d = e * RePolynomial(self.coef, tuple(ex))._mono(Zs)
                out[..., j] += float(self.coef) / 2 * d

    def lelong(self, x):
        return Fraction(0)

    def singular_centers(self):
        return []

    def scaled(self, t):
        return RePolynomial(self.coef * t, self.exps)

    def __str__(self):
        mono = "*".join(f"z{j + 1}" if e == 1 else f"z{j + 1}^{e}" for j, e in enumerate(self.exps) if e) or "1"
        return f"{_coef(self.coef)}re({mono})"


@dataclass(frozen=True)
class SmoothTrig:
    """Real trigonometric polynomial in ``(Re z, Im z)`` (period 1 in each real coordinate)."""
    expr: str
    n: int
    scale: Fraction = Fraction(1)

    @cached_property
    def modes(self):
        poly = parse_trig_weight(self.expr, self.n)
        idx = np.argwhere(poly.c != 0)
        return [(tuple(int(i) - poly.F for i in k), complex(poly.c[tuple(k)])) for k in idx]

    def _terms(self, Zs):
        X, Y = Zs.real, Zs.imag
        for k, c in self.modes:
            k = np.asarray(k)
            ph = np.exp(2j * np.pi * (X @ k[: self.n] + Y @ k[self.n:]))
            yield k, c, ph

    def value(self, Zs):
        return float(self.scale) * sum(np.real(c * ph) for _, c, ph in self._terms(Zs))

    def grad(self, Zs, out):
        for k, c, ph in self._terms(Zs):
            for j in range(self.n):
                out[..., j] += float(self.scale) * c * ph * np.pi * (1j * k[j] + k[self.n + j])

    def lelong(self, x):
        return Fraction(0)

    def singular_centers(self):
        return []

    def scaled(self, t):
        return SmoothTrig(self.expr, self.n, self.scale * t)

    def __str__(self):
        return f"{_coef(self.scale)}trig({self.expr})"


def _num(x) -> str:
    x = complex(x)
    if x.imag == 0:
        v = x.real
        return str(int(v)) if v == int(v) else repr(v)
    return repr(x)


def _coef(c) -> str:
    return "" if c == 1 else f"{c}*"


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

_NUM = r"[0-9]+(?:\.[0-9]*)?(?:/[0-9]+)?"
_FACTOR = re.compile(r"^\(?z(\d+)(?:-(" + _NUM + r"))?\)?(?:\^(\d+))?$")
_PART = re.compile(r"^\|z(\d+)(?:-(" + _NUM + r"))?\|(?:\^(" + _NUM + r"))?$")


def _split_top(s: str):
    """Split on top-level ``+``/``-`` (outside parentheses and ``|..|``), keeping signs."""
    out, depth, bar, cur, sign = [], 0, False, "", 1
    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "|":
            bar = not bar
        if ch in "+-" and depth == 0 and not bar:
            if cur:
                out.append((sign, cur))
            cur, sign = "", (1 if ch == "+" else -1)
        else:
            cur += ch
        i += 1
    if cur:
        out.append((sign, cur))
    return out


def parse_weight(expr: str, n: int | None = None) -> "ModelWeight":
    """Parse e.g. ``"log|z1| + 0.5*log(|z1|^0.9 + |z2|^2.3) + 2*re(z1) + 0.2*trig(cos1)"``."""
    s = expr.replace(" ", "")
    idx = [int(m) for m in re.findall(r"z(\d+)", s)]
    trig_idx = [int(m) for m in re.findall(r"(?:cos|sin)[xy]?(\d+)", s)]
    n = n or max(idx + trig_idx + [1])
    terms = []
    for sign, tok in _split_top(s):
        m = re.match(r"^(?:(" + _NUM + r")\*)?(.*)$", tok)
        coef = Fraction(m.group(1)) if m.group(1) else Fraction(1)
        coef *= sign
        body = m.group(2)
        if body.startswith("log|") and body.endswith("|"):
            exps, center = [0] * n, [0j] * n
            for fac in body[4:-1].split("*"):
                fm = _FACTOR.match(fac)
                if fm is None:
                    raise ValueError(f"cannot parse factor {fac!r} in {tok!r}")
                j = int(fm.group(1)) - 1
                if exps[j]:
                    raise ValueError(f"variable z{j + 1} repeated in {tok!r}")
                exps[j] = int(fm.group(3) or 1)
                center[j] = complex(Fraction(fm.group(2))) if fm.group(2) else 0j
            if coef < 0:
                raise ValueError(f"log coefficient must be >= 0 for a psh weight: {tok!r}")
            terms.append(LogMonomial(coef, tuple(exps), tuple(center)))
        elif body.startswith("log(") and body.endswith(")"):
            parts = []
            for _, p in _split_top(body[4:-1]):
                pm = _PART.match(p)
                if pm is None:
                    raise ValueError(f"cannot parse {p!r} in {tok!r}")
                parts.append((int(pm.group(1)) - 1,
                              complex(Fraction(pm.group(2))) if pm.group(2) else 0j,
                              Fraction(pm.group(3)) if pm.group(3) else Fraction(1)))
            if coef < 0:
                raise ValueError(f"log coefficient must be >= 0 for a psh weight: {tok!r}")
            terms.append(LogSum(coef, tuple(parts)))
        elif body.startswith("re(") and body.endswith(")"):
            exps = [0] * n
            for fac in body[3:-1].split("*"):
                fm = _FACTOR.match(fac)
                if fm is None or fm.group(2):
                    raise ValueError(f"cannot parse monomial {fac!r} in {tok!r}")
                exps[int(fm.group(1)) - 1] += int(fm.group(3) or 1)
            terms.append(RePolynomial(coef, tuple(exps)))
        elif body.startswith("trig(") and body.endswith(")"):
            parse_trig_weight(body[5:-1], n)
            terms.append(SmoothTrig(body[5:-1], n, coef))
        elif body == "0":
            continue
        else:
            raise ValueError(f"cannot parse weight term {tok!r}")
    return ModelWeight(n, tuple(terms))


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelWeight:
    n: int
    terms: tuple = ()
    domain: PolydiscDomain | None = None

    @classmethod
    def parse(cls, expr: str, n: int | None = None, domain: PolydiscDomain | None = None):
        w = parse_weight(expr, n)
        return cls(w.n, w.terms, domain)

    def __str__(self):
        return " + ".join(str(t) for t in self.terms) or "0"

    def __add__(self, other: "ModelWeight"):
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        return ModelWeight(self.n, self.terms + other.terms, self.domain or other.domain)

    def scaled(self, t) -> "ModelWeight":
        t = _frac(t)
        return ModelWeight(self.n, tuple(term.scaled(t) for term in self.terms), self.domain)

    @property
    def log_terms(self):
        return [t for t in self.terms if isinstance(t, (LogMonomial, LogSum))]

    @property
    def is_pluriharmonic(self) -> bool:
        return all(isinstance(t, RePolynomial) for t in self.terms)

    # evaluation -----------------------------------------------------------
    def value(self, Zs) -> np.ndarray:
        Zs = np.asarray(Zs, dtype=complex)
        out = np.zeros(Zs.shape[:-1])
        with np.errstate(divide="ignore"):
            for t in self.terms:
                out = out + t.value(Zs)
        return out

    def grad(self, Zs) -> np.ndarray:
        """``d phi / dz_j`` stacked on the last axis."""
        Zs = np.asarray(Zs, dtype=complex)
        out = np.zeros(Zs.shape, dtype=complex)
        for t in self.terms:
            t.grad(Zs, out)
        return out

    # Lelong numbers --------------------------------------------------------
    def lelong(self, x) -> Fraction:
        return sum((t.lelong(x) for t in self.terms), Fraction(0))

    def singular_candidates(self) -> list:
        """Per coordinate, the sorted distinct centers at which some log term can be singular."""
        cand = [set() for _ in range(self.n)]
        for t in self.log_terms:
            for j, a in t.singular_centers():
                cand[j].add(complex(a))
        return [sorted(c, key=lambda v: (v.real, v.imag)) for c in cand]

    def strata(self, domain: PolydiscDomain | None = None):
        """Coordinate strata ``(assignment, dimension, lelong)``; ``None`` marks a free coordinate."""
        cand = self.singular_candidates()
        out = []
        for choice in itertools.product(*[[None] + c for c in cand]):
            pt = []
            for j, v in enumerate(choice):
                if v is not None:
                    pt.append(v)
                    continue
                base = domain.center[j] if domain else 0j
                r = domain.radii[j] if domain else 0.5
                g = base + 0.3719 * r * np.exp(0.6931j)
                while any(abs(g - c) < 1e-12 for c in cand[j]):
                    g += 0.01 * r
                pt.append(g)
            if domain is not None and not all(
                    abs(v - domain.center[j]) <= domain.radii[j] + 1e-12
                    for j, v in enumerate(choice) if v is not None):
                continue
            out.append((choice, sum(v is None for v in choice), self.lelong(pt)))
        return out


def lelong_number(w: ModelWeight, x, domain: PolydiscDomain | None = None) -> Fraction:
    dom = domain or w.domain
    if dom is not None and not dom.contains(x):
        raise ValueError(f"point {x} lies outside the domain")
    return w.lelong(x)


def circle_average_lelong(w: ModelWeight, x, r: float = 1e-4, m: int = 256, direction=None) -> float:
    """Slope of the circle mean of ``phi`` against ``log r`` along a generic complex line."""
    x = np.asarray(x, dtype=complex)
    d = np.asarray(direction if direction is not None else
                   [np.exp(1j * (0.7 + 1.3 * j)) * (1 + 0.17 * j) for j in range(w.n)], dtype=complex)
    d = d / np.linalg.norm(d)
    th = 2 * np.pi * (np.arange(m) + 0.5) / m

    def mean(rad):
        pts = x[None, :] + rad * np.exp(1j * th)[:, None] * d[None, :]
        return float(np.mean(w.value(pts)))

    r2 = r / 10
    return (mean(r) - mean(r2)) / (math.log(r) - math.log(r2))


def skoda_threshold_check(w: ModelWeight, domain: PolydiscDomain, epsilon) -> bool:
    """``epsilon * sup_U nu(phi, x) < 1`` with the sup over the singular strata meeting ``domain``."""
    sup = max((nu for _, _, nu in w.strata(domain)), default=Fraction(0))
    return _frac(epsilon) * sup < 1


def sup_lelong(w: ModelWeight, domain: PolydiscDomain):
    best = max(w.strata(domain), key=lambda s: s[2])
    return best[2], best[0]


def e1_isolated_check(w: ModelWeight, domain: PolydiscDomain) -> bool:
    """True iff ``{nu >= 1}`` meets ``domain`` only in isolated points."""
    return all(dim == 0 for _, dim, nu in w.strata(domain) if nu >= 1)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

DEPTH = 40


def disc_rule(center: complex, radius: float, singular: complex | None = None, depth: int = DEPTH,
              n_ang: int = 32, n_gl: int = 6):
    """Nodes, Lebesgue weights and refinement levels on the closed disc ``D(center, radius)``.

    With ``singular`` inside the disc, rays are cast from it and the radial variable is
    split geometrically (ratio 1/2) toward the singular point; panel ``m`` covers
    ``[2^{-m-1}, 2^{-m}]`` of the ray and the core below ``2^{-depth}`` is dropped.
    """
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    e = np.exp(1j * th)
    if singular is None or abs(singular - center) >= radius:
        x, wx = np.polynomial.legendre.leggauss(8)
        panels = [(0.0, 0.5), (0.5, 1.0)]
        base, d = center, 0j
        levels = [0, 0]
    else:
        x, wx = np.polynomial.legendre.leggauss(n_gl)
        panels = [(2.0 ** -(m + 1), 2.0 ** -m) for m in range(depth)]
        base, d = singular, singular - center
        levels = list(range(depth))
    t = np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in panels])
    wt = np.concatenate([(b - a) / 2 * wx for a, b in panels])
    lev = np.repeat(levels, len(x))
    proj = np.real(np.conj(d) * e)
    rmax = -proj + np.sqrt(proj ** 2 + radius ** 2 - abs(d) ** 2)
    rho = t[None, :] * rmax[:, None]
    nodes = base + rho * e[:, None]
    weights = wt[None, :] * rho * rmax[:, None] * (2 * np.pi / n_ang)
    return nodes.ravel(), weights.ravel(), np.tile(lev, n_ang)


def _coordinate_singularity(w: ModelWeight | None, j: int, center: complex, radius: float):
    if w is None:
        return None
    inside = [a for a in w.singular_candidates()[j] if abs(a - center) < radius]
    if len(inside) > 1:
        raise ValueError(f"coordinate z{j + 1} has {len(inside)} singular centers in one disc; split the domain")
    return inside[0] if inside else None


def polydisc_rules(domain: PolydiscDomain, w: ModelWeight | None, **kw):
    rules = []
    for j in range(domain.n):
        s = _coordinate_singularity(w, j, domain.center[j], domain.radii[j])
        rules.append(disc_rule(domain.center[j], domain.radii[j], s, **kw))
    return rules


def tensor_level_sums(fn, rules, chunk: int = 1 << 20) -> np.ndarray:
    """Sums of ``fn * weight`` over the tensor rule, binned by ``max`` refinement level."""
    depth = max(int(r[2].max()) for r in rules) + 1
    sums = np.zeros(depth, dtype=complex)
    head, tail = rules[0], rules[1:]
    if tail:
        tail_nodes = np.array(list(itertools.product(*[r[0] for r in tail])))
        tail_wts = np.prod(np.array(list(itertools.product(*[r[1] for r in tail]))), axis=1)
        tail_lev = np.max(np.array(list(itertools.product(*[r[2] for r in tail]))), axis=1)
    else:
        tail_nodes = np.zeros((1, 0), dtype=complex)
        tail_wts = np.ones(1)
        tail_lev = np.zeros(1, dtype=int)
    step = max(1, chunk // len(tail_wts))
    for s in range(0, len(head[0]), step):
        h, hw, hl = head[0][s:s + step], head[1][s:s + step], head[2][s:s + step]
        Zs = np.concatenate([np.repeat(h, len(tail_wts))[:, None],
                             np.tile(tail_nodes, (len(h), 1))], axis=1)
        W = np.repeat(hw, len(tail_wts)) * np.tile(tail_wts, len(h))
        L = np.maximum(np.repeat(hl, len(tail_wts)), np.tile(tail_lev, len(h)))
        vals = fn(Zs) * W
        sums += np.bincount(L, weights=vals.real, minlength=depth) \
            + 1j * np.bincount(L, weights=vals.imag, minlength=depth)
    return sums


def tensor_integrate(fn, rules) -> complex:
    return complex(tensor_level_sums(fn, rules).sum())


def certified_integral(fn, rules, what="integral", tol=1e-6, atol=0.0) -> complex:
    """Integral over the graded rule plus a geometric estimate of the levels beyond the last one.

    The level sums of an integrable model singularity decay geometrically.  The decay ratio
    is read off the last four levels and, independently, the four before; the two tail
    estimates must agree to ``max(tol * |value|, atol)``.  No decay (ratio >= 0.99) or
    disagreement raises :class:`QuadratureDivergence`.
    """
    sums = tensor_level_sums(fn, rules)
    total = complex(sums.sum())
    if len(sums) < 9:
        return total
    mags = np.abs(sums)
    if mags[-1] <= max(atol, 1e-300) * 1e-3:
        return total

    def tail(i, j):
        ratio = (mags[i] / mags[j]) ** 0.25 if mags[j] > 0 else 1.0
        if ratio >= 0.99:
            raise QuadratureDivergence(f"{what} not certified: refinement levels are not decaying "
                                       f"(ratio {ratio:.3f})")
        return complex(sums[-1]) * ratio / (1 - ratio)

    t1 = tail(-1, -5)
    t2 = tail(-5, -9)
    total += t1
    if abs(t1 - t2) > max(tol * abs(total), atol):
        raise QuadratureDivergence(f"{what} not certified: tail estimates beyond depth {len(sums)} "
                                   f"disagree by {abs(t1 - t2):.3e}")
    return total


def mass_bound(w: ModelWeight, K: PolydiscDomain, tol: float = 1e-6) -> float:
    """``int_K |e^{phi/2} dphi|^2 dV`` with ``|dphi|^2 = sum |d phi / dz_j|^2``."""
    if not w.terms:
        return 0.0
    vol = 2.0 ** w.n

    def integrand(Zs):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = w.grad(Zs)
            val = np.exp(w.value(Zs)) * np.sum(np.abs(g) ** 2, axis=-1)
        return np.nan_to_num(val, nan=0.0, posinf=0.0)

    return vol * certified_integral(integrand, polydisc_rules(K, w), "mass bound", tol=tol).real


# ---------------------------------------------------------------------------
# symbolic forms and test forms
# ---------------------------------------------------------------------------

@dataclass
class SymForm:
    """``(p, q)``-form with sympy coefficients in ``z1..zn, zb1..zbn`` (Wirtinger variables)."""
    n: int
    p: int
    q: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = {(tuple(I), tuple(J)): sp.sympify(c) for (I, J), c in self.coeffs.items()
                       if sp.sympify(c) != 0}
        for I, J in self.coeffs:
            if len(I) != self.p or len(J) != self.q:
                raise DegreeError(f"component {(I, J)} is not of bidegree ({self.p},{self.q})")

    @classmethod
    def constant(cls, form: BigradedForm):
        return cls(form.n, form.p, form.q, {k: sp.nsimplify(complex(v)) if v else 0
                                           for k, v in form.coeffs.items()})

    @classmethod
    def function(cls, n, expr):
        return cls(n, 0, 0, {((), ()): expr})

    @property
    def symbols(self):
        return Z[: self.n] + ZB[: self.n]

    @property
    def is_holomorphic(self) -> bool:
        return all(not (c.free_symbols & set(ZB[: self.n])) for c in self.coeffs.values())

    def scale(self, c):
        return SymForm(self.n, self.p, self.q, {k: v * c for k, v in self.coeffs.items()})

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return SymForm(self.n, self.p, self.q, out)

    def _d(self, bar: bool):
        n = self.n
        out: dict = {}
        for (I, J), c in self.coeffs.items():
            for j in range(n):
                letters = [n + j if bar else j] + _letters(n, I, J)
                s = _perm_sign(letters)
                if not s:
                    continue
                key = _split(n, letters)
                out[key] = out.get(key, 0) + s * sp.diff(c, (ZB if bar else Z)[j])
        return SymForm(n, self.p + (0 if bar else 1), self.q + (1 if bar else 0), out)

    def del_(self):
        return self._d(False)

    def dbar(self):
        return self._d(True)

    def wedge(self, other: "SymForm") -> "SymForm":
        n = self.n
        out: dict = {}
        for (I1, J1), a in self.coeffs.items():
            for (I2, J2), b in other.coeffs.items():
                if set(I1) & set(I2) or set(J1) & set(J2):
                    continue
                letters = _letters(n, I1, J1) + _letters(n, I2, J2)
                key = _split(n, letters)
                out[key] = out.get(key, 0) + _perm_sign(letters) * a * b
        return SymForm(n, self.p + other.p, self.q + other.q, out)

    @cached_property
    def _compiled(self):
        return {k: sp.lambdify(self.symbols, c, "numpy") for k, c in self.coeffs.items()}

    def eval(self, Zs) -> dict:
        args = [Zs[..., j] for j in range(self.n)] + [np.conj(Zs[..., j]) for j in range(self.n)]
        shape = Zs.shape[:-1]
        return {k: np.broadcast_to(np.asarray(f(*args), dtype=complex), shape) for k, f in self._compiled.items()}


def wedge_dphi(w: ModelWeight, u: SymForm, sign: int = 1):
    """Pointwise evaluator of ``sign * dphi ^ u`` (coefficients L^1_loc)."""
    n = u.n
    table = []
    for (I, J) in u.coeffs:
        for j in range(n):
            letters = [j] + _letters(n, I, J)
            s = _perm_sign(letters)
            if s:
                table.append(((I, J), j, s, _split(n, letters)))

    def ev(Zs):
        g = w.grad(Zs)
        uv = u.eval(Zs)
        out: dict = {}
        for key, j, s, key2 in table:
            term = sign * s * g[..., j] * uv[key]
            out[key2] = out[key2] + term if key2 in out else term
        return out

    return ev, (u.p + 1, u.q)


@dataclass(frozen=True)
class TestForm:
    """``prod_j (1 - |z_j - c_j|^2 / r^2)^4 * (z - c)^m * conj(z - c)^mb`` times a constant form."""
    center: tuple
    radius: float
    m: tuple
    mb: tuple
    form: BigradedForm | None = None

    __test__ = False

    @property
    def n(self):
        return len(self.center)

    @property
    def support(self) -> PolydiscDomain:
        return PolydiscDomain(self.center, (self.radius,) * self.n)

    def scalar_expr(self):
        e = sp.Integer(1)
        for j, c in enumerate(self.center):
            c = sp.nsimplify(complex(c))
            cb = sp.conjugate(c)
            dz, dzb = Z[j] - c, ZB[j] - cb
            e *= (1 - dz * dzb / sp.nsimplify(self.radius) ** 2) ** 4 * dz ** self.m[j] * dzb ** self.mb[j]
        return e

    def with_form(self, form: BigradedForm) -> "TestForm":
        return TestForm(self.center, self.radius, self.m, self.mb, form)

    def sym(self) -> SymForm:
        if self.form is None:
            raise ValueError("test form has no form factor")
        return SymForm.constant(self.form).scale(self.scalar_expr())

    @cached_property
    def l1_norm(self) -> float:
        f = sp.lambdify(Z[: self.n] + ZB[: self.n], self.scalar_expr(), "numpy")

        def ev(Zs):
            args = [Zs[..., j] for j in range(self.n)] + [np.conj(Zs[..., j]) for j in range(self.n)]
            return np.abs(np.asarray(f(*args), dtype=complex) * np.ones(Zs.shape[:-1]))

        return 2.0 ** self.n * tensor_integrate(ev, polydisc_rules(self.support, None)).real


def complementary_basis(n, p, q):
    return BigradedForm.basis(n, n - p, n - q)


def _top_functional(n, bidegree, form: BigradedForm):
    """``T -> coefficient of (T ^ form)`` relative to ``dV``, as a list ``(key, factor)``."""
    c = _top_coefficient(n)
    out = []
    for I, J in BigradedForm.basis_indices(n, *bidegree):
        for (I2, J2), a in form.coeffs.items():
            if set(I) & set(I2) or set(J) & set(J2):
                continue
            letters = _letters(n, I, J) + _letters(n, I2, J2)
            out.append(((I, J), _perm_sign(letters) * complex(a) / c))
    return out


def pair_current(ev, bidegree, psi: TestForm, w: ModelWeight | None, depth_tol: float = 1e-8) -> complex:
    """``int T ^ psi`` for an ``L^1_loc`` current ``T`` given pointwise by ``ev``."""
    n = psi.n
    functional = _top_functional(n, bidegree, psi.form)
    scalar = sp.lambdify(Z[:n] + ZB[:n], psi.scalar_expr(), "numpy")

    def integrand(Zs):
        args = [Zs[..., j] for j in range(n)] + [np.conj(Zs[..., j]) for j in range(n)]
        with np.errstate(divide="ignore", invalid="ignore"):
            T = ev(Zs)
            acc = np.zeros(Zs.shape[:-1], dtype=complex)
            for key, f in functional:
                if key in T:
                    acc = acc + f * T[key]
            val = acc * np.asarray(scalar(*args), dtype=complex)
        return np.nan_to_num(val, nan=0.0, posinf=0.0, neginf=0.0)

    vol = 2.0 ** n
    return vol * certified_integral(integrand, polydisc_rules(psi.support, w), "current pairing",
                                    tol=depth_tol, atol=1e-12 * psi.l1_norm)


# ---------------------------------------------------------------------------
# the two wedge-product regimes
# ---------------------------------------------------------------------------

def wedge_with_holomorphic(u: SymForm, w: ModelWeight, psi: TestForm) -> complex:
    """``int (dphi ^ u) ^ psi`` for ``u`` with holomorphic polynomial coefficients."""
    if not u.is_holomorphic:
        raise ValueError("u must have holomorphic coefficients")
    ev, bideg = wedge_dphi(w, u)
    return pair_current(ev, bideg, psi, w)


def integrate_by_parts_oracle(u: SymForm, w: ModelWeight, psi: TestForm) -> complex:
    """``-int phi * del(u ^ psi)``: the distributional value of ``int dphi ^ u ^ psi``."""
    chi = u.wedge(psi.sym()).del_()
    n = u.n
    c = _top_coefficient(n)
    full = tuple(range(n))
    coeff = chi.coeffs.get((full, full), sp.Integer(0))
    f = sp.lambdify(Z[:n] + ZB[:n], coeff, "numpy")

    def integrand(Zs):
        args = [Zs[..., j] for j in range(n)] + [np.conj(Zs[..., j]) for j in range(n)]
        with np.errstate(divide="ignore", invalid="ignore"):
            val = w.value(Zs) * np.asarray(f(*args), dtype=complex) / c
        return np.nan_to_num(val, nan=0.0, posinf=0.0, neginf=0.0)

    vol = 2.0 ** n
    return -vol * certified_integral(integrand, polydisc_rules(psi.support, w), "integration by parts",
                                     tol=1e-8, atol=1e-12 * psi.l1_norm)


def l2_norm2(u: SymForm, w: ModelWeight, K: PolydiscDomain) -> float:
    """``int_K |u|^2 e^{-phi} dV``; divergence raises."""
    def integrand(Zs):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            vals = u.eval(Zs)
            s = sum(np.abs(v) ** 2 for v in vals.values()) if vals else np.zeros(Zs.shape[:-1])
            out = s * np.exp(-w.value(Zs))
        return np.nan_to_num(out, nan=0.0, posinf=0.0)

    try:
        val = 2.0 ** u.n * certified_integral(integrand, polydisc_rules(K, w), "L2 norm").real
    except QuadratureDivergence as exc:
        raise ValueError("u is not in L^2(e^{-phi}) on the support (quadrature diverges)") from exc
    return val


def wedge_with_l2(u: SymForm, w: ModelWeight, psi: TestForm) -> dict:
    """Pairing of ``dphi ^ u`` with ``psi`` for ``u in L^2(e^{-phi})`` plus the Cauchy-Schwarz certificate

    ``|value| <= sup|psi| * (int e^phi |dphi|^2)^{1/2} * (int |u|^2 e^{-phi})^{1/2}``
    over the support of ``psi``.
    """
    K = psi.support
    un = l2_norm2(u, w, K)
    if not u.coeffs:
        return {"value": 0j, "cs_bound": 0.0, "holds": True, "mass": None, "u_norm2": 0.0}
    ev, bideg = wedge_dphi(w, u)
    value = pair_current(ev, bideg, psi, w)
    mass = mass_bound(w, K)
    sup = _sup_abs(psi) * max(abs(complex(a)) for a in psi.form.coeffs.values())
    bound = sup * math.sqrt(mass) * math.sqrt(un)
    holds = abs(value) <= bound * (1 + 1e-9)
    if not holds:
        raise AssertionError(f"Cauchy-Schwarz certificate violated: {abs(value)} > {bound}")
    return {"value": value, "cs_bound": bound, "holds": holds, "mass": mass, "u_norm2": un}


def _sup_abs(psi: TestForm, m: int = 64) -> float:
    """``sup |scalar part|``; the bump factors and monomials separate over coordinates."""
    r = psi.radius
    rho = np.linspace(0, r, 4001)
    sup = 1.0
    for j in range(psi.n):
        vals = (1 - (rho / r) ** 2) ** 4 * rho ** (psi.m[j] + psi.mb[j])
        sup *= float(vals.max())
    return sup


# ---------------------------------------------------------------------------
# parallelism and curvature checks
# ---------------------------------------------------------------------------

@dataclass
class TestFormDictionary:
    members: list

    __test__ = False

    @classmethod
    def default(cls, domain: PolydiscDomain, w: ModelWeight | None = None, size: int = 12):
        """``size`` scalar bumps: three centres (domain centre, a singular point, a regular point)
        times four monomial factors."""
        n = domain.n
        cand = w.singular_candidates() if w is not None else [[] for _ in range(n)]
        centers = [tuple(domain.center)]
        sing = [tuple(ch) for ch, dim, nu in (w.strata(domain) if w is not None else [])
                if dim == 0 and nu > 0]
        sing = [s for s in sing if s != centers[0]]
        if sing:
            centers.append(sing[0])
        r0 = min(domain.radii)
        reg = tuple(c + 0.55 * r0 * np.exp(1j * (0.9 + j)) for j, c in enumerate(domain.center))
        centers.append(reg)
        while len(centers) < 3:
            centers.append(tuple(c - 0.5 * r0 * np.exp(0.4j) for c in domain.center))
        factors = [((0,) * n, (0,) * n), ((1,) + (0,) * (n - 1), (0,) * n),
                   ((0,) * n, (1,) + (0,) * (n - 1)), ((0,) * (n - 1) + (1,), (0,) * n)]
        members = []
        for c in centers:
            rad = min(domain.radii[j] - abs(c[j] - domain.center[j]) for j in range(n))
            for j in range(n):
                others = [abs(a - c[j]) for a in cand[j] if abs(a - c[j]) > 1e-12]
                if others:
                    rad = min(rad, 0.45 * min(others))
            rad = float(rad) * 0.98
            for m, mb in factors:
                members.append(TestForm(tuple(c), rad, m, mb))
        return cls(members[:size])


def parallel_current_check(s: SymForm, w: ModelWeight, dictionary: TestFormDictionary,
                           convention: str = TWISTED) -> dict:
    """Pair ``del s + sign * dphi ^ s`` with every dictionary member and complementary basis form."""
    n = s.n
    if not s.is_holomorphic:
        raise ValueError("s must be holomorphic")
    if s.p >= n or not s.coeffs:
        return {"max_pairing": 0.0, "max_ratio": 0.0, "verdict": "parallel", "sign_convention": convention}
    ds = s.del_()
    ev_phi, bideg = wedge_dphi(w, s, _sign_of(convention))

    def ev(Zs):
        out = ev_phi(Zs)
        for k, v in ds.eval(Zs).items():
            out[k] = out[k] + v if k in out else v
        return out

    best, best_ratio, rows = 0.0, 0.0, []
    for idx, member in enumerate(dictionary.members):
        for e in complementary_basis(n, *bideg):
            val = pair_current(ev, bideg, member.with_form(e), w)
            ratio = abs(val) / member.l1_norm
            rows.append({"member": idx, "form": e.to_json(), "pairing": abs(val), "ratio": ratio})
            best, best_ratio = max(best, abs(val)), max(best_ratio, ratio)
    return {"max_pairing": best, "max_ratio": best_ratio,
            "verdict": "parallel" if best_ratio <= NEAR_ZERO else "not parallel",
            "pairings": rows, "sign_convention": convention}


def curvature_wedge_check(s: SymForm, w: ModelWeight, dictionary: TestFormDictionary) -> dict:
    """Pair ``(i ddbar phi) ^ s`` with the dictionary via ``int phi * i ddbar (s ^ psi)``."""
    n = s.n
    if s.p + 1 > n or not s.coeffs or w.is_pluriharmonic:
        return {"max_pairing": 0.0, "max_ratio": 0.0, "verdict": "zero", "exact": True}
    c = _top_coefficient(n)
    full = tuple(range(n))
    best, best_ratio, rows = 0.0, 0.0, []
    for idx, member in enumerate(dictionary.members):
        for e in complementary_basis(n, s.p + 1, s.q + 1):
            chi = s.wedge(member.with_form(e).sym())
            top = chi.dbar().del_().scale(sp.I).coeffs.get((full, full), sp.Integer(0))
            # del dbar = - dbar del; i ddbar chi = -i dbar del chi
            top = -top
            f = sp.lambdify(Z[:n] + ZB[:n], top, "numpy")

            def integrand(Zs, f=f):
                args = [Zs[..., j] for j in range(n)] + [np.conj(Zs[..., j]) for j in range(n)]
                with np.errstate(divide="ignore", invalid="ignore"):
                    val = w.value(Zs) * np.asarray(f(*args), dtype=complex) / c
                return np.nan_to_num(val, nan=0.0, posinf=0.0, neginf=0.0)

            val = 2.0 ** n * certified_integral(integrand, polydisc_rules(member.support, w), "curvature pairing",
                                                tol=1e-8, atol=1e-12 * member.l1_norm)
            ratio = abs(val) / member.l1_norm
            rows.append({"member": idx, "form": e.to_json(), "pairing": abs(val), "ratio": ratio})
            best, best_ratio = max(best, abs(val)), max(best_ratio, ratio)
    return {"max_pairing": best, "max_ratio": best_ratio,
            "verdict": "zero" if best_ratio <= NEAR_ZERO else "nonzero", "pairings": rows, "exact": False}


def truncated_exp(n: int, j: int, coef, degree: int = 12):
    """Taylor polynomial of ``exp(coef * z_j)`` (stand-in for a transcendental parallel section)."""
    z = Z[j]
    return sum((sp.nsimplify(coef) * z) ** k / sp.factorial(k) for k in range(degree + 1))
