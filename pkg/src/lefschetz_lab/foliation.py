"""Kernel distributions of twisted holomorphic forms on ``A x P^1``.

``A`` is the square torus with flat frame ``U = d/dz1``, ``V = d/dz2`` and
``P^1`` is covered by the charts ``w`` (chart 0) and ``s = 1/w`` (chart 1).  In
each chart ``W`` is the coordinate field, so ``d/dw = -s^2 d/ds`` and the
anticanonical generator ``e = U^V^W`` picks up the same factor.  Everything
that only depends on the point of ``P^1`` is an exact sympy rational function of
the chart coordinate; sampling only enters rank and residual reports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy as sp

from .extalg import BigradedForm, HermitianFrame, lefschetz_inverse, omega_power, wedge
from .fourier_forms import _top_coefficient
from .singular_weights import SymForm, Z, ZB

W_, S_ = sp.symbols("w s")
CHARTS = (W_, S_)
FRAME = ("U", "V", "W")
RANK_TOL = 1e-9


def _chart_var(chart: int):
    if chart not in (0, 1):
        raise ValueError(f"chart must be 0 (w) or 1 (s = 1/w), got {chart}")
    return CHARTS[chart]


def _swap(expr, chart: int):
    """Rewrite a function of the chart-``chart`` coordinate in the other chart."""
    x, y = CHARTS[chart], CHARTS[1 - chart]
    return sp.sympify(expr).subs(x, 1 / y)


def _exact_point(z) -> sp.Expr:
    z = complex(z)
    re = Fraction(z.real).limit_denominator(10 ** 6)
    im = Fraction(z.imag).limit_denominator(10 ** 6)
    return sp.Rational(re.numerator, re.denominator) + sp.I * sp.Rational(im.numerator, im.denominator)


def _at(expr, chart: int, x):
    val = sp.sympify(expr)
    num, den = sp.fraction(sp.cancel(sp.together(val)))
    x = x if isinstance(x, sp.Expr) else _exact_point(x)
    d = sp.expand(den.subs(CHARTS[chart], x))
    if d == 0:
        raise ValueError(f"pole at {'ws'[chart]} = {x}")
    return sp.expand(num.subs(CHARTS[chart], x)) / d


def parse_chart_expr(text: str, chart: int = 0) -> sp.Expr:
    var = _chart_var(chart)
    expr = sp.sympify(str(text).replace("^", "**"), locals={"w": W_, "s": S_, "I": sp.I, "i": sp.I})
    extra = expr.free_symbols - {var}
    if extra:
        raise ValueError(f"unexpected symbols {sorted(map(str, extra))} in chart-{chart} expression {text!r}")
    return sp.nsimplify(expr, rational=True) if expr.has(sp.Float) else expr


# -- vector fields -------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameField:
    """``aU + bV + cW`` with coefficients rational in the chart coordinate."""

    coeffs: tuple
    chart: int = 0

    def __post_init__(self):
        _chart_var(self.chart)
        c = tuple(sp.cancel(sp.sympify(x)) for x in self.coeffs)
        if len(c) != 3:
            raise ValueError("a frame field has three coefficients (U, V, W)")
        for x in c:
            extra = x.free_symbols - {CHARTS[self.chart]}
            if extra:
                raise ValueError(f"coefficient {x} depends on {sorted(map(str, extra))}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def vertical(cls, c, chart: int = 0):
        if isinstance(c, str):
            c = parse_chart_expr(c, chart)
        return cls((0, 0, c), chart)

    @classmethod
    def from_homogeneous(cls, h1, h2):
        """Push ``h1 d/dw1 + h2 d/dw2`` (linear in ``w1, w2``) to the ``w = w1/w2`` chart."""
        w1, w2 = sp.symbols("w1 w2")
        loc = {"w1": w1, "w2": w2}
        h1, h2 = (sp.sympify(str(h).replace("^", "**"), locals=loc) for h in (h1, h2))
        for h in (h1, h2):
            if h != 0 and (not h.is_polynomial(w1, w2) or sp.Poly(h, w1, w2).total_degree() != 1
                           or not sp.Poly(h, w1, w2).is_homogeneous):
                raise ValueError(f"{h} is not linear homogeneous in w1, w2")
        c = sp.expand((h1 - (w1 / w2) * h2) / w2).subs({w1: W_, w2: 1})
        return cls.vertical(c)

    def in_chart(self, chart: int) -> "FrameField":
        if chart == self.chart:
            return self
        a, b, c = (_swap(x, self.chart) for x in self.coeffs)
        y = CHARTS[chart]
        return FrameField((a, b, -y ** 2 * c), chart)

    @property
    def is_vertical(self) -> bool:
        return self.coeffs[0] == 0 and self.coeffs[1] == 0

    @property
    def polynomial_in_both_charts(self) -> bool:
        other = self.in_chart(1 - self.chart)
        return all(sp.sympify(c).is_polynomial(CHARTS[f.chart])
                   for f in (self, other) for c in f.coeffs)

    def at(self, x) -> np.ndarray:
        return np.array([complex(_at(c, self.chart, x)) for c in self.coeffs])

    def __add__(self, other):
        other = other.in_chart(self.chart)
        return FrameField(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.chart)

    def scale(self, c):
        return FrameField(tuple(c * a for a in self.coeffs), self.chart)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __str__(self):
        parts = [f"({c})*{e}" for c, e in zip(self.coeffs, FRAME) if c != 0]
        return " + ".join(parts) or "0"


U_FIELD = FrameField((1, 0, 0))
V_FIELD = FrameField((0, 1, 0))
W_FIELD = FrameField((0, 0, 1))


def lie_bracket(X: FrameField, Y: FrameField) -> FrameField:
    """``[X, Y]``; ``U, V`` are flat and coefficients only depend on the ``P^1`` point."""
    Y = Y.in_chart(X.chart)
    x = CHARTS[X.chart]
    cX, cY = X.coeffs[2], Y.coeffs[2]
    return FrameField(tuple(sp.cancel(cX * sp.diff(eY, x) - cY * sp.diff(eX, x))
                            for eX, eY in zip(X.coeffs, Y.coeffs)), X.chart)


# -- twisted forms -------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameSection:
    """``sum_I c_I E*_I (x) e^twist`` with ``E* = (U*, V*, W*)`` and ``e = U^V^W``."""

    degree: int
    coeffs: tuple
    twist: int = 1
    chart: int = 0

    def __post_init__(self):
        _chart_var(self.chart)
        if not 0 <= self.degree <= 3:
            raise ValueError(f"degree must be in [0, 3], got {self.degree}")
        clean = {}
        for I, c in dict(self.coeffs).items():
            I = tuple(I)
            if len(I) != self.degree or list(I) != sorted(set(I)) or any(not 0 <= k < 3 for k in I):
                raise ValueError(f"bad index {I} for a degree-{self.degree} form")
            c = sp.cancel(sp.sympify(c))
            if c != 0:
                clean[I] = c
        object.__setattr__(self, "coeffs", tuple(sorted(clean.items())))

    @property
    def table(self) -> dict:
        return dict(self.coeffs)

    def in_chart(self, chart: int) -> "FrameSection":
        if chart == self.chart:
            return self
        y = CHARTS[chart]
        # W*_old = -y^{-2} W*_new and e_old = -y^2 e_new
        out = {I: _swap(c, self.chart) * (-1 / y ** 2) ** int(2 in I) * (-y ** 2) ** self.twist
               for I, c in self.coeffs}
        return FrameSection(self.degree, out, self.twist, chart)

    def contract(self, X: FrameField) -> "FrameSection":
        if self.degree == 0:
            raise ValueError("cannot contract a degree-0 section")
        X = X.in_chart(self.chart)
        out: dict = {}
        for I, c in self.coeffs:
            for pos, k in enumerate(I):
                rest = I[:pos] + I[pos + 1:]
                out[rest] = out.get(rest, 0) + (-1) ** pos * X.coeffs[k] * c
        return FrameSection(self.degree - 1, out, self.twist, self.chart)

    def symbolic_matrix(self) -> sp.Matrix:
        rows = list(itertools.combinations(range(3), self.degree - 1)) if self.degree else []
        M = sp.zeros(len(rows), 3)
        for j in range(3):
            E = FrameField(tuple(int(k == j) for k in range(3)), self.chart)
            t = self.contract(E).table
            for r, I in enumerate(rows):
                M[r, j] = t.get(I, 0)
        return M

    def is_zero(self) -> bool:
        return not self.coeffs

    def __str__(self):
        names = ("U*", "V*", "W*")
        parts = [f"({c})*{'^'.join(names[k] for k in I) or '1'}" for I, c in self.coeffs]
        return (" + ".join(parts) or "0") + f" (x) e^{self.twist}"


def parallel_section() -> FrameSection:
    return FrameSection(2, {(0, 1): 1})


def build_eta(S: FrameField, T: FrameField) -> FrameSection:
    """``eta_{S,T}`` with the quotient line identified with ``-K_X`` through the frame.

    With ``S = fW`` and ``T = gW`` this is ``(-f U* - g V* + W*) (x) U^V^W``, so
    ``eta(U + S) = eta(V + T) = 0``.
    """
    for name, F in (("S", S), ("T", T)):
        if not F.is_vertical:
            raise ValueError(f"{name} is not vertical (not a multiple of W): {F}")
    T = T.in_chart(S.chart)
    f, g = S.coeffs[2], T.coeffs[2]
    return FrameSection(1, {(0,): -f, (1,): -g, (2,): 1}, 1, S.chart)


def interior_matrix(v: FrameSection, x, chart: int = 0) -> np.ndarray:
    """Matrix of ``xi -> iota_xi v`` at the point ``x`` of the given chart (columns ``U, V, W``)."""
    v = v.in_chart(chart)
    if v.degree == 0:
        return np.zeros((0, 3), dtype=complex)
    M = v.symbolic_matrix()
    return np.array([[complex(_at(M[r, j], chart, x)) for j in range(3)] for r in range(M.rows)],
                    dtype=complex).reshape(M.rows, 3)


def _rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int((s > RANK_TOL * max(1.0, s[0])).sum())


def sample_points(count: int, seed: int = 0, annulus=None, chart: int | None = None):
    """Rational sample points ``(chart, x)``; ``annulus=(r0, r1)`` draws chart-0 points only."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        c = 0 if annulus is not None else (chart if chart is not None else k % 2)
        r0, r1 = annulus or (0.0, 1.0)
        r = math.sqrt(rng.uniform(r0 ** 2, r1 ** 2))
        t = rng.uniform(0, 2 * math.pi)
        out.append((c, _exact_point(r * complex(math.cos(t), math.sin(t)))))
    return out


def unit_circle_points(count: int = 4):
    """Exact rational points of ``|w| = 1``."""
    pts = []
    for k in range(1, count + 1):
        t = sp.Rational(k, count + 1)
        pts.append((0, ((1 - t ** 2) + 2 * t * sp.I) / (1 + t ** 2)))
    return pts


def generic_rank(v: FrameSection, samples: int = 50, seed: int = 0) -> int:
    """Maximal rank of the interior-product map over sample points of both charts."""
    return max(_rank(interior_matrix(v, x, c)) for c, x in sample_points(samples, seed))


def kernel_basis(v: FrameSection, chart: int = 0) -> list:
    """Rational basis of ``Ker(F_v)`` over the function field of the chart."""
    v = v.in_chart(chart)
    if v.degree == 0:
        return [U_FIELD.in_chart(chart), V_FIELD.in_chart(chart), W_FIELD.in_chart(chart)]
    M = v.symbolic_matrix()
    return [FrameField(tuple(sp.cancel(x) for x in vec), chart) for vec in M.nullspace(simplify=True)]


def distribution_sample(v: FrameSection, x, chart: int = 0) -> dict:
    """Kernel basis and rank of ``F_v`` at one point."""
    basis = [b.at(x) for b in kernel_basis(v, chart)]
    M = interior_matrix(v, x, chart)
    for b in basis:
        if M.size and np.abs(M @ b).max() > 1e-10 * max(1.0, np.abs(b).max()):
            raise ArithmeticError("kernel vector does not annihilate the interior matrix")
    return {"chart": chart, "point": complex(x), "basis": basis, "rank": _rank(M)}


def integrability_test(v: FrameSection, samples: int = 20, seed: int = 0) -> dict:
    """Check ``F_v([X_i, X_j]) = 0`` for a rational kernel basis, exactly at sample points.

    The sample set always contains rational points of ``|w| = 1`` so that the
    reported witness lives there when the distribution is not integrable.
    """
    basis = kernel_basis(v, 0)
    kernel_rank = len(basis)
    pts = unit_circle_points() + sample_points(samples, seed, chart=0)
    good = []
    for c, x in pts:
        try:
            vecs = [b.at(x) for b in basis]
        except ValueError:
            continue
        M = interior_matrix(v, x, c)
        if 3 - _rank(M) != kernel_rank or (vecs and _rank(np.array(vecs)) != kernel_rank):
            continue
        good.append((c, x))
    if len(good) < max(1, len(pts) // 2):
        raise ValueError("not generic; enlarge sample")

    residuals = []
    symbolic_zero = True
    for X, Y in itertools.combinations(basis, 2):
        img = v.contract(lie_bracket(X, Y)) if v.degree else None
        if img is None:
            continue
        comps = [sp.cancel(c) for _, c in img.coeffs]
        if any(c != 0 for c in comps):
            symbolic_zero = False
        residuals.append(img)
    best = None
    integrable = True
    for c, x in good:
        vec = []
        for img in residuals:
            vec.extend(_at(coef, c, x) for _, coef in img.coeffs)
        exact_zero = all(sp.simplify(e) == 0 for e in vec)
        integrable &= exact_zero
        vals = np.array([complex(e) for e in vec], dtype=complex)
        norm = float(np.linalg.norm(vals)) if vals.size else 0.0
        on_circle = abs(abs(complex(x)) - 1) < 1e-12
        key = (on_circle, norm)
        if best is None or key > best[0]:
            best = (key, c, x, vals, norm)
    _, c, x, vals, norm = best
    return {
        "integrable": bool(integrable and symbolic_zero),
        "rank": kernel_rank,
        "samples": len(good),
        "witness": {"chart": c, "w": [float(sp.re(x)), float(sp.im(x))],
                    "residual": [[float(z.real), float(z.imag)] for z in vals], "norm": norm},
    }


def chart_consistency(v: FrameSection, samples: int = 10, seed: int = 0) -> float:
    """Largest distance between the kernels computed in the two charts on ``0.5 < |w| < 2``."""
    b0, b1 = kernel_basis(v, 0), kernel_basis(v, 1)
    worst = 0.0
    for _, x in sample_points(samples, seed, annulus=(0.5, 2.0)):
        K0 = np.array([b.at(x) for b in b0]).T
        K1 = np.array([b.in_chart(0).at(x) for b in b1]).T
        if K0.shape != K1.shape:
            return math.inf
        if K0.size == 0:
            continue
        Q0, _ = np.linalg.qr(K0)
        Q1, _ = np.linalg.qr(K1)
        worst = max(worst, float(np.abs(Q1 - Q0 @ (Q0.conj().T @ Q1)).max()))
    return worst


# -- Lefschetz image and iota ------------------------------------------------------------

def _image_table():
    """``(omega^2/2!) ^ E*_j`` contracted with ``U^V^W``, as ``(0,2)`` coefficients."""
    om = omega_power(HermitianFrame(3), 2)
    table = {}
    for j in range(3):
        top = wedge(om, BigradedForm.monomial(3, (j,), ()))
        table[j] = {J: sp.Rational(c.re, 2) + sp.I * sp.Rational(c.im, 2)
                    for (I, J), c in top.coeffs.items()}
    return table


_IMAGES = _image_table()


def lefschetz_image(v: FrameSection) -> dict:
    """``omega^2/2! ^ v`` read as a ``(0,2)``-form: ``{J: coefficient}`` for ``Ubar*, Vbar*, Wbar*``."""
    if v.degree != 1 or v.twist != 1:
        raise ValueError("the Lefschetz image is defined for sections of Omega^1 (x) -K_X")
    out: dict = {}
    for (j,), c in v.coeffs:
        for J, k in _IMAGES[j].items():
            out[J] = sp.cancel(out.get(J, 0) + k * c)
    return {J: c for J, c in out.items() if c != 0}


def _cell_integral(n: int = 2) -> complex:
    """``int dz_full ^ dzbar_full`` over the unit cell, from ``omega^n/n! = 2^n dlambda``."""
    return 2 ** n / _top_coefficient(n)


def torus_omega_squared() -> complex:
    """``int_A omega_A^2`` on the unit cell."""
    top = omega_power(HermitianFrame(2), 2, exact=False).coeffs[((0, 1), (0, 1))]
    return complex(top) * _cell_integral()


def _raw_pairing(c01) -> complex:
    """``int_A (c Ubar*^Vbar*) ^ i U*^V*`` on the unit cell."""
    u = BigradedForm(2, 0, 2, {((), (0, 1)): complex(c01)})
    t = wedge(u, BigradedForm(2, 2, 0, {((0, 1), ()): 1j}))
    return complex(t.coeffs.get(((0, 1), (0, 1)), 0)) * _cell_integral()


def iota_invariant(v: FrameSection, x=0.3 + 0.1j, chart: int = 0) -> complex:
    """Fiber pairing of the Lefschetz image, normalised so ``Ubar*^Vbar*`` maps to ``int_A omega_A^2``."""
    img = lefschetz_image(v.in_chart(chart))
    c01 = complex(_at(img.get((0, 1), 0), chart, x))
    return _raw_pairing(c01) * torus_omega_squared() / _raw_pairing(1)


def harmonic_generator_check(points: int = 10, seed: int = 0) -> dict:
    """``Ubar*^Vbar*`` is dbar-closed and dbar*-closed for the flat x Fubini-Study metric."""
    u = SymForm(3, 0, 2, {((), (0, 1)): 1})
    dbar_res = max((abs(complex(c)) for c in u.dbar().coeffs.values()), default=0.0)
    metric = (1, 1, 1 / (1 + Z[2] * ZB[2]) ** 2)
    star = dbar_star_diagonal(u, metric)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x = complex(*rng.uniform(-1, 1, 2))
        # normal chart of the Fubini-Study factor centred at x
        wn = sp.Symbol("wn")
        sub = {Z[2]: (wn + x) / (1 - np.conj(x) * wn), ZB[2]: (sp.conjugate(wn) + np.conj(x)) / (1 - x * sp.conjugate(wn))}
        for c in star.values():
            val = complex(sp.N(sp.sympify(c).subs(sub).subs(wn, 0)))
            worst = max(worst, abs(val))
    beta = BigradedForm(3, 3, 2, {((0, 1, 2), (0, 1)): 2})
    pre = lefschetz_inverse(beta)
    return {
        "dbar_residual": dbar_res,
        "dbar_star_residual": worst,
        "preimage": {str(I): complex(c) for (I, _), c in pre.coeffs.items()},
        "harmonic": dbar_res == 0 and worst <= 1e-10,
    }


def dbar_star_diagonal(u: SymForm, metric) -> dict:
    """``dbar* u`` of a ``(0,q)``-form for the diagonal Kähler metric ``sum g_j |dz_j|^2``.

    Uses ``(dbar* u)_K = -(1/G) sum_j d_j(G g_j^{-1} u_{jK})`` with ``G = prod g_j``.
    """
    if u.p:
        raise ValueError("only (0,q)-forms are supported")
    n = u.n
    g = [sp.sympify(m) for m in metric]
    G = sp.Mul(*g)
    out: dict = {}
    for (_, J), c in u.coeffs.items():
        for pos, j in enumerate(J):
            K = J[:pos] + J[pos + 1:]
            term = -sp.diff(G / g[j] * c, Z[j]) / G * (-1) ** pos
            out[K] = out.get(K, 0) + term
    return {K: sp.simplify(c) for K, c in out.items() if sp.simplify(c) != 0}
