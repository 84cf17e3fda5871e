"""Trigonometric-polynomial form fields on flat complex tori.

The torus is ``C^n / (Z^n + i Z^n)`` with real coordinates ``z_j = x_j + i y_j``
in ``[0, 1)``.  A scalar field is a finite Fourier series in
``exp(2 pi i (k . x + l . y))``; its coefficients live in a dense array of shape
``(2F+1,)*2n`` indexed ``[k_1+F, ..., k_n+F, l_1+F, ..., l_n+F]``.

Conventions (shared with :mod:`lefschetz_lab.extalg`): ``omega = i sum dz_j ^ dzbar_j``,
the monomials ``dz_I ^ dzbar_J`` are pointwise orthonormal, and
``dV = omega^n / n! = 2^n dx dy`` so a fundamental cell has volume ``2^n``.
"""

from __future__ import annotations

import itertools
import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

from .extalg import BigradedForm, DegreeError, _perm_sign, _split, _letters

TWISTED = "twisted"
CHERN = "chern"
DEFAULT_MAX_GRID = 512


class QuadratureError(RuntimeError):
    pass


def max_grid() -> int:
    return int(os.environ.get("LEFSCHETZ_LAB_MAX_GRID", DEFAULT_MAX_GRID))


# ---------------------------------------------------------------------------
# scalar trigonometric polynomials
# ---------------------------------------------------------------------------

class TrigPoly:
    """Finite Fourier series on the real ``2n``-torus."""

    __slots__ = ("n", "F", "c")

    def __init__(self, n: int, F: int, coeffs: np.ndarray | None = None):
        self.n = n
        self.F = F
        shape = (2 * F + 1,) * (2 * n)
        if coeffs is None:
            coeffs = np.zeros(shape, dtype=complex)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != shape:
            raise ValueError(f"coefficient array has shape {coeffs.shape}, expected {shape}")
        self.c = coeffs

    @classmethod
    def constant(cls, n, value=1.0):
        return cls(n, 0, np.full((1,) * (2 * n), value, dtype=complex))

    @classmethod
    def from_modes(cls, n, modes: dict):
        """``modes`` maps a length-``2n`` frequency tuple ``(k..., l...)`` to its coefficient."""
        F = max((max(abs(v) for v in k) for k in modes), default=0)
        out = cls(n, F)
        for k, v in modes.items():
            if len(k) != 2 * n:
                raise ValueError(f"frequency {k} must have length {2 * n}")
            out.c[tuple(np.asarray(k) + F)] += v
        return out

    @classmethod
    def random(cls, n, F, rng, scale=1.0):
        shape = (2 * F + 1,) * (2 * n)
        return cls(n, F, scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))

    # shape management ----------------------------------------------------
    def padded(self, F: int) -> "TrigPoly":
        if F < self.F:
            raise ValueError("cannot pad to a smaller cutoff")
        if F == self.F:
            return self
        d = F - self.F
        return TrigPoly(self.n, F, np.pad(self.c, d))

    def trimmed(self, tol=0.0) -> "TrigPoly":
        F = self.effective_cutoff(tol)
        if F == self.F:
            return self
        d = self.F - F
        sl = (slice(d, d + 2 * F + 1),) * (2 * self.n)
        return TrigPoly(self.n, F, self.c[sl].copy())

    def axis_degrees(self, tol=0.0) -> list:
        degs = []
        mask = np.abs(self.c) > tol
        for ax in range(2 * self.n):
            other = tuple(a for a in range(2 * self.n) if a != ax)
            nz = np.nonzero(mask.any(axis=other))[0] if mask.any() else []
            degs.append(int(max((abs(i - self.F) for i in nz), default=0)))
        return degs

    def effective_cutoff(self, tol=0.0) -> int:
        return max(self.axis_degrees(tol), default=0)

    # arithmetic ----------------------------------------------------------
    def _aligned(self, other):
        F = max(self.F, other.F)
        return self.padded(F).c, other.padded(F).c, F

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            return self + TrigPoly.constant(self.n, other)
        a, b, F = self._aligned(other)
        return TrigPoly(self.n, F, a + b)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(self.n, self.F, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            if other.F == 0:
                return TrigPoly(self.n, self.F, self.c * other.c.flat[0])
            if self.F == 0:
                return TrigPoly(self.n, other.F, other.c * self.c.flat[0])
            return TrigPoly(self.n, self.F + other.F, fftconvolve(self.c, other.c))
        return TrigPoly(self.n, self.F, self.c * other)

    __rmul__ = __mul__

    def conj(self) -> "TrigPoly":
        """Pointwise complex conjugate: coefficient of ``k`` becomes conj of ``-k``."""
        return TrigPoly(self.n, self.F, np.conj(self.c[(slice(None, None, -1),) * (2 * self.n)]))

    def real_part(self) -> "TrigPoly":
        return (self + self.conj()) * 0.5

    def max_abs(self) -> float:
        return float(np.abs(self.c).max()) if self.c.size else 0.0

    # derivatives ---------------------------------------------------------
    def _freqs(self, ax):
        shape = [1] * (2 * self.n)
        shape[ax] = 2 * self.F + 1
        return np.arange(-self.F, self.F + 1).reshape(shape)

    def d_dz(self, j: int) -> "TrigPoly":
        """``d/dz_j = (d/dx_j - i d/dy_j) / 2``; on a mode it multiplies by ``pi (i k_j + l_j)``."""
        k, l = self._freqs(j), self._freqs(self.n + j)
        return TrigPoly(self.n, self.F, self.c * (np.pi * (1j * k + l)))

    def d_dzbar(self, j: int) -> "TrigPoly":
        k, l = self._freqs(j), self._freqs(self.n + j)
        return TrigPoly(self.n, self.F, self.c * (np.pi * (1j * k - l)))

    # evaluation ----------------------------------------------------------
    def on_grid(self, shape) -> np.ndarray:
        """Values at the uniform grid ``x_a = m / N_a``; aliasing is harmless at grid nodes."""
        shape = tuple(shape)
        folded = np.zeros(shape, dtype=complex)
        F = self.F
        idx = [np.arange(-F, F + 1) % N for N in shape]
        np.add.at(folded, np.ix_(*idx), self.c)
        return np.fft.ifftn(folded) * float(np.prod(shape))

    def __call__(self, point) -> complex:
        point = np.asarray(point, dtype=float)
        F = self.F
        val = self.c
        for ax in range(2 * self.n):
            ph = np.exp(2j * np.pi * np.arange(-F, F + 1) * point[ax])
            val = np.tensordot(ph, val, axes=([0], [0]))
        return complex(val)

    def mean(self) -> complex:
        return complex(self.c[(self.F,) * (2 * self.n)])


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

_TERM = re.compile(r"^(?:(?P<c>[-+]?\d*\.?\d+(?:e[-+]?\d+)?)\*)?(?P<f>cos|sin)(?P<ax>[xy]?)(?P<j>\d+)$")


def parse_trig_weight(expr: str, n: int) -> TrigPoly:
    """Parse ``"0.3*cos1 + 0.2*cosy2 - 0.1*sinx1"`` (``cosJ`` means ``cos(2 pi x_J)``).

    A bare number adds a constant; ``"0"`` is the zero weight.
    """
    s = re.sub(r"(?<![eE])-", "+-", expr.replace(" ", ""))
    modes: dict = {}
    for tok in filter(None, s.split("+")):
        sign = 1.0
        if tok.startswith("-") and not tok[1:2].isdigit() and tok[1:2] != ".":
            sign, tok = -1.0, tok[1:]
        try:
            val = float(tok)
        except ValueError:
            val = None
        zero = (0,) * (2 * n)
        if val is not None:
            modes[zero] = modes.get(zero, 0) + val
            continue
        m = _TERM.match(tok)
        if m is None:
            raise ValueError(f"cannot parse weight term {tok!r}")
        c = sign * (float(m.group("c")) if m.group("c") else 1.0)
        j = int(m.group("j")) - 1
        if not 0 <= j < n:
            raise ValueError(f"coordinate index {j + 1} out of range for n={n}")
        ax = j + (n if m.group("ax") == "y" else 0)
        k = [0] * (2 * n)
        k[ax] = 1
        kp, km = tuple(k), tuple(-v for v in k)
        if m.group("f") == "cos":
            modes[kp] = modes.get(kp, 0) + c / 2
            modes[km] = modes.get(km, 0) + c / 2
        else:
            modes[kp] = modes.get(kp, 0) + c / 2j
            modes[km] = modes.get(km, 0) - c / 2j
    return TrigPoly.from_modes(n, modes)


@dataclass
class SmoothPeriodicWeight:
    """Real trigonometric weight ``phi``; metric ``e^{-phi}`` on the trivial bundle."""

    phi: TrigPoly

    def __post_init__(self):
        if np.abs(self.phi.c - self.phi.conj().c).max(initial=0.0) > 1e-12:
            raise ValueError("weight must be real-valued")

    @classmethod
    def zero(cls, n):
        return cls(TrigPoly.constant(n, 0.0))

    @classmethod
    def parse(cls, expr: str, n: int):
        return cls(parse_trig_weight(expr, n))

    @property
    def n(self):
        return self.phi.n

    @property
    def is_trivial(self) -> bool:
        return self.phi.max_abs() == 0

    def hessian(self):
        """``H[j][k] = d^2 phi / dz_j dzbar_k`` so that ``i ddbar phi = i sum H_jk dz_j ^ dzbar_k``."""
        return [[self.phi.d_dzbar(k).d_dz(j) for k in range(self.n)] for j in range(self.n)]

    def curvature_form(self) -> "TrigFormField":
        """``i Theta = i ddbar phi`` as a (1,1) trig field."""
        H = self.hessian()
        comps = {((j,), (k,)): H[j][k] * 1j for j in range(self.n) for k in range(self.n)}
        return TrigFormField(self.n, 1, 1, comps)

    def eigenvalues_on_grid(self, shape):
        """Ascending curvature eigenvalues and unitary eigenvectors at each grid node."""
        n = self.n
        H = self.hessian()
        M = np.empty(tuple(shape) + (n, n), dtype=complex)
        for j in range(n):
            for k in range(n):
                M[..., j, k] = H[j][k].on_grid(shape)
        M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
        return np.linalg.eigh(M)

    @cached_property
    def curvature_lower_bound(self) -> float:
        """Certified ``C`` with ``i ddbar phi >= -C omega``: grid minimum padded by a Lipschitz bound."""
        if self.is_trivial:
            return 0.0
        N = 32
        shape = (N,) * (2 * self.n)
        lam, _ = self.eigenvalues_on_grid(shape)
        lo = float(lam[..., 0].min())
        # |grad| of each Hessian entry bounded by sum |c_k| * 2 pi |k|; half-cell distance sqrt(2n)/(2N)
        lip = 0.0
        for row in self.hessian():
            for h in row:
                idx = np.indices(h.c.shape).reshape(2 * self.n, -1).T - h.F
                lip += float((np.abs(h.c).ravel() * 2 * np.pi * np.linalg.norm(idx, axis=1)).sum())
        pad = lip * math.sqrt(2 * self.n) / (2 * N)
        return max(0.0, -(lo - pad))

    def grid_values(self, shape):
        return self.phi.on_grid(shape).real

    @cached_property
    def support_axes(self) -> list:
        """Real axes along which ``phi`` actually varies."""
        return [deg > 0 for deg in self.phi.axis_degrees(1e-15)]

    def density_on_grid(self, shape) -> np.ndarray:
        cache = self.__dict__.setdefault("_density_cache", {})
        shape = tuple(shape)
        if shape not in cache:
            cache[shape] = np.exp(-self.grid_values(shape))
        return cache[shape]


# ---------------------------------------------------------------------------
# form fields
# ---------------------------------------------------------------------------

class TrigFormField:
    """A ``(p, q)``-form whose coefficient on ``dz_I ^ dzbar_J`` is a :class:`TrigPoly`."""

    def __init__(self, n: int, p: int, q: int, comps: dict | None = None, meta: dict | None = None):
        # out-of-range bidegrees are allowed only for the zero field (images of degree-shifting operators)
        in_range = 0 <= p <= n and 0 <= q <= n
        if not (p >= -1 and q >= -1) or (not in_range and comps):
            raise DegreeError(f"bidegree ({p},{q}) out of range for n={n}")
        self.n, self.p, self.q = n, p, q
        self.comps = {}
        for (I, J), f in (comps or {}).items():
            I, J = tuple(I), tuple(J)
            if len(I) != p or len(J) != q:
                raise DegreeError(f"component {(I, J)} is not of bidegree ({p},{q})")
            if f.max_abs() == 0:
                continue
            self.comps[(I, J)] = self.comps[(I, J)] + f if (I, J) in self.comps else f
        self.meta = dict(meta or {})

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, n, p, q):
        return cls(n, p, q, {})

    @classmethod
    def constant(cls, form: BigradedForm) -> "TrigFormField":
        return cls(form.n, form.p, form.q,
                   {k: TrigPoly.constant(form.n, complex(v)) for k, v in form.coeffs.items()})

    @classmethod
    def random(cls, n, p, q, F, rng, scale=1.0, decay=0.0):
        comps = {}
        for key in BigradedForm.basis_indices(n, p, q):
            f = TrigPoly.random(n, F, rng, scale)
            if decay:
                idx = np.indices(f.c.shape) - F
                f.c *= np.exp(-decay * np.abs(idx).sum(axis=0))
            comps[key] = f
        return cls(n, p, q, comps)

    @property
    def degree(self):
        return self.p + self.q

    @property
    def cutoff(self) -> int:
        return max((f.F for f in self.comps.values()), default=0)

    def basis_keys(self):
        return BigradedForm.basis_indices(self.n, self.p, self.q)

    def component(self, key) -> TrigPoly:
        return self.comps.get(key, TrigPoly.constant(self.n, 0.0))

    def _check_same(self, other):
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise DegreeError(f"bidegree mismatch ({self.p},{self.q}) vs ({other.p},{other.q})")

    def __add__(self, other):
        self._check_same(other)
        comps = dict(self.comps)
        for k, f in other.comps.items():
            comps[k] = comps[k] + f if k in comps else f
        return TrigFormField(self.n, self.p, self.q, comps)

    def __neg__(self):
        return TrigFormField(self.n, self.p, self.q, {k: -f for k, f in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        if isinstance(c, TrigPoly):
            return TrigFormField(self.n, self.p, self.q, {k: f * c for k, f in self.comps.items()})
        return TrigFormField(self.n, self.p, self.q, {k: f * c for k, f in self.comps.items()})

    def max_abs(self) -> float:
        return max((f.max_abs() for f in self.comps.values()), default=0.0)

    def map_constant(self, op, shift) -> "TrigFormField":
        """Apply a pointwise constant-coefficient linear operator shifting bidegree by ``shift``."""
        out = TrigFormField(self.n, self.p + shift[0], self.q + shift[1], {})
        for key, f in self.comps.items():
            img = op(BigradedForm(self.n, self.p, self.q, {key: 1}))
            out = out + TrigFormField(img.n, img.p, img.q, {k: f * complex(v) for k, v in img.coeffs.items()})
        return out

    def conj(self) -> "TrigFormField":
        s = (-1) ** (self.p * self.q)
        return TrigFormField(self.n, self.q, self.p, {(J, I): f.conj() * s for (I, J), f in self.comps.items()})

    def at(self, point) -> BigradedForm:
        return BigradedForm(self.n, self.p, self.q, {k: f(point) for k, f in self.comps.items()})

    # serialisation ----------------------------------------------------------
    def to_json(self) -> dict:
        terms = []
        for (I, J), f in sorted(self.comps.items()):
            for idx in zip(*np.nonzero(f.c)):
                z = f.c[idx]
                terms.append({"I": list(I), "J": list(J), "freq": [int(i) - f.F for i in idx],
                              "re": float(z.real), "im": float(z.imag)})
        return {"bidegree": [self.p, self.q], "n": self.n, "cutoff": self.cutoff, "terms": terms}

    @classmethod
    def from_json(cls, data: dict) -> "TrigFormField":
        p, q = data["bidegree"]
        n = data["n"]
        by_key: dict = {}
        for t in data["terms"]:
            key = (tuple(t["I"]), tuple(t["J"]))
            modes = by_key.setdefault(key, {})
            fr = tuple(t["freq"])
            modes[fr] = modes.get(fr, 0) + complex(t["re"], t["im"])
        return cls(n, p, q, {k: TrigPoly.from_modes(n, m) for k, m in by_key.items()})


def _insert(n, letter, I, J):
    """Sign and key of ``e_letter ^ dz_I ^ dzbar_J``; sign 0 when the letter repeats."""
    letters = [letter] + _letters(n, I, J)
    s = _perm_sign(letters)
    return s, (_split(n, letters) if s else None)


def wedge(u: TrigFormField, v: TrigFormField) -> TrigFormField:
    n = u.n
    p, q = u.p + v.p, u.q + v.q
    if p > n or q > n:
        return TrigFormField(n, p, q, {})
    comps: dict = {}
    for (I1, J1), f in u.comps.items():
        for (I2, J2), g in v.comps.items():
            if set(I1) & set(I2) or set(J1) & set(J2):
                continue
            letters = _letters(n, I1, J1) + _letters(n, I2, J2)
            s = _perm_sign(letters)
            key = _split(n, letters)
            term = (f * g) * s
            comps[key] = comps[key] + term if key in comps else term
    return TrigFormField(n, p, q, comps)


def _apply_derivative(u: TrigFormField, bar: bool) -> TrigFormField:
    n = u.n
    p, q = (u.p, u.q + 1) if bar else (u.p + 1, u.q)
    if p > n or q > n:
        return TrigFormField(n, p, q, {})
    comps: dict = {}
    for (I, J), f in u.comps.items():
        for j in range(n):
            s, key = _insert(n, n + j if bar else j, I, J)
            if not s:
                continue
            df = f.d_dzbar(j) if bar else f.d_dz(j)
            term = df * s
            comps[key] = comps[key] + term if key in comps else term
    return TrigFormField(n, p, q, comps)


def dbar(u: TrigFormField) -> TrigFormField:
    return _apply_derivative(u, bar=True)


def del_(u: TrigFormField) -> TrigFormField:
    return _apply_derivative(u, bar=False)


def d(u: TrigFormField):
    """Exterior derivative as the pair ``(del u, dbar u)`` of its two bidegree parts."""
    return del_(u), dbar(u)


def del_phi(w: SmoothPeriodicWeight) -> TrigFormField:
    return TrigFormField(w.n, 1, 0, {((j,), ()): w.phi.d_dz(j) for j in range(w.n)})


def dbar_phi(w: SmoothPeriodicWeight) -> TrigFormField:
    return TrigFormField(w.n, 0, 1, {((), (j,)): w.phi.d_dzbar(j) for j in range(w.n)})


def _sign_of(convention: str) -> int:
    if convention == TWISTED:
        return 1
    if convention == CHERN:
        return -1
    raise ValueError(f"unknown sign convention {convention!r}")


def del_h(u: TrigFormField, w: SmoothPeriodicWeight, convention: str = TWISTED) -> TrigFormField:
    """``del u + s dphi ^ u`` with ``s = +1`` (twisted) or ``-1`` (Chern connection of ``e^{-phi}``)."""
    out = del_(u)
    if not w.is_trivial and u.p < u.n:
        out = out + wedge(del_phi(w), u).scale(_sign_of(convention))
    out.meta["sign_convention"] = convention
    return out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _product_series(u: TrigFormField, v: TrigFormField) -> TrigPoly | None:
    """``sum_IJ u_IJ conj(v_IJ)`` as a trig polynomial (None when it vanishes)."""
    acc = None
    for key, f in u.comps.items():
        g = v.comps.get(key)
        if g is None:
            continue
        term = f * g.conj()
        acc = term if acc is None else acc + term
    return acc


def _grid_fourier(vals: np.ndarray, D: int, n: int) -> np.ndarray:
    """Coefficients ``|k| <= D`` of a grid function (trapezoid rule); size-1 axes carry only k = 0."""
    G = np.fft.fftn(vals) / float(vals.size)
    out = np.zeros((2 * D + 1,) * (2 * n), dtype=complex)
    src, dst = [], []
    ks = np.arange(-D, D + 1)
    for size in vals.shape:
        if size == 1:
            src.append([0])
            dst.append([D])
        else:
            src.append(list(ks % size))
            dst.append(list(ks + D))
    out[np.ix_(*dst)] = G[np.ix_(*src)]
    return out


def integrate_density(P: TrigPoly, density, support, report: dict | None = None,
                      tol: float = 1e-10) -> complex:
    """``int P rho dV`` where ``P`` is exact and ``rho`` is sampled by ``density(shape)``.

    ``rho`` is assumed constant along axes with ``support[a]`` false.  Its Fourier
    coefficients come from the tensor trapezoid rule; the grid is doubled until two
    successive values differ by less than ``tol * max(1, |value|)``.
    """
    vol = 2.0 ** P.n
    D = P.F
    flipped = P.c[(slice(None, None, -1),) * (2 * P.n)]
    N = 8
    while N <= 2 * D + 2:
        N *= 2
    prev = None
    cap = max_grid()
    while N <= cap:
        shape = tuple(N if s else 1 for s in support)
        val = vol * complex(np.sum(flipped * _grid_fourier(density(shape), D, P.n)))
        if not any(support):
            prev = val
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            if report is not None:
                report["grid"] = max(report.get("grid", 0), N)
            return val
        prev = val
        N *= 2
    raise QuadratureError(f"quadrature did not converge below grid {cap} per dimension")


def integrate(P: TrigPoly, w: SmoothPeriodicWeight | None = None, report: dict | None = None) -> complex:
    """``int P e^{-phi} dV`` over one cell (volume ``2^n``)."""
    if w is None or w.is_trivial:
        if report is not None:
            report["grid"] = max(report.get("grid", 0), 2 * P.F + 2)
        return 2.0 ** P.n * P.mean()
    return integrate_density(P, w.density_on_grid, w.support_axes, report)


def inner_product(u: TrigFormField, v: TrigFormField, w: SmoothPeriodicWeight | None = None,
                  report: dict | None = None, omega_scale: float = 1.0) -> complex:
    """``int <u, v> e^{-phi} dV_omega``; ``omega_scale = c`` evaluates it for the metric ``c omega``.

    Rescaling gives ``|.|^2 -> c^{-(p+q)} |.|^2`` and ``dV -> c^n dV``.
    """
    if (u.p, u.q) != (v.p, v.q):
        raise DegreeError(f"cannot pair ({u.p},{u.q}) with ({v.p},{v.q})")
    P = _product_series(u, v)
    if P is None:
        return 0j
    factor = omega_scale ** (u.n - u.p - u.q) if omega_scale != 1.0 else 1.0
    return factor * integrate(P, w, report)


def norm2(u: TrigFormField, w: SmoothPeriodicWeight | None = None, report: dict | None = None,
          omega_scale: float = 1.0) -> float:
    return inner_product(u, u, w, report, omega_scale).real


def norm(u: TrigFormField, w: SmoothPeriodicWeight | None = None, omega_scale: float = 1.0) -> float:
    return math.sqrt(max(norm2(u, w, omega_scale=omega_scale), 0.0))


# ---------------------------------------------------------------------------
# formal adjoints in L^2(e^{-phi})
# ---------------------------------------------------------------------------

def _contract(u: TrigFormField, j: int, bar: bool) -> TrigFormField:
    comps: dict = {}
    letter = u.n + j if bar else j
    for (I, J), f in u.comps.items():
        letters = _letters(u.n, I, J)
        if letter not in letters:
            continue
        pos = letters.index(letter)
        key = _split(u.n, letters[:pos] + letters[pos + 1:])
        term = f * (-1) ** pos
        comps[key] = comps[key] + term if key in comps else term
    return TrigFormField(u.n, u.p - (0 if bar else 1), u.q - (1 if bar else 0), comps)


def adjoint_dbar(u: TrigFormField, w: SmoothPeriodicWeight | None = None) -> TrigFormField:
    """``dbar*_phi u = -sum_j iota(d/dzbar_j) (d_j u - (d_j phi) u)``."""
    n = u.n
    if u.q == 0:
        return TrigFormField(n, u.p, -1, {})
    out = TrigFormField.zero(n, u.p, u.q - 1)
    trivial = w is None or w.is_trivial
    for j in range(n):
        g = TrigFormField(n, u.p, u.q, {k: f.d_dz(j) for k, f in u.comps.items()})
        if not trivial:
            g = g - u.scale(w.phi.d_dz(j))
        out = out - _contract(g, j, bar=True)
    return out


def adjoint_del_h(u: TrigFormField, w: SmoothPeriodicWeight | None = None,
                  convention: str = TWISTED) -> TrigFormField:
    """Formal adjoint of ``del_h`` in ``L^2(e^{-phi})``:
    ``sum_j iota(d/dz_j) (-dbar_j u + (1 + s) (dbar_j phi) u)``."""
    n = u.n
    if u.p == 0:
        return TrigFormField(n, -1, u.q, {})
    s = _sign_of(convention)
    out = TrigFormField.zero(n, u.p - 1, u.q)
    trivial = w is None or w.is_trivial
    for j in range(n):
        g = TrigFormField(n, u.p, u.q, {k: -f.d_dzbar(j) for k, f in u.comps.items()})
        if not trivial and s != -1:
            g = g + u.scale(w.phi.d_dzbar(j) * (1 + s))
        out = out + _contract(g, j, bar=False)
    out.meta["sign_convention"] = convention
    return out



# ---------------------------------------------------------------------------
# pointwise Lefschetz operators on fields
# ---------------------------------------------------------------------------

def lefschetz_field(u: TrigFormField, q: int = 1) -> TrigFormField:
    """``omega^q ^ u`` for the flat Kähler form."""
    from .extalg import HermitianFrame, omega_power
    if q == 0:
        return u
    return wedge(TrigFormField.constant(omega_power(HermitianFrame(u.n), q, exact=False)), u)


def lambda_field(u: TrigFormField) -> TrigFormField:
    from .extalg import _lambda_orthonormal
    if u.p <= 0 or u.q <= 0 or u.p > u.n or u.q > u.n:
        return TrigFormField(u.n, u.p - 1, u.q - 1, {})
    return u.map_constant(_lambda_orthonormal, (-1, -1))


def curvature_commutator(u: TrigFormField, w: SmoothPeriodicWeight) -> TrigFormField:
    """``[i Theta, Lambda] u = i Theta ^ Lambda u - Lambda (i Theta ^ u)``."""
    if w.is_trivial:
        return TrigFormField(u.n, u.p, u.q, {})
    iT = w.curvature_form()
    return wedge(iT, lambda_field(u)) - lambda_field(wedge(iT, u))


# ---------------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------------

def _report(lhs, rhs, residual, grid, convention, **extra) -> dict:
    out = {"lhs": float(lhs), "rhs": float(rhs), "residual": float(residual),
           "grid": int(grid), "sign_convention": convention}
    out.update(extra)
    return out


def commutation_check(u: TrigFormField, w: SmoothPeriodicWeight, convention: str = TWISTED) -> dict:
    """Compare ``del_h dbar u + dbar del_h u`` with ``i Theta ^ u`` coefficientwise.

    The sum is exactly ``s dbar del phi ^ u`` (``s`` the sign of the convention), which is
    ``i (i Theta) ^ u`` for the twisted sign.  ``residual`` is measured against ``i Theta ^ u``;
    ``residual_exact_form`` against ``s dbar del phi ^ u``.
    """
    lhs = del_h(dbar(u), w, convention) + dbar(del_h(u, w, convention))
    iT = w.curvature_form()
    rhs = wedge(iT, u)
    exact = wedge(iT, u).scale(1j * _sign_of(convention))
    return _report(lhs.max_abs(), rhs.max_abs(), (lhs - rhs).max_abs(), 0, convention,
                   residual_exact_form=(lhs - exact).max_abs())


def _compound(V: np.ndarray, subsets) -> np.ndarray:
    """``C[..., a, b] = det V[..., J_a, K_b]`` for ``|J| = |K| = q``."""
    m = len(subsets)
    C = np.empty(V.shape[:-2] + (m, m), dtype=complex)
    for a, J in enumerate(subsets):
        for b, K in enumerate(subsets):
            C[..., a, b] = np.linalg.det(V[..., list(J), :][..., list(K)]) if J else 1.0
    return C


def _eigen_curvature_term(u: TrigFormField, w: SmoothPeriodicWeight, report: dict) -> float:
    """``int sum_K (sum_{j in K} lambda_j) |u_K|^2 e^{-phi} dV`` for an ``(n, q)``-form.

    Per node, ``i ddbar phi = i sum lambda_m theta_m ^ conj(theta_m)`` with ``theta = V^T dz``,
    so ``dzbar_J = sum_K det V[J, K] conj(theta)_K`` and the integrand is
    ``sum_{J,J'} u_J conj(u_J') A_{JJ'}`` with ``A = C diag(lambda_K) C^H``.
    """
    n, q = u.n, u.q
    subsets = [J for _, J in u.basis_keys()]
    full = tuple(range(n))
    cache: dict = {}

    def A_on(shape):
        if shape not in cache:
            lam, V = w.eigenvalues_on_grid(shape)
            C = _compound(V, subsets)
            lamK = np.stack([lam[..., list(K)].sum(axis=-1) if K else np.zeros(lam.shape[:-1])
                             for K in subsets], axis=-1)
            A = np.einsum("...ak,...k,...bk->...ab", C, lamK, np.conj(C))
            cache[shape] = A * w.density_on_grid(shape)[..., None, None]
        return cache[shape]

    total = 0j
    for a, J in enumerate(subsets):
        f = u.comps.get((full, J))
        if f is None:
            continue
        for b, J2 in enumerate(subsets):
            g = u.comps.get((full, J2))
            if g is None:
                continue
            total += integrate_density(f * g.conj(), lambda s, a=a, b=b: A_on(s)[..., a, b],
                                       w.support_axes, report)
    return total.real


def bochner_check(v: TrigFormField, w: SmoothPeriodicWeight | None = None) -> dict:
    """Bochner identity for ``u = omega^q ^ v`` with ``v`` of type ``(n-q, 0)``.

    ``lhs = |dbar u|^2 + |dbar*_phi u|^2`` and
    ``rhs = (q!)^2 |dbar v|^2 + int sum_J (sum_{j in J} lambda_j) |u_J|^2 e^{-phi}``.
    The factor ``(q!)^2`` comes from ``omega^q = q! sum_K i^.. dz_K ^ dzbar_K``; it is 1 for ``q = 1``.
    The curvature integral is also evaluated as ``<[i Theta, Lambda] u, u>`` (``curvature_commutator``).
    """
    n = v.n
    if v.q != 0:
        raise DegreeError(f"bochner_check expects an (n-q,0)-form, got ({v.p},{v.q})")
    w = w or SmoothPeriodicWeight.zero(n)
    q = n - v.p
    u = lefschetz_field(v, q)
    rep: dict = {}
    lhs = norm2(dbar(u), w, rep) + norm2(adjoint_dbar(u, w), w, rep)
    dv = norm2(dbar(v), w, rep)
    if w.is_trivial:
        curv = curv_comm = 0.0
    else:
        curv = _eigen_curvature_term(u, w, rep)
        curv_comm = inner_product(curvature_commutator(u, w), u, w, rep).real
    rhs = math.factorial(q) ** 2 * dv + curv
    return _report(lhs, rhs, abs(lhs - rhs), rep.get("grid", 0), "n/a", q=q,
                   dbar_v_norm2=dv, curvature_term=curv, curvature_term_commutator=curv_comm)


def nakano_weak_check(u: TrigFormField, w: SmoothPeriodicWeight, convention: str = CHERN) -> dict:
    """``|dbar u|^2 + |dbar* u|^2 - |del_h u|^2 - |del_h* u|^2`` against ``<[i Theta, Lambda] u, u>``.

    The identity holds for the metric-compatible operator ``del - dphi ^``; with the opposite sign
    the residual is reported as-is.
    """
    rep: dict = {}
    terms = {
        "dbar": norm2(dbar(u), w, rep),
        "dbar_adjoint": norm2(adjoint_dbar(u, w), w, rep),
        "del_h": norm2(del_h(u, w, convention), w, rep),
        "del_h_adjoint": norm2(adjoint_del_h(u, w, convention), w, rep),
    }
    lhs = terms["dbar"] + terms["dbar_adjoint"] - terms["del_h"] - terms["del_h_adjoint"]
    rhs = inner_product(curvature_commutator(u, w), u, w, rep).real if not w.is_trivial else 0.0
    return _report(lhs, rhs, abs(lhs - rhs), rep.get("grid", 0), convention, terms=terms)


# ---------------------------------------------------------------------------
# flat classical case
# ---------------------------------------------------------------------------

def harmonic_basis(n: int, q: int, w: SmoothPeriodicWeight | None = None) -> list:
    """Constant ``(n, q)``-forms: the harmonic space of the flat torus."""
    if w is not None and not w.is_trivial:
        raise ValueError("harmonic_basis needs the trivial weight; use residual_minimizer for phi != 0")
    return [TrigFormField.constant(b) for b in BigradedForm.basis(n, n, q)]


def harmonic_projection(beta: TrigFormField) -> TrigFormField:
    """Mean-value part; for a dbar-closed form on the flat torus this is the harmonic representative."""
    return TrigFormField(beta.n, beta.p, beta.q,
                         {k: TrigPoly.constant(beta.n, f.mean()) for k, f in beta.comps.items()})


def lefschetz_inverse_field(beta: TrigFormField) -> TrigFormField:
    from .extalg import lefschetz_inverse
    return beta.map_constant(lefschetz_inverse, (-beta.q, -beta.q))


def hard_lefschetz_preimage(beta: TrigFormField, tol: float = 1e-9) -> dict:
    """``alpha`` of type ``(n-q, 0)`` with ``omega^q ^ alpha`` the harmonic part of ``beta``."""
    if beta.p != beta.n:
        raise DegreeError(f"expected an (n,q)-form, got ({beta.p},{beta.q})")
    closed = dbar(beta).max_abs()
    if closed > tol:
        raise ValueError(f"beta is not dbar-closed (residual {closed:.3e})")
    q = beta.q
    harm = harmonic_projection(beta)
    alpha = lefschetz_inverse_field(harm)
    back = lefschetz_field(alpha, q)
    checks = {
        "round_trip": math.sqrt(norm2(back - harm)),
        "dbar_alpha": dbar(alpha).max_abs(),
        "del_alpha": del_(alpha).max_abs(),
        "dbar_beta": closed,
    }
    checks["d_alpha_zero"] = checks["dbar_alpha"] == 0.0 and checks["del_alpha"] == 0.0
    return {"alpha": alpha, "harmonic": harm, "checks": checks}


# ---------------------------------------------------------------------------
# pairing and the Stokes identity
# ---------------------------------------------------------------------------

def exp_weight_series(w: SmoothPeriodicWeight, t: float, F: int) -> TrigPoly:
    """Fourier truncation at cutoff ``F`` of ``e^{t phi}``."""
    n = w.n
    N = 4 * F + 64
    shape = tuple(N if s else 1 for s in w.support_axes)
    c = _grid_fourier(np.exp(t * w.grid_values(shape)), F, n)
    return TrigPoly(n, F, c)


def parallel_section(w: SmoothPeriodicWeight, I, F: int, convention: str = TWISTED) -> TrigFormField:
    """Truncation of the ``(|I|, 0)``-form ``e^{-s phi} dz_I`` which satisfies ``del_h = 0``."""
    f = exp_weight_series(w, -_sign_of(convention), F)
    return TrigFormField(w.n, len(I), 0, {(tuple(I), ()): f})


def _top_coefficient(n: int) -> complex:
    """``c`` with ``omega^n / n! = c dz_full ^ dzbar_full``."""
    from .extalg import HermitianFrame, omega_power
    full = tuple(range(n))
    top = omega_power(HermitianFrame(n), n, exact=False)
    return complex(top.coeffs[(full, full)]) / math.factorial(n)


def _pair_trig(a: TrigFormField, b: TrigFormField) -> TrigFormField:
    """Polynomial part ``i a ^ conj(b)`` of ``{a, b}_h``."""
    return wedge(a, b.conj()).scale(1j)


def _sample_shape(n: int, degs, w: SmoothPeriodicWeight, tail: int = 16):
    out = []
    for ax in range(2 * n):
        extra = tail * max(1, w.phi.axis_degrees(1e-15)[ax]) if w.support_axes[ax] else 0
        D = degs[ax] + extra
        out.append(2 * D + 2 if D else 1)
    return tuple(out)


def _spectral_dzbar(vals: np.ndarray, j: int, n: int) -> np.ndarray:
    G = np.fft.fftn(vals)
    shape = vals.shape
    k = np.fft.fftfreq(shape[j], 1.0 / shape[j]).reshape([-1 if a == j else 1 for a in range(2 * n)])
    l = np.fft.fftfreq(shape[n + j], 1.0 / shape[n + j]).reshape([-1 if a == n + j else 1 for a in range(2 * n)])
    return np.fft.ifftn(G * (np.pi * (1j * k - l)))


def stokes_identity_check(u: TrigFormField, v: TrigFormField, w: SmoothPeriodicWeight | None = None,
                          convention: str = CHERN) -> dict:
    """``dbar {v,u} = {dbar v, u} + (-1)^{n+q-1} {v, del_h u}`` on a sample grid, plus Stokes.

    ``{a, b} = i a ^ conj(b) e^{-phi}``.  The left side is differentiated spectrally from samples
    of ``{v, u}``; the right side is assembled from the exact fields ``dbar v`` and ``del_h u``.
    The Leibniz rule gives the identity for ``del_h = del - dphi ^``.  ``stokes_integral`` is
    ``int dbar {v,u}`` over the cell, zero on the closed torus.
    """
    n = u.n
    w = w or SmoothPeriodicWeight.zero(n)
    if u.q != 0 or v.p != n or u.p + v.q != n - 1:
        raise DegreeError(f"need u of type (n-q,0) and v of type (n,q-1); got ({u.p},{u.q}), ({v.p},{v.q})")
    q = v.q + 1
    full = tuple(range(n))
    P = _pair_trig(v, u)
    R1 = _pair_trig(dbar(v), u)
    R2 = _pair_trig(v, del_h(u, w, convention)).scale((-1) ** (n + q - 1))
    degs = [0] * (2 * n)
    for fld in (P, R1, R2):
        for f in fld.comps.values():
            degs = [max(a, b) for a, b in zip(degs, f.axis_degrees())]
    shape = _sample_shape(n, degs, w)
    dens = np.exp(-w.grid_values(shape)) if not w.is_trivial else np.ones(shape)
    lhs = np.zeros(shape, dtype=complex)
    for (I, J), f in P.comps.items():
        vals = f.on_grid(shape) * dens
        missing = [j for j in range(n) if j not in J]
        for j in missing:
            s, key = _insert(n, n + j, I, J)
            lhs += s * _spectral_dzbar(vals, j, n)
    top = (full, full)
    rhs = (R1.component(top) + R2.component(top)).on_grid(shape) * dens
    c = _top_coefficient(n)
    vol = 2.0 ** n
    stokes = vol * complex(lhs.mean()) / c
    return _report(float(np.abs(lhs).max()), float(np.abs(rhs).max()), float(np.abs(lhs - rhs).max()),
                   max(shape), convention, stokes_integral=abs(stokes),
                   rhs_integral=abs(vol * complex(rhs.mean()) / c))


# ---------------------------------------------------------------------------
# weighted least squares for an approximate harmonic representative
# ---------------------------------------------------------------------------

class ConditioningError(RuntimeError):
    pass


def _unit_field(n, p, q, key, freq) -> TrigFormField:
    F = max(abs(k) for k in freq)
    f = TrigPoly(n, F)
    f.c[tuple(np.asarray(freq) + F)] = 1.0
    return TrigFormField(n, p, q, {key: f})


def _field_samples(u: TrigFormField, keys, shape) -> np.ndarray:
    return np.concatenate([u.component(k).on_grid(shape).ravel() for k in keys])


def residual_minimizer(beta: TrigFormField, w: SmoothPeriodicWeight | None, cutoff: int,
                       band=(1e-13, 1e-8)) -> dict:
    """Minimise ``|dbar x|^2 + |dbar*_phi x|^2`` over ``x = beta + dbar gamma``, ``gamma`` of cutoff ``F``.

    The weighted norm is discretised on a grid fine enough to be exact for the integrands, so the
    discrete problem is the continuous one restricted to the truncated space.  Directions in
    ``ker dbar`` give zero singular values; a singular value inside ``band`` (relative to the
    largest) cannot be classified and raises :class:`ConditioningError`.
    """
    n, q = beta.n, beta.q
    w = w or SmoothPeriodicWeight.zero(n)
    if beta.p != n or q < 1:
        raise DegreeError(f"expected an (n,q)-form with q >= 1, got ({beta.p},{beta.q})")
    out_keys = BigradedForm.basis_indices(n, n, q - 1)
    dphi = max(w.phi.axis_degrees(1e-15))
    D = max(cutoff, beta.cutoff) + dphi
    shape = _sample_shape(n, [D] * (2 * n), w, tail=12)
    dens = np.exp(-w.grid_values(shape)) if not w.is_trivial else np.ones(shape)
    sw = np.sqrt(np.tile(dens.ravel(), len(out_keys)) * 2.0 ** n / dens.size)

    freqs = list(itertools.product(range(-cutoff, cutoff + 1), repeat=2 * n))
    in_keys = BigradedForm.basis_indices(n, n, q - 1)
    cols, basis = [], []
    for key in in_keys:
        for fr in freqs:
            if not any(fr):
                continue
            g = _unit_field(n, n, q - 1, key, fr)
            cols.append(sw * _field_samples(adjoint_dbar(dbar(g), w), out_keys, shape))
            basis.append(g)
    b = sw * _field_samples(adjoint_dbar(beta, w), out_keys, shape)
    coef = np.zeros(0)
    cond = 1.0
    if cols:
        A = np.stack(cols, axis=1)
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
        rel = s / s[0] if s[0] > 0 else s
        ambiguous = (rel > band[0]) & (rel < band[1])
        if ambiguous.any():
            raise ConditioningError(f"normal equations ill-conditioned: condition estimate {1 / rel[ambiguous].min():.3e}")
        keep = rel >= band[1]
        cond = float(1 / rel[keep].min()) if keep.any() else 1.0
        coef = -(Vh[keep].conj().T @ ((U[:, keep].conj().T @ b) / s[keep]))
    gamma = TrigFormField.zero(n, n, q - 1)
    for c, g in zip(coef, basis):
        if c != 0:
            gamma = gamma + g.scale(c)
    x = beta + dbar(gamma)
    rep: dict = {}
    residual = norm2(dbar(x), w, rep) + norm2(adjoint_dbar(x, w), w, rep)
    return {"x": x, "gamma": gamma, "residual": residual, "condition": cond,
            "grid": max(shape), "unknowns": len(basis)}


def lefschetz_bound_check(x: TrigFormField, beta: TrigFormField, w: SmoothPeriodicWeight, residual: float) -> dict:
    """A-posteriori form of ``|dbar v|^2 <= q eps |beta|^2`` for ``omega^q ^ v = x``.

    With curvature ``>= -eps omega`` the Bochner identity gives
    ``(q!)^2 |dbar v|^2 <= residual + q eps |x|^2``.
    """
    q = x.q
    eps = w.curvature_lower_bound
    v = lefschetz_inverse_field(x)
    lhs = math.factorial(q) ** 2 * norm2(dbar(v), w)
    xn, bn = norm2(x, w), norm2(beta, w)
    bound = residual + q * eps * xn
    return {"lhs": lhs, "rhs": bound, "holds": lhs <= bound * (1 + 1e-9) + 1e-12,
            "eps": eps, "x_norm2": xn, "beta_norm2": bn, "nakano_bound": q * eps * bn}
