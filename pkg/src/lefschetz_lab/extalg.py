"""Bigraded exterior algebra over one fiber of a Hermitian manifold.

A ``(p, q)``-form is stored as a map ``(I, J) -> coefficient`` where ``I`` and
``J`` are strictly increasing 0-based index tuples and the basis element is
``dz_I ^ dzbar_J`` (all holomorphic factors first).  Coefficients are either
exact :class:`~lefschetz_lab.gaussq.GaussQ` numbers or Python complex floats.

In an orthonormal frame the Kähler form is ``omega = i sum_j dz_j ^ dzbar_j``
and the monomials ``dz_I ^ dzbar_J`` are orthonormal for the pointwise inner
product.  With that normalisation ``Lambda = -i sum_j iota(d/dzbar_j) iota(d/dz_j)``
is the adjoint of ``L = omega ^ .`` and ``[L, Lambda] = (p + q - n)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .gaussq import GaussQ, I as EXACT_I, is_exact

MAX_DIM = 6
Index = tuple


class DegreeError(ValueError):
    pass


def _perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 on a repeated entry."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _letters(n: int, I, J):
    return list(I) + [n + j for j in J]


def _split(n: int, letters):
    s = sorted(letters)
    return tuple(a for a in s if a < n), tuple(a - n for a in s if a >= n)


def _is_zero(c, tol=0.0) -> bool:
    if is_exact(c):
        return not c
    return abs(c) <= tol


def _conj(c):
    return c.conjugate()


def _imag_unit(exact: bool):
    return EXACT_I if exact else 1j


@dataclass
class HermitianFrame:
    """Fiber data at one point: dimension, Hermitian matrix of omega, weight value phi(x)."""

    n: int
    omega: np.ndarray | None = None
    weight_value: float = 0.0

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {self.n}")
        if self.omega is not None:
            H = np.asarray(self.omega, dtype=complex)
            if H.shape != (self.n, self.n):
                raise ValueError("omega matrix has wrong shape")
            if not np.allclose(H, H.conj().T, atol=1e-13):
                raise ValueError("omega matrix is not Hermitian")
            if np.linalg.eigvalsh(H).min() <= 0:
                raise ValueError("omega matrix is not positive definite")
            if np.allclose(H, np.eye(self.n), atol=0):
                H = None
            self.omega = H

    @property
    def orthonormal(self) -> bool:
        return self.omega is None

    def coframe(self):
        """Return ``(M, A)`` with ``theta = M dz`` unitary coframe and ``dz = A theta``."""
        chol = np.linalg.cholesky(self.omega)
        M = chol.T
        return M, np.linalg.inv(M)


@dataclass
class BigradedForm:
    n: int
    p: int
    q: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {self.n}")
        if not (0 <= self.p <= self.n and 0 <= self.q <= self.n):
            raise DegreeError(f"bidegree ({self.p},{self.q}) out of range for n={self.n}")
        clean = {}
        for (I, J), c in self.coeffs.items():
            I, J = tuple(I), tuple(J)
            if len(I) != self.p or len(J) != self.q:
                raise DegreeError(f"index ({I},{J}) does not have bidegree ({self.p},{self.q})")
            if list(I) != sorted(set(I)) or list(J) != sorted(set(J)):
                raise ValueError(f"index tuples must be strictly increasing: {(I, J)}")
            if any(not 0 <= k < self.n for k in I + J):
                raise ValueError(f"index out of range in {(I, J)}")
            if not _is_zero(c):
                clean[(I, J)] = clean.get((I, J), 0) + c
        self.coeffs = {k: v for k, v in clean.items() if not _is_zero(v)}

    # construction ---------------------------------------------------------
    @classmethod
    def zero(cls, n, p, q):
        return cls(n, p, q, {})

    @classmethod
    def monomial(cls, n, I, J, c=1):
        I, J = tuple(I), tuple(J)
        sign_i, sign_j = _perm_sign(I), _perm_sign(J)
        if sign_i == 0 or sign_j == 0:
            return cls.zero(n, len(I), len(J))
        return cls(n, len(I), len(J), {(tuple(sorted(I)), tuple(sorted(J))): c * sign_i * sign_j})

    @classmethod
    def scalar(cls, n, c=1):
        return cls(n, 0, 0, {((), ()): c})

    @staticmethod
    def basis_indices(n, p, q):
        return [(I, J) for I in itertools.combinations(range(n), p)
                for J in itertools.combinations(range(n), q)]

    @classmethod
    def basis(cls, n, p, q):
        return [cls(n, p, q, {k: 1}) for k in cls.basis_indices(n, p, q)]

    @classmethod
    def from_vector(cls, n, p, q, vec):
        keys = cls.basis_indices(n, p, q)
        return cls(n, p, q, {k: complex(v) for k, v in zip(keys, vec)})

    def to_vector(self) -> np.ndarray:
        keys = self.basis_indices(self.n, self.p, self.q)
        return np.array([complex(self.coeffs.get(k, 0)) for k in keys])

    # algebra --------------------------------------------------------------
    @property
    def degree(self) -> int:
        return self.p + self.q

    @property
    def exact(self) -> bool:
        return all(is_exact(c) for c in self.coeffs.values())

    def _check_same(self, other):
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise DegreeError(
                f"bidegree mismatch: ({self.p},{self.q}) vs ({other.p},{other.q}) (n={self.n}/{other.n})")

    def __add__(self, other):
        self._check_same(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return BigradedForm(self.n, self.p, self.q, out)

    def __neg__(self):
        return BigradedForm(self.n, self.p, self.q, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return BigradedForm(self.n, self.p, self.q, {k: c * v for k, v in self.coeffs.items()})

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def conj(self) -> "BigradedForm":
        """Complex conjugate form: ``conj(dz_I ^ dzbar_J) = (-1)^{pq} dz_J ^ dzbar_I``."""
        s = (-1) ** (self.p * self.q)
        return BigradedForm(self.n, self.q, self.p,
                            {(J, I): s * _conj(c) for (I, J), c in self.coeffs.items()})

    def max_abs(self) -> float:
        return max((abs(complex(c)) for c in self.coeffs.values()), default=0.0)

    def allclose(self, other, tol=1e-12) -> bool:
        return (self - other).max_abs() <= tol

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other):
        if not isinstance(other, BigradedForm):
            return NotImplemented
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            return False
        return (self - other).is_zero()

    def to_float(self) -> "BigradedForm":
        return BigradedForm(self.n, self.p, self.q, {k: complex(v) for k, v in self.coeffs.items()})

    # serialisation --------------------------------------------------------
    def to_json(self) -> dict:
        terms = []
        for (I, J), c in sorted(self.coeffs.items()):
            z = complex(c)
            terms.append({"I": list(I), "J": list(J), "re": z.real, "im": z.imag})
        return {"n": self.n, "p": self.p, "q": self.q, "terms": terms}

    @classmethod
    def from_json(cls, data: dict) -> "BigradedForm":
        coeffs = {(tuple(t["I"]), tuple(t["J"])): complex(t["re"], t["im"]) for t in data["terms"]}
        return cls(data["n"], data["p"], data["q"], coeffs)


def wedge(u: BigradedForm, v: BigradedForm) -> BigradedForm:
    if u.n != v.n:
        raise ValueError(f"dimension mismatch {u.n} vs {v.n}")
    n = u.n
    p, q = u.p + v.p, u.q + v.q
    if p > n or q > n:
        raise DegreeError(f"wedge product would have bidegree ({p},{q}) > ({n},{n})")
    out = {}
    for (I1, J1), a in u.coeffs.items():
        for (I2, J2), b in v.coeffs.items():
            if set(I1) & set(I2) or set(J1) & set(J2):
                continue
            letters = _letters(n, I1, J1) + _letters(n, I2, J2)
            s = _perm_sign(letters)
            key = _split(n, letters)
            out[key] = out.get(key, 0) + s * (a * b)
    return BigradedForm(n, p, q, out)


def _contract_slot(v: BigradedForm, j: int, bar: bool) -> BigradedForm:
    """Interior product with d/dz_j (or d/dzbar_j when ``bar``)."""
    n = v.n
    if (v.q if bar else v.p) == 0:
        raise DegreeError(
            f"cannot contract a ({v.p},{v.q})-form with a {'(0,1)' if bar else '(1,0)'} vector")
    letter = n + j if bar else j
    out = {}
    for (I, J), c in v.coeffs.items():
        letters = _letters(n, I, J)
        if letter not in letters:
            continue
        pos = letters.index(letter)
        rest = letters[:pos] + letters[pos + 1:]
        key = _split(n, rest)
        out[key] = out.get(key, 0) + (-1) ** pos * c
    return BigradedForm(n, v.p - (0 if bar else 1), v.q - (1 if bar else 0), out)


def contract(xi, v: BigradedForm) -> BigradedForm:
    """``iota_xi v`` for the holomorphic vector ``xi = sum xi_j d/dz_j``."""
    if v.p == 0:
        raise DegreeError("contraction needs p >= 1")
    xi = list(xi)
    if len(xi) != v.n:
        raise ValueError(f"vector has {len(xi)} components, expected {v.n}")
    out = BigradedForm.zero(v.n, v.p - 1, v.q)
    for j, c in enumerate(xi):
        if not _is_zero(c):
            out = out + _contract_slot(v, j, bar=False).scale(c)
    return out


def contract_bar(xi, v: BigradedForm) -> BigradedForm:
    """``iota`` with the antiholomorphic vector ``sum xi_j d/dzbar_j``."""
    if v.q == 0:
        raise DegreeError("antiholomorphic contraction needs q >= 1")
    out = BigradedForm.zero(v.n, v.p, v.q - 1)
    for j, c in enumerate(xi):
        if not _is_zero(c):
            out = out + _contract_slot(v, j, bar=True).scale(c)
    return out


def kahler_form(frame: HermitianFrame, exact: bool = True) -> BigradedForm:
    n = frame.n
    if frame.orthonormal:
        i = _imag_unit(exact)
        return BigradedForm(n, 1, 1, {((j,), (j,)): i for j in range(n)})
    H = frame.omega
    return BigradedForm(n, 1, 1, {((j,), (k,)): 1j * H[j, k] for j in range(n) for k in range(n)})


def omega_power(frame: HermitianFrame, q: int, exact: bool = True) -> BigradedForm:
    out = BigradedForm.scalar(frame.n, 1)
    w = kahler_form(frame, exact)
    for _ in range(q):
        out = wedge(w, out)
    return out


def lefschetz_L(u: BigradedForm, frame: HermitianFrame) -> BigradedForm:
    return wedge(kahler_form(frame, exact=u.exact), u)


def _lambda_orthonormal(u: BigradedForm) -> BigradedForm:
    n = u.n
    out = BigradedForm.zero(n, u.p - 1, u.q - 1)
    for j in range(n):
        out = out + _contract_slot(_contract_slot(u, j, bar=False), j, bar=True)
    return out.scale(-_imag_unit(u.exact))


def _transform(u: BigradedForm, A: np.ndarray) -> BigradedForm:
    """Rewrite ``u`` after substituting ``dz = A theta`` (coefficients in the theta basis)."""
    n = u.n
    Ab = A.conj()
    out = {}
    for (I, J), c in u.coeffs.items():
        for K in itertools.combinations(range(n), u.p):
            dk = np.linalg.det(A[np.ix_(I, K)]) if I else 1.0
            if dk == 0:
                continue
            for Kb in itertools.combinations(range(n), u.q):
                dkb = np.linalg.det(Ab[np.ix_(J, Kb)]) if J else 1.0
                out[(K, Kb)] = out.get((K, Kb), 0) + complex(c) * dk * dkb
    return BigradedForm(n, u.p, u.q, out)


def lambda_dual(u: BigradedForm, frame: HermitianFrame) -> BigradedForm:
    """Pointwise adjoint of ``L`` for the frame inner product."""
    if u.p == 0 or u.q == 0:
        return BigradedForm(u.n, max(u.p - 1, 0), max(u.q - 1, 0), {})
    if frame.orthonormal:
        return _lambda_orthonormal(u)
    M, A = frame.coframe()
    return _transform(_lambda_orthonormal(_transform(u, A)), M)


def _inverse_orthonormal(beta: BigradedForm, q: int) -> BigradedForm:
    n = beta.n
    exact = beta.exact
    i = _imag_unit(exact)
    full = tuple(range(n))
    sign_q = (-1) ** (q * (q - 1) // 2) * (-1) ** (q * (n - q))
    out = {}
    for (I, K), c in beta.coeffs.items():
        comp = tuple(k for k in full if k not in K)
        kappa = (i ** q) * math.factorial(q) * sign_q * _perm_sign(list(K) + list(comp))
        out[(comp, ())] = c / kappa
    return BigradedForm(n, n - q, 0, out)


def lefschetz_inverse(beta: BigradedForm, frame: HermitianFrame | None = None) -> BigradedForm:
    """Unique ``(n-q, 0)``-form ``alpha`` with ``omega^q ^ alpha = beta`` for an ``(n, q)``-form beta."""
    if beta.p != beta.n:
        raise DegreeError(f"expected an (n,q)-form, got ({beta.p},{beta.q}) with n={beta.n}")
    frame = frame or HermitianFrame(beta.n)
    q = beta.q
    if frame.orthonormal:
        return _inverse_orthonormal(beta, q)
    M, A = frame.coframe()
    return _transform(_inverse_orthonormal(_transform(beta, A), q), M)


def pairing(u: BigradedForm, v: BigradedForm, frame: HermitianFrame | None = None) -> BigradedForm:
    """Scalar-valued form ``{u, v}_h = i u ^ conj(v) e^{-phi(x)}``."""
    phi = frame.weight_value if frame is not None else 0.0
    exact = u.exact and v.exact and phi == 0
    out = wedge(u, v.conj()).scale(_imag_unit(exact))
    if phi != 0:
        out = out.scale(math.exp(-phi))
    return out


def bochner_weight(J: Iterable[int], lambdas) -> float:
    """``sum_{j in J} lambda_j``; ``lambdas`` may be a :class:`CurvatureSpectrum`."""
    if isinstance(lambdas, CurvatureSpectrum):
        lambdas = lambdas.lambdas
    J = tuple(J)
    if list(J) != sorted(set(J)):
        raise ValueError(f"J must be strictly increasing: {J}")
    if any(j >= len(lambdas) or j < 0 for j in J):
        raise ValueError(f"index in {J} exceeds dimension {len(lambdas)}")
    return sum(lambdas[j] for j in J)


@dataclass
class CurvatureSpectrum:
    lambdas: list

    def __post_init__(self):
        self.lambdas = sorted(self.lambdas)

    def weight(self, J) -> float:
        return bochner_weight(J, self.lambdas)
