"""Acceptance criteria, one test per criterion, at the stated tolerances and time budgets.

A summary line per criterion is printed at the end of the session (see conftest).
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from lefschetz_lab import extalg, fourier_forms as ff, foliation as fol, multiplier_ideals as mi
from lefschetz_lab import singular_weights as sw
from lefschetz_lab.experiments import _parallel_section_for

pytestmark = pytest.mark.acceptance

F = Fraction


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


def test_criterion_01():
    """Kähler commutation [L, Lambda] u = (p+q-n) u, exact, n <= 4"""
    with Budget(1):
        for n in range(1, 5):
            frame = extalg.HermitianFrame(n)
            for p, q in itertools.product(range(n + 1), repeat=2):
                for b in extalg.BigradedForm.basis(n, p, q):
                    assert b.exact
                    L_lam = extalg.lefschetz_L(extalg.lambda_dual(b, frame), frame) if p and q \
                        else extalg.BigradedForm.zero(n, p, q)
                    lam_L = extalg.lambda_dual(extalg.lefschetz_L(b, frame), frame) if p < n and q < n \
                        else extalg.BigradedForm.zero(n, p, q)
                    assert L_lam - lam_L == b.scale(p + q - n), (n, p, q)


def test_criterion_02():
    """pointwise Lefschetz round trip to 1e-12, 200 random beta per (n, q), n <= 4"""
    rng = np.random.default_rng(2)
    with Budget(5):
        for n in range(1, 5):
            frame = extalg.HermitianFrame(n)
            for q in range(n + 1):
                omq = extalg.omega_power(frame, q, exact=False)
                dim = math.comb(n, q)
                for _ in range(200):
                    beta = extalg.BigradedForm.from_vector(
                        n, n, q, rng.standard_normal(dim) + 1j * rng.standard_normal(dim))
                    back = extalg.wedge(omq, extalg.lefschetz_inverse(beta, frame))
                    assert (back - beta).max_abs() <= 1e-12


def test_criterion_03():
    """Bochner identity residual <= 1e-8, n = 2, cutoff 4, 10 random v, 3 weights incl. phi = 0"""
    rng = np.random.default_rng(3)
    weights = ["0", "0.3*cos1", "0.2*cos1 + 0.2*cosy2"]
    with Budget(60):
        for expr in weights:
            w = ff.SmoothPeriodicWeight.parse(expr, 2)
            for _ in range(10):
                v = ff.TrigFormField.random(2, 1, 0, 4, rng, decay=0.3)
                rep = ff.bochner_check(v, w)
                assert rep["residual"] <= 1e-8, (expr, rep["residual"])
                if w.is_trivial:
                    target = rep["dbar_v_norm2"]   # q = 1, so (q!)^2 = 1
                    assert abs(rep["lhs"] - target) <= 1e-10 * max(1.0, target)
                    assert abs(rep["rhs"] - target) <= 1e-10 * max(1.0, target)


def test_criterion_04():
    """del_h dbar + dbar del_h = i Theta ^ . as a trig-field identity, residual <= 1e-12 on 10 inputs"""
    rng = np.random.default_rng(4)
    w = ff.SmoothPeriodicWeight.parse("0.2*cos1 + 0.2*cosy2", 2)
    worst = 0.0
    with Budget(10):
        for _ in range(10):
            p, q = (int(x) for x in rng.integers(0, 2, 2))
            u = ff.TrigFormField.random(2, p, q, 2, rng, decay=0.3)
            lhs = ff.del_h(ff.dbar(u), w) + ff.dbar(ff.del_h(u, w))
            rhs = ff.wedge(w.curvature_form(), u)
            worst = max(worst, (lhs - rhs).max_abs() / max(1.0, lhs.max_abs()))
    assert worst <= 1e-12, f"relative residual {worst:.3e}"


def test_criterion_05():
    """hard Lefschetz preimage on T^2, T^3 for every q: d alpha = 0 exactly, round trip <= 1e-10"""
    rng = np.random.default_rng(5)
    with Budget(30):
        for n in (2, 3):
            for q in range(1, n + 1):
                dim = math.comb(n, q)
                harm = ff.TrigFormField.constant(extalg.BigradedForm.from_vector(
                    n, n, q, rng.standard_normal(dim) + 1j * rng.standard_normal(dim)))
                gamma = ff.TrigFormField.random(n, n, q - 1, 2, rng, decay=0.3)
                out = ff.hard_lefschetz_preimage(harm + ff.dbar(gamma))
                assert out["checks"]["d_alpha_zero"]
                assert ff.d(out["alpha"])[0].max_abs() == 0 and ff.d(out["alpha"])[1].max_abs() == 0
                assert out["checks"]["round_trip"] <= 1e-10


def test_criterion_06():
    """Siu generators vs integrability oracle: 20 random admissible (a, b, c), degree <= 6, 20/20"""
    rng = np.random.default_rng(6)
    matched = tried = 0
    with Budget(300):
        while tried < 20:
            a, b, c = (F(float(x)).limit_denominator(97) for x in
                       (rng.uniform(0.05, 3), rng.uniform(0.05, 0.99), rng.uniform(0.1, 6)))
            try:
                p = mi.SiuParams(a, b, c)
            except ValueError:
                continue
            gap = math.ceil(p.a) - p.a
            x = p.c * (1 - gap / p.b)
            if min(gap, p.b - gap, 1 - p.b, abs(x - round(x)), p.a - math.floor(p.a)) < 0.05:
                continue
            tried += 1
            model = mi.local_model(mi.siu_weight(p))
            assert mi.siu_generators(p) == model.ideal()
            ok, bad = mi.oracle_ideal_agrees(model, 6)
            matched += ok
    assert matched == 20


def test_criterion_07():
    """mis_snc, scaled_ideal, jumping_numbers consistent; monotone over 100 random t-pairs"""
    rng = np.random.default_rng(7)
    weights = [mi.snc_weight([F(3, 2), F(9, 4)]), mi.snc_weight([1, F(1, 3)]),
               mi.siu_weight(mi.SiuParams(0.5, 0.9, 2.3)), mi.siu_weight(mi.SiuParams(1.5, 0.9, 2.3))]
    eps = F(1, 10 ** 6)
    with Budget(10):
        assert mi.scaled_ideal(weights[0], 1) == mi.mis_snc([F(3, 2), F(9, 4)])
        assert mi.jumping_numbers(weights[0], 1) == [F(4, 9), F(2, 3), F(8, 9)]
        for w in weights:
            js = mi.jumping_numbers(w, 2)
            assert js
            for j in js:
                assert mi.scaled_ideal(w, j + eps) < mi.scaled_ideal(w, j - eps)
        done = 0
        while done < 100:
            w = weights[int(rng.integers(len(weights)))]
            t1, t2 = sorted(F(int(x), 1000) for x in rng.integers(1, 2001, 2))
            try:
                assert mi.scaled_ideal(w, t2) <= mi.scaled_ideal(w, t1)
            except mi.ThresholdAmbiguity:
                continue
            done += 1


def test_criterion_08():
    """default family K = 6, degree 3: witness found; stalks (z, (w-a_k)^q) with q = floor(N_k eps_k (1-2 delta))"""
    with Budget(10):
        f = mi.Prop2Family.default(6)
        diag = mi.coherence_diagnostic(f, 3)
        assert diag["verdict"] == "non-coherent witness found"
        mismatches = []
        for delta in (F(1, 100), F(1, 1000)):
            for k in range(1, 7):
                q_formula = math.floor(f.N[k - 1] * f.eps[k - 1] * (1 - 2 * delta))
                q = mi.prop2_q(f, k, delta)
                stalk = mi.StaircaseIdeal(2, ((1, 0), (0, q)))
                expected = mi.StaircaseIdeal(2, ((1, 0), (0, q_formula)))
                if stalk != expected:
                    mismatches.append((k, str(delta), str(stalk), str(expected)))
        assert not mismatches, f"stalk generators differ from the formula at {mismatches}"


def test_criterion_09():
    """foliation example: eta_{S,T} not integrable (witness > 0.1 at |w| = 1), U*^V* integrable, iota constant"""
    rng = np.random.default_rng(9)
    with Budget(30):
        S = fol.FrameField.from_homogeneous("w2", "0")
        T = fol.FrameField.from_homogeneous("0", "w1")
        out = fol.integrability_test(fol.build_eta(S, T), samples=20)
        assert out["integrable"] is False
        w = complex(*out["witness"]["w"])
        assert abs(abs(w) - 1) < 1e-12 and out["witness"]["norm"] > 0.1
        assert fol.integrability_test(fol.parallel_section(), samples=20)["integrable"] is True
        zero = fol.FrameField.vertical(0)
        ref = fol.iota_invariant(fol.build_eta(zero, zero))
        for _ in range(5):
            f, g = (sum(int(c) * fol.W_ ** k for k, c in enumerate(rng.integers(-3, 4, 3))) for _ in range(2))
            x = complex(*rng.uniform(-1, 1, 2))
            val = fol.iota_invariant(fol.build_eta(fol.FrameField.vertical(f), fol.FrameField.vertical(g)), x)
            assert abs(val - ref) <= 1e-9


def test_criterion_10():
    """pluriharmonic model parallel (<= 1e-8) with zero curvature wedge; 2 log|z1| with s = 1 pairs > 1e-2"""
    with Budget(60):
        w = sw.ModelWeight.parse("2*re(z1)")
        D = sw.PolydiscDomain.standard(1, 0.25)
        s = _parallel_section_for(w, 12)
        dic = sw.TestFormDictionary.default(D, w)
        par = sw.parallel_current_check(s, w, dic)
        assert par["verdict"] == "parallel" and par["max_ratio"] <= 1e-8
        assert sw.curvature_wedge_check(s, w, dic)["verdict"] == "zero"
        wl = sw.ModelWeight.parse("2*log|z1|")
        one = sw.SymForm.function(1, 1)
        bad = sw.parallel_current_check(one, wl, sw.TestFormDictionary.default(D, wl))
        assert bad["verdict"] == "not parallel" and bad["max_pairing"] > 1e-2


def test_criterion_11():
    """Stokes identity residual <= 1e-8 on 10 random (u, v) with del_h u = 0; int d{v,u} = 0"""
    rng = np.random.default_rng(11)
    w = ff.SmoothPeriodicWeight.parse("0.2*cos1 + 0.2*cosy2", 2)
    with Budget(60):
        for _ in range(10):
            q = int(rng.integers(1, 3))
            I = tuple(sorted(int(i) for i in rng.choice(2, 2 - q, replace=False)))
            u = ff.parallel_section(w, I, 12, ff.CHERN)
            assert ff.del_h(u, w, ff.CHERN).max_abs() <= 1e-10
            v = ff.TrigFormField.random(2, 2, q - 1, 2, rng, decay=0.3)
            rep = ff.stokes_identity_check(u, v, w)
            assert rep["residual"] <= 1e-8
            assert rep["stokes_integral"] <= 1e-8
