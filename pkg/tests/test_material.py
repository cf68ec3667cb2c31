"""Return mapping and yield condition of the strut material."""

import math

import numpy as np
import pytest

from latticehom import (ALSI10MG, MaterialParams, PlasticState, VIRGIN,
                        return_map, yield_function)

TOL_CONSISTENCY = 1e-9 * ALSI10MG.sigma_y0


def flow_stress_oracle(mat, alpha):
    return mat.sigma_y0 + mat.Q_inf * (1.0 - math.exp(-mat.b * alpha))


def bisect_dlambda(mat, eps, state, n_iter=200):
    """Independent bisection oracle on the consistency residual."""
    sig_tr = mat.E * (eps - state.eps_pl)
    xi = sig_tr - state.q
    if abs(xi) - flow_stress_oracle(mat, state.alpha) <= 0.0:
        return 0.0
    lo, hi = 0.0, abs(xi) / (mat.E + mat.H)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        r = abs(xi) - (mat.E + mat.H) * mid - flow_stress_oracle(mat, state.alpha + mid)
        if r > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestYieldFunction:
    def test_virgin_zero_stress(self, mat):
        assert yield_function(0.0, VIRGIN, mat) == pytest.approx(-190.0)

    def test_on_surface(self, mat):
        assert yield_function(190.0, VIRGIN, mat) == pytest.approx(0.0, abs=1e-12)

    def test_hardened_state(self, mat):
        # frozen from a direct independent evaluation of the yield condition
        state = PlasticState(eps_pl=0.0, alpha=0.01, q=10.0)
        assert yield_function(250.0, state, mat) == pytest.approx(38.634432051923085, rel=1e-12)


class TestReturnMap:
    def test_elastic_branch(self, mat):
        r = return_map(0.002, VIRGIN, mat)
        assert r.sigma == pytest.approx(140.0)
        assert r.D == pytest.approx(70000.0)
        assert r.state_new == VIRGIN
        assert not r.yielded

    def test_zero_input(self, mat):
        r = return_map(0.0, VIRGIN, mat)
        assert r.sigma == 0.0
        assert r.D == mat.E
        assert not r.yielded

    def test_plastic_step_against_bisection(self, mat):
        # frozen from the bisection oracle at eps = 0.004, virgin state
        r = return_map(0.004, VIRGIN, mat)
        assert r.yielded
        assert r.state_new.alpha == pytest.approx(0.0010320322725257142, abs=1e-12)
        assert r.sigma == pytest.approx(207.7577409232, rel=1e-10)
        assert r.state_new.q == pytest.approx(16.51251636041143, rel=1e-10)
        assert r.D == pytest.approx(13806.172698395389, rel=1e-10)
        dl = bisect_dlambda(mat, 0.004, VIRGIN)
        assert r.state_new.alpha == pytest.approx(dl, abs=1e-12)

    def test_odd_symmetry(self, mat):
        for eps in (0.0005, 0.004, 0.02):
            rp = return_map(eps, VIRGIN, mat)
            rm = return_map(-eps, VIRGIN, mat)
            assert rm.sigma == pytest.approx(-rp.sigma, rel=1e-14)
            assert rm.D == pytest.approx(rp.D, rel=1e-14)
            assert rm.state_new.eps_pl == pytest.approx(-rp.state_new.eps_pl, abs=1e-18)
            assert rm.state_new.alpha == pytest.approx(rp.state_new.alpha, abs=1e-18)
            assert rm.state_new.q == pytest.approx(-rp.state_new.q, abs=1e-18)

    def test_yield_onset_tie_breaks_elastic(self, mat):
        # trial state exactly on the surface stays elastic with tangent E
        eps_on = mat.sigma_y0 / mat.E
        r = return_map(eps_on, VIRGIN, mat)
        assert not r.yielded
        assert r.D == mat.E


def random_states(rng, n):
    eps_pl = rng.uniform(-0.01, 0.01, n)
    alpha = rng.uniform(0.0, 0.05, n)
    q = rng.uniform(-150.0, 150.0, n)
    return [PlasticState(float(e), float(a), float(b)) for e, a, b in zip(eps_pl, alpha, q)]


class TestProperties:
    def test_consistency_and_kuhn_tucker(self, mat, rng):
        states = random_states(rng, 300)
        eps = rng.uniform(-0.03, 0.03, 300)
        for e, s in zip(eps, states):
            r = return_map(float(e), s, mat)
            phi_new = yield_function(r.sigma, r.state_new, mat)
            assert phi_new <= TOL_CONSISTENCY
            dl = r.state_new.alpha - s.alpha
            assert dl >= 0.0
            assert abs(dl * phi_new) <= TOL_CONSISTENCY

    def test_tangent_matches_finite_differences(self, mat, rng):
        h = 1e-7
        switch_margin = 1e-6
        checked = 0
        for e, s in zip(rng.uniform(-0.03, 0.03, 400), random_states(rng, 400)):
            e = float(e)
            # skip states within the margin of the elastic/plastic switch
            sig_tr = mat.E * (e - s.eps_pl)
            if abs(abs(sig_tr - s.q) - flow_stress_oracle(mat, s.alpha)) < switch_margin * mat.E:
                continue
            r = return_map(e, s, mat)
            dp = return_map(e + h, s, mat).sigma
            dm = return_map(e - h, s, mat).sigma
            d_fd = (dp - dm) / (2 * h)
            assert abs(d_fd - r.D) / abs(r.D) <= 1e-5
            checked += 1
        assert checked > 300

    def test_perfect_plasticity_limit(self):
        mat = MaterialParams(E=70000.0, H=0.0, sigma_y0=190.0, Q_inf=0.0, b=0.0)
        for eps in (0.01, 0.05, -0.02):
            r = return_map(eps, VIRGIN, mat)
            if abs(eps) * mat.E > mat.sigma_y0:
                assert abs(r.sigma) == pytest.approx(mat.sigma_y0, rel=1e-12)
                assert r.D == pytest.approx(0.0, abs=1e-9)
            else:
                assert r.sigma == pytest.approx(mat.E * eps)

    def test_monotone_hardening_path(self, mat):
        state = VIRGIN
        sigma_prev = -1.0
        alpha_prev = 0.0
        for eps in np.linspace(0.0, 0.05, 60):
            r = return_map(float(eps), state, mat)
            assert r.state_new.alpha >= alpha_prev
            assert r.sigma >= sigma_prev - 1e-12
            alpha_prev = r.state_new.alpha
            sigma_prev = r.sigma
            state = r.state_new

    def test_plastic_tangent_strictly_between_zero_and_e(self, mat, rng):
        for e, s in zip(rng.uniform(-0.05, 0.05, 200), random_states(rng, 200)):
            r = return_map(float(e), s, mat)
            if r.yielded:
                assert 0.0 < r.D < mat.E
            else:
                assert r.D == mat.E
                assert r.state_new == s


class TestValidation:
    def test_rejects_nonpositive_modulus(self):
        with pytest.raises(ValueError):
            MaterialParams(E=-1.0, H=0.0, sigma_y0=1.0, Q_inf=0.0, b=0.0)

    def test_rejects_nonpositive_yield(self):
        with pytest.raises(ValueError):
            MaterialParams(E=1.0, H=0.0, sigma_y0=0.0, Q_inf=0.0, b=0.0)
