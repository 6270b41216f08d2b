import math

import numpy as np
import pytest

from pottsgas import meanfield as mf

from . import oracles


class TestEnergy:
    def test_zero_density(self):
        assert mf.mf_energy(np.zeros(3), 0.7) == 0.0

    def test_three_unordered_pairs(self):
        assert mf.mf_energy(np.ones(3), 0.0) == pytest.approx(3.0)

    def test_no_cross_terms(self):
        assert mf.mf_energy(np.array([2.0, 0, 0]), 1.0) == pytest.approx(-2.0)


class TestFreeEnergy:
    def test_entropy_convention_at_zero(self):
        assert mf.mf_free_energy(np.zeros(3), 1.0, 0.3) == 0.0

    def test_log_one(self):
        assert mf.mf_free_energy(np.ones(3), 1.0, 0.0) == pytest.approx(0.0)

    def test_scalar_arithmetic_oracle(self):
        # independent scalar evaluation of the defining formula
        beta, lam = 2.0, 0.3
        rho = [0.5, 0.2, 0.2]
        cross = rho[0] * rho[1] + rho[0] * rho[2] + rho[1] * rho[2]
        ent = -sum(r * (math.log(r) - 1.0) for r in rho)
        want = cross - lam * sum(rho) - ent / beta
        got = mf.mf_free_energy(np.array(rho), beta, lam)
        assert got == pytest.approx(want, rel=1e-14)

    def test_gradient_matches_finite_differences(self, rng):
        beta, lam = 1.3, 0.8
        for _ in range(5):
            rho = rng.uniform(0.05, 3.0, 3)
            g = mf.mf_gradient(rho, beta, lam)
            h = 1e-6
            for s in range(3):
                rp, rm = rho.copy(), rho.copy()
                rp[s] += h
                rm[s] -= h
                fd = (mf.mf_free_energy(rp, beta, lam)
                      - mf.mf_free_energy(rm, beta, lam)) / (2 * h)
                assert g[s] == pytest.approx(fd, rel=1e-6)


class TestResidual:
    def test_uniform_solution_is_fixed_point(self):
        beta, lam, S = 1.0, 0.9, 3
        a = mf.solve_uniform(beta, lam, S)
        res = mf.fixed_point_residual(np.full(S, a), beta, lam)
        assert np.max(np.abs(res)) < 1e-13

    def test_direct_substitution(self):
        res = mf.fixed_point_residual(np.ones(3), 1.0, 0.0)
        assert np.allclose(res, 1.0 - math.exp(-2.0))

    def test_solver_outputs_are_critical(self, coex):
        lam_b, ms = coex
        for p in mf.find_minimizers(1.0, lam_b, 3):
            assert p.residual < 1e-10


class TestKappaStar:
    def test_uniform_closed_form(self):
        # eigenvalues 1/(beta a) - 1 (twice) and 1/(beta a) + 2
        for beta, a in ((1.0, 0.1), (2.0, 0.3)):
            want = min(1 / (beta * a) - 1, 1 / (beta * a) + 2)
            assert mf.kappa_star(np.full(3, a), beta) == pytest.approx(
                want, rel=1e-12)

    def test_example_value(self):
        assert mf.kappa_star(np.full(3, 0.1), 1.0) == pytest.approx(9.0)

    def test_positive_at_minimizers(self, coex):
        _, ms = coex
        for k in range(1, 5):
            assert mf.kappa_star(ms.rho(k), 1.0) > 0


class TestFindMinimizers:
    def test_high_temperature_single_minimum(self):
        pts = mf.find_minimizers(0.5, 0.0, 3)
        minima = [p for p in pts if p.kind != "saddle"]
        assert len(minima) == 1
        a_star, _ = oracles.uniform_minimum(0.5, 0.0, 3)
        assert np.allclose(minima[0].rho, a_star, rtol=1e-8)
        # no asymmetric minimum anywhere near: the 2-d oracle finds none
        assert oracles.ordered_minimum(0.5, 0.0, 3) is None

    def test_coexistence_has_four(self, coex):
        lam_b, ms = coex
        pts = mf.find_minimizers(1.0, lam_b, 3)
        minima = [p for p in pts if p.kind in ("local", "global")]
        assert len(minima) == 4
        fes = [p.free_energy for p in minima]
        assert max(fes) - min(fes) < 1e-9
        # structure: three permutations of (c, b, b) plus one uniform
        uniform = [p for p in minima if np.ptp(p.rho) < 1e-8]
        assert len(uniform) == 1

    def test_far_above_curve_ordered_global(self, coex):
        lam_b, _ = coex
        pts = mf.find_minimizers(1.0, lam_b + 1.0, 3)
        glob = [p for p in pts if p.kind == "global"]
        others = [p for p in pts if p.kind == "local"]
        assert glob and all(np.ptp(p.rho) > 1e-6 for p in glob)
        # the disordered branch survives only as a higher critical point
        for p in others:
            assert p.free_energy > glob[0].free_energy

    def test_permutation_equivariance(self, coex):
        lam_b, _ = coex
        pts = mf.find_minimizers(1.0, lam_b, 3)
        vecs = sorted(tuple(np.round(p.rho, 9)) for p in pts)
        perm_vecs = sorted(tuple(np.round(p.rho[[1, 2, 0]], 9)) for p in pts)
        assert vecs == perm_vecs

    def test_s2_warns(self):
        with pytest.warns(UserWarning):
            mf.find_minimizers(1.0, 0.0, 2)


class TestCriticalLambda:
    def test_oracle_agreement(self, coex):
        lam_b, _ = coex
        lam_oracle = oracles.lambda_beta(1.0, 3)
        assert lam_b == pytest.approx(lam_oracle, rel=1e-4)

    def test_invariants(self, coex):
        lam_b, ms = coex
        assert ms.validate()
        assert 3 * ms.a < ms.b_star
        assert 0 < ms.b < ms.c

    def test_sign_change(self, coex):
        lam_b, ms = coex

        def g(lam):
            c, b = mf.continue_ordered(1.0, 3, lam_b, (ms.c, ms.b), lam)
            a = mf.solve_uniform(1.0, lam, 3)
            v = np.full(3, b)
            v[0] = c
            return (mf.mf_free_energy(v, 1.0, lam)
                    - mf.mf_free_energy(np.full(3, a), 1.0, lam))

        assert g(lam_b - 1e-3) > 0 > g(lam_b + 1e-3)

    def test_no_coexistence_reported(self):
        # at high temperature and bounded lambda no ordered branch exists
        with pytest.raises(mf.NoCoexistenceError):
            mf.critical_lambda(0.05, 3, lam_hi=1.0)


class TestPressures:
    def test_equal_at_crossing(self, coex):
        lam_b, ms = coex
        po, pd = mf.mf_pressures(1.0, lam_b, 3, lam_beta=lam_b,
                                 sol_beta=(ms.c, ms.b))
        assert abs(po - pd) < 1e-10

    def test_ordered_wins_above(self, coex):
        lam_b, ms = coex
        po, pd = mf.mf_pressures(1.0, lam_b + 5e-3, 3, lam_beta=lam_b,
                                 sol_beta=(ms.c, ms.b))
        assert po > pd

    def test_derivative_is_density_difference(self, coex):
        lam_b, ms = coex
        h = 1e-3
        vals = []
        for lam in (lam_b + h, lam_b - h):
            po, pd = mf.mf_pressures(1.0, lam, 3, lam_beta=lam_b,
                                     sol_beta=(ms.c, ms.b))
            vals.append(pd - po)
        deriv = (vals[0] - vals[1]) / (2 * h)
        expected = 3 * ms.a - ms.b_star
        assert deriv == pytest.approx(expected, rel=1e-4)
        assert expected < 0

    def test_missing_branch_raises(self, coex):
        lam_b, ms = coex
        with pytest.raises(mf.NoCoexistenceError):
            mf.mf_pressures(1.0, lam_b - 3.0, 3, lam_beta=lam_b,
                            sol_beta=(ms.c, ms.b))


class TestMinimizerSet:
    def test_labels(self, coex):
        _, ms = coex
        assert np.allclose(ms.rho(4), ms.a)
        r2 = ms.rho(2)
        assert r2[1] == ms.c and r2[0] == ms.b and r2[2] == ms.b

    def test_min_gap_positive(self, coex):
        _, ms = coex
        assert ms.min_gap() > 0

    def test_validation_catches_corruption(self, coex):
        lam_b, ms = coex
        bad = mf.MfMinimizerSet(S=3, beta=1.0, lam=lam_b, a=ms.a,
                                b=ms.c, c=ms.b, phi=ms.phi)
        with pytest.raises(ValueError):
            bad.validate()
