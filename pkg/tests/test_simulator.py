import math

import numpy as np
import pytest

from pottsgas import _core
from pottsgas.geometry import Box
from pottsgas.kernels import KacKernel, RadialTable, pair_potential_table
from pottsgas.simulator import (BoundaryCondition, MoveMix, ParticleConfig,
                                energy_total, energy_total_integral,
                                exact_reference, gcmc_step, gcmc_sweep,
                                make_state, observables,
                                sample_restricted_config)

from . import oracles

ZERO_TABLE = RadialTable(rmax=0.5, h=0.5 / 7, coeffs=np.zeros((7, 4)))


class TestEnergyTotal:
    def test_single_particle(self, kern25):
        box = Box((16.0, 16.0), periodic=False)
        q = ParticleConfig(box, [[4.0, 4.0]], [2], 3)
        assert energy_total(q, BoundaryCondition.none(), kern25, 0.7) \
            == pytest.approx(-0.7)

    def test_two_equal_spins(self, kern25):
        box = Box((16.0, 16.0), periodic=False)
        q = ParticleConfig(box, [[4.0, 4.0], [4.5, 4.0]], [2, 2], 3)
        assert energy_total(q, BoundaryCondition.none(), kern25, 0.7) \
            == pytest.approx(-1.4)

    def test_two_unlike_out_of_range(self, kern25):
        box = Box((32.0, 32.0), periodic=False)
        q = ParticleConfig(box, [[2.0, 2.0], [12.0, 2.0]], [1, 2], 3)
        assert energy_total(q, BoundaryCondition.none(), kern25, 0.7) \
            == pytest.approx(-1.4)

    def test_matches_n_squared_oracle(self, kern25, rng):
        table = pair_potential_table(kern25)
        box = Box((20.0, 20.0), periodic=True)
        pos = rng.random((25, 2)) * 20.0
        spins = rng.integers(1, 4, 25)
        q = ParticleConfig(box, pos, spins, 3)
        want = oracles.pair_energy_direct(pos, spins, table, 0.4,
                                          sides=np.array([20.0, 20.0]))
        got = energy_total(q, BoundaryCondition.periodic(), kern25, 0.4)
        assert got == pytest.approx(want, rel=1e-12)

    def test_spin_permutation_symmetry(self, kern25, rng):
        box = Box((20.0, 20.0), periodic=True)
        pos = rng.random((20, 2)) * 20.0
        spins = rng.integers(1, 4, 20)
        perm = np.array([2, 3, 1])
        e1 = energy_total(ParticleConfig(box, pos, spins, 3),
                          BoundaryCondition.periodic(), kern25, 0.4)
        e2 = energy_total(ParticleConfig(box, pos, perm[spins - 1], 3),
                          BoundaryCondition.periodic(), kern25, 0.4)
        assert e1 == pytest.approx(e2, rel=1e-14)

    def test_pair_term_nonnegative(self, kern25, rng):
        lam = 0.9
        box = Box((16.0, 16.0), periodic=True)
        for _ in range(5):
            n = int(rng.integers(1, 30))
            q = ParticleConfig(box, rng.random((n, 2)) * 16.0,
                               rng.integers(1, 4, n), 3)
            h = energy_total(q, BoundaryCondition.periodic(), kern25, lam)
            assert h + lam * n >= -1e-12


class TestEnergyForms:
    def test_empty(self, kern25):
        box = Box((16.0, 16.0), periodic=False)
        q = ParticleConfig(box, np.zeros((0, 2)), np.zeros(0, dtype=int), 3)
        assert energy_total_integral(q, BoundaryCondition.none(), kern25,
                                     0.7) == 0.0

    def test_one_particle(self, kern25):
        box = Box((16.0, 16.0), periodic=False)
        q = ParticleConfig(box, [[8.0, 8.0]], [1], 3)
        got = energy_total_integral(q, BoundaryCondition.none(), kern25, 0.7)
        assert got == pytest.approx(-0.7, abs=1e-8)

    def test_matches_pair_form(self, kern25, rng):
        box = Box((20.0, 20.0), periodic=False)
        for _ in range(3):
            n = int(rng.integers(2, 9))
            q = ParticleConfig(box, rng.random((n, 2)) * 20.0,
                               rng.integers(1, 4, n), 3)
            e1 = energy_total(q, BoundaryCondition.none(), kern25, 0.4)
            e2 = energy_total_integral(q, BoundaryCondition.none(), kern25,
                                       0.4)
            assert abs(e1 - e2) <= 1e-7 * max(1.0, abs(e1))


class TestDetailedBalance:
    def test_insertion_deletion_log_ratio(self, kern25, rng):
        """For an insertion q -> q' the code's acceptance functional must
        satisfy A_ins(q->q') * A_del(q'->q) = 1 with the energy difference
        recomputed from scratch; this is the Metropolis detailed-balance
        identity for the free measure."""
        beta, lam, S = 1.2, 0.3, 3
        box = Box((16.0, 16.0), periodic=True)
        st = make_state(box, S, beta, lam, kern25, seed=21)
        for _ in range(40):
            gcmc_sweep(st, n_moves=20)
        q = st.config()
        vol = box.volume
        table = pair_potential_table(kern25)
        for _ in range(10):
            r = rng.random(2) * 16.0
            s = int(rng.integers(1, S + 1))
            q_new = ParticleConfig(box, np.vstack([q.positions, r]),
                                   np.append(q.spins, s), S)
            dh_fresh = (energy_total(q_new, BoundaryCondition.periodic(),
                                     kern25, lam)
                        - energy_total(q, BoundaryCondition.periodic(),
                                       kern25, lam))
            f = st.engine.field_at(r)
            dh_inc = float(f.sum() - f[s - 1]) - lam
            assert dh_inc == pytest.approx(dh_fresh, abs=1e-10)
            log_A_ins = math.log(S * vol / (q.n + 1)) - beta * dh_fresh
            log_A_del = math.log((q.n + 1) / (S * vol)) - beta * (-dh_fresh)
            assert abs(log_A_ins + log_A_del) < 1e-12

    def test_flip_log_ratio(self, kern25, rng):
        beta, lam, S = 1.0, 0.4, 3
        box = Box((16.0, 16.0), periodic=True)
        st = make_state(box, S, beta, lam, kern25, seed=22)
        for _ in range(30):
            gcmc_sweep(st, n_moves=20)
        q = st.config()
        for _ in range(5):
            i = int(rng.integers(q.n))
            s_old = int(q.spins[i])
            s_new = 1 + (s_old % S)
            spins2 = q.spins.copy()
            spins2[i] = s_new
            q2 = ParticleConfig(box, q.positions, spins2, S)
            dh = (energy_total(q2, BoundaryCondition.periodic(), kern25, lam)
                  - energy_total(q, BoundaryCondition.periodic(), kern25,
                                 lam))
            f = st.engine.cached_field(i)
            dh_inc = float(f[s_old - 1] - f[s_new - 1])
            assert dh_inc == pytest.approx(dh, abs=1e-10)

    def test_flip_acceptance_at_zero_beta(self, kern25):
        box = Box((16.0, 16.0), periodic=True)
        st = make_state(box, 3, 0.0, 0.5, kern25, seed=4)
        rng = np.random.default_rng(0)
        init = sample_restricted_config(box, np.full(3, 0.3), rng, 3)
        for r, s in zip(init.positions, init.spins):
            st.engine.insert(r, int(s))
        mix = MoveMix(displacement=0, flip=1, insertion=0, deletion=0)
        for _ in range(300):
            gcmc_step(st, mix)
        assert st.stats["accepted"][1] == st.stats["proposed"][1]


class TestSampling:
    def test_ideal_gas_poisson(self, kern25):
        beta, lam, S = 1.0, 0.2, 3
        box = Box((6.0, 6.0), periodic=True)
        st = make_state(box, S, beta, lam, kern25, seed=11,
                        pair_table=ZERO_TABLE)
        counts = []
        for sweep in range(150 + 1200):
            gcmc_sweep(st, n_moves=60)
            if sweep >= 150:
                counts.append(st.n)
        counts = np.array(counts)
        want = S * box.volume * math.exp(beta * lam)
        bm = np.array([c.mean() for c in np.array_split(counts, 12)])
        err = bm.std(ddof=1) / math.sqrt(12)
        assert abs(counts.mean() - want) < 3 * err + 0.02 * want

    def test_cache_consistency_along_chain(self, kern25):
        box = Box((16.0, 16.0), periodic=True)
        st = make_state(box, 3, 1.0, 0.5, kern25, seed=2)
        for _ in range(40):
            gcmc_sweep(st, n_moves=50, check_every=10)
        assert st.cache_consistency() < 1e-9

    def test_reproducibility_by_seed(self, kern25):
        box = Box((16.0, 16.0), periodic=True)
        ns = []
        for rep in range(2):
            st = make_state(box, 3, 1.0, 0.4, kern25, seed=9, stream=5)
            for _ in range(30):
                gcmc_sweep(st, n_moves=40)
            ns.append((st.n, st.engine.positions().sum()))
        assert ns[0] == ns[1]
        st = make_state(box, 3, 1.0, 0.4, kern25, seed=9, stream=6)
        for _ in range(30):
            gcmc_sweep(st, n_moves=40)
        assert (st.n, st.engine.positions().sum()) != ns[0]


class TestExactReference:
    def test_ideal_gas_closed_form(self, kern25):
        box = Box((0.14, 0.14), periodic=False)
        ref = exact_reference(box, BoundaryCondition.none(), kern25,
                              beta=1e-12, lam=0.0, S=3, n_max=4)
        mu = 3 * box.volume
        assert ref["Z"] == pytest.approx(math.exp(mu), rel=1e-7)
        assert np.allclose(ref["densities"], 1.0, rtol=1e-5)

    def test_degenerate_single_species(self, kern25):
        # one species: the unlike-pair term never fires; ideal values
        box = Box((0.2, 0.2), periodic=False)
        ref = exact_reference(box, BoundaryCondition.none(), kern25,
                              beta=5.0, lam=-0.3, S=1, n_max=4)
        mu = box.volume * math.exp(5.0 * -0.3)
        assert ref["Z"] == pytest.approx(math.exp(mu), rel=1e-6)

    def test_interaction_lowers_density(self):
        kern = KacKernel(gamma=0.5, d=2)
        box = Box((0.14, 0.14), periodic=False)
        ref_w = exact_reference(box, BoundaryCondition.none(), kern,
                                beta=8.0, lam=-0.1, S=3, n_max=4)
        ideal = math.exp(8.0 * -0.1)
        assert np.all(ref_w["densities"] < ideal)

    def test_tail_bound_enforced(self, kern25):
        box = Box((2.0, 2.0), periodic=False)
        with pytest.raises(ValueError):
            exact_reference(box, BoundaryCondition.none(), kern25,
                            beta=1.0, lam=0.5, S=3, n_max=4)

    def test_n_max_capped(self, kern25):
        box = Box((0.1, 0.1), periodic=False)
        with pytest.raises(ValueError):
            exact_reference(box, BoundaryCondition.none(), kern25,
                            beta=1.0, lam=0.0, S=3, n_max=5)


class TestBoundaryConditions:
    def test_density_collar_atomization(self, coex, kern25):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=False)
        bc = BoundaryCondition.density(box, kern25, ms.rho(1), label=1)
        # one atom per fine cell, weight = density * cell volume, so the
        # collar realizes the constant field rho^(1) exactly in measure
        cellvol = (kern25.gamma ** -0.5) ** 2
        assert np.allclose(bc.collar_weights, ms.rho(1) * cellvol)
        assert bc.width == kern25.pair_range
        # atoms only outside the box
        inside = np.all((bc.collar_positions >= 0)
                        & (bc.collar_positions < 32.0), axis=1)
        assert not inside.any()

    def test_particle_collar(self, kern25, rng):
        box = Box((16.0, 16.0), periodic=False)
        collar_pos = np.array([[-1.0, 4.0], [17.0, 8.0]])
        bc = BoundaryCondition.particles(collar_pos, np.array([1, 2]),
                                         width=8.0)
        q = ParticleConfig(box, [[0.5, 4.0]], [2], 3)
        e = energy_total(q, bc, kern25, lam=0.0)
        table = pair_potential_table(kern25)
        want = float(table(np.array([1.5]))[0])   # only the unlike pair
        assert e == pytest.approx(want, rel=1e-12)

    def test_mismatched_bc_rejected(self, kern25):
        box = Box((16.0, 16.0), periodic=True)
        with pytest.raises(ValueError):
            make_state(box, 3, 1.0, 0.0, kern25, bc=BoundaryCondition.none())


class TestObservables:
    def test_frozen_pure_phase(self, coex, kern25):
        from pottsgas.indicators import ScaleParams
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        params = ScaleParams(gamma=0.25, ell_minus=8.0, ell_plus=16.0,
                             zeta=1.2)
        rng = np.random.default_rng(3)
        # replicas frozen at the ordered density are theta-pure w.h.p.
        snaps = [sample_restricted_config(box, ms.rho(1), rng, 3)
                 for _ in range(4)]
        obs = observables(snaps, box, params, ms)
        assert obs["theta_fraction"][1] > 0.9
        assert obs["density"].shape == (3,)

    def test_needs_snapshots(self, coex, kern25):
        from pottsgas.indicators import ScaleParams
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        params = ScaleParams(gamma=0.25, ell_minus=8.0, ell_plus=16.0,
                             zeta=1.2)
        with pytest.raises(ValueError):
            observables([], box, params, ms)


@pytest.mark.skipif(_core.engine_cy is None,
                    reason="compiled engine not built")
class TestBackends:
    def test_identical_chain_results(self, kern25):
        box = Box((16.0, 16.0), periodic=True)
        outs = []
        for backend in ("python", "cython"):
            st = make_state(box, 3, 1.0, 0.6, kern25, seed=31,
                            backend=backend)
            for _ in range(25):
                gcmc_sweep(st, n_moves=30)
            outs.append((st.n, st.engine.total_pair_energy()))
        assert outs[0][0] == outs[1][0]
        assert outs[0][1] == pytest.approx(outs[1][1], abs=1e-9)
