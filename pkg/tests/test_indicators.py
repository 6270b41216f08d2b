import numpy as np
import pytest

from pottsgas.geometry import Box, CellSet, DensityField
from pottsgas.indicators import (Contour, ContourError, ScaleParams,
                                 eta_field, extract_contours,
                                 external_contours, in_restricted_ensemble,
                                 synthesize_eta, theta_field)

from . import oracles

PARAMS = ScaleParams(gamma=0.25, ell_minus=4.0, ell_plus=8.0, zeta=1.2)


def constant_field(box, rho, mesh=4.0):
    return DensityField.constant(box, mesh, rho)


class TestScaleParams:
    def test_derived_scales(self):
        p = ScaleParams.from_exponents(1e-4, 0.25, 0.25, 0.1)
        assert p.ell_minus < 1e4 < p.ell_plus
        assert p.block_ratio == round(p.ell_plus / p.ell_minus)

    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            ScaleParams(gamma=0.25, ell_minus=3.0, ell_plus=8.0, zeta=1.0)

    def test_exponent_report_is_diagnostic(self):
        rep = PARAMS.exponent_report(2)
        assert isinstance(rep["2ad + alpha- d^2 < alpha+/2"], bool)
        eff = rep["effective_exponents"]
        assert eff["alpha_minus"] == pytest.approx(0.0)
        assert eff["alpha_plus"] == pytest.approx(0.5)


class TestEtaField:
    def test_constant_pure_phase(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        for k in (1, 4):
            eta = eta_field(constant_field(box, ms.rho(k)), PARAMS, ms)
            assert np.all(eta.labels == k)

    def test_threshold_exceeded_gives_zero(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        vals = np.broadcast_to(ms.rho(1), (8, 8, 3)).copy()
        vals[2, 3, 0] += 2 * PARAMS.zeta
        eta = eta_field(DensityField(box, 4.0, vals), PARAMS, ms)
        assert eta.labels[2, 3] == 0
        assert (eta.labels != 0).sum() == 63

    def test_particle_input_matches_counting_oracle(self, coex, rng):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        n = rng.poisson(ms.a * box.volume, size=3)
        pos = rng.random((int(n.sum()), 2)) * 32.0
        spins = np.repeat([1, 2, 3], n)
        eta = eta_field((pos, spins), PARAMS, ms, box)
        counts = oracles.count_per_cell(pos, spins, 3, 4.0, (8, 8))
        dens = counts / 4.0 ** 2
        for idx in np.ndindex(8, 8):
            match = [k for k in range(1, 5)
                     if np.all(np.abs(dens[idx] - ms.rho(k)) <= PARAMS.zeta)]
            want = match[0] if len(match) == 1 else 0
            assert eta.labels[idx] == want

    def test_zeta_too_large_rejected(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        big = ScaleParams(gamma=0.25, ell_minus=4.0, ell_plus=8.0,
                          zeta=0.51 * ms.min_gap())
        with pytest.raises(ValueError):
            eta_field(constant_field(box, ms.rho(1)), big, ms)


class TestThetaField:
    def test_pure_phase(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        eta = eta_field(constant_field(box, ms.rho(2)), PARAMS, ms)
        th = theta_field(eta, PARAMS)
        assert np.all(th.labels == 2)

    def test_single_bad_cell_enumeration(self, coex):
        _, ms = coex
        box = Box((64.0, 64.0), periodic=True)
        m = PARAMS.block_ratio
        vals = np.broadcast_to(ms.rho(1), (16, 16, 3)).copy()
        bad = (5, 6)
        vals[bad] = 0.5 * (ms.rho(1) + ms.rho(2))   # matches nothing
        eta = eta_field(DensityField(box, 4.0, vals), PARAMS, ms)
        th = theta_field(eta, PARAMS)
        # enumeration oracle: a large-scale cell is zeroed iff the bad
        # small cell lies in its 3x3 block of large cells
        affected = set()
        for idx in np.ndindex(8, 8):
            cells = [((idx[0] - 1 + a) % 8, (idx[1] - 1 + b) % 8)
                     for a in range(3) for b in range(3)]
            small = {(i, j) for (ci, cj) in cells
                     for i in range(ci * m, (ci + 1) * m)
                     for j in range(cj * m, (cj + 1) * m)}
            if bad in small:
                affected.add(idx)
        for idx in np.ndindex(8, 8):
            assert th.labels[idx] == (0 if idx in affected else 1)
        # a bad cell sits in the ring of every neighbor of its own large
        # cell, so exactly the 3x3 Moore block is zeroed
        assert affected == {((bad[0] // m - 1 + a) % 8, (bad[1] // m - 1 + b) % 8)
                            for a in range(3) for b in range(3)}

    def test_checkerboard_zero(self, coex):
        _, ms = coex
        box = Box((64.0, 64.0), periodic=True)
        vals = np.empty((16, 16, 3))
        for i, j in np.ndindex(16, 16):
            blk = ((i // 2) + (j // 2)) % 2
            vals[i, j] = ms.rho(1) if blk == 0 else ms.rho(2)
        eta = eta_field(DensityField(box, 4.0, vals), PARAMS, ms)
        th = theta_field(eta, PARAMS)
        assert np.all(th.labels == 0)


class TestRestrictedEnsemble:
    def test_pure_true(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        region = CellSet(4.0, frozenset({(0, 0), (3, 3), (7, 7)}))
        assert in_restricted_ensemble(constant_field(box, ms.rho(1)), 1,
                                      region, PARAMS, ms)

    def test_one_violation_false(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        vals = np.broadcast_to(ms.rho(1), (8, 8, 3)).copy()
        vals[3, 3] = ms.rho(4)
        f = DensityField(box, 4.0, vals)
        region = CellSet(4.0, frozenset({(0, 0), (3, 3)}))
        assert not in_restricted_ensemble(f, 1, region, PARAMS, ms)

    def test_scan_oracle(self, coex, rng):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=True)
        vals = np.broadcast_to(ms.rho(2), (8, 8, 3)).copy()
        vals = np.clip(vals + rng.uniform(-0.5, 0.5, vals.shape) * PARAMS.zeta,
                       1e-9, None)
        f = DensityField(box, 4.0, vals)
        region = CellSet(4.0, frozenset(
            map(tuple, rng.integers(0, 8, (10, 2)).tolist())))
        eta = eta_field(f, PARAMS, ms)
        want = all(eta.labels[c] == 2 for c in region)
        assert in_restricted_ensemble(f, 2, region, PARAMS, ms) == want


def island_field(ms, box, fill, island, lo, hi, hole=None, hole_label=None):
    n = box.ncells(4.0)
    vals = np.broadcast_to(ms.rho(fill), n + (3,)).copy()
    vals[lo[0]:hi[0], lo[1]:hi[1]] = ms.rho(island)
    if hole is not None:
        vals[hole[0][0]:hole[1][0], hole[0][1]:hole[1][1]] = ms.rho(hole_label)
    return DensityField(box, 4.0, vals)


class TestContours:
    def test_pure_phase_no_contours(self, coex):
        _, ms = coex
        box = Box((64.0, 64.0), periodic=True)
        assert extract_contours(constant_field(box, ms.rho(3)), PARAMS, ms) == []

    def test_island_with_hole(self, coex):
        _, ms = coex
        box = Box((96.0, 96.0), periodic=True)     # 24x24 small, 12x12 large
        f = island_field(ms, box, fill=1, island=4, lo=(4, 4), hi=(20, 20),
                         hole=((8, 8), (16, 16)), hole_label=4)
        # interior: a 16x16-small-cell disordered square inside phase 1
        contours = extract_contours(f, PARAMS, ms)
        assert len(contours) == 1
        g = contours[0]
        assert g.color == 1
        assert set(g.interiors) == {4}
        assert g.n_cells == len(g.support)
        # support plus interiors plus exterior partition the box
        total = len(g.support) + sum(len(cs) for cs in g.interiors.values()) \
            + len(g.exterior)
        assert total == 12 * 12

    def test_corner_touching_islands_merge(self, coex):
        _, ms = coex
        box = Box((128.0, 128.0), periodic=True)
        n = box.ncells(4.0)
        vals = np.broadcast_to(ms.rho(1), n + (3,)).copy()
        # two mixed squares touching at a corner at the large-cell scale
        vals[4:8, 4:8] = ms.rho(2)
        vals[10:14, 10:14] = ms.rho(2)
        f = DensityField(box, 4.0, vals)
        contours = extract_contours(f, PARAMS, ms)
        assert len(contours) == 1

    def test_separation_invariant(self, coex, rng):
        _, ms = coex
        box = Box((96.0, 96.0), periodic=True)
        n = box.ncells(4.0)
        labels = rng.integers(1, 5, size=(6, 6))
        vals = np.empty(n + (3,))
        for i, j in np.ndindex(*n):
            vals[i, j] = ms.rho(int(labels[i // 4, j // 4]))
        eta = eta_field(DensityField(box, 4.0, vals), PARAMS, ms)
        th = theta_field(eta, PARAMS)
        lab = th.labels
        for c in map(tuple, np.argwhere(lab > 0)):
            for off in np.ndindex(3, 3):
                cc = tuple((np.array(c) + np.array(off) - 1) % lab.shape)
                assert lab[cc] in (0, lab[c])

    def test_translation_equivariance(self, coex):
        _, ms = coex
        box = Box((96.0, 96.0), periodic=True)
        f = island_field(ms, box, fill=2, island=3, lo=(4, 6), hi=(12, 14))
        g1 = extract_contours(f, PARAMS, ms)
        shift = 2   # one large cell = 2 small cells
        f2 = DensityField(box, 4.0, np.roll(f.values, (shift, shift), (0, 1)))
        g2 = extract_contours(f2, PARAMS, ms)
        assert len(g1) == len(g2) == 1
        moved = {(c[0] + 1, c[1] + 1) for c in g1[0].support}
        moved = {(a % 12, b % 12) for a, b in moved}
        assert moved == set(g2[0].support.cells)

    def test_spin_permutation_equivariance(self, coex):
        lam_b, ms = coex
        from pottsgas.meanfield import MfMinimizerSet
        box = Box((96.0, 96.0), periodic=True)
        f = island_field(ms, box, fill=1, island=4, lo=(6, 6), hi=(16, 16))
        g1 = extract_contours(f, PARAMS, ms)
        # swap species 1 <-> 2 in the field; minimizer labels 1 <-> 2 swap too
        perm_vals = f.values[..., [1, 0, 2]]
        g2 = extract_contours(DensityField(box, 4.0, perm_vals), PARAMS, ms)
        relabel = {1: 2, 2: 1, 3: 3, 4: 4}
        assert len(g1) == len(g2) == 1
        assert relabel[g1[0].color] == g2[0].color
        assert set(g1[0].support.cells) == set(g2[0].support.cells)

    def test_round_trip(self, coex):
        _, ms = coex
        box = Box((96.0, 96.0), periodic=True)
        f = island_field(ms, box, fill=1, island=4, lo=(4, 4), hi=(20, 20),
                         hole=((8, 8), (16, 16)), hole_label=3)
        g1 = extract_contours(f, PARAMS, ms)
        eta1 = eta_field(f, PARAMS, ms)
        eta2 = synthesize_eta(g1, 1, box, PARAMS, 4)
        assert np.array_equal(eta1.labels, eta2.labels)

    def test_json_dump(self, coex):
        _, ms = coex
        box = Box((96.0, 96.0), periodic=True)
        f = island_field(ms, box, fill=2, island=4, lo=(4, 4), hi=(12, 12))
        g = extract_contours(f, PARAMS, ms)[0]
        import json
        obj = json.loads(g.to_json())
        assert obj["color"] == 2
        assert obj["n_cells"] == g.n_cells


class TestExternalContours:
    def _fake(self, cells, mesh=8.0):
        cov = CellSet(mesh, frozenset(cells))
        return Contour(support=cov, eta_spec={}, color=1,
                       exterior=CellSet(mesh, frozenset()), interiors={})

    def test_singleton(self):
        g = self._fake({(0, 0)})
        assert external_contours([g]) == [g]

    def test_nested_keeps_outer(self):
        outer = self._fake({(0, 0), (0, 1), (1, 0), (1, 1)})
        inner = self._fake({(0, 0)})
        assert external_contours([outer, inner]) == [outer]

    def test_disjoint_keeps_both(self):
        g1 = self._fake({(0, 0)})
        g2 = self._fake({(5, 5)})
        assert set(map(id, external_contours([g1, g2]))) == {id(g1), id(g2)}


class TestExternalConditionMode:
    def test_collar_convention(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=False)
        m = PARAMS.block_ratio
        n = box.ncells(4.0)
        win = tuple(ni + 2 * m for ni in n)
        vals = np.broadcast_to(ms.rho(2), win + (3,)).copy()
        f = DensityField(box, 4.0, vals, origin=(-m, -m))
        eta = eta_field(f, PARAMS, ms)
        th = theta_field(eta, PARAMS)
        assert np.all(th.labels == 2)
        assert extract_contours(f, PARAMS, ms) == []

    def test_impure_collar_rejected(self, coex):
        _, ms = coex
        box = Box((32.0, 32.0), periodic=False)
        m = PARAMS.block_ratio
        n = box.ncells(4.0)
        win = tuple(ni + 2 * m for ni in n)
        vals = np.broadcast_to(ms.rho(2), win + (3,)).copy()
        vals[0, 0] = ms.rho(1)    # collar cell in the wrong phase
        f = DensityField(box, 4.0, vals, origin=(-m, -m))
        with pytest.raises(ContourError):
            extract_contours(f, PARAMS, ms)
