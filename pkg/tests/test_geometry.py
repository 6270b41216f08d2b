import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pottsgas.geometry import (Box, CellSet, DensityField, block_average,
                               block_average_field, cell_of,
                               connected_components, delta_in, delta_out)


class TestCellOf:
    def test_origin_cell(self):
        assert cell_of((0.0, 0.0), 1.0) == (0, 0)

    def test_half_open_left_edge(self):
        assert cell_of((1.0, 0.5), 1.0) == (1, 0)

    def test_floor_arithmetic(self):
        assert cell_of((-0.25, 3.7), 0.5) == (-1, 7)

    def test_periodic_wrap(self):
        box = Box((4.0, 4.0), periodic=True)
        assert cell_of((4.5, -0.5), 1.0, box) == (0, 3)

    def test_outside_nonperiodic_raises(self):
        box = Box((4.0, 4.0), periodic=False)
        with pytest.raises(ValueError):
            cell_of((4.5, 1.0), 1.0, box)

    def test_center_roundtrip(self):
        for mesh in (0.5, 1.0, 2.0):
            for cell in [(0, 0), (3, -2), (-1, 5)]:
                center = (np.array(cell) + 0.5) * mesh
                assert cell_of(center, mesh) == cell


class TestComponents:
    def test_singleton(self):
        comps = connected_components(CellSet(1.0, frozenset({(0, 0)})))
        assert len(comps) == 1

    def test_diagonal_touch_is_connected(self):
        comps = connected_components(CellSet(1.0, frozenset({(0, 0), (1, 1)})))
        assert len(comps) == 1

    def test_gap_splits(self):
        comps = connected_components(CellSet(1.0, frozenset({(0, 0), (2, 0)})))
        assert len(comps) == 2

    def test_wraps_on_torus(self):
        box = Box((4.0, 4.0), periodic=True)
        A = CellSet(1.0, frozenset({(0, 0), (3, 0)}))
        assert len(connected_components(A, box)) == 1
        assert len(connected_components(A)) == 2

    @given(st.sets(st.tuples(st.integers(0, 7), st.integers(0, 7)),
                   max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_idempotent_partition(self, cells):
        A = CellSet(1.0, frozenset(cells))
        comps = connected_components(A)
        union = set()
        for comp in comps:
            assert not (set(comp.cells) & union)
            union |= set(comp.cells)
            assert connected_components(comp) == [comp]
        assert union == set(A.cells)


class TestBoundaries:
    def test_single_cell_moore_ring(self):
        box = Box((8.0, 8.0), periodic=True)
        A = CellSet(1.0, frozenset({(4, 4)}))
        assert len(delta_out(A, box)) == 3 ** 2 - 1

    def test_full_periodic_box_empty(self):
        box = Box((4.0, 4.0), periodic=True)
        A = CellSet(1.0, frozenset((i, j) for i in range(4) for j in range(4)))
        assert len(delta_out(A, box)) == 0
        assert len(delta_in(A, box)) == 0

    def test_2x2_block(self):
        # enumerate the surrounding ring by hand: a 2x2 block is wrapped by
        # a 4x4 square minus itself = 12 cells, and every block cell touches
        # the complement
        A = CellSet(1.0, frozenset({(0, 0), (0, 1), (1, 0), (1, 1)}))
        box = Box((16.0, 16.0), periodic=True)
        ring = {(i, j) for i in range(-1, 3) for j in range(-1, 3)} - set(A.cells)
        ring = {(i % 16, j % 16) for i, j in ring}
        assert set(delta_out(A, box).cells) == ring
        assert len(delta_out(A, box)) == 12
        assert set(delta_in(A, box).cells) == set(A.cells)

    @given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)),
                   min_size=1, max_size=20))
    @settings(max_examples=60, deadline=None)
    def test_boundary_identities(self, cells):
        box = Box((6.0, 6.0), periodic=True)
        A = CellSet(1.0, frozenset(cells))
        comp = CellSet(1.0, frozenset(
            (i, j) for i in range(6) for j in range(6)) - A.cells)
        dout = delta_out(A, box)
        din = delta_in(A, box)
        assert din.issubset(A)
        assert not (set(dout.cells) & set(A.cells))
        assert set(dout.cells) == set(delta_in(comp, box).cells)


class TestBlockAverage:
    def test_empty_config(self):
        box = Box((4.0, 4.0), periodic=True)
        f = block_average(np.zeros((0, 2)), np.zeros(0, dtype=int), 3, 2.0, box)
        assert np.all(f.values == 0)

    def test_count_over_volume(self):
        box = Box((4.0, 4.0), periodic=True)
        pos = np.array([[0.3, 0.4], [1.2, 0.9], [0.1, 1.7]])
        f = block_average(pos, np.array([1, 1, 1]), 3, 2.0, box)
        assert f.values[0, 0, 0] == pytest.approx(3 / 4)
        assert f.values[0, 0, 1] == 0

    def test_constant_field_preserved(self):
        box = Box((8.0, 8.0), periodic=True)
        fine = DensityField.constant(box, 1.0, np.array([0.7, 0.1, 0.2]))
        coarse = block_average_field(fine, 4.0)
        assert np.allclose(coarse.values, [0.7, 0.1, 0.2])

    def test_mass_conservation(self, rng):
        box = Box((8.0, 8.0), periodic=True)
        pos = rng.random((50, 2)) * 8.0
        spins = rng.integers(1, 4, 50)
        f = block_average(pos, spins, 3, 2.0, box)
        assert np.allclose(f.total_per_species(),
                           np.bincount(spins, minlength=4)[1:])

    def test_species_permutation_commutes(self, rng):
        box = Box((8.0, 8.0), periodic=True)
        pos = rng.random((40, 2)) * 8.0
        spins = rng.integers(1, 4, 40)
        perm = np.array([3, 1, 2])   # s -> perm[s-1]
        f1 = block_average(pos, perm[spins - 1], 3, 2.0, box)
        f2 = block_average(pos, spins, 3, 2.0, box)
        # permuting species then averaging == averaging then permuting slots
        inv = np.argsort(perm)
        assert np.allclose(f1.values, f2.values[..., inv])

    def test_translation_commutes(self, rng):
        box = Box((8.0, 8.0), periodic=True)
        pos = rng.random((40, 2)) * 8.0
        spins = rng.integers(1, 4, 40)
        f1 = block_average(box.wrap_point(pos + [2.0, 4.0]), spins, 3, 2.0, box)
        f2 = block_average(pos, spins, 3, 2.0, box)
        assert np.allclose(f1.values, np.roll(f2.values, (1, 2), axis=(0, 1)))

    def test_incompatible_mesh_rejected(self):
        box = Box((4.0, 4.0), periodic=True)
        with pytest.raises(ValueError):
            box.ncells(3.0)
        fine = DensityField.constant(box, 1.0, np.array([1.0]))
        with pytest.raises(ValueError):
            block_average_field(fine, 1.5)


class TestCellSetSerialization:
    def test_json_roundtrip(self):
        A = CellSet(2.0, frozenset({(0, 1), (3, -2)}))
        assert CellSet.from_json(A.to_json()) == A


class TestBoxValidation:
    def test_dimension_rejected(self):
        with pytest.raises(ValueError):
            Box((4.0,))
        with pytest.raises(ValueError):
            Box((4.0, 4.0, 4.0, 4.0))

    def test_d3_supported(self):
        box = Box((4.0, 4.0, 4.0), periodic=True)
        assert box.ncells(2.0) == (2, 2, 2)
        A = CellSet(2.0, frozenset({(0, 0, 0)}))
        assert len(delta_out(A, box)) == 7   # torus with 8 cells in total
