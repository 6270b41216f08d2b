"""Pure-NumPy pair-interaction engine (fallback backend).

Maintains a particle configuration with a uniform cell grid for O(1)
neighborhood queries and per-particle, per-species interaction sums

    F[i, s] = sum_{j != i, spin_j = s} V(|r_i - r_j|) + ghost_s(r_i),

where V is a tabulated radial pair potential (uniform-knot cubic spline)
and the ghosts are fixed weighted atoms realizing a density collar.  The
Metropolis driver reads these sums to form energy differences and calls
insert/remove/move/flip, which update the sums incrementally.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


class PairEngine:
    def __init__(self, sides, periodic, n_species, rmax, spline_h,
                 spline_coeffs, ghost_pos=None, ghost_w=None, capacity=64):
        self.sides = np.asarray(sides, dtype=float)
        self.d = self.sides.size
        self.periodic = bool(periodic)
        self.S = int(n_species)
        self.rmax = float(rmax)
        self.h = float(spline_h)
        self.coeffs = np.asarray(spline_coeffs, dtype=float)

        self._n = 0
        self._pos = np.zeros((capacity, self.d))
        self._spin = np.zeros(capacity, dtype=np.int64)
        self._fields = np.zeros((capacity, self.S))
        self._pcell = np.zeros(capacity, dtype=np.int64)

        # particle grid covers the box; cell side >= rmax unless the box is
        # smaller than one interaction range (then everything is a neighbor)
        self._ncell = np.maximum((self.sides / self.rmax).astype(int), 1)
        self._csize = self.sides / self._ncell
        if self.periodic and np.any(self.sides < 2 * self.rmax):
            raise ValueError("periodic box smaller than twice the "
                             "interaction range (minimum image fails)")
        self._cells = {}          # linear cell id -> set of particle indices

        if ghost_pos is None or len(ghost_pos) == 0:
            self._gpos = np.zeros((0, self.d))
            self._gw = np.zeros((0, self.S))
            self._gcells = {}
            self._glo = np.zeros(self.d)
            self._gncell = np.ones(self.d, dtype=int)
        else:
            self._gpos = np.asarray(ghost_pos, dtype=float).reshape(-1, self.d)
            self._gw = np.asarray(ghost_w, dtype=float).reshape(-1, self.S)
            self._glo = self._gpos.min(axis=0) - 1e-9
            ext = self._gpos.max(axis=0) - self._glo + 1e-9
            self._gncell = np.maximum((ext / self.rmax).astype(int), 1)
            self._gcsize = ext / self._gncell
            self._gcells = {}
            for g, p in enumerate(self._gpos):
                cid = self._glin(((p - self._glo) / self._gcsize).astype(int),
                                 self._gncell)
                self._gcells.setdefault(cid, []).append(g)
            for cid in self._gcells:
                self._gcells[cid] = np.array(self._gcells[cid], dtype=int)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    def positions(self) -> np.ndarray:
        return self._pos[:self._n].copy()

    def spins(self) -> np.ndarray:
        return self._spin[:self._n].copy()

    def cached_fields(self) -> np.ndarray:
        return self._fields[:self._n].copy()

    def cached_field(self, i) -> np.ndarray:
        return self._fields[i].copy()

    @staticmethod
    def _glin(idx, ncell):
        lin = 0
        for k in range(len(ncell)):
            lin = lin * int(ncell[k]) + int(idx[k])
        return lin

    def _cell_id(self, r) -> int:
        idx = np.minimum((r / self._csize).astype(int), self._ncell - 1)
        idx = np.maximum(idx, 0)
        return self._glin(idx, self._ncell)

    def _neighbor_cells(self, r):
        base = np.minimum((r / self._csize).astype(int), self._ncell - 1)
        base = np.maximum(base, 0)
        axes = []
        for k in range(self.d):
            n = int(self._ncell[k])
            if n >= 3 or not self.periodic:
                vals = [base[k] - 1, base[k], base[k] + 1]
                if self.periodic:
                    vals = [v % n for v in vals]
                else:
                    vals = [v for v in vals if 0 <= v < n]
                axes.append(sorted(set(vals)))
            else:
                axes.append(list(range(n)))
        out = []
        idx = np.zeros(self.d, dtype=int)

        def rec(k):
            if k == self.d:
                out.append(self._glin(idx, self._ncell))
                return
            for v in axes[k]:
                idx[k] = v
                rec(k + 1)
        rec(0)
        return out

    def _grow(self):
        cap = self._pos.shape[0] * 2
        for name in ("_pos", "_fields"):
            arr = getattr(self, name)
            new = np.zeros((cap,) + arr.shape[1:])
            new[:self._n] = arr[:self._n]
            setattr(self, name, new)
        for name in ("_spin", "_pcell"):
            arr = getattr(self, name)
            new = np.zeros(cap, dtype=arr.dtype)
            new[:self._n] = arr[:self._n]
            setattr(self, name, new)

    # -- potential -----------------------------------------------------------

    def _v_of(self, dist: np.ndarray) -> np.ndarray:
        out = np.zeros_like(dist)
        inside = dist < self.rmax
        k = np.minimum((dist[inside] / self.h).astype(int),
                       self.coeffs.shape[0] - 1)
        w = dist[inside] - k * self.h
        c = self.coeffs[k]
        out[inside] = ((c[:, 0] * w + c[:, 1]) * w + c[:, 2]) * w + c[:, 3]
        return out

    def _dist(self, r, pts) -> np.ndarray:
        diff = pts - r
        if self.periodic:
            diff -= self.sides * np.round(diff / self.sides)
        return np.sqrt((diff * diff).sum(axis=1))

    # -- queries ---------------------------------------------------------------

    def _neighbor_indices(self, r) -> np.ndarray:
        ids = []
        for cid in self._neighbor_cells(r):
            bucket = self._cells.get(cid)
            if bucket:
                ids.extend(bucket)
        return np.fromiter(ids, dtype=int, count=len(ids))

    def ghost_field(self, r) -> np.ndarray:
        out = np.zeros(self.S)
        if self._gpos.shape[0] == 0:
            return out
        gidx = []
        base = np.floor((np.asarray(r, float) - self._glo)
                        / self._gcsize).astype(int)
        for off in np.ndindex(*(3,) * self.d):
            idx = base + np.array(off) - 1
            if np.any(idx < 0) or np.any(idx >= self._gncell):
                continue
            bucket = self._gcells.get(self._glin(idx, self._gncell))
            if bucket is not None:
                gidx.append(bucket)
        if not gidx:
            return out
        gidx = np.concatenate(gidx)
        pts = self._gpos[gidx]
        diff = pts - r   # ghosts never wrap
        vv = self._v_of(np.sqrt((diff * diff).sum(axis=1)))
        return vv @ self._gw[gidx]

    def field_at(self, r, exclude=-1) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = self.ghost_field(r)
        idx = self._neighbor_indices(r)
        if idx.size:
            if exclude >= 0:
                idx = idx[idx != exclude]
            if idx.size:
                vv = self._v_of(self._dist(r, self._pos[idx]))
                np.add.at(out, self._spin[idx] - 1, vv)
        return out

    def total_pair_energy(self) -> float:
        """(1/2) sum_{i != j} V |spin mismatch| + ghost cross terms."""
        total = 0.0
        for i in range(self._n):
            f = self.field_at(self._pos[i], exclude=i)
            gf = self.ghost_field(self._pos[i])
            si = self._spin[i] - 1
            cross = f.sum() - f[si]
            gcross = gf.sum() - gf[si]
            total += 0.5 * (cross - gcross) + gcross
        return total

    def fields_fresh(self) -> np.ndarray:
        out = np.zeros((self._n, self.S))
        for i in range(self._n):
            out[i] = self.field_at(self._pos[i], exclude=i)
        return out

    # -- updates -----------------------------------------------------------------

    def _apply_contribution(self, r, spin, sign):
        """Add/remove one particle's contribution to neighbor caches."""
        idx = self._neighbor_indices(r)
        if idx.size == 0:
            return
        vv = sign * self._v_of(self._dist(r, self._pos[idx]))
        self._fields[idx, spin - 1] += vv

    def insert(self, r, s) -> int:
        r = np.asarray(r, dtype=float)
        if self._n == self._pos.shape[0]:
            self._grow()
        f = self.field_at(r)
        self._apply_contribution(r, s, +1.0)
        i = self._n
        self._pos[i] = r
        self._spin[i] = s
        self._fields[i] = f
        cid = self._cell_id(r)
        self._pcell[i] = cid
        self._cells.setdefault(cid, set()).add(i)
        self._n += 1
        return i

    def remove(self, i):
        r = self._pos[i].copy()
        s = int(self._spin[i])
        self._cells[self._pcell[i]].discard(i)
        self._n -= 1
        last = self._n
        if i != last:
            self._cells[self._pcell[last]].discard(last)
            self._pos[i] = self._pos[last]
            self._spin[i] = self._spin[last]
            self._fields[i] = self._fields[last]
            self._pcell[i] = self._pcell[last]
            self._cells[self._pcell[i]].add(i)
        self._apply_contribution(r, s, -1.0)

    def move(self, i, r_new):
        r_new = np.asarray(r_new, dtype=float)
        s = int(self._spin[i])
        r_old = self._pos[i].copy()
        # detach, update neighbors, re-attach
        self._cells[self._pcell[i]].discard(i)
        self._apply_contribution(r_old, s, -1.0)
        f = self.field_at(r_new, exclude=i)
        self._pos[i] = r_new
        self._apply_contribution(r_new, s, +1.0)
        # the contribution pass included i itself via the grid; it was
        # detached, so re-add to the grid afterwards
        self._fields[i] = f
        cid = self._cell_id(r_new)
        self._pcell[i] = cid
        self._cells.setdefault(cid, set()).add(i)

    def flip(self, i, s_new):
        s_old = int(self._spin[i])
        if s_new == s_old:
            return
        r = self._pos[i]
        idx = self._neighbor_indices(r)
        idx = idx[idx != i]
        if idx.size:
            vv = self._v_of(self._dist(r, self._pos[idx]))
            self._fields[idx, s_old - 1] -= vv
            self._fields[idx, s_new - 1] += vv
        self._spin[i] = s_new
