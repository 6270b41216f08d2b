# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pair-interaction engine (hot kernels of the particle simulator).

Same contract as engine_py.PairEngine: cell-grid neighbor queries, cubic
spline evaluation of the radial pair potential, incremental per-particle
per-species interaction sums, and weighted ghost atoms for density collars.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()

BACKEND = "cython"


cdef class PairEngine:
    cdef public int d, S
    cdef public int _n
    cdef bint periodic
    cdef double rmax, h
    cdef double[::1] sides
    cdef double[:, ::1] coeffs
    cdef double[:, ::1] pos
    cdef long[::1] spin
    cdef double[:, ::1] fields
    cdef long[::1] pcell

    # particle grid (linked lists)
    cdef long[::1] ncell
    cdef double[::1] csize
    cdef long[::1] head
    cdef long[::1] nxt
    cdef long[::1] prv
    cdef long total_cells

    # ghost atoms (static CSR grid)
    cdef double[:, ::1] gpos
    cdef double[:, ::1] gw
    cdef long[::1] gncell
    cdef double[::1] gcsize
    cdef double[::1] glo
    cdef long[::1] gstart
    cdef long[::1] gitems
    cdef long gtotal_cells
    cdef bint has_ghosts

    # scratch
    cdef long[::1] scratch_cells

    def __init__(self, sides, periodic, n_species, rmax, spline_h,
                 spline_coeffs, ghost_pos=None, ghost_w=None, capacity=64):
        cdef int k
        self.sides = np.asarray(sides, dtype=np.float64).copy()
        self.d = self.sides.shape[0]
        self.periodic = bool(periodic)
        self.S = int(n_species)
        self.rmax = float(rmax)
        self.h = float(spline_h)
        self.coeffs = np.ascontiguousarray(spline_coeffs, dtype=np.float64)

        self._n = 0
        cap = max(int(capacity), 8)
        self.pos = np.zeros((cap, self.d))
        self.spin = np.zeros(cap, dtype=np.int64)
        self.fields = np.zeros((cap, self.S))
        self.pcell = np.zeros(cap, dtype=np.int64)
        self.nxt = np.full(cap, -1, dtype=np.int64)
        self.prv = np.full(cap, -1, dtype=np.int64)

        ncell = np.maximum((np.asarray(sides) / self.rmax).astype(np.int64), 1)
        self.ncell = ncell
        self.csize = np.asarray(sides, dtype=np.float64) / ncell
        if self.periodic and np.any(np.asarray(sides) < 2 * self.rmax):
            raise ValueError("periodic box smaller than twice the "
                             "interaction range (minimum image fails)")
        self.total_cells = int(np.prod(ncell))
        self.head = np.full(self.total_cells, -1, dtype=np.int64)
        self.scratch_cells = np.zeros(27 if self.d == 3 else 9,
                                      dtype=np.int64)

        if ghost_pos is None or len(ghost_pos) == 0:
            self.has_ghosts = False
            self.gpos = np.zeros((0, self.d))
            self.gw = np.zeros((0, self.S))
            self.gncell = np.ones(self.d, dtype=np.int64)
            self.gcsize = np.ones(self.d)
            self.glo = np.zeros(self.d)
            self.gstart = np.zeros(2, dtype=np.int64)
            self.gitems = np.zeros(0, dtype=np.int64)
            self.gtotal_cells = 1
        else:
            gp = np.asarray(ghost_pos, dtype=np.float64).reshape(-1, self.d)
            gwArr = np.asarray(ghost_w, dtype=np.float64).reshape(-1, self.S)
            self.has_ghosts = True
            self.gpos = gp.copy()
            self.gw = gwArr.copy()
            glo = gp.min(axis=0) - 1e-9
            ext = gp.max(axis=0) - glo + 1e-9
            gnc = np.maximum((ext / self.rmax).astype(np.int64), 1)
            self.glo = glo
            self.gncell = gnc
            self.gcsize = ext / gnc
            self.gtotal_cells = int(np.prod(gnc))
            ids = np.zeros(gp.shape[0], dtype=np.int64)
            for g in range(gp.shape[0]):
                lin = 0
                for k in range(self.d):
                    idx = int((gp[g, k] - glo[k]) / self.gcsize[k])
                    idx = min(max(idx, 0), int(gnc[k]) - 1)
                    lin = lin * int(gnc[k]) + idx
                ids[g] = lin
            order = np.argsort(ids, kind="stable")
            self.gitems = order.astype(np.int64).copy()
            counts = np.bincount(ids, minlength=self.gtotal_cells)
            self.gstart = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    # -- helpers -------------------------------------------------------------

    cdef inline long _cell_id(self, double* r) nogil:
        cdef long lin = 0
        cdef int k
        cdef long idx
        for k in range(self.d):
            idx = <long> floor(r[k] / self.csize[k])
            if idx < 0:
                idx = 0
            if idx >= self.ncell[k]:
                idx = self.ncell[k] - 1
            lin = lin * self.ncell[k] + idx
        return lin

    cdef inline double _v_of(self, double dist) nogil:
        cdef long k
        cdef double w
        if dist >= self.rmax:
            return 0.0
        k = <long> (dist / self.h)
        if k > self.coeffs.shape[0] - 1:
            k = self.coeffs.shape[0] - 1
        w = dist - k * self.h
        return ((self.coeffs[k, 0] * w + self.coeffs[k, 1]) * w
                + self.coeffs[k, 2]) * w + self.coeffs[k, 3]

    cdef inline double _dist(self, double* a, double* b) nogil:
        cdef double acc = 0.0, diff
        cdef int k
        for k in range(self.d):
            diff = b[k] - a[k]
            if self.periodic:
                diff -= self.sides[k] * floor(diff / self.sides[k] + 0.5)
            acc += diff * diff
        return sqrt(acc)

    cdef long _collect_cells(self, double* r) nogil:
        """Fill scratch_cells with the (deduplicated) neighbor cell ids."""
        cdef long base[3]
        cdef long vals[3][3]
        cdef long nvals[3]
        cdef int k, m
        cdef long v, n, count, lin, i0, i1, i2
        for k in range(self.d):
            v = <long> floor(r[k] / self.csize[k])
            if v < 0:
                v = 0
            if v >= self.ncell[k]:
                v = self.ncell[k] - 1
            base[k] = v
        for k in range(self.d):
            n = self.ncell[k]
            nvals[k] = 0
            if n >= 3 or not self.periodic:
                for m in range(-1, 2):
                    v = base[k] + m
                    if self.periodic:
                        v = v % n
                        if v < 0:
                            v += n
                    else:
                        if v < 0 or v >= n:
                            continue
                    # dedupe
                    if nvals[k] > 0 and (v == vals[k][0] or
                                         (nvals[k] > 1 and v == vals[k][1])):
                        continue
                    vals[k][nvals[k]] = v
                    nvals[k] += 1
            else:
                for m in range(n):
                    vals[k][m] = m
                nvals[k] = n
        count = 0
        if self.d == 2:
            for i0 in range(nvals[0]):
                for i1 in range(nvals[1]):
                    lin = vals[0][i0] * self.ncell[1] + vals[1][i1]
                    self.scratch_cells[count] = lin
                    count += 1
        else:
            for i0 in range(nvals[0]):
                for i1 in range(nvals[1]):
                    for i2 in range(nvals[2]):
                        lin = (vals[0][i0] * self.ncell[1] + vals[1][i1]) \
                            * self.ncell[2] + vals[2][i2]
                        self.scratch_cells[count] = lin
                        count += 1
        return count

    cdef void _grid_insert(self, long i, long cid) nogil:
        cdef long old = self.head[cid]
        self.pcell[i] = cid
        self.nxt[i] = old
        self.prv[i] = -1
        if old >= 0:
            self.prv[old] = i
        self.head[cid] = i

    cdef void _grid_remove(self, long i) nogil:
        cdef long cid = self.pcell[i]
        if self.prv[i] >= 0:
            self.nxt[self.prv[i]] = self.nxt[i]
        else:
            self.head[cid] = self.nxt[i]
        if self.nxt[i] >= 0:
            self.prv[self.nxt[i]] = self.prv[i]
        self.nxt[i] = -1
        self.prv[i] = -1

    def _grow(self):
        cap = self.pos.shape[0] * 2
        pos = np.zeros((cap, self.d)); pos[:self._n] = np.asarray(self.pos)[:self._n]
        spin = np.zeros(cap, dtype=np.int64); spin[:self._n] = np.asarray(self.spin)[:self._n]
        fields = np.zeros((cap, self.S)); fields[:self._n] = np.asarray(self.fields)[:self._n]
        pcell = np.zeros(cap, dtype=np.int64); pcell[:self._n] = np.asarray(self.pcell)[:self._n]
        nxt = np.full(cap, -1, dtype=np.int64); nxt[:self._n] = np.asarray(self.nxt)[:self._n]
        prv = np.full(cap, -1, dtype=np.int64); prv[:self._n] = np.asarray(self.prv)[:self._n]
        self.pos = pos; self.spin = spin; self.fields = fields
        self.pcell = pcell; self.nxt = nxt; self.prv = prv

    # -- public API ------------------------------------------------------------

    @property
    def n(self):
        return self._n

    def positions(self):
        return np.asarray(self.pos)[:self._n].copy()

    def spins(self):
        return np.asarray(self.spin)[:self._n].copy()

    def cached_fields(self):
        return np.asarray(self.fields)[:self._n].copy()

    def cached_field(self, long i):
        return np.asarray(self.fields)[i].copy()

    def ghost_field(self, r):
        out = np.zeros(self.S)
        cdef double[::1] rv = np.asarray(r, dtype=np.float64)
        cdef double[::1] ov = out
        self._ghost_field(&rv[0], &ov[0])
        return out

    cdef void _ghost_field(self, double* r, double* out) nogil:
        cdef long base[3]
        cdef int k
        cdef long g, gi, lin, i0, i1, i2, lo0, hi0, lo1, hi1, lo2, hi2
        cdef double dist, vv, acc
        cdef int s
        if not self.has_ghosts:
            return
        for k in range(self.d):
            base[k] = <long> floor((r[k] - self.glo[k]) / self.gcsize[k])
        lo0 = base[0] - 1 if base[0] - 1 > 0 else 0
        hi0 = base[0] + 1 if base[0] + 1 < self.gncell[0] - 1 else self.gncell[0] - 1
        lo1 = base[1] - 1 if base[1] - 1 > 0 else 0
        hi1 = base[1] + 1 if base[1] + 1 < self.gncell[1] - 1 else self.gncell[1] - 1
        if self.d == 2:
            for i0 in range(lo0, hi0 + 1):
                for i1 in range(lo1, hi1 + 1):
                    lin = i0 * self.gncell[1] + i1
                    for gi in range(self.gstart[lin], self.gstart[lin + 1]):
                        g = self.gitems[gi]
                        dist = self._gdist(r, g)
                        if dist < self.rmax:
                            vv = self._v_of(dist)
                            for s in range(self.S):
                                out[s] += vv * self.gw[g, s]
        else:
            lo2 = base[2] - 1 if base[2] - 1 > 0 else 0
            hi2 = base[2] + 1 if base[2] + 1 < self.gncell[2] - 1 else self.gncell[2] - 1
            for i0 in range(lo0, hi0 + 1):
                for i1 in range(lo1, hi1 + 1):
                    for i2 in range(lo2, hi2 + 1):
                        lin = (i0 * self.gncell[1] + i1) * self.gncell[2] + i2
                        for gi in range(self.gstart[lin], self.gstart[lin + 1]):
                            g = self.gitems[gi]
                            dist = self._gdist(r, g)
                            if dist < self.rmax:
                                vv = self._v_of(dist)
                                for s in range(self.S):
                                    out[s] += vv * self.gw[g, s]

    cdef inline double _gdist(self, double* r, long g) nogil:
        cdef double acc = 0.0, diff
        cdef int k
        for k in range(self.d):
            diff = self.gpos[g, k] - r[k]
            acc += diff * diff
        return sqrt(acc)

    def field_at(self, r, long exclude=-1):
        out = np.zeros(self.S)
        cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
        cdef double[::1] ov = out
        self._field_at(&rv[0], exclude, &ov[0])
        return out

    cdef void _field_at(self, double* r, long exclude, double* out) nogil:
        cdef long m, c, j
        cdef double dist
        self._ghost_field(r, out)
        m = self._collect_cells(r)
        for c in range(m):
            j = self.head[self.scratch_cells[c]]
            while j >= 0:
                if j != exclude:
                    dist = self._dist(r, &self.pos[j, 0])
                    if dist < self.rmax:
                        out[self.spin[j] - 1] += self._v_of(dist)
                j = self.nxt[j]

    def total_pair_energy(self):
        cdef double total = 0.0
        cdef long i
        cdef int s, si
        cdef double cross, gcross
        buf = np.zeros(self.S)
        gbuf = np.zeros(self.S)
        cdef double[::1] bv = buf
        cdef double[::1] gv = gbuf
        for i in range(self._n):
            for s in range(self.S):
                bv[s] = 0.0
                gv[s] = 0.0
            self._field_at(&self.pos[i, 0], i, &bv[0])
            self._ghost_field(&self.pos[i, 0], &gv[0])
            si = self.spin[i] - 1
            cross = 0.0
            gcross = 0.0
            for s in range(self.S):
                if s != si:
                    cross += bv[s]
                    gcross += gv[s]
            total += 0.5 * (cross - gcross) + gcross
        return total

    def fields_fresh(self):
        out = np.zeros((self._n, self.S))
        cdef double[:, ::1] ov = out
        cdef long i
        for i in range(self._n):
            self._field_at(&self.pos[i, 0], i, &ov[i, 0])
        return out

    cdef void _apply_contribution(self, double* r, long spin_val,
                                  double sign) nogil:
        cdef long m, c, j
        cdef double dist
        m = self._collect_cells(r)
        for c in range(m):
            j = self.head[self.scratch_cells[c]]
            while j >= 0:
                dist = self._dist(r, &self.pos[j, 0])
                if dist < self.rmax:
                    self.fields[j, spin_val - 1] += sign * self._v_of(dist)
                j = self.nxt[j]

    def insert(self, r, long s):
        cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
        if self._n == self.pos.shape[0]:
            self._grow()
        cdef long i = self._n
        cdef int k
        f = np.zeros(self.S)
        cdef double[::1] fv = f
        self._field_at(&rv[0], -1, &fv[0])
        self._apply_contribution(&rv[0], s, 1.0)
        for k in range(self.d):
            self.pos[i, k] = rv[k]
        self.spin[i] = s
        for k in range(self.S):
            self.fields[i, k] = fv[k]
        self._grid_insert(i, self._cell_id(&rv[0]))
        self._n += 1
        return i

    def remove(self, long i):
        cdef long last
        cdef int k
        r = np.asarray(self.pos)[i].copy()
        cdef double[::1] rv = r
        cdef long s = self.spin[i]
        self._grid_remove(i)
        self._n -= 1
        last = self._n
        if i != last:
            self._grid_remove(last)
            for k in range(self.d):
                self.pos[i, k] = self.pos[last, k]
            self.spin[i] = self.spin[last]
            for k in range(self.S):
                self.fields[i, k] = self.fields[last, k]
            self._grid_insert(i, self._cell_id(&self.pos[i, 0]))
        self._apply_contribution(&rv[0], s, -1.0)

    def move(self, long i, r_new):
        cdef double[::1] rv = np.ascontiguousarray(r_new, dtype=np.float64)
        cdef long s = self.spin[i]
        cdef int k
        r_old = np.asarray(self.pos)[i].copy()
        cdef double[::1] ro = r_old
        self._grid_remove(i)
        self._apply_contribution(&ro[0], s, -1.0)
        f = np.zeros(self.S)
        cdef double[::1] fv = f
        self._field_at(&rv[0], i, &fv[0])
        for k in range(self.d):
            self.pos[i, k] = rv[k]
        self._apply_contribution(&rv[0], s, 1.0)
        for k in range(self.S):
            self.fields[i, k] = fv[k]
        self._grid_insert(i, self._cell_id(&rv[0]))

    def flip(self, long i, long s_new):
        cdef long s_old = self.spin[i]
        cdef long m, c, j
        cdef double dist, vv
        if s_new == s_old:
            return
        cdef double* r = &self.pos[i, 0]
        m = self._collect_cells(r)
        for c in range(m):
            j = self.head[self.scratch_cells[c]]
            while j >= 0:
                if j != i:
                    dist = self._dist(r, &self.pos[j, 0])
                    if dist < self.rmax:
                        vv = self._v_of(dist)
                        self.fields[j, s_old - 1] -= vv
                        self.fields[j, s_new - 1] += vv
                j = self.nxt[j]
        self.spin[i] = s_new
