"""Self-contained property suite behind `pottsgas validate`.

Each check returns (name, passed, detail).  The suite covers the structural
identities that hold at any accessible parameter point: lattice boundary
calculus, mean-field minimizer structure, kernel normalization, indicator
round trips, functional identities, and simulator reversibility.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Box, CellSet, DensityField, block_average, delta_in, delta_out
from .indicators import ScaleParams, eta_field, extract_contours, synthesize_eta, theta_field
from .kernels import KacKernel, build_discrete_kernel, pair_potential_table


def _mean_field_setup():
    from . import meanfield as mf
    lam_b, ms = mf.critical_lambda(1.0, 3)
    return lam_b, ms


def check_geometry(rng):
    box = Box((16.0, 16.0), periodic=True)
    cells = frozenset(map(tuple, rng.integers(0, 16, size=(30, 2)).tolist()))
    A = CellSet(1.0, cells)
    dout = delta_out(A, box)
    din = delta_in(A, box)
    comp = CellSet(1.0, frozenset(
        (i, j) for i in range(16) for j in range(16)) - A.cells)
    ok = (din.issubset(A)
          and not (dout.cells & A.cells)
          and dout.cells == delta_in(comp, box).cells)
    pos = rng.random((40, 2)) * 16.0
    spins = rng.integers(1, 4, 40)
    f = block_average(pos, spins, 3, 2.0, box)
    ok &= np.allclose(f.total_per_species(), np.bincount(spins, minlength=4)[1:])
    return ok, "boundary calculus and mass conservation"


def check_meanfield(rng, lam_b, ms):
    from . import meanfield as mf
    ok = True
    for k in range(1, 5):
        res = np.max(np.abs(mf.fixed_point_residual(ms.rho(k), 1.0, lam_b)))
        ok &= res < 1e-10 and ms.kappa[k] > 0
    rho = rng.uniform(0.1, 2.0, 3)
    g = mf.mf_gradient(rho, 1.0, lam_b)
    h = 1e-6
    for s in range(3):
        rp, rm = rho.copy(), rho.copy()
        rp[s] += h
        rm[s] -= h
        fd = (mf.mf_free_energy(rp, 1.0, lam_b)
              - mf.mf_free_energy(rm, 1.0, lam_b)) / (2 * h)
        ok &= abs(g[s] - fd) < 1e-6 * max(1.0, abs(fd))
    ok &= 3 * ms.a < ms.b_star and ms.b < ms.c
    return ok, "minimizer structure and analytic gradient"


def check_kernels():
    kern = KacKernel(gamma=0.25, d=2)
    disc = build_discrete_kernel(kern)
    jdev, vdev = disc.row_sum_dev()
    sym = np.max(np.abs(disc.v_table - disc.v_table[::-1, ::-1]))
    ok = jdev < 1e-12 and vdev < 1e-12 and sym < 1e-15
    tab = pair_potential_table(kern)
    ok &= tab(np.array([2.0 / 0.25 + 0.1]))[0] == 0.0
    return ok, f"row sums ({jdev:.1e}, {vdev:.1e}), symmetry, compact support"


def check_indicators(rng, ms):
    box = Box((64.0, 64.0), periodic=True)
    params = ScaleParams(gamma=0.25, ell_minus=4.0, ell_plus=8.0, zeta=1.2)
    n = box.ncells(4.0)
    vals = np.broadcast_to(ms.rho(1), n + (3,)).copy()
    vals[4:12, 4:12] = ms.rho(4)
    f = DensityField(box, 4.0, vals)
    contours = extract_contours(f, params, ms)
    ok = len(contours) == 1 and contours[0].color == 1
    eta2 = synthesize_eta(contours, 1, box, params, 4)
    eta1 = eta_field(f, params, ms)
    ok &= np.array_equal(eta1.labels, eta2.labels)
    th = theta_field(eta1, params)
    lab = th.labels
    for k in range(1, 5):
        for h in range(1, 5):
            if h == k:
                continue
            cells_k = np.argwhere(lab == k)
            for c in map(tuple, cells_k):
                for off in np.ndindex(3, 3):
                    cc = tuple((np.array(c) + np.array(off) - 1) % lab.shape)
                    ok &= lab[cc] != h
    return ok, "contour round trip and label separation"


def check_functional(ms):
    from .functional import FunctionalProblem, f_star, f_star_gradient, t_mu_map
    kern = KacKernel(gamma=0.25, d=2)
    params = ScaleParams(gamma=0.25, ell_minus=4.0, ell_plus=8.0, zeta=1.2)
    box = Box((24.0, 24.0), periodic=True)
    prob = FunctionalProblem.on_torus(box, kern, params, ms, k=1)
    n = box.ncells(prob.mesh)
    rho = np.broadcast_to(ms.rho(1), n + (3,)).copy()
    from . import meanfield as mf
    fval = f_star(rho, prob)
    want = box.volume * mf.mf_free_energy(ms.rho(1), ms.beta, ms.lam)
    ok = abs(fval - want) < 1e-8 * abs(want)
    ok &= np.max(np.abs(f_star_gradient(rho, prob))) < 1e-10
    out = t_mu_map(rho, np.zeros(3), 1.0, prob)
    ok &= np.max(np.abs(out - rho)) < 1e-12
    return ok, "pure-phase identity, gradient zero, fixed point"


def check_simulator(rng, fast=True):
    from .simulator import (BoundaryCondition, ParticleConfig, energy_total,
                            energy_total_integral, gcmc_sweep, make_state)
    kern = KacKernel(gamma=0.25, d=2)
    box = Box((16.0, 16.0), periodic=True)
    st = make_state(box, 3, 1.0, 0.3, kern, seed=123)
    for _ in range(60):
        gcmc_sweep(st, n_moves=40)
    drift = st.cache_consistency()
    ok = drift < 1e-9
    # nonnegativity of the pair part
    q = st.config()
    h = energy_total(q, BoundaryCondition.periodic(), kern, lam=0.3)
    ok &= h + 0.3 * q.n >= -1e-9
    detail = f"cache drift {drift:.1e}"
    if not fast:
        box2 = Box((12.0, 12.0), periodic=False)
        qs = ParticleConfig(box2, rng.random((6, 2)) * 12.0,
                            rng.integers(1, 4, 6), 3)
        e1 = energy_total(qs, BoundaryCondition.none(), kern, 0.3)
        e2 = energy_total_integral(qs, BoundaryCondition.none(), kern, 0.3)
        ok &= abs(e1 - e2) <= 1e-7 * max(1.0, abs(e1))
        detail += f", energy forms {abs(e1 - e2):.1e}"
    return ok, detail


def check_backends():
    from . import _core
    if _core.engine_cy is None:
        return True, "compiled engine absent; python fallback active"
    kern = KacKernel(gamma=0.25, d=2)
    tab = pair_potential_table(kern)
    engines = []
    for name in ("python", "cython"):
        rng = np.random.default_rng(9)
        eng = _core.get_engine(name)((16.0, 16.0), True, 3, tab.rmax, tab.h,
                                     tab.coeffs, None, None)
        for _ in range(400):
            u = rng.random()
            if u < 0.5 or eng.n == 0:
                eng.insert(rng.random(2) * 16.0, int(rng.integers(3)) + 1)
            elif u < 0.75:
                eng.remove(int(rng.integers(eng.n)))
            else:
                eng.move(int(rng.integers(eng.n)), rng.random(2) * 16.0)
        engines.append(eng)
    d_energy = abs(engines[0].total_pair_energy()
                   - engines[1].total_pair_energy())
    d_fields = np.max(np.abs(engines[0].cached_fields()
                             - engines[1].cached_fields()))
    ok = d_energy < 1e-10 and d_fields < 1e-12
    return ok, f"python/cython agreement: dE={d_energy:.1e}"


def run_validation(fast=False):
    rng = np.random.default_rng(20240817)
    lam_b, ms = _mean_field_setup()
    results = []
    for name, fn in (
            ("geometry", lambda: check_geometry(rng)),
            ("meanfield", lambda: check_meanfield(rng, lam_b, ms)),
            ("kernels", check_kernels),
            ("indicators", lambda: check_indicators(rng, ms)),
            ("functional", lambda: check_functional(ms)),
            ("simulator", lambda: check_simulator(rng, fast=fast)),
            ("backends", check_backends)):
        try:
            ok, detail = fn()
        except Exception as err:   # a crash is a failure, not an abort
            ok, detail = False, f"{type(err).__name__}: {err}"
        results.append((name, ok, detail))
    return results
