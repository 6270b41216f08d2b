"""Independent oracles: brute-force searches and direct summations that
never touch the solver paths they check."""

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from pottsgas import meanfield as mf


def uniform_minimum(beta, lam, S):
    """Grid+refine minimum of the free energy over uniform vectors."""
    a_grid = np.geomspace(1e-5, 60.0, 6000)
    vals = np.array([mf.mf_free_energy(np.full(S, a), beta, lam)
                     for a in a_grid])
    i = int(np.argmin(vals))
    lo = a_grid[max(i - 1, 0)]
    hi = a_grid[min(i + 1, a_grid.size - 1)]
    res = minimize_scalar(
        lambda a: mf.mf_free_energy(np.full(S, a), beta, lam),
        bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


def _reduced_free_energy(c, b, beta, lam, S):
    v = np.full(S, b)
    v[0] = c
    return mf.mf_free_energy(v, beta, lam)


def ordered_minimum(beta, lam, S, sep=2.0):
    """Grid+refine ordered local minimum (c well above b), or None."""
    c_grid = np.geomspace(0.05, 80.0, 220)
    b_grid = np.geomspace(1e-7, 3.0, 220)
    C, B = np.meshgrid(c_grid, b_grid, indexing="ij")
    mask = C > sep * B
    tot = C + (S - 1) * B
    cross = 0.5 * (tot ** 2 - C ** 2 - (S - 1) * B ** 2)
    ent = -(C * (np.log(C) - 1) + (S - 1) * B * (np.log(B) - 1))
    F = cross - lam * tot - ent / beta
    F = np.where(mask, F, np.inf)
    i, j = np.unravel_index(np.argmin(F), F.shape)
    if not np.isfinite(F[i, j]):
        return None
    res = minimize(lambda x: _reduced_free_energy(np.exp(x[0]), np.exp(x[1]),
                                                  beta, lam, S),
                   x0=[np.log(c_grid[i]), np.log(b_grid[j])],
                   method="Nelder-Mead",
                   options={"xatol": 1e-13, "fatol": 1e-15,
                            "maxiter": 4000})
    c, b = float(np.exp(res.x[0])), float(np.exp(res.x[1]))
    if not c > sep * b:
        return None
    return c, b, float(res.fun)


def lambda_beta(beta, S, lo=-2.0, hi=12.0, tol=1e-7):
    """Bisection on (ordered minus disordered) branch minima, oracle side."""
    def g(lam):
        ordm = ordered_minimum(beta, lam, S)
        if ordm is None:
            return None
        _, f_dis = uniform_minimum(beta, lam, S)
        return ordm[2] - f_dis

    # march up until the ordered branch exists and g becomes negative
    lam = lo
    glo = None
    while lam <= hi:
        val = g(lam)
        if val is not None:
            if val < 0:
                break
            glo = (lam, val)
        lam += 0.25
    else:
        raise RuntimeError("oracle found no crossing")
    if glo is None:
        raise RuntimeError("oracle never saw the ordered branch above")
    a, b = glo[0], lam
    while b - a > tol:
        m = 0.5 * (a + b)
        val = g(m)
        if val is None or val > 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def count_per_cell(positions, spins, S, mesh, nx):
    """Direct per-cell, per-species counting (no bincount tricks)."""
    out = np.zeros(tuple(nx) + (S,))
    for r, s in zip(positions, spins):
        idx = tuple(int(np.floor(ri / mesh)) for ri in r)
        out[idx + (s - 1,)] += 1
    return out


def pair_energy_direct(positions, spins, table, lam, sides=None):
    """O(n^2) pair sum with optional minimum image (no cell lists)."""
    n = len(spins)
    total = -lam * n
    for i in range(n):
        for j in range(i + 1, n):
            if spins[i] == spins[j]:
                continue
            diff = positions[j] - positions[i]
            if sides is not None:
                diff = diff - sides * np.round(diff / sides)
            total += float(table(np.array([np.linalg.norm(diff)]))[0])
    return total


def excess_energy_direct(omega_sites, rho_k, lam, disc, window_shape,
                         periodic, valid=None):
    """Brute-force double sum for the surface-energy term.

    omega_sites: boolean window mask; chi = rho_k outside; R computed by
    explicit offset sums (no scipy convolve)."""
    d = len(window_shape)
    S = rho_k.size
    reach = disc.j_reach
    j = disc.j_table
    gam = disc.gamma
    R = np.zeros(window_shape + (S,))
    for x in np.ndindex(*window_shape):
        acc = np.zeros(S)
        for off in np.ndindex(*j.shape):
            y = tuple(x[k] + off[k] - reach for k in range(d))
            if periodic:
                y = tuple(y[k] % window_shape[k] for k in range(d))
            elif any(c < 0 or c >= window_shape[k]
                     for k, c in enumerate(y)):
                continue
            if not omega_sites[y]:
                acc += j[off] * rho_k
        R[x] = gam ** (-d / 2.0) * acc

    def edens(v):
        tot = v.sum()
        return 0.5 * (tot * tot - float(v @ v)) - lam * tot

    e_ref = edens(rho_k)
    first = 0.0
    second = 0.0
    for x in np.ndindex(*window_shape):
        if omega_sites[x]:
            second += edens(R[x])
        elif valid is None or valid[x]:
            first += e_ref - edens(R[x])
    return gam ** (-d / 2.0) * (first - second)
