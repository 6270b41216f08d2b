"""Mean-field thermodynamics of the continuum Potts gas.

The mean-field free energy of a density vector rho = (rho_1, ..., rho_S) is

    F(rho) = (1/2) sum_{s != s'} rho_s rho_{s'} - lambda * sum_s rho_s
             - entropy(rho) / beta,
    entropy(rho) = - sum_s rho_s (log rho_s - 1).

Critical points satisfy the self-consistency equations

    rho_s = exp{ -beta * (sum_{s' != s} rho_{s'} - lambda) }.

For S >= 3 the phase diagram has a critical curve lambda = lambda_beta on
which S + 1 minimizers coexist: S "ordered" ones of the form
(b, ..., c, ..., b) with c > b in one slot, and the symmetric "disordered"
one (a, ..., a).  The total density jumps across the curve: S*a < (S-1)*b + c.
This module locates the minimizers, the critical curve, the convexity
constant kappa* (smallest Hessian eigenvalue), and the branch pressures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "mf_energy",
    "mf_free_energy",
    "mf_entropy",
    "mf_gradient",
    "fixed_point_residual",
    "kappa_star",
    "CriticalPoint",
    "MfMinimizerSet",
    "find_minimizers",
    "solve_uniform",
    "solve_ordered",
    "critical_lambda",
    "mf_pressures",
    "coexistence_window",
    "NoCoexistenceError",
]

DEDUP_TOL = 1e-8
RESIDUAL_TOL = 1e-12


class NoCoexistenceError(RuntimeError):
    """Raised when no ordered branch / no pressure crossing exists."""


def _check_rho(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1:
        raise ValueError("density vector must be one-dimensional")
    if np.any(rho < 0):
        raise ValueError("densities must be nonnegative")
    return rho


def mf_entropy(rho) -> float:
    """entropy(rho) = -sum_s rho_s (log rho_s - 1), with 0 log 0 = 0."""
    rho = _check_rho(rho)
    out = 0.0
    pos = rho > 0
    out = -np.sum(rho[pos] * (np.log(rho[pos]) - 1.0))
    return float(out)


def mf_energy(rho, lam: float) -> float:
    """(1/2) sum_{s != s'} rho_s rho_{s'} - lambda sum_s rho_s."""
    rho = _check_rho(rho)
    tot = rho.sum()
    cross = 0.5 * (tot * tot - np.dot(rho, rho))
    return float(cross - lam * tot)


def mf_free_energy(rho, beta: float, lam: float) -> float:
    """Mean-field free energy; energy minus entropy over beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return mf_energy(rho, lam) - mf_entropy(rho) / beta


def mf_gradient(rho, beta: float, lam: float) -> np.ndarray:
    """Analytic gradient; its zero set is the self-consistency equation."""
    rho = _check_rho(rho)
    if np.any(rho == 0):
        raise ValueError("gradient needs strictly positive densities")
    tot = rho.sum()
    return (tot - rho) - lam + np.log(rho) / beta


def fixed_point_residual(rho, beta: float, lam: float) -> np.ndarray:
    """Componentwise rho_s - exp{-beta (sum_{s' != s} rho_{s'} - lambda)}."""
    rho = _check_rho(rho)
    tot = rho.sum()
    return rho - np.exp(-beta * ((tot - rho) - lam))


def kappa_star(rho, beta: float) -> float:
    """Smallest eigenvalue of the free-energy Hessian at rho.

    The Hessian is L(s,s') = 1/(beta rho_s) on the diagonal and 1 off it;
    a positive value certifies strict local convexity.
    """
    rho = _check_rho(rho)
    if np.any(rho == 0):
        raise ValueError("kappa_star needs strictly positive densities")
    S = rho.size
    L = np.ones((S, S)) - np.eye(S) + np.diag(1.0 / (beta * rho))
    return float(np.linalg.eigvalsh(L)[0])


# ---------------------------------------------------------------------------
# critical-point solvers
# ---------------------------------------------------------------------------

def _fixed_point_map(rho, beta, lam):
    tot = rho.sum()
    return np.exp(-beta * ((tot - rho) - lam))


def _newton_polish(rho, beta, lam, tol=RESIDUAL_TOL, maxiter=50):
    """Full Newton on G(rho) = rho - T(rho); returns None on failure."""
    rho = rho.copy()
    S = rho.size
    for _ in range(maxiter):
        T = _fixed_point_map(rho, beta, lam)
        G = rho - T
        if np.max(np.abs(G)) < tol:
            return rho
        # dT_s/drho_{s'} = -beta T_s for s' != s
        J = np.eye(S) + beta * T[:, None] * (1.0 - np.eye(S))
        try:
            step = np.linalg.solve(J, G)
        except np.linalg.LinAlgError:
            return None
        rho_new = rho - step
        if np.any(rho_new <= 0) or not np.all(np.isfinite(rho_new)):
            # halve until positive
            lam_step = 1.0
            while lam_step > 1e-6:
                lam_step *= 0.5
                rho_new = rho - lam_step * step
                if np.all(rho_new > 0) and np.all(np.isfinite(rho_new)):
                    break
            else:
                return None
        rho = rho_new
    T = _fixed_point_map(rho, beta, lam)
    if np.max(np.abs(rho - T)) < tol:
        return rho
    return None


def _damped_iterate(rho0, beta, lam, theta=0.5, tol=1e-9, maxiter=2000):
    """Damped self-consistency iteration; drops theta to 0.1 on oscillation."""
    rho = np.asarray(rho0, dtype=float).copy()
    prev_res = np.inf
    worse = 0
    for _ in range(maxiter):
        T = _fixed_point_map(rho, beta, lam)
        res = np.max(np.abs(rho - T))
        if not np.isfinite(res):
            return None
        if res < tol:
            return rho
        if res > prev_res:
            worse += 1
            if worse > 5 and theta > 0.1:
                theta = 0.1
                worse = 0
        prev_res = res
        rho = (1.0 - theta) * rho + theta * T
    return rho if np.max(np.abs(fixed_point_residual(rho, beta, lam))) < 1e-6 else None


@dataclass(frozen=True)
class CriticalPoint:
    """A converged critical point of the mean-field free energy."""

    rho: np.ndarray
    free_energy: float
    kind: str           # "global" | "local" | "saddle"
    kappa: float
    residual: float


def _canonical_starts(S: int):
    starts = []
    for a in (0.05, 0.2, 0.5, 1.0, 2.0):
        starts.append(np.full(S, a))
    for c in (0.5, 1.0, 2.0, 4.0):
        for b in (0.01, 0.05, 0.2):
            for pos in range(S):
                v = np.full(S, b)
                v[pos] = c
                starts.append(v)
    return starts


def find_minimizers(beta: float, lam: float, S: int):
    """All distinct critical points reached from the canonical start set.

    Each start runs the damped self-consistency iteration followed by a
    Newton polish to residual < 1e-12; results are deduplicated (max-norm
    1e-8) and sorted by free energy, then lexicographically.  Local minima
    are classified by the sign of kappa*; the lowest free energy present
    gets the "global" flag.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if S < 2:
        raise ValueError("need at least two spin species")
    if S == 2:
        warnings.warn("S=2 is outside the regime the model targets (S >= 3)")

    found = []
    for start in _canonical_starts(S):
        rho = _damped_iterate(start, beta, lam)
        if rho is None:
            continue
        rho = _newton_polish(rho, beta, lam)
        if rho is None:
            continue
        if any(np.max(np.abs(rho - r)) < DEDUP_TOL for r in found):
            continue
        found.append(rho)

    points = []
    for rho in found:
        fe = mf_free_energy(rho, beta, lam)
        kap = kappa_star(rho, beta)
        res = float(np.max(np.abs(fixed_point_residual(rho, beta, lam))))
        kind = "saddle" if kap <= 0 else "local"
        points.append(CriticalPoint(rho, fe, kind, kap, res))

    points.sort(key=lambda p: (p.free_energy, tuple(p.rho)))
    minima = [p for p in points if p.kind != "saddle"]
    if minima:
        best = minima[0].free_energy
        points = [
            CriticalPoint(p.rho, p.free_energy,
                          "global" if p.kind == "local"
                          and p.free_energy < best + 1e-9 else p.kind,
                          p.kappa, p.residual)
            for p in points
        ]
    return points


# -- symmetry-reduced branches ----------------------------------------------

def solve_uniform(beta: float, lam: float, S: int) -> float:
    """The unique uniform solution a of a = exp{-beta((S-1)a - lambda)}."""
    # h(a) = a - exp(...) is strictly increasing with h(0) < 0
    hi = 1.0
    while hi - np.exp(-beta * ((S - 1) * hi - lam)) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("uniform branch bracket failure")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - np.exp(-beta * ((S - 1) * mid - lam)) < 0:
            lo = mid
        else:
            hi = mid
    a = 0.5 * (lo + hi)
    # Newton to machine accuracy
    for _ in range(50):
        T = np.exp(-beta * ((S - 1) * a - lam))
        h = a - T
        hp = 1.0 + beta * (S - 1) * T
        a -= h / hp
        if abs(h) < 1e-15 * max(1.0, a):
            break
    return float(a)


def _exp(x: float) -> float:
    """exp with the argument clamped against overflow."""
    return math.exp(min(x, 700.0))


def _newton_ordered(c, b, beta, lam, S):
    """Newton on the reduced ordered system; None on failure."""
    for _ in range(200):
        T1 = _exp(-beta * ((S - 1) * b - lam))
        T2 = _exp(-beta * ((S - 2) * b + c - lam))
        g1, g2 = c - T1, b - T2
        if max(abs(g1), abs(g2)) < RESIDUAL_TOL:
            return float(c), float(b)
        j11, j12 = 1.0, beta * (S - 1) * T1
        j21, j22 = beta * T2, 1.0 + beta * (S - 2) * T2
        det = j11 * j22 - j12 * j21
        if det == 0 or not math.isfinite(det):
            return None
        dc = (g1 * j22 - g2 * j12) / det
        db = (g2 * j11 - g1 * j21) / det
        t = 1.0
        while t > 1e-8 and (c - t * dc <= 0 or b - t * db <= 0):
            t *= 0.5
        if t <= 1e-8:
            return None
        c, b = c - t * dc, b - t * db
        if not (math.isfinite(c) and math.isfinite(b)):
            return None
    return None


def _accept_ordered(c, b, beta, S, want_minimum):
    if not (c > b and (c - b) > 1e-6 * max(1.0, c)):
        return False
    if want_minimum and kappa_star(_ordered_vector(c, b, S), beta) <= 0:
        return False
    return True


def solve_ordered(beta: float, lam: float, S: int, init=None,
                  want_minimum=True):
    """One ordered solution (c, b) with c in a single slot, or None.

    Damped iteration of the reduced self-consistency map
        c <- exp{-beta((S-1)b - lambda)},  b <- exp{-beta((S-2)b + c - lambda)}
    followed by a Newton polish.  The damped map repels saddles, so with
    ``want_minimum`` only local minima (kappa* > 0) are returned.  Collapse
    onto the uniform branch (c == b) is rejected.  A warm start ``init``
    goes straight to Newton; on failure the multi-start search runs.
    """
    if init is not None:
        sol = _newton_ordered(float(init[0]), float(init[1]), beta, lam, S)
        if sol is not None and _accept_ordered(*sol, beta, S, want_minimum):
            return sol

    c_guess = _exp(beta * lam) if beta * lam < 30 else 1e12
    inits = [
        (c_guess, 1e-3), (0.75 * c_guess, 0.02),
        (4.0, 0.05), (2.0, 0.1), (1.5, 0.2), (8.0, 0.01), (3.0, 0.02),
    ]
    for c0, b0 in inits:
        c, b = float(c0), float(b0)
        theta, prev, worse = 0.5, math.inf, 0
        ok = False
        for _ in range(4000):
            T1 = _exp(-beta * ((S - 1) * b - lam))
            T2 = _exp(-beta * ((S - 2) * b + c - lam))
            res = max(abs(c - T1), abs(b - T2))
            if res < 1e-6:
                ok = True
                break
            if res > prev:
                worse += 1
                if worse > 5 and theta > 0.1:
                    theta, worse = 0.1, 0
            prev = res
            c = (1.0 - theta) * c + theta * T1
            b = (1.0 - theta) * b + theta * T2
        if not ok:
            continue
        sol = _newton_ordered(c, b, beta, lam, S)
        if sol is not None and _accept_ordered(*sol, beta, S, want_minimum):
            return sol
    return None


def _ordered_vector(c: float, b: float, S: int, pos: int = 0) -> np.ndarray:
    v = np.full(S, b)
    v[pos] = c
    return v


def _branch_free_energies(beta, lam, S, ordered_init=None):
    """(F_ord, F_dis, (c, b), a); F_ord is None if no ordered solution."""
    a = solve_uniform(beta, lam, S)
    f_dis = mf_free_energy(np.full(S, a), beta, lam)
    sol = solve_ordered(beta, lam, S, init=ordered_init)
    if sol is None:
        return None, f_dis, None, a
    c, b = sol
    f_ord = mf_free_energy(_ordered_vector(c, b, S), beta, lam)
    return f_ord, f_dis, (c, b), a


@dataclass
class MfMinimizerSet:
    """The S+1 coexisting minimizers at a point of the critical curve.

    Labels 1..S are the ordered states (component k equals c, the rest b);
    label S+1 is the disordered state (all components a).  phi is the common
    free-energy value, b_star = (S-1) b + c the ordered total density, and
    kappa[k] the convexity constant at minimizer k.
    """

    S: int
    beta: float
    lam: float
    a: float
    b: float
    c: float
    phi: float
    kappa: dict = field(default_factory=dict)

    @property
    def b_star(self) -> float:
        return (self.S - 1) * self.b + self.c

    def rho(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.S + 1:
            raise ValueError(f"label {k} out of range")
        if k == self.S + 1:
            return np.full(self.S, self.a)
        return _ordered_vector(self.c, self.b, self.S, pos=k - 1)

    def all_rho(self) -> np.ndarray:
        return np.array([self.rho(k) for k in range(1, self.S + 2)])

    def min_gap(self) -> float:
        """min over pairs of minimizers of the max-norm distance."""
        rhos = self.all_rho()
        gaps = [np.max(np.abs(rhos[i] - rhos[j]))
                for i in range(len(rhos)) for j in range(i + 1, len(rhos))]
        return float(min(gaps))

    def validate(self, residual_tol=1e-10, spread_tol=1e-9):
        """Check the structural invariants; raises ValueError on failure."""
        if not (0 < self.b < self.c):
            raise ValueError("need 0 < b < c")
        if not self.S * self.a < self.b_star:
            raise ValueError("density jump S*a < (S-1)b + c violated")
        fes = []
        for k in range(1, self.S + 2):
            rho = self.rho(k)
            res = np.max(np.abs(fixed_point_residual(rho, self.beta, self.lam)))
            if res > residual_tol:
                raise ValueError(f"minimizer {k} residual {res:.2e}")
            if kappa_star(rho, self.beta) <= 0:
                raise ValueError(f"minimizer {k} is not a local minimum")
            fes.append(mf_free_energy(rho, self.beta, self.lam))
        if max(fes) - min(fes) > spread_tol:
            raise ValueError(f"free-energy spread {max(fes) - min(fes):.2e}")
        return True

    def to_dict(self) -> dict:
        return {
            "S": self.S, "beta": self.beta, "lambda": self.lam,
            "a": self.a, "b": self.b, "c": self.c, "b_star": self.b_star,
            "phi": self.phi,
            "kappa": {str(k): v for k, v in self.kappa.items()},
        }


def _assemble_set(beta, lam, S, a, c, b) -> MfMinimizerSet:
    phi = mf_free_energy(_ordered_vector(c, b, S), beta, lam)
    ms = MfMinimizerSet(S=S, beta=beta, lam=lam, a=a, b=b, c=c, phi=phi)
    for k in range(1, S + 2):
        ms.kappa[k] = kappa_star(ms.rho(k), beta)
    return ms


def ordered_branch_birth(beta: float, S: int, lam_lo=-4.0, lam_hi=20.0,
                         scan_step=0.25, tol=1e-8):
    """(lam*, (c, b)) where the ordered-minimum branch first exists.

    Coarse upward scan for existence, then bisection down on existence
    (monotone in lambda) with warm starts from above.
    """
    lam = lam_lo
    found = None
    while lam <= lam_hi:
        sol = solve_ordered(beta, lam, S)
        if sol is not None:
            found = (lam, sol)
            break
        lam += scan_step
    if found is None:
        raise NoCoexistenceError(
            f"no ordered critical points for beta={beta}, lambda <= {lam_hi}")
    hi, sol_hi = found
    lo = hi - scan_step
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        sol = solve_ordered(beta, mid, S, init=sol_hi)
        if sol is None:
            lo = mid
        else:
            hi, sol_hi = mid, sol
    return hi, sol_hi


def critical_lambda(beta: float, S: int, lam_hi=20.0, gtol=1e-11):
    """Locate lambda_beta where the ordered and disordered branches cross.

    Finds the birth point of the ordered-minimum branch, checks that the
    ordered branch starts above the disordered one there, then bisects on
    g(lambda) = F(ordered) - F(disordered) with warm-started continuation
    (g is strictly decreasing once the density jump holds).  Returns
    (lambda_beta, MfMinimizerSet); raises NoCoexistenceError when there is
    no ordered branch or no crossing.
    """
    lam_birth, sol = ordered_branch_birth(beta, S, lam_hi=lam_hi)

    def g_at(lam, warm):
        f_ord, f_dis, s, _ = _branch_free_energies(beta, lam, S,
                                                   ordered_init=warm)
        if f_ord is None:
            raise NoCoexistenceError(f"ordered branch lost at lambda={lam}")
        return f_ord - f_dis, s

    g_lo, sol = g_at(lam_birth, sol)
    if g_lo <= 0:
        raise NoCoexistenceError(
            f"ordered branch is already below the disordered one at its "
            f"birth (beta={beta}); no crossing")
    lo = lam_birth
    # march upward until g < 0
    step = 0.05
    hi = None
    lam, warm = lo, sol
    while lam < lam_hi:
        lam_next = lam + step
        g, warm = g_at(lam_next, warm)
        if g < 0:
            hi = lam_next
            break
        lo, g_lo, sol = lam_next, g, warm
        lam = lam_next
        step = min(2 * step, 0.5)
    if hi is None:
        raise NoCoexistenceError(
            f"branch free energies do not cross below lambda={lam_hi}")

    g_mid, mid = g_lo, lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid, sol = g_at(mid, sol)
        if abs(g_mid) < gtol:
            break
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
    else:
        raise NoCoexistenceError("bisection for lambda_beta did not converge")

    lam_beta = mid
    a = solve_uniform(beta, lam_beta, S)
    c, b = sol
    ms = _assemble_set(beta, lam_beta, S, a, c, b)
    ms.validate()
    return lam_beta, ms


def continue_ordered(beta: float, S: int, lam_from: float, sol_from,
                     lam_to: float, step=1e-3):
    """Warm-started continuation of the ordered branch in lambda.

    Steps of at most `step`, halving on solver failure; raises
    NoCoexistenceError when the branch disappears.
    """
    lam, sol = lam_from, sol_from
    while abs(lam - lam_to) > 0:
        h = np.clip(lam_to - lam, -step, step)
        attempt = h
        while True:
            nxt = solve_ordered(beta, lam + attempt, S, init=sol)
            if nxt is not None:
                lam += attempt
                sol = nxt
                break
            attempt *= 0.5
            if abs(attempt) < 1e-12:
                raise NoCoexistenceError(
                    f"ordered branch lost near lambda={lam}")
    return sol


def mf_pressures(beta: float, lam: float, S: int, lam_beta=None, sol_beta=None):
    """(p_ord, p_disord): negatives of the branch free energies at lambda.

    The ordered branch is continued from lambda_beta by warm starts; pass
    (lam_beta, sol_beta) to reuse a solved critical point, otherwise
    critical_lambda runs first.
    """
    if lam_beta is None or sol_beta is None:
        lam_beta, ms = critical_lambda(beta, S)
        sol_beta = (ms.c, ms.b)
    c, b = continue_ordered(beta, S, lam_beta, sol_beta, lam)
    a = solve_uniform(beta, lam, S)
    p_ord = -mf_free_energy(_ordered_vector(c, b, S), beta, lam)
    p_dis = -mf_free_energy(np.full(S, a), beta, lam)
    return float(p_ord), float(p_dis)


def coexistence_window(S: int, betas):
    """Scan a beta grid; return the sublist where critical_lambda succeeds."""
    good = []
    for beta in betas:
        try:
            lam_beta, ms = critical_lambda(beta, S)
        except NoCoexistenceError:
            continue
        good.append((beta, lam_beta, ms))
    return good
