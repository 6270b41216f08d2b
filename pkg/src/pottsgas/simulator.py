"""Grand-canonical Metropolis simulation of the continuum Potts gas.

The Hamiltonian of a finite configuration q = {(r_i, s_i)} is

    H(q) = (1/2) sum_{i != j} V(|r_i - r_j|) 1_{s_i != s_j} - lambda n,

with V = J_gamma * J_gamma the tabulated radial pair potential; with a
boundary condition the cross terms to the exterior (particles or a density
collar realized as weighted ghost atoms on the fine mesh) are added.  The
identical energy can be written as the integral of the mean-field energy
density over the smoothed configuration; `energy_total_integral` evaluates
that form by quadrature as a cross-check.

Moves: insertion (uniform position and spin), deletion, Gaussian
displacement (wrapped or reflected), spin resampling.  Acceptance follows
detailed balance with respect to exp(-beta H) against the free measure
(the 1/n! enters through the insertion/deletion proposal ratio).  RNG is
counter-based (Philox) keyed by (seed, stream) for reproducibility and
independent replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .geometry import Box, block_average
from .kernels import KacKernel, pair_potential_table

__all__ = [
    "ParticleConfig",
    "BoundaryCondition",
    "GcmcState",
    "MoveMix",
    "energy_total",
    "energy_total_integral",
    "gcmc_sweep",
    "exact_reference",
    "observables",
    "make_state",
    "sample_restricted_config",
]


@dataclass
class ParticleConfig:
    """A finite marked point configuration in a box (multiset semantics)."""

    box: Box
    positions: np.ndarray    # (n, d)
    spins: np.ndarray        # (n,), values 1..S
    S: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, self.box.d)
        self.spins = np.asarray(self.spins, dtype=int).reshape(-1)
        if self.positions.shape[0] != self.spins.shape[0]:
            raise ValueError("positions/spins length mismatch")
        L = np.asarray(self.box.sides)
        if self.positions.size and (np.any(self.positions < 0)
                                    or np.any(self.positions >= L)):
            raise ValueError("particles must lie inside the box")
        if self.spins.size and (self.spins.min() < 1 or self.spins.max() > self.S):
            raise ValueError("spin out of range")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.spins, minlength=self.S + 1)[1:]

    def to_csv(self) -> str:
        cols = [f"x{i}" for i in range(self.box.d)] + ["s"]
        lines = [",".join(cols)]
        for r, s in zip(self.positions, self.spins):
            lines.append(",".join(f"{x:.12g}" for x in r) + f",{int(s)}")
        return "\n".join(lines) + "\n"


@dataclass
class BoundaryCondition:
    """Exterior condition: none, periodic, a particle collar, or a density
    collar chi = rho^(k) on the complement within interaction range.

    Density collars are realized as an atomic measure on the fine-mesh cell
    centers of the collar (weights = density * cell volume), which makes the
    collar energy exact for the atomized measure and keeps every move
    reversible.
    """

    kind: str                      # "none" | "periodic" | "particles" | "density"
    width: float = 0.0
    collar_positions: np.ndarray = None   # (m, d) for particles/density
    collar_spins: np.ndarray = None       # (m,) for particles
    collar_weights: np.ndarray = None     # (m, S) for density
    label: int | None = None              # phase label for density collars

    @staticmethod
    def none() -> "BoundaryCondition":
        return BoundaryCondition(kind="none")

    @staticmethod
    def periodic() -> "BoundaryCondition":
        return BoundaryCondition(kind="periodic")

    @staticmethod
    def particles(positions, spins, width) -> "BoundaryCondition":
        return BoundaryCondition(kind="particles", width=width,
                                 collar_positions=np.asarray(positions, float),
                                 collar_spins=np.asarray(spins, int))

    @staticmethod
    def density(box: Box, kernel: KacKernel, rho, mesh: float = None,
                label: int | None = None) -> "BoundaryCondition":
        """chi = rho on the collar of width 2/gamma around a non-periodic box,
        atomized on a mesh (default gamma^{-1/2})."""
        if box.periodic:
            raise ValueError("density collars apply to non-periodic boxes")
        rho = np.asarray(rho, dtype=float)
        mesh = kernel.gamma ** -0.5 if mesh is None else mesh
        width = kernel.pair_range
        w = int(math.ceil(width / mesh))
        n = box.ncells(mesh)
        pts, wts = [], []
        for idx in np.ndindex(*(ni + 2 * w for ni in n)):
            cell = tuple(i - w for i in idx)
            if all(0 <= c < ni for c, ni in zip(cell, n)):
                continue   # inside the box
            center = (np.array(cell) + 0.5) * mesh
            pts.append(center)
            wts.append(rho * mesh ** box.d)
        return BoundaryCondition(kind="density", width=width,
                                 collar_positions=np.array(pts),
                                 collar_weights=np.array(wts), label=label)

    def ghost_arrays(self, S: int):
        """(positions, per-species weights) of the exterior atoms."""
        if self.kind in ("none", "periodic"):
            return None, None
        if self.kind == "density":
            return self.collar_positions, self.collar_weights
        w = np.zeros((self.collar_positions.shape[0], S))
        w[np.arange(w.shape[0]), self.collar_spins - 1] = 1.0
        return self.collar_positions, w


@dataclass
class MoveMix:
    displacement: float = 0.4
    flip: float = 0.2
    insertion: float = 0.2
    deletion: float = 0.2

    def cumulative(self):
        tot = self.displacement + self.flip + self.insertion + self.deletion
        c = np.cumsum([self.displacement, self.flip, self.insertion,
                       self.deletion]) / tot
        return c


@dataclass
class GcmcState:
    """Engine + RNG + statistics of one Metropolis chain."""

    box: Box
    S: int
    beta: float
    lam: float
    kernel: KacKernel
    engine: object
    rng: np.random.Generator
    seed: int
    stream: int
    sweep: int = 0
    sigma: float = 0.0         # displacement step
    stats: dict = field(default_factory=lambda: {
        "proposed": np.zeros(4, dtype=int),
        "accepted": np.zeros(4, dtype=int)})

    @property
    def n(self) -> int:
        return self.engine.n

    def config(self) -> ParticleConfig:
        return ParticleConfig(self.box, self.engine.positions(),
                              self.engine.spins(), self.S)

    def cache_consistency(self) -> float:
        """Max relative mismatch between cached and recomputed fields."""
        cached = self.engine.cached_fields()
        fresh = self.engine.fields_fresh()
        scale = max(1.0, float(np.max(np.abs(fresh))) if fresh.size else 1.0)
        return float(np.max(np.abs(cached - fresh)) / scale) if fresh.size else 0.0


def _build_engine(box: Box, S: int, kernel: KacKernel, bc: BoundaryCondition,
                  backend=None, table=None):
    table = pair_potential_table(kernel) if table is None else table
    gpos, gw = bc.ghost_arrays(S)
    eng_cls = _core.get_engine(backend)
    return eng_cls(box.sides, box.periodic, S, table.rmax, table.h,
                   table.coeffs, gpos, gw)


def make_state(box: Box, S: int, beta: float, lam: float, kernel: KacKernel,
               bc: BoundaryCondition = None, seed: int = 0, stream: int = 0,
               init: ParticleConfig = None, sigma: float = None,
               backend: str = None, pair_table=None) -> GcmcState:
    """Fresh chain state; optionally filled from an initial configuration.

    ``pair_table`` overrides the interaction (a RadialTable; used to switch
    the interaction off in ideal-gas checks).
    """
    if bc is None:
        bc = BoundaryCondition.periodic() if box.periodic \
            else BoundaryCondition.none()
    if box.periodic != (bc.kind == "periodic"):
        raise ValueError("boundary kind must match the box periodicity")
    engine = _build_engine(box, S, kernel, bc, backend, table=pair_table)
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed, stream], dtype=np.uint64)))
    sigma = kernel.range / 2.0 if sigma is None else sigma
    state = GcmcState(box=box, S=S, beta=beta, lam=lam, kernel=kernel,
                      engine=engine, rng=rng, seed=seed, stream=stream,
                      sigma=sigma)
    if init is not None:
        for r, s in zip(init.positions, init.spins):
            engine.insert(r, int(s))
    return state


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def energy_total(q: ParticleConfig, bc: BoundaryCondition, kernel: KacKernel,
                 lam: float, backend=None) -> float:
    """Pair-sum energy of a configuration with its boundary condition."""
    box = q.box
    eng = _build_engine(box, q.S, kernel, bc, backend)
    for r, s in zip(q.positions, q.spins):
        eng.insert(r, int(s))
    return eng.total_pair_energy() - lam * q.n


def _smoothed_density(r_eval, positions, spins, ghosts, kernel, S, box):
    """J_gamma * (q + collar) at the evaluation points, per species."""
    out = np.zeros((r_eval.shape[0], S))
    L = np.asarray(box.sides)
    for pts, weights in ghosts:
        if pts is None or len(pts) == 0:
            continue
        for i in range(0, r_eval.shape[0], 256):
            blk = r_eval[i:i + 256]
            diff = blk[:, None, :] - pts[None, :, :]
            if box.periodic:
                diff -= L * np.round(diff / L)
            dist = np.sqrt((diff ** 2).sum(-1))
            out[i:i + 256] += kernel.evaluate(dist) @ weights
    if positions.shape[0]:
        w = np.zeros((positions.shape[0], S))
        w[np.arange(len(spins)), spins - 1] = 1.0
        for i in range(0, r_eval.shape[0], 256):
            blk = r_eval[i:i + 256]
            diff = blk[:, None, :] - positions[None, :, :]
            if box.periodic:
                diff -= L * np.round(diff / L)
            dist = np.sqrt((diff ** 2).sum(-1))
            out[i:i + 256] += kernel.evaluate(dist) @ w
    return out


def energy_total_integral(q: ParticleConfig, bc: BoundaryCondition,
                          kernel: KacKernel, lam: float, tol=1e-9,
                          max_depth=6) -> float:
    """Energy as the integral of the mean-field energy density.

    Evaluates integral of [ e(J*q + J*collar) - e(J*collar) ] over the
    region within kernel reach of the particles by adaptive tile-subdivision
    Gauss-Legendre quadrature (the integrand has kinks on the kernel-support
    circles, so refinement beats order escalation).  Algebraically identical
    to `energy_total`; exists as an independent oracle.
    """
    box = q.box
    d = box.d
    if q.n == 0:
        return 0.0
    gpos, gw = bc.ghost_arrays(q.S)
    ghosts = [(gpos, gw)] if gpos is not None else []

    def edens(vals):
        tot = vals.sum(axis=-1)
        sq = (vals ** 2).sum(axis=-1)
        return 0.5 * (tot * tot - sq)

    def integrand(pts):
        dens_all = _smoothed_density(pts, q.positions, q.spins, ghosts,
                                     kernel, q.S, box)
        if ghosts:
            dens_g = _smoothed_density(pts, np.zeros((0, d)),
                                       np.zeros(0, dtype=int), ghosts,
                                       kernel, q.S, box)
            return edens(dens_all) - edens(dens_g)
        return edens(dens_all)

    nodes, weights = np.polynomial.legendre.leggauss(8)

    def gl_tile(lo, size):
        pts_1d = [lo[k] + 0.5 * size * (nodes + 1.0) for k in range(d)]
        pts = np.stack(np.meshgrid(*pts_1d, indexing="ij"),
                       axis=-1).reshape(-1, d)
        wts = np.prod(np.stack(
            np.meshgrid(*([0.5 * size * weights] * d), indexing="ij"),
            axis=-1), axis=-1).reshape(-1)
        return float(integrand(pts) @ wts)

    def refine(lo, size, coarse, budget, depth):
        subs = []
        fine = 0.0
        for off in np.ndindex(*(2,) * d):
            slo = lo + 0.5 * size * np.array(off)
            val = gl_tile(slo, 0.5 * size)
            subs.append((slo, val))
            fine += val
        if abs(fine - coarse) <= budget or depth >= max_depth:
            return fine
        return sum(refine(slo, 0.5 * size, val, budget / (2 ** d), depth + 1)
                   for slo, val in subs)

    # tiles of side = kernel range covering the particle supports
    tile = kernel.range
    tiles = set()
    for r in q.positions:
        base = np.floor(r / tile).astype(int)
        for off in np.ndindex(*(3,) * d):
            cell = tuple(base + np.array(off) - 1)
            if box.periodic:
                ncell = tuple(int(math.ceil(s / tile)) for s in box.sides)
                cell = tuple(c % n for c, n in zip(cell, ncell))
            tiles.add(cell)

    budget = tol * max(1.0, q.n) / max(len(tiles), 1)
    total = 0.0
    for cell in sorted(tiles):
        lo = np.array(cell, dtype=float) * tile
        total += refine(lo, tile, gl_tile(lo, tile), budget, 1)
    return total - lam * q.n


# ---------------------------------------------------------------------------
# Metropolis chain
# ---------------------------------------------------------------------------

def gcmc_step(state: GcmcState, mix: MoveMix = None) -> int:
    """One Metropolis move; returns the move type (0..3) or -1 (rejected)."""
    mix = mix or MoveMix()
    cum = mix.cumulative()
    rng = state.rng
    eng = state.engine
    beta, lam, S = state.beta, state.lam, state.S
    vol = state.box.volume
    u = rng.random()
    if u < cum[0]:
        kind = 0    # displacement
    elif u < cum[1]:
        kind = 1    # spin flip
    elif u < cum[2]:
        kind = 2    # insertion
    else:
        kind = 3    # deletion
    state.stats["proposed"][kind] += 1
    n = eng.n

    if kind == 0:
        if n == 0:
            return -1
        i = int(rng.integers(n))
        r_old = eng.positions()[i]
        step = rng.normal(0.0, state.sigma, size=state.box.d)
        r_new = r_old + step
        L = np.asarray(state.box.sides)
        if state.box.periodic:
            r_new = np.mod(r_new, L)
        else:
            # reflect (fold) into the box; symmetric proposal
            r_new = np.mod(r_new, 2 * L)
            r_new = np.where(r_new > L, 2 * L - r_new, r_new)
            r_new = np.minimum(r_new, np.nextafter(L, 0.0))
        f_old = eng.cached_field(i)
        f_new = eng.field_at(r_new, exclude=i)
        s = int(eng.spins()[i])
        dh = float((f_new.sum() - f_new[s - 1]) - (f_old.sum() - f_old[s - 1]))
        if dh <= 0 or rng.random() < math.exp(-beta * dh):
            eng.move(i, r_new)
            state.stats["accepted"][kind] += 1
            return kind
        return -1

    if kind == 1:
        if n == 0:
            return -1
        i = int(rng.integers(n))
        s_old = int(eng.spins()[i])
        others = [s for s in range(1, S + 1) if s != s_old]
        s_new = others[int(rng.integers(S - 1))]
        f = eng.cached_field(i)
        dh = float(f[s_old - 1] - f[s_new - 1])  # cross sums swap roles
        if dh <= 0 or rng.random() < math.exp(-beta * dh):
            eng.flip(i, s_new)
            state.stats["accepted"][kind] += 1
            return kind
        return -1

    if kind == 2:
        r = rng.random(state.box.d) * np.asarray(state.box.sides)
        s = int(rng.integers(S)) + 1
        f = eng.field_at(r)
        dh = float(f.sum() - f[s - 1]) - lam
        log_acc = math.log(S * vol / (n + 1)) - beta * dh
        if log_acc >= 0 or rng.random() < math.exp(log_acc):
            eng.insert(r, s)
            state.stats["accepted"][kind] += 1
            return kind
        return -1

    if n == 0:
        return -1
    i = int(rng.integers(n))
    f = eng.cached_field(i)
    s = int(eng.spins()[i])
    dh = -(float(f.sum() - f[s - 1]) - lam)
    log_acc = math.log(n / (S * vol)) - beta * dh
    if log_acc >= 0 or rng.random() < math.exp(log_acc):
        eng.remove(i)
        state.stats["accepted"][kind] += 1
        return kind
    return -1


def gcmc_sweep(state: GcmcState, mix: MoveMix = None, n_moves: int = None,
               check_every: int = 0) -> GcmcState:
    """n_moves Metropolis steps (default: max(n, 16)); returns the state.

    With ``check_every`` > 0 the field cache is verified against a fresh
    recomputation every that-many sweeps (tolerance 1e-9 relative).
    """
    n_moves = max(state.n, 16) if n_moves is None else n_moves
    for _ in range(n_moves):
        gcmc_step(state, mix)
    state.sweep += 1
    if check_every and state.sweep % check_every == 0:
        dev = state.cache_consistency()
        if dev > 1e-9:
            raise RuntimeError(f"field cache drifted: {dev:.2e}")
    return state


# ---------------------------------------------------------------------------
# exact low-occupancy reference
# ---------------------------------------------------------------------------

def exact_reference(box: Box, bc: BoundaryCondition, kernel: KacKernel,
                    beta: float, lam: float, S: int, n_max: int = 4,
                    order: int = 8, tail_tol: float = 1e-8):
    """Partition function and species densities by explicit summation.

    Sums the sectors n <= n_max of the grand-canonical series with tensor
    Gauss-Legendre quadrature over positions and exact spin sums; the n-tail
    is bounded through H >= -lambda n (the pair term is nonnegative) and
    must stay below tail_tol * Z.  Small boxes only.
    """
    if n_max > 4:
        raise ValueError("n_max is capped at 4")
    if box.periodic:
        raise ValueError("the reference sums need a non-periodic box "
                         "(use kind none or a density collar)")
    d = box.d
    L = np.asarray(box.sides)
    table = pair_potential_table(kernel)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pts_1d = [0.5 * Li * (nodes + 1.0) for Li in L]
    wts_1d = [0.5 * Li * weights for Li in L]
    grid = np.stack(np.meshgrid(*pts_1d, indexing="ij"), axis=-1).reshape(-1, d)
    gw = np.prod(np.stack(np.meshgrid(*wts_1d, indexing="ij"), axis=-1),
                 axis=-1).reshape(-1)
    G = grid.shape[0]

    # pairwise Boltzmann factors between grid points
    diff = grid[:, None, :] - grid[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    M = np.exp(-beta * table(dist))

    # one-body factor per species: collar field
    gpos, gwgt = bc.ghost_arrays(S)
    one = np.ones((G, S))
    if gpos is not None and len(gpos):
        dg = np.sqrt(((grid[:, None, :] - gpos[None, :, :]) ** 2).sum(-1))
        vg = table(dg)           # (G, m)
        ghost = vg @ gwgt        # (G, S): ghost field per species
        tot = ghost.sum(axis=1, keepdims=True)
        one = np.exp(-beta * (tot - ghost))   # unlike-species collar energy
    act = math.exp(beta * lam)

    letters = "abcdefgh"
    Z = 1.0
    Ns = np.zeros(S)
    for n in range(1, n_max + 1):
        for assign in np.ndindex(*(S,) * n):
            ein_in, ops = [], []
            for i in range(n):
                ein_in.append(letters[i])
                ops.append(gw * one[:, assign[i]])
            for i in range(n):
                for j in range(i + 1, n):
                    if assign[i] != assign[j]:
                        ein_in.append(letters[i] + letters[j])
                        ops.append(M)
            val = float(np.einsum(",".join(ein_in) + "->", *ops,
                                  optimize=True))
            weight = act ** n / math.factorial(n) * val
            Z += weight
            counts = np.bincount(np.array(assign), minlength=S)
            Ns += counts * weight

    # tail bound: sum_{n > n_max} (S |L| e^{beta lam})^n / n!
    mu = S * box.volume * act
    tail = 0.0
    term = mu ** (n_max + 1) / math.factorial(n_max + 1)
    for m in range(n_max + 1, n_max + 200):
        tail += term
        term *= mu / (m + 1)
        if term < 1e-300:
            break
    if tail > tail_tol * Z:
        raise ValueError(f"tail bound {tail:.3e} exceeds {tail_tol} * Z")

    dens = Ns / Z / box.volume
    return {"Z": Z, "densities": dens, "mean_n": float(Ns.sum() / Z),
            "tail_bound": tail}


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def observables(snapshots, box: Box, params, mins, batches: int = 8,
                collar_label: int | None = None) -> dict:
    """Density estimates with batch-means errors plus indicator statistics.

    ``snapshots`` is a sequence of ParticleConfig from an equilibrated
    trajectory (burn-in is the caller's business).  For external-condition
    boxes, ``collar_label`` names the boundary phase (collar convention for
    the large-scale indicator at the box edge).
    """
    from .indicators import ContourError, eta_field, extract_contours, theta_field

    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("no snapshots")
    S = snapshots[0].S
    dens = np.array([c.counts() / box.volume for c in snapshots])
    nb = min(batches, len(snapshots))
    splits = np.array_split(dens, nb, axis=0)
    means = np.array([s.mean(axis=0) for s in splits])
    est = dens.mean(axis=0)
    err = means.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 \
        else np.full(S, np.nan)

    K = mins.S + 1
    eta_hist = np.zeros(K + 1)
    theta_hist = np.zeros(K + 1)
    n_contours = []
    contour_sizes = []
    for c in snapshots:
        eta = eta_field(c, params, mins, box)
        th = theta_field(eta, params, collar_label=collar_label)
        eta_hist += np.bincount(eta.core().ravel(), minlength=K + 1)
        theta_hist += np.bincount(th.core().ravel(), minlength=K + 1)
        try:
            gs = extract_contours(c, params, mins, box,
                                  collar_label=collar_label)
            n_contours.append(len(gs))
            contour_sizes.extend(g.n_cells for g in gs)
        except ContourError:
            n_contours.append(-1)
    eta_hist /= eta_hist.sum()
    theta_frac = theta_hist / theta_hist.sum()
    return {
        "density": est,
        "density_err": err,
        "eta_fraction": eta_hist,
        "theta_fraction": theta_frac,
        "contour_count": n_contours,
        "contour_sizes": contour_sizes,
    }


def sample_restricted_config(box: Box, rho, rng: np.random.Generator,
                             S: int) -> ParticleConfig:
    """Poisson configuration at constant per-species intensity rho."""
    rho = np.asarray(rho, dtype=float)
    pos, spins = [], []
    for s in range(1, S + 1):
        n = rng.poisson(rho[s - 1] * box.volume)
        pos.append(rng.random((n, box.d)) * np.asarray(box.sides))
        spins.append(np.full(n, s, dtype=int))
    return ParticleConfig(box, np.concatenate(pos, axis=0),
                          np.concatenate(spins), S)
