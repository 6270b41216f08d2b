"""Phase indicators on two scales and the contour decomposition.

A configuration (or density field) is coarse-grained on the small scale
ell_minus: a cell gets label k when its empirical density is within zeta of
the k-th mean-field minimizer in every species, else 0.  On the large scale
ell_plus a cell gets label k only when the small-scale label equals k on the
cell and on its full ring of neighbors ("local equilibrium"); otherwise 0.

Contours are the maximal Moore-connected components of the zero region of
the large-scale indicator, carrying the small-scale labels on their support,
a color (the constant large-scale label just outside), and interiors grouped
by the label on their inner collar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (Box, CellSet, DensityField, block_average,
                       block_average_field, connected_components, delta_in,
                       delta_out, moore_neighbors)

__all__ = [
    "ScaleParams",
    "PhaseField",
    "Contour",
    "ContourError",
    "eta_field",
    "theta_field",
    "in_restricted_ensemble",
    "extract_contours",
    "external_contours",
    "synthesize_eta",
]


class ContourError(RuntimeError):
    """A structural property of the indicator field failed."""


def _is_multiple(a: float, b: float) -> bool:
    r = a / b
    return abs(r - round(r)) < 1e-9 * max(1.0, abs(r))


@dataclass(frozen=True)
class ScaleParams:
    """The scales (ell_minus, ell_plus) and accuracy zeta for one gamma.

    Either derived from exponents, ell_minus = gamma^(-1+alpha_minus),
    ell_plus = gamma^(-1-alpha_plus), zeta = gamma^a_zeta, or set directly
    (the usual mode at accessible parameters, where the asymptotic exponent
    inequalities are hopeless and demoted to a diagnostic report).
    """

    gamma: float
    ell_minus: float
    ell_plus: float
    zeta: float
    alpha_minus: float | None = None
    alpha_plus: float | None = None
    a_zeta: float | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.ell_minus <= 0 or self.ell_plus <= 0 or self.zeta <= 0:
            raise ValueError("scales and zeta must be positive")
        if not _is_multiple(self.ell_plus, self.ell_minus):
            raise ValueError("ell_minus must divide ell_plus")
        if self.derived:
            if not self.ell_minus < 1.0 / self.gamma < self.ell_plus:
                raise ValueError("derived scales must straddle the range 1/gamma")

    @property
    def derived(self) -> bool:
        return self.alpha_minus is not None

    @property
    def block_ratio(self) -> int:
        """ell_plus / ell_minus."""
        return int(round(self.ell_plus / self.ell_minus))

    @classmethod
    def from_exponents(cls, gamma: float, alpha_minus: float,
                       alpha_plus: float, a_zeta: float) -> "ScaleParams":
        return cls(
            gamma=gamma,
            ell_minus=gamma ** (-1.0 + alpha_minus),
            ell_plus=gamma ** (-1.0 - alpha_plus),
            zeta=gamma ** a_zeta,
            alpha_minus=alpha_minus, alpha_plus=alpha_plus, a_zeta=a_zeta,
        )

    def exponent_report(self, d: int) -> dict:
        """Whether the asymptotic small-gamma constraints hold (diagnostic).

        These force astronomically small gamma; failures are reported, never
        fatal.
        """
        if self.derived:
            am, ap, a = self.alpha_minus, self.alpha_plus, self.a_zeta
        else:
            # effective exponents: ell- = gamma^(-1+am), ell+ = gamma^(-1-ap)
            am = 1.0 + math.log(self.ell_minus) / math.log(self.gamma)
            ap = -1.0 - math.log(self.ell_plus) / math.log(self.gamma)
            a = math.log(self.zeta) / math.log(self.gamma)
        checks = {
            "ordering a < alpha- < alpha+": a < am < ap,
            "2ad + alpha- d^2 < alpha+/2": 2 * a * d + am * d * d < ap / 2,
            "1/2 - 2 d alpha+ > 0": 0.5 - 2 * d * ap > 0,
            "1/4 - d(alpha+ - alpha-) > 0": 0.25 - d * (ap - am) > 0,
            "(alpha+ + alpha-)/(1 - alpha-) < 1/d": (ap + am) / (1 - am) < 1 / d
            if am < 1 else False,
            "4(alpha+ + alpha-) + alpha-/2 < 1/4": 4 * (ap + am) + am / 2 < 0.25,
        }
        checks["effective_exponents"] = {"alpha_minus": am, "alpha_plus": ap,
                                         "a_zeta": a}
        return checks


@dataclass
class PhaseField:
    """Per-cell labels in {0, 1, ..., S+1}; 0 means undetermined.

    ``origin`` ties array indices to lattice cells (index = cell - origin),
    letting external-condition fields carry a labeled collar.
    """

    box: Box
    mesh: float
    labels: np.ndarray
    kind: str                      # "eta" | "theta"
    n_labels: int                  # S + 1
    origin: tuple = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.origin is None:
            self.origin = (0,) * self.box.d
        if self.labels.min(initial=0) < 0 or \
                self.labels.max(initial=0) > self.n_labels:
            raise ValueError("labels out of range")

    def at(self, cell) -> int:
        return int(self.labels[tuple(c - o for c, o in zip(cell, self.origin))])

    def core(self) -> np.ndarray:
        """Labels on the box proper (collar stripped)."""
        n = self.box.ncells(self.mesh)
        sl = tuple(slice(-o, -o + ni) for o, ni in zip(self.origin, n))
        return self.labels[sl]

    def cells_with_label(self, k: int) -> CellSet:
        idx = np.argwhere(self.core() == k)
        return CellSet(self.mesh, frozenset(map(tuple, idx.tolist())))

    def to_csv(self) -> str:
        """Grid dump (d=2 only): one row per lattice row."""
        if self.box.d != 2:
            raise ValueError("CSV grid dump is 2-d only")
        rows = [",".join(str(int(v)) for v in row) for row in self.core()]
        return "\n".join(rows) + "\n"


def _source_to_field(source, params: ScaleParams, box: Box, S: int) -> DensityField:
    if isinstance(source, DensityField):
        if math.isclose(source.mesh, params.ell_minus, rel_tol=1e-12):
            return source
        return block_average_field(source, params.ell_minus)
    if hasattr(source, "positions") and hasattr(source, "spins"):
        return block_average(source.positions, source.spins, S,
                             params.ell_minus, box)
    positions, spins = source
    return block_average(positions, spins, S, params.ell_minus, box)


def eta_field(source, params: ScaleParams, mins, box: Box = None) -> PhaseField:
    """Small-scale phase labels of a density field or configuration.

    Cell label is k when |density(x, s) - rho^(k)_s| <= zeta for every
    species s, else 0.  Well-definedness requires zeta below half the
    smallest max-norm gap between minimizers; two simultaneous matches raise
    ContourError.
    """
    rhos = mins.all_rho()
    gap = mins.min_gap()
    if not params.zeta < 0.5 * gap:
        raise ValueError(
            f"zeta={params.zeta} is not below half the minimizer gap {gap}")
    if box is None:
        box = source.box if isinstance(source, DensityField) else None
    if box is None:
        raise ValueError("a box is required for particle input")
    f = _source_to_field(source, params, box, rhos.shape[1])
    dev = np.max(np.abs(f.values[..., None, :] - rhos[None, :]), axis=-1)
    match = dev <= params.zeta
    counts = match.sum(axis=-1)
    if np.any(counts > 1):
        raise ContourError("ambiguous phase label (two minimizers match)")
    labels = (match * np.arange(1, rhos.shape[0] + 1)).sum(axis=-1)
    return PhaseField(box, params.ell_minus, labels, "eta", rhos.shape[0],
                      origin=f.origin)


def theta_field(eta: PhaseField, params: ScaleParams,
                collar_label: int | None = None) -> PhaseField:
    """Large-scale labels: k when eta == k on the cell and its full ring.

    Periodic boxes wrap.  External-condition boxes read the ring labels from
    the field's collar; ``collar_label`` fills any missing collar cells (the
    collar convention), otherwise a too-small window raises.
    """
    if eta.kind != "eta":
        raise ValueError("theta_field needs a small-scale label field")
    m = params.block_ratio
    box = eta.box
    n_plus = box.ncells(params.ell_plus)
    n_minus = box.ncells(params.ell_minus)

    if box.periodic:
        core = eta.core()
        padded = np.pad(core, m, mode="wrap")
    else:
        need_origin = tuple(-m for _ in range(box.d))
        have = eta.origin
        if all(o <= -m for o in have) and all(
                o + sh >= ni + m for o, sh, ni in
                zip(have, eta.labels.shape, n_minus)):
            sl = tuple(slice(-m - o, -m - o + ni + 2 * m)
                       for o, ni in zip(have, n_minus))
            padded = eta.labels[sl]
        elif collar_label is not None:
            padded = np.full(tuple(ni + 2 * m for ni in n_minus), collar_label,
                             dtype=int)
            sl = tuple(slice(m, m + sh) for sh in eta.labels.shape)
            inner = tuple(slice(m + o, m + o + sh)
                          for o, sh in zip(have, eta.labels.shape))
            padded[inner] = eta.labels
        else:
            raise ValueError("eta field lacks a collar of width ell_plus and "
                             "no collar label was given")

    theta = np.zeros(n_plus, dtype=int)
    for idx in np.ndindex(*n_plus):
        sl = tuple(slice(i * m, (i + 3) * m) for i in idx)
        blockvals = padded[sl]
        k = blockvals.flat[0]
        if k != 0 and np.all(blockvals == k):
            theta[idx] = k
    return PhaseField(box, params.ell_plus, theta, "theta", eta.n_labels)


def in_restricted_ensemble(source, k: int, region: CellSet,
                           params: ScaleParams, mins, box: Box = None) -> bool:
    """True when the small-scale label equals k on every cell of the region."""
    eta = eta_field(source, params, mins, box)
    return all(eta.at(cell) == k for cell in region)


@dataclass
class Contour:
    """A maximal connected zero-region of the large-scale indicator."""

    support: CellSet                   # mesh ell_plus
    eta_spec: dict                     # ell_minus cell -> label, on support
    color: int
    exterior: CellSet
    interiors: dict = field(default_factory=dict)   # label -> CellSet

    @property
    def n_cells(self) -> int:
        """Support size in units of ell_plus cells."""
        return len(self.support)

    def coverage(self) -> CellSet:
        """Support plus all interiors."""
        out = self.support
        for cs in self.interiors.values():
            out = out.union(cs)
        return out

    def interior_all(self) -> CellSet:
        out = CellSet(self.support.mesh, frozenset())
        for cs in self.interiors.values():
            out = out.union(cs)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "mesh": self.support.mesh,
            "support": sorted([list(c) for c in self.support]),
            "color": self.color,
            "n_cells": self.n_cells,
            "eta_spec": {",".join(map(str, c)): int(v)
                         for c, v in sorted(self.eta_spec.items())},
            "interiors": {str(h): sorted([list(c) for c in cs])
                          for h, cs in sorted(self.interiors.items())},
        })


def _theta_cell_to_eta_cells(cell, m, d):
    ranges = [range(cell[i] * m, (cell[i] + 1) * m) for i in range(d)]
    import itertools
    return itertools.product(*ranges)


def extract_contours(source, params: ScaleParams, mins, box: Box = None,
                     collar_label: int | None = None):
    """Contours of a configuration or density field.

    Computes both indicators, splits the zero region of the large-scale one
    into maximal connected components, attaches the small-scale labels on
    each support, determines the color from the ring just outside
    support+interiors, and groups interiors by their inner-collar label.
    Violations of the constant-collar property raise ContourError.
    """
    if box is None and isinstance(source, DensityField):
        box = source.box
    eta = eta_field(source, params, mins, box)
    box = eta.box
    d = box.d
    m = params.block_ratio

    if not box.periodic:
        # the collar must be in a pure phase for the zero set to be bounded
        if collar_label is None:
            collar = eta.labels.copy()
            n = box.ncells(params.ell_minus)
            core_sl = tuple(slice(-o, -o + ni) for o, ni in zip(eta.origin, n))
            mask = np.ones_like(collar, dtype=bool)
            mask[core_sl] = False
            vals = set(np.unique(collar[mask]))
            if len(vals) != 1:
                raise ContourError(f"collar is not in a pure phase: {vals}")
            collar_label = int(vals.pop())
        if collar_label == 0:
            raise ContourError("collar label 0: the zero set is not bounded")

    theta = theta_field(eta, params, collar_label=collar_label)
    tcore = theta.core()
    n_plus = tcore.shape

    zeros = np.argwhere(tcore == 0)
    zero_set = CellSet(params.ell_plus, frozenset(map(tuple, zeros.tolist())))
    supports = connected_components(zero_set, box if box.periodic else None)

    all_cells = frozenset(map(tuple, np.ndindex(*n_plus)))

    def theta_at(cell) -> int:
        if all(0 <= c < n for c, n in zip(cell, n_plus)):
            return int(tcore[tuple(cell)])
        if box.periodic:
            return int(tcore[tuple(np.mod(cell, n_plus))])
        return collar_label   # collar convention

    contours = []
    for sp in supports:
        comp_cells = CellSet(params.ell_plus, all_cells - sp.cells)
        comps = connected_components(comp_cells, box if box.periodic else None)
        if box.periodic:
            comps_sorted = sorted(comps, key=lambda c: (-len(c), min(c.cells)))
            exterior = comps_sorted[0]
            interiors_raw = comps_sorted[1:]
        else:
            # components whose ring leaves the core connect to the collar;
            # they form the exterior (merged through the collar)
            def touches_collar(comp):
                return any(
                    ci + oi < 0 or ci + oi >= n_plus[i]
                    for cell in comp.cells
                    for i, ci in enumerate(cell)
                    for oi in (-1, 1))

            touches = [c for c in comps if touches_collar(c)]
            inner = [c for c in comps if not touches_collar(c)]
            ext_cells = frozenset().union(*(c.cells for c in touches)) \
                if touches else frozenset()
            exterior = CellSet(params.ell_plus, ext_cells)
            interiors_raw = inner

        # color: the large-scale label on the outer ring of support+interiors
        cover = sp
        for comp in interiors_raw:
            cover = cover.union(comp)
        ring = delta_out(cover, box if box.periodic else None)
        ring_labels = {theta_at(cell) for cell in ring}
        if len(ring_labels) != 1 or 0 in ring_labels:
            raise ContourError(
                f"outer collar of a contour is not in a pure phase: "
                f"{sorted(ring_labels)}")
        color = ring_labels.pop()

        interiors = {}
        for comp in interiors_raw:
            inner_ring = delta_in(comp, box if box.periodic else None)
            labels = {theta_at(cell) for cell in inner_ring}
            if len(labels) != 1 or 0 in labels:
                raise ContourError(
                    f"inner collar of an interior is not in a pure phase: "
                    f"{sorted(labels)}")
            h = labels.pop()
            interiors[h] = interiors.get(
                h, CellSet(params.ell_plus, frozenset())).union(comp)

        eta_spec = {}
        for cell in sp.cells:
            for ec in _theta_cell_to_eta_cells(cell, m, d):
                eta_spec[tuple(ec)] = eta.at(ec)
        contours.append(Contour(support=sp, eta_spec=eta_spec, color=color,
                                exterior=exterior, interiors=interiors))
    contours.sort(key=lambda g: min(g.support.cells))
    return contours


def _ring_offsets(d):
    import itertools
    return [off for off in itertools.product((-1, 0, 1), repeat=d)
            if any(off)]


def external_contours(contours):
    """Drop contours whose coverage is contained in another's coverage."""
    out = []
    for g in contours:
        cg = g.coverage()
        if any(g is not h and cg.issubset(h.coverage()) for h in contours):
            continue
        out.append(g)
    return out


def synthesize_eta(contours, exterior_label: int, box: Box,
                   params: ScaleParams, n_labels: int) -> PhaseField:
    """Small-scale label field reproducing a contour family.

    Paints the exterior label everywhere, then, outermost first, each
    contour's interiors with their collar labels and its support with its
    stored small-scale specification.
    """
    m = params.block_ratio
    n_minus = box.ncells(params.ell_minus)
    labels = np.full(n_minus, exterior_label, dtype=int)
    d = box.d
    for g in sorted(contours, key=lambda g: -len(g.coverage())):
        for h, cs in g.interiors.items():
            for cell in cs:
                for ec in _theta_cell_to_eta_cells(cell, m, d):
                    labels[tuple(ec)] = h
        for cell, v in g.eta_spec.items():
            labels[tuple(cell)] = v
    return PhaseField(box, params.ell_minus, labels, "eta", n_labels)
