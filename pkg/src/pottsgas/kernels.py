"""Interaction kernels: the smoothing profile J, the pair potential V = J*J,
and their cell-averaged lattice tables.

The smoothing kernel is J_gamma(r, r') = gamma^d * j(gamma |r - r'|) with j a
smooth, radial probability profile supported in the unit ball; particle pairs
interact through V_gamma = J_gamma * J_gamma (convolution), a nonnegative
positive-definite kernel of range 2/gamma.

Lattice side: Jhat(x, y) is the average of J_gamma over the mesh cells of x
and y (tensor-product Gauss-Legendre, order 8 per axis), renormalized so the
row sums obey  gamma^{-d/2} sum_y Jhat(x, y) = 1  exactly; Vhat is the
discrete self-convolution  gamma^{-d} sum_y Jhat(x,y) Jhat(y,x'),
whose rows then sum to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal, special
from scipy.interpolate import CubicSpline
from scipy.ndimage import convolve as nd_convolve

__all__ = [
    "KacKernel",
    "RadialTable",
    "DiscreteKernel",
    "pair_potential_table",
    "build_discrete_kernel",
]

_GL_ORDER = 8


@dataclass(frozen=True)
class KacKernel:
    """Radial smoothing profile j scaled by gamma.

    profiles:
      * "quartic": j(r) proportional to (1 - r^2)^2 on r < 1 (C^1, cheap
        closed-form transform);
      * "bump": j(r) proportional to exp(-1/(1 - r^2)) on r < 1 (C-infinity).
    """

    gamma: float
    d: int
    profile: str = "quartic"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if self.profile not in ("quartic", "bump"):
            raise ValueError(f"unknown profile {self.profile!r}")

    @property
    def range(self) -> float:
        """Support radius of J_gamma."""
        return 1.0 / self.gamma

    @property
    def pair_range(self) -> float:
        """Support radius of the pair potential J_gamma * J_gamma."""
        return 2.0 / self.gamma

    @property
    def _norm(self) -> float:
        if self.profile == "quartic":
            # integral of (1-r^2)^2 over the unit ball
            return np.pi / 3.0 if self.d == 2 else 32.0 * np.pi / 105.0
        return _bump_norm(self.d)

    def j_unit(self, r):
        """Normalized radial profile j(|r|) at unit range (integral 1)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < 1.0
        if self.profile == "quartic":
            u = r[inside]
            out[inside] = (1.0 - u * u) ** 2 / self._norm
        else:
            u = r[inside]
            out[inside] = np.exp(-1.0 / (1.0 - u * u)) / self._norm
        return out

    def evaluate(self, dist):
        """J_gamma as a function of the pair distance."""
        return self.gamma ** self.d * self.j_unit(self.gamma * np.asarray(dist))

    def j_unit_ft(self, k):
        """d-dimensional Fourier transform of j_unit (radial, =1 at k=0).

        For the quartic profile: jhat(k) = 2^nu Gamma(nu+1) J_nu(k) / k^nu
        with nu = d/2 + 2 (transform of (1-r^2)^2 over the unit ball,
        normalized to jhat(0) = 1).
        """
        k = np.asarray(k, dtype=float)
        if self.profile == "quartic":
            nu = self.d / 2.0 + 2.0
            out = np.empty_like(k)
            small = k < 1e-4
            ks = k[~small]
            c = 2.0 ** nu * special.gamma(nu + 1.0)
            out[~small] = c * special.jv(nu, ks) / ks ** nu
            out[small] = 1.0 - k[small] ** 2 / (4.0 * (nu + 1.0))
            return out
        return _bump_ft(self.d, k)

    def norm_check(self, tol=1e-10) -> float:
        """Deviation of the profile mass from 1 (radial quadrature)."""
        from scipy.integrate import quad
        if self.d == 2:
            val, _ = quad(lambda r: 2 * np.pi * r * float(self.j_unit(r)), 0, 1)
        else:
            val, _ = quad(lambda r: 4 * np.pi * r * r * float(self.j_unit(r)), 0, 1)
        dev = abs(val - 1.0)
        if dev > tol:
            raise AssertionError(f"profile mass off by {dev:.2e}")
        return dev


@lru_cache(maxsize=4)
def _bump_norm(d: int) -> float:
    from scipy.integrate import quad
    if d == 2:
        val, _ = quad(lambda r: 2 * np.pi * r * np.exp(-1 / (1 - r * r)), 0, 1)
    else:
        val, _ = quad(lambda r: 4 * np.pi * r * r * np.exp(-1 / (1 - r * r)), 0, 1)
    return val


def _bump_ft(d: int, k):
    """Numeric radial Fourier transform of the bump profile."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    nodes, weights = np.polynomial.legendre.leggauss(400)
    r = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    jr = np.exp(-1.0 / (1.0 - r * r)) / _bump_norm(d)
    if d == 2:
        kernel = special.j0(np.outer(k, r))
        out = 2 * np.pi * kernel @ (r * jr * w)
    else:
        kr = np.outer(k, r)
        kernel = np.sinc(kr / np.pi)  # sin(kr)/(kr)
        out = 4 * np.pi * kernel @ (r * r * jr * w)
    return out


# ---------------------------------------------------------------------------
# radial pair potential V = J * J
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialTable:
    """Uniform-knot cubic spline of a radial function on [0, rmax].

    coeffs[k] = (a3, a2, a1, a0) on [knot_k, knot_{k+1}];
    value(r) = ((a3 w + a2) w + a1) w + a0 with w = r - knot_k; 0 beyond rmax.
    """

    rmax: float
    h: float
    coeffs: np.ndarray  # (n-1, 4), C-contiguous

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = (r >= 0) & (r < self.rmax)
        k = np.minimum((r[inside] / self.h).astype(int), self.coeffs.shape[0] - 1)
        w = r[inside] - k * self.h
        c = self.coeffs[k]
        out[inside] = ((c[:, 0] * w + c[:, 1]) * w + c[:, 2]) * w + c[:, 3]
        return out


def _composite_gl(a: float, b: float, panels: int, order: int = 12):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    x = (mid[:, None] + half * nodes[None, :]).ravel()
    w = np.tile(half * weights, panels)
    return x, w


def _unit_pair_potential(kernel: KacKernel, t: np.ndarray) -> np.ndarray:
    """(j * j)(t) at unit range via the Fourier-Bessel representation."""
    K = 80.0
    k, w = _composite_gl(1e-9, K, panels=int(K), order=16)
    ft2 = kernel.j_unit_ft(k) ** 2
    out = np.empty_like(t)
    chunk = 256
    if kernel.d == 2:
        base = w * k * ft2 / (2.0 * np.pi)
        for i in range(0, t.size, chunk):
            ts = t[i:i + chunk]
            out[i:i + chunk] = special.j0(np.outer(ts, k)) @ base
    else:
        base = w * k * k * ft2 / (2.0 * np.pi ** 2)
        for i in range(0, t.size, chunk):
            ts = t[i:i + chunk]
            arg = np.outer(ts, k)
            out[i:i + chunk] = np.sinc(arg / np.pi) @ base
    return out


def pair_potential_direct(kernel: KacKernel, t: float) -> float:
    """(j * j)(t) by direct 2-D adaptive quadrature (slow oracle)."""
    import warnings as _warnings

    from scipy.integrate import IntegrationWarning, dblquad
    j = kernel.j_unit
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", IntegrationWarning)
        if kernel.d == 2:
            val, _ = dblquad(
                lambda y, x: float(j(np.hypot(x, y)) * j(np.hypot(t - x, y))),
                -1.0, 1.0, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12)
            return 2.0 * val
        val, _ = dblquad(
            lambda wrad, z: 2 * np.pi * wrad
            * float(j(np.hypot(z, wrad)) * j(np.hypot(t - z, wrad))),
            -1.0, 1.0, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        return val


@lru_cache(maxsize=8)
def pair_potential_table(kernel: KacKernel, n_knots: int = 2048,
                         check: bool = True) -> RadialTable:
    """Cubic-spline table of V_gamma(dist) on [0, 2/gamma].

    Built once per kernel; with ``check`` the table is compared against the
    direct quadrature oracle at a few radii (tolerance 1e-8).
    """
    t = np.linspace(0.0, 2.0, n_knots)
    w_unit = _unit_pair_potential(kernel, t)
    w_unit[-1] = 0.0
    vals = kernel.gamma ** kernel.d * w_unit
    r = t / kernel.gamma
    spline = CubicSpline(r, vals, bc_type=((1, 0.0), (1, 0.0)))
    # scipy stores c[m, k] for (x-x_k)^(3-m); rows of c.T are (a3,a2,a1,a0)
    coeffs = np.ascontiguousarray(spline.c.T)
    table = RadialTable(rmax=float(r[-1]), h=float(r[1] - r[0]), coeffs=coeffs)
    if check:
        scale = kernel.gamma ** kernel.d
        for tt in (0.4, 0.9, 1.5):
            direct = pair_potential_direct(kernel, tt)
            got = float(table(np.array([tt / kernel.gamma]))[0]) / scale
            if abs(got - direct) > 1e-8:
                raise AssertionError(
                    f"pair-potential table off at t={tt}: {got} vs {direct}")
    return table


# ---------------------------------------------------------------------------
# lattice tables
# ---------------------------------------------------------------------------

def _cell_average_table(kernel: KacKernel, mesh: float) -> np.ndarray:
    """Offset table of cell-averaged J_gamma at the given mesh."""
    d = kernel.d
    reach = int(np.ceil(kernel.range / mesh)) + 1
    nodes, weights = np.polynomial.legendre.leggauss(_GL_ORDER)
    x1 = 0.5 * mesh * (nodes + 1.0)       # points in [0, mesh)
    w1 = 0.5 * weights                    # normalized cell average weights
    pts = np.stack(np.meshgrid(*([x1] * d), indexing="ij"), axis=-1).reshape(-1, d)
    wts = np.prod(np.stack(np.meshgrid(*([w1] * d), indexing="ij"), axis=-1),
                  axis=-1).reshape(-1)
    diffs = pts[:, None, :] - pts[None, :, :]           # (m, m, d)
    wpair = np.outer(wts, wts)                          # (m, m)
    shape = (2 * reach + 1,) * d
    table = np.zeros(shape)
    for idx in np.ndindex(*shape):
        delta = np.array(idx) - reach
        if np.any((np.abs(delta) - 1) * mesh >= kernel.range):
            continue
        dist = np.linalg.norm(diffs + delta * mesh, axis=-1)
        table[idx] = np.sum(wpair * kernel.evaluate(dist))
    return table


@dataclass(frozen=True)
class DiscreteKernel:
    """Cell-averaged lattice kernels at mesh gamma^{-1/2}.

    j_table rows sum to gamma^{d/2} (after renormalization), so the
    convolution jconv keeps constants; v_table rows sum to 1 exactly.
    """

    gamma: float
    d: int
    mesh: float
    j_table: np.ndarray
    v_table: np.ndarray
    renorm_dev: float    # size of the row-sum renormalization applied

    @property
    def j_reach(self) -> int:
        return self.j_table.shape[0] // 2

    @property
    def v_reach(self) -> int:
        return self.v_table.shape[0] // 2

    def _conv(self, field: np.ndarray, table: np.ndarray,
              periodic: bool) -> np.ndarray:
        mode = "wrap" if periodic else "constant"
        if field.ndim == self.d:
            return nd_convolve(field, table, mode=mode, cval=0.0)
        out = np.empty_like(field)
        for s in range(field.shape[-1]):
            out[..., s] = nd_convolve(field[..., s], table, mode=mode, cval=0.0)
        return out

    def jconv(self, field: np.ndarray, periodic=True) -> np.ndarray:
        """gamma^{-d/2} sum_y Jhat(x-y) field(y); keeps constants."""
        return self.gamma ** (-self.d / 2.0) * self._conv(field, self.j_table,
                                                          periodic)

    def vconv(self, field: np.ndarray, periodic=True) -> np.ndarray:
        """sum_y Vhat(x-y) field(y); rows sum to 1."""
        return self._conv(field, self.v_table, periodic)

    def vconv_cross(self, field: np.ndarray, periodic=True) -> np.ndarray:
        """Unlike-species interaction field sum_{s' != s} (Vhat conv rho_s')."""
        conv = self.vconv(field, periodic)
        return conv.sum(axis=-1, keepdims=True) - conv

    def row_sum_dev(self) -> tuple:
        jdev = abs(self.j_table.sum() * self.gamma ** (-self.d / 2.0) - 1.0)
        vdev = abs(self.v_table.sum() - 1.0)
        return jdev, vdev


@lru_cache(maxsize=8)
def build_discrete_kernel(kernel: KacKernel) -> DiscreteKernel:
    """Build (and cache) the lattice tables at mesh gamma^{-1/2}."""
    mesh = kernel.gamma ** -0.5
    raw = _cell_average_table(kernel, mesh)
    raw = 0.5 * (raw + raw[tuple(slice(None, None, -1) for _ in range(kernel.d))])
    target = kernel.gamma ** (kernel.d / 2.0)
    factor = target / raw.sum()
    j_table = raw * factor
    v_table = signal.convolve(j_table, j_table, mode="full") \
        * kernel.gamma ** (-kernel.d)
    return DiscreteKernel(
        gamma=kernel.gamma, d=kernel.d, mesh=mesh,
        j_table=j_table, v_table=v_table,
        renorm_dev=abs(factor - 1.0),
    )


def coarse_kernel_tables(kernel: KacKernel, ell_minus: float):
    """(Jbar table at mesh ell_minus, V^{(ell-)} table) plus the deviation
    constant of |V^{(ell-)} - Vhat| <= c gamma^{d/2} gamma^d (gamma ell_-).

    Diagnostic objects: the coarse tables enter error reporting only.
    """
    d = kernel.d
    jbar = _cell_average_table(kernel, ell_minus)
    # V^{(ell-)}(z, z') = integral of Jbar(z, r) Jbar(r, z') dr with the
    # first slot piecewise constant: sum over cells w of ell^d Jbar Jbar
    vbar = signal.convolve(jbar, jbar, mode="full") * ell_minus ** d

    disc = build_discrete_kernel(kernel)
    ratio = int(round(ell_minus / disc.mesh))
    vr = disc.v_reach
    bound_unit = kernel.gamma ** (d / 2.0) * kernel.gamma ** d \
        * (kernel.gamma * ell_minus)
    cmax = 0.0
    vb_reach = vbar.shape[0] // 2
    for idx in np.ndindex(*disc.v_table.shape):
        delta = np.array(idx) - vr
        zidx = tuple(np.floor_divide(delta, ratio) + vb_reach)
        if any(z < 0 or z >= vbar.shape[0] for z in zidx):
            vb = 0.0
        else:
            vb = vbar[zidx]
        cmax = max(cmax, abs(vb - disc.v_table[idx]) / bound_unit)
    return jbar, vbar, cmax
