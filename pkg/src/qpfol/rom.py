"""Frequency and damping curves from a manifold immersion and its
reduced dynamics.

The reduced map R(z) = (s(z, conj z), conj s(...)) is taken to polar
coordinates, giving the radial return R(r) and rotation T(r).  Because
the amplitude and phase of the immersion W distort the reduced
coordinates, both are corrected: kappa measures the mean amplitude of W
along a reduced circle (its inverse rho re-parametrises r), and phi
removes the radius-dependent phase shift between circles.  The corrected
pair (R~, T~) then yields the instantaneous frequency omega(r) = T~/dt
and damping ratio zeta(r) = -log(R~/r)/T~.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonMonotoneKappa, NotRotationEquivariant
from .series import theta_grid

_TWO_PI = 2.0 * np.pi


@dataclass
class ScalarRadialSeries:
    """Radial function sampled on a grid with a fitted polynomial summary.

    ``coeffs`` are ascending powers of r (degree <= the generating sigma);
    when an exact evaluator ``fn`` is attached, calls use it, otherwise the
    fitted polynomial.
    """

    r: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray
    fn: callable = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, r, values, deg, fn=None):
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        deg = int(min(deg, len(r) - 1))
        coeffs = np.polynomial.polynomial.polyfit(r, values, deg)
        return cls(r, values, coeffs, fn)

    def __call__(self, x):
        if self.fn is not None:
            return self.fn(x)
        return np.polynomial.polynomial.polyval(x, self.coeffs)


@dataclass
class BackboneCurves:
    """Sampled reduced-order model: omega(r), zeta(r) with accuracy data."""

    r: np.ndarray
    amplitude: np.ndarray
    omega: np.ndarray
    zeta: np.ndarray
    e_rel: np.ndarray
    source: str = ""

    def __post_init__(self):
        lens = {len(self.r), len(self.amplitude), len(self.omega),
                len(self.zeta), len(self.e_rel)}
        if len(lens) != 1:
            raise ValueError("backbone columns must share one grid")
        if np.any(np.diff(self.r) <= 0):
            raise ValueError("r grid must be strictly increasing")

    def to_csv(self, path):
        header = "r,amplitude,omega,zeta,e_rel,source"
        rows = np.column_stack([self.r, self.amplitude, self.omega,
                                self.zeta, self.e_rel])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row)
                         + f",{self.source}\n")


def default_r_grid(r_max, n_r=64, r_min=1e-4):
    """Log-spaced amplitude grid used by the pipeline."""
    return np.geomspace(r_min, r_max, n_r)


def _check_pair_structure(r_map, tol=1e-9):
    if r_map.n_in != 2 or r_map.n_out != 2:
        raise ValueError("polar reduction expects a 2d conjugate-pair map")
    k = np.arange(-r_map.ell, r_map.ell + 1)
    nonaut = np.abs(r_map.coeffs[:, :, k != 0]).max(initial=0.0)
    if nonaut > tol * (1.0 + np.abs(r_map.coeffs).max()):
        raise NotRotationEquivariant(
            f"conjugate map carries theta dependence ({nonaut:.2e}); "
            "polar reduction needs an autonomous R")


def polar_rates(r_map, radii, n_gamma, tol=1e-10):
    """Samples of e^{-i gamma} s(r e^{i gamma}, r e^{-i gamma}) per radius.

    Verifies gamma independence (rotational normal form) and returns the
    gamma-averaged complex rate for each radius.
    """
    _check_pair_structure(r_map)
    gammas = theta_grid(n_gamma)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    z = radii[:, None] * np.exp(1j * gammas)[None, :]
    pts = np.stack([z.reshape(-1), z.conj().reshape(-1)], axis=1)
    s = r_map.evaluate(pts, np.zeros(pts.shape[0]))[:, 0].reshape(len(radii), n_gamma)
    v = s * np.exp(-1j * gammas)[None, :]
    spread = np.abs(v - v.mean(axis=1, keepdims=True)).max(axis=1)
    scale = 1.0 + np.abs(v).max(axis=1)
    if np.any(spread > tol * scale):
        worst = float((spread / scale).max())
        raise NotRotationEquivariant(
            f"gamma dependence {worst:.2e} exceeds tolerance; R is not in "
            "rotational normal form")
    return v.mean(axis=1)


def to_polar(r_map, r_grid, n_gamma=None, tol=1e-10):
    """Radial return R(r) = |s| and rotation T(r) = arg(e^{-i gamma} s).

    Returns two :class:`ScalarRadialSeries` carrying exact evaluators.
    """
    sigma = r_map.sigma
    n_gamma = n_gamma or 2 * sigma + 1

    def rate_fn(x):
        out = polar_rates(r_map, x, n_gamma, tol)
        return out if np.ndim(x) else out[0]

    rates = rate_fn(r_grid)
    radial = ScalarRadialSeries.from_samples(
        r_grid, np.abs(rates), sigma, fn=lambda x: np.abs(rate_fn(x)))
    angular = ScalarRadialSeries.from_samples(
        r_grid, np.angle(rates), sigma, fn=lambda x: np.angle(rate_fn(x)))
    return radial, angular


class _HatImmersion:
    """Evaluator of W-hat(r, gamma, theta) = W(r e^{i gamma}, r e^{-i gamma}, theta)
    and its (gamma, theta)-grid quadratures, vectorised over radii."""

    def __init__(self, w_map, n_gamma, n_theta):
        self.w = w_map
        tab = w_map.table
        self.deg = tab.degree
        self.rot = tab.exps[:, 0] - tab.exps[:, 1]      # gamma harmonic a - b
        self.n_gamma = n_gamma
        self.n_theta = n_theta
        gam = theta_grid(n_gamma)
        e_gamma = np.exp(1j * np.outer(self.rot, gam))
        k = np.arange(-w_map.ell, w_map.ell + 1)
        e_theta = np.exp(1j * np.outer(k, theta_grid(n_theta)))
        # pre-contract everything except the radial powers
        self.base = np.einsum("omk,mg,kt->mogt", w_map.coeffs, e_gamma, e_theta)
        self.base_dg = np.einsum("omk,mg,kt->mogt", w_map.coeffs,
                                 e_gamma * (1j * self.rot)[:, None], e_theta)

    def _powers(self, r, shift=0):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if shift == 0:
            return r[:, None] ** self.deg[None, :]
        p = self.deg[None, :] * r[:, None] ** np.maximum(self.deg - 1, 0)[None, :]
        return np.where(self.deg[None, :] == 0, 0.0, p)

    def values(self, r):
        """W-hat samples, shape (len(r), n_out, n_gamma, n_theta), real."""
        return np.einsum("Rm,mogt->Rogt", self._powers(r), self.base).real

    def dr_values(self, r):
        return np.einsum("Rm,mogt->Rogt", self._powers(r, 1), self.base).real

    def dgamma_values(self, r):
        return np.einsum("Rm,mogt->Rogt", self._powers(r), self.base_dg).real

    def mean_square(self, r):
        v = self.values(r)
        return (v ** 2).sum(axis=1).mean(axis=(1, 2))

    def phase_ratio(self, r):
        """<D1 W, D2 W> / <D2 W, D2 W> averaged over the grid (0 at r = 0)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        d1 = self.dr_values(r)
        d2 = self.dgamma_values(r)
        num = (d1 * d2).sum(axis=1).mean(axis=(1, 2))
        den = (d2 * d2).sum(axis=1).mean(axis=(1, 2))
        out = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
        out[r == 0.0] = 0.0
        return out

    def mean_norm(self, r):
        v = self.values(r)
        return np.sqrt((v ** 2).sum(axis=1)).mean(axis=(1, 2))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def amplitude_normalization(w_map, r_grid, n_gamma=None, n_theta=None):
    """Amplitude map kappa, its inverse rho and the phase correction phi.

    kappa(rho) is the quadratic mean of |W-hat(rho, ., .)| over the
    (gamma, theta) torus with the 1/(2 pi) normalisation of the d = 1
    convention; rho = kappa^{-1} by bisection; phi is the cumulative
    Gauss-Legendre integral of the phase-distortion ratio.  Quadrature
    grids are sized for exactness on the represented trigonometric
    degrees.  Raises :class:`NonMonotoneKappa` when the amplitude map
    folds inside the requested range.
    """
    sigma = w_map.sigma
    n_gamma = n_gamma or 2 * sigma + 1
    n_theta = n_theta or 4 * w_map.ell + 1
    hat = _HatImmersion(w_map, n_gamma, n_theta)

    def kappa_fn(rho):
        out = np.sqrt(hat.mean_square(rho))
        return out if np.ndim(rho) else float(out[0])

    r_grid = np.asarray(r_grid, dtype=float)
    r_max = r_grid.max()

    # bracket the inverse: expand until kappa exceeds the largest target
    hi = r_max
    for _ in range(60):
        if kappa_fn(hi) >= r_max:
            break
        hi *= 1.5
    else:
        raise NonMonotoneKappa("kappa never reaches the requested amplitude")

    probe = np.linspace(0.0, hi, 4 * len(r_grid) + 1)
    kp = kappa_fn(probe)
    if np.any(np.diff(kp) <= 0.0):
        raise NonMonotoneKappa(
            "amplitude map kappa is not monotone inside the requested range")

    def rho_fn(target):
        t_arr = np.atleast_1d(np.asarray(target, dtype=float))
        lo = np.zeros_like(t_arr)
        up = np.full_like(t_arr, hi)
        for _ in range(60):
            mid = 0.5 * (lo + up)
            below = kappa_fn(mid) < t_arr
            lo = np.where(below, mid, lo)
            up = np.where(below, up, mid)
        out = 0.5 * (lo + up)
        return out if np.ndim(target) else float(out[0])

    def phi_fn(x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x_arr)
        step = r_max / 64.0
        for i, xv in enumerate(x_arr):
            if xv <= 0.0:
                continue
            n_seg = max(4, int(np.ceil(xv / step)))
            edges = np.linspace(0.0, xv, n_seg + 1)
            mids = 0.5 * (edges[1:] + edges[:-1])
            halves = 0.5 * np.diff(edges)
            nodes = (mids[:, None] + halves[:, None] * _GL_NODES[None, :]).reshape(-1)
            vals = hat.phase_ratio(nodes).reshape(n_seg, -1)
            out[i] = -float((halves * (vals * _GL_WEIGHTS[None, :]).sum(axis=1)).sum())
        return out if np.ndim(x) else float(out[0])

    rho_vals = rho_fn(r_grid)
    kappa = ScalarRadialSeries.from_samples(r_grid, kappa_fn(r_grid), sigma,
                                            fn=kappa_fn)
    rho = ScalarRadialSeries.from_samples(r_grid, rho_vals, sigma, fn=rho_fn)
    phi = ScalarRadialSeries.from_samples(r_grid, phi_fn(r_grid), sigma,
                                          fn=phi_fn)
    return kappa, rho, phi


def corrected_dynamics(radial, angular, kappa, rho, phi):
    """Distortion-free polar dynamics:

    R~(r) = kappa(R(rho(r))),  T~(r) = T(rho(r)) + phi(rho(r)) - phi(R(rho(r))).
    """
    r_grid = radial.r
    rho_r = rho(r_grid)
    r_of_rho = radial(rho_r)
    rt_vals = kappa(r_of_rho)
    tt_vals = angular(rho_r) + phi(rho_r) - phi(r_of_rho)
    sigma = len(radial.coeffs) - 1
    rt = ScalarRadialSeries.from_samples(
        r_grid, rt_vals, sigma, fn=lambda x: kappa(radial(rho(x))))
    tt = ScalarRadialSeries.from_samples(
        r_grid, tt_vals, sigma,
        fn=lambda x: angular(rho(x)) + phi(rho(x)) - phi(radial(rho(x))))
    return rt, tt


def backbone(rt, tt, dt):
    """Instantaneous frequency and damping of a discrete reduced map:

    omega(r) = T~(r)/dt,  zeta(r) = -log(R~(r)/r)/T~(r).
    """
    r = rt.r
    tt_vals = np.asarray(tt.values, dtype=float)
    if np.any(tt_vals <= 0.0):
        raise ValueError("corrected rotation must be positive on the grid")
    omega = tt_vals / dt
    zeta = -np.log(rt.values / r) / tt_vals
    return omega, zeta


def backbone_continuous(r_map_c, kappa, rho, phi, hat, r_grid, n_gamma=None):
    """Instantaneous frequency and damping of a reduced vector field.

    The dt -> 0 limit of the discrete formulas: with radial/angular rates
    rdot = Re(e^{-i gamma} s_c) and gammadot = Im(e^{-i gamma} s_c)/rho of
    dz/dt = s_c(z, conj z),

        omega(r) = gammadot(rho(r)) - phi'(rho(r)) rdot(rho(r)),
        zeta(r)  = -kappa'(rho(r)) rdot(rho(r)) / (r omega(r)),

    where kappa' and phi' are evaluated through the same quadratures.
    """
    n_gamma = n_gamma or 2 * r_map_c.sigma + 1
    rho_r = np.asarray(rho(r_grid), dtype=float)
    rates = polar_rates(r_map_c, rho_r, n_gamma)
    rdot = rates.real
    gammadot = rates.imag / rho_r
    phi_prime = -hat.phase_ratio(rho_r)
    # kappa' = <W-hat, D1 W-hat> / kappa via the exact grid quadrature
    kap = np.asarray(kappa(rho_r), dtype=float)
    dkap = (hat.values(rho_r) * hat.dr_values(rho_r)).sum(axis=1).mean(axis=(1, 2)) / kap
    omega = gammadot - phi_prime * rdot
    zeta = -dkap * rdot / (r_grid * omega)
    return omega, zeta


def reduced_flow(r_map_c, z, dt, substeps=64):
    """Time-dt flow of dz/dt = s_c(z, conj z), vectorised RK4 on the
    first component with the conjugate partner rebuilt per stage."""
    h = dt / substeps
    z = np.asarray(z, dtype=complex)
    zero = np.zeros(z.shape[0])

    def rate(zz):
        return r_map_c.evaluate(np.stack([zz, zz.conj()], axis=1), zero)[:, 0]

    for _ in range(substeps):
        k1 = rate(z)
        k2 = rate(z + 0.5 * h * k1)
        k3 = rate(z + 0.5 * h * k2)
        k4 = rate(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return z


def relative_error(f_map, manifold, r_grid, n_gamma=8, n_theta=8, dt=None,
                   guard=1e-14):
    """Accuracy measure per radius:

    E_rel = mean |F(W(z, theta), theta) - W(R(z, theta), theta + omega)| / |W(z, theta)|

    over (gamma, theta) samples, with the paired physical amplitude
    mean |W|.  For continuous-time models the reduced map is the time-dt
    flow of the reduced vector field.
    """
    w = manifold.immersion
    r_red = manifold.conjugate
    omega = f_map.omega_f
    gammas = theta_grid(n_gamma)
    thetas = theta_grid(n_theta)
    gg, tt = np.meshgrid(gammas, thetas, indexing="ij")
    gg = gg.reshape(-1)
    tt = tt.reshape(-1)
    e_out = np.empty(len(r_grid))
    a_out = np.empty(len(r_grid))
    for i, rv in enumerate(np.asarray(r_grid, dtype=float)):
        z = rv * np.exp(1j * gg)
        pts = np.stack([z, z.conj()], axis=1)
        wz = w.evaluate(pts, tt)
        fwz = f_map.evaluate(wz.real if w.real else wz, tt)
        if manifold.continuous:
            rz1 = reduced_flow(r_red, pts[:, :1].reshape(-1), dt)
            rz = np.stack([rz1, rz1.conj()], axis=1)
        else:
            rz = r_red.evaluate(pts, tt)
        wrz = w.evaluate(rz, tt + omega)
        norms = np.linalg.norm(wz.real, axis=1)
        err = np.linalg.norm((fwz - wrz), axis=1)
        keep = norms >= guard
        e_out[i] = float((err[keep] / norms[keep]).mean()) if keep.any() else 0.0
        a_out[i] = float(norms.mean())
    return e_out, a_out
