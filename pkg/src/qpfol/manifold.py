"""Invariant-manifold immersions by three routes.

* reconstruction from two complementary foliations (leaves of the
  complement encoder V through z-labelled leaves of U),
* a direct order-by-order solve of the map invariance equation
  W(R(z, theta), theta + omega) = F_d(W(z, theta), theta),
* a direct solve of the vector-field invariance equation
  D1 W . R + omega_f D2 W = g(W, theta) in continuous time.

All three share the linear normalisation D1 W(0, theta) = inclusion of
the chosen diagonalised coordinates, so their coefficients (and the
reduced maps after the same resonance policy) are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (ExternalResonance, NoConvergence, ParametricResonance,
                     ResidualTooLarge, SingularFrame)
from .foliation import ResonantTerm, _local_monomial_map, _selection_matrix
from .models import vector_field_jets
from .series import PowerFourierMap, apply_fourier_matrix, fourier_coeffs, fourier_values
from .torus import TorusEmbedding, theta_grid


@dataclass
class ManifoldModel:
    """Immersion W (nu -> n) with its reduced dynamics R.

    ``immersion`` is expressed in physical coordinates about the torus
    (W(0, theta) = 0); ``immersion_diag`` is the same object in the
    diagonalised frame.  ``continuous`` marks ODE-route models whose R is
    a reduced vector field rather than a map.
    """

    immersion: PowerFourierMap
    immersion_diag: PowerFourierMap
    conjugate: PowerFourierMap
    source: str
    coords: tuple
    continuous: bool = False
    resonant_terms: list = field(default_factory=list)
    order_residuals: list = field(default_factory=list)

    @property
    def nu(self):
        return self.immersion.n_in


def _to_physical(w_diag, dec):
    wd = np.moveaxis(dec.wd_coeffs(), 0, -1)
    w_phys = apply_fourier_matrix(wd, w_diag)
    w_phys.real = bool(w_phys.is_real_coeffs(1e-9))
    return w_phys


def _inclusion_map(coords, n, sigma, ell, omega):
    w = PowerFourierMap.zeros(len(coords), n, sigma, ell, omega, real=False)
    tab = w.table
    for row, c in enumerate(coords):
        unit = tuple(int(row == j) for j in range(len(coords)))
        w.coeffs[c, tab.index[unit], ell] = 1.0
    return w


def reconstruct(u_fol, v_fol, dec, tol=1e-10):
    """Manifold from complementary foliations: U(W(z, theta), theta) = z,
    V(W(z, theta), theta) = 0, solved by degree-graded iteration.

    The nonlinear feedback enters only through lower degrees, so sigma - 1
    sweeps reach the exact truncated fixed point.
    """
    if set(u_fol.coords) & set(v_fol.coords):
        raise ValueError("foliations share coordinates")
    n = u_fol.encoder.n_in
    if sorted(u_fol.coords + v_fol.coords) != list(range(n)):
        raise ValueError("foliations do not partition the coordinates")
    sigma = u_fol.encoder.sigma
    ell = u_fol.encoder.ell
    omega = u_fol.encoder.omega_f
    nu = u_fol.nu

    stacked_lin = np.concatenate([u_fol.encoder.linear_part(),
                                  v_fol.encoder.linear_part()], axis=0)
    n_points = 4 * ell + 1
    lin_vals = np.moveaxis(fourier_values(stacked_lin, n_points), -1, 0)
    dets = np.abs(np.linalg.det(lin_vals))
    if dets.min() < 1e-12 * max(dets.max(), 1e-300):
        raise SingularFrame("stacked encoder linear part singular on the grid")
    inv_vals = np.linalg.inv(lin_vals)
    inv_coeffs = fourier_coeffs(np.moveaxis(inv_vals, 0, -1), ell)

    u_nl = u_fol.encoder.copy()
    u_nl = u_nl.with_linear_part(np.zeros((nu, n)))
    v_nl = v_fol.encoder.copy()
    v_nl = v_nl.with_linear_part(np.zeros((n - nu, n)))

    # sweep s fixes degree s (the nonlinear feedback only reaches degree s
    # through lower degrees of W), so sigma sweeps give the exact truncated
    # fixed point
    z_map = PowerFourierMap.identity(nu, sigma, ell, omega)
    w = None
    for _ in range(sigma):
        if w is None:
            rhs = PowerFourierMap.stack([z_map, PowerFourierMap.zeros(
                nu, n - nu, sigma, ell, omega)])
        else:
            rhs = PowerFourierMap.stack([z_map - u_nl.compose(w),
                                         (-1.0) * v_nl.compose(w)])
        w = apply_fourier_matrix(inv_coeffs, rhs)
    res_u = (u_fol.encoder.compose(w) - z_map).norm()
    res_v = v_fol.encoder.compose(w).norm()
    if max(res_u, res_v) > tol:
        raise NoConvergence(
            f"reconstruction residuals ({res_u:.2e}, {res_v:.2e}) above {tol:g}",
            residual=max(res_u, res_v))
    return ManifoldModel(_to_physical(w, dec), w, u_fol.conjugate.copy(),
                         "FOIL", u_fol.coords,
                         resonant_terms=list(u_fol.resonant_terms),
                         order_residuals=[res_u, res_v])


def _solve_graded(f_diag, dec, coords, sigma, autonomous, delta_int,
                  delta_ext, fixed_conjugate, continuous, omega_shift,
                  lam_diag, rhs_residual):
    """Shared order-by-order homological solve for both direct routes.

    ``rhs_residual(w, r, degree)`` returns the order-``degree`` coefficient
    block of the invariance-equation residual built from the partial
    solutions, its monomial selection and the leak of lower orders;
    ``omega_shift`` is e^{i k omega} for the map route and i k omega_f for
    the vector-field route (additive).  The denominator is
    prod(lambda)^m * shift - lambda_i0 in multiplicative form or
    <m, lambda> + shift - lambda_i0 in additive form.

    When ``fixed_conjugate`` is given, R is not an unknown: its terms
    enter the right-hand side and every W coefficient is solved directly
    (pins the normal-form gauge; a linear R makes the linear-conjugate
    variant).
    """
    n = f_diag.n_in
    ell = f_diag.ell
    omega = f_diag.omega_f
    w = _inclusion_map(coords, n, sigma, ell, omega)
    if fixed_conjugate is not None:
        r = fixed_conjugate._pad(sigma, ell)
        r = PowerFourierMap(len(coords), len(coords), sigma, ell, omega,
                            r.coeffs.copy(), real=False)
    else:
        r = PowerFourierMap.from_linear(np.diag(lam_diag[list(coords)]),
                                        sigma, ell, omega, real=False)
    table = w.table        # monomials over nu variables
    kk = np.arange(-ell, ell + 1)
    in_rows = np.zeros(n, dtype=bool)
    in_rows[list(coords)] = True
    lam_sel = lam_diag[list(coords)]

    resonant, residuals = [], []
    for degree in range(2, sigma + 1):
        gamma, sel, low = rhs_residual(w, r, degree)
        residuals.append(low)
        gamma = -gamma
        mono = table.exps[sel]
        if continuous:
            inner = mono @ lam_sel
            den = (inner[None, :, None] + omega_shift[None, None, :]
                   - lam_diag[:, None, None])
        else:
            inner = np.prod(lam_sel[None, :] ** mono, axis=1)
            den = (inner[None, :, None] * omega_shift[None, None, :]
                   - lam_diag[:, None, None])

        if fixed_conjugate is not None:
            res_mask = np.zeros(den.shape, dtype=bool)
        else:
            res_mask = (np.abs(den) < delta_int) & in_rows[:, None, None]
            if autonomous:
                parametric = res_mask & (kk != 0)[None, None, :]
                bad = parametric & (np.abs(den) < delta_ext)
                if bad.any():
                    i0, m_pos, k_pos = np.argwhere(bad)[0]
                    raise ParametricResonance(
                        f"k = {int(kk[k_pos])} internal denominator "
                        f"{abs(den[i0, m_pos, k_pos]):.2e} below delta_ext")
                res_mask &= (kk == 0)[None, None, :]

        tiny = (np.abs(den) < delta_ext) & ~res_mask
        if tiny.any():
            i0, m_pos, k_pos = np.argwhere(tiny)[0]
            raise ExternalResonance(
                f"denominator {abs(den[i0, m_pos, k_pos]):.2e} below delta_ext "
                f"at row {i0}, degree {degree}, k={int(kk[k_pos])}")

        w.coeffs[:, sel, :] = np.where(res_mask, 0.0, gamma / den)
        w._powers.clear()
        if res_mask.any():
            row_of = {c: i for i, c in enumerate(coords)}
            for i0, m_pos, k_pos in np.argwhere(res_mask):
                r.coeffs[row_of[i0], sel[m_pos], k_pos] = gamma[i0, m_pos, k_pos]
                multi = tuple(int(c) for c in np.repeat(list(coords), mono[m_pos]))
                resonant.append(ResonantTerm(int(i0), multi, int(kk[k_pos])))
            r._powers.clear()
    return w, r, resonant, residuals


def solve_manifold_map(f_diag, dec, index_set, sigma=None, autonomous=True,
                       delta_int=0.1, delta_ext=1e-8, linear_conjugate=False,
                       conjugate=None):
    """Direct manifold from the map invariance equation.

    Solves W(R(z, theta), theta + omega) = F_d(W(z, theta), theta) order
    by order; internal near-resonant terms go into R under the same
    policy as the foliation solve.  Passing ``conjugate`` fixes R (the
    normal-form gauge of another solve, enabling coefficientwise
    comparison); ``linear_conjugate`` fixes R to the Lambda restriction.
    """
    sigma = sigma or f_diag.sigma
    coords = tuple(dec.coords_of(index_set))
    ell = f_diag.ell
    kk = np.arange(-ell, ell + 1)
    shift = np.exp(1j * kk * f_diag.omega_f)
    lam = dec.lambda_diag
    if linear_conjugate and conjugate is None:
        conjugate = PowerFourierMap.from_linear(
            np.diag(lam[list(coords)]), sigma, ell, f_diag.omega_f, real=False)

    def rhs_residual(w, r, degree):
        lhs = w.advanced().compose(r)
        rhs = f_diag.compose(w)
        diff = lhs - rhs
        low = np.abs(diff.coeffs[:, diff.table.degree < degree, :]).max(initial=0.0)
        sel = np.flatnonzero(diff.table.degree == degree)
        return diff.coeffs[:, sel, :], sel, low

    w, r, resonant, residuals = _solve_graded(
        f_diag, dec, coords, sigma, autonomous, delta_int, delta_ext,
        conjugate, continuous=False, omega_shift=shift,
        lam_diag=lam, rhs_residual=rhs_residual)
    return ManifoldModel(_to_physical(w, dec), w, r, "MAP", coords,
                         resonant_terms=resonant, order_residuals=residuals)


def diagonalized_vector_field(model, torus, dec, dt, sigma, ell, snap_tol=1e-5):
    """Vector-field jets about the torus in the map's bundle frame.

    Builds g(y, theta) = U^d [f(K + W^d y, theta) - omega_f K'] +
    omega_f U^d' W^d y and snaps its linear part onto the continuous
    eigenvalues log(Lambda)/dt, keeping mode labels shared with the map
    route.  Returns (g, lambda_c).
    """
    jets = vector_field_jets(model, sigma, ell, center=torus)
    wd = np.moveaxis(dec.wd_coeffs(), 0, -1)
    ud = np.moveaxis(dec.ud_coeffs(), 0, -1)
    k_arr = np.arange(-dec.ell, dec.ell + 1)
    w_map = PowerFourierMap.from_linear(wd, sigma, ell, model.omega_f, real=False)
    g = apply_fourier_matrix(ud, jets.compose(w_map))
    # drift corrections: -U^d omega_f K' and + omega_f U^d' W^d y
    kprime = torus.resized(dec.ell).coeffs * (1j * k_arr) * model.omega_f
    g.coeffs[:, 0, :] -= _matvec_fourier(ud, kprime, ell)
    ud_prime = ud * (1j * k_arr)
    lin_extra = _matmul_fourier(ud_prime, wd, ell) * model.omega_f
    lin = g.linear_part() + lin_extra
    lam_c = np.log(dec.lambda_diag) / dt
    target = np.diag(lam_c)[:, :, None] * (np.arange(-ell, ell + 1) == 0)
    if np.abs(lin - target).max() > snap_tol:
        raise ResidualTooLarge(
            f"continuous linear part deviates from log(Lambda)/dt by "
            f"{np.abs(lin - target).max():.2e}")
    if np.abs(g.constant_part()).max() > snap_tol:
        raise ResidualTooLarge("torus residual too large for the ODE route")
    g = g.with_constant_part(np.zeros_like(g.constant_part()))
    g = g.with_linear_part(np.diag(lam_c))
    g.real = False
    return g, lam_c


def _matvec_fourier(mat, vec, ell_out):
    """Fourier coefficients of M(theta) v(theta); mat (p, q, nk), vec (q, nk)."""
    n_points = 4 * max((mat.shape[-1] - 1) // 2, (vec.shape[-1] - 1) // 2) + 1
    mv = np.moveaxis(fourier_values(mat, n_points), -1, 0)
    vv = fourier_values(vec, n_points).T
    prod = np.einsum("tpq,tq->pt", mv, vv)
    return fourier_coeffs(prod, ell_out)


def _matmul_fourier(a, b, ell_out):
    """Fourier coefficients of A(theta) B(theta); both (p, q, nk)."""
    n_points = 4 * max((a.shape[-1] - 1) // 2, (b.shape[-1] - 1) // 2) + 1
    av = np.moveaxis(fourier_values(a, n_points), -1, 0)
    bv = np.moveaxis(fourier_values(b, n_points), -1, 0)
    prod = np.einsum("tpq,tqr->prt", av, bv)
    return fourier_coeffs(prod, ell_out)


def solve_manifold_ode(model, torus, dec, dt, index_set, sigma, ell,
                       autonomous=True, delta_int=0.1, delta_ext=1e-8,
                       linear_conjugate=False, conjugate=None, snap_tol=1e-5):
    """Direct manifold from the vector-field invariance equation.

    Solves D1 W(z, theta) R(z) + omega_f D2 W(z, theta) = g(W(z, theta), theta)
    in the diagonalised frame; R is the reduced vector field (continuous
    time).  The internal-resonance threshold delta_int is interpreted per
    map step and divided by dt to compare against continuous denominators.
    """
    coords = tuple(dec.coords_of(index_set))
    g, lam_c = diagonalized_vector_field(model, torus, dec, dt, sigma, ell,
                                         snap_tol)
    kk = np.arange(-ell, ell + 1)
    shift = 1j * kk * model.omega_f
    if linear_conjugate and conjugate is None:
        conjugate = PowerFourierMap.from_linear(
            np.diag(lam_c[list(coords)]), sigma, ell, model.omega_f, real=False)

    def rhs_residual(w, r, degree):
        lhs = None
        for i in range(w.n_in):
            term = w.dx(i) * r.component(i)
            lhs = term if lhs is None else lhs + term
        lhs = lhs + model.omega_f * w.dtheta()
        diff = lhs - g.compose(w)
        low = np.abs(diff.coeffs[:, diff.table.degree < degree, :]).max(initial=0.0)
        sel = np.flatnonzero(diff.table.degree == degree)
        return diff.coeffs[:, sel, :], sel, low

    w, r, resonant, residuals = _solve_graded(
        g, dec, coords, sigma, autonomous, delta_int / dt, delta_ext,
        conjugate, continuous=True, omega_shift=shift,
        lam_diag=lam_c, rhs_residual=rhs_residual)
    return ManifoldModel(_to_physical(w, dec), w, r, "ODE", coords,
                         continuous=True, resonant_terms=resonant,
                         order_residuals=residuals)


def manifold_invariance_residual(mod, f_diag, xs, thetas):
    """Pointwise residual of the applicable invariance equation in the
    diagonalised frame (map route only)."""
    if mod.continuous:
        raise ValueError("pointwise map residual undefined for the ODE route")
    xs = np.atleast_2d(np.asarray(xs, dtype=complex))
    thetas = np.broadcast_to(np.asarray(thetas, dtype=float), xs.shape[:1])
    w, r = mod.immersion_diag, mod.conjugate
    lhs = w.evaluate(r.evaluate(xs, thetas), thetas + f_diag.omega_f)
    rhs = f_diag.evaluate(w.evaluate(xs, thetas), thetas)
    return float(np.abs(lhs - rhs).max())


def manifold_to_csv(mod, path, r_values, n_gamma=32, n_theta=16, torus=None):
    """Sample the manifold surface on a polar grid of the reduced plane.

    Columns: r, gamma, theta, x_1..x_n (physical coordinates, with the
    torus offset added when given)."""
    gammas = theta_grid(n_gamma)
    thetas = theta_grid(n_theta)
    rv, gm, th = [a.reshape(-1) for a in
                  np.meshgrid(np.atleast_1d(r_values), gammas, thetas,
                              indexing="ij")]
    z = rv * np.exp(1j * gm)
    pts = np.column_stack([z, z.conj()])
    x = mod.immersion.evaluate(pts, th).real
    if torus is not None:
        k = torus.coeffs.real
        ks = np.arange(-torus.ell, torus.ell + 1)
        phases = np.exp(1j * np.outer(th, ks))
        x = x + (phases @ torus.coeffs.T).real
    n = mod.immersion.n_out
    header = "r,gamma,theta," + ",".join(f"x{i+1}" for i in range(n))
    np.savetxt(path, np.column_stack([rv, gm, th, x]), delimiter=",",
               header=header, comments="")
