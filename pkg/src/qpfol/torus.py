"""Invariant-torus collocation solve and map re-centering.

The torus K satisfies K(theta + omega) = F(K(theta), theta).  In Fourier
coefficients this is a finite algebraic system once F is truncated; it is
solved by a damped Newton iteration on the collocation grid, with the
linear systems assembled in coefficient space (dense LU, sizes
n * (2*ell + 1) stay small for all targets).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import NoConvergence, ResidualTooLarge, SingularJacobian
from .series import (PowerFourierMap, fourier_coeffs, fourier_values,
                     theta_grid)

log = logging.getLogger(__name__)


@dataclass
class TorusEmbedding:
    """Fourier coefficients of K: T -> R^n, harmonics -ell..ell.

    ``coeffs`` has shape (n, 2*ell + 1); reality requires
    K_{-j} = conj(K_j).  ``history`` records Newton residuals of the solve
    that produced the embedding, ``kantorovich`` the rough lambda*mu*nu
    diagnostic of the first step (< 1/2 indicates a safe Newton start).
    """

    ell: int
    coeffs: np.ndarray
    history: list = field(default_factory=list, repr=False)
    kantorovich: float | None = field(default=None, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape[-1] != 2 * self.ell + 1:
            raise ValueError("coefficient width does not match ell")

    @classmethod
    def zero(cls, n, ell):
        return cls(ell, np.zeros((n, 2 * ell + 1), dtype=complex))

    @property
    def n(self):
        return self.coeffs.shape[0]

    def values(self, n_points):
        """Samples K(theta_i) on a uniform grid, shape (n_points, n)."""
        return fourier_values(self.coeffs, n_points).T

    def advanced(self, omega):
        """Coefficients of K(theta + omega)."""
        k = np.arange(-self.ell, self.ell + 1)
        return self.coeffs * np.exp(1j * k * omega)

    def symmetrized(self):
        sym = 0.5 * (self.coeffs + self.coeffs[:, ::-1].conj())
        return TorusEmbedding(self.ell, sym, self.history, self.kantorovich)

    def norm(self):
        return float(np.abs(self.values(4 * self.ell + 4)).max(initial=0.0))

    def resized(self, ell):
        out = np.zeros((self.n, 2 * ell + 1), dtype=complex)
        lo = min(ell, self.ell)
        out[:, ell - lo:ell + lo + 1] = self.coeffs[:, self.ell - lo:self.ell + lo + 1]
        return TorusEmbedding(ell, out)

    def plus(self, other):
        return TorusEmbedding(self.ell, self.coeffs + other.resized(self.ell).coeffs)

    def to_csv(self, path, n_points=None):
        """theta, K_1(theta) ... K_n(theta) on a uniform grid."""
        n_points = n_points or 4 * self.ell + 4
        grid = theta_grid(n_points)
        vals = self.values(n_points).real
        header = "theta," + ",".join(f"K{i+1}" for i in range(self.n))
        data = np.column_stack([grid, vals])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def torus_residual(f_map, torus, n_points=None):
    """max_theta |K(theta + omega) - F(K(theta), theta)| on a uniform grid.

    Contains the Fourier tail of F(K(theta), theta) beyond ell, which no
    K with the same truncation can remove; use a grid finer than the
    collocation grid to expose aliasing.
    """
    n_points = n_points or 4 * torus.ell + 1
    grid = theta_grid(n_points)
    kv = torus.values(n_points)
    fv = f_map.evaluate(kv, grid)
    target = fourier_values(torus.advanced(f_map.omega_f), n_points).T
    return float(np.abs(fv - target).max(initial=0.0))


def _collocation_residual(f_map, torus, n_points):
    """Residual coefficients of the projected (|k| <= ell) torus equations
    and the max of the band-limited residual on the grid."""
    grid = theta_grid(n_points)
    kv = torus.values(n_points)
    fk = fourier_coeffs(f_map.evaluate(kv, grid).T, torus.ell)
    res = torus.advanced(f_map.omega_f) - fk
    return res, float(np.abs(fourier_values(res, n_points)).max(initial=0.0))


def _newton_matrix(f_map, torus, n_points):
    """Dense coefficient-space Jacobian of the collocation system."""
    ell = torus.ell
    n = torus.n
    nk = 2 * ell + 1
    grid = theta_grid(n_points)
    jac = f_map.jacobian(torus.values(n_points), grid)      # (N, n, n)
    # A(theta) needs harmonics up to 2*ell for the convolution block
    a_coeffs = fourier_coeffs(np.moveaxis(jac, 0, -1), 2 * ell)  # (n, n, 4l+1)
    omega = f_map.omega_f
    big = np.zeros((nk, n, nk, n), dtype=complex)
    ks = np.arange(-ell, ell + 1)
    for ik, k in enumerate(ks):
        big[ik, :, ik, :] += np.exp(1j * k * omega) * np.eye(n)
        for jk, j in enumerate(ks):
            big[ik, :, jk, :] -= a_coeffs[:, :, (k - j) + 2 * ell]
    return big.reshape(nk * n, nk * n)


def solve_torus(f_map, torus0=None, tol=1e-11, max_iter=25):
    """Newton solve of the invariant-torus collocation equations.

    Convergence is measured on the projected (|k| <= ell) residual, which
    the collocation equations can drive to zero; the raw grid residual
    additionally carries the Fourier tail of F along the torus and is
    reported via :func:`torus_residual`.  Raises :class:`NoConvergence`
    when the iteration stalls or exceeds max_iter and
    :class:`SingularJacobian` when the collocation Jacobian is numerically
    singular (spectrum touching the unit circle).
    """
    ell = f_map.ell
    n = f_map.n_out
    torus = (torus0.resized(ell) if torus0 is not None
             else TorusEmbedding.zero(n, ell))
    n_points = 4 * ell + 1
    res, rnorm = _collocation_residual(f_map, torus, n_points)
    history = [rnorm]
    kantorovich = None

    for it in range(max_iter):
        if history[-1] <= tol:
            break
        rhs = res.T.reshape(-1)                                # k-major
        mat = _newton_matrix(f_map, torus, n_points)
        try:
            lu, piv = linalg.lu_factor(mat)
        except linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if np.abs(np.diagonal(lu)).min() < 1e-14 * np.abs(np.diagonal(lu)).max():
            raise SingularJacobian(
                "collocation Jacobian numerically singular (1 in the dichotomy spectrum?)")
        delta = linalg.lu_solve((lu, piv), rhs).reshape(-1, n).T

        if kantorovich is None:
            # crude Newton-Kantorovich diagnostic: lam*mu*nu with
            # lam = |first step|, mu = |J^-1|, nu ~ local Jacobian Lipschitz
            lam = float(np.abs(delta).max())
            mu = float(np.linalg.norm(linalg.lu_solve((lu, piv), np.eye(mat.shape[0])), 1))
            shifted = TorusEmbedding(ell, torus.coeffs - delta)
            mat2 = _newton_matrix(f_map, shifted, n_points)
            nu = float(np.linalg.norm(mat2 - mat, 1) / max(lam, 1e-300))
            kantorovich = lam * mu * nu
            log.debug("kantorovich lambda*mu*nu = %.3e", kantorovich)

        # residual-monotone damping
        step = 1.0
        for _ in range(5):
            trial = TorusEmbedding(ell, torus.coeffs - step * delta).symmetrized()
            res_new, r_new = _collocation_residual(f_map, trial, n_points)
            if r_new < history[-1]:
                break
            step *= 0.5
        else:
            raise NoConvergence("torus Newton step does not reduce the residual",
                                residual=history[-1])
        torus = trial
        res = res_new
        history.append(r_new)
        log.debug("torus Newton iter %d residual %.3e", it + 1, r_new)

    if history[-1] > tol:
        raise NoConvergence(
            f"torus Newton did not reach tol={tol:g} in {max_iter} iterations",
            residual=history[-1])
    torus.history = history
    torus.kantorovich = kantorovich
    return torus


def center_map(f_map, torus, tol=1e-11):
    """Shift coordinates onto the torus: F_c(x, theta) = F(K(theta) + x, theta) - K(theta + omega).

    The result satisfies F_c(0, theta) = 0; its degree-0 coefficients are
    explicitly zeroed after checking they are below 10*tol.
    """
    k = torus.resized(f_map.ell)
    shifted = PowerFourierMap.identity(f_map.n_in, f_map.sigma, f_map.ell,
                                       f_map.omega_f)
    shifted.coeffs[:, 0, :] = k.coeffs
    out = f_map.compose(shifted)
    out.coeffs[:, 0, :] -= k.advanced(f_map.omega_f)
    drift = np.abs(fourier_values(out.constant_part(), 4 * f_map.ell + 1)).max(initial=0.0)
    if drift > 10.0 * tol:
        raise ResidualTooLarge(
            f"centered map has |F(0, .)| = {drift:.3e} > 10*tol; torus not converged?")
    out.coeffs[:, 0, :] = 0.0
    out.real = out.real and bool(out.is_real_coeffs())
    return out
