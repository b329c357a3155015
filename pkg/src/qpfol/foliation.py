"""Order-by-order solution of the foliation invariance equation.

Given the diagonalised map F_d(x, theta) = Lambda x + N(x, theta), the
encoder U and conjugate map R satisfy

    R(U(x, theta), theta) = U(F_d(x, theta), theta + omega).

Both are mixed power-Fourier series; the linear parts are fixed to the
coordinate selection and the Lambda restriction, and each higher-order
coefficient decouples into a scalar equation with denominator
lambda_{i0} - lambda_{i1}..lambda_{ij} e^{i k omega}.  Near-resonant
internal terms are kept in R (normal form); everything else is solved
into U.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ExternalResonance, ParametricResonance
from .series import PowerFourierMap, monomial_table

_TWO_PI = 2.0 * np.pi


@dataclass
class ResonantTerm:
    target: int     # output coordinate (diagonalised frame)
    source: tuple   # monomial multiset over diagonalised coordinates
    harmonic: int


@dataclass
class FoliationModel:
    """Encoder U (n -> nu) and conjugate map R (nu -> nu).

    ``coords`` are the diagonalised-frame coordinate indices selected by
    the cluster index set; U's linear part is the corresponding selection
    rows and R's linear part the matching Lambda restriction.  When
    ``autonomous`` holds, R carries only k = 0 Fourier content.
    """

    encoder: PowerFourierMap
    conjugate: PowerFourierMap
    clusters: tuple
    coords: tuple
    autonomous: bool
    resonant_terms: list = field(default_factory=list)
    order_residuals: list = field(default_factory=list)

    @property
    def nu(self):
        return len(self.coords)


def _selection_matrix(coords, n):
    sel = np.zeros((len(coords), n))
    for row, c in enumerate(coords):
        sel[row, c] = 1.0
    return sel


def _local_monomial_map(table_full, coords, degree):
    """Map full-frame monomials supported on ``coords`` to local indices."""
    local_tab = monomial_table(len(coords), table_full.sigma)
    sel = np.flatnonzero(table_full.degree == degree)
    other = [v for v in range(table_full.n_vars) if v not in coords]
    supported = sel[(table_full.exps[sel][:, other] == 0).all(axis=1)] if other else sel
    local_idx = np.array([local_tab.index[tuple(table_full.exps[m][list(coords)])]
                          for m in supported], dtype=np.int64)
    return supported, local_idx


def _homological_rhs(u_map, r_map, f_diag, degree):
    """Order-``degree`` coefficients of R(U(x)) - U(F_d(x), theta + omega)
    computed from the partial solutions (lower orders must cancel)."""
    lhs = r_map.compose(u_map)
    rhs = u_map.advanced().compose(f_diag)
    diff = lhs - rhs
    low = np.abs(diff.coeffs[:, diff.table.degree < degree, :]).max(initial=0.0)
    sel = np.flatnonzero(diff.table.degree == degree)
    return diff.coeffs[:, sel, :], sel, low


def solve_foliation(f_diag, dec, index_set, autonomous=True,
                    delta_int=0.1, delta_ext=1e-8, sigma=None,
                    report=None):
    """Solve the foliation invariance equation through order sigma.

    ``index_set`` selects dichotomy clusters; their coordinates form the
    reduced space.  Internal coefficients whose denominator falls below
    delta_int move into R (only at k = 0 when autonomous; a k != 0
    internal hit below delta_ext raises :class:`ParametricResonance`).
    Cross terms must be solvable: a denominator below delta_ext there
    raises :class:`ExternalResonance`.
    """
    sigma = sigma or f_diag.sigma
    ell = f_diag.ell
    n = f_diag.n_in
    omega = f_diag.omega_f
    coords = tuple(dec.coords_of(index_set))
    nu = len(coords)
    lam = dec.lambda_diag

    if report is None:
        report = None if delta_ext <= 0 else _precheck(dec, index_set, sigma, ell, delta_ext)
    if report is not None and report.external:
        worst = min(report.external, key=lambda h: h.denominator)
        raise ExternalResonance(
            f"cross denominator {worst.denominator:.2e} at target {worst.target}, "
            f"source {worst.source}, k={worst.harmonic}")

    u_map = PowerFourierMap.from_linear(_selection_matrix(coords, n),
                                        sigma, ell, omega, real=False)
    r_map = PowerFourierMap.from_linear(np.diag(lam[list(coords)]),
                                        sigma, ell, omega, real=False)

    table = u_map.table
    exps = table.exps
    in_set = np.zeros(n, dtype=bool)
    in_set[list(coords)] = True
    kk = np.arange(-ell, ell + 1)
    phases = np.exp(1j * kk * omega)
    lam_out = lam[list(coords)]

    resonant = []
    residuals = []
    for degree in range(2, sigma + 1):
        gamma, sel, low = _homological_rhs(u_map, r_map, f_diag, degree)
        residuals.append(low)
        gamma = -gamma
        mono = exps[sel]                                   # (M, n)
        lam_prod = np.prod(lam[None, :] ** mono, axis=1)   # (M,)
        den = (lam_out[:, None, None]
               - lam_prod[None, :, None] * phases[None, None, :])
        external = (mono[:, ~in_set].sum(axis=1) > 0) if (~in_set).any() \
            else np.zeros(len(sel), dtype=bool)

        res_mask = (np.abs(den) < delta_int) & ~external[None, :, None]
        if autonomous:
            parametric = res_mask & (kk != 0)[None, None, :]
            bad = parametric & (np.abs(den) < delta_ext)
            if bad.any():
                row, m_pos, k_pos = np.argwhere(bad)[0]
                raise ParametricResonance(
                    f"k = {int(kk[k_pos])} internal denominator "
                    f"{abs(den[row, m_pos, k_pos]):.2e} below delta_ext")
            res_mask &= (kk == 0)[None, None, :]

        tiny = (np.abs(den) < delta_ext) & ~res_mask
        if tiny.any():
            row, m_pos, k_pos = np.argwhere(tiny)[0]
            raise ExternalResonance(
                f"denominator {abs(den[row, m_pos, k_pos]):.2e} below delta_ext "
                f"at target {coords[row]}, source degree {degree}, k={int(kk[k_pos])}")

        u_new = np.where(res_mask, 0.0, gamma / den)
        u_map.coeffs[:, sel, :] = u_new
        u_map._powers.clear()   # in-place update invalidates cached powers

        if res_mask.any():
            supported, local_idx = _local_monomial_map(table, coords, degree)
            local_of = dict(zip(supported.tolist(), local_idx.tolist()))
            for row, m_pos, k_pos in np.argwhere(res_mask):
                m_global = int(sel[m_pos])
                r_map.coeffs[row, local_of[m_global], k_pos] = gamma[row, m_pos, k_pos]
                multi = tuple(int(v) for v in np.repeat(np.arange(n), exps[m_global]))
                resonant.append(ResonantTerm(coords[row], multi, int(kk[k_pos])))
            r_map._powers.clear()

    return FoliationModel(u_map, r_map, tuple(sorted(index_set)), coords,
                          autonomous, resonant, residuals)


def _precheck(dec, index_set, sigma, ell, delta_ext):
    from .bundles import check_nonresonance
    return check_nonresonance(dec, index_set, sigma, ell, delta_ext)


def complementary_foliation(f_diag, dec, index_set, **kwargs):
    """Foliation for the complement cluster set (the V/S pair)."""
    comp = sorted(set(range(dec.n_clusters)) - set(index_set))
    if not comp:
        raise ValueError("index set already covers every cluster")
    return solve_foliation(f_diag, dec, comp, **kwargs)


def invariance_residual(fol, f_diag, xs, thetas, floor=1e-30):
    """max over samples of |R(U(x, theta), theta) - U(F_d(x, theta), theta + omega)|
    normalised by max(|x|^(sigma + 1), floor), exposing the asymptotic order."""
    xs = np.atleast_2d(np.asarray(xs, dtype=complex))
    thetas = np.broadcast_to(np.asarray(thetas, dtype=float), xs.shape[:1])
    sigma = fol.encoder.sigma
    u_of_x = fol.encoder.evaluate(xs, thetas)
    lhs = fol.conjugate.evaluate(u_of_x, thetas)
    fx = f_diag.evaluate(xs, thetas)
    rhs = fol.encoder.evaluate(fx, thetas + f_diag.omega_f)
    err = np.abs(lhs - rhs).max(axis=1)
    scale = np.maximum(np.linalg.norm(xs, axis=1) ** (sigma + 1), floor)
    return float((err / scale).max())
