"""Transfer-operator spectrum, spectral clustering and invariant bundles.

The linearised dynamics about the torus, x -> A(theta) x with theta
rotating by omega, is discretised into a dense eigenproblem over Fourier
coefficients.  Its eigenvalues fall on concentric circles (one circle per
dichotomy spectral interval); clustering the magnitudes, picking one
representative eigenpair per circle and normalising the left/right
eigenfamilies yields constant block dynamics Lambda together with the
bundle frames that diagonalise the nonlinear map.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (ClusteringFailed, DefectiveFrame, EigenFailure,
                     NotAttracting, ResidualTooLarge)
from .series import (PowerFourierMap, apply_fourier_matrix, fourier_values,
                     theta_grid)

_TWO_PI = 2.0 * np.pi


@dataclass
class LinearBundleProblem:
    """Fourier blocks A_j (j = -ell..ell) of A(theta) plus the rotation.

    ``a_coeffs`` has shape (n, n, 2*ell + 1) matching
    :meth:`PowerFourierMap.linear_part`.
    """

    omega: float
    a_coeffs: np.ndarray

    def __post_init__(self):
        self.a_coeffs = np.asarray(self.a_coeffs, dtype=complex)

    @classmethod
    def from_map(cls, f_map):
        return cls(f_map.omega_f, f_map.linear_part())

    @property
    def n(self):
        return self.a_coeffs.shape[0]

    @property
    def ell(self):
        return (self.a_coeffs.shape[-1] - 1) // 2

    def values(self, n_points):
        """A(theta) on a uniform grid, shape (n_points, n, n)."""
        return np.moveaxis(fourier_values(self.a_coeffs, n_points), -1, 0)

    def block_matrix(self):
        """Dense right-eigenproblem matrix with blocks e^{-ik omega} A_{k-j}."""
        n, ell = self.n, self.ell
        nk = 2 * ell + 1
        big = np.zeros((nk, n, nk, n), dtype=complex)
        for ik, k in enumerate(range(-ell, ell + 1)):
            for ij, j in enumerate(range(-ell, ell + 1)):
                if abs(k - j) <= ell:
                    big[ik, :, ij, :] = (np.exp(-1j * k * self.omega)
                                         * self.a_coeffs[:, :, (k - j) + ell])
        return big.reshape(nk * n, nk * n)


@dataclass
class TransferEigendata:
    """All eigenpairs of the discretised transfer operator.

    ``u`` stacks left rows u_j and ``w`` right columns w_j per eigenvalue,
    both with the harmonic axis first: shape (N, 2*ell + 1, n).
    """

    omega: float
    n: int
    ell: int
    lambdas: np.ndarray
    u: np.ndarray
    w: np.ndarray


def build_transfer_eigenproblem(prob):
    """Solve the dense transfer eigenproblem for all n*(2*ell + 1) pairs.

    The left and right problems are similar under harmonic reversal, so a
    single eig call provides both families; residuals of both invariance
    relations are checked against 1e-9 * |A|.
    """
    big = prob.block_matrix()
    try:
        lam, vl, vr = linalg.eig(big, left=True, right=True)
    except linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    n, ell = prob.n, prob.ell
    nk = 2 * ell + 1
    # rows z with z B = lam z; the paper's left problem acts on u_j = z_{-j}
    z = vl.conj().T.reshape(-1, nk, n)
    u = z[:, ::-1, :].copy()
    w = vr.T.reshape(-1, nk, n).copy()

    scale = np.abs(prob.a_coeffs).max()
    res_r = np.abs(big @ vr - vr * lam[None, :]).max()
    res_l = np.abs(vl.conj().T @ big - lam[:, None] * vl.conj().T).max()
    if max(res_r, res_l) > 1e-9 * max(scale, 1.0):
        raise EigenFailure(
            f"eigen residuals {max(res_r, res_l):.2e} exceed 1e-9 * |A|")
    return TransferEigendata(prob.omega, n, ell, lam, u, w)


def cluster_eigenvalues(magnitudes, n, ell):
    """Partition eigenvalue magnitudes into spectral circles.

    Splits the sorted magnitudes at the largest gaps, starting from n
    clusters and decreasing until every cluster holds a positive integer
    multiple of 2*ell + 1 entries, while keeping at least n/2 clusters.
    Returns index lists ordered by increasing magnitude.
    """
    mags = np.asarray(magnitudes, dtype=float)
    nk = 2 * ell + 1
    if mags.size != n * nk:
        raise ValueError("expected n*(2*ell + 1) magnitudes")
    order = np.argsort(mags, kind="stable")
    sorted_mags = mags[order]
    gaps = np.diff(sorted_mags)
    # candidate cuts: only gaps that clearly separate circles; members of
    # one circle (equal magnitude up to roundoff) are never split
    splittable = np.flatnonzero(gaps > 1e-9 * max(sorted_mags.max(), 1e-300))
    # deterministic gap ranking: larger gap first, earlier position breaks ties
    gap_rank = sorted(splittable.tolist(), key=lambda i: (-gaps[i], i))
    n_min = (n + 1) // 2
    for n_cl in range(n, n_min - 1, -1):
        if n_cl - 1 > len(gap_rank):
            continue
        cuts = np.sort(np.array(gap_rank[:n_cl - 1], dtype=int)) + 1
        pieces = np.split(np.arange(mags.size), cuts)
        if all(len(p) > 0 and len(p) % nk == 0 for p in pieces):
            return [sorted(order[p].tolist()) for p in pieces]
    raise ClusteringFailed(
        f"no clustering with sizes divisible by {nk} for n_cl in [{n_min}, {n}]")


def select_representative(u_vectors, lambdas):
    """Index of the cluster member whose left eigenvector concentrates on
    the lowest harmonics: argmin of sum_j |u_j| 2^|j|.

    Ties (to 1e-9 relative) break toward the smallest |Im lambda|, then
    the smallest index.
    """
    u_vectors = np.asarray(u_vectors)
    ell = (u_vectors.shape[1] - 1) // 2
    weights = 2.0 ** np.abs(np.arange(-ell, ell + 1))
    scores = (np.linalg.norm(u_vectors, axis=2) * weights).sum(axis=1)
    best = scores.min()
    cand = np.flatnonzero(scores <= best * (1.0 + 1e-9))
    ims = np.abs(np.imag(np.asarray(lambdas)[cand]))
    cand = cand[ims <= ims.min() * (1.0 + 1e-9) + 1e-300]
    return int(cand.min())


def _conjugate_reflect(vec):
    """Coefficients of the conjugate function: v'_j = conj(v_{-j})."""
    return vec[::-1, :].conj()


@dataclass
class DichotomyDecomposition:
    """Clustered spectrum, constant block dynamics and bundle frames.

    Coordinates are ordered cluster by cluster (increasing magnitude);
    each complex-pair cluster contributes two complexified coordinates
    (z, conj z).  ``u_frames[l]`` has shape (2*ell + 1, dim_l, n) with the
    harmonic axis first; ``w_frames[l]`` is (2*ell + 1, n, dim_l).
    """

    omega: float
    n: int
    ell: int
    clusters: list
    lambda_diag: np.ndarray
    block_dims: list
    u_frames: list
    w_frames: list
    alphas: np.ndarray
    betas: np.ndarray
    representatives: list = field(default_factory=list)
    eigendata: TransferEigendata | None = field(default=None, repr=False)

    @property
    def n_clusters(self):
        return len(self.clusters)

    def block_coords(self, cluster_index):
        start = int(sum(self.block_dims[:cluster_index]))
        return list(range(start, start + self.block_dims[cluster_index]))

    def coords_of(self, index_set):
        out = []
        for l in sorted(index_set):
            out.extend(self.block_coords(l))
        return out

    def conj_partner(self):
        """partner[c] = index of the conjugate coordinate (self for real)."""
        partner = np.arange(self.n)
        for l, dim in enumerate(self.block_dims):
            if dim == 2:
                a, b = self.block_coords(l)
                partner[a], partner[b] = b, a
        return partner

    def ud_coeffs(self):
        """(2*ell + 1, n, n) Fourier family of the stacked left frame."""
        return np.concatenate(self.u_frames, axis=1)

    def wd_coeffs(self):
        return np.concatenate(self.w_frames, axis=2)

    def frames_on_grid(self, n_points):
        ud = np.moveaxis(fourier_values(np.moveaxis(self.ud_coeffs(), 0, -1), n_points), -1, 0)
        wd = np.moveaxis(fourier_values(np.moveaxis(self.wd_coeffs(), 0, -1), n_points), -1, 0)
        return ud, wd

    def pairing_residual(self, n_points=None):
        """max |U^d(theta) W^d(theta) - I| over a grid."""
        n_points = n_points or 4 * self.ell + 1
        ud, wd = self.frames_on_grid(n_points)
        prod = np.einsum("tpq,tqr->tpr", ud, wd)
        return float(np.abs(prod - np.eye(self.n)).max())

    def invariance_residual(self, prob, n_points=None):
        """max over the grid of |U^d(theta + omega) A(theta) - Lambda U^d(theta)|."""
        n_points = n_points or 4 * self.ell + 1
        a_vals = prob.values(n_points)
        ud = self.ud_coeffs()
        k = np.arange(-self.ell, self.ell + 1)
        ud_adv = ud * np.exp(1j * k * prob.omega)[:, None, None]
        ud_adv_vals = np.moveaxis(fourier_values(np.moveaxis(ud_adv, 0, -1), n_points), -1, 0)
        ud_vals = np.moveaxis(fourier_values(np.moveaxis(ud, 0, -1), n_points), -1, 0)
        lam = np.diag(self.lambda_diag)
        res = np.einsum("tpq,tqr->tpr", ud_adv_vals, a_vals) - lam @ ud_vals
        return float(np.abs(res).max())


def assemble_bundles(eig, clusters, pair_tol=1e-8):
    """Build the dichotomy decomposition from clustered eigendata.

    Selects one representative eigenpair per circle, stacks complex pairs
    as conjugate rows/columns, and normalises so U_p W_q = I delta_pq
    (the product is constant in theta for distinct circles, so a constant
    matrix correction suffices; residuals are verified on a grid).
    """
    nk = 2 * eig.ell + 1
    order = np.argsort([np.abs(eig.lambdas[c]).max() for c in clusters])
    clusters = [clusters[i] for i in order]

    lambda_diag, block_dims, u_frames, w_frames, reps = [], [], [], [], []
    alphas, betas = [], []
    for members in clusters:
        members = list(members)
        lam_c = eig.lambdas[members]
        alphas.append(np.abs(lam_c).min())
        betas.append(np.abs(lam_c).max())
        size = len(members)
        local = select_representative(eig.u[members], lam_c)
        rep = members[local]
        reps.append(rep)
        lam = eig.lambdas[rep]
        u = eig.u[rep]
        w = eig.w[rep]
        if size == nk:
            if abs(lam.imag) > 1e-8 * max(abs(lam), 1.0):
                raise DefectiveFrame(
                    f"real circle representative has Im lambda = {lam.imag:.2e}")
            lam = complex(lam.real)
            # rotate the arbitrary eigenvector phase so the family is real
            overlap = np.vdot(u.reshape(-1), _conjugate_reflect(u).reshape(-1))
            if abs(overlap) > 1e-12:
                u = u * np.exp(1j * np.angle(overlap) / 2.0)
            overlap_w = np.vdot(w.reshape(-1), _conjugate_reflect(w).reshape(-1))
            if abs(overlap_w) > 1e-12:
                w = w * np.exp(1j * np.angle(overlap_w) / 2.0)
            lambda_diag.append(lam)
            block_dims.append(1)
            u_frames.append(u[:, None, :])
            w_frames.append(np.swapaxes(w[:, None, :], 1, 2))
        elif size == 2 * nk:
            if lam.imag < 0.0:
                lam = lam.conjugate()
                u = _conjugate_reflect(u)
                w = _conjugate_reflect(w)
            lambda_diag.extend([lam, lam.conjugate()])
            block_dims.append(2)
            u_frames.append(np.stack([u, _conjugate_reflect(u)], axis=1))
            w_frames.append(np.stack([w, _conjugate_reflect(w)], axis=2))
        else:
            raise DefectiveFrame(
                f"cluster of size {size} is neither 2*ell+1 nor 2*(2*ell+1)")

    dec = DichotomyDecomposition(
        eig.omega, eig.n, eig.ell, clusters,
        np.array(lambda_diag, dtype=complex), block_dims, u_frames, w_frames,
        np.array(alphas), np.array(betas), reps, eig)

    # normalisation: U_l(theta) W_l(theta) is constant in theta; divide it out
    n_points = 4 * eig.ell + 1
    for l in range(dec.n_clusters):
        u = dec.u_frames[l]
        w = dec.w_frames[l]
        prod_k = np.einsum("jpc,kcq->jkpq", u, w)  # harmonic conv indices
        # constant (k = 0) part of U(theta) W(theta): sum over j + k' = 0
        const = sum(prod_k[j, (nk - 1) - j] for j in range(nk))
        try:
            corr = np.linalg.inv(const)
        except np.linalg.LinAlgError as exc:
            raise DefectiveFrame("bundle pairing U(theta) W(theta) singular") from exc
        dec.w_frames[l] = np.einsum("kcq,qr->kcr", w, corr)

    res = dec.pairing_residual(n_points)
    if res > 1e-9:
        raise DefectiveFrame(f"frame pairing residual {res:.2e} exceeds 1e-9")
    return dec


def decompose_map(f_map, pair_tol=1e-8):
    """Convenience: eigenproblem, clustering and assembly from a centered map."""
    prob = LinearBundleProblem.from_map(f_map)
    eig = build_transfer_eigenproblem(prob)
    clusters = cluster_eigenvalues(np.abs(eig.lambdas), prob.n, prob.ell)
    return assemble_bundles(eig, clusters, pair_tol)


def diagonalize_map(f_map, dec, tol=1e-8):
    """Transform the centered map to coordinates with constant diagonal
    linear part: Lambda x + N(x, theta) = U^d(theta + omega) F(W^d(theta) x, theta).

    The computed linear part must match Lambda to tol; it is then snapped
    to Lambda exactly so the homological solves see a clean diagonal.
    """
    wd = np.moveaxis(dec.wd_coeffs(), 0, -1)          # (n, n, nk)
    w_map = PowerFourierMap.from_linear(wd, f_map.sigma, f_map.ell,
                                        f_map.omega_f, real=False)
    inner = f_map.compose(w_map)
    k = np.arange(-dec.ell, dec.ell + 1)
    ud_adv = np.moveaxis(dec.ud_coeffs(), 0, -1) * np.exp(1j * k * dec.omega)
    out = apply_fourier_matrix(ud_adv, inner)

    lam = np.diag(dec.lambda_diag)
    lin = out.linear_part()
    lin_err = np.abs(lin - lam[:, :, None] * (np.arange(-out.ell, out.ell + 1) == 0)).max()
    if lin_err > tol:
        raise ResidualTooLarge(
            f"diagonalised linear part deviates from Lambda by {lin_err:.2e}")
    const_err = np.abs(out.constant_part()).max()
    if const_err > tol:
        raise ResidualTooLarge(
            f"diagonalised map has constant part {const_err:.2e}; center first")
    out = out.with_constant_part(np.zeros_like(out.constant_part()))
    out = out.with_linear_part(lam)
    out.real = False
    return out


def spectral_quotient(dec, index_set):
    """beth_I = min_{j in I} log alpha_j / log beta_m (attracting torus)."""
    if not index_set:
        raise ValueError("index set must be nonempty")
    beta_m = dec.betas.max()
    if beta_m >= 1.0:
        raise NotAttracting(f"largest magnitude bound {beta_m:.6f} >= 1")
    return float(min(np.log(dec.alphas[l]) for l in index_set) / np.log(beta_m))


@dataclass
class ResonanceHit:
    target: int          # coordinate index i0
    source: tuple        # multiset of coordinate indices i1..ij
    harmonic: int        # k
    denominator: float   # |lambda_i0 - prod lambda e^{i k omega}|
    internal: bool


@dataclass
class ResonanceReport:
    delta: float
    hits: list

    @property
    def external(self):
        return [h for h in self.hits if not h.internal]

    @property
    def internal(self):
        return [h for h in self.hits if h.internal]


def check_nonresonance(dec, index_set, sigma, ell, delta_ext):
    """Enumerate near-resonant denominators for the foliation expansion.

    Scans i0 in the chosen coordinates, source multisets of size
    2 <= j <= sigma over all coordinates and harmonics |k| <= j * ell,
    reporting every |lambda_i0 - lambda_{i1}..lambda_{ij} e^{i k omega}|
    at or below delta_ext.  Hits whose source indices all belong to the
    chosen set are internal (normal-form candidates); external hits make
    the requested expansion unsolvable.
    """
    coords = dec.coords_of(index_set)
    coord_set = set(coords)
    lam = dec.lambda_diag
    hits = []
    for j in range(2, sigma + 1):
        kk = np.arange(-j * ell, j * ell + 1)
        phases = np.exp(1j * kk * dec.omega)
        for multi in itertools.combinations_with_replacement(range(dec.n), j):
            prod = np.prod(lam[list(multi)])
            internal = all(i in coord_set for i in multi)
            for i0 in coords:
                dens = np.abs(lam[i0] - prod * phases)
                for pos in np.flatnonzero(dens <= delta_ext):
                    hits.append(ResonanceHit(i0, multi, int(kk[pos]),
                                             float(dens[pos]), internal))
    return ResonanceReport(delta_ext, hits)
