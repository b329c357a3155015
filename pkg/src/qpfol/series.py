"""Arithmetic and calculus on truncated mixed power-Fourier series.

A :class:`PowerFourierMap` represents a map

    G(x, theta) = sum_{m, k} C[i, m, k] * x^m * exp(i k theta),

where ``x`` is an ``n_in``-dimensional state, ``m`` runs over monomial
multi-indices of total degree <= ``sigma`` and ``k`` over Fourier
harmonics ``-ell..ell``.  Every operation truncates its result back to
the (sigma, ell) budget, i.e. the algebra has asymptotic-expansion
semantics: degrees above sigma and harmonics above ell are silently
dropped.

Coefficients are stored densely as a complex array of shape
``(n_out, n_mono, 2*ell + 1)`` with monomials in graded lexicographic
order and harmonics ordered ``k = -ell..ell``.  Maps are immutable by
convention; operations return new instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.fft import next_fast_len

from .errors import SingularJet

_TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# monomial bookkeeping


def _gen_exponents(n_vars, sigma):
    """Exponent tuples of total degree <= sigma, graded lexicographic."""
    def fill(rem, head):
        if len(head) == n_vars - 1:
            yield head + (rem,)
            return
        for e in range(rem, -1, -1):
            yield from fill(rem - e, head + (e,))

    out = []
    for deg in range(sigma + 1):
        out.extend(fill(deg, ()))
    return out


class MonomialTable:
    """Cached index tables for one (n_vars, sigma) truncation.

    Holds the canonical monomial ordering, the product pair table used by
    truncated multiplication and the exponent-lowering maps used by
    differentiation.
    """

    def __init__(self, n_vars, sigma):
        self.n_vars = n_vars
        self.sigma = sigma
        exps = _gen_exponents(n_vars, sigma)
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), n_vars)
        self.degree = self.exps.sum(axis=1)
        self.n_mono = len(exps)
        self.index = {tuple(m): i for i, m in enumerate(exps)}

        # power recursion: monomial = parent * variable
        parent = np.full(self.n_mono, -1, dtype=np.int64)
        parent_var = np.full(self.n_mono, -1, dtype=np.int64)
        for i, m in enumerate(exps):
            if sum(m) == 0:
                continue
            v = max(j for j in range(n_vars) if m[j] > 0)
            pm = list(m)
            pm[v] -= 1
            parent[i] = self.index[tuple(pm)]
            parent_var[i] = v
        self.parent = parent
        self.parent_var = parent_var

        # product pair table: all (p, q) with deg(p) + deg(q) <= sigma
        p1, p2, pout = [], [], []
        for i, mi in enumerate(exps):
            di = sum(mi)
            for j, mj in enumerate(exps):
                if di + sum(mj) > sigma:
                    continue
                p1.append(i)
                p2.append(j)
                pout.append(self.index[tuple(a + b for a, b in zip(mi, mj))])
        self.pair_left = np.array(p1, dtype=np.int64)
        self.pair_right = np.array(p2, dtype=np.int64)
        self.pair_out = np.array(pout, dtype=np.int64)
        self._pair_ldeg = self.degree[self.pair_left]
        self._pair_rdeg = self.degree[self.pair_right]
        self._mul_cache = {}

        # derivative lowering per variable: d/dx_v x^m = m_v x^(m - e_v)
        self.lower = []
        for v in range(n_vars):
            src = np.nonzero(self.exps[:, v] > 0)[0]
            fac = self.exps[src, v].astype(np.float64)
            dst = np.array(
                [self.index[tuple(m - (np.arange(n_vars) == v))]
                 for m in self.exps[src]],
                dtype=np.int64,
            )
            self.lower.append((src, dst, fac))

    def product_pairs(self, da, db):
        """Pair index arrays and scatter matrix restricted to operand
        degrees <= (da, db); avoids touching structurally zero blocks."""
        da = min(da, self.sigma)
        db = min(db, self.sigma)
        key = (da, db)
        cached = self._mul_cache.get(key)
        if cached is None:
            sel = np.flatnonzero((self._pair_ldeg <= da) & (self._pair_rdeg <= db))
            scatter = sparse.csr_matrix(
                (np.ones(len(sel)), (self.pair_out[sel], np.arange(len(sel)))),
                shape=(self.n_mono, len(sel)))
            cached = (self.pair_left[sel], self.pair_right[sel], scatter)
            self._mul_cache[key] = cached
        return cached


@lru_cache(maxsize=None)
def monomial_table(n_vars, sigma):
    return MonomialTable(n_vars, sigma)


# ---------------------------------------------------------------------------
# Fourier helpers (harmonics stored centered, k = -ell..ell)


def theta_grid(n_points):
    return np.arange(n_points) * (_TWO_PI / n_points)


def fourier_values(coeffs, n_points):
    """Evaluate centered Fourier coefficients on a uniform theta grid.

    ``coeffs`` has the harmonic axis last; returns the same shape with the
    last axis replaced by ``n_points`` grid values.
    """
    ell = (coeffs.shape[-1] - 1) // 2
    phases = np.exp(1j * np.outer(np.arange(-ell, ell + 1), theta_grid(n_points)))
    return coeffs @ phases


def fourier_coeffs(values, ell):
    """Harmonics -ell..ell of grid values (trapezoidal projection).

    Exact when the underlying function has harmonic content below the
    grid's Nyquist index; otherwise high harmonics alias.
    """
    n = values.shape[-1]
    spec = np.fft.fft(values, axis=-1) / n
    idx = np.concatenate([np.arange(-ell, 0) % n, np.arange(0, ell + 1)])
    return np.take(spec, idx, axis=-1)


def _conv_k(a, b, ell_out):
    """Convolve two centered harmonic axes, truncated to |k| <= ell_out."""
    la = (a.shape[-1] - 1) // 2
    lb = (b.shape[-1] - 1) // 2
    full = a.shape[-1] + b.shape[-1] - 1
    n_fft = next_fast_len(full)
    prod = np.fft.ifft(
        np.fft.fft(a, n=n_fft, axis=-1) * np.fft.fft(b, n=n_fft, axis=-1),
        axis=-1,
    )[..., :full]
    c = la + lb
    nk = 2 * ell_out + 1
    out = np.zeros(prod.shape[:-1] + (nk,), dtype=complex)
    lo = max(-ell_out, -c)
    hi = min(ell_out, c)
    out[..., lo + ell_out:hi + ell_out + 1] = prod[..., c + lo:c + hi + 1]
    return out


def _content_degree_arr(coeffs, table):
    nz = np.flatnonzero((coeffs != 0).any(axis=(0, 2)))
    return int(table.degree[nz].max()) if nz.size else 0


def _content_degree(g):
    return _content_degree_arr(g.coeffs, g.table)


def _pad_k(coeffs, ell_new):
    ell = (coeffs.shape[-1] - 1) // 2
    if ell_new == ell:
        return coeffs
    if ell_new < ell:
        return coeffs[..., ell - ell_new:ell + ell_new + 1]
    out = np.zeros(coeffs.shape[:-1] + (2 * ell_new + 1,), dtype=complex)
    out[..., ell_new - ell:ell_new + ell + 1] = coeffs
    return out


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PowerFourierMap:
    """Truncated mixed power-Fourier series (x, theta) -> C^{n_out}.

    Parameters
    ----------
    n_in, n_out : int
        State dimension of argument and output.
    sigma : int
        Maximum total monomial degree kept.
    ell : int
        Fourier truncation; harmonics -ell..ell are stored.
    omega_f : float
        Rotation angle per step of the underlying torus dynamics; used by
        shift bookkeeping of solvers, carried along by arithmetic.
    coeffs : ndarray
        Complex array of shape (n_out, n_mono(n_in, sigma), 2*ell + 1).
    real : bool
        True when the map represents a real function of real arguments,
        i.e. coefficients satisfy C[i, m, -k] = conj(C[i, m, k]).  Maps in
        complexified (post-diagonalisation) coordinates carry False; there
        the pairing is between conjugate output rows instead.
    """

    n_in: int
    n_out: int
    sigma: int
    ell: int
    omega_f: float
    coeffs: np.ndarray
    real: bool = True
    _powers: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        tab = self.table
        nk = 2 * self.ell + 1
        expected = (self.n_out, tab.n_mono, nk)
        if self.coeffs.shape != expected:
            raise ValueError(
                f"coefficient array has shape {self.coeffs.shape}, expected {expected}")
        self.coeffs = np.asarray(self.coeffs, dtype=complex)

    # -- construction -------------------------------------------------

    @property
    def table(self):
        return monomial_table(self.n_in, self.sigma)

    @property
    def nk(self):
        return 2 * self.ell + 1

    @classmethod
    def zeros(cls, n_in, n_out, sigma, ell, omega_f, real=True):
        tab = monomial_table(n_in, sigma)
        return cls(n_in, n_out, sigma, ell, omega_f,
                   np.zeros((n_out, tab.n_mono, 2 * ell + 1), dtype=complex),
                   real=real)

    @classmethod
    def identity(cls, n, sigma, ell, omega_f):
        out = cls.zeros(n, n, sigma, ell, omega_f)
        tab = out.table
        for i in range(n):
            m = tuple(int(i == j) for j in range(n))
            out.coeffs[i, tab.index[m], ell] = 1.0
        return out

    @classmethod
    def constant(cls, values, n_in, sigma, ell, omega_f, real=None):
        """Map with no state dependence; ``values`` is (n_out,) scalars or
        (n_out, 2*ell + 1) centered Fourier data."""
        values = np.atleast_1d(np.asarray(values, dtype=complex))
        if values.ndim == 1:
            values = values[:, None] * np.eye(1, 2 * ell + 1, ell)
        out = cls.zeros(n_in, values.shape[0], sigma, ell, omega_f)
        out.coeffs[:, 0, :] = values
        if real is None:
            real = bool(out.is_real_coeffs())
        out.real = real
        return out

    @classmethod
    def from_linear(cls, lin, sigma, ell, omega_f, real=None):
        """Map with linear part ``lin``: (n_out, n_in) constant or
        (n_out, n_in, 2*ell + 1) Fourier family."""
        lin = np.asarray(lin, dtype=complex)
        if lin.ndim == 2:
            lin = lin[:, :, None] * np.eye(1, 2 * ell + 1, ell)
        n_out, n_in = lin.shape[:2]
        out = cls.zeros(n_in, n_out, sigma, ell, omega_f)
        tab = out.table
        for i in range(n_in):
            m = tuple(int(i == j) for j in range(n_in))
            out.coeffs[:, tab.index[m], :] = lin[:, i, :]
        if real is None:
            real = bool(out.is_real_coeffs())
        out.real = real
        return out

    def _new(self, coeffs, n_out=None, real=None):
        return PowerFourierMap(
            self.n_in, self.n_out if n_out is None else n_out,
            self.sigma, self.ell, self.omega_f, coeffs,
            real=self.real if real is None else real)

    def copy(self):
        return self._new(self.coeffs.copy())

    def component(self, i):
        return self._new(self.coeffs[i:i + 1].copy(), n_out=1)

    @staticmethod
    def stack(maps):
        """Stack scalar/vector maps along the output axis."""
        first = maps[0]
        sigma = max(m.sigma for m in maps)
        ell = max(m.ell for m in maps)
        parts = [m._pad(sigma, ell).coeffs for m in maps]
        return PowerFourierMap(
            first.n_in, sum(p.shape[0] for p in parts), sigma, ell,
            first.omega_f, np.concatenate(parts, axis=0),
            real=all(m.real for m in maps))

    def _pad(self, sigma, ell):
        if sigma == self.sigma and ell == self.ell:
            return self
        out = PowerFourierMap.zeros(self.n_in, self.n_out, sigma, ell,
                                    self.omega_f, real=self.real)
        src = self.table
        dst = out.table
        idx = np.array([dst.index[tuple(m)] for m in src.exps], dtype=np.int64)
        out.coeffs[:, idx, :] = _pad_k(self.coeffs, ell)
        return out

    def truncated(self, sigma=None, ell=None):
        """Reduce the degree/harmonic budget (drops coefficients)."""
        sigma = self.sigma if sigma is None else min(sigma, self.sigma)
        ell = self.ell if ell is None else min(ell, self.ell)
        out = PowerFourierMap.zeros(self.n_in, self.n_out, sigma, ell,
                                    self.omega_f, real=self.real)
        keep = np.nonzero(self.table.degree <= sigma)[0]
        out.coeffs[:] = _pad_k(self.coeffs, ell)[:, keep, :]
        return out

    # -- structure access ---------------------------------------------

    def constant_part(self):
        """(n_out, 2*ell + 1) Fourier data of the degree-0 block."""
        return self.coeffs[:, 0, :].copy()

    def linear_part(self):
        """(n_out, n_in, 2*ell + 1) Fourier family of the linear block."""
        tab = self.table
        out = np.zeros((self.n_out, self.n_in, self.nk), dtype=complex)
        for i in range(self.n_in):
            m = tuple(int(i == j) for j in range(self.n_in))
            out[:, i, :] = self.coeffs[:, tab.index[m], :]
        return out

    def with_constant_part(self, values):
        out = self.copy()
        out.coeffs[:, 0, :] = values
        return out

    def with_linear_part(self, lin):
        lin = np.asarray(lin, dtype=complex)
        if lin.ndim == 2:
            lin = lin[:, :, None] * np.eye(1, self.nk, self.ell)
        out = self.copy()
        tab = self.table
        for i in range(self.n_in):
            m = tuple(int(i == j) for j in range(self.n_in))
            out.coeffs[:, tab.index[m], :] = lin[:, i, :]
        return out

    def degree_slice(self, deg):
        """Coefficient block of all monomials with total degree == deg."""
        sel = np.nonzero(self.table.degree == deg)[0]
        return sel, self.coeffs[:, sel, :]

    def is_real_coeffs(self, tol=1e-12):
        scale = 1.0 + np.abs(self.coeffs).max(initial=0.0)
        return np.abs(self.coeffs[..., ::-1] - self.coeffs.conj()).max(initial=0.0) <= tol * scale

    def norm(self):
        return float(np.abs(self.coeffs).max(initial=0.0))

    # -- arithmetic -----------------------------------------------------

    def _align(self, other):
        if self.n_in != other.n_in:
            raise ValueError("operand state dimensions differ")
        sigma = max(self.sigma, other.sigma)
        ell = max(self.ell, other.ell)
        return self._pad(sigma, ell), other._pad(sigma, ell)

    def __add__(self, other):
        if np.isscalar(other):
            out = self.copy()
            out.coeffs[:, 0, self.ell] += other
            out.real = self.real and (np.imag(other) == 0)
            return out
        a, b = self._align(other)
        if a.n_out != b.n_out:
            raise ValueError("operand output dimensions differ")
        return a._new(a.coeffs + b.coeffs, real=a.real and b.real)

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, PowerFourierMap) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        """Scalar scaling, or truncated series product.

        Series products broadcast a scalar (1-output) factor over a vector
        one; two vector factors of equal n_out multiply componentwise.
        """
        if np.isscalar(other):
            return self._new(self.coeffs * other,
                             real=self.real and (np.imag(other) == 0))
        a, b = self._align(other)
        if a.n_out == 1 and b.n_out > 1:
            a, b = b, a
        if b.n_out == 1:
            bc = np.broadcast_to(b.coeffs, (a.n_out,) + b.coeffs.shape[1:])
        elif a.n_out == b.n_out:
            bc = b.coeffs
        else:
            raise ValueError("incompatible output dimensions for product")
        tab = a.table
        pl, pr, scatter = tab.product_pairs(_content_degree(a), _content_degree_arr(bc, tab))
        left = a.coeffs[:, pl, :]
        right = bc[:, pr, :]
        prods = _conv_k(left, right, a.ell)
        out = np.stack([scatter @ prods[i] for i in range(a.n_out)])
        return a._new(out, real=a.real and b.real)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self * (1.0 / other)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def shift(self, delta):
        """Shift the angle argument: result(x, theta) = self(x, theta - delta)."""
        k = np.arange(-self.ell, self.ell + 1)
        return self._new(self.coeffs * np.exp(-1j * k * delta))

    def advanced(self):
        """self evaluated at theta + omega_f, via the shift operator."""
        return self.shift(-self.omega_f)

    def dtheta(self):
        """Partial derivative with respect to the angle."""
        k = np.arange(-self.ell, self.ell + 1)
        return self._new(self.coeffs * (1j * k))

    def dx(self, v):
        """Partial derivative with respect to state variable v."""
        src, dst, fac = self.table.lower[v]
        out = np.zeros_like(self.coeffs)
        out[:, dst, :] = self.coeffs[:, src, :] * fac[None, :, None]
        return self._new(out)

    # -- evaluation ------------------------------------------------------

    def evaluate(self, x, theta):
        """Evaluate at one point or a batch of points.

        ``x``: (n_in,) or (N, n_in); ``theta``: scalar or (N,).  Returns a
        complex array (n_out,) or (N, n_out); for reality-flagged maps and
        real arguments the imaginary part is roundoff-level.
        """
        x = np.asarray(x, dtype=complex)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        tb = np.atleast_1d(np.asarray(theta, dtype=float))
        if tb.shape[0] == 1 and xb.shape[0] > 1:
            tb = np.broadcast_to(tb, (xb.shape[0],))
        powers = np.prod(xb[:, None, :] ** self.table.exps[None, :, :], axis=2)
        phases = np.exp(1j * np.outer(tb, np.arange(-self.ell, self.ell + 1)))
        out = np.einsum("omk,Nm,Nk->No", self.coeffs, powers, phases)
        return out[0] if single else out

    def jacobian(self, x, theta):
        """State Jacobian D_1 self: (n_out, n_in) or (N, n_out, n_in)."""
        return np.stack([self.dx(v).evaluate(x, theta)
                         for v in range(self.n_in)], axis=-1)

    # -- composition -----------------------------------------------------

    def monomial_powers(self, sigma, ell):
        """All monomials of the output components, as an array
        (n_mono(n_out, sigma), n_mono(n_in, sigma), 2*ell + 1).

        Cached on the instance (maps are immutable by convention).
        """
        key = (sigma, ell)
        if key in self._powers:
            return self._powers[key]
        h = self._pad(sigma, ell)
        outer = monomial_table(self.n_out, sigma)
        inner = h.table
        powers = np.zeros((outer.n_mono, inner.n_mono, 2 * ell + 1), dtype=complex)
        powers[0, 0, ell] = 1.0
        comp = [h.component(i) for i in range(self.n_out)]
        series = [None] * outer.n_mono
        series[0] = h._new(powers[0:1].copy(), n_out=1, real=True)
        for i in range(1, outer.n_mono):
            p = outer.parent[i]
            v = outer.parent_var[i]
            series[i] = series[p] * comp[v]
            powers[i] = series[i].coeffs[0]
        self._powers[key] = powers
        return powers

    def compose(self, inner):
        """Truncated composition: result(x, theta) = self(inner(x, theta), theta).

        Exact for all monomials of total degree <= sigma and harmonics
        |k| <= ell of the shared budget.
        """
        if inner.n_out != self.n_in:
            raise ValueError("dimension mismatch: inner.n_out != self.n_in")
        sigma = max(self.sigma, inner.sigma)
        ell = max(self.ell, inner.ell)
        g = self._pad(sigma, ell)
        powers = inner.monomial_powers(sigma, ell)
        n_fft = next_fast_len(2 * (2 * ell + 1) - 1)
        fg = np.fft.fft(g.coeffs, n=n_fft, axis=-1)
        fp = np.fft.fft(powers, n=n_fft, axis=-1)
        prod = np.einsum("omL,mpL->opL", fg, fp)
        full = np.fft.ifft(prod, axis=-1)[..., :2 * (2 * ell + 1) - 1]
        out = full[..., ell:3 * ell + 1]
        return PowerFourierMap(inner.n_in, self.n_out, sigma, ell,
                               self.omega_f, np.ascontiguousarray(out),
                               real=self.real and inner.real)

    # -- serialization -----------------------------------------------------

    def to_json_dict(self):
        """Spec JSON document; only nonzero coefficients are listed."""
        tab = self.table
        i0, m, kk = np.nonzero(self.coeffs)
        entries = [
            [int(i), [int(e) for e in tab.exps[j]], int(k - self.ell),
             float(self.coeffs[i, j, k].real), float(self.coeffs[i, j, k].imag)]
            for i, j, k in zip(i0, m, kk)
        ]
        return {
            "n_in": self.n_in,
            "n_out": self.n_out,
            "sigma": self.sigma,
            "ell": self.ell,
            "omega_f": self.omega_f,
            "coeffs": entries,
        }

    @classmethod
    def from_json_dict(cls, doc):
        out = cls.zeros(doc["n_in"], doc["n_out"], doc["sigma"], doc["ell"],
                        doc["omega_f"])
        tab = out.table
        for i, m, k, re, im in doc["coeffs"]:
            out.coeffs[i, tab.index[tuple(m)], k + out.ell] = complex(re, im)
        out.real = bool(out.is_real_coeffs())
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


# ---------------------------------------------------------------------------
# lifted elementary functions


def _grid_size(ell):
    # generous grid so that aliasing of the non-polynomial theta profile
    # is negligible before truncation at ell
    return max(16, 8 * ell + 9)


def _constant_split(g):
    """Split g = g0(theta) + h with h purely of degree >= 1."""
    g0 = g.constant_part()
    h = g.copy()
    h.coeffs[:, 0, :] = 0.0
    return g0, h


def _check_const(vals, what):
    if np.abs(vals).min() < 1e-8:
        raise SingularJet(
            f"constant part of {what} has magnitude < 1e-8 at a collocation angle")


def reciprocal(g):
    """Truncated series 1/g via a gridwise seed and Newton iteration."""
    if g.n_out != 1:
        raise ValueError("reciprocal expects a scalar series")
    g0, _ = _constant_split(g)
    vals = fourier_values(g0, _grid_size(g.ell))
    _check_const(vals, "denominator")
    r = PowerFourierMap.constant(fourier_coeffs(1.0 / vals, g.ell),
                                 g.n_in, g.sigma, g.ell, g.omega_f, real=g.real)
    for _ in range(max(3, math.ceil(math.log2(g.sigma + 1)) + 2)):
        e = g * r
        e.coeffs[:, 0, g.ell] -= 1.0
        if e.norm() < 1e-15 * (1.0 + r.norm()):
            break
        r = r - r * e
    return r


def rsqrt_series(g):
    """Truncated series 1/sqrt(g) (principal branch on the constant part)."""
    if g.n_out != 1:
        raise ValueError("rsqrt expects a scalar series")
    g0, _ = _constant_split(g)
    vals = fourier_values(g0, _grid_size(g.ell))
    _check_const(vals, "radicand")
    y = PowerFourierMap.constant(fourier_coeffs(1.0 / np.sqrt(vals), g.ell),
                                 g.n_in, g.sigma, g.ell, g.omega_f, real=g.real)
    for _ in range(max(3, math.ceil(math.log2(g.sigma + 1)) + 1)):
        e = g * (y * y)
        e.coeffs[:, 0, g.ell] -= 1.0
        if e.norm() < 1e-15:
            break
        y = y - y * e * 0.5
    return y


def sqrt_series(g):
    """Truncated series sqrt(g) (principal branch on the constant part)."""
    return g * rsqrt_series(g)


def _sin_cos_series(g):
    g0, h = _constant_split(g)
    n_grid = _grid_size(g.ell)
    vals = fourier_values(g0, n_grid)
    c0 = PowerFourierMap.constant(fourier_coeffs(np.cos(vals), g.ell),
                                  g.n_in, g.sigma, g.ell, g.omega_f, real=g.real)
    s0 = PowerFourierMap.constant(fourier_coeffs(np.sin(vals), g.ell),
                                  g.n_in, g.sigma, g.ell, g.omega_f, real=g.real)
    # cos(h), sin(h) terminate: h has no degree-0 part, so h^p has degree >= p
    ch = PowerFourierMap.constant([1.0], g.n_in, g.sigma, g.ell, g.omega_f)
    sh = PowerFourierMap.zeros(g.n_in, 1, g.sigma, g.ell, g.omega_f)
    hp = ch
    fact = 1.0
    for p in range(1, g.sigma + 1):
        hp = hp * h
        fact *= p
        term = hp * (1.0 / fact)
        r = p % 4
        if r == 1:
            sh = sh + term
        elif r == 2:
            ch = ch - term
        elif r == 3:
            sh = sh - term
        else:
            ch = ch + term
    return (s0 * ch + c0 * sh), (c0 * ch - s0 * sh)


def sin_series(g):
    return _sin_cos_series(g)[0]


def cos_series(g):
    return _sin_cos_series(g)[1]


def pow_series(g, p):
    """Integer power by repeated squaring; negative p via the reciprocal."""
    if not float(p).is_integer():
        raise ValueError("pow supports integer exponents only")
    p = int(p)
    if p < 0:
        return reciprocal(pow_series(g, -p))
    out = PowerFourierMap.constant(np.ones(g.n_out), g.n_in, g.sigma, g.ell,
                                   g.omega_f)
    base = g
    while p:
        if p & 1:
            out = out * base
        base = base * base
        p >>= 1
    return out


_LIFT_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "sqrt": sqrt_series,
    "sin": sin_series,
    "cos": cos_series,
    "pow": pow_series,
}


def lift_elementary(op, *args):
    """Apply an elementary function to series arguments, truncated at the
    shared (sigma, ell) budget.

    ``op`` is one of add, sub, mul, div, sqrt, sin, cos, pow.  Raises
    :class:`SingularJet` when a division or square root is requested at a
    point where the constant part (nearly) vanishes.
    """
    try:
        fn = _LIFT_OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementary op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# linear Fourier-matrix action


def apply_fourier_matrix(mat, g):
    """Left-multiply a map by a theta-dependent matrix family.

    ``mat``: (p, q, 2*lm + 1) centered Fourier coefficients of M(theta);
    returns the map (x, theta) -> M(theta) g(x, theta) truncated at g.ell.
    """
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim == 2:
        mat = mat[:, :, None] * np.eye(1, 2 * g.ell + 1, g.ell)
    p, q, _ = mat.shape
    if q != g.n_out:
        raise ValueError("matrix width does not match map outputs")
    n_fft = next_fast_len(mat.shape[-1] + g.nk - 1)
    fm = np.fft.fft(mat, n=n_fft, axis=-1)
    fg = np.fft.fft(g.coeffs, n=n_fft, axis=-1)
    prod = np.einsum("pqL,qmL->pmL", fm, fg)
    full = np.fft.ifft(prod, axis=-1)[..., :mat.shape[-1] + g.nk - 1]
    lm = (mat.shape[-1] - 1) // 2
    c = lm + g.ell
    out = full[..., c - g.ell:c + g.ell + 1]
    res = PowerFourierMap(g.n_in, p, g.sigma, g.ell, g.omega_f,
                          np.ascontiguousarray(out), real=False)
    res.real = g.real and bool(res.is_real_coeffs())
    return res


def evaluate(g, x, theta):
    """Module-level alias of :meth:`PowerFourierMap.evaluate`."""
    return g.evaluate(x, theta)


def compose(g, h):
    """Module-level alias of :meth:`PowerFourierMap.compose`: g(h(x, theta), theta)."""
    return g.compose(h)


def shift(g, delta):
    """Module-level alias of :meth:`PowerFourierMap.shift`."""
    return g.shift(delta)
