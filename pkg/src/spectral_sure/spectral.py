"""SVD plumbing, spectral matrix functions and their divergence.

The divergence of ``S(Y; f) = U diag(f(sigma)) V'`` is computed in closed form
from the singular values (plus singular vectors at points where ``f`` only has
one-sided derivatives).  The directional derivative of symmetric matrix
functions and the symmetric embedding ``Y* = [[0, Y], [Y', 0]]`` are exposed
too; they give an independent route to the same divergence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import penalty as _pen
from .errors import (
    DifferentiabilityError,
    RepeatedSingularValuesError,
    ShapeMismatchError,
    SpectralSureError,
)

GROUP_TOL = 1e-8
ZERO_CLAMP = 1e-12
POINT_RTOL = 1e-10


# ---------------------------------------------------------------------------
# SVD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SvdDecomposition:
    """Reduced SVD of an m x n matrix with m >= n.

    If the input had more columns than rows it was transposed first and
    ``transposed`` is set; ``matrix()`` and ``apply_spectral`` undo the flip.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    transposed: bool = False

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def shape(self):
        return (self.n, self.m) if self.transposed else (self.m, self.n)

    def oriented(self) -> np.ndarray:
        """U diag(sigma) V' in the m >= n orientation."""
        return (self.U * self.sigma) @ self.V.T

    def matrix(self) -> np.ndarray:
        Y = self.oriented()
        return Y.T if self.transposed else Y


def svd(Y) -> SvdDecomposition:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d matrix, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise SpectralSureError("matrix has non-finite entries")
    transposed = Y.shape[0] < Y.shape[1]
    if transposed:
        Y = Y.T
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    V = Vt.T
    # make the largest-magnitude entry of each left singular vector positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    V = V * signs
    return SvdDecomposition(U, s, V, transposed)


def truncate_rank(dec: SvdDecomposition, K: int) -> np.ndarray:
    """Best rank-K approximation (top-K terms of the SVD)."""
    if not 0 <= K <= dec.n:
        raise ValueError(f"K must lie in [0, {dec.n}], got {K}")
    out = (dec.U[:, :K] * dec.sigma[:K]) @ dec.V[:, :K].T
    return out.T if dec.transposed else out


# ---------------------------------------------------------------------------
# spectral functions
# ---------------------------------------------------------------------------

def _near(x, points, rtol=POINT_RTOL):
    x = np.asarray(x, dtype=float)
    hit = np.zeros(x.shape, dtype=bool)
    for p in points:
        hit |= np.abs(x - p) <= rtol * max(1.0, abs(p))
    return hit


@dataclass(frozen=True)
class SpectralFunction:
    """A scalar map applied to singular values (or eigenvalues).

    ``derivative`` is the two-sided derivative wherever it exists; at the
    listed ``nondifferentiable_points`` the one-sided derivatives
    ``right_derivative``/``left_derivative`` give the directional derivative
    ``f'(x; h)``.  ``discontinuities`` lists jump points, where not even a
    directional derivative exists.
    """

    value: Callable
    derivative: Optional[Callable] = None
    nondifferentiable_points: tuple = ()
    right_derivative: Optional[Callable] = None
    left_derivative: Optional[Callable] = None
    discontinuities: tuple = ()
    name: str = "f"

    def __call__(self, x):
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def _right(self, x):
        fn = self.right_derivative or self.derivative
        if fn is None:
            raise DifferentiabilityError(f"{self.name} has no derivative information")
        return np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)

    def _left(self, x):
        fn = self.left_derivative or self.derivative
        if fn is None:
            raise DifferentiabilityError(f"{self.name} has no derivative information")
        return np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)

    def is_differentiable_at(self, x) -> np.ndarray:
        pts = tuple(self.nondifferentiable_points) + tuple(self.discontinuities)
        return ~_near(x, pts)

    def is_continuous_at(self, x) -> np.ndarray:
        return ~_near(x, self.discontinuities)

    def deriv(self, x):
        """Two-sided derivative; raises at non-differentiable points."""
        x = np.asarray(x, dtype=float)
        bad = ~self.is_differentiable_at(x)
        if np.any(bad):
            raise DifferentiabilityError(f"{self.name} is not differentiable at {x[bad]}")
        if self.derivative is not None:
            return np.asarray(self.derivative(x), dtype=float)
        return self._right(x)

    def directional(self, x, h):
        """f'(x; h) = lim_{t -> 0+} (f(x + t h) - f(x)) / t."""
        x = np.asarray(x, dtype=float)
        if np.any(~self.is_continuous_at(x)):
            raise DifferentiabilityError(f"{self.name} jumps at {x}")
        h = np.asarray(h, dtype=float)
        right = self._right(x)
        left = self._left(x)
        return np.where(h > 0, h * right, np.where(h < 0, h * left, 0.0))


def identity_function() -> SpectralFunction:
    return SpectralFunction(lambda x: np.array(x, dtype=float), lambda x: np.ones_like(x), name="identity")


def zero_function() -> SpectralFunction:
    return SpectralFunction(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), name="zero")


def scaling_function(c: float) -> SpectralFunction:
    return SpectralFunction(lambda x: c * x, lambda x: np.full_like(x, c), name=f"{c}*x")


def square_function() -> SpectralFunction:
    return SpectralFunction(lambda x: x * x, lambda x: 2 * x, name="x^2")


def prox_function(spec: _pen.PenaltySpec) -> SpectralFunction:
    """The prox of ``spec`` viewed as a spectral function on [0, inf)."""
    jump = _pen.discontinuity(spec)
    kinks = _pen.kink_points(spec)
    discont = (jump.location,) if jump is not None else ()
    nondiff = tuple(k for k in kinks if k not in discont)
    return SpectralFunction(
        value=lambda x: np.asarray(_pen.prox(spec, np.abs(x)), dtype=float),
        derivative=lambda x: np.asarray(_pen.one_sided_derivative(spec, np.abs(x), "right")),
        nondifferentiable_points=nondiff,
        right_derivative=lambda x: np.asarray(_pen.one_sided_derivative(spec, np.abs(x), "right")),
        left_derivative=lambda x: np.asarray(_pen.one_sided_derivative(spec, np.abs(x), "left")),
        discontinuities=discont,
        name=f"prox[{spec.label}, theta={spec.theta:g}]",
    )


def odd_extension(f: SpectralFunction) -> SpectralFunction:
    """f*(x) = f(x) for x >= 0 and -f(-x) for x < 0."""

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * f(np.abs(x))

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return f._right(np.abs(x)) if f.derivative is None else np.asarray(f.derivative(np.abs(x)))

    def right(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, f._right(np.abs(x)), f._left(np.abs(x)))

    def left(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, f._left(np.abs(x)), f._right(np.abs(x)))

    def mirror(pts):
        return tuple(sorted(set(pts) | {-p for p in pts}))

    return SpectralFunction(
        value,
        deriv,
        mirror(f.nondifferentiable_points),
        right,
        left,
        mirror(f.discontinuities),
        name=f"odd({f.name})",
    )


def apply_spectral(dec: SvdDecomposition, f) -> np.ndarray:
    """U diag(f(sigma)) V' in the original orientation."""
    vals = np.asarray(f(dec.sigma), dtype=float)
    if vals.shape != dec.sigma.shape or not np.all(np.isfinite(vals)):
        raise SpectralSureError("spectral function undefined at a singular value")
    out = (dec.U * vals) @ dec.V.T
    return out.T if dec.transposed else out


# ---------------------------------------------------------------------------
# multiplicities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplicityGrouping:
    values: np.ndarray
    multiplicities: np.ndarray
    group_tolerance: float
    labels: np.ndarray = field(repr=False, default=None)


def group_values(sigma, group_tol: float = GROUP_TOL, exact: bool = False) -> MultiplicityGrouping:
    """Group nonincreasing singular values into distinct levels.

    Values below ZERO_CLAMP * sigma_1 are set to 0 first.  With ``exact`` only
    bitwise-equal values share a group.
    """
    s = np.array(sigma, dtype=float)
    if s.size == 0:
        return MultiplicityGrouping(s, np.zeros(0, int), group_tol, np.zeros(0, int))
    top = s[0]
    s[s <= ZERO_CLAMP * top] = 0.0
    scale = group_tol * max(top, 1.0)
    labels = np.zeros(s.size, dtype=int)
    values = [s[0]]
    for i in range(1, s.size):
        same = s[i] == s[i - 1] if exact else abs(s[i - 1] - s[i]) <= scale
        if not same:
            values.append(s[i])
        labels[i] = len(values) - 1
    mult = np.bincount(labels)
    # representative = group mean, but keep an exact zero exactly zero
    reps = np.array([s[labels == k].mean() for k in range(len(values))])
    if np.any(s == 0):
        reps[labels[s == 0][0]] = 0.0
    return MultiplicityGrouping(reps, mult, group_tol, labels)


# ---------------------------------------------------------------------------
# divergence
# ---------------------------------------------------------------------------

class DivergenceTerms(NamedTuple):
    deriv_term: float
    shape_term: float
    cross_term: float
    zero_block_term: float

    @property
    def total(self) -> float:
        return self.deriv_term + self.shape_term + self.cross_term + self.zero_block_term


def divergence_terms(
    dec: SvdDecomposition, f: SpectralFunction, group_tol: float = GROUP_TOL, exact: bool = False
) -> DivergenceTerms:
    """Closed-form divergence of S(Y; f), split into its additive pieces.

    Handles repeated and zero singular values; at a simple singular value
    where f has only one-sided derivatives the singular-vector weighted
    directional term is used instead of f'(s).
    """
    m, n = dec.m, dec.n
    if abs(float(f(np.array([0.0]))[0])) > 1e-12:
        raise SpectralSureError("spectral function must satisfy f(0) = 0")
    grp = group_values(dec.sigma, group_tol, exact)
    s, d = grp.values, grp.multiplicities.astype(float)
    pos = s > 0
    fs = f(s)
    if np.any(~f.is_continuous_at(s)):
        raise DifferentiabilityError(f"{f.name} jumps at a singular value; divergence undefined")
    smooth = f.is_differentiable_at(s)

    deriv = 0.0
    for k in np.flatnonzero(pos):
        if smooth[k]:
            deriv += d[k] * (d[k] + 1) / 2 * float(f.deriv(s[k]))
            continue
        if d[k] > 1:
            raise DifferentiabilityError(
                f"repeated singular value {s[k]:g} at a non-differentiable point of {f.name}"
            )
        col = np.flatnonzero(grp.labels == k)[0]
        u, v = dec.U[:, col], dec.V[:, col]
        up, un = np.sum(u[u > 0] ** 2), np.sum(u[u < 0] ** 2)
        vp, vn = np.sum(v[v > 0] ** 2), np.sum(v[v < 0] ** 2)
        same_sign = up * vp + un * vn
        opposite = up * vn + un * vp
        right = float(f._right(s[k]))
        left = float(f._left(s[k]))
        deriv += right * same_sign + left * opposite

    ratio = np.zeros_like(s)
    ratio[pos] = fs[pos] / s[pos]
    shape = float(np.sum((m - n) * d[pos] * ratio[pos]))
    within = float(np.sum(d[pos] * (d[pos] - 1) / 2 * ratio[pos]))

    zero_block = 0.0
    if s.size and s[-1] == 0:
        if not smooth[-1]:
            raise DifferentiabilityError(f"{f.name} needs a two-sided derivative at 0")
        dK = d[-1]
        zero_block = float(dK * (m - n + dK) * f.deriv(0.0))

    cross = 0.0
    if s.size > 1:
        sf = s * fs
        num = sf[:, None] - sf[None, :]
        den = s[:, None] ** 2 - s[None, :] ** 2
        np.fill_diagonal(den, 1.0)
        w = d[:, None] * d[None, :] * num / den
        np.fill_diagonal(w, 0.0)
        cross = float(w.sum())
    return DivergenceTerms(deriv, shape, cross + within, zero_block)


def divergence(dec: SvdDecomposition, f: SpectralFunction, group_tol: float = GROUP_TOL,
               exact: bool = False) -> float:
    """sum_ij d[S(Y; f)]_ij / dY_ij."""
    return divergence_terms(dec, f, group_tol, exact).total


# ---------------------------------------------------------------------------
# symmetric embedding and directional derivative of matrix functions
# ---------------------------------------------------------------------------

class Symmetrization(NamedTuple):
    Ystar: np.ndarray
    P: np.ndarray
    sigma_star: np.ndarray

    @property
    def SigmaStar(self) -> np.ndarray:
        return np.diag(self.sigma_star)


def orthonormal_complement(U: np.ndarray) -> np.ndarray:
    m, n = U.shape
    if m == n:
        return np.zeros((m, 0))
    Q, _ = np.linalg.qr(np.hstack([U, np.eye(m)]), mode="reduced")
    comp = Q[:, n:m]
    # QR of [U, I] spans U first; re-orthogonalise against U to be safe
    comp = comp - U @ (U.T @ comp)
    comp, r = np.linalg.qr(comp)
    if np.min(np.abs(np.diag(r))) < 1e-8:
        raise SpectralSureError("failed to build an orthonormal complement")
    return comp


def symmetrize(dec: SvdDecomposition) -> Symmetrization:
    """Eigendecomposition P diag(sigma_star) P' of Y* = [[0, Y], [Y', 0]]."""
    U, V, s = dec.U, dec.V, dec.sigma
    m, n = dec.m, dec.n
    Y = dec.oriented()
    Ystar = np.zeros((m + n, m + n))
    Ystar[:m, m:] = Y
    Ystar[m:, :m] = Y.T
    Ubar = orthonormal_complement(U)
    r2 = 1.0 / np.sqrt(2.0)
    P = np.zeros((m + n, m + n))
    P[:m, :n] = r2 * U
    P[:m, n:2 * n] = r2 * U
    P[:m, 2 * n:] = Ubar
    P[m:, :n] = r2 * V
    P[m:, n:2 * n] = -r2 * V
    sigma_star = np.concatenate([s, -s, np.zeros(m - n)])
    return Symmetrization(Ystar, P, sigma_star)


def _eig_groups(lam, group_tol):
    scale = group_tol * max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
    groups = [[0]]
    for i in range(1, lam.size):
        if abs(lam[i] - lam[i - 1]) <= scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


def shapiro_directional_derivative(X, f: SpectralFunction, H, group_tol: float = GROUP_TOL) -> np.ndarray:
    """Directional derivative F'(X; H) of F(X) = sum_k f(lambda_k) E_k E_k'."""
    X = np.asarray(X, dtype=float)
    H = np.asarray(H, dtype=float)
    for name, A in (("X", X), ("H", H)):
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeMismatchError(f"{name} must be square")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0))):
            raise ShapeMismatchError(f"{name} must be symmetric")
    if X.shape != H.shape:
        raise ShapeMismatchError("X and H must have the same shape")
    lam, Q = np.linalg.eigh(X)
    groups = _eig_groups(lam, group_tol)
    mu = np.array([lam[g].mean() for g in groups])
    if np.any(~f.is_continuous_at(mu)):
        raise DifferentiabilityError(f"{f.name} is not directionally differentiable at an eigenvalue")
    fmu = f(mu)
    Ht = Q.T @ H @ Q
    R = np.zeros_like(Ht)
    label = np.empty(lam.size, dtype=int)
    for k, g in enumerate(groups):
        label[g] = k
    # divided differences between distinct eigenvalues
    la, lb = mu[label][:, None], mu[label][None, :]
    fa, fb = fmu[label][:, None], fmu[label][None, :]
    diff = label[:, None] != label[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(diff, (fa - fb) / np.where(diff, la - lb, 1.0), 0.0)
    R += G * Ht
    # Psi_k applied to each diagonal block
    for k, g in enumerate(groups):
        B = Ht[np.ix_(g, g)]
        B = 0.5 * (B + B.T)
        beta, W = np.linalg.eigh(B)
        psi = f.directional(np.full(beta.shape, mu[k]), beta)
        R[np.ix_(g, g)] = (W * psi) @ W.T
    out = Q @ R @ Q.T
    return 0.5 * (out + out.T)


def divergence_by_symmetrization(dec: SvdDecomposition, f: SpectralFunction,
                                 group_tol: float = GROUP_TOL) -> float:
    """Divergence assembled entry by entry from F*'(Y*; h_ij).

    Slow (one eigen-solve per entry); an independent check on
    :func:`divergence` for small matrices.
    """
    m, n = dec.m, dec.n
    sym = symmetrize(dec)
    fstar = odd_extension(f)
    total = 0.0
    for i in range(m):
        for j in range(n):
            Hm = np.zeros((m + n, m + n))
            Hm[i, m + j] = Hm[m + j, i] = 1.0
            D = shapiro_directional_derivative(sym.Ystar, fstar, Hm, group_tol)
            total += D[i, m + j]
    return float(total)


def check_simple(sigma, rtol: float = GROUP_TOL, allow_zero: bool = False) -> None:
    """Raise unless singular values are distinct (and positive)."""
    s = np.asarray(sigma, dtype=float)
    if s.size == 0:
        return
    scale = rtol * max(float(s[0]), 1.0)
    if s.size > 1 and np.any(np.abs(np.diff(s)) <= scale):
        raise RepeatedSingularValuesError("repeated singular values")
    if not allow_zero and s[-1] <= max(scale, ZERO_CLAMP * s[0]):
        raise RepeatedSingularValuesError("zero singular value")


def lipschitz_constant(Y1, Y2, K: int) -> float:
    """max over the two inputs of sigma_K / (sigma_K - sigma_{K+1})."""
    vals = []
    for Y in (Y1, Y2):
        s = np.linalg.svd(np.asarray(Y, float), compute_uv=False)
        vals.append(s[K - 1] / (s[K - 1] - s[K]))
    return max(vals)


__all__: Sequence[str] = [
    "SvdDecomposition", "svd", "truncate_rank", "SpectralFunction", "identity_function",
    "zero_function", "scaling_function", "square_function", "prox_function", "odd_extension",
    "apply_spectral", "MultiplicityGrouping", "group_values", "DivergenceTerms",
    "divergence_terms", "divergence", "Symmetrization", "symmetrize",
    "shapiro_directional_derivative", "divergence_by_symmetrization", "check_simple",
    "lipschitz_constant",
]
