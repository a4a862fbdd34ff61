"""Dense linear-algebra kernels shared by the rest of the package.

Everything here is a pure function of its inputs. Subspaces are carried
as matrices whose columns form an orthonormal basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

__all__ = [
    "NumericsError",
    "Subspace",
    "max_principal_angle",
    "min_quadratic_over_ball",
    "orthonormalize",
    "project_ball",
    "spectral_norm",
    "subspace_fixing_rotation",
]

DROP_TOL = 1e-10
SEED = 0x5EED


class NumericsError(ValueError):
    """Raised on invalid input to a numerical kernel."""


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of ``R^ambient_dim`` with orthonormal ``basis`` columns."""

    ambient_dim: int
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ x)

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.project(x)))

    @classmethod
    def empty(cls, ambient_dim: int) -> Subspace:
        return cls(ambient_dim, np.zeros((ambient_dim, 0)))

    @classmethod
    def coordinate(cls, ambient_dim: int, indices) -> Subspace:
        """Span of the standard basis vectors at the given 0-based indices."""
        basis = np.zeros((ambient_dim, len(indices)))
        for col, idx in enumerate(indices):
            basis[idx, col] = 1.0
        return cls(ambient_dim, basis)


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value of ``M``.

    Raises
    ------
    NumericsError
        If ``M`` has a zero dimension.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or 0 in M.shape:
        raise NumericsError("spectral norm of an empty matrix is undefined")
    return float(np.linalg.norm(M, 2))


def orthonormalize(vectors, ambient_dim: int | None = None) -> Subspace:
    """Orthonormal basis of the span of ``vectors``.

    Modified Gram-Schmidt with one re-orthogonalization pass. A vector whose
    residual after projection falls below ``1e-10 * max(1, |v|)`` is dropped.
    """
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    if ambient_dim is None:
        if not vectors:
            raise NumericsError("ambient dimension needed for an empty input")
        ambient_dim = vectors[0].shape[0]
    basis: list[np.ndarray] = []
    for v in vectors:
        if v.shape != (ambient_dim,):
            raise NumericsError("vectors must share the ambient dimension")
        scale = max(1.0, float(np.linalg.norm(v)))
        w = v.copy()
        for _ in range(2):
            for q in basis:
                w -= (q @ w) * q
        nrm = float(np.linalg.norm(w))
        if nrm < DROP_TOL * scale:
            continue
        basis.append(w / nrm)
    if not basis:
        return Subspace.empty(ambient_dim)
    return Subspace(ambient_dim, np.column_stack(basis))


def max_principal_angle(S1: Subspace, S2: Subspace) -> float:
    """Largest principal angle in radians; ``pi/2`` when dimensions differ."""
    if S1.dim != S2.dim:
        return float(np.pi / 2)
    if S1.dim == 0:
        return 0.0
    return float(np.max(linalg.subspace_angles(S1.basis, S2.basis)))


def _contains(outer: Subspace, inner: Subspace, tol: float = 1e-10) -> bool:
    if inner.dim == 0:
        return True
    resid = inner.basis - outer.project(inner.basis)
    return bool(np.max(np.linalg.norm(resid, axis=0)) <= tol)


def subspace_fixing_rotation(fixed: Subspace, target: Subspace,
                             xbar: np.ndarray) -> np.ndarray:
    """Orthogonal matrix that fixes ``fixed`` pointwise and moves ``xbar`` into ``target``.

    The rotation acts in the plane spanned by the normalized component of
    ``xbar`` orthogonal to ``fixed`` and a unit vector of
    ``target`` orthogonal to ``fixed``; it is the identity elsewhere.

    Parameters
    ----------
    fixed, target : Subspace
        Nested subspaces with ``fixed`` strictly inside ``target``.
    xbar : ndarray
        Point to be moved.

    Returns
    -------
    ndarray
        Dense orthogonal matrix of size ``ambient_dim``.
    """
    n = fixed.ambient_dim
    xbar = np.asarray(xbar, dtype=float)
    if target.ambient_dim != n or xbar.shape != (n,):
        raise NumericsError("dimension mismatch")
    if not _contains(target, fixed):
        raise NumericsError("fixed subspace is not contained in target")
    eye = np.eye(n)
    xnorm = float(np.linalg.norm(xbar))
    if xnorm == 0.0:
        return eye
    y = xbar - fixed.project(xbar)
    y -= fixed.project(y)
    ynorm = float(np.linalg.norm(y))
    # a remainder at roundoff level carries no direction worth rotating
    if ynorm <= 1e-10 * xnorm or target.residual(xbar) <= 1e-10 * xnorm:
        return eye
    # unit vectors of target orthogonal to fixed
    free = target.basis - fixed.project(target.basis)
    free = orthonormalize(list(free.T), n)
    if free.dim == 0:
        raise NumericsError("no room to rotate: fixed equals target")
    yhat = y / ynorm
    w = free.project(yhat)
    wnorm = float(np.linalg.norm(w))
    w = w / wnorm if wnorm > 1e-12 else free.basis[:, 0]
    cos = float(np.clip(yhat @ w, -1.0, 1.0))
    perp = w - cos * yhat
    sin = float(np.linalg.norm(perp))
    if sin <= 1e-15:
        return eye
    e1 = yhat
    e2 = perp - fixed.project(perp)
    e2 -= (e1 @ e2) * e1
    e2 /= np.linalg.norm(e2)
    return (eye + (cos - 1.0) * (np.outer(e1, e1) + np.outer(e2, e2))
            + sin * (np.outer(e2, e1) - np.outer(e1, e2)))


def project_ball(x: np.ndarray, R: float | None) -> np.ndarray:
    """Euclidean projection onto the centered ball of radius ``R`` (``None`` = no ball)."""
    x = np.asarray(x, dtype=float)
    if R is None:
        return x
    if R < 0:
        raise NumericsError("radius must be nonnegative")
    nrm = float(np.linalg.norm(x))
    if nrm <= R:
        return x
    return (R / nrm) * x


def min_quadratic_over_ball(H: np.ndarray, h: np.ndarray, c: np.ndarray, R: float,
                            eig: tuple[np.ndarray, np.ndarray] | None = None
                            ) -> tuple[np.ndarray, float]:
    """Minimize ``0.5 x'Hx - h'x + c'x`` subject to ``|x| <= R``.

    Trust-region subproblem solved on the eigendecomposition of ``H``; the
    boundary multiplier comes from the secular equation
    ``1/|x(lam)| = 1/R`` solved by Brent's method.

    Parameters
    ----------
    H : ndarray
        Symmetric positive semidefinite matrix.
    h, c : ndarray
        Linear terms; only ``h - c`` matters.
    R : float
        Ball radius.
    eig : tuple, optional
        Precomputed ``numpy.linalg.eigh(H)``.

    Returns
    -------
    x : ndarray
        Minimizer.
    value : float
        Objective value at ``x``.
    """
    if R < 0:
        raise NumericsError("radius must be nonnegative")
    H = np.asarray(H, dtype=float)
    g = np.asarray(h, dtype=float) - np.asarray(c, dtype=float)
    d, Q = eig if eig is not None else np.linalg.eigh(H)
    d = np.maximum(d, 0.0)
    gq = Q.T @ g
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0 or R == 0.0:
        x = np.zeros_like(g)
        return x, 0.0
    scale = max(1.0, float(np.max(d)) if d.size else 1.0)
    null = d <= 1e-12 * scale
    interior = None
    if np.linalg.norm(gq[null]) <= 1e-12 * max(1.0, gnorm):
        z = np.zeros_like(gq)
        z[~null] = gq[~null] / d[~null]
        if np.linalg.norm(z) <= R:
            interior = z
    if interior is not None:
        z = interior
    else:
        def secular(lam):
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = gq / (d + lam)
            # 0/0 entries carry no weight along null directions
            nrm = np.linalg.norm(np.where(gq == 0.0, 0.0, ratio))
            return (1.0 / nrm if np.isfinite(nrm) else 0.0) - 1.0 / R

        hi = gnorm / R
        lam = optimize.brentq(secular, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                              maxiter=500) if secular(hi) > 0 else hi
        z = gq / (d + lam)
        z *= min(1.0, R / float(np.linalg.norm(z)))
    x = Q @ z
    value = float(0.5 * z @ (d * z) - gq @ z)
    return x, value
