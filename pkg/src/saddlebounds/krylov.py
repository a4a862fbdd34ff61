"""Krylov subspaces of the hard instances and exact minima over them.

``J_i = span{c, (Lam Lam') c, ..., (Lam Lam')^i c}`` and ``K_i = Lam' J_i``.
For ``i <= 2k-1`` they equal ``span{c, e_1, ..., e_i}`` and
``span{e_{2k-i}, ..., e_{2k}}`` (1-based indices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .instances import Instance, closed_form
from .numerics import Subspace, orthonormalize

__all__ = [
    "QUANTITIES",
    "KrylovPair",
    "brute_force_min_over_K",
    "closed_form_J",
    "closed_form_K",
    "krylov_pair",
    "membership",
    "min_over_K",
]

QUANTITIES = ("obj_abs", "obj", "feas", "dist2", "phi_gap")
MEMBERSHIP_TOL = 1e-8


@dataclass(frozen=True)
class KrylovPair:
    J: Subspace
    K: Subspace
    order: int


def krylov_pair(Lam: np.ndarray, c: np.ndarray, i: int) -> KrylovPair:
    """Numerically generated ``(J_i, K_i)``.

    Each new generator is ``Lam Lam'`` applied to the latest orthonormal
    direction and then orthogonalized, which spans the same space as the raw
    powers without their loss of rank.
    """
    m, n = Lam.shape
    J = orthonormalize([c], m)
    gram = Lam @ Lam.T
    for _ in range(i):
        J = orthonormalize(list(J.basis.T) + [gram @ J.basis[:, -1]], m)
    K = orthonormalize(list((Lam.T @ J.basis).T), n)
    return KrylovPair(J, K, i)


def closed_form_K(k: int, n: int, i: int, U: np.ndarray | None = None) -> Subspace:
    """``span{e_{2k-i}, ..., e_{2k}}``, optionally pulled back as ``U' K_i``."""
    if not 0 <= i <= 2 * k - 1:
        raise ValueError(f"order {i} outside 0..{2 * k - 1}")
    idx = list(range(2 * k - 1 - i, 2 * k))
    if U is None:
        return Subspace.coordinate(n, idx)
    return Subspace(n, U[idx, :].T.copy())


def closed_form_J(k: int, m: int, i: int, V: np.ndarray | None = None) -> Subspace:
    """``span{c, e_1, ..., e_i}`` with an orthonormal basis, optionally as ``V' J_i``."""
    if not 0 <= i <= 2 * k - 1:
        raise ValueError(f"order {i} outside 0..{2 * k - 1}")
    basis = np.zeros((m, i + 1))
    for j in range(i):
        basis[j, j] = 1.0
    basis[i: 2 * k, i] = 1.0 / math.sqrt(2 * k - i)
    if V is not None:
        basis = V.T @ basis
    return Subspace(m, basis)


def membership(x: np.ndarray, S: Subspace) -> tuple[bool, float]:
    residual = S.residual(np.asarray(x, dtype=float))
    return residual <= MEMBERSHIP_TOL * (1.0 + float(np.linalg.norm(x))), residual


def _check(inst: Instance, quantity: str, order: int | None) -> int:
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}")
    order = inst.k - 1 if order is None else order
    if not 0 <= order <= inst.k - 1:
        raise ValueError(f"order must lie in 0..k-1 (got {order})")
    allowed = {
        "obj_abs": ("ECO-I", "ECO-II", "SPP-I"),
        "obj": ("ECO-I", "ECO-II", "ECO-SC"),
        "phi_gap": ("SPP-I", "SPP-II"),
    }
    if quantity in allowed and inst.kind not in allowed[quantity]:
        raise ValueError(f"quantity {quantity!r} is not available for {inst.kind}")
    return order


def _spp2_phi_min(inst: Instance, t: int) -> float:
    # On K_{t-1} write the first 2k coordinates as B^{-1} u with u supported on
    # the first t entries; symmetry reduces the problem to u = alpha * 1.
    k = inst.k
    s = inst.L_f / 4.0 + inst.L_A / (4.0 * math.sqrt(2.0))
    w = inst.Y_radius * inst.L_A / 2.0

    def g(alpha):
        return (t * (inst.L_f / 8.0 * alpha ** 2 - s * alpha)
                + w * math.sqrt(t * (alpha - 1.0) ** 2 + 2 * k - t))

    res = optimize.minimize_scalar(g, bracket=(0.0, 4.0 * s / inst.L_f + 1.0),
                                   method="brent", tol=1e-14)
    return float(res.fun)


def min_over_K(inst: Instance, quantity: str, order: int | None = None) -> float:
    """Exact minimum of a performance measure over ``K_order`` (default ``k-1``).

    ``obj_abs``  min |f - f*|;  ``obj`` min f;  ``feas`` min |Ax - b|;
    ``dist2`` min |x - x*|^2;  ``phi_gap`` min phi - phi*.

    Values depend only on the kind and parameters, so they apply unchanged to
    rotated instances over the rotated subspace.
    """
    order = _check(inst, quantity, order)
    k, t = inst.k, order + 1
    L_f, L_A = inst.L_f, inst.L_A
    fstar = closed_form(inst).opt_value
    if quantity == "feas":
        return 0.5 * L_A * math.sqrt(2 * k - t)
    if quantity == "dist2":
        r = 2 * k - t
        return r * (r + 1) * (2 * r + 1) / 6.0
    if quantity in ("obj", "obj_abs"):
        if inst.kind == "ECO-II":
            fmin = -(L_f + math.sqrt(2.0) * L_A + L_A ** 2 / (2.0 * L_f)) * t / 8.0
        else:
            fmin = 0.0
        return fmin if quantity == "obj" else abs(fmin - fstar)
    if inst.kind == "SPP-I":
        return inst.Y_radius * 0.5 * L_A * math.sqrt(2 * k - t) - fstar
    return _spp2_phi_min(inst, t) - fstar


def brute_force_min_over_K(inst: Instance, quantity: str, order: int | None = None) -> float:
    """Numerical minimum in the coordinate chart of ``K_order``; used as a cross-check."""
    order = _check(inst, quantity, order)
    k, n = inst.k, inst.n
    P = closed_form_K(k, n, order, inst.U).basis
    sol = closed_form(inst)
    fstar = sol.opt_value
    HP = P.T @ inst.H @ P
    hP = P.T @ inst.h
    AP = inst.A @ P
    if quantity == "feas":
        z, *_ = np.linalg.lstsq(AP, inst.b, rcond=None)
        return float(np.linalg.norm(AP @ z - inst.b))
    if quantity == "dist2":
        z = P.T @ sol.x_star
        return float(np.linalg.norm(P @ z - sol.x_star) ** 2)
    if quantity in ("obj", "obj_abs"):
        z = np.linalg.lstsq(HP, hP, rcond=None)[0]
        fmin = float(0.5 * z @ HP @ z - hP @ z)
        return fmin if quantity == "obj" else abs(fmin - fstar)

    def phi(z):
        r = AP @ z - inst.b
        rn = math.sqrt(float(r @ r))
        val = 0.5 * z @ HP @ z - hP @ z + inst.Y_radius * rn
        grad = HP @ z - hP + inst.Y_radius * (AP.T @ r) / max(rn, 1e-300)
        return val, grad

    best = math.inf
    z0 = np.zeros(P.shape[1])
    for _ in range(2):
        res = optimize.minimize(phi, z0, jac=True, method="BFGS",
                                options={"gtol": 1e-11, "maxiter": 10000})
        best = min(best, float(res.fun))
        z0 = res.x
    return best - fstar

