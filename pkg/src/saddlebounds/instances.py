"""Hard quadratic instances with closed-form primal-dual solutions.

Every instance shares the constraint block ``A = (L_A/2) Lam``,
``b = (L_A/2) c`` where ``Lam = blockdiag(B, G)``. The saddle function is
``f(x) + <b - A x, y>``, so stationarity reads ``grad f(x*) = A' y*``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .numerics import min_quadratic_over_ball, project_ball, spectral_norm

__all__ = [
    "ECO_KINDS",
    "KINDS",
    "SPP_KINDS",
    "ClosedFormSolution",
    "Evaluation",
    "Instance",
    "RegimeError",
    "closed_form",
    "default_dims",
    "evaluate",
    "instance_from_dict",
    "instance_to_dict",
    "kkt_residuals",
    "load_instance",
    "make_B",
    "make_instance",
    "make_lambda_c",
    "normalize_kind",
    "rotate_instance",
    "save_instance",
]

KINDS = ("ECO-I", "ECO-II", "ECO-SC", "SPP-I", "SPP-II", "SPP-SC")
ECO_KINDS = KINDS[:3]
SPP_KINDS = KINDS[3:]
SQRT2 = math.sqrt(2.0)


class RegimeError(ValueError):
    """Parameters outside the regime an instance kind is defined for."""


def normalize_kind(kind: str) -> str:
    tag = kind.strip().upper().replace("_", "-")
    if tag not in KINDS:
        raise RegimeError(f"unknown instance kind {kind!r}; expected one of {', '.join(KINDS)}")
    return tag


@dataclass(frozen=True, eq=False)
class Instance:
    """One problem ``min_x max_y f(x) + <b - Ax, y>`` with ``f(x) = x'Hx/2 - h'x``.

    ``X_radius``/``Y_radius`` of ``None`` mean the whole space. ``U``/``V``
    record the accumulated rotation relative to the unrotated construction
    (``None`` when unrotated).
    """

    kind: str
    m: int
    n: int
    k: int
    L_f: float
    L_A: float
    mu: float
    H: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    X_radius: float | None = None
    Y_radius: float | None = None
    U: np.ndarray | None = None
    V: np.ndarray | None = None
    _eig: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_eig", np.linalg.eigh(self.H))

    @property
    def is_spp(self) -> bool:
        return self.kind in SPP_KINDS

    @property
    def is_rotated(self) -> bool:
        return self.U is not None

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        return self.H @ x - self.h

    def f(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.H @ x) - self.h @ x)


@dataclass(frozen=True)
class ClosedFormSolution:
    x_star: np.ndarray
    y_star: np.ndarray
    opt_value: float
    x_norm_sq: float
    y_norm_sq: float


class Evaluation(NamedTuple):
    f: float
    grad: np.ndarray
    residual: np.ndarray
    phi: float
    psi: float


def make_B(k: int) -> np.ndarray:
    """The ``2k x 2k`` symmetric band matrix with ones on the anti-diagonal and
    minus ones just above it."""
    if k < 1:
        raise RegimeError("k must be at least 1")
    size = 2 * k
    B = np.zeros((size, size))
    for i in range(size):
        B[i, size - 1 - i] = 1.0
        if i < size - 1:
            B[i, size - 2 - i] = -1.0
    return B


def make_lambda_c(m: int, n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """``Lam = blockdiag(B, 2[I | 0])`` of size ``m x n`` and ``c = (1_{2k}; 0)``."""
    _check_dims(m, n, k)
    Lam = np.zeros((m, n))
    Lam[: 2 * k, : 2 * k] = make_B(k)
    rows = m - 2 * k
    Lam[2 * k:, 2 * k: 2 * k + rows] = 2.0 * np.eye(rows)
    c = np.zeros(m)
    c[: 2 * k] = 1.0
    return Lam, c


def _check_dims(m: int, n: int, k: int) -> None:
    if k < 1:
        raise RegimeError("k must be at least 1")
    if not (2 * k < m <= n):
        raise RegimeError(f"dimensions must satisfy 2k < m <= n (got k={k}, m={m}, n={n})")


def default_dims(T: int) -> tuple[int, int, int]:
    """``(k, m, n)`` for an adversarial budget of ``T`` rounds."""
    k = 2 * T + 4
    m = 4 * (T + 2) + 2
    return k, m, m + 8


def _check_regime(kind: str, L_f: float, L_A: float, mu: float) -> None:
    problems = []
    if kind in ("ECO-I", "SPP-I"):
        if not L_f > 0:
            problems.append(f"{kind} requires L_f > 0")
        if not L_A > 0:
            problems.append(f"{kind} requires L_A > 0")
    elif kind in ("ECO-II", "SPP-II"):
        if not L_f > 0:
            problems.append(f"{kind} requires L_f > 0")
        if not L_A >= 0:
            problems.append(f"{kind} requires L_A >= 0")
        if not L_f >= L_A:
            problems.append(f"{kind} requires L_f >= L_A")
    else:
        if not mu > 0:
            problems.append(f"{kind} requires mu > 0")
        if not L_A > 0:
            problems.append(f"{kind} requires L_A > 0")
    if problems:
        raise RegimeError("; ".join(problems))


def make_instance(kind: str, m: int, n: int, k: int, L_f: float = 0.0,
                  L_A: float = 0.0, mu: float = 0.0) -> Instance:
    """Build a hard instance of the given kind.

    Parameters
    ----------
    kind : str
        One of ``ECO-I, ECO-II, ECO-SC, SPP-I, SPP-II, SPP-SC`` (case-insensitive).
    m, n, k : int
        Dimensions with ``2k < m <= n``.
    L_f, L_A, mu : float
        Gradient Lipschitz constant, ``|A|`` and strong convexity modulus.
        For the strongly convex kinds ``H = mu I`` and ``L_f`` is set to ``mu``.

    Raises
    ------
    RegimeError
        Listing every violated parameter constraint.
    """
    kind = normalize_kind(kind)
    _check_dims(m, n, k)
    L_f, L_A, mu = float(L_f), float(L_A), float(mu)
    _check_regime(kind, L_f, L_A, mu)
    Lam, c = make_lambda_c(m, n, k)
    A = 0.5 * L_A * Lam
    b = 0.5 * L_A * c
    h = np.zeros(n)
    if kind in ("ECO-I", "SPP-I"):
        diag = np.zeros(n)
        diag[k - 1] = L_f
        diag[2 * k:] = L_f
        H = np.diag(diag)
        mu = 0.0
    elif kind in ("ECO-II", "SPP-II"):
        B = make_B(k)
        H = np.zeros((n, n))
        H[: 2 * k, : 2 * k] = B.T @ B
        H[2 * k:, 2 * k:] = np.eye(n - 2 * k)
        H *= L_f / 4.0
        h[2 * k - 1] = L_f / 4.0 + L_A / (4.0 * SQRT2)
        mu = 0.0
    else:
        H = mu * np.eye(n)
        L_f = mu
    X_radius = Y_radius = None
    if kind in SPP_KINDS:
        X_radius = math.sqrt(k) * (2 * k + 1)
        if kind == "SPP-II":
            Y_radius = math.sqrt(k) / 2.0
        elif kind == "SPP-I":
            Y_radius = 2.0 * L_f * k * math.sqrt(k) / L_A
        else:
            Y_radius = math.sqrt(128.0 * k * (k + 1) ** 3 * (2 * k + 1) / 15.0) * mu / L_A
    return Instance(kind, m, n, k, L_f, L_A, mu, H, h, A, b, X_radius, Y_radius)


def _base_solution(inst: Instance) -> ClosedFormSolution:
    k, m, n = inst.k, inst.m, inst.n
    L_f, L_A, mu = inst.L_f, inst.L_A, inst.mu
    idx = np.arange(1, 2 * k + 1, dtype=float)
    x = np.zeros(n)
    x[: 2 * k] = idx
    y = np.zeros(m)
    x_norm_sq = k * (2 * k + 1) * (4 * k + 1) / 3.0
    if inst.kind in ("ECO-I", "SPP-I"):
        y[k: 2 * k] = 2.0 * k * L_f / L_A
        value = L_f * k * k / 2.0
        y_norm_sq = 4.0 * L_f ** 2 * k ** 3 / L_A ** 2
    elif inst.kind in ("ECO-II", "SPP-II"):
        y[: 2 * k] = -1.0 / (2.0 * SQRT2)
        value = -(L_f / 4.0 + L_A / (2.0 * SQRT2)) * k
        y_norm_sq = k / 4.0
    else:
        y[: 2 * k] = (mu / L_A) * idx * (4 * k - idx + 1)
        value = 0.5 * mu * x_norm_sq
        y_norm_sq = (2 * k * (2 * k + 1) * (4 * k + 1) * (16 * k * k + 8 * k + 2)
                     * mu ** 2 / (15.0 * L_A ** 2))
    return ClosedFormSolution(x, y, value, x_norm_sq, y_norm_sq)


def closed_form(inst: Instance) -> ClosedFormSolution:
    """Exact primal-dual solution; rotated instances map it through ``U', V'``."""
    sol = _base_solution(inst)
    if inst.U is None:
        return sol
    return replace(sol, x_star=inst.U.T @ sol.x_star, y_star=inst.V.T @ sol.y_star)


def _orthogonality_defect(Q: np.ndarray) -> float:
    return float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0]))))


def rotate_instance(inst: Instance, U: np.ndarray, V: np.ndarray) -> Instance:
    """Instance with ``f(Ux)`` and ``V'AU``; ``h`` and ``b`` must be fixed by ``U`` and ``V``."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape != (inst.n, inst.n) or V.shape != (inst.m, inst.m):
        raise ValueError("rotation shapes do not match the instance")
    if _orthogonality_defect(U) > 1e-10 or _orthogonality_defect(V) > 1e-10:
        raise ValueError("rotation matrices must be orthogonal")
    if (np.linalg.norm(U @ inst.h - inst.h) > 1e-9 * max(1.0, np.linalg.norm(inst.h))
            or np.linalg.norm(V @ inst.b - inst.b) > 1e-9 * max(1.0, np.linalg.norm(inst.b))):
        raise ValueError("rotation must satisfy U h = h and V b = b")
    H = U.T @ inst.H @ U
    H = 0.5 * (H + H.T)
    A = V.T @ inst.A @ U
    U_tot = U if inst.U is None else inst.U @ U
    V_tot = V if inst.V is None else inst.V @ V
    return replace(inst, H=H, A=A, U=U_tot, V=V_tot)


def evaluate(inst: Instance, x: np.ndarray, y: np.ndarray) -> Evaluation:
    """Objective, gradient, constraint residual and primal/dual values.

    For saddle kinds ``phi(x) = f(x) + R_Y |Ax - b|`` and ``psi`` minimizes
    the Lagrangian over the X ball. For constrained kinds ``phi = f`` and
    ``psi`` is the Lagrangian dual over all of ``R^n`` (``-inf`` when the
    stationarity system has no solution).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grad = inst.grad_f(x)
    fx = float(0.5 * x @ (grad - inst.h))
    r = inst.A @ x - inst.b
    Aty = inst.A.T @ y
    if inst.is_spp:
        phi = fx + inst.Y_radius * float(np.linalg.norm(r))
        _, qmin = min_quadratic_over_ball(inst.H, inst.h, -Aty, inst.X_radius, eig=inst._eig)
        psi = float(inst.b @ y) + qmin
    else:
        phi = fx
        psi = float(inst.b @ y) + _unconstrained_quadratic_min(inst, inst.h + Aty)
    return Evaluation(fx, grad, r, phi, psi)


def _unconstrained_quadratic_min(inst: Instance, g: np.ndarray) -> float:
    d, Q = inst._eig
    gq = Q.T @ g
    scale = max(1.0, float(np.max(np.abs(d))))
    null = d <= 1e-12 * scale
    if np.linalg.norm(gq[null]) > 1e-9 * max(1.0, float(np.linalg.norm(g))):
        return -math.inf
    return float(-0.5 * np.sum(gq[~null] ** 2 / d[~null]))


def kkt_residuals(inst: Instance, x: np.ndarray, y: np.ndarray) -> dict[str, float]:
    """Relative optimality residuals of the pair ``(x, y)``.

    Constrained kinds: stationarity ``|grad f - A'y|`` and feasibility
    ``|Ax - b|``. Saddle kinds: projected fixed-point residuals of both blocks.
    """
    grad = inst.grad_f(x)
    Aty = inst.A.T @ y
    r = inst.A @ x - inst.b
    if inst.is_spp:
        px = x - project_ball(x - (grad - Aty), inst.X_radius)
        py = y - project_ball(y - r, inst.Y_radius)
        return {
            "primal": float(np.linalg.norm(px)) / (1.0 + float(np.linalg.norm(x))),
            "dual": float(np.linalg.norm(py)) / (1.0 + float(np.linalg.norm(y))),
        }
    return {
        "stationarity": float(np.linalg.norm(grad - Aty))
        / (1.0 + float(np.linalg.norm(grad)) + float(np.linalg.norm(Aty))),
        "feasibility": float(np.linalg.norm(r)) / (1.0 + float(np.linalg.norm(inst.b))),
    }


def _radius_json(R):
    return "unbounded" if R is None else R


def instance_to_dict(inst: Instance) -> dict:
    sol = closed_form(inst)
    out = {
        "kind": inst.kind, "m": inst.m, "n": inst.n, "k": inst.k,
        "L_f": inst.L_f, "L_A": inst.L_A, "mu": inst.mu,
        "X_radius": _radius_json(inst.X_radius), "Y_radius": _radius_json(inst.Y_radius),
        "H": inst.H.tolist(), "h": inst.h.tolist(), "A": inst.A.tolist(), "b": inst.b.tolist(),
        "solution": {
            "x_star": sol.x_star.tolist(), "y_star": sol.y_star.tolist(),
            "opt_value": sol.opt_value, "x_norm_sq": sol.x_norm_sq, "y_norm_sq": sol.y_norm_sq,
        },
    }
    if inst.U is not None:
        out["U"] = inst.U.tolist()
        out["V"] = inst.V.tolist()
    return out


def instance_from_dict(data: dict) -> Instance:
    def radius(v):
        return None if v == "unbounded" or v is None else float(v)

    arr = {key: np.asarray(data[key], dtype=float) for key in ("H", "h", "A", "b")}
    U = np.asarray(data["U"], dtype=float) if "U" in data else None
    V = np.asarray(data["V"], dtype=float) if "V" in data else None
    return Instance(normalize_kind(data["kind"]), int(data["m"]), int(data["n"]), int(data["k"]),
                    float(data["L_f"]), float(data["L_A"]), float(data["mu"]),
                    arr["H"], arr["h"], arr["A"], arr["b"],
                    radius(data["X_radius"]), radius(data["Y_radius"]), U, V)


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


def load_instance(path) -> tuple[Instance, dict]:
    """Read an instance file; returns the instance and the raw embedded solution."""
    data = json.loads(Path(path).read_text())
    return instance_from_dict(data), data.get("solution", {})


def operator_norms(inst: Instance) -> tuple[float, float]:
    """``(|H|, |A|)``; ``|A|`` is 0 for an all-zero constraint block."""
    A_norm = spectral_norm(inst.A) if inst.A.size else 0.0
    return spectral_norm(inst.H), A_norm
