"""First-order methods that access problem data only through an oracle.

Each runner takes either an :class:`~saddlebounds.instances.Instance` or a
:class:`PublicInfo` (the data a method is allowed to know: dimensions,
``b``, radii and regularity constants). Matrices ``H``, ``A`` and the vector
``h`` are reached only through ``oracle.query(x, y) -> (grad f(x), Ax, A'y)``.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .instances import Instance, closed_form, evaluate
from .numerics import project_ball
from .oracle import FirstOrderOracle

__all__ = [
    "CALLS_PER_ITERATION",
    "PublicInfo",
    "SolverError",
    "Trajectory",
    "TrajectoryPoint",
    "accelerated_gradient",
    "lalm_auto_parameters",
    "metrics",
    "penalty_parameters",
    "public_info",
    "run_agd",
    "run_lalm",
    "run_pdhg",
    "run_penalty_agd",
    "run_random_probe",
    "run_smoothing",
    "zero_objective",
]

CALLS_PER_ITERATION = {"lalm": 2, "pdhg": 2, "smoothing": 2, "agd": 1, "penalty-agd": 2, "probe": 1}


class SolverError(ValueError):
    """Invalid solver parameters."""


@dataclass(frozen=True)
class PublicInfo:
    kind: str
    m: int
    n: int
    b: np.ndarray
    L_f: float
    L_A: float
    mu: float
    X_radius: float | None
    Y_radius: float | None

    @property
    def is_spp(self) -> bool:
        return self.kind.startswith("SPP")


def public_info(problem) -> PublicInfo:
    if isinstance(problem, PublicInfo):
        return problem
    return PublicInfo(problem.kind, problem.m, problem.n, problem.b.copy(), problem.L_f,
                      problem.L_A, problem.mu, problem.X_radius, problem.Y_radius)


def _setup(problem, oracle):
    info = public_info(problem)
    if oracle is None:
        if not isinstance(problem, Instance):
            raise SolverError("an oracle is required when only public information is given")
        oracle = FirstOrderOracle(problem)
    return info, oracle


@dataclass
class TrajectoryPoint:
    t: int
    x: np.ndarray
    y: np.ndarray
    oracle_calls: int
    obj_err: float = math.nan
    obj_signed: float = math.nan
    feas: float = math.nan
    dist2: float = math.nan
    gap: float = math.nan
    lower_env: float = math.nan
    upper_env: float = math.nan


CSV_FIELDS = ("t", "oracle_calls", "obj_err", "obj_signed", "feas", "dist2", "gap",
              "lower_env", "upper_env")


@dataclass
class Trajectory:
    solver_id: str
    params: dict
    points: list[TrajectoryPoint] = field(default_factory=list)
    raw: list[np.ndarray] = field(default_factory=list)

    def record(self, t, x, y, calls):
        self.points.append(TrajectoryPoint(t, np.array(x, dtype=float),
                                           np.array(y, dtype=float), calls))

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_FIELDS)
            for p in self.points:
                writer.writerow([p.t, p.oracle_calls] + [repr(float(getattr(p, name)))
                                                         for name in CSV_FIELDS[2:]])


def lalm_auto_parameters(L_f: float, A_norm: float, x_norm: float, y_norm: float
                         ) -> tuple[float, float]:
    """``(eta, beta)`` with the penalty that balances the LALM rate bound."""
    beta = max(2.0 * y_norm, 1.0 + y_norm) / (A_norm * x_norm)
    return L_f + beta * A_norm ** 2, beta


def run_lalm(problem, eta: float, T: int, oracle=None, beta: float = 1.0,
             average: bool = False) -> Trajectory:
    """Linearized augmented Lagrangian method.

    ``x+ = P_X(x - (grad f(x) + A'(lam + beta r)) / eta)`` and
    ``lam+ = lam + beta r+`` with ``r = Ax - b``, started from zero.
    Two oracle calls per iteration: one for ``grad f`` and ``Ax``, one for
    ``A'(lam + beta r)``.

    Parameters
    ----------
    eta : float
        Proximal weight; must be positive.
    beta : float
        Penalty; ``1`` gives the plain form.
    average : bool
        Record the running average of ``x^1..x^t`` instead of ``x^t``.
    """
    if not eta > 0:
        raise SolverError("eta must be positive")
    info, oracle = _setup(problem, oracle)
    x = np.zeros(info.n)
    lam_prev = np.zeros(info.m)
    lam = np.zeros(info.m)
    avg = np.zeros(info.n)
    traj = Trajectory("lalm", {"eta": eta, "beta": beta, "T": T, "average": average})
    traj.raw.append(x.copy())
    for t in range(T):
        grad, Ax, _ = oracle.query(x, lam_prev)
        r = Ax - info.b
        lam = lam_prev + beta * r if t > 0 else np.zeros(info.m)
        _, _, At_mult = oracle.query(x, lam + beta * r)
        x = project_ball(x - (grad + At_mult) / eta, info.X_radius)
        lam_prev = lam
        avg += (x - avg) / (t + 1)
        traj.raw.append(x.copy())
        traj.record(t + 1, avg if average else x, lam, oracle.call_count)
    return traj


def run_pdhg(problem, T: int, tau: float | None = None, sigma: float | None = None,
             oracle=None) -> Trajectory:
    """Primal-dual hybrid gradient with ball projections and ergodic averaging.

    ``x+ = P_X(x - tau (grad f(x) - A'y))``,
    ``y+ = P_Y(y + sigma (b - A(2x+ - x)))``. Default steps are balanced by
    ``w = R_X / R_Y``: ``sigma = 1/(w |A|)`` and ``tau = 1/(L_f/2 + |A|/w)``,
    which reduce to ``tau = w/|A|``, ``sigma = 1/(w |A|)`` when ``f`` is linear.
    """
    info, oracle = _setup(problem, oracle)
    if not info.is_spp:
        raise SolverError("PDHG needs ball-constrained primal and dual blocks")
    A_norm = info.L_A
    w = info.X_radius / info.Y_radius if info.Y_radius else 1.0
    if sigma is None:
        sigma = 1.0 / (w * A_norm) if A_norm > 0 else 1.0
    if tau is None:
        denom = 0.5 * info.L_f + (A_norm / w)
        tau = 1.0 / denom if denom > 0 else 1.0
    if tau <= 0 or sigma <= 0 or tau * sigma * A_norm ** 2 > 1.0 + 1e-12:
        raise SolverError(f"stepsizes violate tau*sigma*|A|^2 <= 1 "
                          f"(tau={tau}, sigma={sigma}, |A|={A_norm})")
    x = np.zeros(info.n)
    y = np.zeros(info.m)
    xs = np.zeros(info.n)
    ys = np.zeros(info.m)
    traj = Trajectory("pdhg", {"tau": tau, "sigma": sigma, "T": T})
    traj.raw.append(x.copy())
    for t in range(T):
        grad, Ax, Aty = oracle.query(x, y)
        x_new = project_ball(x - tau * (grad - Aty), info.X_radius)
        _, Ax_new, _ = oracle.query(x_new, y)
        y = project_ball(y + sigma * (info.b - 2.0 * Ax_new + Ax), info.Y_radius)
        x = x_new
        xs += (x - xs) / (t + 1)
        ys += (y - ys) / (t + 1)
        traj.raw.append(x.copy())
        traj.record(t + 1, xs, ys, oracle.call_count)
    return traj


def run_smoothing(problem, T: int, oracle=None) -> Trajectory:
    """Smoothing of the max term followed by the accelerated scheme for smooth minimization.

    The dual block is smoothed with ``(mu_s/2)|y|^2`` where
    ``mu_s = 2|A| D_X / ((T+1) D_Y)``; the resulting smooth function is
    minimized over the X ball for ``T+1`` gradient steps. The final point is
    the primal output and the weighted average of smoothed dual maximizers is
    the dual output.
    """
    info, oracle = _setup(problem, oracle)
    if not info.is_spp:
        raise SolverError("smoothing needs ball-constrained primal and dual blocks")
    D_X, D_Y = 2.0 * info.X_radius, 2.0 * info.Y_radius
    A_norm = info.L_A
    mu_s = 2.0 * A_norm * D_X / ((T + 1) * D_Y) if A_norm > 0 else 1.0
    L = info.L_f + A_norm ** 2 / mu_s
    x = np.zeros(info.n)
    x0 = x.copy()
    grad_sum = np.zeros(info.n)
    u_avg = np.zeros(info.m)
    weight = 0.0
    u = np.zeros(info.m)
    traj = Trajectory("smoothing", {"T": T, "mu_s": mu_s, "L": L})
    traj.raw.append(x.copy())
    for step in range(T + 1):
        grad, Ax, _ = oracle.query(x, u)
        u = project_ball((info.b - Ax) / mu_s, info.Y_radius)
        _, _, Atu = oracle.query(x, u)
        g = grad - Atu
        y_k = project_ball(x - g / L, info.X_radius)
        grad_sum += 0.5 * (step + 1) * g
        z_k = project_ball(x0 - grad_sum / L, info.X_radius)
        weight += step + 1
        u_avg += (step + 1) / weight * (u - u_avg)
        x = 2.0 / (step + 3) * z_k + (step + 1) / (step + 3) * y_k
        traj.raw.append(y_k.copy())
        traj.record(step, y_k, u_avg, oracle.call_count)
    return traj


def accelerated_gradient(grad_fn: Callable[[np.ndarray], np.ndarray], L: float, x0: np.ndarray,
                         T: int, radius: float | None = None, mu: float = 0.0,
                         callback: Callable | None = None) -> np.ndarray:
    """FISTA (``mu = 0``) or constant-momentum AGD (``mu > 0``) with optional ball projection.

    ``callback(t, x, y, grad_y)`` runs after each step; returning ``True`` stops.
    """
    x_prev = x0.copy()
    y = x0.copy()
    s = 1.0
    q = math.sqrt(mu / L) if mu > 0 else 0.0
    momentum_sc = (1.0 - q) / (1.0 + q)
    for t in range(T):
        g = grad_fn(y)
        x = project_ball(y - g / L, radius)
        if callback is not None and callback(t + 1, x, y, g):
            return x
        if mu > 0:
            coef = momentum_sc
        else:
            s_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * s * s))
            coef = (s - 1.0) / s_next
            s = s_next
        y = x + coef * (x - x_prev)
        x_prev = x
    return x_prev


def run_agd(problem, T: int, oracle=None, mu: float = 0.0) -> Trajectory:
    """Accelerated projected gradient on ``f`` over ``X`` (one call per iteration)."""
    info, oracle = _setup(problem, oracle)
    traj = Trajectory("agd", {"T": T, "mu": mu})
    zero_y = np.zeros(info.m)
    traj.raw.append(np.zeros(info.n))

    def grad_fn(x):
        return oracle.query(x, zero_y)[0]

    def record(t, x, y, g):
        traj.raw.append(x.copy())
        traj.record(t, x, zero_y, oracle.call_count)

    accelerated_gradient(grad_fn, info.L_f, np.zeros(info.n), T, info.X_radius, mu, record)
    return traj


def penalty_parameters(mu: float, y_norm: float, eps: float) -> tuple[float, float]:
    """``(rho0, eps0)`` that make an ``eps0``-solution of the penalty problem ``eps``-close."""
    if not (mu > 0 and eps > 0):
        raise SolverError("the penalty method needs mu > 0 and eps > 0")
    return 2.0 * y_norm ** 2 / (mu * eps), mu * eps / 4.0


def run_penalty_agd(problem, rho0: float, eps0: float, oracle=None,
                    max_iter: int = 10 ** 6) -> Trajectory:
    """AGD on ``f + (rho0/2)|Ax - b|^2`` until ``|grad|^2/(2 mu) <= eps0``.

    Strong convexity of ``f`` is required; the stopping test then certifies
    an ``eps0``-optimal point of the penalty problem. Each iteration uses two
    oracle calls (``grad f``, ``Ax``, then ``A'(Ax - b)``).
    """
    info, oracle = _setup(problem, oracle)
    if not (rho0 > 0 and eps0 > 0):
        raise SolverError("rho0 and eps0 must be positive")
    if not info.mu > 0:
        raise SolverError("the penalty method needs a strongly convex objective")
    L = info.L_f + rho0 * info.L_A ** 2
    zero_y = np.zeros(info.m)
    traj = Trajectory("penalty-agd", {"rho0": rho0, "eps0": eps0, "L": L})
    traj.raw.append(np.zeros(info.n))
    state = {"done": False}

    def grad_fn(x):
        g, Ax, _ = oracle.query(x, zero_y)
        _, _, Atr = oracle.query(x, Ax - info.b)
        return g + rho0 * Atr

    def check(t, x, y, g):
        # the query point y carries the certified gradient
        stop = float(g @ g) / (2.0 * info.mu) <= eps0
        out = y if stop else x
        traj.raw.append(out.copy())
        traj.record(t, out, zero_y, oracle.call_count)
        state["done"] = stop
        return stop

    accelerated_gradient(grad_fn, L, np.zeros(info.n), max_iter, info.X_radius, info.mu, check)
    traj.params["converged"] = state["done"]
    return traj


def run_random_probe(problem, T: int, oracle=None, seed: int = 0) -> Trajectory:
    """Non-span probe: random combinations of past answers, projected onto the balls."""
    info, oracle = _setup(problem, oracle)
    rng = np.random.default_rng(seed)
    xs, ys = [np.zeros(info.n)], [np.zeros(info.m)]
    gens_x: list[np.ndarray] = []
    gens_y: list[np.ndarray] = [info.b]
    traj = Trajectory("probe", {"T": T, "seed": seed})
    x, y = xs[0], ys[0]
    for t in range(T):
        grad, Ax, Aty = oracle.query(x, y)
        gens_x += [grad, Aty, x]
        gens_y += [Ax, y]
        cx = rng.standard_normal(len(gens_x))
        cy = rng.standard_normal(len(gens_y))
        x = sum(c * g for c, g in zip(cx, gens_x)) + rng.standard_normal() * 0.1
        y = sum(c * g for c, g in zip(cy, gens_y))
        x = project_ball(np.tanh(x) * (1.0 + np.abs(x)), info.X_radius)
        y = project_ball(y, info.Y_radius)
        traj.record(t + 1, x, y, oracle.call_count)
    return traj


def zero_objective(inst: Instance) -> Instance:
    """Copy of a saddle instance with ``f = 0``; only the bilinear coupling remains.

    Its closed-form solution no longer applies, so only the gap column of
    :func:`metrics` is meaningful for it.
    """
    return replace(inst, H=np.zeros_like(inst.H), h=np.zeros_like(inst.h), L_f=0.0)


def metrics(traj: Trajectory, inst: Instance) -> Trajectory:
    """Fill objective error, feasibility, squared distance and duality gap in place.

    The gap is ``phi(x) - psi(y)`` for saddle kinds and NaN otherwise.
    """
    sol = closed_form(inst)
    for p in traj.points:
        ev = evaluate(inst, p.x, p.y)
        p.obj_signed = ev.f - sol.opt_value
        p.obj_err = abs(p.obj_signed)
        p.feas = float(np.linalg.norm(ev.residual))
        p.dist2 = float(np.sum((p.x - sol.x_star) ** 2))
        p.gap = ev.phi - ev.psi if inst.is_spp else math.nan
    return traj
