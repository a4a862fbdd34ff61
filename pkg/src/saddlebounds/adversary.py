"""Resisting oracle: rotates the hidden instance while answering queries.

Before answering round ``s`` the oracle composes ``U <- U Phi`` and
``V <- V Psi`` where ``Phi`` fixes ``U' K_{2s}`` pointwise and moves the
query ``x`` into ``U' K_{2s+1}`` (``Psi`` does the same for ``y`` with the
``J`` spaces). Earlier answers remain valid under every later rotation, so
the method cannot tell that the instance was never fixed in advance. After
at most ``(k-4)/2 + 1`` rounds the designated output lies in ``U' K_{k-1}``
and the exact minima over ``K_{k-1}`` become certified lower bounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import envelope_params, general_lower_source, lower_envelope
from .instances import Instance, closed_form, evaluate, rotate_instance
from .krylov import closed_form_J, closed_form_K, min_over_K
from .numerics import subspace_fixing_rotation
from .oracle import OracleTranscript, _as_vector
from .solvers import (
    CALLS_PER_ITERATION,
    lalm_auto_parameters,
    penalty_parameters,
    public_info,
    run_agd,
    run_lalm,
    run_pdhg,
    run_penalty_agd,
    run_random_probe,
    run_smoothing,
)

__all__ = [
    "AdversaryError",
    "BoundCertificate",
    "ReplayVerdict",
    "ResistingOracle",
    "adversary_finalize",
    "adversary_new",
    "adversary_query",
    "replay_consistency",
    "run_against_adversary",
]

SLACK_TOL = 1e-7
REPLAY_TOL = 1e-8
REFRESH_EVERY = 10


class AdversaryError(RuntimeError):
    """Precondition failure or exhausted validity window."""


@dataclass
class BoundCertificate:
    method: str
    base_kind: str
    k: int
    rounds: int
    membership_residuals: list[float]
    certified_lower_values: dict[str, float]
    measured_values: dict[str, float]
    envelope_values: dict[str, float]
    envelope_t: int
    replay_deviation: float
    passed: bool
    slack: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class ReplayVerdict:
    max_deviation: float
    passed: bool


def _check_structure(base: Instance) -> None:
    k, m, n = base.k, base.m, base.n
    scale_h = max(1.0, float(np.linalg.norm(base.H)))
    scale_a = max(1.0, float(np.linalg.norm(base.A)))
    K0 = closed_form_K(k, n, 0)
    if K0.residual(base.h) > 1e-10 * max(1.0, float(np.linalg.norm(base.h))):
        raise AdversaryError("h is not in K_0")
    if closed_form_J(k, m, 0).residual(base.b) > 1e-10 * max(1.0, float(np.linalg.norm(base.b))):
        raise AdversaryError("b is not in J_0")
    for i in range(2 * k - 1):
        Ki, Ki1 = closed_form_K(k, n, i), closed_form_K(k, n, i + 1)
        if i % 2 == 1:
            image = base.H @ Ki.basis
            if np.max(np.linalg.norm(image - Ki1.project(image), axis=0)) > 1e-10 * scale_h:
                raise AdversaryError(f"H K_{i} is not contained in K_{i + 1}")
        image = base.A @ Ki.basis
        J1 = closed_form_J(k, m, i + 1)
        if np.max(np.linalg.norm(image - J1.project(image), axis=0)) > 1e-10 * scale_a:
            raise AdversaryError(f"A K_{i} is not contained in J_{i + 1}")
        image = base.A.T @ closed_form_J(k, m, i).basis
        if np.max(np.linalg.norm(image - Ki.project(image), axis=0)) > 1e-10 * scale_a:
            raise AdversaryError(f"A' J_{i} is not contained in K_{i}")


def _polar(Q: np.ndarray) -> np.ndarray:
    W, _, Zt = np.linalg.svd(Q)
    return W @ Zt


class ResistingOracle:
    """Adversarial first-order oracle over an unrotated hard instance.

    Parameters
    ----------
    base : Instance
        Unrotated instance; its data must map the Krylov chains into each
        other (checked at construction).
    keep_entries : bool
        Keep the full query log (needed for replay checks).
    """

    def __init__(self, base: Instance, keep_entries: bool = True):
        if base.is_rotated:
            raise AdversaryError("the base instance must be unrotated")
        if base.k < 4:
            raise AdversaryError("the resisting oracle needs k >= 4")
        _check_structure(base)
        self.base = base
        self.k = base.k
        self.U = np.eye(base.n)
        self.V = np.eye(base.m)
        self.stage = 0
        self.max_rounds = (base.k - 4) // 2 + 1
        self.transcript = OracleTranscript(keep_entries)
        self.membership_residuals: list[float] = []
        self._compositions = 0
        self.finalized = False

    @property
    def call_count(self) -> int:
        return self.transcript.call_count

    def _compose(self, Phi: np.ndarray, Psi: np.ndarray) -> None:
        self.U = self.U @ Phi
        self.V = self.V @ Psi
        self._compositions += 1
        if self._compositions % REFRESH_EVERY == 0:
            self.U = _polar(self.U)
            self.V = _polar(self.V)

    def _rotate_into(self, x: np.ndarray, y: np.ndarray, order: int) -> None:
        k, m, n = self.k, self.base.m, self.base.n
        Phi = subspace_fixing_rotation(closed_form_K(k, n, order, self.U),
                                       closed_form_K(k, n, order + 1, self.U), x)
        Psi = subspace_fixing_rotation(closed_form_J(k, m, order, self.V),
                                       closed_form_J(k, m, order + 1, self.V), y)
        self._compose(Phi, Psi)

    def _answer(self, x: np.ndarray, y: np.ndarray):
        Ux = self.U @ x
        grad = self.U.T @ (self.base.H @ Ux) - self.base.h
        Ax = self.V.T @ (self.base.A @ Ux)
        Aty = self.U.T @ (self.base.A.T @ (self.V @ y))
        return grad, Ax, Aty

    def query(self, x, y):
        """Rotate so the query lies in the next rotated Krylov pair, then answer."""
        if self.finalized:
            raise AdversaryError("session already finalized")
        if self.stage >= self.max_rounds:
            raise AdversaryError("validity window of the rotation argument exhausted "
                                 f"({self.max_rounds} rounds for k={self.k})")
        x = _as_vector(x, self.base.n, "x").copy()
        y = _as_vector(y, self.base.m, "y").copy()
        s = self.stage
        self._rotate_into(x, y, 2 * s)
        rx = closed_form_K(self.k, self.base.n, 2 * s + 1, self.U).residual(x)
        ry = closed_form_J(self.k, self.base.m, 2 * s + 1, self.V).residual(y)
        self.membership_residuals.append(max(rx, ry))
        grad, Ax, Aty = self._answer(x, y)
        self.transcript.append(x, y, grad, Ax, Aty)
        self.stage += 1
        return grad, Ax, Aty

    def finalize(self, xbar, ybar, method: str = "unknown") -> tuple[Instance, BoundCertificate]:
        """Final rotation of the designated output and the lower-bound certificate."""
        xbar = _as_vector(xbar, self.base.n, "xbar").copy()
        ybar = _as_vector(ybar, self.base.m, "ybar").copy()
        k = self.k
        last = self.stage - 1
        self._rotate_into(xbar, ybar, 2 * last + 2)
        self.finalized = True
        final = rotate_instance(self.base, self.U, self.V)
        Kk = closed_form_K(k, self.base.n, k - 1, self.U)
        Jk = closed_form_J(k, self.base.m, k - 1, self.V)
        out_resid = max(Kk.residual(xbar), Jk.residual(ybar))
        residuals = self.membership_residuals + [out_resid]
        certified, measured = _certify(final, xbar, ybar)
        t_env = (k - 4) // 2
        envelope = lower_envelope(general_lower_source(self.base.kind),
                                  envelope_params(self.base), t_env, strict=False)
        envelope = {key: envelope[key] for key in certified}
        replay = replay_consistency(self)
        slack = {}
        for key in certified:
            slack[key] = min(measured[key] - certified[key], certified[key] - envelope[key])
        scale = 1.0 + float(np.linalg.norm(xbar)) + float(np.linalg.norm(ybar))
        ok_members = max(residuals) <= 1e-8 * scale
        passed = bool(ok_members and replay.passed and all(v >= -SLACK_TOL for v in slack.values()))
        cert = BoundCertificate(method, self.base.kind, k, self.stage, residuals, certified,
                                measured, envelope, t_env, replay.max_deviation, passed, slack)
        return final, cert


def _certify(final: Instance, xbar: np.ndarray, ybar: np.ndarray):
    sol = closed_form(final)
    ev = evaluate(final, xbar, ybar)
    kind = final.kind
    feas = float(np.linalg.norm(ev.residual))
    dist2 = float(np.sum((xbar - sol.x_star) ** 2))
    if kind == "ECO-I":
        return ({"obj": min_over_K(final, "obj_abs"), "feas": min_over_K(final, "feas")},
                {"obj": abs(ev.f - sol.opt_value), "feas": feas})
    if kind == "ECO-II":
        return ({"obj": min_over_K(final, "obj") - sol.opt_value,
                 "feas": min_over_K(final, "feas")},
                {"obj": ev.f - sol.opt_value, "feas": feas})
    if kind == "ECO-SC":
        return {"dist2": min_over_K(final, "dist2")}, {"dist2": dist2}
    gap = ev.phi - ev.psi
    if kind == "SPP-SC":
        d = min_over_K(final, "dist2")
        return {"dist2": d, "gap": 0.5 * final.mu * d}, {"dist2": dist2, "gap": gap}
    return {"gap": min_over_K(final, "phi_gap")}, {"gap": gap}


def replay_consistency(oracle: ResistingOracle) -> ReplayVerdict:
    """Recompute every logged answer under the current ``(U, V)``."""
    dev = 0.0
    for e in oracle.transcript.entries:
        grad, Ax, Aty = oracle._answer(e.x, e.y)
        dev = max(dev, float(np.max(np.abs(grad - e.grad_f))), float(np.max(np.abs(Ax - e.Ax))),
                  float(np.max(np.abs(Aty - e.Aty))))
    return ReplayVerdict(dev, dev <= REPLAY_TOL)


def adversary_new(base: Instance) -> ResistingOracle:
    return ResistingOracle(base)


def adversary_query(state: ResistingOracle, x, y):
    return state.query(x, y)


def adversary_finalize(state: ResistingOracle, xbar, ybar, method: str = "unknown"):
    return state.finalize(xbar, ybar, method)


def run_against_adversary(base: Instance, method: str, seed: int = 0, eps: float = 1e-3,
                          **params):
    """Run a solver through a fresh resisting oracle for its full round budget.

    Returns ``(trajectory, certificate, oracle, final_instance)``.
    """
    if method not in CALLS_PER_ITERATION:
        raise AdversaryError(f"unknown method {method!r}")
    oracle = ResistingOracle(base)
    sol = closed_form(base)
    x_norm, y_norm = math.sqrt(sol.x_norm_sq), math.sqrt(sol.y_norm_sq)
    iters = oracle.max_rounds // CALLS_PER_ITERATION[method]
    if iters < 1:
        raise AdversaryError(f"round budget too small for {method}")
    if method == "lalm":
        eta = params.get("eta")
        beta = params.get("beta", 1.0)
        if eta in (None, "auto"):
            eta, beta = lalm_auto_parameters(base.L_f, base.L_A, x_norm, y_norm)
        traj = run_lalm(public_info(base), eta, iters, oracle, beta=beta)
    elif method == "pdhg":
        traj = run_pdhg(public_info(base), iters, params.get("tau"), params.get("sigma"), oracle)
    elif method == "smoothing":
        traj = run_smoothing(public_info(base), iters - 1, oracle)
    elif method == "agd":
        traj = run_agd(public_info(base), iters, oracle, mu=base.mu)
    elif method == "penalty-agd":
        rho0, eps0 = penalty_parameters(base.mu, y_norm, eps)
        traj = run_penalty_agd(public_info(base), params.get("rho0", rho0),
                               params.get("eps0", eps0), oracle, max_iter=iters)
    elif method == "probe":
        traj = run_random_probe(public_info(base), iters, oracle, seed=seed)
    final_pt = traj.final
    final, cert = oracle.finalize(final_pt.x, final_pt.y, method)
    return traj, cert, oracle, final

