"""Lower and upper rate envelopes and trajectory-versus-envelope verdicts."""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .instances import Instance, closed_form
from .krylov import min_over_K

__all__ = [
    "LOWER_SOURCES",
    "UPPER_SOURCES",
    "BoundEnvelope",
    "BoundError",
    "EnvelopeParams",
    "VerdictReport",
    "VerdictRow",
    "envelope_params",
    "general_lower_source",
    "krylov_envelope",
    "lbd_iterations_scvx",
    "lower_envelope",
    "make_envelope",
    "norm_1_2",
    "span_lower_source",
    "ubd_iterations_scvx",
    "upper_envelope",
    "verdict",
]

SQRT2, SQRT3, SQRT6 = math.sqrt(2.0), math.sqrt(3.0), math.sqrt(6.0)


class BoundError(ValueError):
    """Envelope evaluated outside its validity window or with bad arguments."""


@dataclass(frozen=True)
class EnvelopeParams:
    L_f: float
    L_A: float
    mu: float = 0.0
    x_norm: float = 0.0
    y_norm: float = 0.0
    R_X: float = 0.0
    R_Y: float = 0.0
    m: int | None = None
    A_12: float | None = None

    @property
    def D_X(self) -> float:
        return 2.0 * self.R_X

    @property
    def D_Y(self) -> float:
        return 2.0 * self.R_Y


def norm_1_2(A: np.ndarray) -> float:
    """``max_{|x|_1 = 1, |y|_2 = 1} <Ax, y>``, i.e. the largest column norm."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(A, axis=0)))


def envelope_params(inst: Instance) -> EnvelopeParams:
    sol = closed_form(inst)
    return EnvelopeParams(inst.L_f, inst.L_A, inst.mu, math.sqrt(sol.x_norm_sq),
                          math.sqrt(sol.y_norm_sq), inst.X_radius or 0.0, inst.Y_radius or 0.0,
                          inst.m, norm_1_2(inst.A))


# Each lower source: (window, {metric: formula(params, t)})
def _span_window(p: EnvelopeParams, t: int) -> bool:
    return p.m is None or t < p.m / 2


def _general_window(p: EnvelopeParams, t: int) -> bool:
    return p.m is None or t < p.m / 4 - 2


def _eco_i(d):
    return {
        "obj": lambda p, t: (3 * p.L_f * p.x_norm ** 2 / (32 * d(t))
                             + SQRT6 * p.L_A * p.x_norm * p.y_norm / (32 * d(t))),
        "feas": lambda p, t: SQRT3 * p.L_A * p.x_norm / (4 * SQRT2 * d(t)),
    }


def _eco_ii(d):
    return {
        "obj": lambda p, t: (3 * p.L_f * p.x_norm ** 2 / (128 * d(t) ** 2)
                             + SQRT3 * p.L_A * p.x_norm * p.y_norm / (8 * d(t))),
        "feas": lambda p, t: SQRT3 * p.L_A * p.x_norm / (4 * SQRT2 * d(t)),
    }


def _eco_sc(d):
    return {"dist2": lambda p, t: 5 * p.L_A ** 2 * p.y_norm ** 2 / (256 * p.mu ** 2 * d(t) ** 2)}


def _span_d(t):
    return t + 1


def _general_d(t):
    return 2 * t + 5


def _spp_d(t):
    return 4 * t + 9


LOWER_SOURCES: dict[str, tuple[Callable, dict]] = {
    "span-eco-i": (_span_window, _eco_i(_span_d)),
    "span-eco-ii": (_span_window, _eco_ii(_span_d)),
    "span-eco-sc": (_span_window, _eco_sc(_span_d)),
    "general-eco-i": (_general_window, _eco_i(_general_d)),
    "general-eco-ii": (_general_window, _eco_ii(_general_d)),
    "general-eco-sc": (_general_window, _eco_sc(_general_d)),
    "general-spp-ii": (_general_window, {
        "gap": lambda p, t: (p.L_f * p.R_X ** 2 / (16 * _spp_d(t) ** 2)
                             + (SQRT2 + 2) / 4 * p.L_A * p.R_X * p.R_Y / _spp_d(t)),
    }),
    "general-spp-sc": (_general_window, {
        "dist2": lambda p, t: 5 * p.L_A ** 2 * p.R_Y ** 2 / (256 * p.mu ** 2 * _spp_d(t) ** 2),
        "gap": lambda p, t: 5 * p.L_A ** 2 * p.R_Y ** 2 / (512 * p.mu * _spp_d(t) ** 2),
    }),
    "general-spp-i": (_general_window, {
        "gap": lambda p, t: (p.L_f * p.R_X ** 2 / (12 * _spp_d(t))
                             + p.L_A * p.R_X * p.R_Y / (8 * _spp_d(t))),
    }),
}


def _lalm_upper(p, t):
    if t <= 0:
        raise BoundError("the LALM envelope needs t >= 1")
    return (0.5 * p.L_f * p.x_norm ** 2
            + p.L_A * p.x_norm * max(2 * p.y_norm, 1 + p.y_norm)) / t


def _al_admm_upper(p, t):
    if t <= 0:
        raise BoundError("the AL-ADMM envelope divides by t; t must be >= 1")
    return 2 * p.L_f * p.D_X ** 2 / (t * (t + 1)) + 2 * p.L_A * p.D_X * p.D_Y / (t + 1)


def _smoothing_upper(p, t):
    A12 = p.L_A if p.A_12 is None else p.A_12
    return 4 * p.L_f * p.D_X ** 2 / (t + 1) ** 2 + 4 * A12 * p.D_X * p.D_Y / (t + 1)


UPPER_SOURCES: dict[str, dict] = {
    "lalm": {"obj": _lalm_upper},
    "al-admm": {"obj": _al_admm_upper},
    "smoothing": {"gap": _smoothing_upper},
}


def lower_envelope(source: str, params: EnvelopeParams, t: int,
                   strict: bool = True) -> dict[str, float]:
    """Evaluate a lower-bound formula at iteration ``t``.

    With ``strict`` the validity window of the source (``t < m/2`` for
    span-restricted methods, ``t < m/4 - 2`` for general methods) is enforced.
    """
    if source not in LOWER_SOURCES:
        raise BoundError(f"unknown lower source {source!r}")
    window, formulas = LOWER_SOURCES[source]
    if t < 0:
        raise BoundError("t must be nonnegative")
    if strict and not window(params, t):
        limit = "m/2" if window is _span_window else "m/4 - 2"
        raise BoundError(f"t={t} outside the validity window t < {limit} (m={params.m})")
    return {metric: float(fn(params, t)) for metric, fn in formulas.items()}


def upper_envelope(source: str, params: EnvelopeParams, t: int) -> dict[str, float]:
    if source not in UPPER_SOURCES:
        raise BoundError(f"unknown upper source {source!r}")
    if t < 0:
        raise BoundError("t must be nonnegative")
    return {metric: float(fn(params, t)) for metric, fn in UPPER_SOURCES[source].items()}


def lbd_iterations_scvx(L_A: float, y_norm: float, mu: float, eps: float) -> int:
    """Fewest iterations any method needs to get within ``sqrt(eps)`` of the solution."""
    return math.ceil(math.sqrt(5.0) * L_A * y_norm / (32 * mu * math.sqrt(eps)) - 2.5)


def ubd_iterations_scvx(L_f: float, mu: float, L_A: float, y_norm: float, eps: float,
                        const: float = 1.0) -> float:
    """Iteration bound of the quadratic-penalty accelerated method; ``const`` is the O(1) term."""
    return 2 * (math.sqrt(L_f / mu) + 2 * L_A * y_norm / (mu * math.sqrt(eps))) * (
        const + math.log(1.0 / eps))


@dataclass(frozen=True)
class BoundEnvelope:
    """A named family of per-metric functions of ``t`` with a validity predicate."""

    source: str
    params: EnvelopeParams
    values: dict[str, Callable[[int], float]]
    window: Callable[[int], bool] = field(default=lambda t: True)

    def at(self, t: int) -> dict[str, float]:
        return {metric: fn(t) for metric, fn in self.values.items()}

    def restricted(self, predicate: Callable[[int], bool]) -> BoundEnvelope:
        base = self.window
        return replace(self, window=lambda t: base(t) and predicate(t))


def make_envelope(source: str, params: EnvelopeParams) -> BoundEnvelope:
    if source in LOWER_SOURCES:
        window, formulas = LOWER_SOURCES[source]
        values = {metric: (lambda t, fn=fn: float(fn(params, t))) for metric, fn in formulas.items()}
        return BoundEnvelope(source, params, values, lambda t: t >= 0 and window(params, t))
    if source in UPPER_SOURCES:
        values = {metric: (lambda t, fn=fn: float(fn(params, t)))
                  for metric, fn in UPPER_SOURCES[source].items()}
        minimum = 1 if source in ("lalm", "al-admm") else 0
        return BoundEnvelope(source, params, values, lambda t: t >= minimum)
    raise BoundError(f"unknown source {source!r}")


def krylov_envelope(inst: Instance, lag: int = 1) -> BoundEnvelope:
    """Per-iteration exact minima over ``K_{t - lag}`` for span-restricted methods.

    A method whose ``t``-th output lies in ``K_{t - lag}`` cannot beat these
    values. The window ends once the order would exceed ``k - 1``. The
    saddle kinds use ``phi_gap`` except the strongly convex one, where
    ``gap >= (mu/2) |x - x*|^2`` turns the distance minimum into a gap bound.
    """
    kind = inst.kind

    def order(t):
        return max(t - lag, 0)

    def fn(quantity, scale=1.0):
        return lambda t: scale * min_over_K(inst, quantity, order(t))

    if kind in ("ECO-I", "ECO-II"):
        values = {"obj": fn("obj_abs"), "feas": fn("feas")}
    elif kind == "ECO-SC":
        values = {"dist2": fn("dist2"), "feas": fn("feas")}
    elif kind == "SPP-SC":
        values = {"dist2": fn("dist2"), "gap": fn("dist2", 0.5 * inst.mu)}
    else:
        values = {"gap": fn("phi_gap")}
    return BoundEnvelope("krylov-min", envelope_params(inst), values,
                         lambda t: t >= 0 and order(t) <= inst.k - 1)


def span_lower_source(kind: str) -> str:
    return {"ECO-I": "span-eco-i", "ECO-II": "span-eco-ii", "ECO-SC": "span-eco-sc"}[kind]


def general_lower_source(kind: str) -> str:
    return {"ECO-I": "general-eco-i", "ECO-II": "general-eco-ii", "ECO-SC": "general-eco-sc",
            "SPP-I": "general-spp-i", "SPP-II": "general-spp-ii",
            "SPP-SC": "general-spp-sc"}[kind]


@dataclass(frozen=True)
class VerdictRow:
    source: str
    t: int
    metric: str
    measured: float
    bound: float
    direction: str  # ">=" for lower envelopes, "<=" for upper envelopes
    passed: bool
    asserted: bool

    @property
    def slack(self) -> float:
        return (self.measured - self.bound) if self.direction == ">=" else (self.bound - self.measured)


VERDICT_FIELDS = ("source", "t", "metric", "measured", "bound", "direction", "pass")


@dataclass
class VerdictReport:
    rows: list[VerdictRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if r.asserted)

    def violations(self) -> list[VerdictRow]:
        return [r for r in self.rows if r.asserted and not r.passed]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(VERDICT_FIELDS)
            for r in self.rows:
                status = ("true" if r.passed else "false") if r.asserted else "info"
                writer.writerow([r.source, r.t, r.metric, repr(r.measured), repr(r.bound),
                                 r.direction, status])


def verdict(trajectory, lower: BoundEnvelope | None = None, upper: BoundEnvelope | None = None,
            context: str = "fixed-instance", linear_span: bool = True,
            tol: float = 1e-7) -> VerdictReport:
    """Compare filled trajectory metrics with envelopes, one row per (t, metric).

    Lower envelopes are asserted in the ``adversarial`` context and, in the
    ``fixed-instance`` context, only for span-restricted methods; otherwise
    the rows are informational. A supplied upper envelope is always asserted
    (callers pass it only for the method it was proven for).
    """
    if context not in ("adversarial", "fixed-instance"):
        raise BoundError(f"unknown context {context!r}")
    report = VerdictReport()
    assert_lower = context == "adversarial" or linear_span
    for env, direction, asserted in ((lower, ">=", assert_lower), (upper, "<=", True)):
        if env is None:
            continue
        primary = next(iter(env.values))
        for p in trajectory.points:
            if not env.window(p.t):
                continue
            for metric, value in env.at(p.t).items():
                measured = float(getattr(p, metric if metric != "obj" else "obj_err"))
                if math.isnan(measured):
                    continue
                ok = (measured >= value - tol) if direction == ">=" else (measured <= value + tol)
                report.rows.append(VerdictRow(env.source, p.t, metric, measured, value,
                                              direction, ok, asserted))
                if metric == primary:
                    setattr(p, "lower_env" if direction == ">=" else "upper_env", value)
    return report
