"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL`` line with its headline
numbers (visible with ``pytest -s``; ``pytest -v`` shows the same verdict
per test name) and checks its own runtime budget.
"""

import math
import time
from dataclasses import replace
from itertools import pairwise, product

import numpy as np
import pytest
from scipy import optimize
from scipy.stats import ortho_group

from saddlebounds.adversary import replay_consistency, run_against_adversary
from saddlebounds.bounds import (
    LOWER_SOURCES,
    UPPER_SOURCES,
    EnvelopeParams,
    envelope_params,
    lower_envelope,
    ubd_iterations_scvx,
    upper_envelope,
)
from saddlebounds.cli import verify_checks
from saddlebounds.instances import (
    KINDS,
    SPP_KINDS,
    closed_form,
    evaluate,
    kkt_residuals,
    make_instance,
    make_lambda_c,
)
from saddlebounds.krylov import (
    brute_force_min_over_K,
    closed_form_J,
    closed_form_K,
    krylov_pair,
    min_over_K,
)
from saddlebounds.numerics import max_principal_angle, min_quadratic_over_ball
from saddlebounds.oracle import FirstOrderOracle, check_linear_span
from saddlebounds.solvers import (
    lalm_auto_parameters,
    metrics,
    penalty_parameters,
    run_lalm,
    run_penalty_agd,
    run_smoothing,
)

SQRT2 = math.sqrt(2.0)


def report(number, ok, detail):
    print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


# ---------------------------------------------------------------- 1

def reference_values(kind, k, L_f, L_A, mu):
    """(f*, |x*|^2, |y*|^2) written out from the published closed forms."""
    x2 = k * (2 * k + 1) * (4 * k + 1) / 3
    if kind in ("ECO-I", "SPP-I"):
        return L_f * k ** 2 / 2, x2, 4 * L_f ** 2 * k ** 3 / L_A ** 2
    if kind in ("ECO-II", "SPP-II"):
        return -(L_f / 4 + L_A / (2 * SQRT2)) * k, x2, k / 4
    y2 = (2 * k * (2 * k + 1) * (4 * k + 1) * (16 * k ** 2 + 8 * k + 2)
          * mu ** 2 / (15 * L_A ** 2))
    return mu * x2 / 2, x2, y2


def closed_form_grid():
    for kind, k in product(KINDS, range(1, 7)):
        if kind.endswith("SC"):
            params = [(mu, mu, L_A) for mu, L_A in product((0.5, 2.0), (1.0, 2.0))]
        else:
            params = [(0.0, L_f, L_A) for L_f, L_A in product((1.0, 10.0), (0.0, 1.0, 2.0))
                      if (L_A > 0 if kind.endswith("-I") else L_f >= L_A)]
        for mu, L_f, L_A in params:
            yield kind, k, L_f, L_A, mu


def test_criterion_1_closed_forms():
    start = time.perf_counter()
    worst_kkt = worst_rel = 0.0
    cases = 0
    for kind, k, L_f, L_A, mu in closed_form_grid():
        m = 2 * k + 3
        inst = make_instance(kind, m, m + 2, k, L_f, L_A, mu)
        sol = closed_form(inst)
        worst_kkt = max(worst_kkt, *kkt_residuals(inst, sol.x_star, sol.y_star).values())
        f_ref, x2_ref, y2_ref = reference_values(kind, k, L_f, L_A, mu)
        ev = evaluate(inst, sol.x_star, sol.y_star)
        measured = [ev.f, float(sol.x_star @ sol.x_star), float(sol.y_star @ sol.y_star)]
        if inst.is_spp:
            # phi* equals f* because x* is feasible
            measured.append(ev.phi)
        for got, want in zip(measured, [f_ref, x2_ref, y2_ref, f_ref]):
            worst_rel = max(worst_rel, rel(got, want))
        cases += 1
    elapsed = time.perf_counter() - start
    ok = worst_kkt <= 1e-9 and worst_rel <= 1e-10 and elapsed < 5
    assert report(1, ok, f"{cases} cases, KKT {worst_kkt:.1e}, closed forms {worst_rel:.1e}, "
                         f"{elapsed:.2f}s")


# ---------------------------------------------------------------- 2

MIN_QUANTITIES = {"ECO-I": ("obj_abs", "feas"), "ECO-II": ("obj", "obj_abs", "feas"),
                  "ECO-SC": ("obj", "feas", "dist2"), "SPP-I": ("phi_gap", "feas"),
                  "SPP-II": ("phi_gap", "feas"), "SPP-SC": ("feas", "dist2")}


def test_criterion_2_krylov():
    start = time.perf_counter()
    worst_angle = worst_min = 0.0
    for k in range(1, 7):
        m, n = 2 * k + 3, 2 * k + 5
        Lam, c = make_lambda_c(m, n, k)
        for i in range(2 * k):
            pair = krylov_pair(Lam, c, i)
            worst_angle = max(worst_angle, max_principal_angle(pair.K, closed_form_K(k, n, i)),
                              max_principal_angle(pair.J, closed_form_J(k, m, i)))
        for kind in KINDS:
            inst = make_instance(kind, m, n, k, L_f=3.0, L_A=2.0, mu=0.5)
            for q in MIN_QUANTITIES[kind]:
                exact, numeric = min_over_K(inst, q), brute_force_min_over_K(inst, q)
                worst_min = max(worst_min, abs(exact - numeric) / max(1.0, abs(exact)))
    elapsed = time.perf_counter() - start
    ok = worst_angle <= 1e-9 and worst_min <= 1e-7 and elapsed < 10
    assert report(2, ok, f"max angle {worst_angle:.1e}, min_over_K {worst_min:.1e}, "
                         f"{elapsed:.2f}s")


# ---------------------------------------------------------------- 3

@pytest.mark.parametrize("L_f,L_A", [(1.0, 1.0), (2.0, 0.5)])
def test_criterion_3_linear_span_lower_bound(L_f, L_A):
    # one matching instance per count t with k = t, where the bound at t is sharp
    worst_slack, worst_span = math.inf, 0.0
    for t in range(1, 20):
        inst = make_instance("ECO-I", 40, 48, t, L_f=L_f, L_A=L_A)
        sol = closed_form(inst)
        xn, yn = math.sqrt(sol.x_norm_sq), math.sqrt(sol.y_norm_sq)
        eta, beta = lalm_auto_parameters(L_f, L_A, xn, yn)
        oracle = FirstOrderOracle(inst)
        traj = run_lalm(inst, eta, t, oracle, beta=beta)
        x = traj.final.x
        obj = abs(inst.f(x) - sol.opt_value)
        feas = float(np.linalg.norm(inst.A @ x - inst.b))
        obj_lb = 3 * L_f * xn ** 2 / (32 * (t + 1)) + math.sqrt(6) * L_A * xn * yn / (32 * (t + 1))
        feas_lb = math.sqrt(3) * L_A * xn / (4 * SQRT2 * (t + 1))
        worst_slack = min(worst_slack, obj - obj_lb, feas - feas_lb)
        span = check_linear_span(oracle.transcript, traj.raw)
        worst_span = max(worst_span, max(span.residuals))
    ok = worst_slack >= -1e-7 and worst_span <= 1e-8
    assert report(3, ok, f"L_f={L_f} L_A={L_A}: worst slack {worst_slack:.3g}, "
                         f"span residual {worst_span:.1e}")


# ---------------------------------------------------------------- 4

ADVERSARIAL_RUNS = [
    ("lalm", "ECO-I"), ("lalm", "ECO-II"),
    ("pdhg", "SPP-I"), ("pdhg", "SPP-II"), ("pdhg", "SPP-SC"),
    ("smoothing", "SPP-I"), ("smoothing", "SPP-II"), ("smoothing", "SPP-SC"),
    ("penalty-agd", "ECO-SC"),
    ("probe", "ECO-I"), ("probe", "ECO-II"), ("probe", "ECO-SC"),
    ("probe", "SPP-I"), ("probe", "SPP-II"), ("probe", "SPP-SC"),
]


def test_criterion_4_adversarial_general_bounds():
    start = time.perf_counter()
    worst_slack, worst_replay, failures = math.inf, 0.0, []
    for method, kind in ADVERSARIAL_RUNS:
        base = make_instance(kind, 42, 50, 20, L_f=2.0, L_A=1.0, mu=1.0)
        _, cert, oracle, _ = run_against_adversary(base, method, seed=11)
        replay = replay_consistency(oracle).max_deviation
        slack = min(cert.slack.values())
        worst_slack, worst_replay = min(worst_slack, slack), max(worst_replay, replay)
        if not (cert.passed and slack >= -1e-7 and replay <= 1e-8):
            failures.append(f"{method}/{kind}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    assert report(4, ok, f"{len(ADVERSARIAL_RUNS)} runs, worst slack {worst_slack:.3g}, "
                         f"replay {worst_replay:.1e}, {elapsed:.2f}s, failed {failures}")


# ---------------------------------------------------------------- 5

def test_criterion_5_upper_bound_tightness():
    start = time.perf_counter()
    inst = make_instance("SPP-II", 14, 20, 6, L_f=1.0, L_A=1.0)
    params = envelope_params(inst)
    lines, ok = [], True
    for T in (10, 50, 200):
        gap = metrics(run_smoothing(inst, T), inst).final.gap
        upper = upper_envelope("smoothing", params, T)["gap"]
        # the lower envelope is read past its validity window here; see the notes
        lower = lower_envelope("general-spp-ii", params, T, strict=False)["gap"]
        ok = ok and gap <= upper and upper / lower <= 300
        lines.append(f"T={T} gap {gap:.3g} <= {upper:.3g}, ratio {upper / lower:.0f}")

    sc = make_instance("ECO-SC", 14, 20, 6, L_A=2.0, mu=1.0)
    y_norm = math.sqrt(closed_form(sc).y_norm_sq)
    traj = metrics(run_penalty_agd(sc, *penalty_parameters(sc.mu, y_norm, 1e-3)), sc)
    budget = ubd_iterations_scvx(sc.L_f, sc.mu, sc.L_A, y_norm, 1e-3)
    calls = traj.final.oracle_calls
    ok = ok and traj.final.dist2 <= 1e-3 and calls <= 4 * budget
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 60
    assert report(5, ok, "; ".join(lines) + f"; penalty dist2 {traj.final.dist2:.2e} with "
                         f"{calls} calls (4x budget {4 * budget:.0f}); {elapsed:.2f}s")


# ---------------------------------------------------------------- 6

def brute_force_ball_2d(H, g, R):
    """Dense polar grid over the disk, polished by a constrained local solve."""
    r = np.linspace(0.0, R, 301)
    th = np.linspace(0.0, 2 * np.pi, 1441)
    P = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()])
    vals = 0.5 * np.einsum("ij,ik,kj->j", P, H, P) - g @ P
    x0 = P[:, np.argmin(vals)]
    res = optimize.minimize(lambda x: 0.5 * x @ H @ x - g @ x, x0, jac=lambda x: H @ x - g,
                            method="SLSQP", options={"ftol": 1e-15, "maxiter": 500},
                            constraints=[{"type": "ineq", "fun": lambda x: R * R - x @ x,
                                          "jac": lambda x: -2 * x}])
    return min(float(res.fun), float(vals.min())) if res.x @ res.x <= R * R * (1 + 1e-9) \
        else float(vals.min())


def test_criterion_6_properties(tmp_path):
    rng = np.random.default_rng(2024)
    checks = {}

    # rotation invariants on adversary-built and random fixing rotations
    base = make_instance("ECO-II", 42, 50, 20, L_f=2.0, L_A=1.0)
    oracle = run_against_adversary(base, "lalm")[2]
    U, V = oracle.U, oracle.V
    checks["rotation"] = max(np.abs(U.T @ U - np.eye(50)).max(), np.abs(V.T @ V - np.eye(42)).max(),
                             np.abs(U @ base.h - base.h).max(), np.abs(V @ base.b - base.b).max())

    # bitwise transcript reproducibility
    def transcript_bytes(path):
        run_against_adversary(base, "probe", seed=3)[2].transcript.to_jsonl(path)
        return path.read_bytes()
    checks["determinism"] = float(transcript_bytes(tmp_path / "a.jsonl")
                                  != transcript_bytes(tmp_path / "b.jsonl"))

    # weak duality on random point pairs inside the balls
    worst_gap = math.inf
    insts = [make_instance(kind, 14, 20, 6, L_f=2.0, L_A=1.0, mu=1.0) for kind in SPP_KINDS]
    for i in range(1000):
        inst = insts[i % 3]
        x = rng.standard_normal(inst.n)
        y = rng.standard_normal(inst.m)
        x *= inst.X_radius * rng.uniform() ** (1 / inst.n) / np.linalg.norm(x)
        y *= inst.Y_radius * rng.uniform() ** (1 / inst.m) / np.linalg.norm(y)
        ev = evaluate(inst, x, y)
        worst_gap = min(worst_gap, (ev.phi - ev.psi) / max(1.0, abs(ev.phi)))
    checks["weak duality"] = max(0.0, -worst_gap)

    # ball-constrained quadratic against a 2-D brute force
    worst_ball = 0.0
    for _ in range(25):
        Q = ortho_group.rvs(2, random_state=rng)
        H = Q @ np.diag(rng.uniform(0.0, 3.0, 2)) @ Q.T
        g, R = rng.normal(0, 3, 2), rng.uniform(0.2, 2.0)
        worst_ball = max(worst_ball,
                         abs(min_quadratic_over_ball(H, g, np.zeros(2), R)[1]
                             - brute_force_ball_2d(H, g, R)))
    checks["ball quadratic"] = worst_ball

    # envelopes never increase in t
    p = EnvelopeParams(2.0, 1.0, 1.0, 3.0, 4.0, 5.0, 6.0, None, 1.0)
    rises = 0
    for src in LOWER_SOURCES:
        vals = [lower_envelope(src, p, t, strict=False) for t in range(300)]
        rises += sum(b[key] > a[key] for a, b in pairwise(vals) for key in a)
    for src in UPPER_SOURCES:
        vals = [upper_envelope(src, p, t) for t in range(1, 300)]
        rises += sum(b[key] > a[key] for a, b in pairwise(vals) for key in a)
    checks["monotone envelopes"] = float(rises)

    # negative controls
    oracle.U = oracle.U @ ortho_group.rvs(50, random_state=rng)
    corrupted = replay_consistency(oracle)
    checks["corrupted U detected"] = float(corrupted.passed or corrupted.max_deviation <= 1e-3)
    inst = make_instance("ECO-I", 8, 10, 3, L_f=1.0, L_A=1.0)
    sol = closed_form(inst)
    embedded = {"x_star": sol.x_star, "y_star": sol.y_star, "opt_value": sol.opt_value}
    bad = replace(inst, b=inst.b + 1e-3 * rng.standard_normal(8))
    rows = verify_checks(bad, embedded)
    checks["perturbed b detected"] = float(all(v <= tol for _, v, tol in rows))
    clean = verify_checks(inst, embedded)
    checks["clean file passes"] = float(not all(v <= tol for _, v, tol in clean))

    tolerances = {"rotation": 1e-10, "ball quadratic": 1e-6}
    ok = all(v <= tolerances.get(name, 0.0) for name, v in checks.items())
    assert report(6, ok, ", ".join(f"{name} {v:.1e}" for name, v in checks.items()))
