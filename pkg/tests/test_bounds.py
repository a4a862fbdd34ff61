import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddlebounds.bounds import (
    LOWER_SOURCES,
    BoundError,
    EnvelopeParams,
    envelope_params,
    krylov_envelope,
    lbd_iterations_scvx,
    lower_envelope,
    make_envelope,
    norm_1_2,
    ubd_iterations_scvx,
    upper_envelope,
    verdict,
)
from saddlebounds.instances import closed_form, make_instance
from saddlebounds.solvers import Trajectory, lalm_auto_parameters, metrics, run_lalm, run_smoothing


class TestLowerEnvelope:
    def test_theorem_one_small(self):
        inst = make_instance("ECO-I", 6, 8, 2, L_f=1.0, L_A=2.0)
        env = lower_envelope("span-eco-i", envelope_params(inst), 2)
        # 90/96 + sqrt(6)*2*sqrt(240)/96, evaluated symbolically
        assert env["obj"] == pytest.approx(1.7280694150420948, rel=1e-14)
        assert env["feas"] == pytest.approx(1.1180339887498949, rel=1e-14)

    def test_strongly_convex_small(self):
        inst = make_instance("ECO-SC", 4, 5, 1, L_A=2.0, mu=1.0)
        env = lower_envelope("span-eco-sc", envelope_params(inst), 1)
        assert env["dist2"] == pytest.approx(65 / 256, rel=1e-14)

    def test_general_spp_at_zero(self):
        p = EnvelopeParams(L_f=1.0, L_A=0.0, R_X=1.0, R_Y=1.0)
        assert lower_envelope("general-spp-ii", p, 0)["gap"] == pytest.approx(1 / (16 * 81))

    def test_window_enforced(self):
        p = EnvelopeParams(L_f=1.0, L_A=1.0, x_norm=1.0, y_norm=1.0, m=20)
        lower_envelope("span-eco-i", p, 9)
        with pytest.raises(BoundError, match="m/2"):
            lower_envelope("span-eco-i", p, 10)
        lower_envelope("general-eco-i", p, 2)
        with pytest.raises(BoundError, match="m/4 - 2"):
            lower_envelope("general-eco-i", p, 3)
        assert lower_envelope("general-eco-i", p, 3, strict=False)["feas"] > 0

    def test_unknown_source(self):
        with pytest.raises(BoundError):
            lower_envelope("nope", EnvelopeParams(1.0, 1.0), 1)

    @given(st.sampled_from(sorted(LOWER_SOURCES)), st.integers(0, 200),
           st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10))
    def test_positive_and_decreasing(self, source, t, L, mu, scale):
        p = EnvelopeParams(L, L / 2, mu, scale, 2 * scale, 3 * scale, scale, None, L)
        now = lower_envelope(source, p, t)
        later = lower_envelope(source, p, t + 1)
        for metric in now:
            assert now[metric] > 0
            assert later[metric] < now[metric]


class TestUpperEnvelope:
    def test_lalm_simplifies_for_large_dual(self):
        p = EnvelopeParams(L_f=2.0, L_A=3.0, x_norm=5.0, y_norm=1.5)
        t = 7
        expected = (2.0 * 25 / 2 + 2 * 3.0 * 5.0 * 1.5) / t
        assert upper_envelope("lalm", p, t)["obj"] == pytest.approx(expected)

    def test_smoothing_at_one(self):
        p = EnvelopeParams(L_f=2.0, L_A=3.0, R_X=1.5, R_Y=0.5, A_12=2.5)
        expected = 4 * 2.0 * 9 / 4 + 4 * 2.5 * 3 * 1 / 2
        assert upper_envelope("smoothing", p, 1)["gap"] == pytest.approx(expected)

    def test_al_admm_rejects_zero(self):
        p = EnvelopeParams(L_f=1.0, L_A=1.0, R_X=1.0, R_Y=1.0)
        with pytest.raises(BoundError):
            upper_envelope("al-admm", p, 0)
        assert upper_envelope("al-admm", p, 1)["obj"] == pytest.approx(2 * 4 / 2 + 2 * 4 / 2)

    @given(st.sampled_from(["lalm", "al-admm", "smoothing"]), st.integers(1, 500))
    def test_decreasing(self, source, t):
        p = EnvelopeParams(2.0, 1.0, 0.0, 3.0, 4.0, 5.0, 6.0, None, 1.0)
        now, later = upper_envelope(source, p, t), upper_envelope(source, p, t + 1)
        assert all(0 < later[key] < now[key] for key in now)

    def test_ratio_on_smoothing_grid(self):
        # upper envelope at the budget versus the lower envelope at the same count
        inst = make_instance("SPP-II", 14, 20, 6, L_f=1.0, L_A=1.0)
        p = envelope_params(inst)
        for T in (10, 50, 200):
            ratio = (upper_envelope("smoothing", p, T)["gap"]
                     / lower_envelope("general-spp-ii", p, T, strict=False)["gap"])
            assert ratio <= 300


class TestNorm12:
    def test_identity(self):
        assert norm_1_2(np.eye(4)) == 1.0

    def test_instance_matrix(self):
        inst = make_instance("ECO-I", 6, 8, 2, L_f=1.0, L_A=3.0)
        assert norm_1_2(inst.A) == pytest.approx(3.0)

    def test_rank_one(self):
        u, v = np.array([3.0, 4.0]), np.array([0.5, -2.0, 1.0])
        assert norm_1_2(np.outer(u, v)) == pytest.approx(5.0 * 2.0)


class TestIterationCounts:
    def test_lower_count(self):
        # ceil(sqrt(5)*2*sqrt(13)/(32*sqrt(1e-3)) - 2.5)
        assert lbd_iterations_scvx(2.0, math.sqrt(13), 1.0, 1e-3) == 14

    def test_upper_count_constant(self):
        base = ubd_iterations_scvx(1.0, 1.0, 2.0, 3.0, 1e-2)
        assert base == pytest.approx(2 * (1 + 12 / 0.1) * (1 + math.log(100)))
        assert ubd_iterations_scvx(1.0, 1.0, 2.0, 3.0, 1e-2, const=2.0) > base


class TestVerdict:
    def test_empty_trajectory(self):
        env = make_envelope("lalm", EnvelopeParams(1.0, 1.0, x_norm=1.0, y_norm=1.0))
        assert verdict(Trajectory("none", {}), upper=env).rows == []

    def test_lalm_per_t_matching_instance(self):
        for t in range(1, 8):
            inst = make_instance("ECO-I", 2 * t + 4, 2 * t + 6, t, L_f=1.0, L_A=1.0)
            sol = closed_form(inst)
            eta, beta = lalm_auto_parameters(1.0, 1.0, math.sqrt(sol.x_norm_sq),
                                             math.sqrt(sol.y_norm_sq))
            traj = metrics(run_lalm(inst, eta, t, beta=beta), inst)
            env = make_envelope("span-eco-i", envelope_params(inst)).restricted(
                lambda s, t=t: s == t)
            report = verdict(traj, lower=env)
            assert len(report.rows) == 2 and report.passed
            assert traj.final.lower_env == pytest.approx(env.at(t)["obj"])

    def test_smoothing_upper_assertion(self):
        inst = make_instance("SPP-II", 14, 20, 6, L_f=1.0, L_A=1.0)
        traj = metrics(run_smoothing(inst, 20), inst)
        upper = make_envelope("smoothing", envelope_params(inst)).restricted(lambda t: t == 20)
        report = verdict(traj, upper=upper)
        assert report.passed and [r.t for r in report.rows] == [20]
        assert report.rows[0].slack > 0

    def test_general_lower_rows_informational_off_adversary(self):
        inst = make_instance("SPP-II", 14, 20, 6, L_f=1.0, L_A=1.0)
        traj = metrics(run_smoothing(inst, 5), inst)
        env = make_envelope("general-spp-ii", envelope_params(inst))
        report = verdict(traj, lower=env, linear_span=False)
        assert report.rows and not any(r.asserted for r in report.rows)
        assert report.passed

    def test_violation_reported(self, tmp_path):
        traj = Trajectory("fake", {})
        traj.record(1, np.zeros(2), np.zeros(2), 2)
        traj.points[0].obj_err = 0.5
        env = make_envelope("lalm", EnvelopeParams(1.0, 1.0, x_norm=0.1, y_norm=0.1))
        report = verdict(traj, upper=env)
        assert not report.passed and len(report.violations()) == 1
        report.to_csv(tmp_path / "v.csv")
        lines = (tmp_path / "v.csv").read_text().splitlines()
        assert lines[0] == "source,t,metric,measured,bound,direction,pass"
        assert lines[1].endswith(",<=,false")

    def test_bad_context(self):
        with pytest.raises(BoundError):
            verdict(Trajectory("x", {}), context="lab")


class TestKrylovEnvelope:
    def test_values_follow_order(self):
        inst = make_instance("ECO-SC", 10, 12, 4, L_A=1.0, mu=1.0)
        env = krylov_envelope(inst)
        assert env.at(4)["dist2"] == 30.0
        assert env.window(4) and not env.window(5)
        assert krylov_envelope(inst, lag=0).window(3) and not krylov_envelope(inst, 0).window(4)

    def test_spp_sc_gap_from_distance(self):
        inst = make_instance("SPP-SC", 10, 12, 4, L_A=1.0, mu=2.0)
        vals = krylov_envelope(inst).at(2)
        assert vals["gap"] == pytest.approx(vals["dist2"])
