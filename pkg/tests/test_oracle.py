import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import build_instance, chain_matching
from nomamec import model, oracle, patacra
from nomamec.model import DUMB_HELPER, ChannelRealization, Matching, TaskSpec
from nomamec.oracle import (GridSpec, grid_search_patacra, hessian_psd_sample,
                            max_replay_violation, perspective_pow2_hessian,
                            quad_form, replay_constraints)
from nomamec.patacra import LegExec, UELink, pow2m1


def local_only_score(cfg, task, n=0):
    cycles = task.data_bits * task.cycles_per_bit
    return task.weight_t * cycles / cfg.ue_freq[n] \
        + task.weight_e * cycles * cfg.eff_capacitance * cfg.ue_freq[n] ** 2


class TestGridSpec:
    def test_rejects_bad_resolutions(self):
        with pytest.raises(ValueError):
            GridSpec(eta_h_res=-1)
        with pytest.raises(ValueError):
            GridSpec(tau_res=0)
        with pytest.raises(ValueError):
            GridSpec(f_splits=1)
        with pytest.raises(ValueError):
            GridSpec(tau_floor_frac=1.5)

    def test_axis_construction(self):
        spec = GridSpec()
        assert spec.eta_axis(0).tolist() == [0.0]
        assert spec.eta_axis(4).tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
        tau = spec.tau_axis(0.9)
        assert len(tau) == spec.tau_res + 1
        assert tau[0] == pytest.approx(0.9 * spec.tau_floor_frac)
        assert tau[-1] == pytest.approx(0.9)
        ratios = tau[1:] / tau[:-1]
        assert np.allclose(ratios, ratios[0])  # log spacing


class TestGridSearch:
    def test_local_only_matches_closed_form(self):
        cfg, channels, tasks = build_instance(0, n_ues=1, n_helpers=1,
                                              n_servers=1, n_rbs=1)
        got = grid_search_patacra(Matching(((0, 0, 0),)), channels, tasks, cfg,
                                  GridSpec(0, 0, 4))
        assert got == pytest.approx(local_only_score(cfg, tasks[0]), rel=1e-12)

    def test_refining_never_increases(self):
        cfg, channels, tasks = build_instance(0, n_ues=1, n_helpers=1,
                                              n_servers=1, n_rbs=1)
        mt = Matching(((0, 0, 0),))
        coarse = grid_search_patacra(mt, channels, tasks, cfg, GridSpec(50, 50, 50))
        fine = grid_search_patacra(mt, channels, tasks, cfg, GridSpec(200, 200, 200))
        assert fine <= coarse + 1e-12

    def test_single_ue_close_to_solver(self):
        for seed in (2, 6, 11):
            cfg, channels, tasks = build_instance(seed, n_ues=1, n_helpers=1,
                                                  n_servers=1, n_rbs=1)
            mt = Matching(((0, 0, 0),))
            sol = patacra.solve_patacra(mt, channels, tasks, cfg)
            got = grid_search_patacra(mt, channels, tasks, cfg, GridSpec(100, 100, 100))
            assert abs(sol.phi - got) / got <= 0.05

    def test_two_ues_shared_server(self):
        cfg, channels, tasks = build_instance(1, n_servers=1, n_rbs=2,
                                              server_cap=(2,))
        mt = Matching(((0, 0, 0), (1, 0, 1)))
        sol = patacra.solve_patacra(mt, channels, tasks, cfg)
        got = grid_search_patacra(mt, channels, tasks, cfg, GridSpec(60, 60, 60))
        # finite candidate set bounds the optimum from above
        assert got >= sol.phi - 1e-9
        assert abs(sol.phi - got) / got <= 0.10

    def test_two_ues_distinct_servers(self):
        cfg, channels, tasks = build_instance(3)
        mt = chain_matching(cfg)
        sol = patacra.solve_patacra(mt, channels, tasks, cfg)
        got = grid_search_patacra(mt, channels, tasks, cfg, GridSpec(60, 60, 60))
        assert got >= sol.phi - 1e-9
        assert abs(sol.phi - got) / got <= 0.10

    def test_more_splits_never_hurt(self):
        cfg, channels, tasks = build_instance(1, n_servers=1, n_rbs=2,
                                              server_cap=(2,))
        mt = Matching(((0, 0, 0), (1, 0, 1)))
        two = grid_search_patacra(mt, channels, tasks, cfg,
                                  GridSpec(30, 30, 30, f_splits=2))
        many = grid_search_patacra(mt, channels, tasks, cfg,
                                   GridSpec(30, 30, 30, f_splits=21))
        assert many <= two + 1e-12

    def test_guards_large_instances(self):
        cfg, channels, tasks = build_instance(0, n_ues=3, n_helpers=3,
                                              n_servers=1, n_rbs=3, server_cap=(3,))
        with pytest.raises(ValueError):
            grid_search_patacra(chain_matching(cfg), channels, tasks, cfg)

    def test_zero_data_scores_zero(self):
        cfg, channels, _ = build_instance(0, n_ues=1, n_helpers=1, n_servers=1,
                                          n_rbs=1)
        tasks = [TaskSpec(0.0, 1e3, 0.9, 0.5, 0.5)]
        assert grid_search_patacra(Matching(((0, 0, 0),)), channels, tasks, cfg) == 0.0


class TestCurvature:
    def test_hessian_matches_finite_differences(self):
        def f(x, y):
            return y * 2.0 ** (x / y)

        h = 1e-5
        for x, y in ((0.4, 0.8), (-1.2, 1.5), (1.9, 0.6)):
            hess = perspective_pow2_hessian(x, y)
            fxx = (f(x + h, y) - 2 * f(x, y) + f(x - h, y)) / h ** 2
            fyy = (f(x, y + h) - 2 * f(x, y) + f(x, y - h)) / h ** 2
            fxy = (f(x + h, y + h) - f(x + h, y - h)
                   - f(x - h, y + h) + f(x - h, y - h)) / (4 * h ** 2)
            assert hess[0, 0] == pytest.approx(fxx, rel=1e-4)
            assert hess[1, 1] == pytest.approx(fyy, rel=1e-4, abs=1e-7)
            assert hess[0, 1] == pytest.approx(fxy, rel=1e-4)

    def test_sampled_forms_never_go_negative(self):
        assert hessian_psd_sample(2000, seed=7) >= -1e-9

    def test_null_direction_vanishes(self):
        for x, y, t in ((1.3, 0.7, 1.0), (-0.9, 1.1, 2.5), (1.7, 2.0, -0.3)):
            v = np.array([t * x / y, t])
            assert abs(quad_form(x, y, v)) <= 1e-12

    def test_blows_up_but_stays_nonnegative_as_y_shrinks(self):
        vals = [quad_form(1.0, y, np.array([1.0, 1.0]))
                for y in np.geomspace(1.0, 1e-2, 12)]
        assert all(v >= 0.0 for v in vals)
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            perspective_pow2_hessian(1.0, 0.0)
        with pytest.raises(ValueError):
            hessian_psd_sample(0)


class TestReplayStandard:
    def test_solver_outputs_pass(self):
        for seed in range(5):
            cfg, channels, tasks = build_instance(seed, weight_e=0.3)
            mt = chain_matching(cfg)
            sol = patacra.solve_patacra(mt, channels, tasks, cfg)
            report = replay_constraints(sol.alloc, mt, channels, tasks, cfg)
            assert set(report) == set(oracle.REPLAY_FAMILIES)
            assert max_replay_violation(report) <= 1e-6, report

    def test_power_overdraw_flagged_proportionally(self):
        cfg, channels, tasks = build_instance(0)
        mt = chain_matching(cfg)
        sol = patacra.solve_patacra(mt, channels, tasks, cfg)
        alloc = sol.alloc
        n = int(np.argmax(alloc.p_h + alloc.p_s))
        factor = 1.5 * cfg.pmax_w / (alloc.p_h[n] + alloc.p_s[n])
        alloc.p_h[n] *= factor
        alloc.p_s[n] *= factor
        report = replay_constraints(alloc, mt, channels, tasks, cfg)
        assert report["power"] == pytest.approx(0.5, rel=1e-9)

    def test_zero_allocation_on_zero_tasks_is_clean(self):
        cfg, channels, _ = build_instance(0)
        tasks = [TaskSpec(0.0, 1e3, 0.9, 0.5, 0.5) for _ in range(cfg.n_ues)]
        n = cfg.n_ues
        alloc = model.ContinuousAllocation(
            tau=np.zeros(n), eta_h=np.zeros(n), eta_s=np.zeros(n),
            f_s=np.zeros(n), beta=np.zeros(n), p_h=np.zeros(n), p_s=np.zeros(n),
            phi=0.0)
        report = replay_constraints(alloc, chain_matching(cfg), channels, tasks, cfg)
        assert max_replay_violation(report) == 0.0

    def test_flags_split_and_window_misuse(self):
        cfg, channels, tasks = build_instance(0)
        mt = chain_matching(cfg)
        sol = patacra.solve_patacra(mt, channels, tasks, cfg)
        alloc = sol.alloc
        alloc.eta_h[0] = 0.9
        alloc.eta_s[0] = 0.3
        report = replay_constraints(alloc, mt, channels, tasks, cfg)
        assert report["split"] >= 0.2 - 1e-9
        alloc.eta_h[0] = 0.2
        alloc.eta_s[0] = 0.2
        alloc.tau[0] = 0.0
        report = replay_constraints(alloc, mt, channels, tasks, cfg)
        assert report["rates"] == 1.0

    def test_flags_missed_deadline(self):
        cfg, channels, tasks = build_instance(0)
        mt = chain_matching(cfg)
        sol = patacra.solve_patacra(mt, channels, tasks, cfg)
        tight = [TaskSpec(t.data_bits, t.cycles_per_bit, 1e-4, t.weight_e, t.weight_t)
                 for t in tasks]
        report = replay_constraints(sol.alloc, mt, channels, tight, cfg)
        assert report["delay"] > 0.0

    def test_flags_duplicate_rb(self):
        cfg, channels, tasks = build_instance(0)
        mt = Matching(((0, 0, 0), (1, 1, 0)))
        sol = patacra.solve_patacra(chain_matching(cfg), channels, tasks, cfg)
        report = replay_constraints(sol.alloc, mt, channels, tasks, cfg)
        assert report["assignment"] == 1.0


class TestReplayServerPair:
    def test_two_server_split_passes(self):
        cfg, channels, tasks = build_instance(4, n_ues=1, n_helpers=0,
                                              n_servers=2, n_rbs=1,
                                              server_cap=(1, 1))
        g1 = float(channels.g_server[0, 0, 0])
        g2 = float(channels.g_server[0, 1, 0])
        o = 0 if g1 >= g2 else 1
        links = [UELink(o=o, a1=(1 - 2 * o) * (1.0 / g2 - 1.0 / g1),
                        a2=(1 - o) / g1 + o / g2,
                        exec1=LegExec("server", 0), exec2=LegExec("server", 1))]
        mt = Matching(((DUMB_HELPER, 1, 0),))
        sol = patacra.solve_patacra(mt, channels, tasks, cfg, links=links)
        assert sol.usable
        extras = {"server1": [0], "f1": sol.records[-1].point.f1}
        report = replay_constraints(sol.alloc, mt, channels, tasks, cfg,
                                    extras=extras)
        assert max_replay_violation(report) <= 1e-6, report

    def test_same_server_pair_flagged_when_avoidable(self):
        cfg, channels, tasks = build_instance(4, n_ues=1, n_helpers=0,
                                              n_servers=2, n_rbs=1,
                                              server_cap=(1, 1))
        n = 1
        alloc = model.ContinuousAllocation(
            tau=np.zeros(n), eta_h=np.zeros(n), eta_s=np.zeros(n),
            f_s=np.zeros(n), beta=np.zeros(n), p_h=np.zeros(n), p_s=np.zeros(n),
            phi=0.0)
        report = replay_constraints(alloc, Matching(((DUMB_HELPER, 1, 0),)),
                                    channels, tasks, cfg,
                                    extras={"server1": [1], "f1": [0.0]})
        assert report["assignment"] == 1.0


def two_leg_channels():
    return ChannelRealization(g_helper=np.full((1, 1, 1), 2.0),
                              g_server=np.full((1, 1, 1), 4.0))


def two_leg_alloc(cfg, mode, band_frac, e_h=0.3, e_s=0.3, t_h=0.1, t_s=0.1,
                  d_bits=1e5):
    g_h = 2.0 / band_frac
    g_s = 4.0 / band_frac
    band = cfg.bandwidth_hz * (band_frac if mode == "fdma" else 1.0)
    p_h = float(pow2m1(e_h * d_bits / (band * t_h)) / g_h)
    p_s = float(pow2m1(e_s * d_bits / (band * t_s)) / g_s)
    return SimpleNamespace(
        mode=mode, band_frac=band_frac, tau_h=np.array([t_h]),
        tau_s=np.array([t_s]), eta_h=np.array([e_h]), eta_s=np.array([e_s]),
        f_s=np.array([cfg.server_fmax[0]]), beta=np.array([0.5]),
        p_h=np.array([p_h]), p_s=np.array([p_s]), rb_h=np.array([0]), phi=0.0)


class TestReplayTwoLeg:
    def test_sequential_legs_pass_when_built_consistently(self):
        cfg, _, tasks = build_instance(0, n_ues=1, n_helpers=1, n_servers=1,
                                       n_rbs=1, d_bits=1e5)
        channels = two_leg_channels()
        alloc = two_leg_alloc(cfg, "tdma", 1.0)
        report = replay_constraints(alloc, Matching(((0, 0, 0),)), channels,
                                    tasks, cfg)
        assert max_replay_violation(report) <= 1e-9, report

    def test_split_band_legs_pass(self):
        cfg, _, tasks = build_instance(0, n_ues=1, n_helpers=1, n_servers=1,
                                       n_rbs=1, d_bits=1e5)
        channels = two_leg_channels()
        alloc = two_leg_alloc(cfg, "fdma", 0.5)
        report = replay_constraints(alloc, Matching(((0, 0, 0),)), channels,
                                    tasks, cfg)
        assert max_replay_violation(report) <= 1e-9, report

    def test_sequential_legs_share_one_power_budget(self):
        cfg, _, tasks = build_instance(0, n_ues=1, n_helpers=1, n_servers=1,
                                       n_rbs=1, d_bits=1e5)
        channels = two_leg_channels()
        alloc = two_leg_alloc(cfg, "tdma", 1.0)
        # each slice alone sits under the cap, their sum does not
        alloc.p_h[0] = 1.2 * cfg.pmax_w - alloc.p_s[0]
        report = replay_constraints(alloc, Matching(((0, 0, 0),)), channels,
                                    tasks, cfg)
        assert report["power"] == pytest.approx(0.2, rel=1e-9)
        # over-delivery on the helper leg is not a shortfall
        assert report["rates"] <= 1e-9

    def test_full_band_parallel_legs_need_second_rb(self):
        cfg, _, tasks = build_instance(0, n_ues=1, n_helpers=1, n_servers=1,
                                       n_rbs=1, d_bits=1e5)
        channels = two_leg_channels()
        alloc = two_leg_alloc(cfg, "fdma", 1.0)  # rb_h collides with the server RB
        report = replay_constraints(alloc, Matching(((0, 0, 0),)), channels,
                                    tasks, cfg)
        assert report["assignment"] == 1.0

    def test_undersized_window_flags_shortfall(self):
        cfg, _, tasks = build_instance(0, n_ues=1, n_helpers=1, n_servers=1,
                                       n_rbs=1, d_bits=1e5)
        channels = two_leg_channels()
        alloc = two_leg_alloc(cfg, "tdma", 1.0)
        alloc.tau_h[0] *= 0.5  # same power, half the airtime
        report = replay_constraints(alloc, Matching(((0, 0, 0),)), channels,
                                    tasks, cfg)
        assert report["rates"] > 0.1
