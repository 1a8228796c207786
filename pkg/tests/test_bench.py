"""Experiment runner: trial generation, rows, CSV io, and summaries."""

import math

import numpy as np
import pytest

from nomamec import bench
from nomamec.bench import ExperimentSpec, ResultRow


def tiny_spec(**over):
    base = dict(figure="fig8", seeds=(0,), schemes=("proposed_noma",),
                sweep_axis="d_bits", sweep_values=(1e5,))
    base.update(over)
    return ExperimentSpec(**base)


def hand_row(**over):
    base = dict(seed=0, figure="fig8", sweep=1e5, scheme="proposed_noma",
                status="ok", n_ues=2, n_helpers=2, n_servers=2, n_rbs=2,
                d_bits=1e5, weight_e="0.5", medt=0.01, min_edt=0.008,
                max_energy=0.002, max_delay=0.02, iterations=4,
                accepted_ops=2, wall_ms=25.0)
    base.update(over)
    return ResultRow(**base)


class TestSpec:
    def test_rejects_unknown_axis_and_scheme(self):
        with pytest.raises(ValueError):
            tiny_spec(sweep_axis="bandwidth")
        with pytest.raises(ValueError):
            tiny_spec(schemes=("proposed_noma", "genie"))
        with pytest.raises(ValueError):
            tiny_spec(sweep_values=())

    def test_empty_seed_list_gives_header_only_csv(self, tmp_path):
        rows = bench.run_experiment(tiny_spec(seeds=()))
        assert rows == []
        path = tmp_path / "empty.csv"
        bench.write_rows(rows, path)
        assert path.read_text().strip() == ",".join(bench.CSV_COLUMNS)

    def test_json_round_trip(self):
        spec = tiny_spec(weight_e=(0.6, 0.3), seeds=(3, 7))
        again = bench.spec_from_json(bench.spec_to_json(spec))
        assert again == spec

    def test_json_rejects_unknown_fields(self):
        with pytest.raises(ValueError):
            bench.spec_from_json('{"figure": "fig8", "n_rounds": 5}')


class TestTrialGeneration:
    def test_same_seed_reproduces_instance(self):
        spec = tiny_spec()
        cfg_a, ch_a, tasks_a = bench.build_trial(spec, 1e5, 11)
        cfg_b, ch_b, tasks_b = bench.build_trial(spec, 1e5, 11)
        assert cfg_a.ue_freq == cfg_b.ue_freq
        assert cfg_a.helper_freq == cfg_b.helper_freq
        assert np.array_equal(ch_a.g_helper, ch_b.g_helper)
        assert np.array_equal(ch_a.g_server, ch_b.g_server)
        assert tasks_a[0].data_bits == tasks_b[0].data_bits

    def test_clock_draws_sit_in_sampling_ranges(self):
        spec = tiny_spec()
        for seed in range(6):
            cfg, _, _ = bench.build_trial(spec, 1e5, seed)
            assert all(2e9 <= f <= 8e9 for f in cfg.ue_freq)
            assert all(15e9 <= f <= 20e9 for f in cfg.helper_freq)
            assert all(20e9 <= f <= 25e9 for f in cfg.server_fmax)
            assert all(0.8 <= e <= 1.0 for e in cfg.helper_emax_j)

    def test_helper_sweep_keeps_other_clocks_fixed(self):
        spec = tiny_spec(sweep_axis="n_helpers", sweep_values=(2, 4), n_rbs=4)
        cfg_2, _, _ = bench.build_trial(spec, 2, 5)
        cfg_4, _, _ = bench.build_trial(spec, 4, 5)
        assert cfg_4.n_helpers == 4
        assert cfg_2.ue_freq == cfg_4.ue_freq
        assert cfg_2.server_fmax == cfg_4.server_fmax
        assert cfg_2.helper_freq == cfg_4.helper_freq[:2]

    def test_axis_values_land_in_config_and_tasks(self):
        d_cfg = bench.build_trial(tiny_spec(), 3e5, 0)
        assert d_cfg[2][0].data_bits == 3e5
        w_spec = tiny_spec(sweep_axis="weight_e", sweep_values=(0.7,))
        tasks = bench.build_trial(w_spec, 0.7, 0)[2]
        assert tasks[0].weight_e == 0.7 and tasks[0].weight_t == pytest.approx(0.3)
        f_spec = tiny_spec(sweep_axis="helper_freq", sweep_values=(17e9,))
        cfg = bench.build_trial(f_spec, 17e9, 0)[0]
        assert cfg.helper_freq == (17e9, 17e9)

    def test_per_ue_weights_apply(self):
        spec = tiny_spec(weight_e=(0.6, 0.3))
        tasks = bench.build_trial(spec, 1e5, 0)[2]
        assert [t.weight_e for t in tasks] == [0.6, 0.3]
        with pytest.raises(ValueError):
            bench.build_trial(tiny_spec(weight_e=(0.6,)), 1e5, 0)


class TestRunExperiment:
    def test_row_fields_are_populated(self):
        rows = bench.run_experiment(tiny_spec(seeds=(0, 1)))
        assert len(rows) == 2
        for row in rows:
            assert row.figure == "fig8" and row.scheme == "proposed_noma"
            assert row.status == "ok" and row.sweep == 1e5
            assert (row.n_ues, row.n_helpers, row.n_servers, row.n_rbs) == (2, 2, 2, 2)
            assert 0 < row.min_edt <= row.medt < 1.0
            assert row.max_energy > 0 and row.max_delay > 0
            assert row.iterations >= 1 and row.accepted_ops >= 0
            assert row.wall_ms > 0

    def test_timing_flag_zeroes_wall_clock(self):
        rows = bench.run_experiment(tiny_spec(), timing=False)
        assert all(row.wall_ms == 0.0 for row in rows)

    def test_rows_are_deterministic_without_timing(self, tmp_path):
        spec = tiny_spec(seeds=(0, 1), schemes=("proposed_noma", "fdma_no_helpers"))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        bench.write_rows(bench.run_experiment(spec, timing=False), a)
        bench.write_rows(bench.run_experiment(spec, timing=False), b)
        assert a.read_bytes() == b.read_bytes()

    def test_worker_pool_matches_serial_order(self, tmp_path):
        spec = tiny_spec(seeds=(0, 1), sweep_values=(1e5, 2e5))
        serial = bench.run_experiment(spec, timing=False)
        pooled = bench.run_experiment(spec, workers=2, timing=False)
        assert [(r.seed, r.sweep, r.scheme) for r in serial] \
            == [(r.seed, r.sweep, r.scheme) for r in pooled]
        assert all(a.medt == b.medt for a, b in zip(serial, pooled))

    def test_broken_instance_becomes_error_rows(self):
        spec = tiny_spec(d_bits=-1.0, sweep_axis="none", sweep_values=(None,),
                         schemes=("proposed_noma", "tdma_with_helpers"))
        rows = bench.run_experiment(spec)
        assert [r.status for r in rows] == ["error:ValueError"] * 2
        assert [r.scheme for r in rows] == ["proposed_noma", "tdma_with_helpers"]
        assert all(math.isinf(r.medt) for r in rows)

    def test_one_crashing_scheme_spares_the_rest(self):
        orig = bench.solve_scheme

        def boom(scheme, config, channels, tasks, **kw):
            if scheme is bench.SCHEME_IDS["fdma_no_helpers"]:
                raise RuntimeError("forced")
            return orig(scheme, config, channels, tasks, **kw)

        bench.solve_scheme = boom
        try:
            rows = bench.run_experiment(
                tiny_spec(schemes=("fdma_no_helpers", "proposed_noma")))
        finally:
            bench.solve_scheme = orig
        assert rows[0].status == "error:RuntimeError"
        assert rows[1].status == "ok" and rows[1].medt < math.inf


class TestCsv:
    def test_round_trip_preserves_every_field(self, tmp_path):
        rows = bench.run_experiment(tiny_spec(), timing=False)
        path = tmp_path / "rows.csv"
        bench.write_rows(rows, path)
        back = bench.read_rows(path)
        for a, b in zip(rows, back):
            for col in bench.CSV_COLUMNS:
                va, vb = getattr(a, col), getattr(b, col)
                if isinstance(va, float):
                    assert vb == pytest.approx(va, rel=1e-8)
                else:
                    assert va == vb

    def test_floats_use_nine_significant_digits(self, tmp_path):
        row = hand_row(medt=0.123456789123456)
        path = tmp_path / "one.csv"
        bench.write_rows([row], path)
        assert "0.123456789" in path.read_text()
        assert "0.1234567891" not in path.read_text()

    def test_read_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("seed,scheme\n0,proposed_noma\n")
        with pytest.raises(ValueError):
            bench.read_rows(path)


class TestSummarize:
    def test_single_row_stats(self):
        table = bench.summarize([hand_row()])
        assert len(table) == 1
        rec = table[0]
        assert rec["mean_medt"] == 0.01 and rec["std_medt"] == 0.0
        assert rec["count"] == 1 and rec["mean_gap"] == ""

    def test_mixed_figures_rejected(self):
        with pytest.raises(ValueError):
            bench.summarize([hand_row(), hand_row(figure="fig7")])

    def test_failed_rows_do_not_pollute_stats(self):
        rows = [hand_row(seed=0), hand_row(seed=1, status="error:ValueError",
                                           medt=math.inf)]
        table = bench.summarize(rows)
        assert table[0]["count"] == 1 and table[0]["mean_medt"] == 0.01

    def test_gap_matches_reference_definition(self):
        rows = []
        for seed, (u_i, u_a) in enumerate([(0.010, 0.012), (0.020, 0.021)]):
            rows.append(hand_row(figure="fig3", seed=seed, scheme="ipca", medt=u_i))
            rows.append(hand_row(figure="fig3", seed=seed, scheme="ao", medt=u_a))
        table = bench.summarize(rows)
        gaps = {rec["scheme"]: rec["mean_gap"] for rec in table}
        assert gaps["ipca"] == ""
        assert gaps["ao"] == pytest.approx((0.2 + 0.05) / 2)

    def test_equal_schemes_gap_zero(self):
        rows = [hand_row(figure="fig4", scheme="es_ipca"),
                hand_row(figure="fig4", scheme="fs_urhsm")]
        gaps = {rec["scheme"]: rec["mean_gap"] for rec in bench.summarize(rows)}
        assert gaps["fs_urhsm"] == 0.0

    def test_summary_csv_emission(self, tmp_path):
        table = bench.summarize([hand_row()])
        path = tmp_path / "summary.csv"
        bench.write_summary(table, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ",".join(bench.SUMMARY_COLUMNS)
        assert len(lines) == 2


class TestPseudoSchemes:
    def test_trace_rows_walk_the_solver_iterations(self):
        spec = ExperimentSpec(figure="fig2", seeds=(0,), schemes=("ipca",),
                              trace=True)
        rows = bench.run_experiment(spec)
        assert len(rows) >= 2
        assert [r.sweep for r in rows] == list(range(1, len(rows) + 1))
        assert [r.iterations for r in rows] == [r.sweep for r in rows]
        phis = [r.medt for r in rows]
        assert all(b <= a + 1e-9 for a, b in zip(phis, phis[1:]))

    def test_decomposition_gap_is_nonnegative(self):
        spec = ExperimentSpec(figure="fig3", seeds=(0, 1), schemes=("ipca", "ao"),
                              sweep_axis="helper_freq", sweep_values=(15e9,))
        table = bench.summarize(bench.run_experiment(spec))
        gap = next(rec["mean_gap"] for rec in table if rec["scheme"] == "ao")
        assert gap >= -1e-9

    def test_local_search_tracks_exhaustive_reference(self):
        spec = ExperimentSpec(figure="fig4", n_servers=1, weight_e=(0.6, 0.3),
                              seeds=(0,), schemes=("fs_urhsm", "es_ipca"),
                              sweep_axis="d_bits", sweep_values=(2e5,))
        rows = {r.scheme: r for r in bench.run_experiment(spec)}
        assert rows["fs_urhsm"].weight_e == "0.6|0.3"
        assert rows["es_ipca"].medt <= rows["fs_urhsm"].medt + 1e-9
        assert rows["es_ipca"].accepted_ops == 4


class TestPresets:
    def test_every_preset_builds(self):
        for name in bench.PRESETS:
            specs = bench.preset_specs(name)
            assert specs and all(s.figure == name for s in specs)
            assert all(len(s.seeds) == 20 for s in specs)

    def test_seed_override_narrows_uniformly(self):
        for spec in bench.preset_specs("fig7", seeds=(0, 1, 2)):
            assert spec.seeds == (0, 1, 2)

    def test_unknown_preset_rejected(self):
        with pytest.raises(ValueError):
            bench.preset_specs("fig9")

    def test_caption_parameters(self):
        fig4 = bench.preset_specs("fig4")
        assert [(s.n_helpers, s.n_rbs) for s in fig4] == [(2, 2), (5, 3)]
        assert all(s.n_servers == 1 and s.weight_e == (0.6, 0.3) for s in fig4)
        fig6 = bench.preset_specs("fig6")[0]
        assert (fig6.n_ues, fig6.n_helpers, fig6.n_servers, fig6.n_rbs) == (4, 4, 4, 4)
        assert fig6.d_bits == 1e6
        fig7 = bench.preset_specs("fig7")[0]
        assert fig7.sweep_axis == "n_helpers" and max(fig7.sweep_values) == 10
        assert fig7.d_bits == 5e5
        fig8 = bench.preset_specs("fig8")[0]
        assert fig8.sweep_axis == "d_bits"
        assert set(bench.COMPARED_SCHEMES) <= set(fig8.schemes)

    def test_fig2_combos_trace_the_solver(self):
        specs = bench.preset_specs("fig2")
        combos = {(s.d_bits, s.weight_e) for s in specs}
        assert combos == {(1e5, 0.3), (1e5, 0.6), (2e5, 0.3), (2e5, 0.6)}
        assert all(s.trace and s.schemes == ("ipca",) for s in specs)
