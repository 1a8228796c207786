import json
import math

import numpy as np
import pytest

from nomamec import conic
from nomamec.conic import (ConicProgram, LinearExpr, SolveStatus, SolverSettings,
                           encode_lmi2x2, encode_perspective_pow2,
                           encode_pow2_epigraph, var)


def solve_min(build):
    prog = ConicProgram()
    obj = build(prog)
    prog.minimize(obj)
    res = conic.solve(prog)
    assert res.status is SolveStatus.OPTIMAL, res.raw_status
    return res


class TestLinearExpr:
    def test_arithmetic(self):
        e = 2.0 * var(0) + var(1) - 3.0
        assert e.terms == {0: 2.0, 1: 1.0} and e.const == -3.0
        assert (1.0 - e).value([1.0, 2.0]) == pytest.approx(1.0 - (2 + 2 - 3))
        assert (-e).terms[0] == -2.0

    def test_value(self):
        e = LinearExpr({0: 0.5}, 1.0)
        assert e.value(np.array([4.0])) == 3.0


class TestLinearRows:
    def test_lp_bound(self):
        def build(p):
            x = p.add_var("x")
            p.add_ineq(3.0 - var(x))  # x >= 3
            return var(x)
        assert solve_min(build).objective == pytest.approx(3.0, abs=1e-7)

    def test_equality(self):
        def build(p):
            x, y = p.add_vars(2, "v")
            p.add_eq(var(x) + var(y) - 4.0)
            p.add_ineq(var(x) - var(y))  # x <= y
            return var(y)
        assert solve_min(build).objective == pytest.approx(2.0, abs=1e-7)

    def test_infeasible_detected(self):
        prog = ConicProgram()
        x = prog.add_var()
        prog.add_ineq(1.0 - var(x))
        prog.add_ineq(var(x))  # x >= 1 and x <= 0
        prog.minimize(var(x))
        assert conic.solve(prog).status is SolveStatus.INFEASIBLE

    def test_unbounded_is_a_failure(self):
        prog = ConicProgram()
        x = prog.add_var()
        prog.minimize(var(x))
        assert conic.solve(prog).status is SolveStatus.NUMERICAL_FAILURE


class TestPow2Epigraph:
    @pytest.mark.parametrize("z,expect", [(3.0, 8.0), (0.0, 1.0), (-1.0, 0.5)])
    def test_fixed_exponent(self, z, expect):
        def build(p):
            w = p.add_var("w")
            encode_pow2_epigraph(p, LinearExpr.constant(z), w)
            return var(w)
        assert solve_min(build).objective == pytest.approx(expect, rel=1e-6)


class TestPerspective:
    def test_unit_point(self):
        # t >= y 2^(x/y) at x = y = 1 gives t = 2
        def build(p):
            t = p.add_var("t")
            encode_perspective_pow2(p, LinearExpr.constant(1.0),
                                    LinearExpr.constant(1.0), t)
            return var(t)
        assert solve_min(build).objective == pytest.approx(2.0, rel=1e-6)

    def test_tight_at_random_points(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            x = float(rng.uniform(0.05, 4.0))
            y = float(rng.uniform(0.05, 2.0))
            def build(p, x=x, y=y):
                t = p.add_var("t")
                encode_perspective_pow2(p, LinearExpr.constant(x),
                                        LinearExpr.constant(y), t)
                return var(t)
            want = y * 2.0 ** (x / y)
            assert solve_min(build).objective == pytest.approx(want, rel=1e-6)


class TestLmi2x2:
    def test_max_offdiag(self):
        # fixed diagonal (4, 1): |u| <= 2
        def build(p):
            u = p.add_var("u")
            encode_lmi2x2(p, LinearExpr.constant(4.0), LinearExpr.constant(1.0), var(u))
            return -1.0 * var(u)
        assert solve_min(build).objective == pytest.approx(-2.0, rel=1e-6)

    def test_off_diag_beyond_bound_infeasible(self):
        prog = ConicProgram()
        u = prog.add_var("u")
        encode_lmi2x2(prog, LinearExpr.constant(4.0), LinearExpr.constant(1.0), var(u))
        prog.add_eq(var(u) - 2.1)
        prog.minimize(var(u))
        assert conic.solve(prog).status is SolveStatus.INFEASIBLE

    def test_zero_diag_forces_zero_offdiag(self):
        prog = ConicProgram()
        u = prog.add_var("u")
        encode_lmi2x2(prog, LinearExpr.constant(0.0), LinearExpr.constant(1.0), var(u))
        prog.add_eq(var(u) - 0.5)
        prog.minimize(LinearExpr())
        assert conic.solve(prog).status is SolveStatus.INFEASIBLE

    def test_matches_eigenvalue_test_on_random_matrices(self):
        rng = np.random.default_rng(7)
        zs, taus, us = (rng.uniform(-2, 2, 10_000) for _ in range(3))
        soc_ok = np.hypot(2 * us, zs - taus) <= zs + taus + 1e-9
        eigs = np.array([np.linalg.eigvalsh([[z, u], [u, t]])[0]
                         for z, t, u in zip(zs, taus, us)])
        psd_ok = eigs >= -1e-9
        # the encodings may only disagree within tolerance of the boundary
        border = np.abs(eigs) <= 1e-8
        assert np.all((soc_ok == psd_ok) | border)

    def test_minimize_diag_with_unit_offdiag(self):
        # min t s.t. z = tau = t, zt >= 1: optimum t = 1, checked by grid
        def build(p):
            t = p.add_var("t")
            encode_lmi2x2(p, var(t), var(t), LinearExpr.constant(1.0))
            return var(t)
        got = solve_min(build).objective
        grid = np.linspace(0.0, 3.0, 20_001)
        feasible = grid[np.hypot(2.0, 0.0 * grid) <= 2 * grid]
        assert got == pytest.approx(feasible.min(), abs=1e-4)
        assert got == pytest.approx(1.0, rel=1e-6)


class TestSolveBridge:
    def mixed_program(self):
        prog = ConicProgram()
        t1, t2, s = prog.add_vars(3, "v")
        encode_pow2_epigraph(prog, 1.0 * var(s), t1)
        encode_perspective_pow2(prog, LinearExpr.constant(2.0),
                                LinearExpr.constant(2.0), t2)
        prog.add_ineq(1.0 - var(s))
        prog.add_soc([var(t1) + var(t2), var(s) * 1.0])
        prog.minimize(var(t1) + var(t2))
        return prog

    def test_round_trip_residuals(self):
        prog = self.mixed_program()
        res = conic.solve(prog)
        assert res.status is SolveStatus.OPTIMAL
        worst = conic.residuals(prog, res.x)
        assert max(worst.values()) <= 1e-7
        # t1 >= 2^1, t2 >= 2 * 2^1
        assert res.objective == pytest.approx(6.0, rel=1e-6)

    def test_deterministic(self):
        a = conic.solve(self.mixed_program())
        b = conic.solve(self.mixed_program())
        assert np.array_equal(a.x, b.x)

    def test_stats_and_json(self):
        prog = self.mixed_program()
        st = prog.stats()
        # one plain bound plus the two exp-cone floors
        assert st == {"vars": 3, "eqs": 0, "ineqs": 3, "socs": 1, "exps": 2}
        dumped = json.loads(prog.to_json())
        assert dumped["vars"] == ["v0", "v1", "v2"]
        assert len(dumped["exps"]) == 2

    def test_tight_tolerances_respected(self):
        res = conic.solve(self.mixed_program(), SolverSettings(feas_tol=1e-10))
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(6.0, rel=1e-8)
