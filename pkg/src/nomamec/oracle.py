"""Independent validators for the continuous solver and the schemes.

Three tools, all deliberately low-tech: a brute-force grid search over the
raw physics (an upper bound on the optimum that tightens as the grid is
refined), a sampled curvature check for the perspective power term, and a
constraint replay that re-evaluates every original constraint with plain
arithmetic.  The replay shares no code with the conic encodings, so a bug
there cannot hide here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DUMB_HELPER, ScenarioConfig
from .patacra import links_from_matching, recover_powers

LN2 = math.log(2.0)
_REL_EPS = 1e-12  # slack when masking grid candidates, not a result tolerance


# ---------------------------------------------------------------------------
# grid-search oracle


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the brute-force search, in subdivisions per axis.

    Each axis gets ``res + 1`` samples, so refining a resolution to any
    multiple keeps every previous candidate and the best value can only
    improve.  ``eta_*_res == 0`` collapses an axis to {0}.  The window
    axis spans ``(tau_floor_frac * T^max, T^max]`` with logarithmic
    spacing, dense where small windows force high power.  Server cycles
    are not gridded: one UE takes the full budget, two UEs sharing a
    server search ``f_splits`` proportional splits.
    """

    eta_h_res: int = 50
    eta_s_res: int = 50
    tau_res: int = 50
    f_splits: int = 21
    tau_floor_frac: float = 1e-4

    def __post_init__(self):
        if self.eta_h_res < 0 or self.eta_s_res < 0:
            raise ValueError("eta resolutions must be nonnegative")
        if self.tau_res < 1:
            raise ValueError("tau resolution must be at least 1")
        if self.f_splits < 2:
            raise ValueError("need at least 2 frequency splits")
        if not 0.0 < self.tau_floor_frac < 1.0:
            raise ValueError("tau_floor_frac must sit in (0, 1)")

    def eta_axis(self, res):
        return np.linspace(0.0, 1.0, res + 1)

    def tau_axis(self, t_max):
        return np.geomspace(self.tau_floor_frac * t_max, t_max, self.tau_res + 1)


def _ue_grid_best(link, task, ue_clock, config: ScenarioConfig, f_s, grid: GridSpec):
    """Best score one UE can reach on the grid with server cycles ``f_s``."""
    D, I = task.data_bits, task.cycles_per_bit
    if D == 0.0:
        return 0.0
    local_t = D * I / ue_clock
    local_e = D * I * config.eff_capacitance * ue_clock ** 2
    best = math.inf
    if local_t <= task.t_max_s * (1.0 + _REL_EPS):
        best = task.weight_e * local_e + task.weight_t * local_t

    has_helper = link.exec1.kind == "helper"
    eh_axis = grid.eta_axis(grid.eta_h_res if has_helper else 0)
    es_axis = grid.eta_axis(grid.eta_s_res)
    eh, es = (a.ravel() for a in np.meshgrid(eh_axis, es_axis, indexing="ij"))
    keep = (eh + es <= 1.0 + _REL_EPS) & (eh + es > 0.0)
    if has_helper:
        keep &= eh * D * I * config.eff_capacitance * link.exec1.freq ** 2 \
            <= link.exec1.energy_cap * (1.0 + _REL_EPS)
    if f_s <= 0.0:
        keep &= es == 0.0
    eh, es = eh[keep], es[keep]
    if eh.size == 0:
        return best

    idle_t = (1.0 - eh - es) * local_t
    idle_e = (1.0 - eh - es) * local_e
    help_c = eh * (D * I / link.exec1.freq) if has_helper else np.zeros_like(eh)
    srv_c = es * (D * I / f_s) if f_s > 0.0 else np.zeros_like(es)
    # tiny windows overflow the power inversion on purpose; inf/nan rows
    # simply fail the budget mask below
    with np.errstate(over="ignore", invalid="ignore"):
        for tau in grid.tau_axis(task.t_max_s):
            p_h, p_s = recover_powers(tau, eh, es, link, D, config.bandwidth_hz)
            p_sum = p_h + p_s
            delay = np.maximum(idle_t, tau + np.maximum(help_c, srv_c))
            score = task.weight_e * (idle_e + p_sum * tau) + task.weight_t * delay
            ok = (p_sum <= config.pmax_w * (1.0 + _REL_EPS)) \
                & (delay <= task.t_max_s * (1.0 + _REL_EPS))
            if np.any(ok):
                best = min(best, float(score[ok].min()))
    return best


def grid_search_patacra(matching, channels, tasks, config: ScenarioConfig,
                        grid: GridSpec | None = None):
    """Exhaustive upper bound on the worst per-UE score for one assignment.

    Sweeps (task split, window) per UE with powers recovered in closed
    form; infeasible points are skipped.  Restricted to one or two UEs;
    with two UEs on one server the cycle budget is swept over proportional
    splits, otherwise each UE keeps its full server budget.
    """
    grid = grid if grid is not None else GridSpec()
    n_ues = len(matching.assign)
    if n_ues > 2:
        raise ValueError("grid oracle handles at most two UEs")
    links = links_from_matching(matching, channels, config)

    if n_ues == 1:
        f = config.server_fmax[links[0].exec2.index]
        return _ue_grid_best(links[0], tasks[0], config.ue_freq[0], config, f, grid)

    k0, k1 = links[0].exec2.index, links[1].exec2.index
    if k0 != k1:
        return max(_ue_grid_best(links[n], tasks[n], config.ue_freq[n], config,
                                 config.server_fmax[links[n].exec2.index], grid)
                   for n in range(2))
    fmax = config.server_fmax[k0]
    fracs = np.linspace(0.0, 1.0, grid.f_splits)
    best0 = [_ue_grid_best(links[0], tasks[0], config.ue_freq[0], config,
                           s * fmax, grid) for s in fracs]
    best1 = [_ue_grid_best(links[1], tasks[1], config.ue_freq[1], config,
                           (1.0 - s) * fmax, grid) for s in fracs]
    return min(max(a, b) for a, b in zip(best0, best1))


# ---------------------------------------------------------------------------
# curvature check for y * 2^(x/y)


def perspective_pow2_hessian(x, y):
    """Hessian of (x, y) -> y * 2^(x/y) for y > 0, assembled entrywise."""
    if y <= 0.0:
        raise ValueError("the perspective form needs y > 0")
    w = 2.0 ** (x / y)
    f_xx = LN2 * LN2 * w / y
    f_xy = -LN2 * LN2 * w * x / y ** 2
    f_yy = LN2 * LN2 * w * x * x / y ** 3
    return np.array([[f_xx, f_xy], [f_xy, f_yy]])


def quad_form(x, y, v):
    """v^T H v for the perspective-power Hessian at (x, y)."""
    v = np.asarray(v, dtype=float)
    h = perspective_pow2_hessian(x, y)
    return float(v @ h @ v)


def hessian_psd_sample(samples, seed=0):
    """Smallest sampled quadratic form of the perspective-power Hessian.

    Draws (x, y, v) at random and returns min over samples of v^T H v; a
    convex function never goes measurably below zero.  The draw ranges
    keep 2^(x/y) moderate so floating-point cancellation stays orders of
    magnitude below the tolerances this feeds.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-2.0, 2.0, samples)
    ys = rng.uniform(0.5, 2.5, samples)
    vs = rng.normal(size=(samples, 2))
    worst = math.inf
    for x, y, v in zip(xs, ys, vs):
        worst = min(worst, quad_form(x, y, v))
    return worst


# ---------------------------------------------------------------------------
# constraint replay

REPLAY_FAMILIES = ("assignment", "split", "power", "rates", "helper_energy",
                   "server", "delay")


def _zero_report():
    return {fam: 0.0 for fam in REPLAY_FAMILIES}


def _bump(report, family, value):
    if value > report[family]:
        report[family] = float(value)


def max_replay_violation(report):
    return max(report.values())


def _single_rate(p, g, bandwidth):
    return bandwidth * math.log2(1.0 + p * g)


def _paired_rates(p1, p2, g1, g2, bandwidth):
    """Rates of two superposed streams; the weaker receiver decodes first."""
    o = 0 if g1 >= g2 else 1
    r1 = bandwidth * math.log2(1.0 + p1 * g1 / (o * p2 * g1 + 1.0))
    r2 = bandwidth * math.log2(1.0 + p2 * g2 / ((1 - o) * p1 * g2 + 1.0))
    return r1, r2


def _check_assignment(report, matching, config: ScenarioConfig):
    seen_h, seen_l, load = set(), set(), {}
    for m, k, l in matching.assign:
        if not (m == DUMB_HELPER or 0 <= m < config.n_helpers) \
                or not 0 <= k < config.n_servers or not 0 <= l < config.n_rbs:
            _bump(report, "assignment", 1.0)
            continue
        if m != DUMB_HELPER:
            if m in seen_h:
                _bump(report, "assignment", 1.0)
            seen_h.add(m)
        if l in seen_l:
            _bump(report, "assignment", 1.0)
        seen_l.add(l)
        load[k] = load.get(k, 0) + 1
    for k, cnt in load.items():
        if cnt > config.server_cap[k]:
            _bump(report, "assignment", 1.0)


def _shortfall(report, share, rate, tau, data_bits):
    if share > 0.0:
        delivered = rate * tau
        _bump(report, "rates", (share * data_bits - delivered) / (share * data_bits))


def _replay_standard(alloc, matching, channels, tasks, config: ScenarioConfig):
    report = _zero_report()
    _check_assignment(report, matching, config)
    grants = {}
    for n, (m, k, l) in enumerate(matching.assign):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        tau = float(alloc.tau[n])
        e_h, e_s = float(alloc.eta_h[n]), float(alloc.eta_s[n])
        f = float(alloc.f_s[n])
        p_h, p_s = float(alloc.p_h[n]), float(alloc.p_s[n])

        _bump(report, "split", max(-e_h, -e_s, e_h + e_s - 1.0))
        if m == DUMB_HELPER:
            _bump(report, "split", e_h)
        _bump(report, "power", max(-p_h, -p_s))
        _bump(report, "power", (p_h + p_s - config.pmax_w) / config.pmax_w)
        if f < 0.0:
            _bump(report, "server", -f / config.server_fmax[k])
        grants[k] = grants.get(k, 0.0) + max(f, 0.0)

        if D == 0.0:
            continue
        delay = (1.0 - e_h - e_s) * D * I / config.ue_freq[n]
        if e_h + e_s > 0.0:
            if tau <= 0.0:
                _bump(report, "rates", 1.0)
                continue
            if m != DUMB_HELPER:
                g_h = float(channels.g_helper[n, m, l])
                g_s = float(channels.g_server[n, k, l])
                r_h, r_s = _paired_rates(p_h, p_s, g_h, g_s, config.bandwidth_hz)
                _shortfall(report, e_h, r_h, tau, D)
            else:
                r_s = _single_rate(p_s, float(channels.g_server[n, k, l]),
                                   config.bandwidth_hz)
            _shortfall(report, e_s, r_s, tau, D)
            if e_h > 0.0 and m != DUMB_HELPER:
                delay = max(delay, tau + e_h * D * I / config.helper_freq[m])
                energy_h = e_h * D * I * config.eff_capacitance \
                    * config.helper_freq[m] ** 2
                _bump(report, "helper_energy",
                      (energy_h - config.helper_emax_j[m]) / config.helper_emax_j[m])
            if e_s > 0.0:
                delay = max(delay, tau + (e_s * D * I / f if f > 0.0 else math.inf))
        _bump(report, "delay", (delay - task.t_max_s) / task.t_max_s)
    for k, total in grants.items():
        _bump(report, "server", (total - config.server_fmax[k]) / config.server_fmax[k])
    return report


def _replay_server_pair(alloc, matching, channels, tasks, config: ScenarioConfig,
                        extras):
    """Replay for the helper-free variant that splits across two servers."""
    report = _zero_report()
    server1 = extras["server1"]
    f1_all = extras["f1"]
    seen_l, grants = set(), {}
    for n, (m, k2, l) in enumerate(matching.assign):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        k1 = int(server1[n])
        if m != DUMB_HELPER or not 0 <= k1 < config.n_servers \
                or not 0 <= k2 < config.n_servers or not 0 <= l < config.n_rbs:
            _bump(report, "assignment", 1.0)
        if config.n_servers > 1 and k1 == k2:
            _bump(report, "assignment", 1.0)
        if l in seen_l:
            _bump(report, "assignment", 1.0)
        seen_l.add(l)

        tau = float(alloc.tau[n])
        e_1, e_2 = float(alloc.eta_h[n]), float(alloc.eta_s[n])
        f1, f2 = float(f1_all[n]), float(alloc.f_s[n])
        p_1, p_2 = float(alloc.p_h[n]), float(alloc.p_s[n])
        _bump(report, "split", max(-e_1, -e_2, e_1 + e_2 - 1.0))
        _bump(report, "power", max(-p_1, -p_2))
        _bump(report, "power", (p_1 + p_2 - config.pmax_w) / config.pmax_w)
        for k, f in ((k1, f1), (k2, f2)):
            if f < 0.0:
                _bump(report, "server", -f / config.server_fmax[k])
            grants[k] = grants.get(k, 0.0) + max(f, 0.0)

        if D == 0.0:
            continue
        delay = (1.0 - e_1 - e_2) * D * I / config.ue_freq[n]
        if e_1 + e_2 > 0.0:
            if tau <= 0.0:
                _bump(report, "rates", 1.0)
                continue
            g1 = float(channels.g_server[n, k1, l])
            g2 = float(channels.g_server[n, k2, l])
            r1, r2 = _paired_rates(p_1, p_2, g1, g2, config.bandwidth_hz)
            _shortfall(report, e_1, r1, tau, D)
            _shortfall(report, e_2, r2, tau, D)
            for e, f in ((e_1, f1), (e_2, f2)):
                if e > 0.0:
                    delay = max(delay, tau + (e * D * I / f if f > 0.0 else math.inf))
        _bump(report, "delay", (delay - task.t_max_s) / task.t_max_s)
    for k, total in grants.items():
        _bump(report, "server", (total - config.server_fmax[k]) / config.server_fmax[k])
    return report


def _replay_two_leg(alloc, matching, channels, tasks, config: ScenarioConfig):
    """Replay for the orthogonal-access baselines (one stream per leg).

    ``alloc.mode`` is 'tdma' (legs share the RB back to back) or 'fdma'
    (legs run in parallel on orthogonal channels; ``band_frac`` < 1
    narrows each channel and scales noise down with it).  Both modes
    split one UE power budget across the two streams.
    """
    report = _zero_report()
    _check_assignment(report, matching, config)
    mode = alloc.mode
    frac = float(alloc.band_frac)
    used_l = {l for _, _, l in matching.assign}
    seen_extra = set()
    grants = {}
    for n, (m, k, l) in enumerate(matching.assign):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        t_h, t_s = float(alloc.tau_h[n]), float(alloc.tau_s[n])
        e_h, e_s = float(alloc.eta_h[n]), float(alloc.eta_s[n])
        f = float(alloc.f_s[n])
        p_h, p_s = float(alloc.p_h[n]), float(alloc.p_s[n])
        l_h = int(alloc.rb_h[n])

        _bump(report, "split", max(-e_h, -e_s, e_h + e_s - 1.0))
        if m == DUMB_HELPER:
            _bump(report, "split", e_h)
        _bump(report, "power", max(-p_h, -p_s, -t_h, -t_s))
        _bump(report, "power", (p_h + p_s - config.pmax_w) / config.pmax_w)
        if mode == "tdma":
            if l_h != l:
                _bump(report, "assignment", 1.0)
        else:
            if frac == 1.0 and e_h > 0.0:
                # a second full-width channel must be a distinct, unshared RB
                if l_h == l or not 0 <= l_h < config.n_rbs or l_h in used_l \
                        or l_h in seen_extra:
                    _bump(report, "assignment", 1.0)
                seen_extra.add(l_h)
        if f < 0.0:
            _bump(report, "server", -f / config.server_fmax[k])
        grants[k] = grants.get(k, 0.0) + max(f, 0.0)

        if D == 0.0:
            continue
        band = config.bandwidth_hz * (frac if mode == "fdma" else 1.0)
        delay = (1.0 - e_h - e_s) * D * I / config.ue_freq[n]
        offset = t_h if mode == "tdma" else 0.0  # server leg waits its turn
        if e_h > 0.0:
            if t_h <= 0.0 or m == DUMB_HELPER:
                _bump(report, "rates", 1.0)
            else:
                g_h = float(channels.g_helper[n, m, l_h]) / (frac if mode == "fdma" else 1.0)
                _shortfall(report, e_h, _single_rate(p_h, g_h, band), t_h, D)
                # remote compute starts once the node's data is all on hand;
                # with time slicing that is the end of the whole sequence
                h_start = t_h + t_s if mode == "tdma" else t_h
                delay = max(delay, h_start + e_h * D * I / config.helper_freq[m])
                energy_h = e_h * D * I * config.eff_capacitance \
                    * config.helper_freq[m] ** 2
                _bump(report, "helper_energy",
                      (energy_h - config.helper_emax_j[m]) / config.helper_emax_j[m])
        if e_s > 0.0:
            if t_s <= 0.0:
                _bump(report, "rates", 1.0)
            else:
                g_s = float(channels.g_server[n, k, l]) / (frac if mode == "fdma" else 1.0)
                _shortfall(report, e_s, _single_rate(p_s, g_s, band), t_s, D)
                delay = max(delay, offset + t_s
                            + (e_s * D * I / f if f > 0.0 else math.inf))
        _bump(report, "delay", (delay - task.t_max_s) / task.t_max_s)
    for k, total in grants.items():
        _bump(report, "server", (total - config.server_fmax[k]) / config.server_fmax[k])
    return report


def replay_constraints(alloc, matching, channels, tasks, config: ScenarioConfig,
                       extras=None):
    """Max relative violation per constraint family, from raw numbers.

    Dispatches on the allocation shape: two-window allocations follow the
    orthogonal-access semantics, an ``extras`` dict with a second server
    per UE follows the split-across-servers semantics, anything else the
    superposed helper/server semantics.
    """
    if hasattr(alloc, "mode"):
        return _replay_two_leg(alloc, matching, channels, tasks, config)
    if extras is not None and "server1" in extras:
        return _replay_server_pair(alloc, matching, channels, tasks, config, extras)
    return _replay_standard(alloc, matching, channels, tasks, config)
