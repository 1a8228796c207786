"""Benchmark schemes behind one dispatcher.

The proposed design superposes both offload streams on one RB and searches
the full assignment space.  The baselines keep the same task model but
restrict the access side: no helpers (single server stream, or a split
across two servers), or helpers reached over orthogonal resources (time
slices on one RB, or parallel channels).  Every scheme pairs its own
continuous solver with the same first-improvement discrete sweep so the
comparison isolates the access model.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import conic
from .conic import ConicProgram, LinearExpr, SolveStatus, SolverSettings, \
    encode_lmi2x2, var
from .matching import DESCENT_MARGIN, MatchingState, UtilityCache, fs_urhsm
from .model import DUMB_HELPER, Matching, ScenarioConfig, evaluate_edt
from .patacra import IterateRecord, LN2, LegExec, PatacraSolution, PatacraStatus, \
    UELink, U_FLOOR, U_INIT_FLOOR, _lmi3_scale, pow2m1, solve_patacra


class SchemeId(enum.Enum):
    PROPOSED_NOMA = "proposed_noma"
    FDMA_NO_HELPERS = "fdma_no_helpers"
    NOMA_NO_HELPERS = "noma_no_helpers"
    TDMA_WITH_HELPERS = "tdma_with_helpers"
    FDMA_WITH_HELPERS = "fdma_with_helpers"
    SUM_EDT = "sum_edt"


@dataclass
class SchemeResult:
    """One scheme's outcome on one instance.

    ``objective`` is the solver objective (max EDT, or the sum for the
    sum-variant); ``medt`` is always the max per-UE EDT.  ``extras``
    carries the second-server payload for the split-server baseline so
    the result can be replayed without re-deriving it.
    """

    scheme: SchemeId
    status: str                      # 'ok' | 'inapplicable' | 'failed'
    objective: float = math.inf
    medt: float = math.inf
    edt: np.ndarray | None = None
    energy: np.ndarray | None = None
    delay: np.ndarray | None = None
    matching: Matching | None = None
    alloc: object | None = None
    extras: dict | None = None
    iterations: int = 0              # surrogate solves of the final matching
    accepted_ops: int = 0            # improving discrete moves
    wall_ms: float = 0.0
    message: str = ""

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def min_edt(self):
        return float(self.edt.min()) if self.edt is not None and self.edt.size else math.inf


# ---------------------------------------------------------------------------
# orthogonal-access continuous model (helper and server legs on separate
# resources; one interference-free stream per leg)


@dataclass
class TwoLegAllocation:
    """Continuous variables of the orthogonal-access baselines.

    ``mode`` is 'tdma' (legs take turns on the UE's RB) or 'fdma' (legs
    run in parallel; ``band_frac`` < 1 means both share the RB as
    narrowed subchannels, 1.0 means the helper leg owns the extra RB in
    ``rb_h``).  Either way the stream powers split one UE budget.
    """

    mode: str
    band_frac: float
    tau_h: np.ndarray
    tau_s: np.ndarray
    eta_h: np.ndarray
    eta_s: np.ndarray
    f_s: np.ndarray
    beta: np.ndarray
    p_h: np.ndarray
    p_s: np.ndarray
    rb_h: np.ndarray
    phi: float


@dataclass
class TwoLegParams:
    """Linearization state of the orthogonal-access surrogate."""

    u3: np.ndarray
    uh: np.ndarray
    us: np.ndarray
    th: np.ndarray
    ts: np.ndarray

    def floored(self, floor=U_FLOOR):
        return TwoLegParams(np.maximum(self.u3, floor), np.maximum(self.uh, floor),
                            np.maximum(self.us, floor), self.th, self.ts)


@dataclass
class TwoLegPoint:
    phi: float
    tau_h: np.ndarray
    tau_s: np.ndarray
    eta_h: np.ndarray
    eta_s: np.ndarray
    f_s: np.ndarray
    beta: np.ndarray
    u3: np.ndarray
    uh: np.ndarray
    us: np.ndarray


@dataclass
class TwoLegHandles:
    f2_scale: list = field(default_factory=list)
    phi: int | None = None
    th: list = field(default_factory=list)
    ts: list = field(default_factory=list)
    eh: list = field(default_factory=list)
    es: list = field(default_factory=list)
    f2: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    u3: list = field(default_factory=list)
    uh: list = field(default_factory=list)
    us: list = field(default_factory=list)

    def _get(self, ids, x, default=0.0):
        return np.array([x[i] if i is not None else default for i in ids])

    def extract(self, x) -> TwoLegPoint:
        return TwoLegPoint(
            phi=float(x[self.phi]), tau_h=self._get(self.th, x),
            tau_s=self._get(self.ts, x), eta_h=self._get(self.eh, x),
            eta_s=self._get(self.es, x),
            f_s=self._get(self.f2, x) * np.asarray(self.f2_scale),
            beta=self._get(self.beta, x), u3=self._get(self.u3, x),
            uh=self._get(self.uh, x), us=self._get(self.us, x))


def _extra_rb_map(matching: Matching, channels, config: ScenarioConfig):
    """Second RB per UE when the helper leg gets a full-width channel.

    UEs pick greedily in index order from the RBs no one holds as a
    primary, by helper-link gain; dumb-helper UEs keep their primary.
    """
    free = sorted(set(range(config.n_rbs)) - matching.rbs_used())
    rb_h = np.zeros(config.n_ues, dtype=int)
    for n, (m, k, l) in enumerate(matching.assign):
        if m == DUMB_HELPER:
            rb_h[n] = l
            continue
        if not free:
            raise ValueError("no spare RB left for a full-width helper leg")
        best = max(free, key=lambda ll: float(channels.g_helper[n, m, ll]))
        free.remove(best)
        rb_h[n] = best
    return rb_h


def _two_leg_initial(matching: Matching, tasks, config: ScenarioConfig,
                     channels, mode, frac, rb_h) -> TwoLegParams:
    """Balanced-thirds start, halved until power and timing accept it."""
    n_ues = config.n_ues
    band = config.bandwidth_hz * frac
    load = [0] * config.n_servers
    for _, k, _ in matching.assign:
        load[k] += 1
    u3 = np.zeros(n_ues)
    uh = np.zeros(n_ues)
    us = np.zeros(n_ues)
    th = np.zeros(n_ues)
    ts = np.zeros(n_ues)
    for n, (m, k, l) in enumerate(matching.assign):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        if D == 0.0:
            continue
        has_h = m != DUMB_HELPER
        f2 = config.server_fmax[k] / load[k]
        g_h = float(channels.g_helper[n, m, rb_h[n]]) / frac if has_h else 0.0
        g_s = float(channels.g_server[n, k, l]) / frac
        eta = 1.0 / 3.0
        e_h = e_s = 0.0
        for _ in range(60):
            cand_h = eta if has_h else 0.0
            rem_h = task.t_max_s - cand_h * D * I / config.helper_freq[m] if has_h else 0.0
            rem_s = task.t_max_s - eta * D * I / f2
            if mode == "tdma":
                rem = min(rem_h, rem_s) if has_h else rem_s
                w_h = 0.45 * rem if has_h else 0.0
                w_s = 0.45 * rem if has_h else 0.9 * rem
            else:
                w_h = 0.9 * rem_h if has_h else 0.0
                w_s = 0.9 * rem_s
            if w_s > 0.0 and (not has_h or w_h > 0.0):
                p_h = pow2m1(cand_h * D / (band * w_h)) / g_h if has_h else 0.0
                p_s = pow2m1(eta * D / (band * w_s)) / g_s
                power_ok = p_h + p_s <= 0.999 * config.pmax_w
                energy_ok = not has_h or cand_h * D * I * config.eff_capacitance \
                    * config.helper_freq[m] ** 2 <= config.helper_emax_j[m]
                if power_ok and energy_ok:
                    e_h, e_s = cand_h, eta
                    th[n], ts[n] = w_h, w_s
                    break
            eta *= 0.5
        u3[n] = math.sqrt(e_s)
        uh[n] = math.sqrt(e_h * D / band)
        us[n] = math.sqrt(e_s * D / band)
    return TwoLegParams(u3, uh, us, th, ts).floored(U_INIT_FLOOR)


def _build_two_leg(matching: Matching, channels, tasks, config: ScenarioConfig,
                   params: TwoLegParams, mode, frac, rb_h):
    """Convex surrogate for one orthogonal-access assignment.

    Both access modes split the UE's one power budget across its two
    streams, so the comparison against superposition changes only how
    the streams share the radio, not how much power a UE may spend.
    Delivery and transmit energy go through the same folded 2^z
    epigraphs as the superposed model; compute-share bilinearities keep
    their PSD embedding plus a Taylor step.
    """
    prog = ConicProgram()
    hs = TwoLegHandles()
    hs.phi = prog.add_var("phi")
    band = config.bandwidth_hz * frac
    server_rows = {}

    for n, (m, k, l) in enumerate(matching.assign):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        if D == 0.0:
            b_n = prog.add_var(f"beta{n}")
            hs.beta.append(b_n)
            hs.th.append(None); hs.ts.append(None); hs.eh.append(None)
            hs.es.append(None); hs.f2.append(None); hs.f2_scale.append(1.0)
            hs.u3.append(None); hs.uh.append(None); hs.us.append(None)
            prog.add_ineq(-var(b_n))
            prog.add_ineq(var(b_n) - task.t_max_s)
            prog.add_ineq(task.weight_t * var(b_n) - var(hs.phi))
            continue

        has_h = m != DUMB_HELPER
        ts_n = prog.add_var(f"ts{n}")
        es = prog.add_var(f"es{n}")
        th_n = prog.add_var(f"th{n}") if has_h else None
        eh = prog.add_var(f"eh{n}") if has_h else None
        b_n = prog.add_var(f"beta{n}")
        xi = prog.add_var(f"xi{n}")
        u3 = prog.add_var(f"u3_{n}")
        hs.th.append(th_n); hs.ts.append(ts_n); hs.eh.append(eh); hs.es.append(es)
        hs.beta.append(b_n); hs.u3.append(u3)

        eh_e = var(eh) if has_h else LinearExpr.constant(0.0)
        es_e = var(es)
        local_frac = 1.0 - eh_e - es_e
        prog.add_ineq(-es_e)
        prog.add_ineq(-var(ts_n))
        if has_h:
            prog.add_ineq(-eh_e)
            prog.add_ineq(-var(th_n))
        prog.add_ineq(eh_e + es_e - 1.0)
        prog.add_ineq(var(b_n) - task.t_max_s)
        prog.add_ineq(local_frac * (D * I / config.ue_freq[n]) - var(b_n))

        energy = local_frac * (D * I * config.eff_capacitance * config.ue_freq[n] ** 2)
        power = LinearExpr()
        budget = config.pmax_w
        legs = [("s", es_e, var(ts_n),
                 float(channels.g_server[n, k, l]) / frac, hs.us, params.us[n])]
        if has_h:
            legs.append(("h", eh_e, var(th_n),
                         float(channels.g_helper[n, m, rb_h[n]]) / frac,
                         hs.uh, params.uh[n]))
        else:
            hs.uh.append(None)
        for tag, e_e, t_e, g, u_list, u_r in legs:
            a = 1.0 / g
            that = prog.add_var(f"that_{tag}{n}")
            # transmit energy of the leg: that >= a * t * 2^(x/t)
            prog.add_exp(e_e * (D / band) * LN2 + t_e * math.log(a), t_e, var(that))
            energy = energy + var(that) - t_e * a
            z = prog.add_var(f"z_{tag}{n}")
            u = prog.add_var(f"u_{tag}{n}")
            wh = prog.add_var(f"wh_{tag}{n}")
            u_list.append(u)
            t_r = params.th[n] if tag == "h" else params.ts[n]
            sz = min(max(t_r / u_r, 1e-3), 1e3) if t_r > 0.0 else 1.0
            encode_lmi2x2(prog, var(z) * sz, t_e * (1.0 / sz), var(u))
            prog.add_ineq(e_e * (D / band) - var(u) * (2.0 * u_r) + u_r ** 2)
            prog.add_exp(var(z) * LN2 + math.log(a), LinearExpr.constant(1.0), var(wh))
            power = power + var(wh)
            budget += a
        prog.add_ineq(power - budget)

        # the compute phase follows the transmission phase: parallel legs
        # hand over at their own air time, time slicing hands over when
        # the whole sequence ends
        offset = var(th_n) if (mode == "tdma" and has_h) else LinearExpr.constant(0.0)
        prog.add_ineq(offset + var(ts_n) + var(xi) - var(b_n))
        if has_h:
            h_start = offset + var(ts_n) if mode == "tdma" else var(th_n)
            prog.add_ineq(h_start + eh_e * (D * I / config.helper_freq[m]) - var(b_n))
            prog.add_ineq(eh_e * (D * I * config.eff_capacitance
                                  * config.helper_freq[m] ** 2)
                          - config.helper_emax_j[m])

        f2 = prog.add_var(f"f2_{n}")
        hs.f2.append(f2)
        fmax = config.server_fmax[k]
        hs.f2_scale.append(fmax)
        s3 = _lmi3_scale(D, I, task.t_max_s, fmax)
        encode_lmi2x2(prog, var(xi) * (s3 / D), var(f2) * (fmax / (I * s3)), var(u3))
        prog.add_ineq(es_e - var(u3) * (2.0 * params.u3[n]) + params.u3[n] ** 2)
        server_rows.setdefault(k, []).append(var(f2))

        prog.add_ineq(energy * task.weight_e + var(b_n) * task.weight_t - var(hs.phi))

    for grants in server_rows.values():
        total = LinearExpr()
        for g_e in grants:
            total = total + g_e
        prog.add_ineq(total - 1.0)

    prog.minimize(var(hs.phi))
    return prog, hs


def _assemble_two_leg(matching: Matching, channels, tasks, config: ScenarioConfig,
                      point: TwoLegPoint, mode, frac, rb_h) -> TwoLegAllocation:
    n_ues = config.n_ues
    band = config.bandwidth_hz * frac
    eta_h = np.where(point.eta_h < 1e-10, 0.0, point.eta_h)
    eta_s = np.where(point.eta_s < 1e-10, 0.0, point.eta_s)
    tau_h = np.where(eta_h > 0.0, point.tau_h, 0.0)
    tau_s = np.where(eta_s > 0.0, point.tau_s, 0.0)
    p_h = np.zeros(n_ues)
    p_s = np.zeros(n_ues)
    for n, (m, k, l) in enumerate(matching.assign):
        D = tasks[n].data_bits
        if eta_h[n] > 0.0:
            g = float(channels.g_helper[n, m, rb_h[n]]) / frac
            p_h[n] = pow2m1(eta_h[n] * D / (band * tau_h[n])) / g
        if eta_s[n] > 0.0:
            g = float(channels.g_server[n, k, l]) / frac
            p_s[n] = pow2m1(eta_s[n] * D / (band * tau_s[n])) / g
    return TwoLegAllocation(mode=mode, band_frac=frac, tau_h=tau_h, tau_s=tau_s,
                            eta_h=eta_h, eta_s=eta_s, f_s=point.f_s.copy(),
                            beta=point.beta.copy(), p_h=p_h, p_s=p_s,
                            rb_h=np.asarray(rb_h, dtype=int), phi=point.phi)


def solve_two_leg(matching: Matching, channels, tasks, config: ScenarioConfig,
                  mode="tdma", objective="minmax",
                  settings: SolverSettings | None = None) -> PatacraSolution:
    """Convex-approximation loop for the orthogonal-access baselines.

    Parallel channels use full-width spares when enough RBs exist for one
    per helper leg (L >= 2N); otherwise each UE splits its own RB in half.
    Only the min-max objective is supported.
    """
    if mode not in ("tdma", "fdma"):
        raise ValueError(f"unknown access mode {mode!r}")
    if objective != "minmax":
        raise ValueError("orthogonal-access baselines score the max EDT only")
    if mode == "fdma" and config.n_rbs >= 2 * config.n_ues:
        frac = 1.0
        rb_h = _extra_rb_map(matching, channels, config)
    else:
        frac = 0.5 if mode == "fdma" else 1.0
        rb_h = np.array([l for _, _, l in matching.assign], dtype=int)

    params = _two_leg_initial(matching, tasks, config, channels, mode, frac, rb_h)
    records = []
    trace = []
    status = PatacraStatus.MAX_ITERATIONS
    message = ""
    for it in range(1, config.sca_max_iter + 1):
        prog, hs = _build_two_leg(matching, channels, tasks, config, params,
                                  mode, frac, rb_h)
        res = conic.solve(prog, settings)
        if res.status is not SolveStatus.OPTIMAL:
            if not records:
                status = PatacraStatus.INFEASIBLE if res.status is SolveStatus.INFEASIBLE \
                    else PatacraStatus.NUMERICAL
                return PatacraSolution(status, math.inf, None, it, trace, records,
                                       res.raw_status)
            status = PatacraStatus.NUMERICAL
            message = f"iteration {it}: {res.raw_status}"
            break
        point = hs.extract(res.x)
        records.append(IterateRecord(point.phi, res.raw_status, res.solve_ms, point))
        trace.append(point.phi)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < config.sca_epsilon:
            status = PatacraStatus.CONVERGED
            break
        params = TwoLegParams(point.u3, point.uh, point.us,
                              point.tau_h, point.tau_s).floored()
    alloc = _assemble_two_leg(matching, channels, tasks, config, records[-1].point,
                              mode, frac, rb_h)
    return PatacraSolution(status, trace[-1], alloc, len(trace), trace, records, message)


def two_leg_edt(alloc: TwoLegAllocation, matching: Matching, channels, tasks,
                config: ScenarioConfig):
    """Replayed per-UE (edt, energy, delay) for an orthogonal-access result."""
    n_ues = config.n_ues
    edt = np.zeros(n_ues)
    energy = np.zeros(n_ues)
    delay = np.zeros(n_ues)
    for n, (m, k, l) in enumerate(matching.assign):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        e_h, e_s = float(alloc.eta_h[n]), float(alloc.eta_s[n])
        t_h, t_s = float(alloc.tau_h[n]), float(alloc.tau_s[n])
        local = (1.0 - e_h - e_s) * D * I / config.ue_freq[n]
        e_loc = (1.0 - e_h - e_s) * D * I * config.eff_capacitance \
            * config.ue_freq[n] ** 2
        t = local
        if e_h > 0.0:
            h_start = t_h + t_s if alloc.mode == "tdma" else t_h
            t = max(t, h_start + e_h * D * I / config.helper_freq[m])
        if e_s > 0.0:
            offset = t_h if alloc.mode == "tdma" else 0.0
            f = float(alloc.f_s[n])
            t = max(t, offset + t_s + (e_s * D * I / f if f > 0.0 else math.inf))
        delay[n] = t
        energy[n] = e_loc + float(alloc.p_h[n]) * t_h + float(alloc.p_s[n]) * t_s
        edt[n] = task.weight_e * energy[n] + task.weight_t * delay[n]
    return edt, energy, delay


# ---------------------------------------------------------------------------
# split across two servers (helper-free superposition)


def pair_links(pairs, matching: Matching, channels, config: ScenarioConfig):
    """Link coefficients when both streams land on servers.

    ``pairs[n]`` holds the first-leg server; the matching row holds the
    second.  Decode order follows the gains, ties send the first leg
    interference-free; on one shared server the coefficients collapse to
    a single sum-rate stream.
    """
    links = []
    for n, (_, k2, l) in enumerate(matching.assign):
        k1 = int(pairs[n])
        g1 = float(channels.g_server[n, k1, l])
        g2 = float(channels.g_server[n, k2, l])
        o = 0 if g1 >= g2 else 1
        a1 = (1 - 2 * o) * (1.0 / g2 - 1.0 / g1)
        a2 = (1 - o) / g1 + o / g2
        links.append(UELink(o=o, a1=a1, a2=a2,
                            exec1=LegExec("server", k1),
                            exec2=LegExec("server", k2)))
    return links


def _pair_leg_loads(pairs, matching: Matching, config: ScenarioConfig):
    load = [0] * config.n_servers
    for n, (_, k2, _) in enumerate(matching.assign):
        load[int(pairs[n])] += 1
        load[k2] += 1
    return load


def _initial_pair_state(config: ScenarioConfig, channels):
    """Greedy start: per UE the best free RB, then the two strongest
    servers with spare leg slots (one server twice when it is alone)."""
    free_l = set(range(config.n_rbs))
    load = [0] * config.n_servers
    pairs = []
    rows = []
    for n in range(config.n_ues):
        if not free_l:
            raise ValueError("capacity shortfall while building the start assignment")
        l = max(sorted(free_l), key=lambda ll: float(channels.g_server[n, :, ll].max()))
        free_l.remove(l)
        if config.n_servers == 1:
            if load[0] + 2 > config.server_cap[0]:
                raise ValueError("the single server lacks slots for both legs")
            k1 = k2 = 0
        else:
            open_k = sorted((k for k in range(config.n_servers)
                             if load[k] < config.server_cap[k]),
                            key=lambda kk: -float(channels.g_server[n, kk, l]))
            if len(open_k) < 2:
                raise ValueError("not enough server slots for two legs per UE")
            k1, k2 = sorted(open_k[:2])
        load[k1] += 1
        load[k2] += 1
        pairs.append(k1)
        rows.append((DUMB_HELPER, k2, l))
    return tuple(pairs), Matching(tuple(rows))


def _pair_candidates(pairs, matching: Matching, config: ScenarioConfig):
    """Neighbor assignments: re-pair one UE's servers, move one UE to a
    free RB, or trade RBs between two UEs.  Leg counts respect the
    server slot caps; pairs stay index-sorted so mirrored labels do not
    reappear as distinct candidates."""
    n_ues = config.n_ues
    load = _pair_leg_loads(pairs, matching, config)
    if config.n_servers >= 2:
        for n in range(n_ues):
            k1_old, k2_old = int(pairs[n]), matching.server_of(n)
            for ka in range(config.n_servers):
                for kb in range(ka + 1, config.n_servers):
                    if (ka, kb) == tuple(sorted((k1_old, k2_old))):
                        continue
                    need = {}
                    for k in (ka, kb):
                        need[k] = need.get(k, 0) + 1
                    for k in (k1_old, k2_old):
                        need[k] = need.get(k, 0) - 1
                    if any(load[k] + d > config.server_cap[k] for k, d in need.items()):
                        continue
                    new_pairs = tuple(ka if i == n else p for i, p in enumerate(pairs))
                    yield new_pairs, matching.with_assignment(
                        n, (DUMB_HELPER, kb, matching.rb_of(n)))
    free_l = sorted(set(range(config.n_rbs)) - matching.rbs_used())
    for n in range(n_ues):
        for l_new in free_l:
            yield pairs, matching.with_assignment(
                n, (DUMB_HELPER, matching.server_of(n), l_new))
    for n1 in range(n_ues):
        for n2 in range(n1 + 1, n_ues):
            l1, l2 = matching.rb_of(n1), matching.rb_of(n2)
            swapped = matching.with_assignment(n1, (DUMB_HELPER, matching.server_of(n1), l2))
            yield pairs, swapped.with_assignment(n2, (DUMB_HELPER, matching.server_of(n2), l1))


def _server_pair_search(config: ScenarioConfig, channels, tasks):
    """First-improvement sweep over server pairs and RBs."""
    pairs, matching = _initial_pair_state(config, channels)
    cache = {}

    def solve(p, m):
        key = (p, m.key())
        if key not in cache:
            links = pair_links(p, m, channels, config)
            cache[key] = solve_patacra(m, channels, tasks, config, links=links)
        return cache[key]

    sol = solve(pairs, matching)
    best = sol.phi if sol.usable else math.inf
    trace = [best]
    improved = True
    while improved:
        improved = False
        for cand_pairs, cand_matching in _pair_candidates(pairs, matching, config):
            cand_sol = solve(cand_pairs, cand_matching)
            u = cand_sol.phi if cand_sol.usable else math.inf
            if u < best - DESCENT_MARGIN:
                pairs, matching, sol, best = cand_pairs, cand_matching, cand_sol, u
                trace.append(u)
                improved = True
                break
    return pairs, matching, sol, trace


def server_pair_edt(alloc, pairs, matching: Matching, tasks, config: ScenarioConfig,
                    f1):
    """Replayed per-UE (edt, energy, delay) for the split-server baseline."""
    n_ues = config.n_ues
    edt = np.zeros(n_ues)
    energy = np.zeros(n_ues)
    delay = np.zeros(n_ues)
    for n in range(n_ues):
        task = tasks[n]
        D, I = task.data_bits, task.cycles_per_bit
        e_1, e_2 = float(alloc.eta_h[n]), float(alloc.eta_s[n])
        tau = float(alloc.tau[n])
        local = (1.0 - e_1 - e_2) * D * I / config.ue_freq[n]
        e_loc = (1.0 - e_1 - e_2) * D * I * config.eff_capacitance \
            * config.ue_freq[n] ** 2
        t = local
        for e, f in ((e_1, float(f1[n])), (e_2, float(alloc.f_s[n]))):
            if e > 0.0:
                t = max(t, tau + (e * D * I / f if f > 0.0 else math.inf))
        delay[n] = t
        energy[n] = e_loc + (float(alloc.p_h[n]) + float(alloc.p_s[n])) * tau
        edt[n] = task.weight_e * energy[n] + task.weight_t * delay[n]
    return edt, energy, delay


# ---------------------------------------------------------------------------
# single-server baseline start


def no_helper_matching(config: ScenarioConfig, channels):
    """All-dumb greedy start: best (server, RB) by gain under the caps."""
    free_l = set(range(config.n_rbs))
    load = [0] * config.n_servers
    rows = []
    for n in range(config.n_ues):
        open_k = [k for k in range(config.n_servers) if load[k] < config.server_cap[k]]
        if not open_k or not free_l:
            raise ValueError("capacity shortfall while building the start matching")
        k, l = max(((kk, ll) for kk in sorted(open_k) for ll in sorted(free_l)),
                   key=lambda kl: float(channels.g_server[n, kl[0], kl[1]]))
        load[k] += 1
        free_l.remove(l)
        rows.append((DUMB_HELPER, k, l))
    return Matching(tuple(rows))


# ---------------------------------------------------------------------------
# dispatcher


def _failed(scheme, matching, sol, ops, t0):
    return SchemeResult(scheme=scheme, status="failed", matching=matching,
                        accepted_ops=ops, iterations=sol.iterations,
                        wall_ms=(time.perf_counter() - t0) * 1e3,
                        message=sol.message or sol.status.value)


def _from_standard(scheme, config, channels, tasks, state, sol, trace, t0):
    ops = len(trace) - 1
    if not sol.usable:
        return _failed(scheme, state.matching, sol, ops, t0)
    report = evaluate_edt(config, tasks, channels, state.matching, sol.alloc)
    return SchemeResult(scheme=scheme, status="ok", objective=sol.phi,
                        medt=report.medt, edt=report.edt, energy=report.energy,
                        delay=report.delay, matching=state.matching, alloc=sol.alloc,
                        iterations=sol.iterations, accepted_ops=ops,
                        wall_ms=(time.perf_counter() - t0) * 1e3)


def solve_scheme(scheme: SchemeId, config: ScenarioConfig, channels, tasks,
                 strict_swaps=False) -> SchemeResult:
    """Run one scheme end to end on a fixed instance.

    Capacity preconditions that a scheme cannot meet return an
    'inapplicable' result instead of raising; solver breakdowns come
    back as 'failed' with the solver's message.
    """
    t0 = time.perf_counter()
    if scheme in (SchemeId.PROPOSED_NOMA, SchemeId.SUM_EDT):
        objective = "minmax" if scheme is SchemeId.PROPOSED_NOMA else "sum"
        state, sol, trace = fs_urhsm(config, channels, tasks, objective=objective,
                                     strict_swaps=strict_swaps)
        return _from_standard(scheme, config, channels, tasks, state, sol, trace, t0)

    if scheme is SchemeId.FDMA_NO_HELPERS:
        try:
            start = no_helper_matching(config, channels)
        except ValueError as err:
            return SchemeResult(scheme=scheme, status="inapplicable", message=str(err))
        state, sol, trace = fs_urhsm(config, channels, tasks,
                                     frozen_roles=("helper",),
                                     initial=MatchingState.from_matching(start, config))
        return _from_standard(scheme, config, channels, tasks, state, sol, trace, t0)

    if scheme is SchemeId.NOMA_NO_HELPERS:
        if config.n_servers < 2 and max(config.server_cap) < 2:
            return SchemeResult(scheme=scheme, status="inapplicable",
                                message="needs a second server or a two-slot server")
        try:
            pairs, matching, sol, trace = _server_pair_search(config, channels, tasks)
        except ValueError as err:
            return SchemeResult(scheme=scheme, status="inapplicable", message=str(err))
        ops = len(trace) - 1
        if not sol.usable:
            return _failed(scheme, matching, sol, ops, t0)
        f1 = sol.records[-1].point.f1
        extras = {"server1": list(pairs), "f1": f1}
        edt, energy, delay = server_pair_edt(sol.alloc, pairs, matching, tasks,
                                             config, f1)
        return SchemeResult(scheme=scheme, status="ok", objective=sol.phi,
                            medt=float(edt.max()), edt=edt, energy=energy,
                            delay=delay, matching=matching, alloc=sol.alloc,
                            extras=extras, iterations=sol.iterations,
                            accepted_ops=ops,
                            wall_ms=(time.perf_counter() - t0) * 1e3)

    if scheme in (SchemeId.TDMA_WITH_HELPERS, SchemeId.FDMA_WITH_HELPERS):
        mode = "tdma" if scheme is SchemeId.TDMA_WITH_HELPERS else "fdma"
        cache = UtilityCache(solve_fn=partial(solve_two_leg, mode=mode))
        state, sol, trace = fs_urhsm(config, channels, tasks, cache=cache)
        ops = len(trace) - 1
        if not sol.usable:
            return _failed(scheme, state.matching, sol, ops, t0)
        edt, energy, delay = two_leg_edt(sol.alloc, state.matching, channels,
                                         tasks, config)
        return SchemeResult(scheme=scheme, status="ok", objective=sol.phi,
                            medt=float(edt.max()), edt=edt, energy=energy,
                            delay=delay, matching=state.matching, alloc=sol.alloc,
                            iterations=sol.iterations, accepted_ops=ops,
                            wall_ms=(time.perf_counter() - t0) * 1e3)

    raise ValueError(f"unknown scheme {scheme!r}")


def fairness_report(result_minmax: SchemeResult, result_sum: SchemeResult):
    """Spread and floor comparison between the two objectives.

    ``minmax_no_wider`` says the min-max spread (max - min per-UE EDT)
    does not exceed the sum-objective spread; ``sum_reaches_lower`` says
    the sum objective buys its total with a lower best-off UE.
    """
    if not (result_minmax.ok and result_sum.ok):
        raise ValueError("fairness comparison needs two usable results")
    if result_minmax.edt.shape != result_sum.edt.shape:
        raise ValueError("results cover different UE counts")
    spread_mm = float(result_minmax.edt.max() - result_minmax.edt.min())
    spread_sum = float(result_sum.edt.max() - result_sum.edt.min())
    return {
        "spread_minmax": spread_mm,
        "spread_sum": spread_sum,
        "min_edt_minmax": result_minmax.min_edt,
        "min_edt_sum": result_sum.min_edt,
        "minmax_no_wider": spread_mm <= spread_sum + 1e-12,
        "sum_reaches_lower": result_sum.min_edt <= result_minmax.min_edt + 1e-12,
    }
