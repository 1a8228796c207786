"""Iterative convex-approximation solver for the continuous allocation.

Given a fixed (helper, server, RB) assignment, the remaining decisions are
continuous: the shared transmission window tau, task split (eta_h, eta_s),
server cycle grants, and per-UE delay bounds.  Stream powers are eliminated
analytically (the rate equations invert in closed form), leaving terms of
the shapes 2^z, y*2^(x/y) and bilinear couplings that fit the conic layer
after a Taylor step on a few square roots.  The solver iterates: linearize
at the last point, solve the convex surrogate, repeat until the objective
settles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import (ConicProgram, LinearExpr, SolveStatus, SolverSettings,
                    encode_lmi2x2, var)
from .model import (DUMB_HELPER, ChannelRealization, ContinuousAllocation, Matching,
                    ScenarioConfig, decoding_indicator)

LN2 = math.log(2.0)
U_FLOOR = 1e-9        # keeps surrogate linearization points strictly positive
U_INIT_FLOOR = 1e-6


def pow2m1(x):
    """2**x - 1, accurate near zero."""
    return np.expm1(np.asarray(x, dtype=float) * LN2)


# ---------------------------------------------------------------------------
# per-UE coupling data


@dataclass(frozen=True)
class LegExec:
    """Where one offloaded subtask executes."""

    kind: str                    # 'helper' | 'server' | 'none'
    index: int = -1
    freq: float = 0.0            # fixed clock, kind == 'helper' only
    energy_cap: float = math.inf


@dataclass(frozen=True)
class UELink:
    """Radio and compute couplings of one UE under a fixed assignment.

    ``o`` is the SIC decode-order bit; ``a1``/``a2`` are the two
    channel-difference coefficients of the closed-form power inversion
    (both nonnegative; ``a2 == 0`` when the first stream is absent).
    ``exec1`` hosts the eta_h subtask, ``exec2`` (always a server) the
    eta_s subtask.
    """

    o: int
    a1: float
    a2: float
    exec1: LegExec
    exec2: LegExec


def links_from_matching(matching: Matching, channels: ChannelRealization,
                        config: ScenarioConfig):
    """Derive per-UE link coefficients from a discrete assignment."""
    links = []
    for n, (m, k, l) in enumerate(matching.assign):
        g_s = float(channels.g_server[n, k, l])
        if m == DUMB_HELPER:
            links.append(UELink(o=0, a1=1.0 / g_s, a2=0.0,
                                exec1=LegExec("none"),
                                exec2=LegExec("server", k)))
            continue
        g_h = float(channels.g_helper[n, m, l])
        o = decoding_indicator(channels, n, m, k, l)
        a1 = (1 - 2 * o) * (1.0 / g_s - 1.0 / g_h)
        a2 = (1 - o) / g_h + o / g_s
        if a1 < 0.0 or a2 <= 0.0:  # nonnegative by the decode-order choice
            raise AssertionError("inconsistent link coefficients")
        links.append(UELink(o=o, a1=a1, a2=a2,
                            exec1=LegExec("helper", m, config.helper_freq[m],
                                          config.helper_emax_j[m]),
                            exec2=LegExec("server", k)))
    return links


def recover_powers(tau, eta_h, eta_s, link: UELink, data_bits, bandwidth_hz):
    """Closed-form stream powers meeting the rate targets, elementwise.

    The interference-free stream needs ``a2 * (2^x1 - 1)``; the interfered
    stream picks up the remainder of the sum-power expression.  Which
    label (helper/server) is which depends on the decode order ``o``.
    Accepts scalars or aligned arrays; requires tau > 0 wherever any task
    share is positive.
    """
    tau = np.asarray(tau, dtype=float)
    eta_h = np.asarray(eta_h, dtype=float)
    eta_s = np.asarray(eta_s, dtype=float)
    active = eta_h + eta_s > 0.0
    if np.any(active & (tau <= 0.0)):
        raise ValueError("tau must be positive when offloading")
    safe_tau = np.where(active, tau, 1.0)
    scale = data_bits / (bandwidth_hz * safe_tau)
    eta_free = ((1 - link.o) * eta_h + link.o * eta_s) * scale
    eta_intf = (link.o * eta_h + (1 - link.o) * eta_s) * scale
    both = (eta_h + eta_s) * scale
    p_free = link.a2 * pow2m1(eta_free)
    p_intf = link.a1 * pow2m1(eta_intf) - link.a2 * pow2m1(eta_free) + link.a2 * pow2m1(both)
    if link.o == 0:
        p_h, p_s = p_free, p_intf
    else:
        p_h, p_s = p_intf, p_free
    zero = np.zeros_like(p_h)
    p_h = np.where(active, p_h, zero)
    p_s = np.where(active, p_s, zero)
    if p_h.ndim == 0:
        return float(p_h), float(p_s)
    return p_h, p_s


# ---------------------------------------------------------------------------
# surrogate subproblem


@dataclass
class SurrogateParams:
    """Linearization state: one positive ``u`` vector per UE (ragged) plus
    the matching transmission windows, used to balance the bilinear cones."""

    u: list
    tau: np.ndarray | None = None

    def floored(self, floor=U_FLOOR):
        return SurrogateParams([np.maximum(np.asarray(v, dtype=float), floor)
                                for v in self.u], self.tau)


def u_layout(link: UELink, data_bits):
    """Names of the linearized variables one UE contributes, in order."""
    if data_bits == 0.0:
        return []
    names = []
    if link.a1 > 0.0:
        names.append("u1")
    if link.a2 > 0.0:
        names.append("u2")
    if link.exec1.kind == "server":
        names.append("v1")
    names.append("u3")
    return names


@dataclass
class SubPoint:
    """Extracted solution of one surrogate solve."""

    phi: float
    tau: np.ndarray
    eta_h: np.ndarray
    eta_s: np.ndarray
    f1: np.ndarray       # exec1 server grant (0 when exec1 is not a server)
    f2: np.ndarray       # exec2 server grant
    beta: np.ndarray
    edt: np.ndarray
    u: list


@dataclass
class SubproblemHandles:
    links: list
    objective: str
    fixed_f: np.ndarray | None
    phi: int | None = None
    tau: list = field(default_factory=list)
    eta_h: list = field(default_factory=list)
    eta_s: list = field(default_factory=list)
    f1: list = field(default_factory=list)
    f2: list = field(default_factory=list)
    f1_scale: list = field(default_factory=list)
    f2_scale: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    edt: list = field(default_factory=list)
    u_vars: list = field(default_factory=list)

    def _get(self, ids, x, default=0.0):
        return np.array([x[i] if i is not None else default for i in ids])

    def extract(self, x) -> SubPoint:
        edt = self._get(self.edt, x)
        phi = float(x[self.phi]) if self.phi is not None else float(edt.sum())
        if self.fixed_f is not None:
            f2 = np.asarray(self.fixed_f, dtype=float).copy()
        else:
            f2 = self._get(self.f2, x) * np.asarray(self.f2_scale)
        return SubPoint(
            phi=phi, tau=self._get(self.tau, x), eta_h=self._get(self.eta_h, x),
            eta_s=self._get(self.eta_s, x),
            f1=self._get(self.f1, x) * np.asarray(self.f1_scale), f2=f2,
            beta=self._get(self.beta, x), edt=edt,
            u=[self._get(ids, x) for ids in self.u_vars])


def _lmi3_scale(data_bits, cycles_per_bit, t_max, fmax):
    # balance the xi*f >= u^2 cone entries toward O(1)
    return math.sqrt(max(data_bits * fmax / (cycles_per_bit * t_max), 1.0))


def build_subproblem(links, tasks, config: ScenarioConfig, params: SurrogateParams,
                     objective="minmax", fixed_f=None):
    """Assemble the convex surrogate around the given linearization point.

    ``fixed_f`` freezes the exec2 server grants to the given values (used
    by the alternating baseline); only links without server-hosted first
    legs support it.
    """
    if objective not in ("minmax", "sum"):
        raise ValueError(f"unknown objective {objective!r}")
    prog = ConicProgram()
    hs = SubproblemHandles(links=links, objective=objective,
                           fixed_f=None if fixed_f is None else np.asarray(fixed_f, float))
    if objective == "minmax":
        hs.phi = prog.add_var("phi")
        score_target = var(hs.phi)
    server_rows = {}  # k -> list of LinearExpr (granted cycle rates)

    for n, (link, task) in enumerate(zip(links, tasks)):
        D, I = task.data_bits, task.cycles_per_bit
        if objective == "sum":
            e_n = prog.add_var(f"edt{n}")
            hs.edt.append(e_n)
            score_target = var(e_n)
        else:
            hs.edt.append(None)

        if D == 0.0:
            # nothing to ship or compute: the score collapses to the delay bound
            b_n = prog.add_var(f"beta{n}")
            hs.beta.append(b_n)
            hs.tau.append(None); hs.eta_h.append(None); hs.eta_s.append(None)
            hs.f1.append(None); hs.f2.append(None); hs.u_vars.append([])
            hs.f1_scale.append(1.0); hs.f2_scale.append(1.0)
            prog.add_ineq(-var(b_n))
            prog.add_ineq(var(b_n) - task.t_max_s)
            prog.add_ineq(task.weight_t * var(b_n) - score_target)
            continue

        ur = dict(zip(u_layout(link, D), np.asarray(params.u[n], dtype=float)))
        has1 = link.exec1.kind != "none"
        tau = prog.add_var(f"tau{n}")
        es = prog.add_var(f"es{n}")
        eh = prog.add_var(f"eh{n}") if has1 else None
        b_n = prog.add_var(f"beta{n}")
        xi = prog.add_var(f"xi{n}")
        u3 = prog.add_var(f"u3_{n}")
        hs.tau.append(tau); hs.eta_h.append(eh); hs.eta_s.append(es); hs.beta.append(b_n)
        uid_by_name = {"u3": u3}

        eh_e = var(eh) if has1 else LinearExpr.constant(0.0)
        es_e = var(es)
        off_sum = eh_e + es_e
        local_frac = 1.0 - off_sum
        prog.add_ineq(-es_e)
        if has1:
            prog.add_ineq(-eh_e)
        prog.add_ineq(off_sum - 1.0)
        prog.add_ineq(var(b_n) - task.t_max_s)
        prog.add_ineq(local_frac * (D * I / config.ue_freq[n]) - var(b_n))
        prog.add_ineq(var(tau) + var(xi) - var(b_n))

        # first-leg completion and its compute resource
        f1_id = None
        f1_scale = 1.0
        if link.exec1.kind == "helper":
            prog.add_ineq(var(tau) + eh_e * (D * I / link.exec1.freq) - var(b_n))
            prog.add_ineq(eh_e * (D * I * config.eff_capacitance * link.exec1.freq ** 2)
                          - link.exec1.energy_cap)
        elif link.exec1.kind == "server":
            if fixed_f is not None:
                raise ValueError("fixed exec2 grants require helper-hosted first legs")
            xi1 = prog.add_var(f"xi1_{n}")
            f1_id = prog.add_var(f"f1_{n}")  # grant as a share of the server budget
            v1 = prog.add_var(f"v1_{n}")
            uid_by_name["v1"] = v1
            k1 = link.exec1.index
            fmax1 = config.server_fmax[k1]
            s3 = _lmi3_scale(D, I, task.t_max_s, fmax1)
            f1_scale = fmax1
            prog.add_ineq(var(tau) + var(xi1) - var(b_n))
            encode_lmi2x2(prog, var(xi1) * (s3 / D), var(f1_id) * (fmax1 / (I * s3)), var(v1))
            prog.add_ineq(eh_e - var(v1) * (2.0 * ur["v1"]) + ur["v1"] ** 2)
            server_rows.setdefault(k1, []).append(var(f1_id))
        hs.f1.append(f1_id)
        hs.f1_scale.append(f1_scale)

        # second-leg completion: xi covers the server compute time
        k2 = link.exec2.index
        fmax2 = config.server_fmax[k2]
        s3 = _lmi3_scale(D, I, task.t_max_s, fmax2)
        if fixed_f is not None:
            f2_id = None
            f2_scale = 1.0
            f2_e = LinearExpr.constant(float(fixed_f[n]) / fmax2)
        else:
            f2_id = prog.add_var(f"f2_{n}")
            f2_scale = fmax2
            f2_e = var(f2_id)
            server_rows.setdefault(k2, []).append(f2_e)
        hs.f2.append(f2_id)
        hs.f2_scale.append(f2_scale)
        encode_lmi2x2(prog, var(xi) * (s3 / D), f2_e * (fmax2 / (I * s3)), var(u3))
        prog.add_ineq(es_e - var(u3) * (2.0 * ur["u3"]) + ur["u3"] ** 2)

        # one power block per stream; the channel coefficient a is folded
        # into the epigraph variables so everything stays near unit scale:
        # wh >= a * 2^z  and  th >= a * tau * 2^(x/tau)
        eta_intf = link.o * eh_e + (1 - link.o) * es_e
        power = LinearExpr()
        budget = config.pmax_w
        energy = local_frac * (D * I * config.eff_capacitance * config.ue_freq[n] ** 2)
        for a, frac_expr, uname, tag in ((link.a1, eta_intf, "u1", 1),
                                         (link.a2, off_sum, "u2", 2)):
            if a <= 0.0:
                continue
            z = prog.add_var(f"z{tag}_{n}")
            u = prog.add_var(f"u{tag}_{n}")
            wh = prog.add_var(f"wh{tag}_{n}")
            th = prog.add_var(f"th{tag}_{n}")
            uid_by_name[uname] = u
            ln_a = math.log(a)
            # z * tau >= u^2 couples the exponent to the window; rescale the
            # cone so both diagonal entries sit near the linearization point
            tau_r = float(params.tau[n]) if params.tau is not None else 0.0
            sz = min(max(tau_r / ur[uname], 1e-3), 1e3) if tau_r > 0.0 else 1.0
            encode_lmi2x2(prog, var(z) * sz, var(tau) * (1.0 / sz), var(u))
            prog.add_ineq(frac_expr * (D / config.bandwidth_hz)
                          - var(u) * (2.0 * ur[uname]) + ur[uname] ** 2)
            prog.add_exp(var(z) * LN2 + ln_a, LinearExpr.constant(1.0), var(wh))
            prog.add_exp(frac_expr * (D / config.bandwidth_hz) * LN2 + var(tau) * ln_a,
                         var(tau), var(th))
            power = power + var(wh)
            budget += a
            energy = energy + var(th) - var(tau) * a
        hs.u_vars.append([uid_by_name[name] for name in u_layout(link, D)])

        prog.add_ineq(power - budget)
        prog.add_ineq(energy * task.weight_e + var(b_n) * task.weight_t - score_target)

    for grants in server_rows.values():
        total = LinearExpr()
        for g in grants:
            total = total + g
        prog.add_ineq(total - 1.0)  # grants are expressed as budget shares

    if objective == "minmax":
        prog.minimize(var(hs.phi))
    else:
        obj = LinearExpr()
        for e_n in hs.edt:
            obj = obj + var(e_n)
        prog.minimize(obj)
    return prog, hs


# ---------------------------------------------------------------------------
# initial point


def equal_server_shares(links, config: ScenarioConfig):
    """Split each server's cycle budget evenly over the legs it hosts."""
    load = {}
    for link in links:
        for ex in (link.exec1, link.exec2):
            if ex.kind == "server":
                load[ex.index] = load.get(ex.index, 0) + 1
    shares = []
    for link in links:
        f1 = config.server_fmax[link.exec1.index] / load[link.exec1.index] \
            if link.exec1.kind == "server" else 0.0
        f2 = config.server_fmax[link.exec2.index] / load[link.exec2.index]
        shares.append((f1, f2))
    return shares


def initial_point(links, tasks, config: ScenarioConfig) -> SurrogateParams:
    """Heuristic linearization point: balanced thirds, halved until the
    power budget accepts them; zero split as a last resort."""
    shares = equal_server_shares(links, config)
    out = []
    taus = np.zeros(len(links))
    for n, (link, task) in enumerate(zip(links, tasks)):
        D, I = task.data_bits, task.cycles_per_bit
        if D == 0.0:
            out.append(np.zeros(0))
            continue
        f1, f2 = shares[n]
        eta = 1.0 / 3.0
        found = None
        for _ in range(60):
            e_h = eta if link.exec1.kind != "none" else 0.0
            exec1_t = e_h * D * I / link.exec1.freq if link.exec1.kind == "helper" else \
                (e_h * D * I / f1 if link.exec1.kind == "server" else 0.0)
            exec2_t = eta * D * I / f2
            tau = task.t_max_s - max(exec1_t, exec2_t)
            if tau > 0.0:
                p_h, p_s = recover_powers(tau, e_h, eta, link, D, config.bandwidth_hz)
                if p_h + p_s <= 0.999 * config.pmax_w:
                    # helper energy budget too, when a real helper is in play
                    if link.exec1.kind != "helper" or \
                            e_h * D * I * config.eff_capacitance * link.exec1.freq ** 2 \
                            <= link.exec1.energy_cap:
                        found = (e_h, eta)
                        break
            eta *= 0.5
        if found:
            e_h, e_s = found
            taus[n] = tau
        else:
            e_h, e_s = 0.0, 0.0
        vals = {"u1": math.sqrt((link.o * e_h + (1 - link.o) * e_s) * D / config.bandwidth_hz),
                "u2": math.sqrt((e_h + e_s) * D / config.bandwidth_hz),
                "v1": math.sqrt(e_h),
                "u3": math.sqrt(e_s)}
        out.append(np.array([vals[name] for name in u_layout(link, D)]))
    return SurrogateParams(out, taus).floored(U_INIT_FLOOR)


# ---------------------------------------------------------------------------
# solve loops


class PatacraStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"
    NUMERICAL = "numerical_failure"


@dataclass
class IterateRecord:
    phi: float
    raw_status: str
    solve_ms: float
    point: SubPoint


@dataclass
class PatacraSolution:
    status: PatacraStatus
    phi: float
    alloc: ContinuousAllocation | None
    iterations: int
    phi_trace: list
    records: list
    message: str = ""

    @property
    def usable(self):
        return self.alloc is not None and self.status in (
            PatacraStatus.CONVERGED, PatacraStatus.MAX_ITERATIONS)


def _sca_loop(build_fn, params: SurrogateParams, epsilon, max_iter, settings):
    records = []
    trace = []
    status = PatacraStatus.MAX_ITERATIONS
    message = ""
    for it in range(1, max_iter + 1):
        prog, hs = build_fn(params)
        res = conic.solve(prog, settings)
        if res.status is not SolveStatus.OPTIMAL:
            if not records:
                status = PatacraStatus.INFEASIBLE if res.status is SolveStatus.INFEASIBLE \
                    else PatacraStatus.NUMERICAL
                message = res.raw_status
                return status, trace, records, it, message
            status = PatacraStatus.NUMERICAL
            message = f"iteration {it}: {res.raw_status}"
            return status, trace, records, it, message
        point = hs.extract(res.x)
        records.append(IterateRecord(point.phi, res.raw_status, res.solve_ms, point))
        trace.append(point.phi)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < epsilon:
            status = PatacraStatus.CONVERGED
            return status, trace, records, it, message
        params = SurrogateParams(point.u, point.tau).floored()
    return status, trace, records, max_iter, message


def _assemble(links, tasks, config, point: SubPoint):
    n_ues = len(links)
    tau = point.tau.copy()
    eta_h = np.where(point.eta_h < 1e-10, 0.0, point.eta_h)
    eta_s = np.where(point.eta_s < 1e-10, 0.0, point.eta_s)
    idle = (eta_h + eta_s) == 0.0
    tau[idle] = 0.0
    p_h = np.zeros(n_ues)
    p_s = np.zeros(n_ues)
    for n, link in enumerate(links):
        p_h[n], p_s[n] = recover_powers(tau[n], eta_h[n], eta_s[n], link,
                                        tasks[n].data_bits, config.bandwidth_hz)
    return ContinuousAllocation(tau=tau, eta_h=eta_h, eta_s=eta_s, f_s=point.f2.copy(),
                                beta=point.beta.copy(), p_h=p_h, p_s=p_s, phi=point.phi)


def solve_patacra(matching: Matching, channels, tasks, config: ScenarioConfig,
                  objective="minmax", settings: SolverSettings | None = None,
                  links=None) -> PatacraSolution:
    """Run the convex-approximation loop for one assignment.

    Returns the final allocation with recovered stream powers, the
    objective trace (one entry per surrogate solve), and a status flag.
    The trace never increases beyond solver noise.
    """
    links = links if links is not None else links_from_matching(matching, channels, config)
    params = initial_point(links, tasks, config)
    status, trace, records, its, msg = _sca_loop(
        lambda p: build_subproblem(links, tasks, config, p, objective=objective),
        params, config.sca_epsilon, config.sca_max_iter, settings)
    if not records:
        return PatacraSolution(status, math.inf, None, its, trace, records, msg)
    alloc = _assemble(links, tasks, config, records[-1].point)
    return PatacraSolution(status, trace[-1], alloc, its, trace, records, msg)


def build_f_refit(links, tasks, config: ScenarioConfig, point: SubPoint):
    """Exact convex refit of the server grants with (tau, eta) frozen."""
    prog = ConicProgram()
    hs = SubproblemHandles(links=links, objective="minmax", fixed_f=None)
    hs.phi = prog.add_var("phi")
    server_rows = {}
    for n, (link, task) in enumerate(zip(links, tasks)):
        D, I = task.data_bits, task.cycles_per_bit
        hs.tau.append(None); hs.eta_h.append(None); hs.eta_s.append(None)
        hs.f1.append(None); hs.u_vars.append([]); hs.edt.append(None)
        hs.f1_scale.append(1.0)
        if D == 0.0:
            b_n = prog.add_var(f"beta{n}")
            hs.beta.append(b_n); hs.f2.append(None); hs.f2_scale.append(1.0)
            prog.add_ineq(-var(b_n))
            prog.add_ineq(var(b_n) - task.t_max_s)
            prog.add_ineq(task.weight_t * var(b_n) - var(hs.phi))
            continue
        if link.exec1.kind == "server":
            raise ValueError("grant refit requires helper-hosted first legs")
        tau, e_h, e_s = float(point.tau[n]), float(point.eta_h[n]), float(point.eta_s[n])
        fmax2 = config.server_fmax[link.exec2.index]
        b_n = prog.add_var(f"beta{n}")
        xi = prog.add_var(f"xi{n}")
        f2 = prog.add_var(f"f2_{n}")
        hs.beta.append(b_n); hs.f2.append(f2); hs.f2_scale.append(fmax2)
        server_rows.setdefault(link.exec2.index, []).append(var(f2))

        prog.add_ineq(var(b_n) - task.t_max_s)
        prog.add_ineq(LinearExpr.constant((1.0 - e_h - e_s) * D * I / config.ue_freq[n]) - var(b_n))
        if link.exec1.kind == "helper":
            prog.add_ineq(LinearExpr.constant(tau + e_h * D * I / link.exec1.freq) - var(b_n))
        prog.add_ineq(var(xi) + tau - var(b_n))
        s3 = _lmi3_scale(D, I, task.t_max_s, fmax2)
        encode_lmi2x2(prog, var(xi) * (s3 / D), var(f2) * (fmax2 / (I * s3)),
                      LinearExpr.constant(math.sqrt(e_s)))
        # transmit energy is fixed along with (tau, eta)
        if e_h + e_s > 0.0:
            scale = D / (config.bandwidth_hz * tau)
            x1 = (link.o * e_h + (1 - link.o) * e_s) * scale
            e_tran = link.a1 * tau * pow2m1(x1)
            if link.exec1.kind == "helper":
                e_tran += link.a2 * tau * pow2m1((e_h + e_s) * scale)
        else:
            e_tran = 0.0
        e_fixed = (1.0 - e_h - e_s) * D * I * config.eff_capacitance * config.ue_freq[n] ** 2 \
            + float(e_tran)
        prog.add_ineq(LinearExpr.constant(task.weight_e * e_fixed)
                      + task.weight_t * var(b_n) - var(hs.phi))
    for grants in server_rows.values():
        total = LinearExpr()
        for g in grants:
            total = total + g
        prog.add_ineq(total - 1.0)
    prog.minimize(var(hs.phi))
    return prog, hs


def solve_ao(matching: Matching, channels, tasks, config: ScenarioConfig,
             settings: SolverSettings | None = None) -> PatacraSolution:
    """Alternating baseline: surrogate step with grants frozen, then an
    exact grant refit with (tau, eta) frozen, until the objective settles.

    Starts from the same linearization point as :func:`solve_patacra` so
    the two are directly comparable per instance.
    """
    links = links_from_matching(matching, channels, config)
    params = initial_point(links, tasks, config)
    f_now = np.array([f2 for _, f2 in equal_server_shares(links, config)])
    trace = []
    records = []
    last_point = None
    status = PatacraStatus.MAX_ITERATIONS
    msg = ""
    outer = 0
    prev_phi = None
    for outer in range(1, config.sca_max_iter + 1):
        prog, hs = build_subproblem(links, tasks, config, params, fixed_f=f_now)
        res = conic.solve(prog, settings)
        if res.status is not SolveStatus.OPTIMAL:
            if last_point is None:
                status = PatacraStatus.INFEASIBLE if res.status is SolveStatus.INFEASIBLE \
                    else PatacraStatus.NUMERICAL
                return PatacraSolution(status, math.inf, None, outer, trace, records,
                                       res.raw_status)
            status = PatacraStatus.NUMERICAL
            msg = f"outer {outer} A-step: {res.raw_status}"
            break
        point_a = hs.extract(res.x)
        records.append(IterateRecord(point_a.phi, res.raw_status, res.solve_ms, point_a))
        trace.append(point_a.phi)

        prog_b, hs_b = build_f_refit(links, tasks, config, point_a)
        res_b = conic.solve(prog_b, settings)
        if res_b.status is not SolveStatus.OPTIMAL:
            status = PatacraStatus.NUMERICAL
            msg = f"outer {outer} refit: {res_b.raw_status}"
            last_point = point_a
            break
        point_b = hs_b.extract(res_b.x)
        f_now = point_b.f2.copy()
        merged = SubPoint(phi=point_b.phi, tau=point_a.tau, eta_h=point_a.eta_h,
                          eta_s=point_a.eta_s, f1=point_a.f1, f2=f_now,
                          beta=point_b.beta, edt=point_b.edt, u=point_a.u)
        records.append(IterateRecord(point_b.phi, res_b.raw_status, res_b.solve_ms, merged))
        trace.append(point_b.phi)
        last_point = merged

        if prev_phi is not None and abs(point_b.phi - prev_phi) < config.sca_epsilon:
            status = PatacraStatus.CONVERGED
            break
        prev_phi = point_b.phi
        # refresh the linearization: exact square roots where (tau, eta) allow
        u_next = []
        for n, link in enumerate(links):
            names = u_layout(link, tasks[n].data_bits)
            vals = dict(zip(names, point_a.u[n]))
            if "u3" in vals:
                vals["u3"] = math.sqrt(max(point_a.eta_s[n], 0.0))
            u_next.append(np.array([vals[name] for name in names]))
        params = SurrogateParams(u_next, point_a.tau).floored()

    if last_point is None:
        return PatacraSolution(status, math.inf, None, outer, trace, records, msg)
    alloc = _assemble(links, tasks, config, last_point)
    return PatacraSolution(status, last_point.phi, alloc, outer, trace, records, msg)


def trace_rows(solution: PatacraSolution):
    """Per-iteration trace as plain dict rows for CSV emission."""
    return [{"iteration": i + 1, "phi": rec.phi, "solver_status": rec.raw_status,
             "wall_ms": rec.solve_ms}
            for i, rec in enumerate(solution.records)]
