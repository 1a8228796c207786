"""Discrete assignment layer over the continuous solver.

A matching pairs each UE with a helper (possibly the dumb placeholder), a
server and a resource block.  The local search walks the neighborhood
generated by two move families: swapping one role between two UEs, and
replacing a matched helper/RB (or re-homing one UE's server) with an idle
one.  Moves are accepted on first improvement of the solved utility and
the walk stops when a full sweep finds nothing better, which certifies
there is no improving neighbor.  A small exhaustive search provides the
reference optimum on instances where enumeration is affordable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import DUMB_HELPER, Matching, ScenarioConfig
from .patacra import solve_patacra

DESCENT_MARGIN = 1e-9    # accept a move only below this, so float noise cannot cycle
SS_ROLES = ("ue", "helper", "server", "rb")


# ---------------------------------------------------------------------------
# state bookkeeping


@dataclass(frozen=True)
class MatchingState:
    """A matching plus matched/idle bookkeeping for each resource side.

    ``servers_slack`` holds servers whose load sits below capacity; a
    server can be both matched and slack.
    """

    matching: Matching
    helpers_matched: frozenset
    helpers_unmatched: frozenset
    rbs_matched: frozenset
    rbs_unmatched: frozenset
    servers_matched: frozenset
    servers_slack: frozenset

    @classmethod
    def from_matching(cls, matching: Matching, config: ScenarioConfig):
        used_h = frozenset(matching.helpers_used())
        used_l = frozenset(matching.rbs_used())
        used_k = frozenset(k for (_, k, _) in matching.assign)
        slack = frozenset(k for k in range(config.n_servers)
                          if matching.server_load(k) < config.server_cap[k])
        return cls(matching=matching,
                   helpers_matched=used_h,
                   helpers_unmatched=frozenset(range(config.n_helpers)) - used_h,
                   rbs_matched=used_l,
                   rbs_unmatched=frozenset(range(config.n_rbs)) - used_l,
                   servers_matched=used_k,
                   servers_slack=slack)

    def check(self, config: ScenarioConfig):
        """Violation strings for the assignment plus the set bookkeeping."""
        errs = self.matching.check(config)
        fresh = MatchingState.from_matching(self.matching, config)
        for name in ("helpers_matched", "helpers_unmatched", "rbs_matched",
                     "rbs_unmatched", "servers_matched", "servers_slack"):
            if getattr(self, name) != getattr(fresh, name):
                errs.append(f"{name} inconsistent with the matching")
        return errs


class UtilityCache:
    """Memoizes continuous solves keyed by (matching, objective).

    ``solves`` counts actual solver invocations; repeated lookups of one
    matching return the identical solution object.  The solver defaults
    to the joint continuous solver but can be swapped so the same sweep
    drives schemes with different continuous models.
    """

    def __init__(self, solve_fn=None):
        self._store = {}
        self._solve = solve_fn if solve_fn is not None else solve_patacra
        self.hits = 0
        self.solves = 0

    def __len__(self):
        return len(self._store)

    def get_or_solve(self, matching: Matching, channels, tasks,
                     config: ScenarioConfig, objective="minmax"):
        key = (matching.key(), objective)
        sol = self._store.get(key)
        if sol is not None:
            self.hits += 1
            return sol
        sol = self._solve(matching, channels, tasks, config, objective=objective)
        self._store[key] = sol
        self.solves += 1
        return sol


def utility(state: MatchingState, cache: UtilityCache, channels, tasks,
            config: ScenarioConfig, objective="minmax"):
    """Solved score of a matching; +inf when no feasible allocation exists."""
    sol = cache.get_or_solve(state.matching, channels, tasks, config, objective)
    return sol.phi if sol.usable else math.inf


# ---------------------------------------------------------------------------
# moves


def apply_ss(state: MatchingState, config: ScenarioConfig, role, i, j,
             strict=False):
    """Swap ``role`` between the units of UEs ``i`` and ``j``.

    Returns the new state, or None when the candidate is vacuous (equal
    components), violates strict all-components-distinct mode, or breaks
    assignment feasibility.
    """
    if role not in SS_ROLES:
        raise ValueError(f"unknown swap role {role!r}")
    if i == j:
        return None
    a_i, a_j = state.matching.assign[i], state.matching.assign[j]
    if strict and any(x == y for x, y in zip(a_i, a_j)):
        return None
    if role == "ue":
        new_i, new_j = a_j, a_i
    else:
        pos = {"helper": 0, "server": 1, "rb": 2}[role]
        if a_i[pos] == a_j[pos]:
            return None
        new_i, new_j = list(a_i), list(a_j)
        new_i[pos], new_j[pos] = a_j[pos], a_i[pos]
    new = state.matching.with_assignment(i, new_i).with_assignment(j, new_j)
    if new.check(config):
        return None
    return MatchingState.from_matching(new, config)


def apply_lj(state: MatchingState, config: ScenarioConfig, role, x, x_new):
    """Replace a matched resource with an idle one.

    Role 'helper': helper ``x`` leaves its unit, idle helper ``x_new``
    joins it.  Role 'rb': likewise for resource blocks.  Role 'server':
    UE ``x`` moves to server ``x_new``, which must have spare capacity.
    Returns None for invalid or infeasible candidates.
    """
    mt = state.matching
    if role == "helper":
        if x not in state.helpers_matched or x_new not in state.helpers_unmatched:
            return None
        n = next(n for n in range(mt.n_ues) if mt.helper_of(n) == x)
        new = mt.with_assignment(n, (x_new, mt.server_of(n), mt.rb_of(n)))
    elif role == "rb":
        if x not in state.rbs_matched or x_new not in state.rbs_unmatched:
            return None
        n = next(n for n in range(mt.n_ues) if mt.rb_of(n) == x)
        new = mt.with_assignment(n, (mt.helper_of(n), mt.server_of(n), x_new))
    elif role == "server":
        if not 0 <= x < mt.n_ues or x_new not in state.servers_slack \
                or mt.server_of(x) == x_new:
            return None
        new = mt.with_assignment(x, (mt.helper_of(x), x_new, mt.rb_of(x)))
    else:
        raise ValueError(f"unknown leave/join role {role!r}")
    if new.check(config):
        return None
    return MatchingState.from_matching(new, config)


# ---------------------------------------------------------------------------
# local search


def _candidate_states(state: MatchingState, config: ScenarioConfig, strict,
                      frozen):
    """All move candidates in a fixed lexicographic order."""
    n_ues = state.matching.n_ues
    for role in SS_ROLES:
        if role in frozen:
            continue
        for i in range(n_ues):
            for j in range(i + 1, n_ues):
                cand = apply_ss(state, config, role, i, j, strict=strict)
                if cand is not None:
                    yield cand
    if "helper" not in frozen:
        for x in sorted(state.helpers_matched):
            for x_new in sorted(state.helpers_unmatched):
                cand = apply_lj(state, config, "helper", x, x_new)
                if cand is not None:
                    yield cand
    if "rb" not in frozen:
        for x in sorted(state.rbs_matched):
            for x_new in sorted(state.rbs_unmatched):
                cand = apply_lj(state, config, "rb", x, x_new)
                if cand is not None:
                    yield cand
    if "server" not in frozen:
        for n in range(n_ues):
            for x_new in sorted(state.servers_slack):
                cand = apply_lj(state, config, "server", n, x_new)
                if cand is not None:
                    yield cand


def initial_matching(config: ScenarioConfig, channels, tasks) -> MatchingState:
    """Greedy feasible start: each UE takes the strongest idle helper (dumb
    once they run out), the least-loaded server, then its best idle RB."""
    free_h = set(range(config.n_helpers))
    free_l = set(range(config.n_rbs))
    load = [0] * config.n_servers
    assign = []
    for n in range(config.n_ues):
        if free_h:
            m = max(sorted(free_h), key=lambda mm: channels.g_helper[n, mm, :].mean())
            free_h.remove(m)
        else:
            m = DUMB_HELPER
        open_k = [k for k in range(config.n_servers) if load[k] < config.server_cap[k]]
        if not open_k or not free_l:
            raise ValueError("capacity shortfall while building the start matching")
        k = min(open_k, key=lambda kk: (load[kk], kk))
        load[k] += 1

        def rb_gain(ll):
            g = float(channels.g_server[n, k, ll])
            if m != DUMB_HELPER:
                g += float(channels.g_helper[n, m, ll])
            return g

        l = max(sorted(free_l), key=rb_gain)
        free_l.remove(l)
        assign.append((m, k, l))
    return MatchingState.from_matching(Matching(tuple(assign)), config)


def fs_urhsm(config: ScenarioConfig, channels, tasks, objective="minmax",
             strict_swaps=False, frozen_roles=(), cache: UtilityCache | None = None,
             initial: MatchingState | None = None):
    """First-improvement local search over swaps and leave/join moves.

    Starts from the greedy matching, repeatedly applies the first
    candidate that improves the solved utility by more than the descent
    margin, and stops when a full sweep finds none.  Returns the final
    state, its continuous solution, and the utility trace (one entry per
    accepted move, leading with the start value).
    """
    cache = cache if cache is not None else UtilityCache()
    frozen = frozenset(frozen_roles)
    state = initial if initial is not None else initial_matching(config, channels, tasks)
    best = utility(state, cache, channels, tasks, config, objective)
    trace = [best]
    improved = True
    while improved:
        improved = False
        for cand in _candidate_states(state, config, strict_swaps, frozen):
            u = utility(cand, cache, channels, tasks, config, objective)
            if u < best - DESCENT_MARGIN:
                state, best = cand, u
                trace.append(u)
                improved = True
                break
    sol = cache.get_or_solve(state.matching, channels, tasks, config, objective)
    return state, sol, trace


def verify_stability(state: MatchingState, channels, tasks, config: ScenarioConfig,
                     objective="minmax", strict_swaps=False, frozen_roles=(),
                     cache: UtilityCache | None = None):
    """True when no move candidate improves on the state's utility."""
    cache = cache if cache is not None else UtilityCache()
    best = utility(state, cache, channels, tasks, config, objective)
    for cand in _candidate_states(state, config, strict_swaps, frozenset(frozen_roles)):
        if utility(cand, cache, channels, tasks, config, objective) \
                < best - DESCENT_MARGIN:
            return False
    return True


# ---------------------------------------------------------------------------
# exhaustive reference


def _helper_assignments(n_ues, n_helpers):
    """Injective helper layouts; idle UEs take the dumb placeholder.

    A UE never prefers the placeholder over an idle real helper (it can
    always ignore one by shipping it nothing), so layouts leaving a real
    helper idle while a UE sits with the placeholder are not enumerated.
    """
    if n_helpers >= n_ues:
        yield from itertools.permutations(range(n_helpers), n_ues)
        return
    for recipients in itertools.combinations(range(n_ues), n_helpers):
        for perm in itertools.permutations(range(n_helpers)):
            row = [DUMB_HELPER] * n_ues
            for ue, m in zip(recipients, perm):
                row[ue] = m
            yield tuple(row)


def _server_assignments(config: ScenarioConfig):
    for combo in itertools.product(range(config.n_servers), repeat=config.n_ues):
        loads = [0] * config.n_servers
        ok = True
        for k in combo:
            loads[k] += 1
            if loads[k] > config.server_cap[k]:
                ok = False
                break
        if ok:
            yield combo


def count_matchings(config: ScenarioConfig):
    """Size of the feasible matching space the exhaustive search visits."""
    n, m, l = config.n_ues, config.n_helpers, config.n_rbs
    r = min(n, m)
    h_count = math.comb(n, r) * math.perm(m, r)
    s_count = sum(1 for _ in _server_assignments(config))
    return h_count * s_count * math.perm(l, n)


def exhaustive_search(config: ScenarioConfig, channels, tasks, objective="minmax",
                      cache: UtilityCache | None = None, guard=100_000):
    """Solve every feasible matching and return the best (matching, score).

    Refuses instances whose matching count exceeds ``guard``.
    """
    total = count_matchings(config)
    if total > guard:
        raise ValueError(f"{total} feasible matchings exceed the guard of {guard}")
    cache = cache if cache is not None else UtilityCache()
    best_mt, best_u = None, math.inf
    for helpers in _helper_assignments(config.n_ues, config.n_helpers):
        for servers in _server_assignments(config):
            for rbs in itertools.permutations(range(config.n_rbs), config.n_ues):
                mt = Matching(tuple(zip(helpers, servers, rbs)))
                sol = cache.get_or_solve(mt, channels, tasks, config, objective)
                u = sol.phi if sol.usable else math.inf
                if u < best_u:
                    best_mt, best_u = mt, u
    return best_mt, best_u


# ---------------------------------------------------------------------------
# serialization


def matching_to_records(matching: Matching):
    return [{"ue": n, "helper": m, "server": k, "rb": l}
            for n, (m, k, l) in enumerate(matching.assign)]


def matching_from_records(records):
    rows = sorted(records, key=lambda r: r["ue"])
    if [r["ue"] for r in rows] != list(range(len(rows))):
        raise ValueError("records must cover UEs 0..N-1 exactly once")
    return Matching(tuple((r["helper"], r["server"], r["rb"]) for r in rows))
