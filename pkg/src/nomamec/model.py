"""System model for helper-assisted NOMA mobile edge computing.

UEs split a computation task three ways (local, helper, edge server) and
offload the remote parts on one resource block, multiplexing the helper and
server streams in the power domain.  This module holds the domain types,
random scenario generation, the achievable-rate model with SIC decoding
order, and a plain-number evaluator for energy/delay tradeoff (EDT) scores.

Units are SI throughout: Hz, seconds, Watts, Joules, bits, cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Sentinel helper index for UEs that offload without a real helper (the
# helper-side stream is simply absent; only the server stream is sent).
DUMB_HELPER = -1


def dbm_to_watts(dbm):
    """Convert a power level in dBm to Watts."""
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class TaskSpec:
    """One UE's computation task and scoring weights.

    Attributes
    ----------
    data_bits : float
        Task input size D in bits.
    cycles_per_bit : float
        Computation intensity I in CPU cycles per bit.
    t_max_s : float
        Completion deadline in seconds.
    weight_e : float
        EDT weight on consumed energy; ``weight_e + weight_t == 1``.
    weight_t : float
        EDT weight on completion delay.
    """

    data_bits: float
    cycles_per_bit: float
    t_max_s: float
    weight_e: float
    weight_t: float

    def __post_init__(self):
        if self.data_bits < 0 or self.cycles_per_bit <= 0 or self.t_max_s <= 0:
            raise ValueError("task sizes and deadline must be positive")
        if min(self.weight_e, self.weight_t) < 0 or abs(self.weight_e + self.weight_t - 1.0) > 1e-9:
            raise ValueError("EDT weights must be nonnegative and sum to 1")

    @property
    def cycles(self):
        return self.data_bits * self.cycles_per_bit


@dataclass(frozen=True)
class ScenarioConfig:
    """Static scenario description: node counts, budgets, radio constants.

    ``helper_freq``/``helper_emax_j`` describe the real helpers only; when
    fewer helpers than UEs exist, the assignment layer pads with
    :data:`DUMB_HELPER` entries that carry no helper stream.
    """

    n_ues: int
    n_helpers: int
    n_servers: int
    n_rbs: int
    ue_freq: tuple          # cycles/s, one per UE
    helper_freq: tuple      # cycles/s, one per helper
    helper_emax_j: tuple    # energy budget per helper, Joules
    server_fmax: tuple      # cycles/s, one per server
    server_cap: tuple       # max UEs served at once, one per server
    bandwidth_hz: float = 1e6
    noise_dbm_per_hz: float = -174.0
    pmax_w: float = dbm_to_watts(28.0)
    disc_radius_m: float = 500.0
    pathloss_d0_m: float = 10.0
    pathloss_exp: float = 4.7
    eff_capacitance: float = 1e-29
    sca_epsilon: float = 1e-6
    sca_max_iter: int = 100

    def __post_init__(self):
        if min(self.n_ues, self.n_servers, self.n_rbs) < 1 or self.n_helpers < 0:
            raise ValueError("need at least one UE, server and resource block")
        if self.n_rbs < self.n_ues:
            raise ValueError("each UE needs its own resource block")
        if sum(self.server_cap) < self.n_ues:
            raise ValueError("total server capacity below UE count")
        for name, want in (("ue_freq", self.n_ues), ("helper_freq", self.n_helpers),
                           ("helper_emax_j", self.n_helpers), ("server_fmax", self.n_servers),
                           ("server_cap", self.n_servers)):
            got = len(getattr(self, name))
            if got != want:
                raise ValueError(f"{name}: expected {want} entries, got {got}")
        if min(self.ue_freq + self.helper_freq + self.server_fmax, default=1.0) <= 0:
            raise ValueError("clock frequencies must be positive")
        if self.pmax_w <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("power budget and bandwidth must be positive")

    @property
    def noise_w(self):
        """Noise power over one resource block, sigma^2 in Watts."""
        return dbm_to_watts(self.noise_dbm_per_hz) * self.bandwidth_hz

    def to_dict(self):
        return {
            "n_ues": self.n_ues, "n_helpers": self.n_helpers,
            "n_servers": self.n_servers, "n_rbs": self.n_rbs,
            "ue_freq": list(self.ue_freq), "helper_freq": list(self.helper_freq),
            "helper_emax_j": list(self.helper_emax_j),
            "server_fmax": list(self.server_fmax), "server_cap": list(self.server_cap),
            "bandwidth_hz": self.bandwidth_hz, "noise_dbm_per_hz": self.noise_dbm_per_hz,
            "pmax_w": self.pmax_w, "disc_radius_m": self.disc_radius_m,
            "pathloss_d0_m": self.pathloss_d0_m, "pathloss_exp": self.pathloss_exp,
            "eff_capacitance": self.eff_capacitance,
            "sca_epsilon": self.sca_epsilon, "sca_max_iter": self.sca_max_iter,
        }

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        for key in ("ue_freq", "helper_freq", "helper_emax_j", "server_fmax", "server_cap"):
            kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class Topology:
    """Node positions on the plane, metres."""

    ue_xy: np.ndarray
    helper_xy: np.ndarray
    server_xy: np.ndarray

    def dist_ue_helper(self):
        return _pairwise_dist(self.ue_xy, self.helper_xy)

    def dist_ue_server(self):
        return _pairwise_dist(self.ue_xy, self.server_xy)


def _pairwise_dist(a, b):
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


@dataclass
class ChannelRealization:
    """Normalized channel gains g = |h|^2 / sigma^2, per node pair and RB.

    ``g_helper`` has shape (n_ues, n_helpers, n_rbs) and ``g_server``
    (n_ues, n_servers, n_rbs); units 1/W, so ``p * g`` is a plain SNR.
    """

    g_helper: np.ndarray
    g_server: np.ndarray


@dataclass(frozen=True)
class Matching:
    """Discrete assignment: per UE a (helper, server, RB) triple.

    Helper index may be :data:`DUMB_HELPER` for a missing helper stream.
    """

    assign: tuple

    def __post_init__(self):
        object.__setattr__(self, "assign", tuple(tuple(t) for t in self.assign))

    @property
    def n_ues(self):
        return len(self.assign)

    def helper_of(self, n):
        return self.assign[n][0]

    def server_of(self, n):
        return self.assign[n][1]

    def rb_of(self, n):
        return self.assign[n][2]

    def server_load(self, k):
        return sum(1 for (_, ks, _) in self.assign if ks == k)

    def helpers_used(self):
        return {m for (m, _, _) in self.assign if m != DUMB_HELPER}

    def rbs_used(self):
        return {l for (_, _, l) in self.assign}

    def with_assignment(self, n, triple):
        new = list(self.assign)
        new[n] = tuple(triple)
        return Matching(tuple(new))

    def key(self):
        """Canonical hashable form, usable as a cache key."""
        return self.assign

    def check(self, config: ScenarioConfig):
        """Return a list of assignment-constraint violations (empty = valid)."""
        errs = []
        if len(self.assign) != config.n_ues:
            errs.append(f"expected {config.n_ues} assignments, got {len(self.assign)}")
            return errs
        helpers, rbs = [], []
        for n, (m, k, l) in enumerate(self.assign):
            if not (m == DUMB_HELPER or 0 <= m < config.n_helpers):
                errs.append(f"ue {n}: helper index {m} out of range")
            if not 0 <= k < config.n_servers:
                errs.append(f"ue {n}: server index {k} out of range")
            if not 0 <= l < config.n_rbs:
                errs.append(f"ue {n}: rb index {l} out of range")
            if m != DUMB_HELPER:
                helpers.append(m)
            rbs.append(l)
        if len(set(helpers)) != len(helpers):
            errs.append("a helper serves more than one UE")
        if len(set(rbs)) != len(rbs):
            errs.append("a resource block carries more than one UE")
        for k in range(config.n_servers):
            if self.server_load(k) > config.server_cap[k]:
                errs.append(f"server {k} above capacity {config.server_cap[k]}")
        return errs


@dataclass
class ContinuousAllocation:
    """Continuous decision variables for one matching, arrays over UEs."""

    tau: np.ndarray      # NOMA transmission window, s
    eta_h: np.ndarray    # task fraction sent to the helper
    eta_s: np.ndarray    # task fraction sent to the server
    f_s: np.ndarray      # server cycles/s granted to this UE
    beta: np.ndarray     # per-UE completion-delay bound, s
    p_h: np.ndarray      # transmit power of the helper stream, W
    p_s: np.ndarray      # transmit power of the server stream, W
    phi: float           # solver objective value


@dataclass
class EdtReport:
    """Replayed energy, delay and EDT scores plus feasibility flags."""

    delay: np.ndarray
    energy: np.ndarray
    edt: np.ndarray
    medt: float
    sum_edt: float
    flags: dict = field(default_factory=dict)
    violation: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return all(self.flags.values())


# ---------------------------------------------------------------------------
# scenario generation


def generate_topology(config: ScenarioConfig, seed) -> Topology:
    """Drop UEs, helpers and servers uniformly on a disc of configured radius.

    Draw order is fixed (UEs, then helpers, then servers) so realizations
    are reproducible per seed.
    """
    rng = np.random.default_rng(seed)

    def disc(count):
        r = config.disc_radius_m * np.sqrt(rng.random(count))
        th = 2.0 * math.pi * rng.random(count)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    return Topology(disc(config.n_ues), disc(config.n_helpers), disc(config.n_servers))


def mean_channel_gain(dist_m, config: ScenarioConfig):
    """Mean of |h|^2 at a given distance: 1 / (1 + (d/d0)^alpha)."""
    return 1.0 / (1.0 + (np.asarray(dist_m, dtype=float) / config.pathloss_d0_m) ** config.pathloss_exp)


def generate_channels(topology: Topology, config: ScenarioConfig, seed) -> ChannelRealization:
    """Draw Rayleigh-faded gains, independent across node pairs and RBs.

    |h|^2 is exponential with the distance-dependent mean from
    :func:`mean_channel_gain`; returned gains are normalized by the RB
    noise power.
    """
    rng = np.random.default_rng(seed)
    noise = config.noise_w

    def draw(dist):
        mean = mean_channel_gain(dist, config)
        h2 = rng.exponential(scale=mean[:, :, None],
                             size=(dist.shape[0], dist.shape[1], config.n_rbs))
        return h2 / noise

    g_helper = draw(topology.dist_ue_helper())
    g_server = draw(topology.dist_ue_server())
    return ChannelRealization(g_helper=g_helper, g_server=g_server)


# ---------------------------------------------------------------------------
# rates under power-domain multiplexing


def decoding_indicator(channels: ChannelRealization, n, m, k, l):
    """SIC decode-order bit for UE n's streams on RB l.

    0 when the helper link is at least as strong as the server link (the
    server stream is decoded first and the helper stream sees no
    interference), 1 otherwise.  A missing helper stream behaves like 0.
    """
    if m == DUMB_HELPER:
        return 0
    return 0 if channels.g_helper[n, m, l] >= channels.g_server[n, k, l] else 1


def rate_helper(p_h, p_s, channels, n, m, k, l, config: ScenarioConfig):
    """Achievable rate of the helper stream, bits/s."""
    o = decoding_indicator(channels, n, m, k, l)
    g = channels.g_helper[n, m, l]
    return config.bandwidth_hz * np.log2(1.0 + p_h * g / (o * p_s * g + 1.0))


def rate_server(p_h, p_s, channels, n, m, k, l, config: ScenarioConfig):
    """Achievable rate of the server stream, bits/s."""
    o = decoding_indicator(channels, n, m, k, l)
    g = channels.g_server[n, k, l]
    return config.bandwidth_hz * np.log2(1.0 + p_s * g / ((1 - o) * p_h * g + 1.0))


# ---------------------------------------------------------------------------
# EDT evaluation


def evaluate_edt(config: ScenarioConfig, tasks, channels, matching: Matching,
                 alloc: ContinuousAllocation, rel_tol=1e-6) -> EdtReport:
    """Score an allocation by replaying the timing and energy model.

    Completion delay per UE is the slowest of the local, helper and server
    branches; energy is local computation plus transmit energy of both
    streams.  Constraint families are checked on the raw numbers and
    reported as boolean flags with worst relative violations; the scores
    themselves are returned even when a flag fails.

    Parameters
    ----------
    tasks : sequence of TaskSpec, one per UE
    rel_tol : float
        Relative slack granted to every inequality before it is flagged.
    """
    n_ues = config.n_ues
    delay = np.zeros(n_ues)
    energy = np.zeros(n_ues)
    edt = np.zeros(n_ues)
    worst = {"eta_range": 0.0, "power_nonneg": 0.0, "power_budget": 0.0,
             "helper_energy": 0.0, "server_freq": 0.0, "delay_max": 0.0,
             "noma_timing": 0.0}

    assign_errs = matching.check(config)
    helper_energy = np.zeros(max(config.n_helpers, 1))
    server_freq = np.zeros(config.n_servers)

    for n in range(n_ues):
        task = tasks[n]
        m, k, l = matching.assign[n]
        th, ts = float(alloc.eta_h[n]), float(alloc.eta_s[n])
        ph, ps = float(alloc.p_h[n]), float(alloc.p_s[n])
        eta_l = 1.0 - th - ts

        worst["eta_range"] = max(worst["eta_range"], -th, -ts, -eta_l)
        worst["power_nonneg"] = max(worst["power_nonneg"], -ph, -ps)
        worst["power_budget"] = max(worst["power_budget"], (ph + ps) / config.pmax_w - 1.0)

        t_local = eta_l * task.cycles / config.ue_freq[n]
        e_local = eta_l * task.cycles * config.eff_capacitance * config.ue_freq[n] ** 2

        tau_h = tau_s = 0.0
        t_off_h = t_off_s = 0.0
        if th > 0.0 and m != DUMB_HELPER:
            r_h = rate_helper(ph, ps, channels, n, m, k, l, config)
            tau_h = th * task.data_bits / r_h if r_h > 0 else math.inf
            t_off_h = tau_h + th * task.cycles / config.helper_freq[m]
            helper_energy[m] += th * task.cycles * config.eff_capacitance * config.helper_freq[m] ** 2
        if ts > 0.0:
            r_s = rate_server(ph, ps, channels, n, m, k, l, config)
            tau_s = ts * task.data_bits / r_s if r_s > 0 else math.inf
            fs = float(alloc.f_s[n])
            t_off_s = tau_s + (ts * task.cycles / fs if fs > 0 else math.inf)
        server_freq[k] += float(alloc.f_s[n])

        if th > 0.0 and ts > 0.0:
            # both streams must share one transmission window
            gap = abs(tau_h - tau_s) / max(tau_h, tau_s, 1e-300)
            worst["noma_timing"] = max(worst["noma_timing"], gap)

        # energy of each stream over its own window
        e_tran = ph * tau_h + ps * tau_s
        delay[n] = max(t_local, t_off_h, t_off_s)
        energy[n] = e_local + e_tran
        edt[n] = task.weight_e * energy[n] + task.weight_t * delay[n]
        worst["delay_max"] = max(worst["delay_max"], delay[n] / task.t_max_s - 1.0)

    for m in range(config.n_helpers):
        worst["helper_energy"] = max(worst["helper_energy"],
                                     helper_energy[m] / config.helper_emax_j[m] - 1.0)
    for k in range(config.n_servers):
        worst["server_freq"] = max(worst["server_freq"],
                                   server_freq[k] / config.server_fmax[k] - 1.0)

    flags = {fam: v <= rel_tol for fam, v in worst.items()}
    flags["assignment"] = not assign_errs
    worst["assignment"] = 0.0 if not assign_errs else 1.0
    return EdtReport(delay=delay, energy=energy, edt=edt,
                     medt=float(edt.max()) if n_ues else 0.0,
                     sum_edt=float(edt.sum()), flags=flags, violation=worst)
