import numpy as np

from nomamec import model
from nomamec.model import DUMB_HELPER, Matching, ScenarioConfig, TaskSpec


def build_config(n_ues=2, n_helpers=2, n_servers=2, n_rbs=2, seed=0, **over):
    """Scenario whose per-node clocks are drawn from the usual ranges."""
    rng = np.random.default_rng(seed)
    base = dict(
        n_ues=n_ues, n_helpers=n_helpers, n_servers=n_servers, n_rbs=n_rbs,
        ue_freq=tuple(rng.uniform(2e9, 8e9, n_ues)),
        helper_freq=tuple(rng.uniform(15e9, 20e9, n_helpers)),
        helper_emax_j=tuple(rng.uniform(0.8, 1.0, n_helpers)),
        server_fmax=tuple(rng.uniform(20e9, 25e9, n_servers)),
        server_cap=(n_ues,) * n_servers,
    )
    base.update(over)
    return ScenarioConfig(**base)


def build_instance(seed, d_bits=2e5, weight_e=0.5, **cfg_over):
    """Config, channels and homogeneous tasks for one seeded draw."""
    cfg = build_config(seed=seed, **cfg_over)
    topo = model.generate_topology(cfg, seed)
    channels = model.generate_channels(topo, cfg, seed + 1000)
    tasks = [TaskSpec(d_bits, 1e3, 0.9, weight_e, 1.0 - weight_e)
             for _ in range(cfg.n_ues)]
    return cfg, channels, tasks


def chain_matching(cfg):
    """UE i -> helper i (dumb once helpers run out), server i mod K, RB i."""
    assign = []
    for i in range(cfg.n_ues):
        m = i if i < cfg.n_helpers else DUMB_HELPER
        assign.append((m, i % cfg.n_servers, i))
    return Matching(tuple(assign))
