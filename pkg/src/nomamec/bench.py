"""Seeded Monte-Carlo experiment runner with CSV emission.

An experiment is a sweep over one axis (data size, helper count, energy
weight, or a fixed helper clock) crossed with a seed list.  Each trial
regenerates node clocks, topology and channels from independent
sub-streams of its seed, runs the requested schemes, and emits one row
per scheme (or per solver iteration for the convergence preset).
Aggregation lives in a separate summarize pass so raw rows stay replayable.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .matching import UtilityCache, count_matchings, exhaustive_search, fs_urhsm, \
    initial_matching
from .model import ScenarioConfig, TaskSpec, evaluate_edt, generate_channels, \
    generate_topology
from .patacra import solve_ao, solve_patacra
from .schemes import SchemeId, solve_scheme

SWEEP_AXES = ("none", "d_bits", "n_helpers", "weight_e", "helper_freq")

# solver-level comparisons that are not offloading schemes; they run on
# the greedy start matching so both sides see the same assignment
PSEUDO_SCHEMES = ("ipca", "ao", "fs_urhsm", "es_ipca")

SCHEME_IDS = {s.value: s for s in SchemeId}


@dataclass(frozen=True)
class ExperimentSpec:
    """Deterministic description of one sweep.

    ``schemes`` mixes real scheme ids with the solver-level pseudo
    entries.  ``weight_e`` is a scalar or one weight per UE.  When
    ``trace`` is set, scheme 'ipca' emits one row per solver iteration
    with the iteration index in the sweep column.
    """

    figure: str
    n_ues: int = 2
    n_helpers: int = 2
    n_servers: int = 2
    n_rbs: int = 2
    d_bits: float = 2e5
    weight_e: object = 0.5
    sweep_axis: str = "none"
    sweep_values: tuple = (None,)
    seeds: tuple = tuple(range(20))
    schemes: tuple = ("proposed_noma",)
    cycles_per_bit: float = 1e3
    t_max_s: float = 0.9
    helper_freq_fixed: float | None = None
    ue_freq_range: tuple = (2e9, 8e9)
    helper_freq_range: tuple = (15e9, 20e9)
    server_freq_range: tuple = (20e9, 25e9)
    helper_emax_range: tuple = (0.8, 1.0)
    trace: bool = False

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")
        if not self.sweep_values:
            raise ValueError("sweep values must be non-empty")
        for s in self.schemes:
            if s not in SCHEME_IDS and s not in PSEUDO_SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")


@dataclass
class ResultRow:
    """One (trial, scheme) outcome; all scalars so CSV round trips."""

    seed: int
    figure: str
    sweep: object
    scheme: str
    status: str
    n_ues: int
    n_helpers: int
    n_servers: int
    n_rbs: int
    d_bits: float
    weight_e: str
    medt: float
    min_edt: float
    max_energy: float
    max_delay: float
    iterations: int
    accepted_ops: int
    wall_ms: float


CSV_COLUMNS = [f.name for f in fields(ResultRow)]


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _weight_tag(weight_e, n_ues):
    ws = weights_per_ue(weight_e, n_ues)
    if len(set(ws)) == 1:
        return f"{ws[0]:.9g}"
    return "|".join(f"{w:.9g}" for w in ws)


def weights_per_ue(weight_e, n_ues):
    if np.isscalar(weight_e):
        return [float(weight_e)] * n_ues
    ws = [float(w) for w in weight_e]
    if len(ws) != n_ues:
        raise ValueError("per-UE weights must match the UE count")
    return ws


def build_trial(spec: ExperimentSpec, sweep_value, seed):
    """Instance for one (sweep point, seed): config, channels, tasks.

    Every node class draws clocks from its own sub-stream of the seed, so
    growing the helper count extends the helper draws without shifting
    UE or server clocks, topology, or fading.
    """
    s_ue, s_hf, s_he, s_srv, s_topo, s_chan = \
        np.random.SeedSequence(seed).generate_state(6)
    m = int(sweep_value) if spec.sweep_axis == "n_helpers" else spec.n_helpers
    helper_freq = tuple(np.random.default_rng(s_hf).uniform(*spec.helper_freq_range, m))
    fixed = sweep_value if spec.sweep_axis == "helper_freq" else spec.helper_freq_fixed
    if fixed is not None:
        helper_freq = (float(fixed),) * m
    config = ScenarioConfig(
        n_ues=spec.n_ues, n_helpers=m, n_servers=spec.n_servers, n_rbs=spec.n_rbs,
        ue_freq=tuple(np.random.default_rng(s_ue).uniform(*spec.ue_freq_range, spec.n_ues)),
        helper_freq=helper_freq,
        helper_emax_j=tuple(np.random.default_rng(s_he).uniform(*spec.helper_emax_range, m)),
        server_fmax=tuple(np.random.default_rng(s_srv).uniform(*spec.server_freq_range, spec.n_servers)),
        server_cap=(spec.n_ues,) * spec.n_servers)
    topology = generate_topology(config, s_topo)
    channels = generate_channels(topology, config, s_chan)
    d = float(sweep_value) if spec.sweep_axis == "d_bits" else spec.d_bits
    w = sweep_value if spec.sweep_axis == "weight_e" else spec.weight_e
    tasks = [TaskSpec(d, spec.cycles_per_bit, spec.t_max_s, w_n, 1.0 - w_n)
             for w_n in weights_per_ue(w, spec.n_ues)]
    return config, channels, tasks


def _row(spec, sweep_value, seed, config, scheme, **over):
    base = dict(seed=seed, figure=spec.figure,
                sweep="" if sweep_value is None else sweep_value,
                scheme=scheme, status="ok", n_ues=config.n_ues,
                n_helpers=config.n_helpers, n_servers=config.n_servers,
                n_rbs=config.n_rbs,
                d_bits=float(over.pop("d_bits")),
                weight_e=_weight_tag(over.pop("weight_tag"), config.n_ues),
                medt=math.inf, min_edt=math.inf, max_energy=math.inf,
                max_delay=math.inf, iterations=0, accepted_ops=0, wall_ms=0.0)
    base.update(over)
    return ResultRow(**base)


def _run_pseudo(name, spec, sweep_value, seed, config, channels, tasks):
    d_bits = tasks[0].data_bits
    w = tasks[0].weight_e if len({t.weight_e for t in tasks}) == 1 \
        else tuple(t.weight_e for t in tasks)
    common = dict(d_bits=d_bits, weight_tag=w)
    t0 = time.perf_counter()
    if name in ("ipca", "ao"):
        matching = initial_matching(config, channels, tasks).matching
        solve = solve_patacra if name == "ipca" else solve_ao
        sol = solve(matching, channels, tasks, config)
        wall = (time.perf_counter() - t0) * 1e3
        if not sol.usable:
            return [_row(spec, sweep_value, seed, config, name, status="failed",
                         wall_ms=wall, **common)]
        if spec.trace and name == "ipca":
            return [_row(spec, sweep_value, seed, config, name, sweep=r,
                         medt=phi, iterations=r, wall_ms=wall, **common)
                    for r, phi in enumerate(sol.phi_trace, start=1)]
        report = evaluate_edt(config, tasks, channels, matching, sol.alloc)
        return [_row(spec, sweep_value, seed, config, name, medt=sol.phi,
                     min_edt=float(report.edt.min()),
                     max_energy=float(report.energy.max()),
                     max_delay=float(report.delay.max()),
                     iterations=sol.iterations, wall_ms=wall, **common)]
    if name == "fs_urhsm":
        state, sol, trace = fs_urhsm(config, channels, tasks)
        wall = (time.perf_counter() - t0) * 1e3
        if not sol.usable:
            return [_row(spec, sweep_value, seed, config, name, status="failed",
                         wall_ms=wall, **common)]
        report = evaluate_edt(config, tasks, channels, state.matching, sol.alloc)
        return [_row(spec, sweep_value, seed, config, name, medt=sol.phi,
                     min_edt=float(report.edt.min()),
                     max_energy=float(report.energy.max()),
                     max_delay=float(report.delay.max()),
                     iterations=sol.iterations, accepted_ops=len(trace) - 1,
                     wall_ms=wall, **common)]
    if name == "es_ipca":
        cache = UtilityCache()
        matching, phi = exhaustive_search(config, channels, tasks, cache=cache)
        wall = (time.perf_counter() - t0) * 1e3
        return [_row(spec, sweep_value, seed, config, name, medt=phi,
                     iterations=cache.solves,
                     accepted_ops=count_matchings(config), wall_ms=wall, **common)]
    raise ValueError(f"unknown pseudo scheme {name!r}")


def _run_trial(args):
    """All rows of one (sweep value, seed) trial; never raises."""
    spec, sweep_value, seed = args
    rows = []
    try:
        config, channels, tasks = build_trial(spec, sweep_value, seed)
    except Exception as err:  # noqa: BLE001 - crash isolation by contract
        fake = ScenarioConfig(
            n_ues=spec.n_ues, n_helpers=spec.n_helpers, n_servers=spec.n_servers,
            n_rbs=max(spec.n_rbs, spec.n_ues),
            ue_freq=(1e9,) * spec.n_ues, helper_freq=(1e9,) * spec.n_helpers,
            helper_emax_j=(1.0,) * spec.n_helpers,
            server_fmax=(1e9,) * spec.n_servers,
            server_cap=(spec.n_ues,) * spec.n_servers)
        return [_row(spec, sweep_value, seed, fake, s,
                     status=f"error:{type(err).__name__}",
                     d_bits=spec.d_bits, weight_tag=spec.weight_e)
                for s in spec.schemes]
    d_bits = tasks[0].data_bits
    w = tasks[0].weight_e if len({t.weight_e for t in tasks}) == 1 \
        else tuple(t.weight_e for t in tasks)
    for name in spec.schemes:
        try:
            if name in PSEUDO_SCHEMES:
                rows.extend(_run_pseudo(name, spec, sweep_value, seed,
                                        config, channels, tasks))
                continue
            res = solve_scheme(SCHEME_IDS[name], config, channels, tasks)
            if not res.ok:
                rows.append(_row(spec, sweep_value, seed, config, name,
                                 status=res.status, wall_ms=res.wall_ms,
                                 d_bits=d_bits, weight_tag=w))
                continue
            rows.append(_row(spec, sweep_value, seed, config, name,
                             medt=res.medt, min_edt=res.min_edt,
                             max_energy=float(res.energy.max()),
                             max_delay=float(res.delay.max()),
                             iterations=res.iterations,
                             accepted_ops=res.accepted_ops, wall_ms=res.wall_ms,
                             d_bits=d_bits, weight_tag=w))
        except Exception as err:  # noqa: BLE001 - crash isolation by contract
            rows.append(_row(spec, sweep_value, seed, config, name,
                             status=f"error:{type(err).__name__}",
                             d_bits=d_bits, weight_tag=w))
    return rows


def run_experiment(spec, workers=1, timing=True):
    """Expand, run, and collect every trial of one spec (or a list).

    Trial order is deterministic (sweep-major, then seeds, then the
    scheme list), whatever the worker count.  With ``timing=False`` the
    wall-clock column is zeroed, the one field a rerun cannot reproduce,
    so the emitted CSV is byte-identical across runs.
    """
    specs = [spec] if isinstance(spec, ExperimentSpec) else list(spec)
    trials = [(s, v, seed) for s in specs for v in s.sweep_values
              for seed in s.seeds]
    rows = []
    if workers <= 1:
        for trial in trials:
            rows.extend(_run_trial(trial))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_run_trial, trials):
                rows.extend(chunk)
    if not timing:
        for row in rows:
            row.wall_ms = 0.0
    return rows


# ---------------------------------------------------------------------------
# spec serialization


def spec_to_json(spec: ExperimentSpec) -> str:
    return json.dumps(asdict(spec), indent=2)


def spec_from_json(text: str) -> ExperimentSpec:
    data = json.loads(text)
    known = {f.name for f in fields(ExperimentSpec)}
    extra = set(data) - known
    if extra:
        raise ValueError(f"unknown experiment fields {sorted(extra)}")
    for key, value in data.items():
        if isinstance(value, list):
            data[key] = tuple(tuple(v) if isinstance(v, list) else v
                              for v in value)
    return ExperimentSpec(**data)


# ---------------------------------------------------------------------------
# CSV io


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_rows(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_rows(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError("unexpected CSV header")
        for rec in reader:
            out.append(ResultRow(
                seed=int(rec["seed"]), figure=rec["figure"],
                sweep=_parse_sweep(rec["sweep"]), scheme=rec["scheme"],
                status=rec["status"], n_ues=int(rec["n_ues"]),
                n_helpers=int(rec["n_helpers"]), n_servers=int(rec["n_servers"]),
                n_rbs=int(rec["n_rbs"]), d_bits=float(rec["d_bits"]),
                weight_e=rec["weight_e"], medt=float(rec["medt"]),
                min_edt=float(rec["min_edt"]), max_energy=float(rec["max_energy"]),
                max_delay=float(rec["max_delay"]), iterations=int(rec["iterations"]),
                accepted_ops=int(rec["accepted_ops"]), wall_ms=float(rec["wall_ms"])))
    return out


def _parse_sweep(text):
    if text == "":
        return ""
    try:
        return float(text)
    except ValueError:
        return text


# ---------------------------------------------------------------------------
# aggregation


GAP_PAIRS = {  # figure -> (compared scheme, reference scheme)
    "fig3": ("ao", "ipca"),
    "fig4": ("fs_urhsm", "es_ipca"),
}


def _cell_key(row: ResultRow):
    return (row.sweep, row.scheme, row.n_ues, row.n_helpers, row.n_servers,
            row.n_rbs, row.d_bits, row.weight_e)


def summarize(rows):
    """Per-cell mean/std/count of mEDT plus figure-defined gaps.

    A cell is one point of one curve: sweep value, scheme, and the
    instance-shaping columns.  Gap cells divide the per-seed difference
    against the reference scheme by the reference value, then average.
    """
    if not rows:
        return []
    figures = {r.figure for r in rows}
    if len(figures) > 1:
        raise ValueError(f"rows mix figure tags {sorted(figures)}")
    figure = figures.pop()

    cells = {}
    for row in rows:
        if row.status != "ok":
            continue
        cells.setdefault(_cell_key(row), []).append(row)

    by_seed = {}
    for row in rows:
        if row.status == "ok":
            by_seed[(row.scheme, row.sweep, row.d_bits, row.weight_e,
                     row.n_helpers, row.n_rbs, row.seed)] = row.medt

    gap_pair = GAP_PAIRS.get(figure)
    out = []
    for key in sorted(cells, key=lambda k: tuple(str(p) for p in k)):
        sweep, scheme, n, m, k_srv, l, d, w = key
        vals = np.array([r.medt for r in cells[key]])
        gap = ""
        if gap_pair and scheme == gap_pair[0]:
            diffs = []
            for r in cells[key]:
                ref = by_seed.get((gap_pair[1], r.sweep, r.d_bits, r.weight_e,
                                   r.n_helpers, r.n_rbs, r.seed))
                if ref is not None and ref > 0:
                    diffs.append((r.medt - ref) / ref)
            if diffs:
                gap = float(np.mean(diffs))
        out.append({"figure": figure, "sweep": sweep, "scheme": scheme,
                    "n_ues": n, "n_helpers": m, "n_servers": k_srv, "n_rbs": l,
                    "d_bits": d, "weight_e": w,
                    "mean_medt": float(vals.mean()), "std_medt": float(vals.std()),
                    "count": int(vals.size), "mean_gap": gap})
    return out


SUMMARY_COLUMNS = ["figure", "sweep", "scheme", "n_ues", "n_helpers", "n_servers",
                   "n_rbs", "d_bits", "weight_e", "mean_medt", "std_medt",
                   "count", "mean_gap"]


def summary_to_csv(table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SUMMARY_COLUMNS)
    for rec in table:
        writer.writerow([_fmt(rec[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def write_summary(table, path):
    with open(path, "w", newline="") as fh:
        fh.write(summary_to_csv(table))


# ---------------------------------------------------------------------------
# figure presets


COMPARED_SCHEMES = ("proposed_noma", "fdma_no_helpers", "noma_no_helpers",
                    "tdma_with_helpers", "fdma_with_helpers")


def preset_specs(name, seeds=None):
    """Experiment specs for one figure tag; ``seeds`` overrides the
    default 20 per point."""
    seeds = tuple(seeds) if seeds is not None else tuple(range(20))
    if name == "fig2":
        return [ExperimentSpec(figure="fig2", d_bits=d, weight_e=w, seeds=seeds,
                               schemes=("ipca",), trace=True)
                for d in (1e5, 2e5) for w in (0.3, 0.6)]
    if name == "fig3":
        return [ExperimentSpec(figure="fig3", d_bits=d, seeds=seeds,
                               schemes=("ipca", "ao"), sweep_axis="helper_freq",
                               sweep_values=(10e9, 12.5e9, 15e9, 17.5e9, 20e9))
                for d in (1e5, 2e5)]
    if name == "fig4":
        return [ExperimentSpec(figure="fig4", n_servers=1, n_helpers=m, n_rbs=l,
                               weight_e=(0.6, 0.3), seeds=seeds,
                               schemes=("fs_urhsm", "es_ipca"),
                               sweep_axis="d_bits", sweep_values=(1e5, 2e5, 5e5))
                for m, l in ((2, 2), (5, 3))]
    if name == "fig5":
        return [ExperimentSpec(figure="fig5", d_bits=1e5, seeds=seeds,
                               schemes=COMPARED_SCHEMES, sweep_axis="weight_e",
                               sweep_values=tuple(round(w, 1) for w in
                                                  np.linspace(0.1, 0.9, 9)))]
    if name == "fig6":
        return [ExperimentSpec(figure="fig6", n_ues=4, n_helpers=4, n_servers=4,
                               n_rbs=4, d_bits=1e6, seeds=seeds,
                               schemes=("proposed_noma", "sum_edt"))]
    if name == "fig7":
        return [ExperimentSpec(figure="fig7", d_bits=5e5, seeds=seeds,
                               schemes=COMPARED_SCHEMES, sweep_axis="n_helpers",
                               sweep_values=(1, 2, 4, 6, 8, 10))]
    if name == "fig8":
        return [ExperimentSpec(figure="fig8", seeds=seeds,
                               schemes=COMPARED_SCHEMES, sweep_axis="d_bits",
                               sweep_values=(1e5, 2.5e5, 5e5, 7.5e5, 1e6))]
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8")
