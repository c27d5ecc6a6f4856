"""Seeded experiment runner: trials, minimal-m_phi search, sweeps and CSV output.

Each trial owns the seed ``base_seed ^ trial_index``; model, plan and
noise streams are derived from it (the plan and noise also from m_phi), so
records do not depend on thread scheduling.
"""

import configparser
import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .analysis import alpha_origin_approx, epsilon_ceiling
from .errors import ConfigError, NonConvergence, SearchExhausted
from .estimator import build_estimate, half_width, query_radius, uniform_error
from .model import NoiseModel, Oracle, gradient_matrix, random_model
from .recovery import (RankProjected, RecoveryConfig, NuclearProx, SparseLowRank,
                       extract_subspace, recover, subspace_alignment)
from .sampling import DENSE, SUBSET, build_plan, measure, operator_for

SEED_ENV = "RIDGELIFT_SEED"
SWEEP_VARS = ("d", "k", "sigma_scale")

_TAG_MODEL, _TAG_PLAN, _TAG_NOISE = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    link: str = "logistic"
    sweep: str = "d"
    values: tuple = (200,)
    d: int = 200
    k: int = 1
    m_x: int = 20
    m_phi: int = 0
    epsilon: str = "fixed:1e-3"
    mode: str = DENSE
    fill: float = 0.9
    planted: bool = False
    sigma_scale: float = 0.0
    sigma_power: float = 0.0
    sparse_prob: float = 0.0
    sparse_sigma: float = 0.0
    criterion: str = "auto"
    threshold: float = 0.99
    trials: int = 5
    seed: int = 0
    solver: str = "auto"
    max_iter: int = 500
    tol: float = 1e-5
    sparsity: float = 0.0
    lattice_step: int = 0
    start: int = 0
    cap: int = 0
    estimate: bool = False
    h: float = 0.05
    probes: int = 1000
    alpha: float = 0.0
    c2: float = 0.0
    c0: float = 16.0
    rho: float = 0.5
    kappa: float = 0.2
    record_timing: bool = False
    svg: bool = False
    figure: str = ""

    def __post_init__(self):
        if self.sweep not in SWEEP_VARS:
            raise ConfigError(f"sweep variable must be one of {SWEEP_VARS}")
        vals = tuple(self.values)
        if not vals:
            raise ConfigError("sweep range is empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.mode not in (DENSE, SUBSET):
            raise ConfigError(f"unknown sampling mode {self.mode!r}")
        if self.criterion not in ("auto", "abs_inner", "alignment"):
            raise ConfigError(f"unknown criterion {self.criterion!r}")
        if self.solver not in ("auto", "rank", "nuclear", "sparse"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        parse_epsilon(self.epsilon)
        object.__setattr__(self, "values", vals)

    def point(self, value):
        """Fixed parameters with the sweep variable set to ``value``."""
        if self.sweep == "sigma_scale":
            return replace(self, sigma_scale=float(value))
        return replace(self, **{self.sweep: int(value)})

    def sigma(self):
        return self.sigma_scale / self.d ** self.sigma_power if self.sigma_scale else 0.0

    def criterion_name(self):
        if self.criterion != "auto":
            return self.criterion
        return "abs_inner" if self.k == 1 else "alignment"

    def step(self):
        return self.lattice_step or max(8, self.d // 50)

    def fixed_m_phi(self):
        """m_phi for single runs; defaults to 2 k (d + m_x)."""
        return self.m_phi or 2 * self.k * (self.d + self.m_x)

    def search_cap(self):
        if self.cap:
            return self.cap
        return self.m_x * self.d if self.mode == DENSE else 4 * self.d


PRESETS = {
    "fig1": dict(name="fig1", link="logistic", sweep="d", values=(200, 400, 800), k=1,
                 m_x=20, epsilon="fixed:1e-3", threshold=0.99, trials=5, figure="fig1"),
    "fig2": dict(name="fig2", link="sum_gaussians", sweep="k", values=(4, 6, 8), d=60, k=4,
                 m_x=60, epsilon="fixed:1e-3", threshold=0.99, trials=5, figure="fig2"),
    "fig3": dict(name="fig3", link="quadratic", sweep="d", values=(30, 60), d=30, k=3, m_x=30,
                 epsilon="fixed:0.1", sigma_scale=0.01, sigma_power=1.5, threshold=0.99,
                 trials=5, figure="fig3"),
    "fig4": dict(name="fig4", link="quadratic", sweep="d", values=(30, 60), d=30, k=3, m_x=30,
                 epsilon="fixed:0.1", mode=SUBSET, fill=0.9, sparse_prob=0.01,
                 sparse_sigma=0.01, threshold=0.95, trials=5, figure="fig4"),
    "planted": dict(name="planted", link="sum_gaussians", sweep="d", values=(40,), d=40, k=2,
                    m_x=20, epsilon="fixed:1e-3", planted=True, threshold=0.99, trials=5),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


def parse_epsilon(spec):
    """``fixed:<value>`` or ``ceiling:<eta>``; a bare number means fixed."""
    text = str(spec).strip()
    kind, _, val = text.partition(":")
    if not val:
        kind, val = "fixed", kind
    try:
        num = float(val)
    except ValueError:
        raise ConfigError(f"bad epsilon policy {spec!r}") from None
    if kind == "fixed" and num > 0:
        return "fixed", num
    if kind == "ceiling" and 0 < num < 1:
        return "ceiling", num
    raise ConfigError(f"bad epsilon policy {spec!r}")


# config files ---------------------------------------------------------------

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(name, text, typ):
    try:
        if typ is bool:
            return _BOOL[text.strip().lower()]
        if typ is tuple:
            return tuple(float(v) if "." in v or "e" in v.lower() else int(v)
                         for v in text.replace(",", " ").split())
        return typ(text.strip())
    except (KeyError, ValueError):
        raise ConfigError(f"cannot parse {name} = {text!r}") from None


_FIELD_TYPES = {f.name: (type(f.default) if f.default is not None else str)
                for f in fields(ExperimentConfig)}


def read_config(path, seed=None, env=os.environ):
    """Load an INI file into an ExperimentConfig plus its raw sections.

    Every section's keys are merged into one namespace; ``preset`` selects
    the starting defaults. Seed precedence: file < RIDGELIFT_SEED < ``seed``.
    Keys in the ``[bounds]`` section that are not experiment fields are
    returned untouched for the bounds and plan commands.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    flat, extra = {}, {}
    for section in parser.sections():
        for key, val in parser.items(section):
            if key == "preset" or key in _FIELD_TYPES:
                flat[key] = val
            elif section in ("bounds", "plan"):
                extra[key] = val
            else:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    base = {}
    if "preset" in flat:
        name = flat.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
        base = dict(PRESETS[name])
    for key, val in flat.items():
        base[key] = _coerce(key, val, _FIELD_TYPES[key])
    if env.get(SEED_ENV):
        base["seed"] = _coerce(SEED_ENV, env[SEED_ENV], int)
    if seed is not None:
        base["seed"] = int(seed)
    try:
        return ExperimentConfig(**base), extra
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# trials ---------------------------------------------------------------------

@dataclass
class TrialRecord:
    seed: int
    d: int
    k: int
    m_x: int
    m_phi: int
    epsilon: float
    alignment: float
    oracle_calls: int
    iterations: int
    wall_time: float
    criterion: float = math.nan
    converged: bool = True
    sigma: float = 0.0
    uniform_error: float = math.nan


def trial_seed(base_seed, trial_index):
    return int(base_seed) ^ int(trial_index)


def _stream(*words):
    """A 64-bit seed derived from integer words."""
    lo, hi = np.random.SeedSequence([int(w) for w in words]).generate_state(2)
    return int(lo) | (int(hi) << 32)


def choose_solver(cfg):
    name = cfg.solver
    if name == "auto":
        name = "sparse" if cfg.mode == SUBSET else "rank"
    if name == "rank":
        return RankProjected(max_iter=cfg.max_iter, tol=cfg.tol)
    if name == "nuclear":
        return NuclearProx(max_iter=max(cfg.max_iter, 1), tol=cfg.tol)
    budget = cfg.sparsity or max(2 * cfg.sparse_prob, 1e-3)
    return SparseLowRank(sparsity=budget, max_iter=cfg.max_iter, tol=cfg.tol)


def trial_epsilon(cfg, model, m_phi):
    kind, val = parse_epsilon(cfg.epsilon)
    if kind == "fixed":
        return val
    alpha = cfg.alpha or alpha_origin_approx(model).alpha_hat
    c2 = cfg.c2 or model.c2(1.0)
    return epsilon_ceiling(c2, model.k, model.d, cfg.m_x, m_phi, alpha, cfg.rho, cfg.kappa,
                           cfg.c0, val)


def trial_model(cfg, seed):
    model_seed = _stream(seed, _TAG_MODEL, cfg.d, cfg.k)
    return random_model(cfg.link, cfg.d, cfg.k, model_seed)


def run_trial(cfg, m_phi, trial_index):
    """One pass of the pipeline at a fixed m_phi; returns a TrialRecord."""
    t0 = time.perf_counter()
    seed = trial_seed(cfg.seed, trial_index)
    model = trial_model(cfg, seed)
    eps = trial_epsilon(cfg, model, m_phi)
    plan_seed = _stream(seed, _TAG_PLAN, m_phi)
    plan = build_plan(cfg.d, cfg.k, cfg.m_x, m_phi, eps, cfg.mode, plan_seed, cfg.fill)
    op = operator_for(plan)
    sigma = cfg.sigma()
    if cfg.planted:
        y, calls = op.apply(gradient_matrix(model, plan.centers)), 0
    else:
        noise = NoiseModel(sigma, cfg.sparse_prob, cfg.sparse_sigma,
                           _stream(seed, _TAG_NOISE, m_phi))
        ms = measure(model, plan, noise)
        y, calls = ms.y, ms.oracle_calls
    converged = True
    try:
        est = recover(y, op, RecoveryConfig(cfg.k, choose_solver(cfg)))
    except NonConvergence as exc:
        est, converged = exc.estimate, False
    try:
        sub = extract_subspace(est, cfg.k)
        align = subspace_alignment(model.A, sub)
    except Exception:
        sub, align = None, 0.0
    align = min(max(align, 0.0), 1.0)
    crit = math.sqrt(align) if cfg.criterion_name() == "abs_inner" else align
    u_err = math.nan
    if cfg.estimate and sub is not None:
        w = half_width(plan.enlarged_radius)
        grid_oracle = Oracle(model, radius=query_radius(cfg.k, cfg.h, w))
        fe = build_estimate(grid_oracle, sub, cfg.h, eps_bar=plan.enlarged_radius)
        calls += fe.oracle_calls
        u_err = uniform_error(fe, model, cfg.probes, seed).sup_error
    wall = time.perf_counter() - t0
    return TrialRecord(seed, cfg.d, cfg.k, cfg.m_x, m_phi, eps, align, calls,
                       est.iterations, wall, crit, converged, sigma, u_err)


@dataclass
class Probe:
    m_phi: int
    mean_criterion: float
    passed: bool
    trials_run: int


def evaluate_probe(cfg, m_phi, threads=1):
    """Run trials in index order until the mean criterion is decided.

    Stops early once the threshold is unreachable (or guaranteed) given the
    trials left, counting each remaining trial as 1 (or 0). Trials finished
    past the deciding one are discarded, so the output does not depend on
    ``threads``.
    """
    n, need = cfg.trials, cfg.threshold * cfg.trials
    records, total = [], 0.0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        i = 0
        while i < n:
            chunk = range(i, min(n, i + max(threads, 1)))
            if pool is None:
                batch = [run_trial(cfg, m_phi, t) for t in chunk]
            else:
                batch = list(pool.map(lambda t: run_trial(cfg, m_phi, t), chunk))
            decided = False
            for rec in batch:
                records.append(rec)
                total += rec.criterion
                left = n - len(records)
                if total + left < need or total >= need:
                    decided = True
                    break
            if decided:
                break
            i += len(batch)
    finally:
        if pool is not None:
            pool.shutdown()
    passed = total >= need
    return Probe(m_phi, total / len(records), passed, len(records)), records


@dataclass
class SearchResult:
    m_phi_star: int
    probes: list
    records: list
    mean_criterion: float


def find_min_mphi(cfg, threads=1, on_probe=None):
    """Smallest lattice m_phi whose trial-mean criterion passes.

    Doubling from the start value until a pass, then bisection on the
    lattice between the last failure and the first pass. Every probe is
    recorded; ``on_probe(probe, records)`` is called after each.
    """
    step = cfg.step()
    cap = cfg.search_cap()
    lo_j = 0
    j = max(1, -(-(cfg.start or step) // step))
    probes, records, cache = [], [], {}

    def run(jj):
        if jj not in cache:
            probe, recs = evaluate_probe(cfg, jj * step, threads)
            probes.append(probe)
            records.extend(recs)
            cache[jj] = probe
            if on_probe is not None:
                on_probe(probe, recs)
        return cache[jj]

    while True:
        if j * step > cap:
            raise SearchExhausted(cap, tuple(probes))
        if run(j).passed:
            break
        lo_j, j = j, j * 2
    hi_j = j
    while hi_j - lo_j > 1:
        mid = (lo_j + hi_j) // 2
        if run(mid).passed:
            hi_j = mid
        else:
            lo_j = mid
    best = cache[hi_j]
    return SearchResult(hi_j * step, probes, records, best.mean_criterion)


# sweeps and output ----------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trial_columns(record_timing=False):
    cols = [f.name for f in fields(TrialRecord)]
    if not record_timing:
        cols.remove("wall_time")
    return ["point"] + cols


class CsvSink:
    """Single serialized writer for trial rows; flushes after every probe."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = columns
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(columns)

    def write(self, row):
        self._w.writerow([_cell(row[c]) for c in self.columns])

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()


@dataclass
class PointSummary:
    value: object
    m_phi_star: int
    ratio: float
    mean_criterion: float
    n_probes: int
    status: str = "ok"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    points: list = field(default_factory=list)
    records: list = field(default_factory=list)


FIGURE_AXES = {
    "fig1": ("d", "m_phi_over_d"),
    "fig2": ("k", "m_phi"),
    "fig3": ("d", "m_phi"),
    "fig4": ("d", "m_phi"),
}


def _fig_rows(cfg, points):
    x_name, y_name = FIGURE_AXES.get(cfg.figure, (cfg.sweep, "m_phi"))
    rows = []
    for p in points:
        if p.status != "ok":
            continue
        y = p.ratio if y_name == "m_phi_over_d" else p.m_phi_star
        rows.append((p.value, y))
    return (x_name, y_name), rows


def _write_svg(path, header, rows, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-")
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_experiment(cfg, out=None, threads=1):
    """Run the minimal-m_phi search at every sweep value.

    Writes ``trials.csv`` (every trial of every probe), ``summary.csv`` and
    the figure data file into ``out`` when given. Partial results are
    flushed before a SearchExhausted propagates.
    """
    result = ExperimentResult(cfg)
    sink = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        sink = CsvSink(out / "trials.csv", trial_columns(cfg.record_timing))
    try:
        for value in cfg.values:
            pcfg = cfg.point(value)

            def on_probe(probe, recs, value=value):
                if sink is not None:
                    for r in recs:
                        sink.write({"point": value, **asdict(r)})
                    sink.flush()

            try:
                res = find_min_mphi(pcfg, threads, on_probe)
            except SearchExhausted:
                result.points.append(PointSummary(value, 0, math.nan, math.nan, 0, "exhausted"))
                raise
            result.records.extend(res.records)
            result.points.append(PointSummary(value, res.m_phi_star, res.m_phi_star / pcfg.d,
                                              res.mean_criterion, len(res.probes)))
    finally:
        if sink is not None:
            sink.close()
            write_summary(cfg, result, out)
    return result


def write_summary(cfg, result, out):
    out = Path(out)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([cfg.sweep, "m_phi_star", "m_phi_over_d", "mean_criterion", "probes",
                    "status"])
        for p in result.points:
            w.writerow([_cell(p.value), p.m_phi_star, _cell(float(p.ratio)),
                        _cell(float(p.mean_criterion)), p.n_probes, p.status])
    header, rows = _fig_rows(cfg, result.points)
    name = cfg.figure or cfg.name
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in rows:
            w.writerow([_cell(x), _cell(y)])
    if cfg.svg and rows:
        _write_svg(out / f"{name}.svg", header, rows, name)


# single run -------------------------------------------------------------------

def simulate(cfg, m_phi, trial_index=0):
    """One full pipeline run (recovery plus function estimate) at a fixed m_phi."""
    return run_trial(replace(cfg, estimate=True), m_phi, trial_index)
