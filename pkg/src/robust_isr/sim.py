"""Episode runner for the three planners, episode logs and seeded campaigns."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._validation import ConfigurationError, ConvergenceError, check_int, check_scalar
from .belief import BeliefState, CredibleSets
from .graph_env import TopologySpec, build_topology, largest_component_root, reachable_nodes
from .planner import PlannerKind, PlanningProblem, RobustPlanner
from .reward import (
    ExposureState,
    NoveltyMap,
    RewardConfig,
    move_reward,
    realized_sense_reward,
    stage_table,
    update_exposure,
)
from .threat_models import resolve_prototypes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """One episode's configuration.

    ``seed`` is the master seed and ``episode`` the index within a campaign;
    together they fix the graph, the threat layout and every sample drawn.
    ``start_node`` is a node id or ``"auto"`` (lowest node of the largest
    connected component).
    """

    topology: TopologySpec = field(default_factory=lambda: TopologySpec("grid", rows=3, cols=4))
    prototypes: str = "exp1"
    reward: RewardConfig = field(default_factory=RewardConfig)
    planner: str = "adaptive"
    horizon: int = 2000
    replan_period: int = 1
    rho_lock: float = 0.95
    eps_prune: float = 0.02
    seed: int = 0
    episode: int = 0
    start_node: int | str = 0
    tol: float = 1e-6
    max_iter: int = 10_000
    warm_start: bool = False

    def __post_init__(self):
        check_int(self.horizon, "horizon", min_value=1)
        check_int(self.replan_period, "replan_period", min_value=1)
        check_int(self.seed, "seed", min_value=0)
        check_int(self.episode, "episode", min_value=0)
        check_int(self.max_iter, "max_iter", min_value=1)
        check_scalar(self.tol, "tol", low=0.0, include_low=False)
        try:
            PlannerKind(self.planner)
        except ValueError:
            raise ConfigurationError(
                f"unknown planner {self.planner!r}; expected adaptive, static or nominal",
                key="planner",
            ) from None
        check_scalar(self.rho_lock, "rho_lock", 0.0, 1.0, include_low=False)
        check_scalar(self.eps_prune, "eps_prune", 0.0, 1.0, include_low=False)
        if not self.eps_prune < self.rho_lock:
            raise ConfigurationError("must be smaller than rho_lock", key="eps_prune")
        if self.start_node != "auto":
            check_int(self.start_node, "start_node", min_value=0)
            if self.start_node >= self.topology.size:
                raise ConfigurationError(
                    f"node {self.start_node} not in a graph of {self.topology.size} nodes",
                    key="start_node",
                )

    def replace(self, **changes):
        return replace(self, **changes)

    def graph_seed(self):
        return int(np.random.SeedSequence([self.topology.seed, self.seed, self.episode]).generate_state(1)[0])

    def sim_stream(self):
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.episode, 1]))


COLUMNS = (
    "step",
    "node",
    "action",
    "observation",
    "exposure",
    "sense_reward",
    "move_reward",
    "mean_set_size",
    "unresolved",
    "cum_exposures",
    "cum_observation",
    "cum_total",
    "target",
    "vi_iterations",
)
_INT_COLUMNS = {"step", "node", "exposure", "unresolved", "cum_exposures", "target", "vi_iterations"}


@dataclass
class EpisodeLog:
    """Per-step records of one episode, held column-wise.

    ``unresolved`` counts reachable nodes whose credible set is not a
    singleton (``-1`` for the nominal planner, which keeps no sets).
    """

    columns: dict
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.columns["step"])

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def total_observation(self):
        return float(self.columns["cum_observation"][-1]) if len(self) else 0.0

    @property
    def total_exposures(self):
        return int(self.columns["cum_exposures"][-1]) if len(self) else 0

    @property
    def total_reward(self):
        return float(self.columns["cum_total"][-1]) if len(self) else 0.0

    def to_csv(self, path=None):
        buf = io.StringIO()
        if self.meta:
            buf.write("# " + " ".join(f"{k}={v}" for k, v in self.meta.items()) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        cols = [self.columns[c] for c in COLUMNS]
        for row in zip(*cols):
            writer.writerow([_fmt(x) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        meta = {}
        with open(path) as fh:
            lines = fh.read().splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
            elif line:
                body.append(line)
        reader = csv.reader(body)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected episode columns {header}")
        rows = list(reader)
        columns = {}
        for j, name in enumerate(COLUMNS):
            raw = [r[j] for r in rows]
            if name == "action":
                columns[name] = np.array(raw, dtype=object)
            elif name in _INT_COLUMNS:
                columns[name] = np.array([int(x) for x in raw], dtype=np.int64)
            else:
                columns[name] = np.array([float(x) for x in raw])
        return cls(columns, meta)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def convergence_step(log):
    """First step after which every reachable credible set is a singleton, else None."""
    unresolved = np.asarray(log["unresolved"])
    hits = np.flatnonzero(unresolved == 0)
    return int(log["step"][hits[0]]) if hits.size else None


def run_episode(cfg, protos=None):
    """Run one episode: replan every ``replan_period`` steps, then sense and move."""
    protos = protos if protos is not None else resolve_prototypes(cfg.prototypes)
    kind = PlannerKind(cfg.planner)
    rcfg = cfg.reward
    if len(rcfg.c_sense) != protos.n_actions:
        raise ConfigurationError(
            f"{len(rcfg.c_sense)} sensing costs for {protos.n_actions} actions", key="c_sense"
        )
    graph_seed = cfg.graph_seed()
    env = build_topology(cfg.topology.replace(seed=graph_seed), n_types=protos.n_types)
    start = largest_component_root(env) if cfg.start_node == "auto" else cfg.start_node
    reachable = np.array(sorted(reachable_nodes(env, start)))
    rng = cfg.sim_stream()

    table = stage_table(protos, rcfg)
    expected_obs = protos.expected_observation_table()
    c_sense = np.asarray(rcfg.c_sense)
    actions = protos.actions
    n_types = protos.n_types

    beliefs = BeliefState(env.n_nodes, n_types)
    sets = CredibleSets(env.n_nodes, n_types)
    exposure = ExposureState()
    novelty = NoveltyMap.zeros(env.n_nodes)
    planner = RobustPlanner(kind.value, tol=cfg.tol, max_iter=cfg.max_iter, warm_start=cfg.warm_start)

    T = cfg.horizon
    cols = {c: np.zeros(T, dtype=np.int64 if c in _INT_COLUMNS else float) for c in COLUMNS}
    cols["action"] = np.empty(T, dtype=object)
    cum_obs = cum_total = 0.0
    v = start
    for t in range(T):
        n_iter = 0
        if t % cfg.replan_period == 0:
            problem = PlanningProblem(
                env,
                table,
                rcfg.c_sense,
                actions,
                rcfg,
                novelty.values,
                members=sets.members if kind is PlannerKind.ADAPTIVE else None,
                theta_hat=beliefs.map_types() if kind is PlannerKind.NOMINAL else None,
            )
            try:
                planner.fit(problem)
            except ConvergenceError as exc:
                exc.step = t
                raise
            n_iter = planner.n_iter_
        policy = planner.policy_
        ai = int(policy.sense[v])
        a = actions[ai]
        proto = protos[env.threat[v]]
        o = float(proto.observation[a].sample(rng))
        z = float(proto.exposure[a].sample(rng))
        eta = int(z > rcfg.tau_eta)

        beliefs.update(v, a, o, protos)
        obs_term = o if rcfg.obs_reward == "sample" else expected_obs[env.threat[v] - 1, ai]
        r_sense = realized_sense_reward(obs_term, eta, exposure, novelty.values[v], c_sense[ai], rcfg)
        u = int(policy.move[v])
        r_move = move_reward(exposure, novelty.values[u], rcfg)

        exposure = update_exposure(exposure, eta, rcfg.alpha)
        novelty.t_last[v] = t
        novelty.values = rcfg.beta * novelty.values + (1.0 - rcfg.beta) * (t - novelty.t_last)
        if kind is PlannerKind.ADAPTIVE:
            sets.shrink(v, beliefs.b[v], cfg.rho_lock, cfg.eps_prune)

        cum_obs += obs_term
        cum_total += r_sense + r_move
        cols["step"][t] = t
        cols["node"][t] = v
        cols["action"][t] = a
        cols["observation"][t] = o
        cols["exposure"][t] = eta
        cols["sense_reward"][t] = r_sense
        cols["move_reward"][t] = r_move
        if kind is PlannerKind.NOMINAL:
            cols["mean_set_size"][t] = math.nan
            cols["unresolved"][t] = -1
        else:
            sizes = sets.members.sum(axis=1)
            cols["mean_set_size"][t] = sizes.mean()
            cols["unresolved"][t] = int(np.count_nonzero(sizes[reachable] > 1))
        cols["cum_exposures"][t] = exposure.d
        cols["cum_observation"][t] = cum_obs
        cols["cum_total"][t] = cum_total
        cols["target"][t] = u
        cols["vi_iterations"][t] = n_iter
        v = u

    meta = {
        "planner": kind.value,
        "seed": cfg.seed,
        "episode": cfg.episode,
        "graph_seed": graph_seed,
        "family": cfg.topology.family,
        "n_nodes": env.n_nodes,
        "n_reachable": len(reachable),
        "start": start,
    }
    out = EpisodeLog(cols, meta)
    out.env = env
    out.beliefs = beliefs
    out.sets = sets
    return out


@dataclass(frozen=True)
class SummaryStats:
    """Mean and (population) standard deviation across a campaign's episodes."""

    planner: str
    family: str
    n_nodes: int
    n_runs: int
    n_failed: int
    obs_mean: float
    obs_std: float
    exposures_mean: float
    exposures_std: float
    total_mean: float
    total_std: float
    n_converged: int
    conv_mean: float
    conv_std: float

    @classmethod
    def from_logs(cls, logs, planner, family, n_nodes, n_failed=0):
        obs = np.array([lg.total_observation for lg in logs])
        exp = np.array([lg.total_exposures for lg in logs], dtype=float)
        tot = np.array([lg.total_reward for lg in logs])
        conv = [convergence_step(lg) for lg in logs]
        conv = np.array([c for c in conv if c is not None], dtype=float)

        def ms(x):
            return (float(x.mean()), float(x.std())) if x.size else (math.nan, math.nan)

        return cls(
            planner, family, int(n_nodes), len(logs), int(n_failed),
            *ms(obs), *ms(exp), *ms(tot), int(conv.size), *ms(conv),
        )

    def as_row(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


SUMMARY_COLUMNS = tuple(f.name for f in fields(SummaryStats))


def write_summary_csv(summaries, path, header=None):
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        writer.writerow([_fmt(getattr(s, c)) for c in SUMMARY_COLUMNS])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_summary_csv(path):
    with open(path) as fh:
        body = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(body)
    out = []
    for row in reader:
        kw = {}
        for f in fields(SummaryStats):
            raw = row[f.name]
            if f.name in ("planner", "family"):
                kw[f.name] = raw
            elif f.name in ("n_nodes", "n_runs", "n_failed", "n_converged"):
                kw[f.name] = int(raw)
            else:
                kw[f.name] = float(raw)
        out.append(SummaryStats(**kw))
    return out


def _run_one(args):
    cfg, protos = args
    try:
        return cfg.episode, run_episode(cfg, protos), None
    except Exception as exc:  # recorded per seed; the campaign carries on
        return cfg.episode, None, f"{type(exc).__name__}: {exc}"


@dataclass
class CampaignResult:
    logs: list
    summary: SummaryStats
    failures: dict


def run_campaign(cfg, seeds, jobs=1, protos=None):
    """Run one episode per seed index and aggregate; failures are recorded, not raised."""
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise ValueError("a campaign needs at least one seed")
    protos = protos if protos is not None else resolve_prototypes(cfg.prototypes)
    tasks = [(cfg.replace(episode=s), protos) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    logs = [lg for _, lg, err in results if lg is not None]
    failures = {s: err for s, _, err in results if err is not None}
    for s, err in failures.items():
        log.warning("episode %d failed: %s", s, err)
    summary = SummaryStats.from_logs(
        logs, cfg.planner, cfg.topology.family, cfg.topology.size, n_failed=len(failures)
    )
    return CampaignResult(logs, summary, failures)
