"""Named experiment presets, the campaign driver, planner comparisons and plots.

Outputs of :func:`run_preset` land under ``<out>/<preset>/``::

    manifest.json                      preset hash, seeds, sha256 of every file
    summary.csv                        one row per (planner, topology)
    <planner>/summary.csv              that planner's rows
    <planner>/<topology>/episode_NNNN.csv
    plots/*.png

Every CSV starts with a ``# preset=<id> preset_hash=<hash>`` line; readers
refuse files whose hash does not match the preset they are loaded against.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .config import config_to_text
from .graph_env import TopologySpec
from .planner import PlannerKind
from .reward import RewardConfig
from .sim import EpisodeLog, SimConfig, SummaryStats, read_summary_csv, run_campaign, write_summary_csv
from .threat_models import resolve_prototypes

log = logging.getLogger(__name__)

PLANNERS = tuple(k.value for k in PlannerKind)


class PresetError(ValueError):
    """Unknown preset id, or persisted outputs that belong to a different preset."""


class ComparisonError(ValueError):
    """Summaries handed to :func:`compare_planners` do not describe the same setup."""


@dataclass(frozen=True)
class ExperimentPreset:
    """A fixed experiment: a SimConfig template swept over one or more topologies.

    ``n_seeds`` is the desk-scale default; ``full_seeds`` the count behind
    the published figures.
    """

    id: str
    template: SimConfig
    planners: tuple[str, ...] = PLANNERS
    n_seeds: int = 20
    full_seeds: int = 100
    topologies: tuple[TopologySpec, ...] = ()
    # orderings checked by compare_planners; "adaptive_vs_nominal" keeps only
    # adaptive < nominal for exposures
    exposure_rule: str = "full"

    def sweep(self):
        return self.topologies or (self.template.topology,)

    def configs(self):
        return [self.template.replace(topology=t) for t in self.sweep()]

    def hash(self):
        payload = {
            "id": self.id,
            "planners": list(self.planners),
            "configs": [config_to_text(c) for c in self.configs()],
            "prototypes": resolve_prototypes(self.template.prototypes).to_text(),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def topology_label(spec):
    return f"{spec.family}-{spec.size}"


_EXP2_REWARD = RewardConfig(
    c_sense=(0.1, 0.1, 0.1, 0.1),
    lambda_imm=10.0,
    alpha=0.99,
    lambda_pers=0.5,
    lambda_cum=0.01,
)

_EXP3_TOPOLOGIES = (
    TopologySpec("barabasi-albert", n_nodes=15, m=2),
    TopologySpec("barabasi-albert", n_nodes=30, m=3),
    TopologySpec("sbm", n_nodes=30, n_blocks=3, p_intra=0.7, p_inter=0.05),
    TopologySpec("sbm", n_nodes=40, n_blocks=4, p_intra=0.7, p_inter=0.03),
    TopologySpec("erdos-renyi", n_nodes=15, p=0.10),
    TopologySpec("erdos-renyi", n_nodes=30, p=0.15),
    TopologySpec("grid", rows=3, cols=4),
    TopologySpec("grid", rows=5, cols=5),
    TopologySpec("grid", rows=6, cols=6),
    TopologySpec("grid-del", rows=5, cols=5, deletion_fraction=0.15),
    TopologySpec("grid-del", rows=6, cols=6, deletion_fraction=0.15),
    TopologySpec("star", n_leaves=8),
    TopologySpec("star", n_leaves=14),
)

PRESETS = {
    "exp1": ExperimentPreset("exp1", SimConfig(horizon=2000), n_seeds=20, full_seeds=100),
    "exp2": ExperimentPreset(
        "exp2",
        SimConfig(prototypes="exp2", reward=_EXP2_REWARD, horizon=3000),
        n_seeds=20,
        full_seeds=100,
    ),
    "exp3": ExperimentPreset(
        "exp3",
        SimConfig(horizon=8000, start_node="auto"),
        n_seeds=5,
        full_seeds=10,
        topologies=_EXP3_TOPOLOGIES,
        exposure_rule="adaptive_vs_nominal",
    ),
}


def get_preset(preset_id):
    try:
        return PRESETS[preset_id]
    except KeyError:
        raise PresetError(f"unknown preset {preset_id!r}; expected one of {', '.join(PRESETS)}") from None


@dataclass(frozen=True)
class TrendFit:
    """Least-squares line of mean convergence step against node count."""

    slope: float
    intercept: float
    correlation: float
    n_points: int

    @classmethod
    def fit(cls, n_nodes, conv_steps):
        x = np.asarray(n_nodes, dtype=float)
        y = np.asarray(conv_steps, dtype=float)
        keep = np.isfinite(y)
        x, y = x[keep], y[keep]
        if x.size < 2 or np.ptp(x) == 0:
            raise ValueError("a trend needs at least two distinct node counts")
        res = stats.linregress(x, y)
        return cls(float(res.slope), float(res.intercept), float(res.rvalue), int(x.size))

    @classmethod
    def from_summaries(cls, summaries):
        return cls.fit([s.n_nodes for s in summaries], [s.conv_mean for s in summaries])

    def predict(self, n_nodes):
        return self.intercept + self.slope * np.asarray(n_nodes, dtype=float)


# (metric, larger side, smaller side): the first planner's mean should exceed the second's
_ORDERINGS = {
    "obs_mean": (("nominal", "adaptive"), ("adaptive", "static")),
    "exposures_mean": (("static", "adaptive"), ("nominal", "static")),
    "total_mean": (("adaptive", "static"), ("adaptive", "nominal")),
}


@dataclass(frozen=True)
class PairCheck:
    metric: str
    higher: str
    lower: str
    gap: float

    @property
    def tie(self):
        return self.gap == 0.0

    @property
    def passed(self):
        return self.gap > 0.0

    def describe(self):
        flag = "tie" if self.tie else ("ok" if self.passed else "FAIL")
        return f"{self.metric}: {self.higher} > {self.lower} (gap {self.gap:+.2f}) {flag}"


@dataclass
class OrderingReport:
    """Per-metric planner orderings and pass/fail flags against the expected ones."""

    checks: list
    orderings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def ties(self):
        return [c for c in self.checks if c.tie]

    def check(self, metric, higher, lower):
        for c in self.checks:
            if (c.metric, c.higher, c.lower) == (metric, higher, lower):
                return c
        raise KeyError((metric, higher, lower))

    def format(self):
        lines = []
        for metric, order in self.orderings.items():
            lines.append(f"{metric}: " + " > ".join(f"{p} ({m:.2f})" for p, m in order))
        lines += [c.describe() for c in self.checks]
        return "\n".join(lines)


def compare_planners(summaries, exposure_rule="full"):
    """Check the expected planner orderings on one configuration.

    ``summaries`` maps planner name to SummaryStats (or is a list of them).
    Only pairs whose planners are both present are checked.
    """
    if not isinstance(summaries, dict):
        summaries = {s.planner: s for s in summaries}
    if len(summaries) < 2:
        raise ComparisonError("need at least two planner summaries")
    setups = {(s.family, s.n_nodes, s.n_runs) for s in summaries.values()}
    if len(setups) > 1:
        raise ComparisonError(f"summaries describe different setups: {sorted(setups)}")
    rules = dict(_ORDERINGS)
    if exposure_rule == "adaptive_vs_nominal":
        rules["exposures_mean"] = (("nominal", "adaptive"),)
    elif exposure_rule != "full":
        raise ValueError(f"unknown exposure rule {exposure_rule!r}")
    checks = []
    orderings = {}
    for metric, pairs in rules.items():
        means = {p: getattr(s, metric) for p, s in summaries.items()}
        orderings[metric] = sorted(means.items(), key=lambda kv: -kv[1])
        for hi, lo in pairs:
            if hi in summaries and lo in summaries:
                checks.append(PairCheck(metric, hi, lo, float(means[hi] - means[lo])))
    return OrderingReport(checks, orderings)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _header(preset, seed):
    return f"preset={preset.id} preset_hash={preset.hash()} seed={seed}"


@dataclass
class PresetResult:
    preset: ExperimentPreset
    out_dir: Path | None
    summaries: dict  # (planner, topology label) -> SummaryStats
    failures: dict
    logs: dict = field(default_factory=dict, repr=False)

    def for_topology(self, label):
        return {p: s for (p, t), s in self.summaries.items() if t == label}

    def reports(self):
        labels = dict.fromkeys(t for _, t in self.summaries)
        return {t: compare_planners(self.for_topology(t), self.preset.exposure_rule) for t in labels
                if len(self.for_topology(t)) >= 2}

    def trend(self, planner="adaptive"):
        rows = [s for (p, _), s in self.summaries.items() if p == planner]
        return TrendFit.from_summaries(rows)


def run_preset(
    preset_id,
    n_seeds=None,
    out_dir=None,
    planners=None,
    jobs=1,
    seed=0,
    plots=True,
    keep_logs=False,
):
    """Run every (planner, topology) campaign of a preset.

    With ``out_dir`` set, episode and summary CSVs, a manifest and (with
    ``plots``) the figures are written under ``out_dir/<preset>/``.
    """
    preset = get_preset(preset_id)
    n_seeds = preset.n_seeds if n_seeds is None else int(n_seeds)
    if n_seeds < 1:
        raise ValueError("n_seeds must be positive")
    planners = tuple(planners) if planners else preset.planners
    for p in planners:
        PlannerKind(p)
    seeds = list(range(n_seeds))
    protos = resolve_prototypes(preset.template.prototypes)
    header = _header(preset, seed)
    root = Path(out_dir) / preset.id if out_dir is not None else None

    summaries, failures, logs = {}, {}, {}
    for planner in planners:
        for cfg in preset.configs():
            cfg = cfg.replace(planner=planner, seed=seed)
            label = topology_label(cfg.topology)
            log.info("%s: %s on %s, %d seeds", preset.id, planner, label, n_seeds)
            res = run_campaign(cfg, seeds, jobs=jobs, protos=protos)
            summaries[planner, label] = res.summary
            if res.failures:
                failures[planner, label] = res.failures
            if keep_logs:
                logs[planner, label] = res.logs
            if root is not None:
                d = root / planner / label
                d.mkdir(parents=True, exist_ok=True)
                for lg in res.logs:
                    lg.meta = {"preset": preset.id, "preset_hash": preset.hash(), **lg.meta}
                    lg.to_csv(d / f"episode_{lg.meta['episode']:04d}.csv")

    if root is not None:
        write_summary_csv(list(summaries.values()), root / "summary.csv", header)
        for planner in planners:
            rows = [s for (p, _), s in summaries.items() if p == planner]
            write_summary_csv(rows, root / planner / "summary.csv", header)
        if plots:
            render_plots(root)
        files = sorted(p for p in root.rglob("*") if p.is_file() and p.name != "manifest.json")
        manifest = {
            "preset": preset.id,
            "preset_hash": preset.hash(),
            "master_seed": seed,
            "seeds": seeds,
            "planners": list(planners),
            "topologies": [topology_label(t) for t in preset.sweep()],
            "failures": {f"{p}/{t}": {str(k): v for k, v in f.items()} for (p, t), f in failures.items()},
            "files": {str(p.relative_to(root)): _sha256(p) for p in files},
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return PresetResult(preset, root, summaries, failures, logs)


def _file_hash(path):
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        return None, None
    tokens = dict(tok.partition("=")[::2] for tok in first[1:].split())
    return tokens.get("preset"), tokens.get("preset_hash")


def check_preset_file(path, preset=None):
    """Raise PresetError if ``path`` was written by a different preset version.

    Files without a preset header pass. Returns the preset id found (or None).
    """
    pid, h = _file_hash(path)
    if pid is None:
        return None
    if preset is None:
        if pid not in PRESETS:
            raise PresetError(f"{path}: written by unknown preset {pid!r}")
        preset = PRESETS[pid]
    if pid != preset.id or h != preset.hash():
        raise PresetError(
            f"{path}: written by preset {pid} (hash {h}), current {preset.id} hash is {preset.hash()}"
        )
    return pid


def load_summaries(path, check=True):
    if check:
        check_preset_file(path)
    return read_summary_csv(path)


def episode_files(directory):
    return sorted(Path(directory).rglob("episode_*.csv"))


def load_episodes(directory, check=True):
    """Group episode CSVs under ``directory`` by (planner, family, n_nodes)."""
    groups = defaultdict(list)
    for path in episode_files(directory):
        if check:
            check_preset_file(path)
        lg = EpisodeLog.from_csv(path)
        key = (lg.meta["planner"], lg.meta["family"], int(lg.meta["n_nodes"]))
        groups[key].append(lg)
    for logs in groups.values():
        logs.sort(key=lambda lg: int(lg.meta["episode"]))
    return dict(groups)


def summarize_episodes(directory, check=True):
    """Recompute SummaryStats from persisted episode CSVs."""
    failures = _manifest_failures(directory)
    out = []
    for (planner, family, n_nodes), logs in sorted(load_episodes(directory, check).items()):
        label = f"{family}-{n_nodes}"
        n_failed = len(failures.get(f"{planner}/{label}", {}))
        out.append(SummaryStats.from_logs(logs, planner, family, n_nodes, n_failed=n_failed))
    return out


def _manifest_failures(directory):
    for cand in (Path(directory) / "manifest.json", Path(directory).parent / "manifest.json"):
        if cand.is_file():
            return json.loads(cand.read_text()).get("failures", {})
    return {}


def _moving_average(x, window=20):
    x = np.asarray(x, dtype=float)
    if x.size < window:
        return x
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="valid")


PLOT_FILES = (
    "reward_curves.png",
    "credible_set_size.png",
    "cumulative_exposure.png",
    "action_histogram.png",
    "convergence_vs_size.png",
)


def render_plots(directory, out=None, window=20):
    """Draw the five figures from the CSVs under ``directory`` alone.

    Curves use the first topology found for each planner; the scatter uses
    every adaptive episode. Returns the written paths.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    out = Path(out) if out is not None else directory / "plots"
    out.mkdir(parents=True, exist_ok=True)
    groups = load_episodes(directory)
    if not groups:
        raise FileNotFoundError(f"no episode CSVs under {directory}")
    first = {}
    for key in sorted(groups, key=lambda k: (k[1], k[2])):
        first.setdefault(key[0], groups[key])
    planners = [p for p in PLANNERS if p in first]

    def mean_column(logs, name):
        return np.mean([np.asarray(lg[name], dtype=float) for lg in logs], axis=0)

    paths = [out / name for name in PLOT_FILES]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for p in planners:
        logs = first[p]
        step = mean_column(logs, "sense_reward") + mean_column(logs, "move_reward")
        ax1.plot(_moving_average(step, window), label=p)
        ax2.plot(mean_column(logs, "cum_total"), label=p)
    ax1.set(xlabel="step", ylabel=f"step reward ({window}-step average)")
    ax2.set(xlabel="step", ylabel="cumulative total reward")
    ax1.legend()
    fig.tight_layout()
    fig.savefig(paths[0], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for p in planners:
        if p == "nominal":
            continue
        ax.plot(_moving_average(mean_column(first[p], "mean_set_size"), window), label=p)
    ax.set(xlabel="step", ylabel="mean credible-set size", ylim=(0.9, None))
    ax.legend()
    fig.tight_layout()
    fig.savefig(paths[1], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for p in planners:
        ax.plot(mean_column(first[p], "cum_exposures"), label=p)
    ax.set(xlabel="step", ylabel="cumulative exposures")
    ax.legend()
    fig.tight_layout()
    fig.savefig(paths[2], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    actions = sorted({a for p in planners for lg in first[p] for a in lg["action"]})
    width = 0.8 / max(len(planners), 1)
    for i, p in enumerate(planners):
        acts = np.concatenate([np.asarray(lg["action"]) for lg in first[p]])
        counts = [np.count_nonzero(acts == a) / acts.size for a in actions]
        ax.bar(np.arange(len(actions)) + i * width, counts, width, label=p)
    ax.set_xticks(np.arange(len(actions)) + 0.4 - width / 2, actions)
    ax.set(ylabel="fraction of sense steps")
    ax.legend()
    fig.tight_layout()
    fig.savefig(paths[3], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    xs, ys = [], []
    for (p, family, n), logs in sorted(groups.items()):
        if p != "adaptive":
            continue
        s = SummaryStats.from_logs(logs, p, family, n)
        if math.isfinite(s.conv_mean):
            ax.errorbar(n, s.conv_mean, yerr=s.conv_std, fmt="o", label=f"{family}-{n}", capsize=3)
            xs.append(n)
            ys.append(s.conv_mean)
    if len(set(xs)) >= 2:
        fit = TrendFit.fit(xs, ys)
        grid = np.linspace(min(xs), max(xs), 50)
        ax.plot(grid, fit.predict(grid), "k--", label=f"OLS r={fit.correlation:.2f}")
    ax.set(xlabel="number of nodes", ylabel="convergence step")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(paths[4], dpi=100)
    plt.close(fig)
    return paths
