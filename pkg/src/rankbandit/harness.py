"""Experiment harness: JSON configs, replication fan-out, reports, benchmarks.

A config fixes the instance, window model, payoff source, policy, optional
delay wrapper and optional utility-estimation burn-in. Replications differ
only through the replication index in the substream paths, so runs are
reproducible bit-for-bit and two configs can be compared on paired seeds.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversarial import BLORanker, EpsilonGreedyRanker, lazy_alpha
from .core import Instance, Permutation, optimal_family, regret_upper_bound, utility_ranks
from .elimination import EliminationRanker
from .environments import (
    STREAM_DELAY, STREAM_POLICY, GaussianPayoffs, LowerBoundBlockWindows,
    MultinomialWindows, RegretTrace, ScheduleWindows, TapePayoffs, run_episode,
    substream,
)
from .extensions import (
    DelayModel, GreedyUserEnv, bold_wrap, estimate_order_sorting,
    estimate_social_learning, merge_sort_comparison_bound, qpmd_wrap,
)
from .lp import solve_lp

STREAM_ESTIMATE = 5
WORKERS_ENV = "RANKBANDIT_WORKERS"

POLICY_NAMES = ("elim", "eps-greedy", "osmd")


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


@dataclass
class ExperimentConfig:
    instance: Instance
    window: dict
    payoffs: dict
    policy: dict
    horizon: int
    replications: int = 1
    seed: int = 0
    delay: str = "none"
    estimate: str | None = None
    estimate_budget: int | None = None
    output_dir: str | None = None
    label: str = "experiment"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _require(isinstance(raw, dict), "config", "must be a JSON object")
        for key in ("instance", "window", "horizon"):
            _require(key in raw, key, "required field missing")
        try:
            instance = Instance.from_dict(raw["instance"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        n = instance.n

        window = dict(raw["window"])
        wtype = window.get("type")
        _require(wtype in ("multinomial", "schedule", "blocks"),
                 "window.type", f"must be one of multinomial/schedule/blocks, got {wtype!r}")
        if wtype == "multinomial":
            _require("q" in window, "window.q", "required for multinomial windows")
            q = np.asarray(window["q"], dtype=float)
            _require(q.size == n, "window.q", f"length {q.size} != instance n {n}")
            _require(bool(np.all(q >= 0)), "window.q", "entries must be >= 0")
            _require(abs(float(q.sum()) - 1.0) <= 1e-12, "window.q",
                     "must sum to 1 within 1e-12")
        elif wtype == "schedule":
            _require("schedule" in window, "window.schedule", "required for schedule windows")
            sched = window["schedule"]
            _require(all(1 <= int(w) <= n for w in sched), "window.schedule",
                     f"entries must lie in 1..{n}")

        payoffs = dict(raw.get("payoffs", {"type": "gaussian"}))
        ptype = payoffs.get("type")
        _require(ptype in ("gaussian", "bernoulli", "tape"),
                 "payoffs.type", f"must be one of gaussian/bernoulli/tape, got {ptype!r}")
        if ptype == "gaussian":
            _require(instance.means is not None, "instance.means",
                     "required for gaussian payoffs")
        elif ptype == "bernoulli":
            rates = np.asarray(payoffs.get("rates", []), dtype=float)
            _require(rates.size == n, "payoffs.rates", f"length {rates.size} != instance n {n}")
            _require(bool(np.all((rates >= 0) & (rates <= 1))),
                     "payoffs.rates", "entries must lie in [0, 1]")
        else:
            _require("path" in payoffs, "payoffs.path", "required for tape payoffs")

        policy = dict(raw.get("policy", {"name": "elim"}))
        name = policy.get("name")
        _require(name in POLICY_NAMES, "policy.name",
                 f"must be one of {'/'.join(POLICY_NAMES)}, got {name!r}")
        if name == "elim":
            delta = float(policy.get("delta", 0.01))
            _require(0 < delta <= 1, "policy.delta", "must lie in (0, 1]")
            policy["delta"] = delta
        if name in ("eps-greedy", "osmd"):
            _require(wtype == "multinomial", "window.type",
                     f"policy {name!r} requires multinomial windows with known q")
        if name == "eps-greedy":
            try:
                lazy_alpha(np.asarray(window["q"], dtype=float))
            except ValueError as exc:
                raise ConfigError(f"window.q: {exc}") from None

        horizon = int(raw["horizon"])
        _require(horizon >= 1, "horizon", "must be >= 1")
        replications = int(raw.get("replications", 1))
        _require(replications >= 1, "replications", "must be >= 1")
        seed = int(raw.get("seed", 0))
        _require(seed >= 0, "seed", "must be >= 0")

        delay = str(raw.get("delay", "none"))
        try:
            DelayModel.parse(delay)
        except ValueError as exc:
            raise ConfigError(f"delay: {exc}") from None

        estimate = raw.get("estimate")
        _require(estimate in (None, "sort", "social"), "estimate",
                 f"must be null, 'sort' or 'social', got {estimate!r}")
        estimate_budget = raw.get("estimate_budget")
        if estimate_budget is not None:
            estimate_budget = int(estimate_budget)
            _require(estimate_budget >= 1, "estimate_budget", "must be >= 1")

        if wtype == "blocks":
            _require(horizon % n == 0, "horizon",
                     "must be divisible by n for block windows")

        return cls(
            instance=instance, window=window, payoffs=payoffs, policy=policy,
            horizon=horizon, replications=replications, seed=seed, delay=delay,
            estimate=estimate, estimate_budget=estimate_budget,
            output_dir=raw.get("output_dir"), label=str(raw.get("label", "experiment")),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "instance": self.instance.to_dict(),
            "window": self.window,
            "payoffs": self.payoffs,
            "policy": self.policy,
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "delay": self.delay,
            "estimate": self.estimate,
            "estimate_budget": self.estimate_budget,
            "output_dir": self.output_dir,
        }


class _OffsetWindows:
    """Shift the trial index seen by a window source (burn-in consumed a prefix)."""

    def __init__(self, inner, offset: int):
        self.inner = inner
        self.offset = offset

    def draw(self, t: int) -> int:
        return self.inner.draw(t + self.offset)


class _OffsetPayoffs:
    def __init__(self, inner, offset: int):
        self.inner = inner
        self.offset = offset

    def draw(self, item: int, t: int) -> float:
        return self.inner.draw(item, t + self.offset)


def _build_windows(cfg: ExperimentConfig, rep: int):
    wtype = cfg.window["type"]
    n = cfg.instance.n
    if wtype == "multinomial":
        return MultinomialWindows(np.asarray(cfg.window["q"], dtype=float),
                                  cfg.seed, rep)
    if wtype == "schedule":
        return ScheduleWindows(cfg.window["schedule"], n)
    return LowerBoundBlockWindows(n, cfg.horizon)


def _build_payoffs(cfg: ExperimentConfig, rep: int):
    ptype = cfg.payoffs["type"]
    if ptype == "gaussian":
        return GaussianPayoffs(cfg.instance.means, cfg.seed, rep)
    if ptype == "bernoulli":
        return TapePayoffs.bernoulli(np.asarray(cfg.payoffs["rates"], dtype=float),
                                     cfg.horizon, cfg.seed, rep)
    path = cfg.payoffs["path"]
    if str(path).endswith(".npy"):
        return TapePayoffs(np.load(path))
    return TapePayoffs.from_csv(path, n=cfg.instance.n)


def _build_base_policy(cfg: ExperimentConfig, rep: int, instance_idx: int = 0):
    name = cfg.policy["name"]
    n = cfg.instance.n
    if name == "elim":
        return EliminationRanker(n, cfg.policy.get("delta", 0.01))
    rng = substream(cfg.seed, rep, STREAM_POLICY, instance_idx)
    q = np.asarray(cfg.window["q"], dtype=float)
    if name == "eps-greedy":
        return EpsilonGreedyRanker(
            q, rng=rng, epsilon_fn=None,
            explore_constant=float(cfg.policy.get("explore_constant", 1.0)))
    eta = cfg.policy.get("eta")
    return BLORanker(q, horizon=None if eta is not None else cfg.horizon,
                     eta=None if eta is None else float(eta), rng=rng)


def _build_policy(cfg: ExperimentConfig, rep: int):
    delay = DelayModel.parse(cfg.delay)
    if delay.kind == "none":
        return _build_base_policy(cfg, rep)
    rng = substream(cfg.seed, rep, STREAM_DELAY)
    wrapper = cfg.policy.get("delay_wrapper", "qpmd")
    if wrapper == "bold":
        return bold_wrap(lambda idx: _build_base_policy(cfg, rep, idx), delay, rng)
    if wrapper != "qpmd":
        raise ConfigError(f"policy.delay_wrapper: unknown wrapper {wrapper!r}")
    return qpmd_wrap(_build_base_policy(cfg, rep), delay, rng)


def default_sort_budget(n: int, horizon: int) -> int:
    """Display budget for order estimation: ~4 n^2 log2(n) log(T)."""
    return int(math.ceil(4.0 * n * n * max(1.0, math.log2(n)) *
                         math.log(max(horizon, 2))))


@dataclass(frozen=True)
class HindsightBenchmark:
    """Best fixed achievable marginals against a full payoff tape."""

    marginals: np.ndarray  # by item
    rank_marginals: np.ndarray
    matrix: np.ndarray  # rank space
    value: float


def best_fixed_hindsight(tape_values: np.ndarray, q, utilities) -> HindsightBenchmark:
    """Maximize total tape payoff over achievable fixed selection marginals.

    Solved as a linear program over admissible matrices (entries on or below
    the diagonal; column sums one; suffix masses non-decreasing across
    adjacent columns), then read off the marginals ``P q``.
    """
    tape_values = np.asarray(tape_values, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    totals = tape_values.sum(axis=1)
    ranks = utility_ranks(utilities)
    rank_totals = np.zeros(n)
    rank_totals[ranks] = totals

    index: dict[tuple[int, int], int] = {}
    for c in range(n):
        for i in range(c, n):
            index[(i, c)] = len(index)
    nvar = len(index)

    cost = np.zeros(nvar)
    for (i, c), k in index.items():
        cost[k] = -rank_totals[i] * q[c]

    A_eq = np.zeros((n, nvar))
    for c in range(n):
        for i in range(c, n):
            A_eq[c, index[(i, c)]] = 1.0
    b_eq = np.ones(n)

    rows = []
    for j in range(1, n):
        for c in range(n - 1):
            row = np.zeros(nvar)
            for i in range(max(j, c), n):
                row[index[(i, c)]] = 1.0
            for i in range(max(j, c + 1), n):
                row[index[(i, c + 1)]] -= 1.0
            rows.append(row)
    A_ub = np.vstack(rows) if rows else None
    b_ub = np.zeros(len(rows)) if rows else None

    result = solve_lp(cost, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub)
    P = np.zeros((n, n))
    for (i, c), k in index.items():
        P[i, c] = result.x[k]
    rank_marginals = P @ q
    marginals = rank_marginals[ranks]
    return HindsightBenchmark(
        marginals=marginals, rank_marginals=rank_marginals, matrix=P,
        value=float(totals @ marginals),
    )


def hindsight_regret(trace: RegretTrace, tape: TapePayoffs, q, utilities) -> RegretTrace:
    """Replace the regret columns with regret against the best fixed marginals."""
    bench = best_fixed_hindsight(tape.values, q, utilities)
    horizon = len(trace)
    inst = bench.marginals @ tape.values[:, :horizon] - trace.payoffs
    return RegretTrace(
        trials=trace.trials, windows=trace.windows, selected=trace.selected,
        payoffs=trace.payoffs, inst_regret=inst, cum_regret=np.cumsum(inst),
        orders=trace.orders,
    )


def _burn_in(cfg: ExperimentConfig, rep: int, windows, payoffs):
    """Run a utility-order estimation phase and return (trace rows, pseudo-utilities)."""
    instance = cfg.instance
    n = instance.n
    budget = cfg.estimate_budget
    if budget is None:
        budget = min(cfg.horizon, default_sort_budget(n, cfg.horizon))
    env = GreedyUserEnv(instance.utilities, windows)

    if cfg.estimate == "sort":
        result = estimate_order_sorting(env.show, n, budget)
        ascending = result.order
        history = env.history
    else:
        rng = substream(cfg.seed, rep, STREAM_ESTIMATE)
        report = estimate_social_learning(
            instance.utilities, windows, rng=rng, budget=budget)
        if not report.separated:
            raise RuntimeError(
                f"social-learning burn-in did not separate within {budget} trials")
        ascending = report.order_by_mean()
        history = None  # social users pick by perceived utility; no display log

    pseudo = np.empty(n)
    pseudo[list(ascending)] = np.arange(1, n + 1, dtype=float)

    if history is None:
        # social users leave reviews, not payoffs; only the trial count matters
        return [], pseudo, report.trials
    fam = optimal_family(instance) if instance.means is not None else None
    rows = []
    for k, (order, w, y) in enumerate(history):
        payoff = payoffs.draw(y, k + 1)
        reg = (instance.means[fam.benchmark_by_window[w - 1]] - instance.means[y]
               if fam is not None else 0.0)
        rows.append((w, y, payoff, reg))
    return rows, pseudo, len(rows)


def run_replication(cfg: ExperimentConfig, rep: int) -> tuple[dict, RegretTrace]:
    instance = cfg.instance
    windows = _build_windows(cfg, rep)
    payoffs = _build_payoffs(cfg, rep)
    tape = payoffs if isinstance(payoffs, TapePayoffs) else None

    burn_rows: list = []
    pseudo_utilities = None
    burn_used = 0
    if cfg.estimate is not None:
        burn_rows, pseudo_utilities, burn_used = _burn_in(cfg, rep, windows, payoffs)
        windows = _OffsetWindows(windows, burn_used)
        payoffs = _OffsetPayoffs(payoffs, burn_used)

    policy = _build_policy(cfg, rep)
    main_horizon = cfg.horizon - burn_used
    if main_horizon <= 0:
        raise RuntimeError("estimation burn-in consumed the whole horizon")

    benchmark = "means" if (instance.means is not None and tape is None) else "none"
    policy_instance = instance
    if pseudo_utilities is not None:
        policy_instance = Instance(utilities=pseudo_utilities, means=instance.means)
        # pseudo-utilities have the same order as the true ones, so user picks
        # and regret accounting agree with the true instance
    trace = run_episode(policy, policy_instance, payoffs, windows, main_horizon,
                        benchmark=benchmark, record_orders=False)

    if burn_used:
        w0 = np.asarray([r[0] for r in burn_rows], dtype=np.int64)
        y0 = np.asarray([r[1] for r in burn_rows], dtype=np.int64)
        pay0 = np.asarray([r[2] for r in burn_rows], dtype=float)
        reg0 = np.asarray([r[3] for r in burn_rows], dtype=float)
        if len(burn_rows) < burn_used:  # social mode logs no display rows
            pad = burn_used - len(burn_rows)
            w0 = np.concatenate([w0, np.zeros(pad, dtype=np.int64)])
            y0 = np.concatenate([y0, np.full(pad, -1, dtype=np.int64)])
            pay0 = np.concatenate([pay0, np.zeros(pad)])
            reg0 = np.concatenate([reg0, np.zeros(pad)])
        inst = np.concatenate([reg0, trace.inst_regret])
        trace = RegretTrace(
            trials=np.arange(1, cfg.horizon + 1, dtype=np.int64),
            windows=np.concatenate([w0, trace.windows]),
            selected=np.concatenate([y0, trace.selected]),
            payoffs=np.concatenate([pay0, trace.payoffs]),
            inst_regret=inst, cum_regret=np.cumsum(inst), orders=None,
        )

    summary = {
        "replication": rep,
        "total_payoff": float(trace.payoffs.sum()),
        "burn_in_trials": burn_used,
    }
    if tape is not None and cfg.window["type"] == "multinomial":
        trace = hindsight_regret(trace, tape, np.asarray(cfg.window["q"], dtype=float),
                                 instance.utilities)
        summary["hindsight_value"] = float(
            best_fixed_hindsight(tape.values, np.asarray(cfg.window["q"], dtype=float),
                                 instance.utilities).value)
    summary["final_regret"] = float(trace.cum_regret[-1])
    return summary, trace


def _replication_worker(raw_cfg: dict, rep: int):
    cfg = ExperimentConfig.from_dict(raw_cfg)
    return rep, run_replication(cfg, rep)


def _checkpoints(horizon: int) -> list[int]:
    grid = {horizon}
    t = 10
    while t < horizon:
        grid.add(t)
        t *= 10
    return sorted(grid)


@dataclass
class ExperimentReport:
    config: dict
    checkpoints: list[int]
    per_replication: list[dict]
    mean_regret: list[float]
    se_regret: list[float]
    bounds: dict
    traces: list[RegretTrace] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "checkpoints": self.checkpoints,
            "per_replication": self.per_replication,
            "mean_regret": self.mean_regret,
            "se_regret": self.se_regret,
            "bounds": self.bounds,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _bound_values(cfg: ExperimentConfig) -> dict:
    bounds: dict[str, float | None] = {"elimination": None, "mirror_descent": None}
    name = cfg.policy["name"]
    if cfg.instance.means is not None:
        try:
            bounds["elimination"] = regret_upper_bound(
                cfg.instance, cfg.horizon, float(cfg.policy.get("delta", 0.01)))
        except ValueError:
            bounds["elimination"] = None
    bounds["mirror_descent"] = 2.0 * math.sqrt(2.0 * cfg.horizon * cfg.instance.n)
    bounds["active"] = ("elimination" if name == "elim" else
                        "mirror_descent" if name == "osmd" else None)
    return bounds


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    reps = range(cfg.replications)
    results: dict[int, tuple[dict, RegretTrace]] = {}
    if workers > 1 and cfg.replications > 1:
        raw = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, payload in pool.map(_replication_worker, [raw] * cfg.replications, reps):
                results[rep] = payload
    else:
        for rep in reps:
            results[rep] = run_replication(cfg, rep)

    checkpoints = _checkpoints(cfg.horizon)
    per_rep = []
    curves = np.empty((cfg.replications, len(checkpoints)))
    traces = []
    for rep in sorted(results):
        summary, trace = results[rep]
        summary = dict(summary)
        summary["checkpoint_regret"] = [float(trace.cum_regret[t - 1]) for t in checkpoints]
        curves[rep] = summary["checkpoint_regret"]
        per_rep.append(summary)
        traces.append(trace)

    mean = curves.mean(axis=0)
    if cfg.replications > 1:
        se = curves.std(axis=0, ddof=1) / math.sqrt(cfg.replications)
    else:
        se = np.zeros(len(checkpoints))

    report = ExperimentReport(
        config=cfg.to_dict(), checkpoints=checkpoints, per_replication=per_rep,
        mean_regret=[float(x) for x in mean], se_regret=[float(x) for x in se],
        bounds=_bound_values(cfg), traces=traces,
    )
    if cfg.output_dir:
        write_outputs(report, cfg.output_dir)
    return report


def write_outputs(report: ExperimentReport, output_dir) -> None:
    out = Path(output_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "final_regret", "total_payoff"]
                        + [f"regret_at_{t}" for t in report.checkpoints])
        for row in report.per_replication:
            writer.writerow([row["replication"], repr(row["final_regret"]),
                             repr(row["total_payoff"])]
                            + [repr(v) for v in row["checkpoint_regret"]])
    for rep, trace in enumerate(report.traces):
        trace.to_csv(out / "traces" / f"rep{rep:04d}.csv")


def summarize_traces(trace_dir, checkpoints: list[int]) -> tuple[list[float], list[float]]:
    """Recompute mean/se checkpoint regret from stored trace CSVs."""
    paths = sorted(Path(trace_dir).glob("rep*.csv"))
    if not paths:
        raise FileNotFoundError(f"no trace files under {trace_dir}")
    curves = []
    for path in paths:
        trace = RegretTrace.from_csv(path)
        curves.append([float(trace.cum_regret[t - 1]) for t in checkpoints])
    arr = np.asarray(curves)
    mean = arr.mean(axis=0)
    se = (arr.std(axis=0, ddof=1) / math.sqrt(len(paths))
          if len(paths) > 1 else np.zeros(arr.shape[1]))
    return [float(x) for x in mean], [float(x) for x in se]
