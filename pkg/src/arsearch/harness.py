"""Experiment orchestration: runs, seed/hyperparameter sweeps, metrics and files.

Output layout of :func:`run_experiment` (schema version ``SCHEMA_VERSION``)::

    out_dir/
      manifest.json                 full spec + resolved seeds, enough to replay
      summary.csv                   one row per grid point, means over seeds
      runs.csv                      one row per (grid point, seed)
      curves/p{point:03d}_s{seed}.jsonl    one CurvePoint per line
      policies/p{point:03d}_s{seed}.policy final policy checkpoints

Curve lines have the fields ``iteration, episodes, timesteps, eval_reward``;
episodes and timesteps count training rollouts only.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from arsearch.core import ArsConfig, CurvePoint, StopCondition, check_compatible, train
from arsearch.envs import LqrEnv, make_env
from arsearch.lqr import collect_transitions, evaluate_gain, nominal_synthesis, optimal_cost
from arsearch.policy import Version, save_policy
from arsearch.rng import DEFAULT_TABLE_LENGTH, ConfigError, SeedHierarchy, make_generator

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_PERCENTILES = (2, 10, 25, 50, 75, 90, 98)

SUMMARY_COLUMNS = [
    "point", "alpha", "nu", "num_directions", "top_b", "version", "n_seeds", "n_reached",
    "mean_episodes_to_threshold", "mean_timesteps_to_threshold", "averaged_max_reward",
    "final_reward_mean", "final_reward_std",
]
RUN_COLUMNS = [
    "point", "seed", "episodes_to_threshold", "timesteps_to_threshold", "max_eval_reward",
    "final_eval_reward", "episodes", "timesteps",
]

# Hyperparameter grids used for the MuJoCo locomotion tasks. The environments
# themselves are not shipped; the grids are kept for users who plug one in.
PRESETS = {
    "swimmer": dict(alpha=[0.01, 0.02, 0.025], nu=[0.03, 0.02, 0.01], num_directions=[1], top_b=[1]),
    "hopper": dict(alpha=[0.01, 0.02, 0.025], nu=[0.03, 0.025, 0.02, 0.01], num_directions=[8, 16, 32],
                   top_b=[4, 8, 32]),
    "halfcheetah": dict(alpha=[0.01, 0.02, 0.025], nu=[0.025, 0.02, 0.01], num_directions=[4, 8, 16, 32],
                        top_b=[2, 4, 8, 32]),
    "walker": dict(alpha=[0.01, 0.02, 0.025, 0.03], nu=[0.025, 0.02, 0.01, 0.0075],
                   num_directions=[40, 60, 80, 100], top_b=[15, 30, 100]),
    "ant": dict(alpha=[0.01, 0.015, 0.02, 0.025], nu=[0.025, 0.02, 0.01], num_directions=[20, 40, 60, 80],
                top_b=[15, 20, 40, 80]),
    "humanoid": dict(alpha=[0.01, 0.02, 0.025], nu=[0.01, 0.0075], num_directions=[90, 230, 270, 310, 350],
                     top_b=[100, 200, 360]),
}


# --- metrics ----------------------------------------------------------------------


def _first_reaching(curve, threshold):
    for pt in curve:
        if pt.eval_reward >= threshold:
            return pt
    return None


def episodes_to_threshold(curve: list[CurvePoint], threshold: float) -> int | None:
    """Training episodes at the first evaluation with reward ``>= threshold`` (None if never)."""
    pt = _first_reaching(curve, threshold)
    return None if pt is None else pt.episodes


def timesteps_to_threshold(curve: list[CurvePoint], threshold: float) -> int | None:
    pt = _first_reaching(curve, threshold)
    return None if pt is None else pt.timesteps


def averaged_max_reward(curves: list[list[CurvePoint]], budget: float) -> float:
    """Maximum of the seed-averaged curve up to the first index where any seed has used ``budget`` timesteps.

    Curves are aligned by position (same evaluation cadence) and truncated to
    the shortest. If no seed reaches the budget the whole averaged curve is used.
    """
    if not curves or not all(curves):
        raise ConfigError("need at least one non-empty curve")
    length = min(len(c) for c in curves)
    rewards = np.array([[pt.eval_reward for pt in c[:length]] for c in curves])
    steps = np.array([[pt.timesteps for pt in c[:length]] for c in curves])
    mean_curve = rewards.mean(axis=0)
    hit = np.flatnonzero(steps.max(axis=0) >= budget)
    last = int(hit[0]) if hit.size else length - 1
    return float(mean_curve[: last + 1].max())


def percentile_report(curves: list[list[CurvePoint]], percentiles=DEFAULT_PERCENTILES) -> dict:
    """Per-evaluation percentiles of eval reward across seeds.

    Uses linear interpolation between closest ranks (numpy's ``linear``
    method). Returns columns ``iteration``, ``episodes``, ``timesteps``
    (from the first curve) and one ``p<q>`` column per percentile.
    """
    if len(curves) < 2:
        raise ConfigError("percentile report needs at least two curves")
    for q in percentiles:
        if not 0 <= q <= 100:
            raise ConfigError(f"percentile {q} outside [0, 100]")
    length = min(len(c) for c in curves)
    rewards = np.array([[pt.eval_reward for pt in c[:length]] for c in curves])
    table = {
        "iteration": [pt.iteration for pt in curves[0][:length]],
        "episodes": [pt.episodes for pt in curves[0][:length]],
        "timesteps": [pt.timesteps for pt in curves[0][:length]],
    }
    values = np.percentile(rewards, percentiles, axis=0, method="linear")
    for q, row in zip(percentiles, values):
        table[f"p{q:g}"] = row.tolist()
    return table


# --- sweep specification -------------------------------------------------------------


@dataclass
class SweepSpec:
    env: str
    grid: dict
    seeds: list[int] | None = None
    seed_count: int = 3
    seed_range: tuple[int, int] = (0, 1000)
    seed_sampler: int = 0
    stop: dict = field(default_factory=lambda: {"max_iterations": 100})
    eval_every: int = 10
    eval_rollouts: int = 100
    horizon: int | None = None
    table_length: int = DEFAULT_TABLE_LENGTH
    env_kwargs: dict = field(default_factory=dict)
    threshold: float | None = None
    budget: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        if "preset" in d:
            grid = dict(PRESETS[d.pop("preset")])
            grid.update(d.get("grid", {}))
            d["grid"] = grid
        if "seed_range" in d:
            d["seed_range"] = tuple(d["seed_range"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed_range"] = list(self.seed_range)
        return d

    def resolved_seeds(self) -> list[int]:
        """Explicit seeds, or ``seed_count`` distinct draws from ``[low, high)`` keyed on ``seed_sampler``."""
        if self.seeds:
            return [int(s) for s in self.seeds]
        low, high = self.seed_range
        if self.seed_count < 1 or high - low < self.seed_count:
            raise ConfigError(f"cannot draw {self.seed_count} distinct seeds from [{low}, {high})")
        rng = make_generator(self.seed_sampler)
        return [int(s) for s in rng.choice(np.arange(low, high), self.seed_count, replace=False)]

    def stop_condition(self) -> StopCondition:
        return StopCondition(**self.stop)

    def grid_points(self) -> list[ArsConfig]:
        """Every valid combination of the grid; ``top_b > N`` is dropped and V1/V2 use ``b = N``."""
        keys = ["alpha", "nu", "num_directions", "top_b", "version"]
        grid = {k: list(self.grid.get(k, [None])) for k in keys}
        if grid["version"] == [None]:
            grid["version"] = ["V1"]
        for k in ("alpha", "nu", "num_directions"):
            if grid[k] == [None] or not grid[k]:
                raise ConfigError(f"grid needs at least one value for {k}")
        points, seen = [], set()
        for alpha, nu, N, b, version in itertools.product(*(grid[k] for k in keys)):
            version = Version.parse(version)
            b = N if (b is None or not version.allows_top_b) else b
            if b > N:
                continue
            key = (alpha, nu, N, b, version)
            if key in seen:
                continue
            seen.add(key)
            points.append(ArsConfig(alpha=alpha, num_directions=N, nu=nu, top_b=b, version=version,
                                    horizon=self.horizon, table_length=self.table_length,
                                    eval_rollouts=self.eval_rollouts))
        if not points:
            raise ConfigError("hyperparameter grid is empty after filtering")
        return points

    def make_env(self):
        return make_env(self.env, **self.env_kwargs)

    def validate(self) -> None:
        env = self.make_env()
        for cfg in self.grid_points():
            check_compatible(cfg, env)
        self.resolved_seeds()
        self.stop_condition()
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be positive")


# --- files -----------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_curve(path: Path, curve: list[CurvePoint]) -> None:
    path.write_text("".join(json.dumps(asdict(pt)) + "\n" for pt in curve))


def read_curve(path: Path) -> list[CurvePoint]:
    return [CurvePoint(**json.loads(line)) for line in Path(path).read_text().splitlines() if line.strip()]


def _curve_name(point: int, seed: int) -> str:
    return f"p{point:03d}_s{seed}"


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(spec: SweepSpec, curves: dict) -> tuple[list[dict], list[dict]]:
    """Summary and per-run rows from ``{(point, seed): curve}``; the curves are the only input."""
    points = spec.grid_points()
    seeds = spec.resolved_seeds()
    summary, runs = [], []
    for i, cfg in enumerate(points):
        per_seed = [curves[(i, s)] for s in seeds]
        for s, curve in zip(seeds, per_seed):
            runs.append({
                "point": i, "seed": s,
                "episodes_to_threshold": None if spec.threshold is None else episodes_to_threshold(curve, spec.threshold),
                "timesteps_to_threshold": None if spec.threshold is None else timesteps_to_threshold(curve, spec.threshold),
                "max_eval_reward": max(pt.eval_reward for pt in curve) if curve else None,
                "final_eval_reward": curve[-1].eval_reward if curve else None,
                "episodes": curve[-1].episodes if curve else None,
                "timesteps": curve[-1].timesteps if curve else None,
            })
        mine = runs[-len(seeds):]
        finals = [r["final_eval_reward"] for r in mine if r["final_eval_reward"] is not None]
        summary.append({
            "point": i, "alpha": cfg.alpha, "nu": cfg.nu, "num_directions": cfg.num_directions,
            "top_b": cfg.top_b, "version": cfg.version.value, "n_seeds": len(seeds),
            "n_reached": None if spec.threshold is None else sum(r["episodes_to_threshold"] is not None for r in mine),
            "mean_episodes_to_threshold": _mean_or_none(r["episodes_to_threshold"] for r in mine),
            "mean_timesteps_to_threshold": _mean_or_none(r["timesteps_to_threshold"] for r in mine),
            "averaged_max_reward": (averaged_max_reward(per_seed, spec.budget)
                                    if spec.budget is not None and all(per_seed) else None),
            "final_reward_mean": float(np.mean(finals)) if finals else None,
            "final_reward_std": float(np.std(finals)) if finals else None,
        })
    return summary, runs


def run_experiment(spec: SweepSpec | dict, out_dir, workers: int = 1) -> dict:
    """Run every (grid point, seed) job and write curves, policies, summaries and the manifest.

    The whole spec is validated before any job starts. Returns the paths
    written and the summary rows.
    """
    if isinstance(spec, dict):
        spec = SweepSpec.from_dict(spec)
    spec.validate()
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    (out / "policies").mkdir(exist_ok=True)
    points, seeds = spec.grid_points(), spec.resolved_seeds()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec.to_dict(),
        "seeds": seeds,
        "grid": [cfg.to_dict() for cfg in points],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    env = spec.make_env()
    stop = spec.stop_condition()
    curves = {}
    for i, cfg in enumerate(points):
        for s in seeds:
            log.info("point %d seed %d: %s", i, s, cfg)
            result = train(replace(cfg, master_seed=s), env, stop, spec.eval_every, workers=workers)
            curves[(i, s)] = result.curve
            write_curve(out / "curves" / f"{_curve_name(i, s)}.jsonl", result.curve)
            save_policy(result.params, out / "policies" / f"{_curve_name(i, s)}.policy")
    summary, runs = summarize(spec, curves)
    (out / "summary.csv").write_text(_csv_text(SUMMARY_COLUMNS, summary))
    (out / "runs.csv").write_text(_csv_text(RUN_COLUMNS, runs))
    report(out)
    return {"out_dir": str(out), "summary": summary, "runs": runs}


def report(out_dir, verify: bool = True) -> list[dict]:
    """Recompute the summary from the manifest and curve files alone.

    With ``verify`` the recomputed CSVs must match the stored ones byte for
    byte; a mismatch raises ``ValueError``.
    """
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema {manifest.get('schema_version')}")
    spec = SweepSpec.from_dict(manifest["spec"])
    seeds = manifest["seeds"]
    curves = {
        (i, s): read_curve(out / "curves" / f"{_curve_name(i, s)}.jsonl")
        for i in range(len(manifest["grid"]))
        for s in seeds
    }
    summary, runs = summarize(spec, curves)
    if verify:
        for name, cols, rows in (("summary.csv", SUMMARY_COLUMNS, summary), ("runs.csv", RUN_COLUMNS, runs)):
            if (out / name).read_text() != _csv_text(cols, rows):
                raise ValueError(f"{name} does not match metrics recomputed from the curve files")
    return summary


def replay(manifest_path, out_dir, workers: int = 1) -> dict:
    manifest = json.loads(Path(manifest_path).read_text())
    return run_experiment(SweepSpec.from_dict(manifest["spec"]), out_dir, workers)


# --- LQR benchmark ------------------------------------------------------------------------


@dataclass
class LqrRun:
    """Gain snapshots of one seed's training run: ``(episodes, timesteps, K)`` after each iteration."""

    seed: int
    version: Version
    snapshots: list


def gain_at_budget(run: LqrRun, budget: float, axis: str = "timesteps"):
    col = {"episodes": 0, "timesteps": 1}[axis]
    K = None
    for snap in run.snapshots:
        if snap[col] > budget:
            break
        K = snap[2]
    return K


def lqr_report(runs: list[LqrRun], budgets, inst, axis: str = "timesteps",
               percentiles=DEFAULT_PERCENTILES) -> list[dict]:
    """Stabilization frequency and relative-cost percentiles at each budget.

    Percentiles are taken over the stable seeds only; unstable seeds are
    counted in ``n_censored`` (their relative cost is infinite).
    """
    for run in runs:
        if Version.parse(run.version).whitened:
            raise ConfigError("LQR report needs V1/V1t runs (the gain must act on raw states)")
    ref = optimal_cost(inst)
    rows = []
    for budget in budgets:
        rel = []
        for run in runs:
            K = gain_at_budget(run, budget, axis)
            rel.append(np.inf if K is None else evaluate_gain(inst, K, ref).relative_cost)
        rel = np.array(rel)
        finite = rel[np.isfinite(rel)]
        row = {axis: budget, "n_seeds": len(rel), "stable_fraction": float(np.mean(np.isfinite(rel))),
               "n_censored": int(np.sum(~np.isfinite(rel)))}
        for q in percentiles:
            row[f"p{q:g}"] = float(np.percentile(finite, q)) if finite.size else math.inf
        rows.append(row)
    return rows


def run_ars_lqr(inst, config: ArsConfig, seeds, max_timesteps: int, horizon: int = 300,
                workers: int = 1) -> list[LqrRun]:
    """Train V1-family ARS on ``inst`` for each seed, recording the gain after every iteration."""
    env = LqrEnv(inst, horizon=horizon)
    runs = []
    for s in seeds:
        snaps = [(0, 0, np.zeros((inst.action_dim, inst.state_dim)))]
        cb = lambda params, rec: snaps.append((rec.episodes, rec.timesteps, params.M.copy()))  # noqa: E731
        train(replace(config, master_seed=int(s)), env, StopCondition(max_timesteps=max_timesteps),
              workers=workers, callback=cb)
        runs.append(LqrRun(int(s), config.version, snaps))
    return runs


def nominal_report(inst, budgets, trials: int, rollout_length: int = 10, seed: int = 0,
                   percentiles=DEFAULT_PERCENTILES) -> list[dict]:
    """Nominal control from ``budget // rollout_length`` random-input rollouts, ``trials`` times per budget."""
    ref = optimal_cost(inst)
    rows = []
    for budget in budgets:
        n_roll = int(budget) // rollout_length
        rel = []
        for t in range(trials):
            rng = SeedHierarchy(seed).aux_stream(int(budget), t)
            try:
                data = collect_transitions(inst, n_roll, rollout_length, rng)
                rel.append(nominal_synthesis(data, inst, ref).relative_cost)
            except ValueError:
                rel.append(np.inf)
        rel = np.array(rel)
        finite = rel[np.isfinite(rel)]
        row = {"timesteps": budget, "n_seeds": trials, "stable_fraction": float(np.mean(np.isfinite(rel))),
               "n_censored": int(np.sum(~np.isfinite(rel)))}
        for q in percentiles:
            row[f"p{q:g}"] = float(np.percentile(finite, q)) if finite.size else math.inf
        rows.append(row)
    return rows


def lqr_bench(out_dir, config: ArsConfig, seeds, budgets, nominal_budgets, nominal_trials: int = 100,
              nominal_rollout_length: int = 10, horizon: int = 300, workers: int = 1, inst=None) -> dict:
    """ARS vs nominal control on the LQR instance; writes ``lqr_ars.csv``, ``lqr_nominal.csv`` and a manifest."""
    from arsearch.envs import make_lqr_paper_instance

    inst = make_lqr_paper_instance() if inst is None else inst
    check_compatible(config, LqrEnv(inst))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = run_ars_lqr(inst, config, seeds, int(max(budgets)), horizon, workers)
    ars_rows = lqr_report(runs, budgets, inst)
    for row in ars_rows:
        # the matching episode count is the same for every seed without early termination
        row["episodes"] = int(row["timesteps"]) // horizon
    nom_rows = nominal_report(inst, nominal_budgets, nominal_trials, nominal_rollout_length)
    cols = ["timesteps", "episodes", "n_seeds", "stable_fraction", "n_censored"] + [f"p{q}" for q in DEFAULT_PERCENTILES]
    (out / "lqr_ars.csv").write_text(_csv_text(cols, ars_rows))
    (out / "lqr_nominal.csv").write_text(_csv_text([c for c in cols if c != "episodes"], nom_rows))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "seeds": [int(s) for s in seeds],
        "budgets": list(budgets),
        "nominal_budgets": list(nominal_budgets),
        "nominal_trials": nominal_trials,
        "nominal_rollout_length": nominal_rollout_length,
        "horizon": horizon,
    }
    (out / "lqr_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"ars": ars_rows, "nominal": nom_rows, "runs": runs}
