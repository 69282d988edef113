"""
Sweeps, metrics and replay
==========================

A sweep runs every grid point on every seed and writes curves, checkpoints,
summaries and a manifest. The summary can always be recomputed from the
curve files, and the manifest replays the whole sweep.
"""

import tempfile
from pathlib import Path

from arsearch.harness import percentile_report, read_curve, replay, report, run_experiment

spec = {
    "env": "quadratic",
    "grid": {"alpha": [0.01, 0.02], "nu": [0.02], "num_directions": [4, 8]},
    "seed_count": 3,
    "seed_range": [0, 1000],
    "stop": {"max_iterations": 60},
    "eval_every": 10,
    "eval_rollouts": 5,
    "threshold": -0.05,
    "budget": 5000,
    "table_length": 1_000_000,
}

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "sweep"
    result = run_experiment(spec, out)
    for row in result["summary"]:
        print("alpha %.3f N %d: reached %s/%s, mean episodes %s, averaged max reward %.4f" % (
            row["alpha"], row["num_directions"], row["n_reached"], row["n_seeds"],
            row["mean_episodes_to_threshold"], row["averaged_max_reward"]))

    # recompute everything from the curve files and compare byte for byte
    report(out)

    seeds = [int(p.stem.split("_s")[1]) for p in sorted((out / "curves").glob("p003_*.jsonl"))]
    curves = [read_curve(out / "curves" / f"p003_s{s}.jsonl") for s in seeds]
    table = percentile_report(curves, [10, 50, 90])
    for i, t in enumerate(table["timesteps"]):
        print("timesteps %6d  p10 %.4f  median %.4f  p90 %.4f" % (t, table["p10"][i], table["p50"][i], table["p90"][i]))

    replay(out / "manifest.json", Path(tmp) / "again")
    same = (out / "summary.csv").read_bytes() == (Path(tmp) / "again" / "summary.csv").read_bytes()
    print("replay reproduces summary.csv:", same)
