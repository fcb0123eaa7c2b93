"""Time-Lipschitz profile of a saved trajectory.

Reads the trajectory written by ``stein-lab simulate`` and prints the
BL*_V distance between adjacent snapshots per unit time, plus a one-sided
Spearman test for an increasing trend.  Writes lipschitz.csv next to it.

    python scripts/lipschitz_profile.py runs/simulate
"""

import argparse
import json
from pathlib import Path

from steinlab.dynamics import TrajectoryRecord
from steinlab.harness import load_config
from steinlab.harness.experiments import build_models, lipschitz_profile
from steinlab.harness.io import write_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "simulate.toml")
    ap.add_argument("--max-gap", type=float, default=0.5)
    args = ap.parse_args()

    potential, _ = build_models(load_config(args.config))
    paths = sorted((args.run_dir / "trajectories").glob("traj_*.csv"))
    if not paths:
        raise SystemExit(f"no trajectories under {args.run_dir}")
    traj = TrajectoryRecord.from_csv(paths[0])
    mids, ratios, rho, p = lipschitz_profile(traj, potential, args.max_gap)
    write_csv(args.run_dir / "lipschitz.csv", ["t_mid", "ratio"], zip(mids, ratios))
    print(json.dumps({"trajectory": paths[0].name, "gaps": int(ratios.size), "max_ratio": float(ratios.max()),
                      "spearman_rho": rho, "p_increasing": p}))


if __name__ == "__main__":
    main()
