"""Restored load and stage count against the lookahead length T.

    python scripts/horizon_sweep.py [out_dir]
"""

import csv
import sys
from pathlib import Path

from dsrestore.coordinator import ScenarioConfig, horizon_sweep
from dsrestore.network import load_feeder

DATA = Path(__file__).resolve().parents[1] / "src" / "dsrestore" / "data"


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    runs = horizon_sweep(load_feeder(DATA / "ieee123.json"), (2, 3, 4, 5), ScenarioConfig())
    with open(out / "horizon.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("horizon", "final_kw", "stages", "wall_s"))
        for t, run in runs.items():
            w.writerow((t, round(run.final_kw, 3), run.stages_to_completion, round(run.wall_seconds, 2)))
            print(f"T={t}: {run.final_kw:.1f} kW in {run.stages_to_completion} stages ({run.wall_seconds:.1f} s)")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "out/horizon"))
