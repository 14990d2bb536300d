"""MLS gain sweep on the 123-bus feeder; writes alpha_comparison.svg.

    python scripts/alpha_sweep.py [out_dir]
"""

import sys
from pathlib import Path

from dsrestore.coordinator import ScenarioConfig, compare_alpha_sweep
from dsrestore.network import load_feeder
from dsrestore.plots import alpha_comparison_svg

DATA = Path(__file__).resolve().parents[1] / "src" / "dsrestore" / "data"
ALPHAS = (0.1, 0.2, 1.0)


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    runs = compare_alpha_sweep(load_feeder(DATA / "ieee123.json"), ALPHAS, ScenarioConfig())
    for a, run in runs.items():
        first3 = [round(min(s.nadir_hz.values()), 4) for s in run.stages[:3]]
        print(f"alpha={a:<4g} stages={run.stages_to_completion} final={run.final_kw:.1f} kW nadirs(1-3)={first3}")
    (out / "alpha_comparison.svg").write_text(alpha_comparison_svg(runs), encoding="utf-8")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "out/alpha"))
