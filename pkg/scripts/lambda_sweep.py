"""Info-CELS lambda sweep on the desk setup, with SVG trend charts.

    python3 scripts/lambda_sweep.py --rep 0 --out runs/sweep
"""

import argparse
import csv
import json
from pathlib import Path

from scipy.stats import spearmanr

from infocels import desk, plots
from infocels.cels import CelsConfig
from infocels.evaluation import lambda_sweep
from infocels.ood import OodConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rep", type=int, default=0)
    ap.add_argument("--lambdas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lams = [float(v) for v in args.lambdas.split(",")]

    run = desk.build(args.rep)
    points = lambda_sweep(run.model, run.test, run.train, lams, CelsConfig(seed=desk.explain_seed(args.rep)),
                          0.01, OodConfig(), args.workers)
    rows = [p.to_row() for p in points]
    for r in rows:
        print(f"lambda {r['lambda']:.1f}: flip {r['flip_rate']:.2f} p {r['mean_target_probability']:.3f} "
              f"L1 {r['mean_l1']:6.2f} sparsity {r['mean_sparsity']:.3f} "
              f"IF {r['if_rate']:.2f} LOF {r['lof_rate']:.2f}")
    rho_p = spearmanr(lams, [r["mean_target_probability"] for r in rows])[0]
    rho_l1 = spearmanr(lams, [r["mean_l1"] for r in rows])[0]
    print(f"spearman: target probability {rho_p:.3f}, L1 {rho_l1:.3f}")

    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    (out / "sweep.json").write_text(json.dumps({"args": vars(args), "rows": rows,
                                                "spearman": {"target_probability": rho_p, "l1": rho_l1}},
                                               indent=2))
    (out / "sweep_target_probability.svg").write_text(plots.line_chart(
        lams, {"target probability": [r["mean_target_probability"] for r in rows]},
        "Target probability vs lambda", "lambda", "mean P(target)"))
    (out / "sweep_l1.svg").write_text(plots.line_chart(
        lams, {"L1": [r["mean_l1"] for r in rows]}, "L1 distance vs lambda", "lambda", "mean L1"))


if __name__ == "__main__":
    main()
