"""Residual histories of PCG, Euclidean CG and weighted (unpreconditioned) CG on one problem.

    python3 scripts/compare_cg_pcg.py --scenario paper-lens --alpha 0 --out out/compare0
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from xsrc.experiments import background, build_operators
from xsrc.scenarios import get_scenario, make_downgoing_sources
from xsrc.solver import cg, pcg, speedup_at_level


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="paper-lens")
    ap.add_argument("--alpha", type=float, default=0.0)
    ap.add_argument("--k", type=int, default=10, help="PCG iterations")
    ap.add_argument("--cg-iter", type=int, default=45)
    ap.add_argument("--out", default="out/compare")
    args = ap.parse_args()

    sc = get_scenario(args.scenario)
    d = make_downgoing_sources(sc).d
    pb = build_operators(sc, background(sc)).problem(d, args.alpha)
    runs = {
        "pcg": pcg(pb, args.k, tol=0.0),
        "cg": cg(pb.euclidean(), args.cg_iter, tol=0.0),
        "cg_weighted": cg(pb, args.cg_iter, tol=0.0, weighted=True),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = max(r.relative_residuals.size for r in runs.values())
    with open(out / "residuals.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", *runs])
        for i in range(n):
            wr.writerow([i, *(repr(float(r.relative_residuals[i])) if i < r.relative_residuals.size else ""
                              for r in runs.values())])
    level = runs["pcg"].relative_residuals[args.k]
    print(f"PCG relative normal residual at k={args.k}: {level:.4g}")
    for name in ("cg", "cg_weighted"):
        ratio, hit = speedup_at_level(runs["pcg"], runs[name], args.k)
        where = f"iteration {hit}" if hit is not None else f"not within {runs[name].iterations}"
        print(f"{name:12s} reaches it at {where}; speedup {ratio:.2f}")
    gaps = {k: [round(g, 16) for _, g in r.true_residual_gaps] for k, r in runs.items()}
    print("true-residual gaps:", gaps)
    np.save(out / "h_pcg.npy", runs["pcg"].h.values)


if __name__ == "__main__":
    main()
