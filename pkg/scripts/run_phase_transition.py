"""Grid-density sweep: IMSE of the linear-interpolation estimator at fixed n
as the number of sampling locations T varies.

On a dense grid the error is dominated by the n^-1 estimation term, so IMSE
barely moves with T; on a sparse grid the interpolation bias term takes over
and IMSE climbs steeply.

Usage:
    python scripts/run_phase_transition.py --replicates 30 --seed 20260823
"""

import argparse

from fqreg.simlab import continuous_scenario, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=30)
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--grid-sizes", type=int, nargs="+",
                    default=[128, 64, 32, 16, 8])
    args = ap.parse_args()

    print(f"{'T':>5} {'imse(beta1)':>12} {'se':>8}")
    for t in args.grid_sizes:
        report = run_study(continuous_scenario(t=t), methods=("li",),
                           taus=(0.5,), replicates=args.replicates,
                           seed=args.seed, parallelism=args.threads,
                           mc_draws=2000)
        row = next(r for r in report.rows if r.coefficient == 1)
        print(f"{t:>5} {row.imse_mean:>12.5f} {row.imse_se:>8.5f}")


if __name__ == "__main__":
    main()
