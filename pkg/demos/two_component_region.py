"""Where does a positive synchronized solution exist for p = 2, two components?

Scans beta12 with beta11, beta22 fixed and prints the closed-form verdict,
the amplitude vector and whether it minimises J on M.
"""
import argparse

import numpy as np

from coupled_nehari.synchronized import interval_prediction, solve_sync, sync_p2_two_component


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--b11", type=float, default=1.0)
    ap.add_argument("--b22", type=float, default=2.0)
    ap.add_argument("--values", type=float, nargs="+",
                    default=[-1.6, -1.41, -1.2, 0, 0.5, 0.99, 1.01, 1.5, 1.99, 2.01, 2.5])
    args = ap.parse_args()

    lo, hi = -np.sqrt(args.b11 * args.b22), min(args.b11, args.b22)
    print(f"positive solutions expected for beta12 in ({lo:.4f}, {hi:.4f}) or beta12 > {max(args.b11, args.b22):.4f}")
    print(f"{'beta12':>7} {'verdict':>10} {'interval':>9} {'c1':>10} {'c2':>10} {'minimiser':>9}")
    for b12 in args.values:
        beta = np.array([[args.b11, b12], [b12, args.b22]])
        v = sync_p2_two_component(beta)
        pred = interval_prediction(args.b11, args.b22, b12) or "-"
        if v.candidate is None:
            m = solve_sync(beta, 2.0)
            print(f"{b12:7.3f} {v.verdict:>10} {pred:>9} {'':>10} {'':>10}  best on M: {np.round(m.min_c, 6)}")
            continue
        c = v.candidate.c
        print(f"{b12:7.3f} {v.verdict:>10} {pred:>9} {c[0]:10.6f} {c[1]:10.6f} {str(v.candidate.is_minimizer):>9}")


if __name__ == "__main__":
    main()
