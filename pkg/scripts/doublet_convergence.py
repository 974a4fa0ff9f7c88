#!/usr/bin/env python3
"""Follow the ground doublet of a ladder as the charge cutoff n_max grows.

The ratio (E2 - E1) / (E3 - E1) is a tunnelling splitting over a gap, so it
converges much more slowly in n_max than the energies themselves.

    python3 scripts/doublet_convergence.py --N 3 --E-C 0.1 0.2 --n-max 2 3 4
"""
import argparse
import sys
import time

from jjlqubit.ladder import LadderHamiltonian, LadderSpec, ground_spectrum


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--seam", default="mobius_impurity")
    ap.add_argument("--E-C", dest="E_C", type=float, nargs="+", default=[0.1])
    ap.add_argument("--n-max", dest="n_max", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"{'E_C':>6} {'n_max':>5} {'dim':>7} {'E1':>14} {'split':>11} {'gap':>9} "
          f"{'ratio':>11} {'rel.change':>10} {'s':>6}")
    for ec in args.E_C:
        prev = None
        for n in args.n_max:
            t0 = time.perf_counter()
            lh = LadderHamiltonian(LadderSpec(args.N, E_C=ec, seam=args.seam, n_max=n))
            E = [p.value for p in ground_spectrum(lh.operator(), 3, seed=args.seed)]
            split, gap = E[1] - E[0], E[2] - E[0]
            ratio = split / gap
            change = "" if prev is None else f"{abs(ratio - prev) / prev:10.1%}"
            print(f"{ec:6.3f} {n:5d} {lh.dim:7d} {E[0]:14.8f} {split:11.4e} {gap:9.5f} "
                  f"{ratio:11.4e} {change:>10} {time.perf_counter() - t0:6.1f}")
            prev = ratio
    return 0


if __name__ == "__main__":
    sys.exit(main())
