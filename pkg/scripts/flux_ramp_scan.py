#!/usr/bin/env python3
"""Scan the single-flux ramp time and print flip fidelity against the gap.

    python3 scripts/flux_ramp_scan.py --N 3 --E-C 0.1 --times 1 2 5 10 20 40
"""
import argparse
import json
import sys
import warnings

from jjlqubit.ladder import LadderHamiltonian, LadderSpec, adiabatic_ramp, gap_profile


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=3, help="number of plaquettes")
    ap.add_argument("--seam", default="mobius_impurity")
    ap.add_argument("--E-C", dest="E_C", type=float, default=0.1)
    ap.add_argument("--n-max", dest="n_max", type=int, default=2)
    ap.add_argument("--times", type=float, nargs="+", default=[0.5, 1, 2, 5, 10, 20, 40])
    ap.add_argument("--n-flux", dest="n_flux", type=int, default=1, choices=(-1, 1))
    ap.add_argument("--json", action="store_true", help="emit JSON lines instead of a table")
    args = ap.parse_args(argv)

    spec = LadderSpec(args.N, E_C=args.E_C, seam=args.seam, n_max=args.n_max)
    lh = LadderHamiltonian(spec)
    gap = gap_profile(lh, 0.0, float(args.n_flux))
    if not args.json:
        print(f"# {spec.N_plaquettes} plaquettes, {spec.seam}, E_C={spec.E_C}, dim {lh.dim}, "
              f"min interior gap {gap:.4f}")
        print(f"{'T':>8} {'steps':>6} {'flip':>10} {'stay':>10}")
    for T in args.times:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            r = adiabatic_ramp(spec, T, lh=lh, n_flux=args.n_flux)
        if args.json:
            print(json.dumps({"T": T, "steps": r.steps, "flip": r.flip_fidelity,
                              "stay": r.stay_fidelity, "warnings": r.warnings}))
        else:
            print(f"{T:8.2f} {r.steps:6d} {r.flip_fidelity:10.6f} {r.stay_fidelity:10.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
