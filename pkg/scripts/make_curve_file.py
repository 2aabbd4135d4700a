"""Build a curve file (``p,lambda_p`` with JSON header) by counting points over F_p.

    python3 scripts/make_curve_file.py E11.a3 0,-1,1,0,0 11 1 out.csv --bound 100000

lambda_p = (p + 1 - #E(F_p)) / sqrt(p) depends only on the isogeny class,
so any Weierstrass model in the class may be used.  kappa is left null.
"""
import argparse
import math

import numpy as np

from twistrmt.arithmetic import CurveFamily, primes_up_to
from twistrmt.dataio import write_curve_file


def count_points(ainv, p: int) -> int:
    """#E(F_p) including the point at infinity, for y^2 + a1xy + a3y = x^3 + a2x^2 + a4x + a6."""
    a1, a2, a3, a4, a6 = ainv
    x = np.arange(p, dtype=np.int64)
    if p == 2:
        y = x[:, None]
        lhs = (y * y + a1 * x * y + a3 * y) % 2
        rhs = (x**3 + a2 * x * x + a4 * x + a6) % 2
        return int(np.sum(lhs == rhs)) + 1
    # Complete the square: (2y + a1x + a3)^2 = 4(x^3 + a2x^2 + a4x + a6) + (a1x + a3)^2.
    x2 = x * x % p
    disc = (4 * (x2 * x % p + a2 * x2 + a4 * x + a6) + (a1 * x + a3) ** 2) % p
    is_square = np.zeros(p, dtype=bool)
    is_square[x2] = True
    legendre = np.where(disc == 0, 0, np.where(is_square[disc], 1, -1))
    return int(p + np.sum(legendre)) + 1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("label")
    ap.add_argument("ainvariants", help="a1,a2,a3,a4,a6")
    ap.add_argument("conductor", type=int)
    ap.add_argument("omega", type=int)
    ap.add_argument("output")
    ap.add_argument("--bound", type=int, default=100_000)
    ap.add_argument("--twist-sign", default="positive")
    ap.add_argument("--model-note", default="")
    args = ap.parse_args(argv)
    ainv = tuple(int(t) for t in args.ainvariants.split(","))
    lambdas = {}
    for p in primes_up_to(args.bound):
        p = int(p)
        lambdas[p] = (p + 1 - count_points(ainv, p)) / math.sqrt(p)
    meta = {"a_invariants": list(ainv), "prime_bound": args.bound}
    if args.model_note:
        meta["model_note"] = args.model_note
    curve = CurveFamily(args.label, args.conductor, args.omega, lambdas, args.twist_sign, None, meta)
    write_curve_file(curve, args.output)


if __name__ == "__main__":
    main()
