"""Recovery energy against the sharp-interface limit on the unit square."""
import argparse

from nlphase import field as F
from nlphase import kernel as K
from nlphase import potential as P


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kernel", choices=["gaussian", "fractional"], default="gaussian")
    ap.add_argument("--n", type=int, default=96)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--omega", default="linear", help="'linear', 'sqrt' or a constant")
    args = ap.parse_args()

    if args.kernel == "gaussian":
        k, wells = K.gaussian(2), P.affine_wells(-1, 1, (0.3, 0.0), (0.6, 0.0))
    else:
        k, wells = K.fractional(2, eta=0.25), P.holder_wells(-1, 1, 0.3, (0.5, 0.5), 0.75)
    omega = {"linear": lambda e: e, "sqrt": F.default_omega}.get(args.omega) or float(args.omega)
    rows = F.gamma_sweep(F.PolyhedralPhase.horizontal(), k, P.make_quartic_moving(wells, "normalized"),
                         args.eps, omega=omega, n=args.n)
    print(f"limit energy {rows[0].limit:.6f}")
    print(f"{'eps':>6} {'omega':>6} {'energy':>10} {'nonlocal':>10} {'potential':>10} {'rel gap':>8}")
    for r in rows:
        print(f"{r.eps:6.3f} {r.omega:6.3f} {r.energy:10.6f} {r.nonlocal_part:10.6f} {r.potential_part:10.6f} "
              f"{r.relative_gap:8.4f}")


if __name__ == "__main__":
    main()
