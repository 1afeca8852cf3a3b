"""Euler-Lagrange residual of the computed profile under grid refinement."""
import argparse

from nlphase import kernel as K
from nlphase import potential as P
from nlphase import profile1d as PR


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kernel", choices=["gaussian", "exponential", "fractional"], default="gaussian")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--window", type=float, default=4.0)
    args = ap.parse_args()

    k = {"gaussian": K.gaussian(1), "exponential": K.exponential(1),
         "fractional": K.fractional(1, eta=0.25)}[args.kernel]
    W = P.quartic_1d()
    prev = None
    print(f"{'dt':>8} {'energy':>12} {'residual':>10} {'ratio':>6}")
    for i in range(args.levels):
        dt = 0.125 / 2 ** i
        sol = PR.solve_profile_descent(k, W, opts=PR.SolverOptions(dt=dt))
        r = PR.el_residual(PR.center_profile(sol.profile)[0], k, W, window=args.window)
        ratio = f"{r / prev:6.3f}" if prev else "     -"
        print(f"{dt:8.5f} {sol.energy:12.8f} {r:10.2e} {ratio}")
        prev = r


if __name__ == "__main__":
    main()
