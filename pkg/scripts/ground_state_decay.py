"""Energy of the lower well field as eps shrinks, for Hoelder wells."""
import argparse

import numpy as np

from nlphase import field as F
from nlphase import kernel as K
from nlphase import potential as P


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.75)
    ap.add_argument("--n", type=int, default=96)
    ap.add_argument("--box", type=float, nargs=4, default=[0.0, 0.0, 1.0, 1.0], metavar=("X0", "Y0", "X1", "Y1"))
    args = ap.parse_args()

    wells = P.holder_wells(-1, 1, 0.5, (0.5, 0.5), args.alpha)
    spec = P.make_quartic_moving(wells, "normalized")
    z = F.PhaseField.from_function(wells.z1, args.box[:2], args.box[2:], args.n)
    prev = None
    print(f"{'eps':>6} {'energy':>10} {'local rate':>10}")
    for e in (0.4, 0.2, 0.1, 0.05, 0.025):
        v = F.energy_eps(z, K.gaussian(2), spec, e)
        rate = f"{np.log2(prev / v):10.3f}" if prev else "         -"
        print(f"{e:6.3f} {v:10.3e} {rate}")
        prev = v
    # the squared gradient of the wells is integrable in the plane, so the rate tends to 1
    print("asymptotic rate: 1")


if __name__ == "__main__":
    main()
