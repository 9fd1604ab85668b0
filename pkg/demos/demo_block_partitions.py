# Build block partitions of the integer lattice at several coupling ranges
# and watch the block diameters grow polynomially in the range parameter.

import numpy as np

from kamkit.lattice import build_partition, max_diameter


def run():
    radius = 24.0
    for d in (2, 3):
        print(f"\n-- dimension d={d}, lattice ball radius {radius} --")
        print(f"{'delta':>6} {'classes':>8} {'max diameter':>13}")
        for delta in (1, 2, 3, 4, 5):
            part = build_partition(float(delta), radius, d)
            print(f"{delta:6d} {len(part.classes):8d} {max_diameter(part):13.3f}")
        # diameters stay bounded by c * delta^((d+1)!/2)
        exponent = {2: 3.0, 3: 12.0}[d]
        ds = np.arange(1, 6, dtype=float)
        diams = [max_diameter(build_partition(float(t), radius, d)) for t in ds]
        c_fit = max(diam / t ** exponent for t, diam in zip(ds, diams))
        print(f"fitted constant for diameter <= c * delta^{exponent:.0f}: "
              f"{c_fit:.3f}")


if __name__ == "__main__":
    run()
