"""Abelian branes: Neumann/Dirichlet exchange under duality and boundary residual orders on the wedge lattice.

    python3 scripts/branes.py --CD 1 0 --N 16 32 64
"""
import argparse
import json
from pathlib import Path

import numpy as np

from cad.cli import fit_order
from cad.courant import dirac_leaf_check
from cad.duality import brane_boundary_residual, brane_transport, dirac_bc, dualize
from cad.scenarios import critical_map, duality_preset, leaf_presets
from cad.sigma import LightConeLattice


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--CD", type=float, nargs=2, default=[1.0, 0.0], help="generator of the isotropic C_D")
    ap.add_argument("--N", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--out", type=Path, default=Path("runs/branes"))
    args = ap.parse_args()

    for name, L, H, leaf, beta in leaf_presets():
        print(f"leaf {name}: d beta - H|N = {dirac_leaf_check(L, H, leaf, beta):.1e}")
    scen, _ = duality_preset("branes-abelian")
    CD = np.array([args.CD])
    side, dual = brane_transport(CD, scen)
    print(f"C_D={args.CD}: {side.kind} -> {dual.kind}")
    hs, series = [], {}
    for N in args.N:
        lat = LightConeLattice.square(N, shape="wedge")
        f = critical_map(scen, lat, "dalembert", boundary=dirac_bc(scen.chart, scen.background, CD))
        fd, _, _ = dualize(f, scen)
        hs.append(lat.h1)
        for tag, g, ch, bg in (("", f, scen.chart, scen.background), ("dual_", fd, scen.dual_chart, scen.dual_background)):
            for k, v in brane_boundary_residual(g, ch, bg, CD).items():
                series.setdefault(tag + k, []).append(v)
    orders = {k: fit_order(hs, v) for k, v in series.items()} if len(hs) >= 3 else {}
    for k, v in series.items():
        print(f"{k:20s}", ", ".join(f"{x:.2e}" for x in v), f"order={orders.get(k, '-')}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "branes.json").write_text(json.dumps({"CD": args.CD, "kinds": [side.kind, dual.kind],
                                                      "h": hs, "residuals": series, "orders": orders}, indent=1))


if __name__ == "__main__":
    main()
