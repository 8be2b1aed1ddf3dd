"""Convergence study for the su(2) semi-abelian duality: residuals and fitted orders under h-halving.

    python3 scripts/convergence.py --N 8 16 32 64 --out runs/convergence
"""
import argparse
import json
import time
from pathlib import Path

from cad.cli import fit_order
from cad.duality import dualize, extract_AG, flatness_residual, roundtrip
from cad.scenarios import critical_map, duality_preset
from cad.sigma import LightConeLattice, max_residual, random_smooth


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="semiabelian-su2")
    ap.add_argument("--N", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--out", type=Path, default=Path("runs/convergence"))
    args = ap.parse_args()

    scen, d = duality_preset(args.preset)
    AG = extract_AG(scen)
    rows = []
    for N in args.N:
        t0 = time.perf_counter()
        lat = LightConeLattice.square(N)
        f = critical_map(scen, lat, d["initial"])
        out = dualize(f, scen)
        dev, _ = roundtrip(f, scen, dual=out)
        rows.append({"N": N, "h": lat.h1, "flatness": out[1]["flatness"],
                     "dual_el_residual": out[1]["dual_el_residual"], "roundtrip_deviation": dev,
                     "random_flatness": max_residual(flatness_residual(random_smooth(lat, scen.target, 1), AG)),
                     "seconds": time.perf_counter() - t0})
        print(" ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}" for k, v in rows[-1].items()))

    hs = [r["h"] for r in rows]
    orders = {k: fit_order(hs, [r[k] for r in rows])
              for k in ("flatness", "dual_el_residual", "roundtrip_deviation", "random_flatness")} if len(rows) >= 3 else {}
    for k, o in orders.items():
        print(f"order {k}: {o if isinstance(o, str) else f'{o:.3f}'}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "convergence.json").write_text(json.dumps({"preset": args.preset, "levels": rows, "orders": orders}, indent=1))


if __name__ == "__main__":
    main()
