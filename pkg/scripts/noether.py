"""Noether currents: which shipped symmetry sections pass flow_preserves, and how their closure decays.

    python3 scripts/noether.py --preset semiabelian-su2 --N 8 16 32
"""
import argparse
import json
from pathlib import Path

from cad.cli import fit_order
from cad.scenarios import critical_map, duality_preset, pcm_scenario, symmetries
from cad.sigma import LightConeLattice, flow_preserves, max_residual, noether_current


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="semiabelian-su2", help="a duality preset or 'pcm'")
    ap.add_argument("--N", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--out", type=Path, default=Path("runs/noether"))
    args = ap.parse_args()

    if args.preset == "pcm":
        scen, initial = pcm_scenario(), "pcm-geodesic"
    else:
        scen, d = duality_preset(args.preset)
        initial = d["initial"]
    bg = scen.sr()
    hs, flows, closure = [], {}, {}
    for N in args.N:
        lat = LightConeLattice.square(N)
        f = critical_map(scen, lat, initial)
        pts = f.values[lat.mask()]
        hs.append(lat.h1)
        for name, s in symmetries(scen):
            res = flow_preserves(s, bg, scen.target, pts)
            flows.setdefault(name, []).append(res)
            if res <= args.tol:
                closure.setdefault(name, []).append(max_residual(noether_current(f, s, bg, check_tol=None)[2]))
    orders = {n: fit_order(hs, v) for n, v in closure.items() if len(v) >= 3}
    for n in flows:
        tag = "admitted" if n in closure else "rejected"
        print(f"{n:16s} flow={max(flows[n]):.1e} {tag}", "closure=" + ", ".join(f"{c:.2e}" for c in closure.get(n, [])),
              f"order={orders.get(n, '-')}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "noether.json").write_text(json.dumps({"h": hs, "flow_preserves": flows, "closure": closure,
                                                       "orders": orders}, indent=1))


if __name__ == "__main__":
    main()
