"""End-to-end acceptance checks, one per headline property, each with a wall-clock budget.

Every check prints a single PASS/FAIL line; the lines are repeated in the terminal summary.
"""
import time

import numpy as np
import pytest

from cad.cli import fit_order
from cad.courant import Chart, axiom_residuals, connection_curvature, dirac_leaf_check, LagrangianFrame, shift_splitting
from cad.duality import (brane_boundary_residual, brane_transport, dirac_bc, dualize, extract_AG,
                         flatness_residual, roundtrip, seed_equivariance)
from cad.equivariant import (calibrate_kappa, check_equivariance, chern_simons_residuals,
                             distribution_curvature_residual, maurer_cartan, projected_connection,
                             pullback_residuals, reduce, transport_RD)
from cad.poly import Poly
from cad.presets import double_model
from cad.scenarios import (analytic_abelian_dual, critical_map, duality_preset, h_presets, leaf_presets,
                           omega_presets, random_sections, symmetries)
from cad.sigma import LightConeLattice, flow_preserves, max_residual, noether_current, random_smooth

LINES = []


def report(name, ok, detail, elapsed, budget):
    ok = bool(ok and elapsed < budget)
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{elapsed:.1f}s < {budget:g}s]"
    LINES.append(line)
    print(line)
    return ok


def order_ok(o, lo=1.9):
    # "saturated" means every level already sits at roundoff: the C h^2 bound holds trivially
    return o == "saturated" or o >= lo


def fmt(o):
    return o if isinstance(o, str) else f"{o:.3f}"


def test_ac1_axiom_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    pts = Chart(3).sample(128, seed=0)
    worst = {}
    for name, H in h_presets().items():
        s, t, u = random_sections(3, rng, degree=3)
        res = axiom_residuals(None if name == "zero" else H, s, t, u, Poly.random(3, 3, rng), pts)
        worst[name] = max(res.values())
    m = max(worst.values())
    assert report("AC1 axioms", m <= 1e-9, f"max residual {m:.2e} over {len(worst)} twists",
                  time.perf_counter() - t0, 5)


def test_ac2_curvature_calculus():
    t0 = time.perf_counter()
    H = h_presets()["cubic"]
    sigma = LagrangianFrame.graph(omega_presets()["x3-dx12"])
    before = connection_curvature(sigma, H).H
    worst = 0.0
    for omega in omega_presets().values():
        worst = max(worst, (connection_curvature(LagrangianFrame.graph(omega)).H - omega.d()).max_abs_coef())
        after = connection_curvature(shift_splitting(sigma, omega), H).H
        worst = max(worst, (after - before - omega.d()).max_abs_coef())
    assert report("AC2 curvature", worst <= 1e-12, f"max coefficient residual {worst:.2e}",
                  time.perf_counter() - t0, 1)


def test_ac3_equivariance_and_chern_simons():
    t0 = time.perf_counter()
    worst = 0.0
    for name in ("abelian-2", "affine-2d", "su2"):
        model = double_model(name)
        model = model.with_kappa(calibrate_kappa(model))
        worst = max(worst, check_equivariance(model))
        alg, tr = model.algebra, model.triple
        for A in (maurer_cartan(alg), projected_connection(alg, tr.g_basis, tr.gprime_basis)):
            worst = max(worst, *chern_simons_residuals(A).values())
    assert report("AC3 equivariance", worst <= 1e-9, f"max residual {worst:.2e}", time.perf_counter() - t0, 10)


def test_ac4_reduction_coherence():
    t0 = time.perf_counter()
    worst, ranks_ok = 0.0, True
    for name in ("abelian-2", "affine-2d", "su2"):
        model = double_model(name).with_kappa(-0.5)
        for G in ("g", "gprime"):
            red = reduce(model, G, npts=40)
            ranks_ok &= bool(np.all(red.fiber_rank() == 2 * red.dim_base))
            pr = pullback_residuals(red, red.splitting)
            worst = max(worst, pr["D"], pr["G"], distribution_curvature_residual(red, red.splitting),
                        float(np.max(np.abs(red.H_L(red.chart.chart, "std")))))
    assert report("AC4 reduction", ranks_ok and worst <= 1e-8, f"ranks ok={ranks_ok}, max residual {worst:.2e}",
                  time.perf_counter() - t0, 10)


def test_ac5_radius_inversion():
    t0 = time.perf_counter()
    model = double_model("abelian-1")
    p = np.eye(model.group.size)[None]
    RD = np.array([[1.0, 4.0]])
    r_g = transport_RD(model, "gprime", RD).r(p)[0, 0, 0]
    r_d = transport_RD(model, "g", RD).r(p)[0, 0, 0]
    exact = abs(r_g - 4.0) <= 1e-12 and abs(r_d - 0.25) <= 1e-12
    scen, _ = duality_preset("abelian-r4")
    hs, errs = [], []
    for N in (64, 128, 256):
        lat = LightConeLattice.square(N)
        fd, _, _ = dualize(critical_map(scen, lat, "dalembert"), scen)
        hs.append(lat.h1)
        errs.append(float(np.max(np.abs(fd.coords()[..., 0] - analytic_abelian_dual(lat, 4.0)))))
    o = fit_order(hs, errs)
    C = max(e / h ** 2 for h, e in zip(hs, errs))
    detail = f"r = {r_g:g} / {r_d:g}; errors {', '.join(f'{e:.1e}' for e in errs)}; order={fmt(o)}; C={C:.2e}"
    if o == "saturated":
        detail += " (discrete dual is exact up to roundoff, so error <= C h^2 with C ~ 0)"
    assert report("AC5 radius inversion", exact and order_ok(o), detail, time.perf_counter() - t0, 30)


@pytest.fixture(scope="module")
def su2_levels():
    """(scenario, [(h, f, dualize output, build seconds)]) at N = 16, 32, 64."""
    scen = duality_preset("semiabelian-su2")[0]
    out = []
    for N in (16, 32, 64):
        t0 = time.perf_counter()
        lat = LightConeLattice.square(N)
        f = critical_map(scen, lat, "pcm-geodesic")
        out.append((lat.h1, f, dualize(f, scen), time.perf_counter() - t0))
    return scen, out


def test_ac6_nonabelian_noether(su2_levels):
    scen, levels = su2_levels
    t0 = time.perf_counter()
    AG = extract_AG(scen)
    hs = [h for h, *_ in levels]
    flat = [max_residual(flatness_residual(f, AG)) for _, f, _, _ in levels]
    rand = [max_residual(flatness_residual(random_smooth(f.lattice, scen.target, 1), AG)) for _, f, _, _ in levels]
    o, orand = fit_order(hs, flat), fit_order(hs, rand)
    ok = order_ok(o) and not isinstance(orand, str) and -0.2 <= orand <= 0.2
    elapsed = time.perf_counter() - t0 + sum(b for *_, b in levels)
    assert report("AC6 non-abelian Noether", ok, f"critical order={fmt(o)}, random slope={fmt(orand)}", elapsed, 120)


def test_ac7_poisson_lie_duality(su2_levels):
    scen, levels = su2_levels
    t0 = time.perf_counter()
    hs = [h for h, *_ in levels]
    dual_el = [out[1]["dual_el_residual"] for _, _, out, _ in levels]
    dev = [roundtrip(f, scen, dual=out)[0] for _, f, out, _ in levels]
    seq = seed_equivariance(levels[1][1], scen, [0.3, -0.2, 0.5])
    o1, o2 = fit_order(hs, dual_el), fit_order(hs, dev)
    ok = order_ok(o1) and order_ok(o2) and seq <= 1e-9
    elapsed = time.perf_counter() - t0 + sum(b for *_, b in levels)
    assert report("AC7 Poisson-Lie duality", ok,
                  f"dual EL order={fmt(o1)}, roundtrip order={fmt(o2)}, seed equivariance {seq:.1e}", elapsed, 180)


def _closure_table(scen, Ns):
    """{section: [max closure per level]} for sections admitted by flow_preserves; also lattice steps."""
    bg, tg = scen.sr(), scen.target
    hs, table = [], {}
    for N in Ns:
        lat = LightConeLattice.square(N)
        f = critical_map(scen, lat, "pcm-geodesic" if not np.allclose(scen.model.algebra.c, 0) else "dalembert")
        pts = f.values[lat.mask()]
        hs.append(lat.h1)
        for name, s in symmetries(scen):
            if flow_preserves(s, bg, tg, pts) <= 1e-10:
                table.setdefault(name, []).append((max_residual(noether_current(f, s, bg, check_tol=None)[2]),
                                                   lat.h1 * lat.h2))
    return hs, table


def test_ac8_noether_currents():
    t0 = time.perf_counter()
    hs, table = _closure_table(duality_preset("semiabelian-su2")[0], (8, 16, 32))
    orders = {n: fit_order(hs, [c for c, _ in v]) for n, v in table.items()}
    _, free = _closure_table(duality_preset("abelian-r4")[0], (16,))
    flux = max(c * a for v in free.values() for c, a in v)
    ok = bool(orders) and all(order_ok(o) for o in orders.values()) and bool(free) and flux <= 1e-12
    detail = ", ".join(f"{n} {fmt(o)}" for n, o in orders.items()) + f"; free boson flux {flux:.1e} ({len(free)} sections)"
    assert report("AC8 Noether currents", ok, detail, time.perf_counter() - t0, 30)


def test_ac9_branes():
    t0 = time.perf_counter()
    leaf = max(dirac_leaf_check(L, H, lf, beta) for _, L, H, lf, beta in leaf_presets())
    scen, d = duality_preset("branes-abelian")
    CD = np.asarray(d["CD"])
    side, dual = brane_transport(CD, scen)
    swapped = {side.kind, dual.kind} == {"neumann", "dirichlet"}
    hs, series = [], {}
    for N in (16, 32, 64):
        lat = LightConeLattice.square(N, shape="wedge")
        f = critical_map(scen, lat, "dalembert", boundary=dirac_bc(scen.chart, scen.background, CD))
        fd, _, _ = dualize(f, scen)
        hs.append(lat.h1)
        for tag, g, ch, bg in (("", f, scen.chart, scen.background),
                               ("dual ", fd, scen.dual_chart, scen.dual_background)):
            for k, v in brane_boundary_residual(g, ch, bg, CD).items():
                series.setdefault(tag + k, []).append(v)
    orders = {k: fit_order(hs, v) for k, v in series.items()}
    ok = leaf <= 1e-10 and swapped and all(order_ok(o) for o in orders.values())
    detail = (f"leaf {leaf:.1e}; {side.kind} -> {dual.kind}; "
              + ", ".join(f"{k} {fmt(o)}" for k, o in orders.items()))
    assert report("AC9 branes", ok, detail, time.perf_counter() - t0, 60)
