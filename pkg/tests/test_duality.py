import numpy as np
import pytest

from cad.cli import fit_order
from cad.duality import (InvalidInputError, brane_boundary_residual, brane_transport, dirac_bc, dualize,
                         extract_AG, flatness_residual, lift, project, roundtrip, seed_equivariance)
from cad.scenarios import analytic_abelian_dual, critical_map, duality_preset, pcm_scenario
from cad.sigma import LatticeMap, LightConeLattice, el_residual, max_residual, random_smooth


@pytest.fixture(scope="module")
def su2():
    return duality_preset("semiabelian-su2")[0]


@pytest.fixture(scope="module")
def su2_levels(su2):
    """(h, f, dualize output) at N = 8, 16, 32."""
    out = []
    for N in (8, 16, 32):
        lat = LightConeLattice.square(N)
        f = critical_map(su2, lat, "pcm-geodesic")
        out.append((lat.h1, f, dualize(f, su2)))
    return out


def _sample(scen, n=20, seed=0):
    return scen.chart.point(np.random.default_rng(seed).uniform(-0.5, 0.5, (n, scen.chart.n)))


@pytest.mark.parametrize("name", ["abelian-r4", "semiabelian-2d", "semiabelian-su2"])
def test_connection_kernel_and_normalization(name):
    scen = duality_preset(name)[0]
    AG = extract_AG(scen)
    pts = _sample(scen)
    assert AG.kernel_residual(pts) <= 1e-10
    assert AG.normalization_residual(pts) <= 1e-12


def test_connection_depends_on_the_point(su2):
    AG = extract_AG(su2)
    pts = _sample(su2, 2)
    X = np.eye(6)[3]
    assert np.max(np.abs(AG(pts[0], X) - AG(pts[1], X))) > 1e-3


def test_abelian_flatness_is_exact():
    scen, d = duality_preset("abelian-r4")
    f = critical_map(scen, LightConeLattice.square(32), "dalembert")
    assert max_residual(flatness_residual(f, extract_AG(scen))) * (1 / 32) ** 2 <= 1e-12


def test_flatness_converges_on_critical_maps(su2_levels):
    hs = [h for h, _, _ in su2_levels]
    flat = [rep["flatness"] for _, _, (_, rep, _) in su2_levels]
    assert fit_order(hs, flat) >= 1.9


def test_flatness_stalls_on_random_maps(su2):
    AG = extract_AG(su2)
    hs, vals = [], []
    for N in (8, 16, 32):
        lat = LightConeLattice.square(N)
        hs.append(lat.h1)
        vals.append(max_residual(flatness_residual(random_smooth(lat, su2.target, 1), AG)))
    assert -0.2 <= fit_order(hs, vals) <= 0.2


def test_flatness_bounded_by_criticality_plus_h2(su2):
    # discrete form of the non-abelian Noether statement, swept jointly in eps and h
    AG = extract_AG(su2)
    ratios = []
    for N in (8, 16, 32):
        lat = LightConeLattice.square(N)
        f = critical_map(su2, lat, "pcm-geodesic")
        T1, T2 = np.meshgrid(lat.t1, lat.t2, indexing="ij")
        bump = (np.sin(np.pi * T1) * np.sin(np.pi * T2))[..., None] * np.array([1.0, -0.5, 0.3])
        for eps in (0.0, 1e-6, 1e-4, 1e-2):
            g = LatticeMap(su2.target.from_coords(f.coords() + eps * bump), su2.target, lat)
            el = max_residual(el_residual(g, su2.sr()))
            ratios.append(max_residual(flatness_residual(g, AG)) / (el + lat.h1 ** 2))
    assert max(ratios) <= 2.0


def test_lift_projects_back(su2_levels, su2):
    _, f, (_, _, L) = su2_levels[0]
    back = project(L.phi, su2.chart)
    assert np.max(np.abs(back.values - f.values)) <= 1e-10


def test_seed_equivariance(su2_levels, su2):
    _, f, _ = su2_levels[1]
    assert seed_equivariance(f, su2, [0.3, -0.2, 0.5]) <= 1e-9


def test_sweep_orders_agree_up_to_path_independence(su2_levels):
    for _, _, (_, rep, _) in su2_levels:
        assert rep["sweep_order_defect"] <= 10 * rep["path_independence"]


def test_constant_map_has_constant_dual(su2):
    lat = LightConeLattice.square(8)
    p = su2.target.from_coords(np.array([0.2, -0.1, 0.3]))
    f = LatticeMap(np.broadcast_to(p, (9, 9) + p.shape).copy(), su2.target, lat)
    fd, _, _ = dualize(f, su2)
    assert np.max(np.abs(fd.values - fd.values[0, 0])) <= 1e-12


def test_dual_criticality_and_roundtrip_converge(su2_levels, su2):
    hs, dual_el, dev = [], [], []
    for h, f, out in su2_levels:
        hs.append(h)
        dual_el.append(out[1]["dual_el_residual"])
        dev.append(roundtrip(f, su2, dual=out)[0])
    assert fit_order(hs, dual_el) >= 1.9
    assert fit_order(hs, dev) >= 1.9


def test_abelian_dual_is_the_hodge_dual():
    scen, _ = duality_preset("abelian-r4")
    lat = LightConeLattice.square(32)
    f = critical_map(scen, lat, "dalembert")
    fd, rep, _ = dualize(f, scen)
    assert np.max(np.abs(fd.coords()[..., 0] - analytic_abelian_dual(lat, 4.0))) <= 1e-12
    assert rep["dual_el_residual"] <= 1e-8


def test_self_dual_radius_maps_solutions_to_solutions():
    scen, _ = duality_preset("abelian-selfdual")
    lat = LightConeLattice.square(16)
    f = critical_map(scen, lat, "dalembert")
    fd, rep, _ = dualize(f, scen)
    assert np.max(np.abs(fd.coords()[..., 0] - analytic_abelian_dual(lat, 1.0))) <= 1e-12


# branes

def test_abelian_brane_swaps_neumann_and_dirichlet():
    scen, d = duality_preset("branes-abelian")
    side, dual = brane_transport(d["CD"], scen)
    assert {side.kind, dual.kind} == {"neumann", "dirichlet"}
    assert max(side.rel_residual, dual.rel_residual) <= 1e-8
    flipped, flipped_dual = brane_transport([[0.0, 1.0]], scen)
    assert (flipped.kind, flipped_dual.kind) == (dual.kind, side.kind)


def test_structure_algebra_gives_dirichlet():
    # g* is an ideal, so Ad keeps it inside the fibres of M -> M/G*
    scen = pcm_scenario()
    side, _ = brane_transport(scen.chart.g, scen)
    assert side.kind == "dirichlet" and side.leaf_dim == 0
    assert side.rel_residual <= 1e-8


def test_structure_algebra_leaves_on_the_dual_side(su2):
    # su(2) is not an ideal: a(C_G) sweeps out the 2-dimensional coadjoint orbits
    side, _ = brane_transport(su2.chart.g, su2)
    assert side.kind == "mixed" and side.leaf_dim == 2


def test_non_subalgebra_is_rejected(su2):
    K = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(InvalidInputError):
        brane_transport(np.hstack([K, np.eye(3)]), su2)
    with pytest.raises(InvalidInputError):
        brane_transport(np.eye(6)[[0, 1, 3]], su2)  # not isotropic


def test_abelian_brane_boundary_residuals_converge():
    scen, d = duality_preset("branes-abelian")
    CD = np.asarray(d["CD"])
    hs, vals = [], {"beta": [], "dual_membership": []}
    for N in (16, 32, 64):
        lat = LightConeLattice.square(N, shape="wedge")
        f = critical_map(scen, lat, "dalembert", boundary=dirac_bc(scen.chart, scen.background, CD))
        fd, _, _ = dualize(f, scen)
        a = brane_boundary_residual(f, scen.chart, scen.background, CD)
        b = brane_boundary_residual(fd, scen.dual_chart, scen.dual_background, CD)
        hs.append(lat.h1)
        vals["beta"].append(a["beta"])
        vals["dual_membership"].append(b["membership"])
    for series in vals.values():
        assert fit_order(hs, series) >= 1.9


def test_lift_fills_the_grid(su2):
    lat = LightConeLattice.square(4)
    f = critical_map(su2, lat, "pcm-geodesic")
    L = lift(f, su2)
    assert L.phi.values.shape == (5, 5, su2.model.group.size, su2.model.group.size)
    assert np.all(np.isfinite(L.phi.values))
