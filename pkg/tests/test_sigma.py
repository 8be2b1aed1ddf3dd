import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cad.cli import fit_order
from cad.courant import ClosedThreeForm, GeneralizedSection, LagrangianFrame
from cad.equivariant import DegenerateBackgroundError
from cad.poly import Form, Poly, VectorField
from cad.scenarios import critical_map, pcm_scenario, symmetries, wz_section
from cad.sigma import (Background, BraneLeaf, ConstantMetric, ConstraintViolation, LatticeMap, LiftError,
                       LightConeLattice, PolyMetric, PreconditionError, VectorTarget,
                       boundary_residual, criticality_via_FL, dalembert, el_residual, flow_preserves,
                       leaf_bc, max_residual, neumann_bc, noether_current, parse_generator, solve_sr)

VOLUME = ClosedThreeForm(Form.dx(3, 0, 1, 2))


def _x(i, c=1.0, n=3):
    return Poly.var(n, i, c)


def _map3(lat, fn):
    T1, T2 = np.meshgrid(lat.t1, lat.t2, indexing="ij")
    return LatticeMap(fn(T1, T2), VectorTarget(3), lat)


# lattice

def test_lattice_validation():
    with pytest.raises(ValueError):
        LightConeLattice(1, 4, 0.1, 0.1)
    with pytest.raises(ValueError):
        LightConeLattice(4, 4, 0.0, 0.1)
    with pytest.raises(ValueError):
        LightConeLattice(4, 5, 0.1, 0.1, "wedge")
    lat = LightConeLattice.square(4, shape="wedge")
    assert lat.mask().sum() == 15 and len(lat.cells()) == 6


def test_parse_generator():
    assert parse_generator("random-smooth(7)") == ("random-smooth", 7)
    assert parse_generator("dalembert") == ("dalembert", 0)
    with pytest.raises(ValueError):
        parse_generator("gaussian")


# solver

@given(seed=st.integers(0, 10**6), c=st.floats(0.5, 4.0))
@settings(max_examples=10)
def test_free_boson_is_exact(seed, c):
    lat = LightConeLattice.square(24)
    ini, exact = dalembert(lat, dim=1, seed=seed)
    bg = Background(r=ConstantMetric(np.array([[c]])))
    f = solve_sr(bg, lat, VectorTarget(1), ini)
    assert np.max(np.abs(f.values - exact)) <= 1e-12


def test_constant_background_decouples_components():
    lat = LightConeLattice.square(24)
    ini, exact = dalembert(lat, dim=2, seed=2)
    bg = Background(r=ConstantMetric(np.array([[2.0, 0.5], [-0.5, 1.0]])))
    f = solve_sr(bg, lat, VectorTarget(2), ini)
    assert np.max(np.abs(f.values - exact)) <= 1e-12


def test_pcm_centered_residual_is_second_order():
    scen = pcm_scenario()
    res = []
    for N in (16, 32, 64):
        f = critical_map(scen, LightConeLattice.square(N), "pcm-geodesic")
        assert max_residual(el_residual(f, scen.sr())) <= 1e-8
        res.append(max_residual(el_residual(f, scen.sr(), "centered")))
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all(np.abs(ratios - 4.0) <= 0.6), ratios


def test_solver_output_passes_box_residual():
    lat = LightConeLattice.square(16)
    r = PolyMetric(((Poly.const(2, 1.0) + Poly.var(2, 1, 0.3), Poly.var(2, 0, 0.2)),
                    (Poly.var(2, 0, -0.2), Poly.const(2, 1.0))))
    bg = Background(r=r)
    ini, _ = dalembert(lat, dim=2, seed=4)
    f = solve_sr(bg, lat, VectorTarget(2), ini)
    assert max_residual(el_residual(f, bg)) <= 1e-8


def test_degenerate_background_is_reported():
    lat = LightConeLattice.square(8)
    ini, _ = dalembert(lat, dim=1, seed=0)
    with pytest.raises(DegenerateBackgroundError):
        solve_sr(Background(r=ConstantMetric(np.zeros((1, 1)))), lat, VectorTarget(1), ini)


# Wess-Zumino residual

def test_wz_residual_vanishes_without_H(rng):
    lat = LightConeLattice.square(8)
    f = LatticeMap(rng.normal(size=(9, 9, 3)), VectorTarget(3), lat)
    assert max_residual(el_residual(f, Background())) == 0.0


def test_wz_residual_is_planar_determinant():
    lat = LightConeLattice.square(8)
    f = _map3(lat, lambda a, b: np.stack([np.sin(a + b * b), a * b + b, np.full_like(a, 0.3)], -1))
    res = el_residual(f, Background(H=VOLUME))
    X = f.values
    # cell-averaged velocities, evaluated by hand
    v1 = 0.5 * (X[1:, :-1] - X[:-1, :-1] + X[1:, 1:] - X[:-1, 1:]) / lat.h1
    v2 = 0.5 * (X[:-1, 1:] - X[:-1, :-1] + X[1:, 1:] - X[1:, :-1]) / lat.h2
    det = v1[..., 0] * v2[..., 1] - v1[..., 1] * v2[..., 0]
    np.testing.assert_allclose(res[..., 2], det, atol=1e-12)
    np.testing.assert_allclose(res[..., :2], 0.0, atol=1e-12)


def test_omega_shift_leaves_residual_unchanged():
    lat = LightConeLattice.square(8)
    f = _map3(lat, lambda a, b: np.stack([a, b * b, a * b], -1))
    omega = Form.dx(3, 0, 1, coef=_x(2))
    tau = Form.dx(3, 1, 2)  # closed
    a = el_residual(f, Background(r=ConstantMetric(np.eye(3)), H=VOLUME, omega=omega))
    b = el_residual(f, Background(r=ConstantMetric(np.eye(3)), H=VOLUME, omega=omega + tau))
    np.testing.assert_array_equal(a, b)


# criticality through F_L

def test_tangent_bundle_reproduces_wz_residual(rng):
    lat = LightConeLattice.square(8)
    f = _map3(lat, lambda a, b: np.stack([np.cos(a) * b, a + b, a * a - b], -1))
    H = ClosedThreeForm(Form.dx(3, 0, 1, 2, coef=Poly.const(3) + _x(0) * _x(1)))
    lhs = criticality_via_FL(f, LagrangianFrame.tangent(3), H)
    rhs = el_residual(f, Background(H=H))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_dirac_structure_gives_zero(rng):
    lat = LightConeLattice.square(8)
    f = LatticeMap(rng.normal(size=(9, 9, 3)), VectorTarget(3), lat)
    omega = (Form.dx(3, 0, 2, coef=_x(1)) + Form.dx(3, 1, 2, coef=_x(0)))  # d(x1 x2 dx3)
    assert omega.d().max_abs_coef() == 0.0
    assert max_residual(criticality_via_FL(f, LagrangianFrame.graph(omega))) <= 1e-12


def test_graph_connection_residual_is_second_order():
    # rank-one maps are critical for S = int f*omega; the discrete lift sees O(h^2)
    L = LagrangianFrame.graph(Form.dx(3, 0, 1, coef=_x(2)))
    hs, vals = [], []
    for N in (16, 32, 64):
        lat = LightConeLattice.square(N)
        f = _map3(lat, lambda a, b: (lambda s: np.stack([np.cos(s), np.sin(s), 0.3 * s * s], -1))(a + 2 * b))
        hs.append(lat.h1)
        vals.append(max_residual(criticality_via_FL(f, L)))
    assert fit_order(hs, vals) >= 1.9


def test_lift_failure():
    L = LagrangianFrame((GeneralizedSection.vector(VectorField.coord(3, 0)),
                         GeneralizedSection.covector(Form.dx(3, 1)), GeneralizedSection.covector(Form.dx(3, 2))))
    lat = LightConeLattice.square(4)
    with pytest.raises(LiftError):
        criticality_via_FL(_map3(lat, lambda a, b: np.stack([a, b, a * b], -1)), L)


# symmetries and Noether currents

def test_flow_preserves_examples(rng):
    pts = rng.uniform(-1, 1, (32, 3))
    tg = VectorTarget(3)
    assert flow_preserves(GeneralizedSection.vector(VectorField.coord(3, 1)), Background(), tg, pts) == 0.0
    bg = Background(H=VOLUME)
    assert flow_preserves(wz_section(+1.0), bg, tg, pts) <= 1e-14
    assert flow_preserves(wz_section(-1.0), bg, tg, pts) == pytest.approx(2.0)


def test_killing_fields_of_constant_background(rng):
    pts = rng.uniform(-1, 1, (32, 2))
    tg = VectorTarget(2)
    bg = Background(r=ConstantMetric(np.array([[1.0, 0.7], [-0.7, 1.0]])))
    rot = GeneralizedSection.vector(VectorField((-Poly.var(2, 1), Poly.var(2, 0))))
    dil = GeneralizedSection.vector(VectorField((Poly.var(2, 0), Poly.zero(2))))
    assert flow_preserves(rot, bg, tg, pts) <= 1e-14
    assert flow_preserves(dil, bg, tg, pts) > 0.5


def _free_boson(N=32, c=2.0, seed=1):
    lat = LightConeLattice.square(N)
    bg = Background(r=ConstantMetric(np.array([[c]])))
    ini, _ = dalembert(lat, dim=1, seed=seed)
    return solve_sr(bg, lat, VectorTarget(1), ini), bg


def test_exact_form_current_is_closed_to_roundoff():
    f, bg = _free_boson()
    J1, J2, closure = noether_current(f, GeneralizedSection.covector(Form.dx(1, 0)), bg)
    lat = f.lattice
    np.testing.assert_allclose(J1, np.diff(f.values[..., 0], axis=0), atol=1e-15)
    assert max_residual(closure) * lat.h1 * lat.h2 <= 1e-12


def test_translation_current_is_the_wave_equation():
    f, bg = _free_boson()
    _, _, closure = noether_current(f, GeneralizedSection.vector(VectorField.coord(1, 0)), bg)
    assert max_residual(closure) <= 1e-8
    # on a non-critical map the closure is the discrete wave operator
    g = LatticeMap(f.values + 0.1 * f.lattice.t1[:, None, None] ** 2 * f.lattice.t2[None, :, None], f.target, f.lattice)
    _, _, cl = noether_current(g, GeneralizedSection.vector(VectorField.coord(1, 0)), bg)
    np.testing.assert_allclose(np.abs(cl), np.abs(el_residual(g, bg)[..., 0]), atol=1e-9)


def test_noether_precondition():
    lat = LightConeLattice.square(8)
    bg = Background(r=ConstantMetric(np.eye(3)), H=VOLUME)
    f = solve_sr(bg, lat, VectorTarget(3), dalembert(lat, dim=3, seed=5)[0])
    with pytest.raises(PreconditionError):
        noether_current(f, wz_section(-1.0), bg)
    _, _, cl = noether_current(f, wz_section(+1.0), bg)
    assert np.all(np.isfinite(cl))


def test_pcm_left_symmetry_currents_converge():
    scen = pcm_scenario()
    hs, vals = [], []
    for N in (8, 16, 32):
        lat = LightConeLattice.square(N)
        f = critical_map(scen, lat, "pcm-geodesic")
        vals.append(max(max_residual(noether_current(f, s, scen.sr())[2]) for _, s in symmetries(scen)))
        hs.append(lat.h1)
    assert fit_order(hs, vals) >= 1.9


# boundaries

def _wedge_free_boson(N, boundary):
    lat = LightConeLattice.square(N, shape="wedge")
    bg = Background(r=ConstantMetric(np.eye(1)))
    row = (0.3 * np.sin(2 * lat.t1))[:, None]
    return solve_sr(bg, lat, VectorTarget(1), {"row": row}, boundary=boundary), bg


def test_neumann_and_dirichlet_free_boson():
    for N in (16, 32):
        f, bg = _wedge_free_boson(N, neumann_bc)
        res = boundary_residual(f, bg, BraneLeaf(np.zeros(1), np.eye(1)))
        assert res["membership"] == 0.0  # the whole line is the leaf
        assert res["beta"] <= 5.0 * f.lattice.h1 ** 2
        f, bg = _wedge_free_boson(N, {"dirichlet": np.zeros((N + 1, 1))})
        res = boundary_residual(f, bg, BraneLeaf(np.zeros(1), np.zeros((0, 1))))
        assert res["beta"] == 0.0
        assert res["membership"] <= 5.0 * f.lattice.h1 ** 2
        assert np.all(f.values[np.arange(N + 1), np.arange(N + 1)] == 0.0)


def test_boundary_off_leaf_is_a_violation():
    f, bg = _wedge_free_boson(16, {"dirichlet": np.zeros((17, 1))})
    with pytest.raises(ConstraintViolation):
        boundary_residual(f, bg, BraneLeaf(np.ones(1), np.zeros((0, 1))))


def test_h_brane_residuals_are_second_order():
    c = 0.4
    bg = Background(r=ConstantMetric(np.eye(3)), H=VOLUME)  # H = d(x3 dx1 dx2)
    leaf = BraneLeaf(np.array([0.0, 0.0, c]), np.eye(3)[:2], c * np.array([[0.0, 1.0], [-1.0, 0.0]]))
    hs, mem, beta = [], [], []
    for N in (64, 128, 256):
        lat = LightConeLattice.square(N, shape="wedge")
        row = np.stack([0.3 * np.sin(2 * lat.t1), 0.2 * lat.t1 ** 2, c + 0.1 * lat.t1], -1)
        f = solve_sr(bg, lat, VectorTarget(3), {"row": row}, boundary=leaf_bc(leaf))
        assert max_residual(el_residual(f, bg)) <= 1e-8
        res = boundary_residual(f, bg, leaf)
        hs.append(lat.h1)
        mem.append(res["membership"])
        beta.append(res["beta"])
    assert fit_order(hs, mem) >= 1.9
    assert fit_order(hs, beta) >= 1.9
