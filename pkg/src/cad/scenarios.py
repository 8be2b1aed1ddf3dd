"""Shipped scenario data: duality presets, closed 3-forms on R^3, splittings, branes, symmetries."""
from __future__ import annotations

import numpy as np

from .courant import ClosedThreeForm, GeneralizedSection, LagrangianFrame, coordinate_leaf
from .duality import DualityScenario
from .poly import Form, Poly, VectorField
from .presets import double_model
from .sigma import (FrameSymmetry, LatticeMap, LightConeLattice, dalembert, geodesic_data,
                    parse_generator, random_smooth, right_invariant_symmetry, solve_sr)

DUALITY_PRESETS = ("abelian-r4", "abelian-selfdual", "semiabelian-2d", "semiabelian-su2", "branes-abelian")


def _graph_identity(n):
    return np.hstack([np.eye(n), np.eye(n)])


def duality_preset(name: str) -> tuple:
    """(scenario, defaults) for a shipped preset."""
    if name == "abelian-r4":
        # R_D = span(e + 4 e*): the M/G side (G = the second factor) sees r = 4
        return DualityScenario(double_model("abelian-1"), np.array([[1.0, 4.0]]), "gprime"), \
            {"N": 64, "T": 1.0, "initial": "dalembert", "shape": "rectangle", "random": False}
    if name == "abelian-selfdual":
        return DualityScenario(double_model("abelian-1"), np.array([[1.0, 1.0]]), "gprime"), \
            {"N": 32, "T": 1.0, "initial": "dalembert", "shape": "rectangle", "random": False}
    if name == "semiabelian-2d":
        return DualityScenario(double_model("affine-2d"), _graph_identity(2), "g"), \
            {"N": 16, "T": 1.0, "initial": "pcm-geodesic", "shape": "rectangle"}
    if name == "semiabelian-su2":
        # structure group SU(2): the input side is the dual of the principal chiral model
        return DualityScenario(double_model("su2"), _graph_identity(3), "g"), \
            {"N": 16, "T": 1.0, "initial": "pcm-geodesic", "shape": "rectangle"}
    if name == "branes-abelian":
        return DualityScenario(double_model("abelian-1"), np.array([[1.0, 4.0]]), "gprime"), \
            {"N": 16, "T": 1.0, "initial": "dalembert", "shape": "wedge", "CD": [[1.0, 0.0]]}
    raise KeyError(f"unknown preset {name!r}; shipped: {', '.join(DUALITY_PRESETS)}")


def pcm_scenario() -> DualityScenario:
    """The su(2) double read from the principal-chiral-model side (structure group G*)."""
    return DualityScenario(double_model("su2"), _graph_identity(3), "gprime")


_GEODESIC_A = np.array([0.8, 0.3, -0.2, 0.5])
_GEODESIC_B = np.array([0.1, -0.6, 0.5, -0.3])


def critical_map(scen: DualityScenario, lat: LightConeLattice, generator: str, dual=False, boundary=None) -> LatticeMap:
    """Solver output for the named initial-data generator (or the random non-critical map)."""
    kind, seed = parse_generator(generator)
    tg = scen.dual_target if dual else scen.target
    bg = scen.sr(dual)
    n = tg.dim
    if kind == "random-smooth":
        return random_smooth(lat, tg, seed)
    if kind == "dalembert":
        ini, _ = dalembert(lat, dim=n, seed=seed + 3)
        data = {"row": tg.from_coords(ini["row"]), "col": tg.from_coords(ini["col"])}
        if lat.shape == "wedge":
            data = {"row": tg.from_coords(0.3 * np.sin(2 * lat.t1)[:, None] + 0.2 * lat.t1[:, None] ** 2
                                          + np.zeros((1, n)))}
    else:
        rng = np.random.default_rng(seed)
        a, b = _GEODESIC_A[:n], _GEODESIC_B[:n]
        if seed:
            a, b = a + 0.1 * rng.standard_normal(n), b + 0.1 * rng.standard_normal(n)
        data = geodesic_data(lat, tg, a, b)
        if lat.shape == "wedge":
            data = {"row": data["row"]}
    return solve_sr(bg, lat, tg, data, scen.newton, boundary=boundary)


def analytic_abelian_dual(lat: LightConeLattice, radius2: float, seed=0):
    """Hodge dual of the d'Alembert solution of `critical_map`: f~ = R^2 (p(t1) - q(t2))."""
    from .sigma import dalembert_profiles
    P, Q, _, _ = dalembert_profiles(seed=seed + 3)
    T1, T2 = np.meshgrid(lat.t1, lat.t2, indexing="ij")
    return radius2 * (P(T1) - Q(T2))[..., 0]


def symmetries(scen: DualityScenario, dual=False) -> list:
    """Sections generating symmetries of the shipped backgrounds, as (name, section)."""
    tg = scen.dual_target if dual else scen.target
    alg = scen.model.algebra
    if np.allclose(alg.c, 0):
        # free boson: translations and the exact 1-form dx
        n = tg.dim
        out = []
        for a in range(n):
            e = np.eye(n)[a]
            out.append((f"translation-{a}", FrameSymmetry(lambda p, e=e: np.broadcast_to(e, p.shape[:-2] + e.shape),
                                                          lambda p: np.zeros(p.shape[:-2] + (n, n)))))
            out.append((f"dx-{a}", FrameSymmetry(lambda p: np.zeros(p.shape[:-2] + (n,)),
                                                 lambda p: np.zeros(p.shape[:-2] + (n, n)),
                                                 lambda p, e=e: np.broadcast_to(e, p.shape[:-2] + e.shape),
                                                 lambda p: np.zeros(p.shape[:-2] + (n, n)))))
        return out
    if np.allclose(tg.c, 0) and alg.dim == 6:
        # non-abelian dual of su(2): rotations of the g* chart
        eps = np.zeros((3, 3, 3))
        for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
            eps[i, j, k], eps[j, i, k] = 1.0, -1.0
        return [(f"rotation-{a}", FrameSymmetry(lambda p, X=eps[a]: tg.coords(p) @ X.T,
                                                lambda p, X=eps[a]: np.broadcast_to(X, p.shape[:-2] + (3, 3))))
                for a in range(3)]
    if alg.dim == 6 and not np.allclose(tg.c, 0):
        # principal chiral model: left multiplications, generated by right-invariant fields
        return [(f"left-{a}", right_invariant_symmetry(tg, e)) for a, e in enumerate(np.eye(3))]
    return []


# ---------------------------------------------------------------------------
# polynomial data on R^3

def _x(i, c=1.0):
    return Poly.var(3, i, c)


def h_presets() -> dict:
    """Closed 3-forms on R^3 (every 3-form on R^3 is closed)."""
    one = Poly.const(3)
    return {
        "zero": ClosedThreeForm.zero(3),
        "volume": ClosedThreeForm(Form.dx(3, 0, 1, 2)),
        "quadratic": ClosedThreeForm(Form.dx(3, 0, 1, 2, coef=one + _x(0) * _x(0))),
        "cubic": ClosedThreeForm(Form.dx(3, 0, 1, 2, coef=_x(0) * _x(1) + _x(2) * _x(2) * _x(2, 0.5))),
    }


def omega_presets() -> dict:
    """2-forms for graph splittings."""
    return {
        "x3-dx12": Form.dx(3, 0, 1, coef=_x(2)),
        "mixed": Form.dx(3, 0, 1, coef=_x(0) * _x(2)) + Form.dx(3, 1, 2, coef=_x(1) * _x(1)),
        "cubic": Form.dx(3, 0, 2, coef=_x(0) * _x(1) * _x(2)) + Form.dx(3, 0, 1, coef=_x(2, 2.0)),
    }


def leaf_presets() -> list:
    """(name, L, H, leaf, beta) with d beta = H|_leaf."""
    c = 0.4
    return [
        ("plane-H0", LagrangianFrame.tangent(3), None, coordinate_leaf(3, {2: 0.0}), Form.zero(2, 2)),
        ("plane-volume", LagrangianFrame.tangent(3), h_presets()["volume"], coordinate_leaf(3, {2: 0.0}), Form.zero(2, 2)),
        ("x3-const", LagrangianFrame.tangent(3), ClosedThreeForm(omega_presets()["x3-dx12"].d()),
         coordinate_leaf(3, {2: c}), Form.dx(2, 0, 1, coef=Poly.const(2, c))),
        # a 3-dimensional leaf, where d beta = H|_N is a genuine condition
        ("r4-hyperplane", None, ClosedThreeForm(Form.dx(4, 0, 1, 2, coef=Poly.const(4) + Poly.var(4, 2) * Poly.var(4, 2))
                                                + Form.dx(4, 0, 1, 3, coef=Poly.var(4, 3))),
         coordinate_leaf(4, {3: c}), Form.dx(3, 0, 1, coef=Poly.var(3, 2) + Poly.var(3, 2, 1 / 3) * Poly.var(3, 2) * Poly.var(3, 2))),
    ]


def wz_section(sign=1.0) -> GeneralizedSection:
    """(e1, sign * x2 dx3) on R^3; invariant for H = dx1^dx2^dx3 exactly when sign = +1."""
    return GeneralizedSection(VectorField.coord(3, 0), Form.dx(3, 2, coef=_x(1, sign)))


def random_sections(n, rng, count=3, degree=3, scale=0.5):
    return [GeneralizedSection.random(n, degree, rng, scale) for _ in range(count)]
