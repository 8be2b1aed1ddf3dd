import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cad.liealg import (DomainError, InvalidInputError, ManinPair, ManinTriple, NonFactorizableError,
                        QuadraticLieAlgebra, StructureError, build_semiabelian_double, closure_residual,
                        factorize, isotropy_residual, validate_algebra)
from cad.presets import (affine_2d_constants, algebra_from_json, algebra_to_json, double_model,
                         heisenberg_constants, su2_constants)

MODELS = ["abelian-1", "abelian-2", "affine-2d", "su2", "heisenberg"]


def brute_force_residuals(c, B):
    """Loop oracle, independent of the vectorized checks."""
    n = c.shape[0]

    def br(x, y):
        out = np.zeros(n)
        for i in range(n):
            for j in range(n):
                out += x[i] * y[j] * c[i, j]
        return out

    E = np.eye(n)
    jac = adinv = 0.0
    for i, j, k in itertools.product(range(n), repeat=3):
        x, y, z = E[i], E[j], E[k]
        jac = max(jac, np.max(np.abs(br(x, br(y, z)) + br(y, br(z, x)) + br(z, br(x, y)))))
        adinv = max(adinv, abs(br(x, y) @ B @ z + y @ B @ br(x, z)))
    return jac, adinv


def test_abelian_double_is_valid():
    d = build_semiabelian_double(np.zeros((1, 1, 1))).algebra
    np.testing.assert_array_equal(d.B, [[0, 1], [1, 0]])
    rep = validate_algebra(d)
    assert rep.passed
    assert all(v == 0.0 for v in rep.residuals.values())


def test_singular_pairing_fails_nondegeneracy():
    rep = validate_algebra(QuadraticLieAlgebra(np.zeros((2, 2, 2)), [[1.0, 0.0], [0.0, 0.0]]))
    assert rep.residuals["nondegeneracy"] == 1.0
    assert not rep.passed


@pytest.mark.parametrize("cg", [su2_constants(), affine_2d_constants(), heisenberg_constants()])
def test_semiabelian_double_against_loop_oracle(cg):
    t = build_semiabelian_double(cg)
    d = t.algebra
    assert validate_algebra(d).passed
    jac, adinv = brute_force_residuals(d.c, d.B)
    assert jac <= 1e-12 and adinv <= 1e-12
    n = cg.shape[0]
    for basis in (t.g_basis, t.gprime_basis):
        assert isotropy_residual(d, basis) == 0.0
        assert closure_residual(d, basis) <= 1e-12
        assert basis.shape[0] == n


def test_affine_dual_is_abelian_lagrangian():
    t = build_semiabelian_double(affine_2d_constants())
    gs = t.gprime_basis
    assert np.max(np.abs(np.einsum("ai,bj,ijk->abk", gs, gs, t.algebra.c))) == 0.0


def test_jacobi_failure_rejected():
    c = np.zeros((3, 3, 3))
    c[0, 1, 1], c[1, 0, 1] = 1.0, -1.0
    c[1, 2, 0], c[2, 1, 0] = 1.0, -1.0
    with pytest.raises(InvalidInputError):
        build_semiabelian_double(c)


def test_shape_mismatch_is_structural():
    with pytest.raises(StructureError):
        QuadraticLieAlgebra(np.zeros((2, 2, 2)), np.eye(3))


def test_manin_pair_requires_lagrangian_subalgebra():
    d = build_semiabelian_double(su2_constants()).algebra
    with pytest.raises(InvalidInputError):
        ManinPair(d, np.eye(6)[[0, 1, 3]])  # e1, e2, e1*: not isotropic
    with pytest.raises(InvalidInputError):
        ManinTriple(ManinPair(d, np.eye(6)[:3]), np.eye(6)[:3])


@pytest.mark.parametrize("name", MODELS)
def test_exp_zero_is_identity(name):
    g = double_model(name).group
    np.testing.assert_array_equal(g.exp(np.zeros(g.algebra.dim)), np.eye(g.size))


def _series_exp(A, terms=40):
    out, term = np.eye(A.shape[0]), np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


@pytest.mark.parametrize("name", MODELS)
def test_Ad_of_exp_is_exp_of_ad(name, rng):
    g = double_model(name).group
    for _ in range(5):
        x = rng.uniform(-0.5, 0.5, g.algebra.dim)
        lhs = g.adjoint(g.exp(x))
        rhs = _series_exp(g.algebra.ad(x))
        assert np.max(np.abs(lhs - rhs)) <= 1e-10


@pytest.mark.parametrize("name", MODELS)
def test_exp_matches_series_up_to_unit_norm(name, rng):
    g = double_model(name).group
    x = rng.normal(size=(20, g.algebra.dim))
    x /= np.linalg.norm(g.matrix(x), axis=(-2, -1))[:, None]
    E = g.exp(x)
    for xi, Ei in zip(x, E):
        assert np.max(np.abs(Ei - _series_exp(g.matrix(xi)))) <= 1e-12


vec6 = arrays(np.float64, 6, elements=st.floats(-0.5, 0.5))


@given(vec6)
def test_log_inverts_exp_su2(x):
    g = double_model("su2").group
    x = x / max(1.0, np.linalg.norm(x) / 0.5)
    assert np.max(np.abs(g.log(g.exp(x)) - x)) <= 1e-10


@given(arrays(np.float64, 6, elements=st.floats(-0.5, 0.5)))
def test_log_inverts_exp_heisenberg(x):
    g = double_model("heisenberg").group
    x = x / max(1.0, np.linalg.norm(x) / 0.5)
    assert np.max(np.abs(g.log(g.exp(x)) - x)) <= 1e-10


def test_log_outside_domain_raises():
    g = double_model("su2").group
    R = g.exp(np.array([np.pi, 0, 0, 0, 0, 0]))  # rotation by pi: eigenvalue -1
    with pytest.raises(DomainError):
        g.log(R)


@given(vec6, vec6, vec6)
def test_Ad_preserves_pairing(m, x, y):
    model = double_model("su2")
    g, alg = model.group, model.algebra
    M = g.exp(m)
    assert abs(alg.pair(g.Ad(M, x), g.Ad(M, y)) - alg.pair(x, y)) <= 1e-10


def test_factorize_identity():
    model = double_model("su2")
    t = model.triple
    a, b = factorize(np.eye(model.group.size), model.group, t.gprime_basis, t.g_basis)
    np.testing.assert_allclose(a, np.eye(model.group.size), atol=1e-15)
    np.testing.assert_allclose(b, np.eye(model.group.size), atol=1e-15)


def test_factorize_semidirect_closed_form(rng):
    model = double_model("su2")
    g, t = model.group, model.triple
    m = g.exp(rng.uniform(-1, 1, 6))
    a, b, it = factorize(m, g, t.gprime_basis, t.g_basis, return_iterations=True)
    assert it == 0
    assert np.max(np.abs(m - a @ b)) == 0.0


@pytest.mark.parametrize("name", ["su2", "affine-2d", "heisenberg", "abelian-2"])
@given(data=st.data())
def test_factorize_recovers_factors(name, data):
    model = double_model(name)
    g, t = model.group, model.triple
    n = t.half
    xp = data.draw(arrays(np.float64, n, elements=st.floats(-0.1, 0.1)))
    x = data.draw(arrays(np.float64, n, elements=st.floats(-0.1, 0.1)))
    A, B = g.exp(xp @ t.g_basis), g.exp(x @ t.gprime_basis)
    # order g . g' exercises the Newton branch even for semi-abelian models
    a, b = factorize(A @ B, g, t.g_basis, t.gprime_basis)
    assert np.max(np.abs(a - A)) <= 1e-10 and np.max(np.abs(b - B)) <= 1e-10


def test_factorize_failure_is_reported():
    model = double_model("su2")
    g, t = model.group, model.triple
    m = g.exp(np.array([np.pi, 0, 0, 0, 0, 0])) @ g.exp(np.array([0, 0, 0, 0.5, 0, 0]))
    with pytest.raises(NonFactorizableError):
        factorize(m, g, t.g_basis, t.gprime_basis)


def test_algebra_json_roundtrip():
    model = double_model("heisenberg")
    data = algebra_to_json(model.triple, model.group)
    assert set(data) == {"dim", "c", "B", "g_basis", "gprime_basis", "generators"}
    triple, grp = algebra_from_json(data)
    np.testing.assert_array_equal(triple.algebra.c, model.algebra.c)
    np.testing.assert_array_equal(grp.generators, model.group.generators)
    bad = dict(data)
    del bad["generators"]
    with pytest.raises(KeyError):
        algebra_from_json(bad)


@pytest.mark.parametrize("name", ["affine-2d", "su2", "heisenberg"])
@given(seed=st.integers(0, 2**31), scale=st.floats(0.01, 3.0))
@settings(max_examples=10)
def test_group_exp_matches_scipy_expm(name, seed, scale):
    from scipy.linalg import expm
    grp = double_model(name).group
    x = np.random.default_rng(seed).normal(size=(4, grp.algebra.dim)) * scale
    ref = np.stack([expm(M) for M in grp.matrix(x)])
    np.testing.assert_allclose(grp.exp(x), ref, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(ref).max()))
