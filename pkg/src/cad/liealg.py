"""Quadratic Lie algebras, Manin pairs/triples and matrix models of the double.

Conventions: ``c[i, j, k]`` are the structure constants, ``[e_i, e_j] = c[i, j, k] e_k``;
``B[i, j] = <e_i, e_j>``. Subspaces are stored as row-basis matrices in d-coordinates.
Group elements are square matrices; every routine on them accepts a leading batch axis.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

ALG_TOL = 1e-12


class StructureError(ValueError):
    """Inconsistent dimensions of algebraic data."""


class InvalidInputError(ValueError):
    pass


class DomainError(ValueError):
    """Matrix logarithm requested outside its principal domain."""


class NonFactorizableError(RuntimeError):
    """Newton factorization m = a.b failed (point outside the local chart)."""


@dataclass(frozen=True)
class QuadraticLieAlgebra:
    c: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        B = np.asarray(self.B, dtype=float)
        n = c.shape[0]
        if c.shape != (n, n, n) or B.shape != (n, n):
            raise StructureError(f"structure constants {c.shape} and pairing {B.shape} disagree")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "B", B)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def bracket(self, x, y):
        return np.einsum("...i,...j,ijk->...k", x, y, self.c)

    def ad(self, x):
        """Matrix of ad_x acting on column vectors (batched over x)."""
        return np.einsum("...i,ijk->...kj", x, self.c)

    def pair(self, x, y):
        return np.einsum("...i,ij,...j->...", x, self.B, y)

    @property
    def nondegenerate(self) -> bool:
        return abs(np.linalg.det(self.B)) > ALG_TOL

    def direct_sum(self, other: "QuadraticLieAlgebra") -> "QuadraticLieAlgebra":
        n, m = self.dim, other.dim
        c = np.zeros((n + m,) * 3)
        c[:n, :n, :n] = self.c
        c[n:, n:, n:] = other.c
        return QuadraticLieAlgebra(c, sla.block_diag(self.B, other.B))

    def transformed(self, T) -> "QuadraticLieAlgebra":
        """Same algebra written in the basis given by the columns of T."""
        T = np.asarray(T, dtype=float)
        Ti = np.linalg.inv(T)
        c = np.einsum("ia,jb,ijk,ck->abc", T, T, self.c, Ti)
        return QuadraticLieAlgebra(c, T.T @ self.B @ T)

    def to_json(self) -> dict:
        return {"dim": self.dim, "c": self.c.tolist(), "B": self.B.tolist()}


def jacobi_residual(c) -> float:
    c = np.asarray(c, dtype=float)
    # [e_i,[e_j,e_l]] + cyclic
    t = np.einsum("jlm,imk->ijlk", c, c)
    return float(np.max(np.abs(t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)), initial=0.0))


@dataclass
class ValidationReport:
    residuals: dict
    tolerance: float = ALG_TOL

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for k, v in self.residuals.items() if k != "nondegeneracy") and \
            self.residuals["nondegeneracy"] == 0.0

    def __str__(self):
        rows = [f"  {k:14s} {v:.3e}" for k, v in self.residuals.items()]
        return "\n".join(["ValidationReport(passed=%s)" % self.passed] + rows)


def validate_algebra(a: QuadraticLieAlgebra) -> ValidationReport:
    """Per-invariant max residuals; ``nondegeneracy`` is 0.0 when det(B) != 0, else 1.0."""
    c, B = a.c, a.B
    ad_inv = np.einsum("ijm,mk->ijk", c, B)  # <[e_i,e_j],e_k>
    res = {
        "antisymmetry": float(np.max(np.abs(c + c.transpose(1, 0, 2)), initial=0.0)),
        "jacobi": jacobi_residual(c),
        "ad_invariance": float(np.max(np.abs(ad_inv + ad_inv.transpose(0, 2, 1)), initial=0.0)),
        "symmetry": float(np.max(np.abs(B - B.T), initial=0.0)),
        "nondegeneracy": 0.0 if a.nondegenerate else 1.0,
    }
    return ValidationReport(res)


def _rows(basis, n):
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if basis.shape[1] != n:
        raise StructureError(f"subspace basis of width {basis.shape[1]} in a {n}-dim algebra")
    return basis


def closure_residual(a: QuadraticLieAlgebra, basis) -> float:
    """Distance of [span, span] from span."""
    S = _rows(basis, a.dim)
    br = np.einsum("ai,bj,ijk->abk", S, S, a.c).reshape(-1, a.dim)
    coef, *_ = np.linalg.lstsq(S.T, br.T, rcond=None)
    return float(np.max(np.abs(S.T @ coef - br.T), initial=0.0))


def isotropy_residual(a: QuadraticLieAlgebra, basis) -> float:
    S = _rows(basis, a.dim)
    return float(np.max(np.abs(S @ a.B @ S.T), initial=0.0))


@dataclass(frozen=True)
class ManinPair:
    algebra: QuadraticLieAlgebra
    g_basis: np.ndarray

    def __post_init__(self):
        g = _rows(self.g_basis, self.algebra.dim)
        object.__setattr__(self, "g_basis", g)
        if 2 * np.linalg.matrix_rank(g) != self.algebra.dim:
            raise InvalidInputError("g must have half the dimension of d")
        if isotropy_residual(self.algebra, g) > ALG_TOL or closure_residual(self.algebra, g) > ALG_TOL:
            raise InvalidInputError("g is not a Lagrangian subalgebra")


@dataclass(frozen=True)
class ManinTriple:
    pair: ManinPair
    gprime_basis: np.ndarray

    def __post_init__(self):
        a = self.pair.algebra
        gp = _rows(self.gprime_basis, a.dim)
        object.__setattr__(self, "gprime_basis", gp)
        if isotropy_residual(a, gp) > ALG_TOL or closure_residual(a, gp) > ALG_TOL:
            raise InvalidInputError("g' is not a Lagrangian subalgebra")
        if np.linalg.matrix_rank(np.vstack([self.g_basis, gp])) != a.dim:
            raise InvalidInputError("g and g' are not complementary")

    @property
    def algebra(self) -> QuadraticLieAlgebra:
        return self.pair.algebra

    @property
    def g_basis(self) -> np.ndarray:
        return self.pair.g_basis

    @property
    def half(self) -> int:
        return self.algebra.dim // 2

    def swapped(self) -> "ManinTriple":
        return ManinTriple(ManinPair(self.algebra, self.gprime_basis), self.g_basis)

    def split(self, x):
        """Coordinates of x in d = g (+) g': returns (coords in g basis, coords in g' basis)."""
        K = np.vstack([self.g_basis, self.gprime_basis]).T
        coef = np.linalg.solve(K, np.moveaxis(np.asarray(x, float), -1, 0).reshape(K.shape[0], -1))
        coef = coef.T.reshape(np.shape(x))
        n = self.half
        return coef[..., :n], coef[..., n:]


def build_semiabelian_double(g_constants) -> ManinTriple:
    """d = g (+) g* with [x+a, y+b] = [x,y] + ad*_x b - ad*_y a and <x+a, y+b> = a(y) + b(x)."""
    cg = np.asarray(g_constants, dtype=float)
    if cg.ndim == 1 and cg.size == 0:
        cg = np.zeros((0, 0, 0))
    n = cg.shape[0]
    if cg.shape != (n, n, n):
        raise StructureError("structure constants must be n x n x n")
    if jacobi_residual(cg) > ALG_TOL or np.max(np.abs(cg + cg.transpose(1, 0, 2)), initial=0.0) > ALG_TOL:
        raise InvalidInputError("input structure constants violate antisymmetry or Jacobi")
    c = np.zeros((2 * n,) * 3)
    c[:n, :n, :n] = cg
    for i, j, k in itertools.product(range(n), repeat=3):
        # ad*_{e_i} e^j = -c[i,k,j] e^k
        c[i, n + j, n + k] = -cg[i, k, j]
        c[n + j, i, n + k] = cg[i, k, j]
    B = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    d = QuadraticLieAlgebra(c, B)
    eye = np.eye(2 * n)
    return ManinTriple(ManinPair(d, eye[:n]), eye[n:])


# ---------------------------------------------------------------------------
# matrix groups

def _log_series(X, tol=1e-17):
    """log(I + X) by the Mercator series, batched; requires ||X|| < 1/2."""
    nrm = float(np.sqrt(np.max(np.sum(X * X, axis=(-2, -1)), initial=0.0)))
    if nrm == 0.0:
        return np.zeros_like(X)
    terms = max(2, int(np.ceil(np.log(tol) / np.log(nrm))) + 1)
    eye = np.broadcast_to(np.eye(X.shape[-1]), X.shape)
    # Horner: X (1 - X (1/2 - X (1/3 - ...)))
    acc = eye / terms
    for k in range(terms - 1, 0, -1):
        acc = eye / k - X @ acc
    return X @ acc


def _sqrtm_db(M, iters=60):
    """Principal square roots by the (batched) Denman-Beavers iteration."""
    Y, Z = M.copy(), np.broadcast_to(np.eye(M.shape[-1]), M.shape).copy()
    for _ in range(iters):
        Yi, Zi = np.linalg.inv(Y), np.linalg.inv(Z)
        Yn, Z = 0.5 * (Y + Zi), 0.5 * (Z + Yi)
        done = np.max(np.abs(Yn - Y)) <= 1e-15 * max(1.0, np.max(np.abs(Yn)))
        Y = Yn
        if done:
            break
    return Y


def _log_scaled(M):
    """log by inverse scaling and squaring: log M = 2^s log M^(1/2^s)."""
    eye = np.eye(M.shape[-1])
    s = 0
    while np.max(np.sum((M - eye) ** 2, axis=(-2, -1))) >= 0.0625:
        M = _sqrtm_db(M)
        s += 1
        if s > 60:
            raise DomainError("square-root iteration did not reach the identity")
    return (2.0 ** s) * _log_series(M - eye)


@dataclass(frozen=True)
class MatrixGroupModel:
    """Faithful matrix representation of a Lie algebra; exp/log/Ad on the simply connected group."""
    algebra: QuadraticLieAlgebra
    generators: np.ndarray
    tolerance: float = 1e-10
    max_iter: int = 50
    semidirect_split: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.generators, dtype=float)
        n = self.algebra.dim
        if X.ndim != 3 or X.shape[0] != n or X.shape[1] != X.shape[2]:
            raise StructureError("generators must be dim x m x m")
        object.__setattr__(self, "generators", X)
        flat = X.reshape(n, -1)
        if np.linalg.matrix_rank(flat) != n:
            raise InvalidInputError("generator matrices are linearly dependent (representation not faithful)")
        object.__setattr__(self, "_pinv", np.linalg.pinv(flat))
        comm = np.einsum("imk,jkl->ijml", X, X) - np.einsum("jmk,ikl->ijml", X, X)
        target = np.einsum("ijk,kml->ijml", self.algebra.c, X)
        if np.max(np.abs(comm - target), initial=0.0) > ALG_TOL * max(1.0, np.max(np.abs(X))):
            raise InvalidInputError("generator commutators do not reproduce the structure constants")

    @property
    def size(self) -> int:
        return self.generators.shape[1]

    def matrix(self, x):
        return np.einsum("...i,ijk->...jk", x, self.generators)

    def coords(self, M):
        M = np.asarray(M, dtype=float)
        return M.reshape(M.shape[:-2] + (-1,)) @ self._pinv

    def identity(self, shape=()):
        return np.broadcast_to(np.eye(self.size), tuple(shape) + (self.size, self.size)).copy()

    def exp(self, x):
        X = self.matrix(np.asarray(x, dtype=float))
        nrms = np.sqrt(np.sum(X * X, axis=(-2, -1)))
        nrm = float(np.max(nrms, initial=0.0))
        if not np.isfinite(nrm):
            raise DomainError("exp of a non-finite element")
        # scaling and squaring around a Taylor-Horner core; 0.5^18 / 18! is far below rounding
        s = np.maximum(0, np.ceil(np.log2(np.maximum(nrms, 1e-300) / 0.5))).astype(int)
        Xs = X / (2.0 ** s)[..., None, None]
        terms = 18 if nrm > 1e-3 else 8
        eye = np.broadcast_to(np.eye(self.size), X.shape)
        acc = eye
        for k in range(terms, 0, -1):
            acc = eye + (Xs @ acc) / k
        for q in range(int(np.max(s, initial=0))):
            sq = s > q
            acc = np.where(sq[..., None, None], acc @ acc, acc)
        return acc

    def log(self, M):
        """Principal logarithm, returned as algebra coordinates."""
        M = np.asarray(M, dtype=float)
        flat = M.reshape((-1, self.size, self.size))
        X = flat - np.eye(self.size)
        small = np.sum(X * X, axis=(-2, -1)) < 0.25
        L = np.empty_like(flat)
        if np.any(small):
            L[small] = _log_series(X[small])
        big = np.nonzero(~small)[0]
        if big.size:
            ev = np.linalg.eigvals(flat[big])
            if np.any((np.abs(ev.imag) < 1e-12) & (ev.real <= 0)):
                raise DomainError("matrix has eigenvalues on the closed negative real axis")
            L[big] = _log_scaled(flat[big])
        L = L.reshape(M.shape)
        x = self.coords(L)
        if np.max(np.abs(self.matrix(x) - L), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(L))):
            raise DomainError("logarithm leaves the Lie algebra (outside the principal domain)")
        return x

    def inv(self, M):
        return np.linalg.inv(M)

    def adjoint(self, M):
        """Matrix of Ad_M on algebra coordinates (columns are Ad_M e_i)."""
        M = np.asarray(M, dtype=float)
        Mi = np.linalg.inv(M)
        conj = M[..., None, :, :] @ self.generators @ Mi[..., None, :, :]
        return np.swapaxes(self.coords(conj), -1, -2)

    def Ad(self, M, x):
        M = np.asarray(M, dtype=float)
        return self.coords(M @ self.matrix(np.asarray(x, dtype=float)) @ np.linalg.inv(M))


def affine_coadjoint_generators(cg, g_rep) -> np.ndarray:
    """Generators of G |x g* as block-diag(rho(g), affine coadjoint) matrices."""
    cg = np.asarray(cg, float)
    n = cg.shape[0]
    rep = np.asarray(g_rep, float)
    r = rep.shape[1]
    m = r + n + 1
    X = np.zeros((2 * n, m, m))
    for i in range(n):
        X[i, :r, :r] = rep[i]
        # ad*_{e_i} on g* coordinates: (ad*_{e_i} e^j) = -c[i,k,j] e^k
        X[i, r:r + n, r:r + n] = -cg[i]
    for j in range(n):
        X[n + j, r + j, r + n] = 1.0
    return X


def default_g_rep(cg) -> np.ndarray:
    """Faithful representation of g: adjoint when the centre is trivial, translations when abelian."""
    cg = np.asarray(cg, float)
    n = cg.shape[0]
    if n == 0:
        return np.zeros((0, 1, 1))
    ad = np.einsum("ijk->ikj", cg)
    if np.linalg.matrix_rank(ad.reshape(n, -1)) == n:
        return ad
    if np.max(np.abs(cg), initial=0.0) == 0.0:
        T = np.zeros((n, n + 1, n + 1))
        for i in range(n):
            T[i, i, n] = 1.0
        return T
    raise InvalidInputError("g has a centre and is not abelian: pass an explicit faithful representation")


def semiabelian_group_model(triple: ManinTriple, g_constants, g_rep=None, **kw) -> MatrixGroupModel:
    cg = np.asarray(g_constants, float)
    rep = default_g_rep(cg) if g_rep is None else np.asarray(g_rep, float)
    gens = affine_coadjoint_generators(cg, rep)
    r, n = rep.shape[1], cg.shape[0]
    return MatrixGroupModel(triple.algebra, gens, semidirect_split=(r, n), **kw)


def factorize(m, model: MatrixGroupModel, left_basis, right_basis, return_iterations=False):
    """Split m = a . b with a in exp(span left_basis), b in exp(span right_basis), near the identity.

    Newton iteration in right-trivialized increments seeded at (1, 1). For the semi-abelian
    model with left = g* and right = g the split is read off in closed form.
    """
    m = np.asarray(m, dtype=float)
    d = model.algebra.dim
    Lb, Rb = _rows(left_basis, d), _rows(right_basis, d)
    n = Lb.shape[0]
    if model.semidirect_split is not None:
        r, k = model.semidirect_split
        if n == k and np.allclose(Lb, np.eye(2 * k)[k:]) and np.allclose(Rb, np.eye(2 * k)[:k]):
            b = m.copy()
            b[..., r:r + k, r + k] = 0.0
            a = model.identity(m.shape[:-2])
            a[..., r:r + k, r + k] = m[..., r:r + k, r + k]
            return (a, b, 0) if return_iterations else (a, b)
    K = np.vstack([Lb, Rb]).T
    Kinv = np.linalg.inv(K)
    a = model.identity(m.shape[:-2])
    b = model.identity(m.shape[:-2])
    prev = np.inf
    for it in range(1, model.max_iter + 1):
        resid = np.linalg.inv(a @ b) @ m
        try:
            delta = model.log(resid)
        except DomainError as exc:
            raise NonFactorizableError(f"Newton step left the logarithm's domain: {exc}") from exc
        w = model.Ad(b, delta)
        coef = w @ Kinv.T
        a = a @ model.exp(coef[..., :n] @ Lb)
        b = model.exp(coef[..., n:] @ Rb) @ b
        step = np.max(np.abs(delta), initial=0.0)
        # quadratic convergence ends at rounding level; stop once the step stalls there
        if step < 1e-15 or (it > 1 and step < 1e-12 and step > 0.25 * prev):
            break
        prev = step
    err = np.max(np.abs(m - a @ b), initial=0.0)
    if not np.isfinite(err) or err > model.tolerance:
        raise NonFactorizableError(f"factorization residual {err:.3e} after {it} iterations")
    return (a, b, it) if return_iterations else (a, b)
