"""Two-dimensional sigma models on light-cone lattices.

Maps are sampled on a characteristic grid t1 = i h1, t2 = j h2. The action is
S = int r(d1 f, d2 f) (+ a Wess-Zumino term with 3-form H), and velocities are left
logarithmic differences, so vector-space and matrix-group targets share one code path.
The discrete Euler-Lagrange operator is a box scheme: fluxes on cell edges, everything
else at the cell centre. It is exact for the linear wave equation.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .courant import ClosedThreeForm, GeneralizedSection, LagrangianFrame, noninvolutivity
from .equivariant import DegenerateBackgroundError
from .frames import subalgebra_constants
from .liealg import MatrixGroupModel, _rows
from .poly import Form


class SolverError(RuntimeError):
    def __init__(self, msg, cell=None):
        super().__init__(msg)
        self.cell = cell


class LiftError(RuntimeError):
    pass


class PreconditionError(RuntimeError):
    pass


class ConstraintViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# lattices and targets

@dataclass(frozen=True)
class LightConeLattice:
    N1: int
    N2: int
    h1: float
    h2: float
    shape: str = "rectangle"  # or "wedge": nodes with i >= j, boundary on the diagonal t1 = t2
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.N1 < 2 or self.N2 < 2:
            raise ValueError("lattice needs N1, N2 >= 2")
        if self.h1 <= 0 or self.h2 <= 0:
            raise ValueError("step sizes must be positive")
        if self.shape not in ("rectangle", "wedge"):
            raise ValueError(f"unknown lattice shape {self.shape!r}")
        if self.shape == "wedge" and (self.N1 != self.N2 or self.h1 != self.h2):
            raise ValueError("the wedge lattice needs N1 = N2 and h1 = h2")

    @classmethod
    def square(cls, N, T=1.0, shape="rectangle", boundary=None):
        return cls(N, N, T / N, T / N, shape, dict(boundary or {}))

    def refined(self, k: int) -> "LightConeLattice":
        return LightConeLattice(self.N1 * k, self.N2 * k, self.h1 / k, self.h2 / k, self.shape, dict(self.boundary))

    @property
    def t1(self):
        return np.arange(self.N1 + 1) * self.h1

    @property
    def t2(self):
        return np.arange(self.N2 + 1) * self.h2

    def mask(self) -> np.ndarray:
        I, J = np.meshgrid(np.arange(self.N1 + 1), np.arange(self.N2 + 1), indexing="ij")
        return np.ones_like(I, bool) if self.shape == "rectangle" else I >= J

    def cells(self) -> np.ndarray:
        """Lower-left corners of the full cells."""
        I, J = np.meshgrid(np.arange(self.N1), np.arange(self.N2), indexing="ij")
        ok = np.ones_like(I, bool) if self.shape == "rectangle" else (I >= J + 1)
        return np.stack([I[ok], J[ok]], axis=1)


class VectorTarget:
    """R^m with the coordinate frame."""

    def __init__(self, dim):
        self.dim = dim
        self.c = np.zeros((dim, dim, dim))
        self.point_ndim = 1

    def diff(self, p, q):
        return q - p

    def step(self, p, v):
        return p + v

    def guess(self, f00, f10, f01):
        return f10 + f01 - f00

    def coords(self, p):
        return p

    def from_coords(self, x):
        return np.asarray(x, float)

    def empty(self, shape):
        return np.full(tuple(shape) + (self.dim,), np.nan)


class GroupTarget:
    """Subgroup exp(span basis) of a matrix group, with its left-invariant frame."""

    def __init__(self, model: MatrixGroupModel, basis):
        self.model = model
        self.basis = _rows(basis, model.algebra.dim)
        self.dim = self.basis.shape[0]
        self.c = subalgebra_constants(model.algebra, self.basis)
        self._pinv = np.linalg.pinv(self.basis)
        self.point_ndim = 2

    def diff(self, p, q):
        return self.model.log(np.linalg.solve(p, q)) @ self._pinv

    def step(self, p, v):
        return p @ self.model.exp(np.asarray(v) @ self.basis)

    def guess(self, f00, f10, f01):
        return f10 @ np.linalg.solve(f00, f01)

    def coords(self, p):
        return self.model.log(p) @ self._pinv

    def from_coords(self, x):
        return self.model.exp(np.asarray(x, float) @ self.basis)

    def empty(self, shape):
        return np.full(tuple(shape) + (self.model.size,) * 2, np.nan)


def _batch(target, pts):
    return np.shape(pts)[: np.ndim(pts) - target.point_ndim]


# ---------------------------------------------------------------------------
# backgrounds

@dataclass(frozen=True, eq=False)
class ConstantMetric:
    r: np.ndarray

    def r_and_dr(self, pts, batch):
        r = np.broadcast_to(np.atleast_2d(np.asarray(self.r, float)), tuple(batch) + np.atleast_2d(self.r).shape)
        n = r.shape[-1]
        return r, np.zeros(tuple(batch) + (n, n, n))


@dataclass(frozen=True, eq=False)
class PolyMetric:
    """r[a][b] polynomial in the chart coordinates."""
    entries: tuple

    def r_and_dr(self, pts, batch):
        n = len(self.entries)
        flat = np.reshape(pts, (-1, n))
        r = np.stack([np.stack([p(flat) for p in row], -1) for row in self.entries], -2)
        dr = np.stack([np.stack([np.stack([p.diff(a)(flat) for p in row], -1) for row in self.entries], -2)
                       for a in range(n)], -3)
        return r.reshape(tuple(batch) + (n, n)), dr.reshape(tuple(batch) + (n, n, n))


@dataclass(frozen=True, eq=False)
class BraneLeaf:
    """Brane: the leaf through `point` spanned by `tangent` rows (in the frame), with constant beta.

    For group targets the leaf is point . exp(span tangent) when the span is a subalgebra.
    """
    point: np.ndarray
    tangent: np.ndarray
    beta: np.ndarray | None = None

    @property
    def dim(self):
        return self.tangent.shape[0]


@dataclass(frozen=True, eq=False)
class Background:
    r: object | None = None
    H: object | None = None  # ClosedThreeForm (vector target) or constant frame tensor
    omega: Form | None = None
    leaves: tuple = ()

    def r_and_dr(self, target, pts):
        batch = _batch(target, pts)
        if self.r is None:
            n = target.dim
            return np.zeros(tuple(batch) + (n, n)), np.zeros(tuple(batch) + (n, n, n))
        return self.r.r_and_dr(pts, batch)

    def H_at(self, target, pts):
        batch = _batch(target, pts)
        n = target.dim
        if self.H is None:
            return None
        if isinstance(self.H, ClosedThreeForm):
            flat = np.reshape(pts, (-1, n))
            T = np.zeros((flat.shape[0], n, n, n))
            for (i, j, k), p in self.H.H.comps.items():
                v = p(flat)
                for a, b, c, s in ((i, j, k, 1), (j, k, i, 1), (k, i, j, 1), (j, i, k, -1), (i, k, j, -1), (k, j, i, -1)):
                    T[:, a, b, c] += s * v
            return T.reshape(tuple(batch) + (n, n, n))
        return np.broadcast_to(np.asarray(self.H, float), tuple(batch) + (n, n, n))


# ---------------------------------------------------------------------------
# maps

@dataclass(frozen=True, eq=False)
class LatticeMap:
    values: np.ndarray
    target: object
    lattice: LightConeLattice

    def coords(self):
        out = np.full(self.values.shape[:2] + (self.target.dim,), np.nan)
        m = self.lattice.mask()
        out[m] = self.target.coords(self.values[m])
        return out

    def to_csv(self, path):
        lat = self.lattice
        X = self.coords()
        m = lat.mask()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "t1", "t2"] + [f"x{k}" for k in range(self.target.dim)])
            for i in range(lat.N1 + 1):
                for j in range(lat.N2 + 1):
                    if m[i, j]:
                        w.writerow([i, j, repr(float(lat.t1[i])), repr(float(lat.t2[j]))]
                                   + [repr(float(x)) for x in X[i, j]])


def _edge_velocities(target, f, h1, h2):
    """Left-log velocities on the horizontal (t1) and vertical (t2) edges."""
    v1 = target.diff(f[:-1, :], f[1:, :]) / h1
    v2 = target.diff(f[:, :-1], f[:, 1:]) / h2
    return v1, v2


def _bracket_terms(c, r, v1, v2):
    """r([v1, e_a], v2) + r(v1, [v2, e_a])."""
    t1 = np.einsum("...i,iak,...kj,...j->...a", v1, c, r, v2)
    t2 = np.einsum("...i,...ik,jak,...j->...a", v1, r, c, v2)
    return t1 + t2


def _cell_residual(target, bg, f00, f10, f01, f11, h1, h2):
    v1b = target.diff(f00, f10) / h1
    v1t = target.diff(f01, f11) / h1
    v2l = target.diff(f00, f01) / h2
    v2r = target.diff(f10, f11) / h2
    mB = target.step(f00, 0.5 * h1 * v1b)
    mT = target.step(f01, 0.5 * h1 * v1t)
    mL = target.step(f00, 0.5 * h2 * v2l)
    mR = target.step(f10, 0.5 * h2 * v2r)
    mC = target.step(mB, 0.5 * target.diff(mB, mT))
    pts = np.stack([mB, mT, mL, mR, mC])
    r, dr = bg.r_and_dr(target, pts)
    rB, rT, rL, rR, rC = r
    drC = dr[4]
    v1 = 0.5 * (v1b + v1t)
    v2 = 0.5 * (v2l + v2r)
    E = np.einsum("...aij,...i,...j->...a", drC, v1, v2)
    E = E - (np.einsum("...ab,...b->...a", rR, v2r) - np.einsum("...ab,...b->...a", rL, v2l)) / h1
    E = E - (np.einsum("...ba,...b->...a", rT, v1t) - np.einsum("...ba,...b->...a", rB, v1b)) / h2
    E = E + _bracket_terms(target.c, rC, v1, v2)
    H = bg.H_at(target, mC)
    if H is not None:
        E = E + np.einsum("...aij,...i,...j->...a", H, v1, v2)
    return E


def el_residual(f: LatticeMap, bg: Background, scheme="box") -> np.ndarray:
    """Discrete Euler-Lagrange residual.

    scheme="box": the solver's stencil, one value per full cell (shape N1 x N2 x dim, NaN
    outside). scheme="centered": node-centred differences at interior nodes.
    """
    tg, lat = f.target, f.lattice
    v = f.values
    if scheme == "box":
        out = np.full((lat.N1, lat.N2, tg.dim), np.nan)
        cells = lat.cells()
        I, J = cells[:, 0], cells[:, 1]
        out[I, J] = _cell_residual(tg, bg, v[I, J], v[I + 1, J], v[I, J + 1], v[I + 1, J + 1], lat.h1, lat.h2)
        return out
    if scheme != "centered":
        raise ValueError(f"unknown scheme {scheme!r}")
    out = np.full((lat.N1 + 1, lat.N2 + 1, tg.dim), np.nan)
    m = lat.mask()
    ok = np.zeros_like(m)
    ok[2:-2, 2:-2] = m[:-4, :-4] & m[4:, 4:] & m[4:, :-4] & m[2:-2, :-4]
    if lat.shape == "wedge":
        I, J = np.meshgrid(np.arange(lat.N1 + 1), np.arange(lat.N2 + 1), indexing="ij")
        ok &= I - J >= 3
    h1, h2 = lat.h1, lat.h2

    def vel1(i, j):
        return tg.diff(v[i - 1, j], v[i + 1, j]) / (2 * h1)

    def vel2(i, j):
        return tg.diff(v[i, j - 1], v[i, j + 1]) / (2 * h2)

    I, J = np.nonzero(ok)
    pts = v[I, J]
    r, dr = bg.r_and_dr(tg, pts)
    v1, v2 = vel1(I, J), vel2(I, J)
    rp1, _ = bg.r_and_dr(tg, v[I + 1, J])
    rm1, _ = bg.r_and_dr(tg, v[I - 1, J])
    rp2, _ = bg.r_and_dr(tg, v[I, J + 1])
    rm2, _ = bg.r_and_dr(tg, v[I, J - 1])
    flux1 = (np.einsum("...ab,...b->...a", rp1, vel2(I + 1, J)) - np.einsum("...ab,...b->...a", rm1, vel2(I - 1, J))) / (2 * h1)
    flux2 = (np.einsum("...ba,...b->...a", rp2, vel1(I, J + 1)) - np.einsum("...ba,...b->...a", rm2, vel1(I, J - 1))) / (2 * h2)
    E = np.einsum("...aij,...i,...j->...a", dr, v1, v2) - flux1 - flux2 + _bracket_terms(tg.c, r, v1, v2)
    H = bg.H_at(tg, pts)
    if H is not None:
        E = E + np.einsum("...aij,...i,...j->...a", H, v1, v2)
    out[I, J] = E
    return out


def max_residual(field) -> float:
    a = np.abs(np.asarray(field, float))
    return float(np.nanmax(a)) if np.any(np.isfinite(a)) else 0.0


# ---------------------------------------------------------------------------
# the solver

@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 40
    damping: float = 0.5
    fd_step: float = 1e-7


def _newton(F, w0, cfg: NewtonConfig, where):
    """Batched damped Newton with a forward-difference Jacobian. F maps (B, n) -> (B, n)."""
    w = w0.copy()
    R = F(w)
    nrm = np.max(np.abs(R), axis=-1)
    n = w.shape[-1]
    for _ in range(cfg.max_iter):
        active = nrm > cfg.tol
        if not np.any(active):
            break
        J = np.empty(w.shape + (n,))
        for k in range(n):
            wk = w.copy()
            wk[:, k] += cfg.fd_step
            J[:, :, k] = (F(wk) - R) / cfg.fd_step
        try:
            dw = -np.linalg.solve(J, R[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Newton system (degenerate background?)", where) from exc
        dw[~active] = 0.0
        lam = np.ones(w.shape[0])
        for _ in range(8):
            wn = w + lam[:, None] * dw
            Rn = F(wn)
            nn = np.max(np.abs(Rn), axis=-1)
            worse = (nn > nrm) & active & (nn > cfg.tol)
            if not np.any(worse):
                break
            lam[worse] *= cfg.damping
        stalled = np.max(np.abs(wn - w), axis=-1) < 1e-15
        w, R, nrm = wn, Rn, nn
        if np.all((nrm <= cfg.tol) | stalled):
            break
    if not np.all(np.isfinite(nrm)) or np.any(nrm > max(1e3 * cfg.tol, 1e-8)):
        raise SolverError(f"Newton did not converge (residual {np.nanmax(nrm):.3e})", where)
    return w


def solve_sr(bg: Background, lat: LightConeLattice, target, initial: dict, newton=NewtonConfig(),
             boundary=None) -> LatticeMap:
    """Characteristic (Goursat) solve.

    rectangle: initial = {"row": values at j=0 (N1+1), "col": values at i=0 (N2+1)}.
    wedge: initial = {"row": values at j=0}; the diagonal node (k, k) is fixed by
    ``boundary``: either {"dirichlet": values (N+1)} or a callable bc(f, v1, v2) -> (B, n)
    residual imposed with second-order backward differences.
    """
    N1, N2, h1, h2 = lat.N1, lat.N2, lat.h1, lat.h2
    f = target.empty((N1 + 1, N2 + 1))
    f[:, 0] = initial["row"]
    if lat.shape == "rectangle":
        f[0, :] = initial["col"]
    else:
        boundary = boundary if boundary is not None else initial.get("boundary")
        if boundary is None:
            raise ValueError("the wedge needs a boundary condition on the diagonal")
    for s in range(2, N1 + N2 + 1):
        i = np.arange(max(1, s - N2), min(N1, s - 1) + 1)
        j = s - i
        keep = (j >= 1) & ((lat.shape == "rectangle") | (i >= j + 1))
        i, j = i[keep], j[keep]
        if lat.shape == "wedge" and s % 2 == 0 and s // 2 <= N1:
            k = s // 2
            f[k, k] = _boundary_node(target, bg, f, k, h1, boundary, newton)
        if i.size == 0:
            continue
        f00, f10, f01 = f[i - 1, j - 1], f[i, j - 1], f[i - 1, j]
        g = target.guess(f00, f10, f01)

        def F(w, f00=f00, f10=f10, f01=f01, g=g):
            return _cell_residual(target, bg, f00, f10, f01, target.step(g, w), h1, h2)

        w = _newton(F, np.zeros((i.size, target.dim)), newton, where=(int(i[0]), int(j[0])))
        f[i, j] = target.step(g, w)
        _check_nondegenerate(bg, target, f[i, j], i, j)
    return LatticeMap(f, target, lat)


def _check_nondegenerate(bg, target, pts, i, j, tol=1e-12):
    """The symmetric part of r must stay invertible along the solution."""
    r, _ = bg.r_and_dr(target, pts)
    g = 0.5 * (r + np.swapaxes(r, -1, -2))
    sv = np.linalg.svd(g, compute_uv=False)
    bad = sv[..., -1] <= tol * np.maximum(sv[..., 0], 1.0)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise DegenerateBackgroundError("symmetric part of r is singular on the solution",
                                        where=(int(i[k]), int(j[k])))


def _boundary_node(target, bg, f, k, h, boundary, newton):
    if isinstance(boundary, dict) and "dirichlet" in boundary:
        return np.asarray(boundary["dirichlet"])[k]
    fkm, fkm2 = f[k, k - 1], f[k, k - 2] if k >= 2 else None
    dm, dm2 = f[k - 1, k - 1], f[k - 2, k - 2] if k >= 2 else None
    g = target.step(fkm, target.diff(dm, fkm))

    def F(w):
        p = target.step(g[None], w)
        # v2 by backward differences in j, tangential derivative along the diagonal
        c1 = target.diff(p, fkm[None])
        cd1 = target.diff(p, dm[None])
        if k >= 2:
            c2 = target.diff(p, fkm2[None])
            cd2 = target.diff(p, dm2[None])
            v2 = -(4 * c1 - c2) / (2 * h)
            vt = -(4 * cd1 - cd2) / (2 * h)
        else:
            v2 = -c1 / h
            vt = -cd1 / h
        return boundary(target, bg, p, vt - v2, v2)

    w = _newton(F, np.zeros((1, target.dim)), newton, where=(k, k))
    return target.step(g[None], w)[0]


def neumann_bc(target, bg, p, v1, v2):
    """Free endpoint: r(v1, .) - r(., v2) = 0."""
    r, _ = bg.r_and_dr(target, p)
    return np.einsum("...ba,...b->...a", r, v1) - np.einsum("...ab,...b->...a", r, v2)


def leaf_bc(leaf: BraneLeaf):
    """Brane {coordinates off the leaf fixed} with generalized Neumann along it (vector targets)."""
    T = np.atleast_2d(leaf.tangent)
    Nrm = np.linalg.svd(T)[2][T.shape[0]:]
    beta = np.zeros((T.shape[0],) * 2) if leaf.beta is None else np.asarray(leaf.beta, float)

    def bc(target, bg, p, v1, v2):
        r, _ = bg.r_and_dr(target, p)
        form = np.einsum("...ba,...b->...a", r, v1) - np.einsum("...ab,...b->...a", r, v2)
        vt = v1 + v2
        a = np.einsum("...a,ka->...k", form, T) - np.einsum("lk,...l->...k", beta, vt @ np.linalg.pinv(T))
        off = (p - leaf.point) @ Nrm.T
        return np.concatenate([a, off], axis=-1)

    return bc


# ---------------------------------------------------------------------------
# initial data

def _smooth_profile(t, rng, amp, modes=3):
    a = rng.uniform(-1, 1, modes) * amp / np.arange(1, modes + 1) ** 2
    ph = rng.uniform(0, 2 * np.pi, modes)
    return sum(a[k] * (np.sin((k + 1) * np.pi * t + ph[k]) - np.sin(ph[k])) for k in range(modes))


def dalembert(lat: LightConeLattice, dim=1, seed=0, amp=0.5):
    """f = p(t1) + q(t2) with smooth p, q; returns (initial data, exact solution array)."""
    rng = np.random.default_rng(seed)
    P = np.stack([_smooth_profile(lat.t1, rng, amp) for _ in range(dim)], -1)
    Q = np.stack([_smooth_profile(lat.t2, rng, amp) for _ in range(dim)], -1)
    exact = P[:, None, :] + Q[None, :, :]
    return {"row": exact[:, 0], "col": exact[0, :]}, exact


def dalembert_profiles(seed=0, dim=1, amp=0.5):
    """The continuous profiles behind `dalembert`, for analytic oracles."""
    rng = np.random.default_rng(seed)
    coefs = []
    for _ in range(2 * dim):
        a = rng.uniform(-1, 1, 3) * amp / np.arange(1, 4) ** 2
        ph = rng.uniform(0, 2 * np.pi, 3)
        coefs.append((a, ph))
    P, Q = coefs[:dim], coefs[dim:]

    def make(cs, deriv=False):
        def fn(t):
            t = np.asarray(t, float)
            out = []
            for a, ph in cs:
                if deriv:
                    out.append(sum(a[k] * (k + 1) * np.pi * np.cos((k + 1) * np.pi * t + ph[k]) for k in range(3)))
                else:
                    out.append(sum(a[k] * (np.sin((k + 1) * np.pi * t + ph[k]) - np.sin(ph[k])) for k in range(3)))
            return np.stack(out, -1)
        return fn

    return make(P), make(Q), make(P, True), make(Q, True)


def geodesic_data(lat: LightConeLattice, target, a, b, base=None):
    """Characteristics exp(t1 a) and exp(t2 b) (one-parameter subgroups), through base."""
    base = target.from_coords(np.zeros(target.dim)) if base is None else base
    row = target.step(np.broadcast_to(base, (lat.N1 + 1,) + np.shape(base)), lat.t1[:, None] * np.asarray(a))
    col = target.step(np.broadcast_to(base, (lat.N2 + 1,) + np.shape(base)), lat.t2[:, None] * np.asarray(b))
    return {"row": row, "col": col}


def random_smooth(lat: LightConeLattice, target, seed=0, amp=0.3) -> LatticeMap:
    """A smooth, generically non-critical map."""
    rng = np.random.default_rng(seed)
    T1, T2 = np.meshgrid(lat.t1, lat.t2, indexing="ij")
    X = np.zeros(T1.shape + (target.dim,))
    for a in range(target.dim):
        for _ in range(3):
            k1, k2 = rng.integers(1, 3, 2)
            X[..., a] += amp * rng.uniform(-1, 1) * np.sin(k1 * np.pi * T1 + rng.uniform(0, 6)) * np.cos(k2 * np.pi * T2 + rng.uniform(0, 6))
    X -= X[:1, :1]
    vals = target.from_coords(X)
    if lat.shape == "wedge":
        vals = vals.copy()
        vals[~lat.mask()] = np.nan
    return LatticeMap(vals, target, lat)


def parse_generator(name: str):
    """'dalembert' | 'pcm-geodesic' | 'random-smooth(seed)' -> (kind, seed)."""
    m = re.fullmatch(r"\s*(dalembert|pcm-geodesic|random-smooth)\s*(?:\(\s*(\d+)\s*\))?\s*", name)
    if not m:
        raise ValueError(f"unknown initial-data generator {name!r}")
    return m.group(1), int(m.group(2) or 0)


# ---------------------------------------------------------------------------
# criticality through F_L, Noether currents, branes

def _cell_center_velocities(f: LatticeMap):
    tg, lat, v = f.target, f.lattice, f.values
    cells = lat.cells()
    I, J = cells[:, 0], cells[:, 1]
    f00, f10, f01, f11 = v[I, J], v[I + 1, J], v[I, J + 1], v[I + 1, J + 1]
    v1 = 0.5 * (tg.diff(f00, f10) + tg.diff(f01, f11)) / lat.h1
    v2 = 0.5 * (tg.diff(f00, f01) + tg.diff(f10, f11)) / lat.h2
    mB = tg.step(f00, 0.5 * tg.diff(f00, f10))
    mT = tg.step(f01, 0.5 * tg.diff(f01, f11))
    return cells, tg.step(mB, 0.5 * tg.diff(mB, mT)), v1, v2


def criticality_via_FL(f: LatticeMap, L: LagrangianFrame, H: ClosedThreeForm | None = None) -> np.ndarray:
    """F_L pulled back through the splitting lift: H_L(s v1, s v2, s e_a) at cell centres."""
    tg, lat = f.target, f.lattice
    if not isinstance(tg, VectorTarget):
        raise TypeError("criticality_via_FL works on chart targets")
    cells, xc, v1, v2 = _cell_center_velocities(f)
    A = np.stack([s.u(xc) for s in L.sections], axis=1)  # (B, k, n) anchors of the frame
    if L.rank != tg.dim or np.min(np.linalg.svd(A, compute_uv=False)[:, -1]) < 1e-12:
        raise LiftError("a(L) does not contain the tangent directions")
    ni = noninvolutivity(L, H)
    HL = ni.HL_at(xc)
    Ainv = np.linalg.inv(A)  # coordinate vector v = sum_k w_k a(s_k), w = v A^-1
    w1 = np.einsum("...a,...ak->...k", v1, Ainv)
    w2 = np.einsum("...a,...ak->...k", v2, Ainv)
    res = np.einsum("...ijk,...i,...j,...ak->...a", HL, w1, w2, Ainv)
    out = np.full((lat.N1, lat.N2, tg.dim), np.nan)
    out[cells[:, 0], cells[:, 1]] = res
    return out


@dataclass(frozen=True, eq=False)
class FrameSymmetry:
    """Section (u, alpha) on a group target given by left-trivialized callables of the point.

    u(p) -> (B, n), Ju(p) -> (B, n, n) derivative along frame directions; alpha likewise.
    """
    u: object
    Ju: object
    alpha: object = None
    Jalpha: object = None


def right_invariant_symmetry(target: GroupTarget, xi) -> FrameSymmetry:
    """Generator of left multiplication by exp(t xi): the field Ad_{p^-1} xi."""
    xi = np.asarray(xi, float) @ target.basis

    def u(p):
        return target.model.Ad(np.linalg.inv(p), xi) @ target._pinv

    def Ju(p):
        U = u(p)
        return np.einsum("...i,iak->...ka", U, target.c)  # d/de_a U = [U, e_a]

    return FrameSymmetry(u, Ju)


def _section_eval(s, target, pts):
    n = target.dim
    batch = _batch(target, pts)
    if isinstance(s, GeneralizedSection):
        flat = np.reshape(pts, (-1, n))
        u = s.u(flat)
        al = np.stack([s.alpha.get((i,))(flat) for i in range(n)], -1)
        return u.reshape(tuple(batch) + (n,)), al.reshape(tuple(batch) + (n,))
    u = s.u(pts)
    al = s.alpha(pts) if s.alpha is not None else np.zeros_like(u)
    return u, al


def noether_current(f: LatticeMap, s, bg: Background, check_tol=1e-10):
    """Edge integrals of J = <s, T~f(.)>, with T~f(d1) = (v1, r(v1, .)), T~f(d2) = (v2, -r(., v2)).

    Returns (J1 on t1-edges, J2 on t2-edges, plaquette closure residual / (h1 h2)). The
    invariance hypothesis is checked first on the image points unless check_tol is None.
    """
    tg, lat, v = f.target, f.lattice, f.values
    if check_tol is not None:
        res = flow_preserves(s, bg, tg, v[lat.mask()])
        if res > check_tol:
            raise PreconditionError(f"the flow of s does not preserve R (residual {res:.3e})")
    h1, h2 = lat.h1, lat.h2
    live = lat.mask()
    if not live.all():
        v = v.copy()
        v[~live] = v[0, 0]  # placeholder off the wedge; those edges are discarded below
    v1, v2 = _edge_velocities(tg, v, h1, h2)
    m1 = tg.step(v[:-1, :], 0.5 * h1 * v1)
    m2 = tg.step(v[:, :-1], 0.5 * h2 * v2)
    r1, _ = bg.r_and_dr(tg, m1)
    r2, _ = bg.r_and_dr(tg, m2)
    u1, a1 = _section_eval(s, tg, m1)
    u2, a2 = _section_eval(s, tg, m2)
    J1 = h1 * (np.einsum("...a,...a->...", a1, v1) + np.einsum("...i,...ij,...j->...", v1, r1, u1))
    J2 = h2 * (np.einsum("...a,...a->...", a2, v2) - np.einsum("...i,...ij,...j->...", u2, r2, v2))
    J1 = np.where(live[:-1] & live[1:], J1, np.nan)
    J2 = np.where(live[:, :-1] & live[:, 1:], J2, np.nan)
    closure = (J1[:, :-1] + J2[1:, :] - J1[:, 1:] - J2[:-1, :]) / (h1 * h2)
    if lat.shape == "wedge":
        full = np.zeros_like(closure, bool)
        c = lat.cells()
        full[c[:, 0], c[:, 1]] = True
        closure = np.where(full, closure, np.nan)
    return J1, J2, closure


def flow_preserves(s, bg: Background, target, pts) -> float:
    """Does the flow of Z_s preserve R = graph(r) (or TM when r = 0)?

    [s, (v, r(v, .))] stays in R for all v iff L_u r - d alpha + i_u H = 0, with the
    bracket ([u, v], L_u b - i_v da + H(u, v, .)).
    """
    n = target.dim
    r, dr = bg.r_and_dr(target, pts)
    H = bg.H_at(target, pts)
    if isinstance(s, GeneralizedSection):
        flat = np.reshape(pts, (-1, n))
        u = s.u(flat)
        Ju = np.stack([np.stack([s.u.comps[k].diff(a)(flat) for a in range(n)], -1) for k in range(n)], -2)
        al = np.stack([s.alpha.get((i,))(flat) for i in range(n)], -1)
        Ja = np.stack([np.stack([s.alpha.get((k,)).diff(a)(flat) for a in range(n)], -1) for k in range(n)], -2)
    else:
        u, Ju = s.u(pts), s.Ju(pts)
        al = s.alpha(pts) if s.alpha is not None else np.zeros_like(u)
        Ja = s.Jalpha(pts) if s.Jalpha is not None else np.zeros(u.shape + (n,))
    c = target.c
    # [u, e_a] in the frame: -Ju[:, a] + c(u, e_a)
    ue = -np.swapaxes(Ju, -1, -2) + np.einsum("...i,iak->...ak", u, c)
    Lur = np.einsum("...c,...cab->...ab", u, dr) - np.einsum("...ak,...kb->...ab", ue, r) \
        - np.einsum("...bk,...ak->...ab", ue, r)
    da = np.swapaxes(Ja, -1, -2) - Ja - np.einsum("blk,...k->...bl", c, al)
    res = Lur - da
    if H is not None:
        res = res + np.einsum("...i,...iab->...ab", u, H)
    return float(np.max(np.abs(res)))


def boundary_velocities(f: LatticeMap):
    """v1, v2 at the diagonal nodes (k, k), k >= 2, by second-order one-sided differences."""
    tg, lat, v = f.target, f.lattice, f.values
    h = lat.h1
    k = np.arange(2, lat.N1 - 1)
    p = v[k, k]
    v1 = (4 * tg.diff(p, v[k + 1, k]) - tg.diff(p, v[k + 2, k])) / (2 * h)
    v2 = -(4 * tg.diff(p, v[k, k - 1]) - tg.diff(p, v[k, k - 2])) / (2 * h)
    return k, p, v1, v2


def boundary_residual(f: LatticeMap, bg: Background, leaf: BraneLeaf) -> dict:
    """Membership of T~f(d_t) in the brane's Dirac structure, for vector targets.

    Returns the tangency residual (distance of v1 + v2 from the leaf) and the
    beta-contraction residual (r(v1, .) - r(., v2) - i_{v1+v2} beta, along the leaf).
    """
    if f.lattice.shape != "wedge":
        raise ValueError("boundary residuals need a lattice with a boundary")
    k, p, v1, v2 = boundary_velocities(f)
    T = np.atleast_2d(leaf.tangent)
    Tp = np.linalg.pinv(T)
    vt = v1 + v2
    off = vt - (vt @ Tp) @ T
    r, _ = bg.r_and_dr(f.target, p)
    form = np.einsum("...ba,...b->...a", r, v1) - np.einsum("...ab,...b->...a", r, v2)
    beta = np.zeros((T.shape[0],) * 2) if leaf.beta is None else np.asarray(leaf.beta, float)
    contr = np.einsum("...a,ka->...k", form, T) - np.einsum("lk,...l->...k", beta, vt @ Tp)
    pos = (p - leaf.point) - ((p - leaf.point) @ Tp) @ T if isinstance(f.target, VectorTarget) else np.zeros_like(p[..., :1])
    if np.max(np.abs(pos), initial=0.0) > 1e-8:
        raise ConstraintViolation(f"boundary point off the leaf by {np.max(np.abs(pos)):.3e}")
    return {"membership": float(np.max(np.abs(off))), "beta": float(np.max(np.abs(contr), initial=0.0))}
