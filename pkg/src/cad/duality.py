"""Poisson-Lie T-duality on light-cone lattices.

A map f into M/G (charted by the complementary subgroup) lifts to phi = f . k with k in G,
transported edge by edge with the connection A_G whose kernel is V = a(R) for the
t1-direction and a(R^perp) for the t2-direction. Projecting phi to M/G' gives the dual map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from .equivariant import (DegenerateBackgroundError, DoubleModel, QuotientChart, TransportedBackground,
                          _HL_D, _HL_std, _nullspace, quotient_chart)
from .frames import subalgebra_constants
from .liealg import NonFactorizableError, _rows, factorize
from .sigma import (Background, GroupTarget, LatticeMap, LightConeLattice, NewtonConfig,
                    boundary_velocities, el_residual, max_residual)


class InvalidInputError(ValueError):
    pass


class LiftError(RuntimeError):
    def __init__(self, msg, cell=None):
        super().__init__(msg)
        self.cell = cell


@dataclass(frozen=True, eq=False)
class DualityScenario:
    model: DoubleModel
    RD: np.ndarray
    G: object = "g"  # "g" | "gprime" | (g rows, chart rows)
    lattice: LightConeLattice | None = None
    newton: NewtonConfig = field(default_factory=NewtonConfig)

    @cached_property
    def chart(self) -> QuotientChart:
        return quotient_chart(self.model, self.G)

    @cached_property
    def dual_chart(self) -> QuotientChart:
        return QuotientChart(self.model, self.chart.chart, self.chart.g)

    def swapped(self) -> "DualityScenario":
        return DualityScenario(self.model, self.RD, (self.chart.chart, self.chart.g), self.lattice, self.newton)

    @cached_property
    def background(self) -> TransportedBackground:
        return TransportedBackground(self.chart, _rows(self.RD, self.model.dim))

    @cached_property
    def dual_background(self) -> TransportedBackground:
        return TransportedBackground(self.dual_chart, _rows(self.RD, self.model.dim))

    @cached_property
    def target(self) -> GroupTarget:
        return GroupTarget(self.model.group, self.chart.chart)

    @cached_property
    def dual_target(self) -> GroupTarget:
        return GroupTarget(self.model.group, self.dual_chart.chart)

    @cached_property
    def double_target(self) -> GroupTarget:
        return GroupTarget(self.model.group, np.eye(self.model.dim))

    def sr(self, dual=False) -> Background:
        return Background(r=self.dual_background if dual else self.background)


# ---------------------------------------------------------------------------
# the connection A_G

@dataclass(frozen=True, eq=False)
class HorizontalConnection:
    """A_G: projection of d onto g along V = Ad_{m^-1} R_D (or its orthogonal)."""
    model: DoubleModel
    g: np.ndarray
    RD: np.ndarray

    @cached_property
    def RDperp(self):
        B = self.model.algebra.B
        return _nullspace(self.RD @ B)

    def __call__(self, m, X, which="R"):
        R = self.RD if which == "R" else self.RDperp
        Ad = self.model.group.adjoint(np.linalg.inv(m))
        W = np.einsum("...ij,kj->...ik", Ad, R)  # columns Ad_{m^-1} r_k
        M = np.concatenate([W, np.broadcast_to(self.g.T, W.shape[:-1] + (self.g.shape[0],))], axis=-1)
        sv = np.linalg.svd(M, compute_uv=False)[..., -1]
        if np.any(sv < 1e-10):
            raise DegenerateBackgroundError("V is not transverse to the G-fibers", where=np.argwhere(np.atleast_1d(sv) < 1e-10).tolist())
        coef = np.linalg.solve(M, np.asarray(X, float)[..., None])[..., 0]
        return coef[..., R.shape[0]:]

    def kernel_residual(self, m) -> float:
        out = 0.0
        for which, R in (("R", self.RD), ("Rperp", self.RDperp)):
            Ad = self.model.group.adjoint(np.linalg.inv(m))
            for r in R:
                X = np.einsum("...ij,j->...i", Ad, r)
                out = max(out, float(np.max(np.abs(self(m, X, which)))))
        return out

    def normalization_residual(self, m) -> float:
        out = 0.0
        for which in ("R", "Rperp"):
            for k, xi in enumerate(self.g):
                e = np.zeros(self.g.shape[0])
                e[k] = 1.0
                out = max(out, float(np.max(np.abs(self(m, np.broadcast_to(xi, np.shape(m)[:-2] + xi.shape), which) - e))))
        return out


def extract_AG(scen: DualityScenario) -> HorizontalConnection:
    return HorizontalConnection(scen.model, scen.chart.g, _rows(scen.RD, scen.model.dim))


# ---------------------------------------------------------------------------
# discrete transport

def _edges(lat: LightConeLattice):
    """Index arrays of existing horizontal (i -> i+1) and vertical (j -> j+1) edges."""
    m = lat.mask()
    Hh = m[:-1, :] & m[1:, :]
    Hv = m[:, :-1] & m[:, 1:]
    return np.nonzero(Hh), np.nonzero(Hv)


def _edge_transports(f: LatticeMap, AG: HorizontalConnection, g_basis):
    """G-valued factors moving k along each edge: k_next = T . k, with dk k^-1 = -A_G(df)."""
    tg, lat, v = f.target, f.lattice, f.values
    grp = AG.model.group
    size = grp.size
    (hi, hj), (vi, vj) = _edges(lat)
    Th = np.full((lat.N1, lat.N2 + 1, size, size), np.nan)
    Tv = np.full((lat.N1 + 1, lat.N2, size, size), np.nan)
    for (I, J, dI, dJ, h, which, T) in ((hi, hj, 1, 0, lat.h1, "R", Th), (vi, vj, 0, 1, lat.h2, "Rperp", Tv)):
        a, b = v[I, J], v[I + dI, J + dJ]
        w = tg.diff(a, b)
        mid = tg.step(a, 0.5 * w)
        X = w @ tg.basis
        A = AG(mid, X, which)
        T[I, J] = grp.exp(-A @ g_basis)
    return Th, Tv


def flatness_residual(f: LatticeMap, AG: HorizontalConnection) -> np.ndarray:
    """Per-plaquette |log holonomy| / (h1 h2) of the pulled-back connection (NaN off-domain)."""
    lat = f.lattice
    grp = AG.model.group
    Th, Tv = _edge_transports(f, AG, AG.g)
    out = np.full((lat.N1, lat.N2), np.nan)
    c = lat.cells()
    I, J = c[:, 0], c[:, 1]
    P1 = Tv[I + 1, J] @ Th[I, J]
    P2 = Th[I, J + 1] @ Tv[I, J]
    out[I, J] = np.max(np.abs(grp.log(np.linalg.solve(P2, P1))), axis=-1) / (lat.h1 * lat.h2)
    return out


@dataclass(frozen=True, eq=False)
class LiftResult:
    phi: LatticeMap
    k: np.ndarray
    flatness: np.ndarray
    path_independence: float  # sum of plaquette holonomy norms
    order_defect: float       # max distance between the two sweep orders


def lift(f: LatticeMap, scen: DualityScenario, seed=None) -> LiftResult:
    """Horizontal lift phi = f . k with k(0, 0) = seed (default: identity)."""
    lat = f.lattice
    grp = scen.model.group
    AG = extract_AG(scen)
    Th, Tv = _edge_transports(f, AG, AG.g)
    if not (np.all(np.isfinite(Th[_edges(lat)[0]])) and np.all(np.isfinite(Tv[_edges(lat)[1]]))):
        raise LiftError("transport step left the chart")
    k0 = grp.identity(()) if seed is None else np.asarray(seed, float)
    m = lat.mask()
    size = grp.size
    kA = np.full((lat.N1 + 1, lat.N2 + 1, size, size), np.nan)
    kB = kA.copy()
    # sweep A: along j = 0, then up the columns
    kA[0, 0] = k0
    for i in range(lat.N1):
        kA[i + 1, 0] = Th[i, 0] @ kA[i, 0]
    for j in range(lat.N2):
        cols = np.nonzero(m[:, j + 1])[0]
        kA[cols, j + 1] = Tv[cols, j] @ kA[cols, j]
    # sweep B: along i = 0 (rectangle) or entering each row through the diagonal (wedge), then along rows
    kB[0, 0] = k0
    if lat.shape == "rectangle":
        for j in range(lat.N2):
            kB[0, j + 1] = Tv[0, j] @ kB[0, j]
        for i in range(lat.N1):
            kB[i + 1, :] = Th[i, :] @ kB[i, :]
    else:
        for j in range(lat.N2 + 1):
            if j > 0:
                kB[j, j] = Tv[j, j - 1] @ kB[j, j - 1]
            for i in range(j, lat.N1):
                kB[i + 1, j] = Th[i, j] @ kB[i, j]
    defect = float(np.max(np.abs(grp.log(np.linalg.solve(kA[m], kB[m])))))
    phi = np.full_like(kA, np.nan)
    phi[m] = f.values[m] @ kA[m]
    flat = flatness_residual(f, AG)
    # total plaquette holonomy: bounds the holonomy of any lattice loop to first order
    path = float(np.nansum(flat) * lat.h1 * lat.h2)
    return LiftResult(LatticeMap(phi, scen.double_target, lat), kA, flat, path, defect)


def project(phi: LatticeMap, chart: QuotientChart) -> LatticeMap:
    """Keep the chart factor of phi = chart . G."""
    lat = phi.lattice
    m = lat.mask()
    out = np.full_like(phi.values, np.nan)
    try:
        a, _ = factorize(phi.values[m], chart.model.group, chart.chart, chart.g)
    except NonFactorizableError as exc:
        raise LiftError(f"projection failed: {exc}") from exc
    out[m] = a
    return LatticeMap(out, GroupTarget(chart.model.group, chart.chart), lat)


def dualize(f: LatticeMap, scen: DualityScenario, seed=None):
    """Dual map on M/G' and a residual report."""
    L = lift(f, scen, seed)
    fd = project(L.phi, scen.dual_chart)
    report = {
        "el_residual": max_residual(el_residual(f, scen.sr())),
        "flatness": max_residual(L.flatness),
        "path_independence": L.path_independence,
        "sweep_order_defect": L.order_defect,
        "dual_el_residual": max_residual(el_residual(fd, scen.sr(dual=True))),
    }
    return fd, report, L


def _deviation(f: LatticeMap, g: LatticeMap, idx=None):
    m = f.lattice.mask()
    a, b = f.values[m], g.values[m]
    if idx is not None:
        a, b = a[idx], b[idx]
    return float(np.max(np.abs(f.target.diff(a, b))))


def roundtrip(f: LatticeMap, scen: DualityScenario, optimize=True, sample=256, dual=None):
    """Dualize twice; sup-distance to f modulo one global right G'-translation of the second lift.

    ``dual`` reuses a previous ``dualize(f, scen)`` result.
    """
    fd, rep, L = dual if dual is not None else dualize(f, scen)
    back = scen.swapped()
    L2 = lift(fd, back)
    grp = scen.model.group
    m = f.lattice.mask()
    # basepoint gauge: phi2(0,0) c0 = phi(0,0)
    c0 = np.linalg.solve(L2.phi.values[0, 0], L.phi.values[0, 0])
    basis = scen.chart.chart

    def moved(x, idx=None):
        c = c0 @ grp.exp(np.asarray(x) @ basis)
        vals = L2.phi.values[m] if idx is None else L2.phi.values[m][idx]
        a, _ = factorize(vals @ c, grp, scen.chart.chart, scen.chart.g)
        return a

    fm = f.values[m]
    dev0 = float(np.max(np.abs(f.target.diff(fm, moved(np.zeros(basis.shape[0]))))))
    x = np.zeros(basis.shape[0])
    if optimize:
        idx = np.linspace(0, fm.shape[0] - 1, min(sample, fm.shape[0])).astype(int)

        def obj(x):
            return float(np.max(np.abs(f.target.diff(fm[idx], moved(x, idx)))))

        scale = max(dev0, 1e-14)
        res = minimize(obj, x, method="Nelder-Mead",
                       options={"xatol": 1e-3 * scale, "fatol": 1e-3 * scale, "initial_simplex": np.vstack([x, x + scale * np.eye(x.size)])})
        x = res.x
    dev = float(np.max(np.abs(f.target.diff(fm, moved(x)))))
    dev = min(dev, dev0)
    rep = dict(rep)
    rep["roundtrip_deviation"] = dev
    rep["roundtrip_deviation_basepoint_gauge"] = dev0
    return dev, rep


def seed_equivariance(f: LatticeMap, scen: DualityScenario, xi) -> float:
    """lift with seed g equals lift with identity seed, right-translated by g."""
    g = scen.model.group.exp(np.asarray(xi, float) @ scen.chart.g)
    a = lift(f, scen).phi.values
    b = lift(f, scen, seed=g).phi.values
    m = f.lattice.mask()
    return float(np.max(np.abs(a[m] @ g - b[m])))


# ---------------------------------------------------------------------------
# branes

@dataclass(frozen=True, eq=False)
class BraneSide:
    chart: QuotientChart = field(repr=False)
    leaf_dim: int
    kind: str  # "dirichlet" | "neumann" | "mixed"
    beta: np.ndarray  # on a(C_G) at the base point, in leaf coordinates
    rel_residual: float


def _check_dirac(model: DoubleModel, CD):
    alg = model.algebra
    CD = _rows(CD, alg.dim)
    if CD.shape[0] * 2 != alg.dim or np.max(np.abs(CD @ alg.B @ CD.T)) > 1e-10:
        raise InvalidInputError("C_D must be a Lagrangian subspace of d")
    try:
        subalgebra_constants(alg, CD)
    except ValueError as exc:
        raise InvalidInputError("C_D is not closed under the bracket") from exc
    return CD


def _brane_side(chart: QuotientChart, CD, pts) -> BraneSide:
    C = chart.ad_inv(pts, CD)
    P, Q = chart.split(C)
    ranks = {int(np.linalg.matrix_rank(p, tol=1e-9)) for p in np.reshape(P, (-1,) + P.shape[-2:])}
    if len(ranks) != 1:
        raise InvalidInputError(f"a(C_G) has varying rank {sorted(ranks)} on the sample")
    r = ranks.pop()
    kind = "dirichlet" if r == 0 else ("neumann" if r == chart.n else "mixed")
    # beta at the first point: for c in C_G, beta(a(c), .) = alpha(c) on a(C_G)
    P0, Q0 = P.reshape((-1,) + P.shape[-2:])[0], Q.reshape((-1,) + Q.shape[-2:])[0]
    beta = np.zeros((r, r))
    if r:
        U, s, Vt = np.linalg.svd(P0)
        T = Vt[:r]                       # leaf tangent basis (chart coords)
        coef = P0 @ np.linalg.pinv(T)    # a(c_i) in leaf coords
        alpha = (-Q0 @ chart.Bgc) @ T.T  # alpha(c_i) restricted to the leaf
        beta = np.linalg.lstsq(coef, alpha, rcond=None)[0]
    rel = max(float(np.max(np.abs(_HL_D(chart.model, C)))), float(np.max(np.abs(_HL_std(chart, C)))),
              float(np.max(np.abs(_HL_D(chart.model, C) - _HL_std(chart, C)))))
    return BraneSide(chart, r, kind, beta, rel)


def brane_transport(CD, scen: DualityScenario, npts=16, box=0.3, seed=0):
    """Leaf data of C_G and C_G' for a Lagrangian subalgebra C_D of d."""
    from .equivariant import _sample_box
    CD = _check_dirac(scen.model, CD)
    out = []
    for ch in (scen.chart, scen.dual_chart):
        pts = ch.point(_sample_box(ch.n, npts, box, seed))
        out.append(_brane_side(ch, CD, pts))
    return tuple(out)


def _tf_dt(chart: QuotientChart, bg: TransportedBackground, p, v1, v2):
    """T~f(d_t) = T~f(d1) + T~f(d2) in d at the chart point p (left trivialized)."""
    rh = bg.rhat(p)
    A1 = np.einsum("...ij,...j->...i", rh, v1)
    w = np.einsum("...ji,...j->...i", rh, v2 @ chart.Bgc.T)
    A2 = -np.linalg.solve(chart.Bgc.T, w[..., None])[..., 0] if w.ndim > 1 else -np.linalg.solve(chart.Bgc.T, w)
    return (v1 + v2) @ chart.chart + (A1 + A2) @ chart.g


def dirac_bc(chart: QuotientChart, bg: TransportedBackground, CD):
    """Boundary condition <T~f(d_t), Ad_{p^-1} c_i> = 0 for a basis c_i of C_D (n equations)."""
    B = chart.model.algebra.B

    def bc(target, background, p, v1, v2):
        X = _tf_dt(chart, bg, p, v1, v2)
        C = chart.ad_inv(p, CD)
        return np.einsum("...i,ij,...kj->...k", X, B, C)

    return bc


def brane_boundary_residual(f: LatticeMap, chart: QuotientChart, bg: TransportedBackground, CD) -> dict:
    """Membership of T~f(d_t) in C_G on the diagonal, split into the tangency part
    (pairing with C_G inside the fibre directions) and the beta part (the rest)."""
    k, p, v1, v2 = boundary_velocities(f)
    X = _tf_dt(chart, bg, p, v1, v2)
    C = chart.ad_inv(p, _rows(CD, chart.model.dim))
    B = chart.model.algebra.B
    mem, bet = 0.0, 0.0
    for x, c in zip(X, C):
        Pc, _ = chart.split(c)
        vert = _nullspace(Pc.T) @ c  # C_G inside g: pairs with the velocity
        U = np.linalg.svd(Pc, full_matrices=True)[2]
        r = int(np.linalg.matrix_rank(Pc, tol=1e-9))
        if vert.size:
            mem = max(mem, float(np.max(np.abs(vert @ B @ x))))
        if r:
            # leaf part: combinations of C_G rows whose anchors span a(C_G)
            Y = np.linalg.lstsq(Pc.T, U[:r].T, rcond=None)[0].T @ c
            bet = max(bet, float(np.max(np.abs(Y @ B @ x))))
    return {"membership": mem, "beta": bet}
