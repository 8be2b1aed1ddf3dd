"""Equivariant exact Courant algebroids over a Drinfeld double and their reductions.

The big manifold is M = D with D acting by right translations, so the generator of
xi is the left-invariant field and the vertical normalization is carried by the left
Maurer-Cartan form. Every object is left-trivialized: the fiber of E = (T + T*)D is
d + d*, and D-invariant sections are those whose value at m is Ad_{m^-1} of a constant.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .frames import (CEForm, FrameSection, coframe, frame_bracket, frame_pairing,
                     subalgebra_constants)
from .liealg import ManinTriple, MatrixGroupModel, QuadraticLieAlgebra, _rows
from .poly import Form

KAPPA = -0.5


class ModelError(RuntimeError):
    """No normalization of H0 makes the representation equivariant."""


class DegenerateBackgroundError(RuntimeError):
    def __init__(self, msg, where=None):
        super().__init__(msg)
        self.where = where


class OutOfScopeError(ValueError):
    pass


def cartan_three_form(alg: QuadraticLieAlgebra) -> CEForm:
    """(x, y, z) -> <[x, y], z>."""
    return CEForm(alg.c, np.einsum("ijm,mk->ijk", alg.c, alg.B))


# ---------------------------------------------------------------------------
# connections and Chern-Simons forms

@dataclass(frozen=True, eq=False)
class PrincipalConnection:
    """Connection 1-form with values in a structure algebra (c, B).

    ``components[a]`` is the a-th component, either a CEForm (invariant frame) or a
    polynomial Form (chart). ``vertical[a]`` optionally gives the generating field of
    e_a, as frame coordinates, for the normalization A(xi_M) = xi.
    """
    c: np.ndarray
    B: np.ndarray
    components: tuple
    vertical: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) != self.c.shape[0]:
            raise ValueError("one component per structure-algebra basis element")

    @property
    def rank(self):
        return len(self.components)

    def _zero(self, k):
        f = self.components[0]
        return CEForm.zero(f.c, k) if isinstance(f, CEForm) else Form.zero(f.nvars, k)

    def dA(self):
        return tuple(a.d() for a in self.components)

    def bracket_AA(self):
        """[A, A]^a = sum_{bc} c[b,c,a] A^b ^ A^c."""
        out = []
        for a in range(self.rank):
            acc = self._zero(2)
            for b, cc in itertools.product(range(self.rank), repeat=2):
                if self.c[b, cc, a]:
                    acc = acc + self.components[b].wedge(self.components[cc]).scale(self.c[b, cc, a])
            out.append(acc)
        return tuple(out)

    def curvature(self):
        return tuple(d + aa.scale(0.5) for d, aa in zip(self.dA(), self.bracket_AA()))

    def normalization_residual(self) -> float:
        if self.vertical is None:
            return 0.0
        vals = np.array([[a(v) for a in self.components] for v in self.vertical])
        return float(np.max(np.abs(vals - np.eye(self.rank)), initial=0.0))


def maurer_cartan(alg: QuadraticLieAlgebra) -> PrincipalConnection:
    """Left Maurer-Cartan form of D: A(e_i) = e_i."""
    n = alg.dim
    comps = tuple(coframe(alg.c, np.eye(n)[a]) for a in range(n))
    return PrincipalConnection(alg.c, alg.B, comps, vertical=np.eye(n))


def projected_connection(alg: QuadraticLieAlgebra, g_basis, complement) -> PrincipalConnection:
    """g-valued invariant form: project the Maurer-Cartan form onto g along a complement."""
    g = _rows(g_basis, alg.dim)
    K = np.vstack([g, _rows(complement, alg.dim)]).T
    P = np.linalg.inv(K)[: g.shape[0]]
    cg = subalgebra_constants(alg, g)
    Bg = g @ alg.B @ g.T
    comps = tuple(coframe(alg.c, P[a]) for a in range(g.shape[0]))
    return PrincipalConnection(cg, Bg, comps, vertical=g)


def _pair_forms(B, left, right, zero):
    acc = zero
    for a, b in itertools.product(range(len(left)), range(len(right))):
        if B[a, b]:
            acc = acc + left[a].wedge(right[b]).scale(B[a, b])
    return acc


def chern_simons(A: PrincipalConnection):
    """cs = <A, dA> + 1/3 <[A, A], A>."""
    z = A._zero(3)
    return (_pair_forms(A.B, A.components, A.dA(), z)
            + _pair_forms(A.B, A.bracket_AA(), A.components, z).scale(1.0 / 3.0))


def pontryagin(A: PrincipalConnection):
    F = A.curvature()
    return _pair_forms(A.B, F, F, A._zero(4))


def _form_max(f):
    return f.max_abs() if isinstance(f, CEForm) else f.max_abs_coef()


def chern_simons_residuals(A: PrincipalConnection) -> dict:
    """Residuals of d cs = <F, F> and, when vertical fields are known, i_xi cs = <xi, dA>."""
    cs = chern_simons(A)
    out = {"d_cs": _form_max(cs.d() - pontryagin(A))}
    if A.vertical is not None:
        dA = A.dA()
        worst = 0.0
        for a, v in enumerate(A.vertical):
            xi = np.eye(A.rank)[a]
            rhs = A._zero(2)
            for b in range(A.rank):
                coef = float(xi @ A.B[:, b])
                if coef:
                    rhs = rhs + dA[b].scale(coef)
            worst = max(worst, _form_max(cs.interior(v) - rhs))
        out["interior"] = worst
    return out


# ---------------------------------------------------------------------------
# the double model

@dataclass(frozen=True, eq=False)
class DoubleModel:
    triple: ManinTriple
    group: MatrixGroupModel
    kappa: float = KAPPA
    shift: np.ndarray | None = None  # extra constant closed 3-form added to kappa * Cartan

    @property
    def algebra(self) -> QuadraticLieAlgebra:
        return self.triple.algebra

    @property
    def dim(self):
        return self.algebra.dim

    @property
    def H0(self) -> np.ndarray:
        H = self.kappa * cartan_three_form(self.algebra).T
        return H if self.shift is None else H + self.shift

    def with_kappa(self, kappa) -> "DoubleModel":
        return DoubleModel(self.triple, self.group, float(kappa), self.shift)

    def with_shift(self, gamma) -> "DoubleModel":
        return DoubleModel(self.triple, self.group, self.kappa, np.asarray(gamma, float))

    def closure_residual(self) -> float:
        return CEForm(self.algebra.c, self.H0).d().max_abs()

    def rho(self, xi, A: PrincipalConnection | None = None) -> FrameSection:
        """rho(xi) = (xi_M, 1/2 <xi, A>) for a connection with constant frame coefficients."""
        xi = np.asarray(xi, float)
        A = A if A is not None else maurer_cartan(self.algebra)
        coef = np.array([[f.T[l] for l in range(self.dim)] for f in A.components])  # (rank, dim)
        alpha = 0.5 * (xi @ A.B) @ coef
        x = xi @ A.vertical
        return FrameSection.constant(x, alpha)

    def invariant_section(self, X) -> FrameSection:
        """D-invariant section of rho(d)^perp with left-trivialized vector part X = Ad_{m^-1} y."""
        X = np.asarray(X, float)
        Jx = self.algebra.ad(X)
        B = self.algebra.B
        return FrameSection(X, -0.5 * X @ B.T, Jx, -0.5 * np.einsum("lk,...ka->...la", B, Jx))

    def bracket(self, s: FrameSection, t: FrameSection):
        return frame_bracket(self.algebra.c, self.H0, s, t)


def _equivariance_vector(model: DoubleModel, A: PrincipalConnection, basis) -> np.ndarray:
    n = model.dim
    out = []
    for xi in basis:
        r = model.rho(xi, A)
        for u in np.eye(n):
            _, form = model.bracket(r, FrameSection.constant(u, np.zeros(n)))
            out.append(form)
    return np.concatenate(out)


def check_equivariance(model: DoubleModel, A: PrincipalConnection | None = None, basis=None) -> float:
    """Max 1-form part of [rho(xi), (u, 0)], which must equal the natural action ([xi_M, u], 0).

    This is the identity i_xi H = (1/2) <xi, dA> in the conventions used here.
    """
    A = A if A is not None else maurer_cartan(model.algebra)
    basis = np.eye(A.rank) if basis is None else np.atleast_2d(basis)
    return float(np.max(np.abs(_equivariance_vector(model, A, basis)), initial=0.0))


def calibrate_kappa(model: DoubleModel, A: PrincipalConnection | None = None, tol=1e-9) -> float:
    """Least-squares normalization of H0; the residual is affine in kappa."""
    A = A if A is not None else maurer_cartan(model.algebra)
    basis = np.eye(A.rank)
    r0 = _equivariance_vector(model.with_kappa(0.0), A, basis)
    r1 = _equivariance_vector(model.with_kappa(1.0), A, basis) - r0
    if np.max(np.abs(r1), initial=0.0) < 1e-14:
        kappa = 0.0
    else:
        kappa = -float(r0 @ r1) / float(r1 @ r1)
    res = float(np.max(np.abs(r0 + kappa * r1), initial=0.0))
    if res > tol:
        raise ModelError(f"best kappa {kappa:.6g} leaves equivariance residual {res:.3e}")
    return kappa


def bracket_morphism_residual(model: DoubleModel, A: PrincipalConnection | None = None) -> float:
    A = A if A is not None else maurer_cartan(model.algebra)
    worst = 0.0
    for i, j in itertools.product(range(A.rank), repeat=2):
        ei, ej = np.eye(A.rank)[i], np.eye(A.rank)[j]
        z, form = model.bracket(model.rho(ei, A), model.rho(ej, A))
        target = model.rho(np.einsum("i,j,ijk->k", ei, ej, A.c), A)
        worst = max(worst, np.max(np.abs(z - target.x)), np.max(np.abs(form - target.alpha)))
    return float(worst)


def rho_pairing_residual(model: DoubleModel, A: PrincipalConnection | None = None) -> float:
    A = A if A is not None else maurer_cartan(model.algebra)
    I = np.eye(A.rank)
    G = np.array([[frame_pairing(model.rho(a, A), model.rho(b, A)) for b in I] for a in I])
    return float(np.max(np.abs(G - A.B)))


# ---------------------------------------------------------------------------
# reduction

def _sample_box(k, npts, box, seed):
    if k == 0:
        return np.zeros((npts, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
        return (2 * qmc.Sobol(k, scramble=True, seed=seed).random(npts) - 1) * box


def euclidean_lagrangian_complement(alg: QuadraticLieAlgebra, g) -> np.ndarray:
    """Lagrangian complement of g nearest (in the Euclidean sense) to its orthogonal complement.

    Lagrangian complements of g are graphs u + K u over a fixed Lagrangian complement W with
    K: W -> g skew for the pairing; K is chosen by least squares.
    """
    g = _rows(g, alg.dim)
    k = g.shape[0]
    # a fixed Lagrangian complement: dual basis of g under B, made isotropic
    W = np.linalg.lstsq(g @ alg.B, np.eye(k), rcond=None)[0].T  # <g_i, W_j> = delta_ij
    S = W @ alg.B @ W.T
    W = W - 0.5 * S @ g  # now isotropic
    orth = np.linalg.svd(g)[2][k:]  # Euclidean complement of g
    # K parametrized by a skew matrix: W_a + sum_b K[a,b] g_b with K = -K^T (pairing <g_b, W_a> = delta)
    iu = np.triu_indices(k, 1)

    def frame(p):
        K = np.zeros((k, k))
        K[iu] = p
        K = K - K.T
        return W + K @ g

    def defect(p):
        F = frame(p)
        # distance of span(F) from span(orth): component of F orthogonal to orth
        proj = F - (F @ orth.T) @ orth
        return proj.ravel()

    if iu[0].size:
        # defect is affine in p: solve linear least squares
        base = defect(np.zeros(iu[0].size))
        J = np.stack([defect(e) - base for e in np.eye(iu[0].size)], axis=1)
        p = np.linalg.lstsq(J, -base, rcond=None)[0]
    else:
        p = np.zeros(0)
    return frame(p)


@dataclass(frozen=True, eq=False)
class QuotientChart:
    """Chart of M/G by the complementary subgroup: m = chart(theta) . k with k in G."""
    model: DoubleModel
    g: np.ndarray       # rows: basis of the structure algebra of G
    chart: np.ndarray   # rows: basis of the chart subalgebra
    cchart: np.ndarray = field(init=False, repr=False)
    Bgc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alg = self.model.algebra
        object.__setattr__(self, "cchart", subalgebra_constants(alg, self.chart))
        object.__setattr__(self, "Bgc", self.g @ alg.B @ self.chart.T)
        object.__setattr__(self, "_K", np.linalg.inv(np.vstack([self.chart, self.g]).T))

    @property
    def n(self):
        return self.chart.shape[0]

    def point(self, theta):
        return self.model.group.exp(np.asarray(theta, float) @ self.chart)

    def split(self, X):
        """Coordinates of X in d = chart + g: (chart coords, g coords)."""
        coef = np.asarray(X, float) @ self._K.T
        return coef[..., : self.n], coef[..., self.n:]

    def ad_inv(self, gp, Y):
        """Ad_{gp^-1} Y for rows Y (batched over points)."""
        Ad = self.model.group.adjoint(np.linalg.inv(gp))
        return np.einsum("...ij,kj->...ki", Ad, np.atleast_2d(Y))

    def std_section(self, E):
        """Image in (T + T*)(M/G) of the D-invariant section with value E at the chart point.

        Vector part: chart component; 1-form part: -<g component, .> on the chart algebra.
        Derivatives along the chart's left-invariant fields use d/d eta E = [E, eta].
        """
        alg = self.model.algebra
        E = np.asarray(E, float)
        p, q = self.split(E)
        dE = np.einsum("...i,ijk->...jk", E, np.einsum("bj,ijk->ibk", self.chart, alg.c))  # (..., b, k)
        dp, dq = self.split(dE)
        return FrameSection(p, -q @ self.Bgc, np.swapaxes(dp, -1, -2), -np.swapaxes(dq @ self.Bgc, -1, -2))


def _HL_D(model: DoubleModel, X):
    """H_L(s_i, s_j, s_k) = <[s_i, s_j], s_k> for D-invariant sections with values X[..., i, :]."""
    s = model.invariant_section(X)
    si = FrameSection(s.x[..., :, None, :], s.alpha[..., :, None, :], s.Jx[..., :, None, :, :], s.Jalpha[..., :, None, :, :])
    sj = FrameSection(s.x[..., None, :, :], s.alpha[..., None, :, :], s.Jx[..., None, :, :, :], s.Jalpha[..., None, :, :, :])
    z, form = model.bracket(si, sj)
    return np.einsum("...ijl,...kl->...ijk", form, X) + np.einsum("...ijl,...kl->...ijk", z, s.alpha)


def _HL_std(chart: QuotientChart, X):
    """Same tensor computed with the untwisted bracket on the chart group."""
    s = chart.std_section(X)
    si = FrameSection(s.x[..., :, None, :], s.alpha[..., :, None, :], s.Jx[..., :, None, :, :], s.Jalpha[..., :, None, :, :])
    sj = FrameSection(s.x[..., None, :, :], s.alpha[..., None, :, :], s.Jx[..., None, :, :, :], s.Jalpha[..., None, :, :, :])
    z, form = frame_bracket(chart.cchart, None, si, sj)
    return np.einsum("...ijl,...kl->...ijk", form, s.x) + np.einsum("...ijl,...kl->...ijk", z, s.alpha)


@dataclass(frozen=True, eq=False)
class ReducedCA:
    chart: QuotientChart
    splitting: np.ndarray  # rows: Lagrangian L_D transverse to g defining L_G
    thetas: np.ndarray
    points: np.ndarray

    @property
    def model(self):
        return self.chart.model

    @property
    def dim_base(self):
        return self.chart.n

    def fiber_rank(self) -> np.ndarray:
        """rank(rho(g)^perp) - rank(rho(g)) in the fiber of E at each sample point."""
        model = self.model
        N = model.dim
        Epair = np.block([[np.zeros((N, N)), np.eye(N)], [np.eye(N), np.zeros((N, N))]])
        # rho(xi) = (xi, B xi / 2) is constant in the left trivialization, so every point
        # sees the same subspace; the loop keeps the count honest per sample
        ranks = []
        for _ in self.points:
            rg = np.array([np.concatenate([x, 0.5 * model.algebra.B @ x]) for x in self.chart.g])
            perp = _nullspace(rg @ Epair)
            ranks.append(np.linalg.matrix_rank(perp) - np.linalg.matrix_rank(rg))
        return np.array(ranks)

    def pairing_min_singular(self) -> float:
        """Smallest singular value of the induced pairing on rho(d)^perp ~ E_{/G}."""
        return float(np.linalg.svd(-self.model.algebra.B, compute_uv=False)[-1])

    def transversality_failures(self, tol=1e-8) -> np.ndarray:
        return np.where(self._frame_svmin(self.splitting) < tol)[0]

    def _frame_svmin(self, LD):
        X = self.chart.ad_inv(self.points, LD)
        p, _ = self.chart.split(X)
        return np.linalg.svd(p, compute_uv=False)[..., -1]

    def structure_residual(self) -> float:
        """Reduced bracket (via D) against the untwisted bracket on the chart, on a full frame."""
        X = self.chart.ad_inv(self.points, np.eye(self.model.dim))
        return float(np.max(np.abs(_HL_D(self.model, X) - _HL_std(self.chart, X))))

    def H_L(self, LD, where="D"):
        """H tensor of the image of p_D^* L_D on the frame Ad_{m^-1} y_k, y_k the rows of L_D."""
        X = self.chart.ad_inv(self.points, _rows(LD, self.model.dim))
        return _HL_D(self.model, X) if where == "D" else _HL_std(self.chart, X)

    def H_G(self) -> np.ndarray:
        """Curvature of L_G on the chart's left-invariant frame, at each sample point."""
        return self._H_G_at(self.points)

    def _H_G_at(self, points):
        X = self.chart.ad_inv(points, self.splitting)
        p, _ = self.chart.split(X)  # (..., k, n): chart part of each frame element
        Minv = np.linalg.inv(np.swapaxes(p, -1, -2))  # sigma(eta_a) = sum_k Minv[k, a] s_k
        H = _HL_D(self.model, X)
        return np.einsum("...ijk,...ia,...jb,...kc->...abc", H, Minv, Minv, Minv)

    def H_G_closure_residual(self, eps=1e-4, npts=8) -> float:
        """Finite-difference left-frame exterior derivative of H_G (zero when dim < 4)."""
        n = self.dim_base
        if n < 4:
            return 0.0
        grp = self.model.group
        cc = self.chart.cchart
        steps = [grp.exp(eps * e) for e in self.chart.chart]
        worst = 0.0
        for gp in self.points[:npts]:
            H = self._H_G_at(gp[None])[0]
            der = np.stack([(self._H_G_at((gp @ st)[None])[0] - self._H_G_at((gp @ np.linalg.inv(st))[None])[0])
                            / (2 * eps) for st in steps])
            for idx in itertools.combinations(range(n), 4):
                v = 0.0
                for i in range(4):
                    rest = idx[:i] + idx[i + 1:]
                    v += (-1) ** i * der[idx[i]][rest]
                for i, j in itertools.combinations(range(4), 2):
                    r0, r1 = (idx[k] for k in range(4) if k not in (i, j))
                    v += (-1) ** (i + j) * float(cc[idx[i], idx[j]] @ H[:, r0, r1])
                worst = max(worst, abs(v))
        return worst


def _nullspace(A, tol=1e-10):
    u, s, vt = np.linalg.svd(np.atleast_2d(A))
    r = int(np.sum(s > tol))
    return vt[r:]


def quotient_chart(model: DoubleModel, G="g") -> QuotientChart:
    t = model.triple
    if isinstance(G, str):
        if G == "g":
            g, chart = t.g_basis, t.gprime_basis
        elif G == "gprime":
            g, chart = t.gprime_basis, t.g_basis
        else:
            raise ValueError(f"unknown subgroup selection {G!r}")
    else:
        g, chart = G
    return QuotientChart(model, _rows(g, model.dim), _rows(chart, model.dim))


def reduce(model: DoubleModel, G="g", splitting_rule="euclidean", npts=100, box=0.5, seed=0) -> ReducedCA:
    """Reduce E over D by the right action of the Lagrangian subgroup G."""
    chart = quotient_chart(model, G)
    alg = model.algebra
    if isinstance(splitting_rule, str):
        if splitting_rule == "euclidean":
            LD = euclidean_lagrangian_complement(alg, chart.g)
        elif splitting_rule == "gprime":
            LD = chart.chart
        else:
            raise ValueError(f"unknown splitting rule {splitting_rule!r}")
    else:
        LD = _rows(splitting_rule, alg.dim)
    if np.max(np.abs(LD @ alg.B @ LD.T)) > 1e-10:
        raise ValueError("splitting subspace is not isotropic")
    thetas = _sample_box(chart.n, npts, box, seed)
    return ReducedCA(chart, LD, thetas, chart.point(thetas))


# ---------------------------------------------------------------------------
# backgrounds

@dataclass(frozen=True, eq=False)
class TransportedBackground:
    """r-tensor on M/G from R_G(gp) = Ad_{gp^-1} R_D, read as the graph of r^: chart -> g.

    r(u, v) = <r^ u, v> with d's pairing; derivatives are along the chart's left-invariant fields.
    """
    chart: QuotientChart
    RD: np.ndarray

    def _W(self, gp):
        return np.swapaxes(self.chart.ad_inv(gp, self.RD), -1, -2)  # (..., 2n, k) columns

    def rhat(self, gp, with_derivative=False):
        W = self._W(gp)
        p, q = self.chart.split(np.swapaxes(W, -1, -2))
        PW, QW = np.swapaxes(p, -1, -2), np.swapaxes(q, -1, -2)
        sv = np.linalg.svd(PW, compute_uv=False)[..., -1]
        if np.any(sv < 1e-10):
            bad = np.argwhere(np.atleast_1d(sv) < 1e-10)
            raise DegenerateBackgroundError("R_G is not a graph over T(M/G)", where=bad.tolist())
        PWi = np.linalg.inv(PW)
        rh = QW @ PWi
        if not with_derivative:
            return rh
        alg = self.model.algebra
        drh = []
        for eta in self.chart.chart:
            dW = -alg.ad(eta) @ W
            dp, dq = self.chart.split(np.swapaxes(dW, -1, -2))
            dPW, dQW = np.swapaxes(dp, -1, -2), np.swapaxes(dq, -1, -2)
            drh.append(dQW @ PWi - rh @ dPW @ PWi)
        return rh, np.stack(drh, axis=-3)

    @property
    def model(self):
        return self.chart.model

    def r(self, gp):
        return np.swapaxes(self.rhat(gp), -1, -2) @ self.chart.Bgc

    def r_and_dr(self, gp, batch=None):
        rh, drh = self.rhat(gp, with_derivative=True)
        return (np.swapaxes(rh, -1, -2) @ self.chart.Bgc, np.swapaxes(drh, -1, -2) @ self.chart.Bgc)


def transport_RD(model: DoubleModel, G, RD) -> TransportedBackground:
    chart = quotient_chart(model, G)
    RD = _rows(RD, model.dim)
    if RD.shape[0] != chart.n:
        raise ValueError("R_D must have half the dimension of d")
    return TransportedBackground(chart, RD)


# ---------------------------------------------------------------------------
# pullback relations and distribution curvature

def pullback_residuals(red: ReducedCA, LD) -> dict:
    """H_L on E over D against H_{L_D} on E_{/D} = (d, -<,>) and H_{L_G} on E_{/G}."""
    alg = red.model.algebra
    LD = _rows(LD, alg.dim)
    HD = red.H_L(LD, "D")
    HG = red.H_L(LD, "std")
    # E_{/D} ~ (d, [,], -<,>) via y -> s_{-y}; trilinear so H_L(s_y..) = <[y_i, y_j], y_k>
    HLD = np.einsum("ia,jb,abm,mn,kn->ijk", LD, LD, alg.c, alg.B, LD)
    return {"D": float(np.max(np.abs(HD - HLD))), "G": float(np.max(np.abs(HD - HG)))}


def distribution_curvature_residual(red: ReducedCA, LD) -> float:
    """F_V(a s, a t) = a(F_L(s, t)) with V = a(L), compared in TM / V at each sample point."""
    model = red.model
    alg = model.algebra
    LD = _rows(LD, alg.dim)
    X = red.chart.ad_inv(red.points, LD)
    s = model.invariant_section(X)
    si = FrameSection(s.x[..., :, None, :], s.alpha[..., :, None, :], s.Jx[..., :, None, :, :], s.Jalpha[..., :, None, :, :])
    sj = FrameSection(s.x[..., None, :, :], s.alpha[..., None, :, :], s.Jx[..., None, :, :, :], s.Jalpha[..., None, :, :, :])
    z, _ = model.bracket(si, sj)
    # Lie bracket of the right-invariant fields y_i^R, y_j^R is -[y_i, y_j]^R
    lie = -red.chart.ad_inv(red.points, alg.bracket(LD[:, None, :], LD[None, :, :]).reshape(-1, alg.dim))
    lie = lie.reshape(z.shape)
    worst = 0.0
    for k, V in enumerate(X):
        Q = np.eye(alg.dim) - np.linalg.pinv(V) @ V  # Euclidean projector onto V^perp
        worst = max(worst, float(np.max(np.abs((z[k] - lie[k]) @ Q))))
    return worst


def theta_shift_check(model: DoubleModel, gamma: np.ndarray, G="g", npts=16, seed=0) -> float:
    """Add p^* gamma (gamma a constant 3-form on the chart algebra) to H0; H_G must shift by gamma."""
    chart = quotient_chart(model, G)
    P = np.linalg.inv(np.vstack([chart.chart, chart.g]).T)[: chart.n]  # d -> chart coords
    pg = np.einsum("abc,ai,bj,ck->ijk", gamma, P, P, P)
    if CEForm(model.algebra.c, pg).d().max_abs() > 1e-12:
        raise ValueError("p^* gamma is not closed")
    base = reduce(model, G, "gprime", npts=npts, seed=seed)
    shifted = reduce(model.with_shift(pg if model.shift is None else model.shift + pg), G, "gprime",
                     npts=npts, seed=seed)
    return float(np.max(np.abs(shifted.H_G() - base.H_G() - gamma)))


# ---------------------------------------------------------------------------
# transitive Courant algebroids over a point

@dataclass(frozen=True, eq=False)
class TransitiveCA:
    """E = p^* Etilde + d over D, for Etilde a quadratic Lie algebra isomorphic to (d, -<,>).

    Frame: first the Etilde basis (anchored by minus the right-invariant fields), then d
    (anchored by the left-invariant fields). Brackets of frame elements are constant.
    """
    tilde: QuadraticLieAlgebra
    model: DoubleModel
    iso: np.ndarray  # Etilde -> (d, -<,>), columns are images of the Etilde basis

    @property
    def rank(self):
        return self.tilde.dim + self.model.dim

    @property
    def c(self):
        return self.tilde.direct_sum(self.model.algebra).c

    @property
    def pairing(self):
        return self.tilde.direct_sum(self.model.algebra).B

    def anchor(self, m) -> np.ndarray:
        """Left-trivialized anchors of the frame at m, rows."""
        n = self.model.dim
        Ad = self.model.group.adjoint(np.linalg.inv(m))
        return np.concatenate([-(Ad @ self.iso).T, np.eye(n)], axis=0)

    def anchor_morphism_residual(self, points) -> float:
        alg = self.model.algebra
        worst = 0.0
        for m in points:
            a = self.anchor(m)
            for i, j in itertools.product(range(self.rank), repeat=2):
                # left-trivialized Lie bracket of fields X_i, X_j with dX/d e_a = [X, e_a] on
                # right-invariant ones and 0 on left-invariant ones
                Ji = alg.ad(a[i]) if i < self.tilde.dim else np.zeros((alg.dim, alg.dim))
                Jj = alg.ad(a[j]) if j < self.tilde.dim else np.zeros((alg.dim, alg.dim))
                lie = Jj @ a[i] - Ji @ a[j] + alg.bracket(a[i], a[j])
                target = self.c[i, j] @ a
                worst = max(worst, float(np.max(np.abs(lie - target))))
        return worst

    def exactness_defect(self, points) -> float:
        """Kernel of the anchor must be isotropic of rank dim D."""
        worst = 0.0
        for m in points:
            K = _nullspace(self.anchor(m).T)
            if K.shape[0] != self.model.dim:
                return np.inf
            worst = max(worst, float(np.max(np.abs(K @ self.pairing @ K.T))))
        return worst

    def axiom_residuals(self, points) -> dict:
        from .liealg import jacobi_residual
        c, B = self.c, self.pairing
        inv = np.einsum("ijm,mk->ijk", c, B)
        return {"A": jacobi_residual(c), "B": self.anchor_morphism_residual(points),
                "D": float(np.max(np.abs(inv + inv.transpose(0, 2, 1)))), "exact": self.exactness_defect(points)}

    def reduce_by_D(self) -> QuadraticLieAlgebra:
        """rho(d) is the d summand; invariant sections of its orthogonal are constant Etilde sections."""
        k = self.tilde.dim
        B = self.pairing
        rho = np.eye(self.rank)[k:]
        perp = _nullspace(rho @ B)
        # invariant: bracket with every rho(xi) vanishes
        ad_rho = np.concatenate([np.einsum("i,ijk->jk", r, self.c) for r in rho], axis=1)  # (rank, rank*|rho|)
        inv = _nullspace((perp @ ad_rho).T)
        basis = inv @ perp
        c = np.einsum("ai,bj,ijk->abk", basis, basis, self.c)
        coef = np.linalg.lstsq(basis.T, c.reshape(-1, self.rank).T, rcond=None)[0].T.reshape(len(basis), len(basis), -1)
        return QuadraticLieAlgebra(coef, basis @ B @ basis.T), basis


def transitive_reconstruct(tilde: QuadraticLieAlgebra, model: DoubleModel, base_dim=0) -> TransitiveCA:
    if base_dim != 0:
        raise OutOfScopeError("only a point base is supported")
    if tilde.dim != model.dim:
        raise ValueError("Etilde must have the dimension of d for E to be exact over D")
    alg = model.algebra
    candidates = [np.eye(alg.dim)]
    t = model.triple
    # +1 on g, -1 on g' flips the sign of the pairing and is an automorphism when g' is an ideal
    K = np.vstack([t.g_basis, t.gprime_basis]).T
    candidates.append(K @ np.diag([1.0] * t.half + [-1.0] * t.half) @ np.linalg.inv(K))
    for iso in candidates:
        hom = np.einsum("ia,jb,abk->ijk", iso.T, iso.T, alg.c) - np.einsum("ijm,km->ijk", tilde.c, iso)
        met = iso.T @ (-alg.B) @ iso - tilde.B
        if max(np.max(np.abs(hom)), np.max(np.abs(met))) < 1e-12:
            return TransitiveCA(tilde, model, iso)
    raise ValueError("no isometric isomorphism Etilde -> (d, -<,>) among the canonical candidates")


def gram_match(red: QuadraticLieAlgebra, basis, tca: TransitiveCA) -> float:
    """Identify the reduced algebra with Etilde through pairings and compare structures."""
    k = tca.tilde.dim
    ET = np.eye(tca.rank)[:k]
    cross = basis @ tca.pairing @ ET.T  # <r_a, e_j>
    T = np.linalg.solve(tca.tilde.B.T, cross.T).T  # coordinates of r_a in the Etilde basis
    mapped = tca.tilde.transformed(T.T)
    return float(max(np.max(np.abs(mapped.c - red.c)), np.max(np.abs(mapped.B - red.B))))
