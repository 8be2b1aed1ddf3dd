"""Exact Courant algebroids (T + T*)M on a coordinate chart.

The twisted bracket is
    [(u, a), (v, b)] = ([u, v], L_u b - i_v da + H(u, v, .)),
anchor (u, a) -> u and pairing a(v) + b(u). All fields are polynomial, so the axiom and
curvature identities are checked with exact differentiation.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .poly import ArityError, Form, Poly, VectorField


class ChartMismatchError(ValueError):
    pass


class InvalidInputError(ValueError):
    pass


class InvalidLeafError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    dim: int
    box: tuple = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("chart dimension must be >= 1")
        box = self.box if self.box is not None else tuple((-1.0, 1.0) for _ in range(self.dim))
        box = tuple((float(a), float(b)) for a, b in box)
        if len(box) != self.dim or any(a > b for a, b in box):
            raise ValueError("empty or malformed sampling box")
        object.__setattr__(self, "box", box)

    def sample(self, n=128, seed=0) -> np.ndarray:
        """Deterministic scrambled-Sobol points in the box."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
            pts = qmc.Sobol(self.dim, scramble=True, seed=seed).random(n)
        lo, hi = np.array(self.box).T
        return lo + pts * (hi - lo)


@dataclass(frozen=True, eq=False)
class GeneralizedSection:
    u: VectorField
    alpha: Form

    def __post_init__(self):
        if self.alpha.degree != 1:
            raise ArityError("the cotangent part must be a 1-form")
        if self.u.nvars != self.alpha.nvars:
            raise ChartMismatchError("vector and form parts on different charts")

    @property
    def nvars(self):
        return self.u.nvars

    @classmethod
    def vector(cls, u: VectorField):
        return cls(u, Form.zero(u.nvars, 1))

    @classmethod
    def covector(cls, a: Form):
        return cls(VectorField.zero(a.nvars), a)

    @classmethod
    def random(cls, n, degree, rng, scale=1.0):
        u = VectorField(tuple(Poly.random(n, degree, rng, scale) for _ in range(n)))
        a = Form(n, 1, {(i,): Poly.random(n, degree, rng, scale) for i in range(n)})
        return cls(u, a)

    def __add__(self, o):
        return GeneralizedSection(self.u + o.u, self.alpha + o.alpha)

    def __sub__(self, o):
        return GeneralizedSection(self.u - o.u, self.alpha - o.alpha)

    def scale(self, f):
        return GeneralizedSection(self.u.scale(f), self.alpha.scale(f))

    def __call__(self, pts):
        """Values at points as (N, 2n) arrays: vector comps then covector comps."""
        n = self.nvars
        a = np.stack([self.alpha.get((i,))(pts) for i in range(n)], axis=-1)
        return np.concatenate([self.u(pts), a], axis=-1)

    def max_abs_at(self, pts):
        return float(np.max(np.abs(self(pts))))

    def to_json(self):
        return {"u": [c.to_json() for c in self.u.comps], "alpha": self.alpha.to_json()}

    @classmethod
    def from_json(cls, n, data):
        return cls(VectorField(tuple(Poly.from_json(n, c) for c in data["u"])), Form.from_json(n, data["alpha"]))


@dataclass(frozen=True, eq=False)
class ClosedThreeForm:
    H: Form
    closure_checked: bool = True

    def __post_init__(self):
        if self.H.degree != 3:
            raise ArityError("H must be a 3-form")
        if self.closure_checked and self.H.d().max_abs_coef() > 0.0:
            raise InvalidInputError("dH != 0")

    @classmethod
    def zero(cls, n):
        return cls(Form.zero(n, 3))

    @classmethod
    def unchecked(cls, H: Form):
        """Bypass the closure check (used to exhibit the Jacobi anomaly of a non-closed H)."""
        return cls(H, closure_checked=False)

    @property
    def nvars(self):
        return self.H.nvars


def _same_chart(*objs):
    ns = {o.nvars for o in objs}
    if len(ns) != 1:
        raise ChartMismatchError(f"objects live on charts of dimensions {sorted(ns)}")


def pairing(s: GeneralizedSection, t: GeneralizedSection) -> Poly:
    _same_chart(s, t)
    return s.alpha.on(t.u) + t.alpha.on(s.u)


def anchor_transpose(df: Form) -> GeneralizedSection:
    return GeneralizedSection.covector(df)


def twisted_bracket(s: GeneralizedSection, t: GeneralizedSection, H: ClosedThreeForm | None) -> GeneralizedSection:
    _same_chart(s, t)
    vec = s.u.bracket(t.u)
    form = t.alpha.lie(s.u) - s.alpha.d().interior(t.u)
    if H is not None and H.H.comps:
        _same_chart(s, H)
        form = form + H.H.interior(s.u).interior(t.u)
    return GeneralizedSection(vec, form)


def std_bracket(s: GeneralizedSection, t: GeneralizedSection) -> GeneralizedSection:
    return twisted_bracket(s, t, None)


def axiom_residuals(H: ClosedThreeForm | None, s, t, u, f: Poly, pts) -> dict:
    """Max residual of each Courant axiom A-E at the sample points."""
    br = lambda a, b: twisted_bracket(a, b, H)
    n = s.nvars
    A = br(s, br(t, u)) - br(br(s, t), u) - br(t, br(s, u))
    B = br(s, t).u - s.u.bracket(t.u)
    C = br(s, t.scale(f)) - br(s, t).scale(f) - t.scale(s.u.apply(f))
    D = s.u.apply(pairing(t, u)) - pairing(br(s, t), u) - pairing(t, br(s, u))
    E = br(s, s) - anchor_transpose(Form.scalar(pairing(s, s) * 0.5).d())
    return {
        "A": A.max_abs_at(pts),
        "B": float(np.max(np.abs(B(pts)))) if n else 0.0,
        "C": C.max_abs_at(pts),
        "D": float(np.max(np.abs(D(pts)))),
        "E": E.max_abs_at(pts),
    }


# ---------------------------------------------------------------------------
# Lagrangian subbundles

@dataclass(frozen=True, eq=False)
class LagrangianFrame:
    sections: tuple
    check_points: np.ndarray | None = field(default=None, repr=False)
    tol: float = 1e-10

    def __post_init__(self):
        secs = tuple(self.sections)
        object.__setattr__(self, "sections", secs)
        _same_chart(*secs)
        pts = self.check_points if self.check_points is not None else Chart(secs[0].nvars).sample(32)
        for a, b in itertools.combinations_with_replacement(secs, 2):
            if np.max(np.abs(pairing(a, b)(pts))) > self.tol:
                raise InvalidInputError("frame is not isotropic")
        vals = np.stack([s(pts) for s in secs], axis=1)
        if np.min(np.linalg.matrix_rank(vals)) < len(secs):
            raise InvalidInputError("frame drops rank at a sample point")

    @property
    def rank(self):
        return len(self.sections)

    @property
    def nvars(self):
        return self.sections[0].nvars

    @classmethod
    def tangent(cls, n):
        return cls(tuple(GeneralizedSection.vector(VectorField.coord(n, i)) for i in range(n)))

    @classmethod
    def graph(cls, omega: Form):
        """sigma(e_i) = (e_i, i_{e_i} omega) for a 2-form omega."""
        if omega.degree != 2:
            raise ArityError("graph needs a 2-form")
        n = omega.nvars
        return cls(tuple(GeneralizedSection(VectorField.coord(n, i), omega.interior(VectorField.coord(n, i)))
                         for i in range(n)))


@dataclass(frozen=True, eq=False)
class NonInvolutivity:
    HL: dict  # (i, j, k) -> Poly, H_L(s_i, s_j, s_k)
    frame: LagrangianFrame
    complement: tuple

    def HL_at(self, pts) -> np.ndarray:
        k = self.frame.rank
        out = np.zeros((len(pts), k, k, k))
        for (i, j, l), p in self.HL.items():
            out[:, i, j, l] = p(pts)
        return out

    def FL_at(self, pts) -> np.ndarray:
        """F_L(s_i, s_j) as coefficients on the complementary frame (E/L ~ L* by the pairing)."""
        k = self.frame.rank
        G = np.zeros((len(pts), k, k))  # G[a, l] = <w_a, s_l>
        for a, w in enumerate(self.complement):
            for l, s in enumerate(self.frame.sections):
                G[:, a, l] = pairing(w, s)(pts)
        HL = self.HL_at(pts)
        return np.linalg.solve(np.swapaxes(G, -1, -2)[:, None, None], HL[..., None])[..., 0]


def _default_complement(frame: LagrangianFrame):
    n = frame.nvars
    cov = tuple(GeneralizedSection.covector(Form.dx(n, i)) for i in range(n))
    vec = tuple(GeneralizedSection.vector(VectorField.coord(n, i)) for i in range(n))
    pts = Chart(n).sample(16)
    best, score = None, -1.0
    for cand in itertools.combinations(cov + vec, frame.rank):
        G = np.array([[pairing(w, s)(pts[:1])[0] for s in frame.sections] for w in cand])
        sv = np.linalg.svd(G, compute_uv=False)[-1] if G.size else 1.0
        if sv > score + 1e-12:
            best, score = cand, sv
        if score >= 1.0 - 1e-12:
            break
    return best


def noninvolutivity(L: LagrangianFrame, H: ClosedThreeForm | None, complement=None) -> NonInvolutivity:
    """H_L(s_i, s_j, s_k) = <[s_i, s_j], s_k>; tensorial on an isotropic frame."""
    secs = L.sections
    k = len(secs)
    HL = {}
    brackets = {}
    for i, j in itertools.combinations(range(k), 2):
        brackets[i, j] = twisted_bracket(secs[i], secs[j], H)
    for i, j, l in itertools.product(range(k), repeat=3):
        if i == j:
            continue
        b = brackets[min(i, j), max(i, j)]
        p = pairing(b, secs[l])
        HL[i, j, l] = p if i < j else -p
    return NonInvolutivity(HL, L, tuple(complement) if complement is not None else _default_complement(L))


def connection_curvature(sigma: LagrangianFrame, H: ClosedThreeForm | None = None) -> ClosedThreeForm:
    """Curvature 3-form of a Lagrangian splitting indexed by the coordinate fields."""
    n = sigma.nvars
    if sigma.rank != n:
        raise InvalidInputError("a splitting needs one section per coordinate field")
    for i, s in enumerate(sigma.sections):
        target = VectorField.coord(n, i)
        if any(not (a - b).is_zero(1e-15) for a, b in zip(s.u.comps, target.comps)):
            raise InvalidInputError("frame anchor is not the coordinate frame")
    comps = {}
    for i, j, l in itertools.combinations(range(n), 3):
        b = twisted_bracket(sigma.sections[i], sigma.sections[j], H)
        comps[i, j, l] = pairing(b, sigma.sections[l])
    return ClosedThreeForm(Form(n, 3, comps))


def shift_splitting(sigma: LagrangianFrame, tau: Form) -> LagrangianFrame:
    """(tau + sigma)(v) = sigma(v) + a^t(i_v tau)."""
    if tau.degree != 2:
        raise ArityError("the shift must be a 2-form")
    secs = []
    for s in sigma.sections:
        secs.append(GeneralizedSection(s.u, s.alpha + tau.interior(s.u)))
    return LagrangianFrame(tuple(secs))


@dataclass(frozen=True, eq=False)
class Leaf:
    """Embedded sub-chart y -> P(y) given by polynomials."""
    param: tuple
    box: tuple = None

    @property
    def dim(self):
        return self.param[0].nvars

    def chart(self):
        return Chart(self.dim, self.box)

    def tangents(self, pts) -> np.ndarray:
        return np.stack([np.stack([p.diff(a)(pts) for p in self.param], -1) for a in range(self.dim)], 1)

    def __call__(self, pts):
        return np.stack([p(pts) for p in self.param], axis=-1)


def coordinate_leaf(n, fixed: dict, box=None) -> Leaf:
    """Leaf {x_i = c_i for i in fixed}, parametrized by the remaining coordinates."""
    free = [i for i in range(n) if i not in fixed]
    m = len(free)
    P = []
    for i in range(n):
        P.append(Poly.const(m, fixed[i]) if i in fixed else Poly.var(m, free.index(i)))
    return Leaf(tuple(P), box)


def dirac_leaf_check(L: LagrangianFrame | None, H: ClosedThreeForm | None, leaf: Leaf, beta: Form,
                     npts=64, tol=1e-10) -> float:
    """max |d beta - H|_leaf| over sample points of the leaf."""
    if beta.degree != 2 or beta.nvars != leaf.dim:
        raise ArityError("beta must be a 2-form on the leaf")
    pts = leaf.chart().sample(npts)
    if L is not None:
        xs = leaf(pts)
        anchors = np.stack([s.u(xs) for s in L.sections], axis=1)  # (N, k, n)
        T = leaf.tangents(pts)  # (N, m, n)
        for A, t in zip(anchors, T):
            coef, *_ = np.linalg.lstsq(A.T, t.T, rcond=None)
            if np.max(np.abs(A.T @ coef - t.T)) > tol:
                raise InvalidLeafError("leaf is not tangent to a(L)")
    Hpull = H.H.pullback(leaf.param) if H is not None else Form.zero(leaf.dim, 3)
    return (beta.d() - Hpull).max_abs_at(pts) if leaf.dim >= 3 else 0.0
