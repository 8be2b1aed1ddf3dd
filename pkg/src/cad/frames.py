"""Left-invariant frame calculus on a Lie group.

Constant-coefficient forms in the left coframe obey the Chevalley-Eilenberg rules, and a
section of (T + T*)K is carried by its left-trivialized value together with its
derivatives along the left-invariant fields, which is all the bracket needs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .poly import ArityError


def _perm_sign(p):
    sign, p = 1, list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def antisymmetrize(T):
    """Alternating projection (average over signed permutations of the axes)."""
    k = T.ndim
    if k < 2:
        return T.copy()
    out = np.zeros_like(T)
    for p in itertools.permutations(range(k)):
        out += _perm_sign(p) * np.transpose(T, p)
    return out / math.factorial(k)


@dataclass(frozen=True, eq=False)
class CEForm:
    """Constant k-form in the left coframe, stored as a full alternating tensor."""
    c: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        n = self.c.shape[0]
        if T.shape != (n,) * T.ndim:
            raise ArityError(f"tensor of shape {T.shape} on a {n}-dim algebra")
        object.__setattr__(self, "T", T)

    @property
    def degree(self):
        return self.T.ndim

    @property
    def dim(self):
        return self.c.shape[0]

    @classmethod
    def zero(cls, c, k):
        return cls(c, np.zeros((c.shape[0],) * k))

    def __add__(self, o):
        if o.degree != self.degree:
            raise ArityError("adding forms of different degree")
        return CEForm(self.c, self.T + o.T)

    def __neg__(self):
        return CEForm(self.c, -self.T)

    def __sub__(self, o):
        return self + (-o)

    def scale(self, a):
        return CEForm(self.c, float(a) * self.T)

    def wedge(self, o):
        p, q = self.degree, o.degree
        if p == 0 or q == 0:
            return CEForm(self.c, np.multiply.outer(self.T, o.T))
        prod = np.multiply.outer(self.T, o.T)
        coef = math.factorial(p + q) / (math.factorial(p) * math.factorial(q))
        return CEForm(self.c, coef * antisymmetrize(prod))

    def d(self):
        """d w(x_0..x_k) = sum_{i<j} (-1)^{i+j} w([x_i,x_j], x_0.. ^i ^j ..x_k)."""
        k = self.degree
        n = self.dim
        out = np.zeros((n,) * (k + 1))
        if k == 0:
            return CEForm(self.c, out)
        # B[i,j,rest] = w(c(e_i,e_j), rest)
        B = np.tensordot(self.c, self.T, axes=([2], [0]))
        for i, j in itertools.combinations(range(k + 1), 2):
            rest = [a for a in range(k + 1) if a not in (i, j)]
            perm = np.argsort([i, j] + rest)
            out += (-1) ** (i + j) * np.transpose(B, perm)
        return CEForm(self.c, out)

    def interior(self, x):
        if self.degree == 0:
            raise ArityError("interior product of a 0-form")
        return CEForm(self.c, np.tensordot(np.asarray(x, float), self.T, axes=([0], [0])))

    def __call__(self, *vs):
        out = self.T
        for v in vs:
            out = np.tensordot(np.asarray(v, float), out, axes=([0], [0]))
        return out

    def max_abs(self):
        return float(np.max(np.abs(self.T), initial=0.0))


def coframe(c, x):
    """The constant 1-form x^flat: e_i -> x_i."""
    return CEForm(c, np.asarray(x, float))


# ---------------------------------------------------------------------------
# sections in the left frame

@dataclass(frozen=True, eq=False)
class FrameSection:
    """Left-trivialized section with its left-invariant derivatives.

    Jx[..., k, a] is the derivative of x^k along e_a; likewise for alpha.
    """
    x: np.ndarray
    alpha: np.ndarray
    Jx: np.ndarray
    Jalpha: np.ndarray

    @classmethod
    def constant(cls, x, alpha):
        x = np.asarray(x, float)
        alpha = np.asarray(alpha, float)
        z = np.zeros(x.shape + (x.shape[-1],))
        return cls(x, alpha, z, z.copy())

    def scale(self, a):
        return FrameSection(a * self.x, a * self.alpha, a * self.Jx, a * self.Jalpha)

    def __add__(self, o):
        return FrameSection(self.x + o.x, self.alpha + o.alpha, self.Jx + o.Jx, self.Jalpha + o.Jalpha)


def frame_pairing(s, t):
    return np.einsum("...i,...i->...", s.alpha, t.x) + np.einsum("...i,...i->...", t.alpha, s.x)


def frame_bracket(c, H, s: FrameSection, t: FrameSection):
    """Values of ([X,Y], L_X b - i_Y da + H(X,Y,.)) in the left frame."""
    z = (np.einsum("...ka,...a->...k", t.Jx, s.x) - np.einsum("...ka,...a->...k", s.Jx, t.x)
         + np.einsum("...i,...j,ijk->...k", s.x, t.x, c))
    lie = (np.einsum("...la,...a->...l", t.Jalpha, s.x) + np.einsum("...k,...kl->...l", t.alpha, s.Jx)
           - np.einsum("...a,alk,...k->...l", s.x, c, t.alpha))
    da = np.swapaxes(s.Jalpha, -1, -2) - s.Jalpha - np.einsum("blk,...k->...bl", c, s.alpha)
    form = lie - np.einsum("...b,...bl->...l", t.x, da)
    if H is not None:
        form = form + np.einsum("...i,...j,ijl->...l", s.x, t.x, H)
    return z, form


def right_invariant_field(alg, X):
    """Left-trivialized value X = Ad_{m^-1} y of a right-invariant field, with its derivatives."""
    X = np.asarray(X, float)
    return X, alg.ad(X)


def subalgebra_constants(alg, basis) -> np.ndarray:
    """Structure constants of span(rows of basis) in that basis."""
    basis = np.atleast_2d(np.asarray(basis, float))
    k = basis.shape[0]
    br = alg.bracket(basis[:, None, :], basis[None, :, :]).reshape(k * k, -1)
    coef, *_ = np.linalg.lstsq(basis.T, br.T, rcond=None)
    if np.max(np.abs(basis.T @ coef - br.T), initial=0.0) > 1e-10:
        raise ValueError("basis does not span a subalgebra")
    return coef.T.reshape(k, k, k)
