"""Polynomial scalars, vector fields and differential forms on a coordinate chart.

Forms are stored by strictly increasing index tuples, ``omega = sum_I omega_I dx^I``, and
evaluated with the determinant convention ``(dx^1 ^ dx^2)(e_1, e_2) = 1``. Differentiation
shifts coefficients, so every identity checked on these objects is exact up to roundoff.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class ArityError(ValueError):
    pass


def _clean(terms, tol=0.0):
    return {e: c for e, c in terms.items() if abs(c) > tol}


@dataclass(frozen=True, eq=False)
class Poly:
    nvars: int
    terms: dict

    def __post_init__(self):
        t = {}
        for e, c in dict(self.terms).items():
            e = tuple(int(k) for k in e)
            if len(e) != self.nvars:
                raise ValueError(f"exponent {e} does not match {self.nvars} variables")
            t[e] = t.get(e, 0.0) + float(c)
        object.__setattr__(self, "terms", _clean(t))

    @classmethod
    def _raw(cls, n, terms):
        """Skip validation for terms built internally (int exponent tuples, float coefs)."""
        out = object.__new__(cls)
        object.__setattr__(out, "nvars", n)
        object.__setattr__(out, "terms", _clean(terms))
        return out

    # construction
    @classmethod
    def const(cls, n, c=1.0):
        return cls(n, {(0,) * n: c})

    @classmethod
    def var(cls, n, i, c=1.0):
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): c})

    @classmethod
    def zero(cls, n):
        return cls(n, {})

    @classmethod
    def random(cls, n, degree, rng, scale=1.0):
        terms = {}
        for e in itertools.product(range(degree + 1), repeat=n):
            if sum(e) <= degree:
                terms[e] = scale * rng.uniform(-1, 1)
        return cls(n, terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError("polynomials live on different charts")
            return other
        return Poly.const(self.nvars, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, 0.0) + c
        return Poly._raw(self.nvars, t)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            k = float(other)
            return Poly._raw(self.nvars, {e: c * k for e, c in self.terms.items()})
        other = self._coerce(other)
        t = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(map(int.__add__, e1, e2))
                t[e] = t.get(e, 0.0) + c1 * c2
        return Poly._raw(self.nvars, t)

    __rmul__ = __mul__

    def diff(self, i):
        t = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                t[tuple(f)] = c * e[i]
        return Poly._raw(self.nvars, t)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            out += c * np.prod(pts ** np.asarray(e), axis=1)
        return out

    def compose(self, polys):
        """Substitute x_i -> polys[i] (polys on a common chart)."""
        m = polys[0].nvars
        out = Poly.zero(m)
        for e, c in self.terms.items():
            mono = Poly.const(m, c)
            for p, k in zip(polys, e):
                for _ in range(k):
                    mono = mono * p
            out = out + mono
        return out

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def is_zero(self, tol=0.0) -> bool:
        return self.max_abs_coef() <= tol

    def to_json(self) -> dict:
        return {"degree": self.degree,
                "monomials": [{"exps": list(e), "coef": c} for e, c in sorted(self.terms.items())]}

    @classmethod
    def from_json(cls, n, data) -> "Poly":
        return cls(n, {tuple(m["exps"]): m["coef"] for m in data["monomials"]})

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"{c:g}*x^{list(e)}" for e, c in sorted(self.terms.items()))


def _sort_sign(idx):
    """Sign of the permutation sorting idx, and the sorted tuple; sign 0 on repeats."""
    idx = list(idx)
    if len(set(idx)) < len(idx):
        return 0, None
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


@dataclass(frozen=True, eq=False)
class VectorField:
    comps: tuple

    def __post_init__(self):
        object.__setattr__(self, "comps", tuple(self.comps))

    @property
    def nvars(self):
        return self.comps[0].nvars

    @classmethod
    def coord(cls, n, i):
        return cls(tuple(Poly.const(n, 1.0 if k == i else 0.0) for k in range(n)))

    @classmethod
    def zero(cls, n):
        return cls(tuple(Poly.zero(n) for _ in range(n)))

    def __add__(self, o):
        return VectorField(tuple(a + b for a, b in zip(self.comps, o.comps)))

    def __sub__(self, o):
        return VectorField(tuple(a - b for a, b in zip(self.comps, o.comps)))

    def __neg__(self):
        return VectorField(tuple(-a for a in self.comps))

    def scale(self, f):
        return VectorField(tuple(f * a for a in self.comps))

    def apply(self, f: Poly) -> Poly:
        """Directional derivative u(f)."""
        out = Poly.zero(f.nvars)
        for i, ui in enumerate(self.comps):
            out = out + ui * f.diff(i)
        return out

    def bracket(self, o: "VectorField") -> "VectorField":
        return VectorField(tuple(self.apply(vk) - o.apply(uk) for uk, vk in zip(self.comps, o.comps)))

    def __call__(self, pts):
        return np.stack([c(pts) for c in self.comps], axis=-1)


@dataclass(frozen=True, eq=False)
class Form:
    nvars: int
    degree: int
    comps: dict

    def __post_init__(self):
        t = {}
        for idx, p in dict(self.comps).items():
            if len(idx) != self.degree:
                raise ArityError(f"component {idx} in a {self.degree}-form")
            sign, key = _sort_sign(idx)
            if sign == 0:
                continue
            t[key] = t.get(key, Poly.zero(self.nvars)) + sign * p
        object.__setattr__(self, "comps", {k: v for k, v in t.items() if not v.is_zero()})

    @classmethod
    def zero(cls, n, k):
        return cls(n, k, {})

    @classmethod
    def dx(cls, n, *idx, coef=None):
        return cls(n, len(idx), {tuple(idx): coef if coef is not None else Poly.const(n)})

    @classmethod
    def scalar(cls, f: Poly):
        return cls(f.nvars, 0, {(): f})

    def get(self, idx) -> Poly:
        sign, key = _sort_sign(idx)
        if sign == 0:
            return Poly.zero(self.nvars)
        return sign * self.comps.get(key, Poly.zero(self.nvars))

    def as_poly(self) -> Poly:
        if self.degree != 0:
            raise ArityError("not a 0-form")
        return self.get(())

    def __add__(self, o):
        if o.degree != self.degree:
            raise ArityError("adding forms of different degree")
        t = dict(self.comps)
        for k, v in o.comps.items():
            t[k] = t.get(k, Poly.zero(self.nvars)) + v
        return Form(self.nvars, self.degree, t)

    def __neg__(self):
        return Form(self.nvars, self.degree, {k: -v for k, v in self.comps.items()})

    def __sub__(self, o):
        return self + (-o)

    def scale(self, f):
        return Form(self.nvars, self.degree, {k: f * v for k, v in self.comps.items()})

    def wedge(self, o: "Form") -> "Form":
        t = {}
        for (I, a), (J, b) in itertools.product(self.comps.items(), o.comps.items()):
            sign, key = _sort_sign(I + J)
            if sign:
                t[key] = t.get(key, Poly.zero(self.nvars)) + sign * (a * b)
        return Form(self.nvars, self.degree + o.degree, t)

    def d(self) -> "Form":
        t = {}
        for I, a in self.comps.items():
            for i in range(self.nvars):
                sign, key = _sort_sign((i,) + I)
                if sign:
                    t[key] = t.get(key, Poly.zero(self.nvars)) + sign * a.diff(i)
        return Form(self.nvars, self.degree + 1, t)

    def interior(self, u: VectorField) -> "Form":
        if self.degree == 0:
            raise ArityError("interior product of a 0-form")
        t = {}
        for I, a in self.comps.items():
            for pos, i in enumerate(I):
                J = I[:pos] + I[pos + 1:]
                s = -1 if pos % 2 else 1
                t[J] = t.get(J, Poly.zero(self.nvars)) + s * (u.comps[i] * a)
        return Form(self.nvars, self.degree - 1, t)

    def lie(self, u: VectorField) -> "Form":
        """Cartan formula L_u = i_u d + d i_u."""
        out = self.d().interior(u)
        if self.degree > 0:
            out = out + self.interior(u).d()
        return out

    def on(self, *vs: VectorField) -> Poly:
        if len(vs) != self.degree:
            raise ArityError(f"{self.degree}-form evaluated on {len(vs)} vectors")
        f = self
        for v in vs:
            f = f.interior(v)
        return f.as_poly()

    def pullback(self, P) -> "Form":
        """Pull back along the polynomial map y -> (P_0(y), ..., P_{n-1}(y))."""
        m = P[0].nvars
        dP = [[p.diff(a) for a in range(m)] for p in P]
        t = {}
        for I, a in self.comps.items():
            ac = a.compose(P)
            for J in itertools.product(range(m), repeat=self.degree):
                sign, key = _sort_sign(J)
                if not sign or tuple(J) != key:
                    continue
                # sum over permutations of J of sign * prod dP
                det = Poly.zero(m)
                for perm in itertools.permutations(range(self.degree)):
                    s, _ = _sort_sign(perm)
                    term = Poly.const(m, float(s))
                    for row, col in zip(I, perm):
                        term = term * dP[row][J[col]]
                    det = det + term
                t[key] = t.get(key, Poly.zero(m)) + ac * det
        return Form(m, self.degree, t)

    def eval_components(self, pts) -> dict:
        return {k: v(pts) for k, v in self.comps.items()}

    def max_abs_at(self, pts) -> float:
        return max((float(np.max(np.abs(v(pts)))) for v in self.comps.values()), default=0.0)

    def max_abs_coef(self) -> float:
        return max((v.max_abs_coef() for v in self.comps.values()), default=0.0)

    def to_json(self) -> dict:
        return {"degree": self.degree,
                "components": [{"index": list(k), **v.to_json()} for k, v in sorted(self.comps.items())]}

    @classmethod
    def from_json(cls, n, data) -> "Form":
        return cls(n, data["degree"], {tuple(c["index"]): Poly.from_json(n, c) for c in data["components"]})
