"""Named algebras, doubles and scenario data shipped with the package."""
from __future__ import annotations

import numpy as np

from .equivariant import DoubleModel
from .liealg import (ManinPair, ManinTriple, MatrixGroupModel, QuadraticLieAlgebra,
                     build_semiabelian_double, semiabelian_group_model)


def su2_constants() -> np.ndarray:
    c = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        c[i, j, k], c[j, i, k] = 1.0, -1.0
    return c


def affine_2d_constants() -> np.ndarray:
    """[e1, e2] = e2."""
    c = np.zeros((2, 2, 2))
    c[0, 1, 1], c[1, 0, 1] = 1.0, -1.0
    return c


def heisenberg_constants() -> np.ndarray:
    """[e1, e2] = e3."""
    c = np.zeros((3, 3, 3))
    c[0, 1, 2], c[1, 0, 2] = 1.0, -1.0
    return c


def heisenberg_rep() -> np.ndarray:
    X = np.zeros((3, 3, 3))
    X[0, 0, 1] = X[1, 1, 2] = X[2, 0, 2] = 1.0
    return X


def abelian_double(n=1) -> tuple:
    """d = R^n + R^n with the hyperbolic pairing, D = R^2n as translation matrices."""
    cg = np.zeros((n, n, n))
    triple = build_semiabelian_double(cg)
    return triple, semiabelian_group_model(triple, cg)


def semiabelian_double(cg, g_rep=None) -> tuple:
    triple = build_semiabelian_double(cg)
    return triple, semiabelian_group_model(triple, cg, g_rep=g_rep)


def double_model(name: str) -> DoubleModel:
    """Double models by name: abelian-N, affine-2d, su2, heisenberg."""
    if name.startswith("abelian"):
        n = int(name.split("-")[1]) if "-" in name else 1
        triple, grp = abelian_double(n)
    elif name == "affine-2d":
        triple, grp = semiabelian_double(affine_2d_constants())
    elif name == "su2":
        triple, grp = semiabelian_double(su2_constants())
    elif name == "heisenberg":
        triple, grp = semiabelian_double(heisenberg_constants(), heisenberg_rep())
    else:
        raise KeyError(f"unknown double {name!r}")
    return DoubleModel(triple, grp)


def algebra_from_json(data: dict):
    """Parse the algebra file format into (triple, group model)."""
    for key in ("dim", "c", "B", "g_basis", "gprime_basis", "generators"):
        if key not in data:
            raise KeyError(f"algebra file lacks field {key!r}")
    alg = QuadraticLieAlgebra(np.asarray(data["c"], float), np.asarray(data["B"], float))
    if alg.dim != int(data["dim"]):
        raise ValueError("dim does not match the structure constants")
    triple = ManinTriple(ManinPair(alg, np.asarray(data["g_basis"], float)), np.asarray(data["gprime_basis"], float))
    return triple, MatrixGroupModel(alg, np.asarray(data["generators"], float))


def algebra_to_json(triple: ManinTriple, grp: MatrixGroupModel) -> dict:
    a = triple.algebra
    return {"dim": a.dim, "c": a.c.tolist(), "B": a.B.tolist(), "g_basis": triple.g_basis.tolist(),
            "gprime_basis": triple.gprime_basis.tolist(), "generators": grp.generators.tolist()}
