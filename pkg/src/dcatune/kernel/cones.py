"""Cone blocks and Euclidean projections.

Supported cones: the zero cone {0}^d, the nonnegative orthant, and the
second-order cone {(t, x) : ||x||_2 <= t}.  All three are self-dual or
have the trivial dual (zero cone <-> free), which the solver exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"

_KIND_CODE = {ZERO: 0, NONNEG: 1, SOC: 2}


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise InvalidInputError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise InvalidInputError("cone block dimension must be >= 1")


def project_soc(v):
    """Projection onto the second-order cone."""
    v = np.asarray(v, dtype=float)
    t, x = v[0], v[1:]
    nx = float(np.linalg.norm(x))
    if nx <= t:
        return v.copy()
    if nx <= -t:
        return np.zeros_like(v)
    scale = 0.5 * (t + nx)
    out = np.empty_like(v)
    out[0] = scale
    out[1:] = (scale / nx) * x
    return out


def project_cone(kind, v):
    """Euclidean projection of ``v`` onto the cone of the given kind.

    Total function: any finite input of matching dimension projects.
    """
    v = np.asarray(v, dtype=float)
    if kind == ZERO:
        return np.zeros_like(v)
    if kind == NONNEG:
        return np.maximum(v, 0.0)
    if kind == SOC:
        if v.size < 1:
            raise InvalidInputError("soc block needs dimension >= 1")
        return project_soc(v)
    raise InvalidInputError(f"unknown cone kind {kind!r}")


def project_blocks(cones, v):
    """Blockwise projection onto the product cone."""
    out = np.empty_like(v, dtype=float)
    start = 0
    for blk in cones:
        stop = start + blk.dim
        out[start:stop] = project_cone(blk.kind, v[start:stop])
        start = stop
    return out


def in_dual_cone(cones, y, tol=0.0):
    """Whether ``y`` lies in the dual of the product cone (zero -> free,
    nonneg and soc are self-dual) within ``tol``."""
    start = 0
    for blk in cones:
        stop = start + blk.dim
        seg = y[start:stop]
        if blk.kind == NONNEG and np.any(seg < -tol):
            return False
        if blk.kind == SOC and np.linalg.norm(seg[1:]) > seg[0] + tol:
            return False
        start = stop
    return True


def cone_codes(cones):
    """Integer encoding (kind codes, start offsets) used by the loop kernels."""
    kinds = np.array([_KIND_CODE[b.kind] for b in cones], dtype=np.int32)
    starts = np.zeros(len(cones) + 1, dtype=np.int32)
    for i, b in enumerate(cones):
        starts[i + 1] = starts[i] + b.dim
    return kinds, starts
