"""Executable lower-bound constructions.

The minimax gadget perturbs the weights of a packed point cloud: take m
lattice points inside a ball, a seeded random bijection F of [m] onto
them, and compare the transport cost between the reweighted cloud
{(F(j), q_j)} and its z0-translate with uniform weights against the
translation cost h(z0).  The excess is controlled from above and below by
divergences of q from uniform, and scales like m^(-2/d) for fixed total
variation -- the computable core of the minimax lower-bound argument.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import rng as _rng
from .costs import CostSpec, eval_h
from .errors import UsageError
from .measures import DiscreteMeasure
from .solver import solve_general

__all__ = [
    "PackingSet",
    "GadgetResult",
    "packing_set",
    "minimax_gadget",
    "divergences",
    "tv_quarter_family",
]


@dataclass(frozen=True)
class PackingSet:
    points: np.ndarray     # (m, d)
    separation: float      # min pairwise distance (= lattice pitch)
    center: Tuple[float, ...]
    radius: float
    grid_constant: float   # separation * m^(1/d), recorded for the report


@dataclass(frozen=True)
class GadgetResult:
    m: int
    q: np.ndarray
    tv: float
    chi2: float
    value_minus_h: float
    seed: int


def packing_set(center, radius: float, m: int) -> PackingSet:
    """First m nodes (lexicographic) of the smallest lattice fitting m in the ball.

    The lattice is axis-aligned with k nodes per axis spanning the cube
    inscribed in the ball (side 2*radius/sqrt(d)), with k minimal such
    that k^d >= m.  Separation equals the lattice pitch.
    """
    center = np.asarray(center, dtype=float).ravel()
    d = center.size
    if m < 1:
        raise UsageError("packing needs m >= 1")
    if radius <= 0:
        raise UsageError("packing needs a positive radius")
    k = 1
    while k ** d < m:
        k += 1
    half_side = radius / np.sqrt(d)
    if k == 1:
        pts = center[None, :].copy()
        pitch = 2.0 * radius  # vacuous: no pair exists; record the diameter
    else:
        axis = center[:, None] + np.linspace(-half_side, half_side, k)[None, :]
        pts = np.array([[axis[dim, idx[dim]] for dim in range(d)]
                        for idx in itertools.islice(itertools.product(range(k), repeat=d), m)])
        pitch = 2.0 * half_side / (k - 1)
    return PackingSet(points=pts, separation=float(pitch), center=tuple(center),
                      radius=float(radius), grid_constant=float(pitch * m ** (1.0 / d)))


def divergences(q: np.ndarray, m: int) -> Tuple[float, float]:
    """Total variation and chi-square divergence of q from uniform on [m]."""
    q = np.asarray(q, dtype=float).ravel()
    if q.size != m or abs(q.sum() - 1.0) > 1e-12 or np.any(q < 0):
        raise UsageError("q must be a probability vector on [m]")
    dev = q - 1.0 / m
    return float(0.5 * np.abs(dev).sum()), float(m * (dev * dev).sum())


def tv_quarter_family(m: int) -> np.ndarray:
    """Reference q with TV(q, uniform) = 1/4: half the atoms carry 1.5/m mass."""
    if m % 2:
        raise UsageError("the TV = 1/4 reference family needs even m")
    q = np.full(m, 1.0 / m)
    q[: m // 2] *= 1.5
    q[m // 2:] *= 0.5
    return q


def minimax_gadget(m: int, q: np.ndarray, z0, cost: CostSpec, seed: int,
                   center=None, radius: float = 0.5) -> GadgetResult:
    """Excess transport cost of a weight-perturbed packed cloud over h(z0).

    F is a seeded uniformly random bijection (Fisher-Yates shuffle of the
    packing); the gadget value is
    T_c(sum_j q_j delta_{F(j)}, sum_j (1/m) delta_{F(j) + z0}) - h(z0).
    """
    z0 = np.asarray(z0, dtype=float).ravel()
    d = z0.size
    if cost.d != d:
        raise UsageError(f"z0 dimension {d} != cost dimension {cost.d}")
    if center is None:
        center = np.zeros(d)
    pack = packing_set(center, radius, m)
    q = np.asarray(q, dtype=float).ravel()
    tv, chi2 = divergences(q, m)
    perm = _rng.stream(seed, 0xF15E7, m).permutation(m)
    F = pack.points[perm]
    mu = DiscreteMeasure(points=F, weights=q)
    nu = DiscreteMeasure(points=F + z0, weights=np.full(m, 1.0 / m))
    value = solve_general(mu, nu, cost).value
    return GadgetResult(m=m, q=q, tv=tv, chi2=chi2,
                       value_minus_h=float(value - eval_h(cost, z0)), seed=seed)
