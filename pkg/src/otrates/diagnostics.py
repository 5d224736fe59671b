"""Structural diagnostics on solver outputs.

These checks turn qualitative structure theory into falsifiable numerics:
semi-concavity and Lipschitz moduli of extended potentials, displacement
growth of optimal plans, and growth of superdifferential images.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import rng as _rng
from .duality import PotentialHandle, superdifferential_probe
from .errors import UsageError
from .solver import TransportPlan

__all__ = [
    "DiagnosticReport",
    "semiconcavity_check",
    "displacement_profile",
    "superdiff_growth_check",
]


@dataclass(frozen=True)
class DiagnosticReport:
    name: str
    max_violation: float
    tolerance: float
    samples_used: int
    witness: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def to_json(self) -> str:
        payload = asdict(self)
        payload["passed"] = self.passed
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DiagnosticReport":
        d = json.loads(text)
        d.pop("passed", None)
        return DiagnosticReport(**d)


def semiconcavity_check(phi, Lam: float, region, triples: int = 10 ** 4,
                        seed: int = 0x5E111, tolerance: float = 1e-8) -> DiagnosticReport:
    """Midpoint concavity and Lipschitz modulus of x -> phi(x) - (Lam/2)||x||^2.

    ``region`` is ("box", lo, hi).  Reports the larger of the midpoint
    concavity violation and the excess of the difference quotient over
    2*Lam, across sampled collinear triples (x, midpoint, x').
    """
    if region[0] != "box":
        raise UsageError("semiconcavity_check expects a box region")
    lo = np.asarray(region[1], dtype=float)
    hi = np.asarray(region[2], dtype=float)
    d = lo.size
    gen = _rng.stream(seed, 0x5E01)
    X1 = lo + (hi - lo) * gen.random((triples, d))
    X2 = lo + (hi - lo) * gen.random((triples, d))
    mid = 0.5 * (X1 + X2)

    def shifted(P):
        return np.asarray(phi(P)) - 0.5 * Lam * (P * P).sum(axis=1)

    f1, f2, fm = shifted(X1), shifted(X2), shifted(mid)
    concav = 0.5 * (f1 + f2) - fm          # <= 0 for concave maps
    dist = np.linalg.norm(X1 - X2, axis=1)
    ok = dist > 1e-12
    lip = np.abs(f1 - f2)[ok] / dist[ok] - 2.0 * Lam
    viol = max(float(concav.max()), float(lip.max()) if lip.size else 0.0)
    witness = None
    if viol > tolerance:
        k = int(np.argmax(concav))
        witness = {"x": X1[k].tolist(), "x_prime": X2[k].tolist()}
    return DiagnosticReport(name="semiconcavity", max_violation=max(viol, 0.0),
                            tolerance=tolerance, samples_used=triples,
                            witness=witness)


def displacement_profile(plan: TransportPlan, X: np.ndarray, Y: np.ndarray) -> dict:
    """Growth profile of the ratio ||y|| / (||x|| + 1) over the plan support."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if plan.i.size == 0:
        raise UsageError("empty plan")
    ratio = np.linalg.norm(Y[plan.j], axis=1) / (np.linalg.norm(X[plan.i], axis=1) + 1.0)
    deciles = np.quantile(ratio, np.linspace(0.1, 0.9, 9))
    return {
        "max_ratio": float(ratio.max()),
        "deciles": deciles.tolist(),
        "entries": int(ratio.size),
    }


def superdiff_growth_check(phi: PotentialHandle, r: float, R: float,
                           growth_p: float, kappa: float,
                           probes: int = 512, seed: int = 0x5D1FF,
                           check_bound: bool = True,
                           threshold: float = float("inf")) -> DiagnosticReport:
    """Growth statistic of superdifferential images over the half ball.

    For probe points x in B(0, r/2), collects ||y||^(p-1) / (r^(p-1) + R)
    with y from the discrete superdifferential probe at x.  Requires
    r, R >= 4 (the growth theory's hypothesis) and |phi| <= R on sampled
    points of B(0, r).
    """
    if r < 4 or R < 4:
        raise UsageError(
            f"superdifferential growth needs radii r, R >= 4 (got r={r}, R={R}): "
            "the growth bound is understood for large radii only")
    d = phi.anchors.shape[1]
    gen = _rng.stream(seed, 0x5D1FF)
    g = gen.standard_normal((probes, d))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    shell = gen.random(probes) ** (1.0 / d)
    ball_r = r * g * shell[:, None]
    vals = np.asarray(phi(ball_r))
    if check_bound and float(np.abs(vals).max()) > R:
        raise UsageError(
            f"|phi| reaches {np.abs(vals).max():.3g} > R = {R} on B(0, r)")
    half = ball_r[np.linalg.norm(ball_r, axis=1) <= r / 2.0]
    stat = 0.0
    wit = None
    denom = r ** (growth_p - 1.0) + R
    for x in half:
        ys = superdifferential_probe(phi, x)
        ynorm = float(np.linalg.norm(ys, axis=1).max())
        s = ynorm ** (growth_p - 1.0) / denom
        if s > stat:
            stat = s
            wit = {"x": x.tolist(), "y_norm": ynorm}
    return DiagnosticReport(name="superdiff_growth", max_violation=stat,
                            tolerance=threshold, samples_used=int(half.shape[0]),
                            witness=wit)
