"""c-transform algebra on discretely generated potentials.

A potential handle represents a c-concave function as an infimum over a
finite anchor family: f(x) = min_j { c(x, y_j) - lambda_j }, optionally
truncated from above at a cap level.  All conjugations are discretized
over finite anchor sets; for double conjugation of finitely generated
handles this is exact (f^{cc} = f on the generating grid), which is the
only case this module relies on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import rng as _rng
from .costs import CostSpec, cost_matrix, eval_cost
from .errors import NumericalError, UsageError
from .solver import TransportPlan

__all__ = [
    "PotentialHandle",
    "c_conjugate",
    "double_conjugate_check",
    "extend_potentials",
    "superdifferential_probe",
    "cyclical_monotonicity_check",
    "default_cap",
]


@dataclass(frozen=True)
class PotentialHandle:
    """f(x) = min_j { c(x, y_j) - lambda_j }, then min with cap if set."""

    anchors: np.ndarray       # (k, d) anchor points y_j
    values: np.ndarray        # (k,) anchor values lambda_j
    cost: CostSpec
    cap: Optional[float] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        lam = np.asarray(self.values, dtype=float).ravel()
        if A.shape[0] != lam.shape[0] or lam.shape[0] < 1:
            raise UsageError("anchor points/values mismatch or empty anchor list")
        object.__setattr__(self, "anchors", A)
        object.__setattr__(self, "values", lam)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at one point (d,) or a batch (k, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        out = np.empty(X.shape[0])
        # Evaluate in slabs so arbitrarily large query batches stay within
        # the dense-matrix materialization limit.
        for lo in range(0, X.shape[0], 4096):
            C = cost_matrix(self.cost, X[lo:lo + 4096], self.anchors)
            out[lo:lo + 4096] = (C - self.values[None, :]).min(axis=1)
        if self.cap is not None:
            out = np.minimum(out, self.cap)
        return float(out[0]) if single else out


def c_conjugate(values: Sequence[Tuple[np.ndarray, float]], cost: CostSpec,
                cap: Optional[float] = None) -> PotentialHandle:
    """Conjugate of a finitely supported function f: f^c(y) = min_x c(x,y) - f(x).

    ``values`` is a sequence of (point, value) pairs; the result is the
    handle anchored at those points with those values.
    """
    pts = np.array([np.asarray(p, dtype=float) for p, _ in values])
    lam = np.array([float(v) for _, v in values])
    return PotentialHandle(anchors=pts, values=lam, cost=cost, cap=cap)


def _conjugate_on_grid(h: PotentialHandle, grid: np.ndarray,
                       cap: Optional[float] = None) -> PotentialHandle:
    """Handle for the conjugate of h, discretized over the given grid."""
    return PotentialHandle(anchors=grid, values=h(grid), cost=h.cost, cap=cap)


def double_conjugate_check(h: PotentialHandle, test_points: np.ndarray,
                           tolerance: float = 1e-9) -> float:
    """Max |h^{cc}(x) - h(x)| over the test points.

    The inner conjugation is discretized on the handle's anchor set plus
    the test points; for finitely generated handles the identity
    h^{cc} = h then holds exactly on that grid.
    """
    test_points = np.atleast_2d(np.asarray(test_points, dtype=float))
    grid = np.vstack([h.anchors, test_points])
    hc = _conjugate_on_grid(h, grid)
    hcc_vals_at = PotentialHandle(anchors=grid, values=hc(grid), cost=h.cost,
                                  cap=h.cap)
    # h^{cc} anchored on the conjugate's grid: min over y in grid of
    # c(x, y) - h^c(y), capped like h.
    dev = np.abs(hcc_vals_at(test_points) - h(test_points))
    return float(dev.max())


def default_cap(plan_points_norm: float, cost: CostSpec) -> float:
    """Default truncation level: kappa * (2 * max point norm)^p."""
    kappa = cost.metadata.kappa if cost.metadata.kappa is not None else 1.0
    return float(kappa * (2.0 * max(plan_points_norm, 1e-9)) ** cost.metadata.growth_p)


def extend_potentials(plan: TransportPlan, X: np.ndarray, Y: np.ndarray,
                      cost: CostSpec, cap: Optional[float] = None
                      ) -> Tuple[PotentialHandle, PotentialHandle]:
    """Extend a plan's dual potentials from the supports to all of R^d.

    The duals are first shift-normalized so the source potential is <= 0
    and the target potential is >= 0.  The bounded extension is built from
    eta(y) = min_i { c(x_i, y) - f_i } truncated at the cap; the returned
    pair is (phi, psi) = (conjugate of eta, its double conjugate), with
    each conjugation discretized over the opposite support.  On the
    supports phi and psi reproduce the solver duals exactly and both are
    bounded by the cap; away from the supports they remain c-concave
    handles (see the package notes on discretized conjugation).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if cap is None:
        norms = max(float(np.linalg.norm(X, axis=1).max()),
                    float(np.linalg.norm(Y, axis=1).max()))
        cap = default_cap(norms, cost)
    # Sign normalization: f = dual_mu - a <= 0, g = dual_nu + a >= 0.
    a = float(np.max(plan.dual_mu))
    f = plan.dual_mu - a
    g = plan.dual_nu + a
    support_max = float(eval_cost(cost, X[plan.i], Y[plan.j]).max())
    if cap < support_max - 1e-12:
        raise UsageError(
            f"cap {cap:.6g} is below the largest support cost {support_max:.6g}")
    if np.min(g) < -1e-9:
        raise NumericalError(
            f"dual normalization failed: target potential reaches {np.min(g):.3g} < 0")
    eta = PotentialHandle(anchors=X, values=f, cost=cost, cap=cap)
    phi = PotentialHandle(anchors=Y, values=eta(Y), cost=cost, cap=cap)
    psi = PotentialHandle(anchors=X, values=phi(X), cost=cost, cap=cap)
    return phi, psi


def superdifferential_probe(phi: PotentialHandle, x: np.ndarray,
                            tolerance: float = 1e-9) -> np.ndarray:
    """Anchor points attaining the defining minimum at x, ties within tol.

    Returns the attaining anchors as a (k, d) array.  For growth exponent
    p = 1 the continuum superdifferential may be ill-defined at infinity;
    the discrete argmin is reported regardless.
    """
    x = np.asarray(x, dtype=float)
    vals = eval_cost(phi.cost, x[None, :], phi.anchors) - phi.values
    lo = vals.min()
    return phi.anchors[vals <= lo + tolerance]


def cyclical_monotonicity_check(pairs, cost: CostSpec, max_cycle_len: int,
                                trials: int, seed: int) -> float:
    """Max sampled violation of c-cyclical monotonicity, clipped at 0.

    For random index subsets of size <= max_cycle_len, compares the cost
    of the pairs against the cyclically shifted reassignment.
    """
    if max_cycle_len < 2:
        raise UsageError("cycles need length >= 2")
    xs = np.atleast_2d(np.asarray([p[0] for p in pairs], dtype=float))
    ys = np.atleast_2d(np.asarray([p[1] for p in pairs], dtype=float))
    npair = xs.shape[0]
    gen = _rng.stream(seed, 0xC7C1E)
    worst = 0.0
    for _ in range(trials):
        k = int(gen.integers(2, max_cycle_len + 1))
        idx = gen.choice(npair, size=min(k, npair), replace=False)
        base = eval_cost(cost, xs[idx], ys[idx]).sum()
        shifted = eval_cost(cost, xs[np.roll(idx, 1)], ys[idx]).sum()
        worst = max(worst, float(base - shifted))
    return worst
