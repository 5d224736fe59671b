"""Translation-invariant cost functions c(x, y) = h(x - y).

Two families are provided:

* ``power_lr(p, r)``: h(z) = ||z||_{l^r}^p with p >= 1, r >= 1.  Convex,
  even, h(0) = 0; Hoelder smoothness exponent min(2, p, r).
* ``smooth_power(p, eps)``: h(z) = (||z||^2 + eps^(2/p))^(p/2) - eps, a
  globally smooth surrogate for ||z||^p with sup-error at most 2*eps.

Each cost carries regularity metadata (alpha, a computable upper estimate
of the Hoelder norm on balls, the growth exponent p and the radial-growth
constant kappa) consumed by the diagnostics and duality machinery.

The radial-growth constant for ``smooth_power`` deserves a note: two
different expressions for it circulate (2^(p/2-1) * p and 2^(1-p/2) * p,
equal only at p = 2); we conservatively store the maximum of the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericalError, UsageError

__all__ = [
    "CostSpec",
    "RegularityMeta",
    "ConditionReport",
    "power_cost",
    "smooth_approx",
    "parse_cost",
    "eval_h",
    "grad_h",
    "eval_cost",
    "cost_matrix",
    "check_conditions",
]

# Above this size, cost matrices are assembled in row blocks instead of one
# vectorized broadcast, to keep peak memory at O(block * n * d).
_BLOCK_ROWS = 256
_FULL_MATERIALIZE_LIMIT = 4096


@dataclass(frozen=True)
class RegularityMeta:
    """Smoothness/growth metadata attached to a cost.

    alpha        Hoelder exponent in (0, 2].
    growth_p     growth exponent: h(z) ~ ||z||^p at infinity.
    kappa        radial-growth constant: (1/kappa) t^(p-1) <= omega'(t)
                 <= kappa t^(p-1) for t > 1, where h(z) = omega(||z||);
                 None when h is not a function of the Euclidean norm.
    lam_lower    optional lower Taylor constant (quadratic-growth checks).
    z0           optional reference point for the lower Taylor bound.
    """

    alpha: float
    growth_p: float
    kappa: Optional[float] = None
    lam_lower: Optional[float] = None
    z0: Optional[tuple] = None


@dataclass(frozen=True)
class CostSpec:
    """A translation-invariant cost c(x, y) = h(x - y) on R^d."""

    family: str  # "power_lr" | "smooth_power"
    d: int
    p: float
    r: float = 2.0
    eps: float = 0.0
    metadata: RegularityMeta = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.d < 1:
            raise UsageError(f"dimension must be positive, got {self.d}")
        if self.family == "power_lr":
            if self.p < 1 or self.r < 1:
                raise UsageError(
                    f"power_lr requires p >= 1 and r >= 1, got p={self.p}, r={self.r}")
        elif self.family == "smooth_power":
            if not (self.p > 1):
                raise UsageError(f"smooth_power requires p > 1, got p={self.p}")
            if not (0 < self.eps <= 1):
                raise UsageError(
                    f"smooth_power requires eps in (0, 1], got eps={self.eps}")
        else:
            raise UsageError(f"unknown cost family {self.family!r}")
        if self.metadata is None:
            object.__setattr__(self, "metadata", _default_meta(self))

    # -- convenience -------------------------------------------------------
    def lambda_on_ball(self, R: float) -> float:
        return lambda_on_ball(self, R)

    def config_name(self) -> str:
        if self.family == "power_lr":
            return f"power:p={self.p:g},r={self.r:g}"
        return f"smooth:p={self.p:g},eps={self.eps:g}"


def _is_radial(cost: CostSpec) -> bool:
    """True when h(z) depends on z only through the Euclidean norm."""
    if cost.family == "smooth_power":
        return True
    return cost.r == 2.0 or cost.d == 1


def _default_meta(cost: CostSpec) -> RegularityMeta:
    if cost.family == "power_lr":
        alpha = min(2.0, cost.p, cost.r)
        # For the radial case h = ||z||^p, omega'(t) = p t^(p-1) exactly,
        # so any kappa >= max(p, 1/p) works; p >= 1 makes that max(p, 1).
        kappa = max(cost.p, 1.0) if _is_radial(cost) else None
        lam = 1.0 if (cost.p == 2.0 and cost.r == 2.0) else None
        z0 = tuple([0.0] * cost.d) if lam is not None else None
        return RegularityMeta(alpha=alpha, growth_p=cost.p, kappa=kappa,
                              lam_lower=lam, z0=z0)
    # smooth_power: C^infinity, so alpha = 2.  kappa: see module docstring.
    p = cost.p
    kappa = max(2.0 ** (p / 2.0 - 1.0) * p, 2.0 ** (1.0 - p / 2.0) * p, 1.0)
    return RegularityMeta(alpha=2.0, growth_p=p, kappa=kappa)


def power_cost(p: float, r: float, d: int) -> CostSpec:
    """h(z) = ||z||_{l^r}^p."""
    return CostSpec(family="power_lr", d=d, p=float(p), r=float(r))


def smooth_approx(p: float, eps: float, d: int) -> CostSpec:
    """Smooth surrogate h(z) = (||z||^2 + eps^(2/p))^(p/2) - eps.

    Satisfies |h(z) - ||z||^p| <= 2*eps everywhere and is C^infinity.
    """
    if not (p > 1):
        raise UsageError(f"smooth surrogate requires p > 1, got p={p}")
    if not (0 < eps <= 1):
        raise UsageError(f"smooth surrogate requires eps in (0, 1], got {eps}")
    return CostSpec(family="smooth_power", d=d, p=float(p), eps=float(eps))


def parse_cost(text: str, d: int) -> CostSpec:
    """Parse config syntax ``power:p=<f>,r=<f>`` / ``smooth:p=<f>,eps=<f>``."""
    try:
        head, _, body = text.partition(":")
        head = head.strip()
        kv = {}
        for tok in body.split(","):
            tok = tok.strip()
            if not tok:
                continue
            if "=" not in tok:
                raise UsageError(f"cost spec token {tok!r} is not key=value")
            k, v = tok.split("=", 1)
            try:
                kv[k.strip()] = float(v)
            except ValueError:
                raise UsageError(f"cost spec token {tok!r}: bad number {v!r}")
        if head == "power":
            extra = set(kv) - {"p", "r"}
            if extra or "p" not in kv:
                raise UsageError(
                    f"power cost takes p and optional r; offending tokens: {sorted(extra) or 'missing p'}")
            return power_cost(kv["p"], kv.get("r", 2.0), d)
        if head == "smooth":
            extra = set(kv) - {"p", "eps"}
            if extra or not {"p", "eps"} <= set(kv):
                raise UsageError(
                    f"smooth cost takes p and eps; offending tokens: {sorted(extra) or 'missing p/eps'}")
            return smooth_approx(kv["p"], kv["eps"], d)
        raise UsageError(f"unknown cost family token {head!r} in {text!r}")
    except UsageError:
        raise
    except Exception as exc:  # defensive: malformed input of any shape
        raise UsageError(f"could not parse cost spec {text!r}: {exc}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_h(cost: CostSpec, z: np.ndarray) -> np.ndarray:
    """Evaluate h at one point (shape (d,)) or a batch (shape (..., d))."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != cost.d:
        raise UsageError(f"point dimension {z.shape[-1]} != cost dimension {cost.d}")
    if cost.family == "power_lr":
        if cost.r == 2.0:
            nrm = np.sqrt((z * z).sum(axis=-1))
        else:
            nrm = (np.abs(z) ** cost.r).sum(axis=-1) ** (1.0 / cost.r)
        return nrm ** cost.p
    s = (z * z).sum(axis=-1) + cost.eps ** (2.0 / cost.p)
    return s ** (cost.p / 2.0) - cost.eps


def grad_h(cost: CostSpec, z: np.ndarray) -> np.ndarray:
    """Gradient of h; refuses non-differentiable points by naming the kink."""
    z = np.asarray(z, dtype=float)
    if z.shape != (cost.d,):
        raise UsageError(f"grad_h expects a single d-vector, got shape {z.shape}")
    if cost.family == "smooth_power":
        s = (z * z).sum() + cost.eps ** (2.0 / cost.p)
        return cost.p * s ** (cost.p / 2.0 - 1.0) * z
    p, r = cost.p, cost.r
    if r < 2.0 and np.any(z == 0.0):
        k = int(np.nonzero(z == 0.0)[0][0])
        raise UsageError(
            f"h = ||.||_{r:g}^{p:g} is not differentiable where a coordinate "
            f"vanishes (kink at coordinate {k}, r < 2)")
    if np.all(z == 0.0):
        if p <= 1.0:
            raise UsageError(
                f"h = ||.||_{r:g}^{p:g} is not differentiable at the origin (kink at z = 0)")
        return np.zeros(cost.d)
    nrm = (np.abs(z) ** r).sum() ** (1.0 / r)
    return p * z * np.abs(z) ** (r - 2.0) * nrm ** (p - r)


def eval_cost(cost: CostSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != cost.d or y.shape[-1] != cost.d:
        raise UsageError(
            f"point dimension mismatch: {x.shape[-1]}/{y.shape[-1]} vs cost d={cost.d}")
    return eval_h(cost, x - y)


def cost_matrix(cost: CostSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Dense matrix C[i, j] = h(X[i] - Y[j]), assembled in row blocks."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m, n = X.shape[0], Y.shape[0]
    if max(m, n) > _FULL_MATERIALIZE_LIMIT:
        raise UsageError(
            f"refusing to materialize a {m}x{n} cost matrix "
            f"(limit {_FULL_MATERIALIZE_LIMIT} per side)")
    C = np.empty((m, n))
    for lo in range(0, m, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, m)
        C[lo:hi] = eval_h(cost, X[lo:hi, None, :] - Y[None, :, :])
    if not np.all(np.isfinite(C)):
        raise NumericalError("non-finite cost entry in cost matrix")
    return C


# ---------------------------------------------------------------------------
# regularity metadata: Hoelder-norm estimate on balls
# ---------------------------------------------------------------------------

def _c2_bound_power(cost: CostSpec, R: float) -> float:
    """Upper bound on |h| + |grad h| + |hess h| on B(0, R) for p, r >= 2.

    Coordinate-wise second derivatives of ||z||_r^p sum (in absolute value)
    to at most p(|p-r| + (r-1)d) ||z||_r^(p-2); the Hessian of a convex
    function is PSD, so its operator norm is bounded by that trace bound.
    ||z||_r <= ||z||_2 for r >= 2 keeps everything in terms of R.
    """
    p, r, d = cost.p, cost.r, cost.d
    return R ** p + p * R ** (p - 1.0) + p * (abs(p - r) + (r - 1.0) * d) * R ** (p - 2.0)


def _c2_bound_smooth(cost: CostSpec, R: float) -> float:
    p, eps = cost.p, cost.eps
    smax = R * R + eps ** (2.0 / p)
    sup_h = smax ** (p / 2.0)
    sup_g = p * smax ** (p / 2.0 - 1.0) * R
    if p < 2.0:
        # s^(p/2-1) is decreasing in s, so the floor eps^(2/p) dominates.
        hess = p * (1.0 + (2.0 - p)) * eps ** (1.0 - 2.0 / p)
    else:
        hess = p * smax ** (p / 2.0 - 1.0) + p * (p - 2.0) * smax ** (p / 2.0 - 2.0) * R * R
    return sup_h + sup_g + hess


def _sampled_holder_quotient(cost: CostSpec, R: float, trials: int = 4096,
                             seed: int = 0x0C057) -> float:
    """Empirical Hoelder-alpha quotient of h (alpha <= 1) or of grad h."""
    from . import rng as _rng
    gen = _rng.stream(seed, cost.d, int(cost.p * 1000), int(cost.r * 1000))
    alpha = cost.metadata.alpha
    Z = gen.uniform(-R / np.sqrt(cost.d), R / np.sqrt(cost.d), size=(trials, 2, cost.d))
    q = 0.0
    if alpha <= 1.0:
        h1 = eval_h(cost, Z[:, 0])
        h2 = eval_h(cost, Z[:, 1])
        dist = np.linalg.norm(Z[:, 0] - Z[:, 1], axis=-1)
        ok = dist > 1e-12
        q = float(np.max(np.abs(h1 - h2)[ok] / dist[ok] ** alpha))
        sup = float(np.max(np.abs(np.concatenate([h1, h2]))))
    else:
        g = np.empty((trials, 2, cost.d))
        for t in range(trials):
            for k in range(2):
                try:
                    g[t, k] = grad_h(cost, Z[t, k])
                except UsageError:
                    g[t, k] = np.nan
        dist = np.linalg.norm(Z[:, 0] - Z[:, 1], axis=-1)
        dg = np.linalg.norm(g[:, 0] - g[:, 1], axis=-1)
        ok = (dist > 1e-12) & np.isfinite(dg)
        q = float(np.max(dg[ok] / dist[ok] ** (alpha - 1.0)))
        sup = float(np.max(eval_h(cost, Z.reshape(-1, cost.d))))
    return sup + q


def lambda_on_ball(cost: CostSpec, R: float) -> float:
    """Upper estimate of max(1, Hoelder-alpha norm of h on B(0, R)).

    Analytic bounds are used where a closed form is clean (C^2 families);
    the remaining cases use a dense sampled quotient scaled by a safety
    factor of 2.  The estimate is intentionally conservative: downstream
    semi-concavity checks only weaken when the estimate is too large.
    """
    if R <= 0:
        raise UsageError("ball radius must be positive")
    if cost.family == "smooth_power":
        return max(1.0, 2.0 * _c2_bound_smooth(cost, R))
    if cost.p >= 2.0 and cost.r >= 2.0:
        return max(1.0, 2.0 * _c2_bound_power(cost, R))
    return max(1.0, 2.0 * _sampled_holder_quotient(cost, R))


# ---------------------------------------------------------------------------
# condition checkers (sampling certificates, not proofs)
# ---------------------------------------------------------------------------

@dataclass
class ConditionReport:
    condition: str
    passed: bool
    max_violation: float
    witnesses: list
    samples_used: int


def _region_sampler(region, d: int, gen):
    kind = region[0]
    if kind == "ball":
        _, center, radius = region
        center = np.asarray(center, dtype=float)

        def draw(k):
            g = gen.standard_normal((k, d))
            g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
            u = gen.random(k) ** (1.0 / d)
            return center + radius * g * u[:, None]
        return draw
    if kind == "box":
        _, lo, hi = region
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))

        def draw(k):
            return lo + (hi - lo) * gen.random((k, d))
        return draw
    raise UsageError(f"unknown region kind {region[0]!r} (use 'ball' or 'box')")


def check_conditions(cost: CostSpec, condition: str, region, budget: int,
                     seed: int) -> ConditionReport:
    """Sampled certificate for one of the structural conditions H0/H1/H3/H4.

    H0: convexity (midpoints), evenness, nonnegativity, h(0)=0.
    H1: empirical Hoelder quotient does not exceed the metadata estimate.
    H3: radial derivative quotient omega'(t)/t^(p-1) inside [1/kappa, kappa]
        on radii > 1 (radial costs only).
    H4: lower Taylor bound h(z) >= h(z0) + <grad h(z0), z-z0> + lam |z-z0|^alpha.
    """
    from . import rng as _rng
    if budget < 1:
        raise UsageError("budget must be >= 1")
    gen = _rng.stream(seed, 0xC0DE, {"H0": 0, "H1": 1, "H3": 3, "H4": 4}.get(condition, 99))
    if condition not in ("H0", "H1", "H3", "H4"):
        raise UsageError(f"unknown condition {condition!r}")
    draw = _region_sampler(region, cost.d, gen)
    witnesses = []
    if condition == "H0":
        Z1, Z2 = draw(budget), draw(budget)
        mid = eval_h(cost, 0.5 * (Z1 + Z2))
        conv = mid - 0.5 * (eval_h(cost, Z1) + eval_h(cost, Z2))
        even = np.abs(eval_h(cost, Z1) - eval_h(cost, -Z1))
        nneg = -eval_h(cost, Z1)
        at0 = abs(float(eval_h(cost, np.zeros(cost.d))))
        viol = max(float(conv.max()), float(even.max()), float(nneg.max()), at0)
        if conv.max() >= viol - 1e-18:
            k = int(np.argmax(conv))
            witnesses.append(("midpoint", Z1[k].tolist(), Z2[k].tolist()))
        return ConditionReport("H0", viol <= 1e-10, viol, witnesses, budget)
    if condition == "H1":
        if region[0] != "ball" or np.any(np.asarray(region[1], dtype=float) != 0.0):
            raise UsageError("H1 is checked on balls centered at the origin")
        R = float(region[2])
        lam = lambda_on_ball(cost, R)
        alpha = cost.metadata.alpha
        Z1, Z2 = draw(budget), draw(budget)
        dist = np.linalg.norm(Z1 - Z2, axis=1)
        ok = dist > 1e-9
        if alpha <= 1.0:
            q = np.abs(eval_h(cost, Z1) - eval_h(cost, Z2))[ok] / dist[ok] ** alpha
        else:
            g1 = np.empty((budget, cost.d))
            g2 = np.empty((budget, cost.d))
            for t in range(budget):
                try:
                    g1[t] = grad_h(cost, Z1[t])
                    g2[t] = grad_h(cost, Z2[t])
                except UsageError:
                    g1[t] = g2[t] = 0.0
            q = np.linalg.norm(g1 - g2, axis=1)[ok] / dist[ok] ** (alpha - 1.0)
        viol = float(np.max(q) - lam)
        if viol > 0:
            k = int(np.argmax(q))
            witnesses.append(("quotient", Z1[ok][k].tolist(), Z2[ok][k].tolist()))
        return ConditionReport("H1", viol <= 0.0, max(viol, 0.0), witnesses, budget)
    if condition == "H3":
        if not _is_radial(cost):
            raise UsageError(
                "H3 concerns radial costs h(z) = omega(||z||); "
                f"power_lr with r={cost.r:g} in d={cost.d} is not radial")
        kappa = cost.metadata.kappa
        p = cost.metadata.growth_p
        # Dense 1-d scan of radii in (1, 50].
        ts = 1.0 + 49.0 * (np.arange(1, budget + 1) / budget)
        e1 = np.zeros(cost.d)
        step = 1e-6
        viol = 0.0
        for t in ts:
            zp = e1.copy(); zp[0] = t + step
            zm = e1.copy(); zm[0] = t - step
            om = (float(eval_h(cost, zp)) - float(eval_h(cost, zm))) / (2 * step)
            quot = om / t ** (p - 1.0)
            v = max(1.0 / kappa - quot, quot - kappa)
            if v > viol:
                viol = v
                witnesses = [("radius", float(t), float(quot))]
        return ConditionReport("H3", viol <= 1e-6, max(viol, 0.0), witnesses, budget)
    # H4
    meta = cost.metadata
    if meta.lam_lower is None or meta.z0 is None:
        raise UsageError(
            "H4 needs lam_lower and z0 in the cost metadata; none recorded "
            f"for {cost.config_name()}")
    z0 = np.asarray(meta.z0, dtype=float)
    g0 = grad_h(cost, z0)
    h0 = float(eval_h(cost, z0))
    Z = draw(budget)
    dz = Z - z0
    lower = h0 + dz @ g0 + meta.lam_lower * np.linalg.norm(dz, axis=1) ** meta.alpha
    gap = lower - eval_h(cost, Z)
    viol = float(gap.max())
    if viol > 0:
        witnesses.append(("point", Z[int(np.argmax(gap))].tolist()))
    return ConditionReport("H4", viol <= 1e-10, max(viol, 0.0), witnesses, budget)
