"""Certified solver for the kernel-weighted, L2-regularised hinge problem.

The primal at a query point is::

    P(w) = lam/2 ||w||^2 + (1/n) sum_i K_i max(0, 1 - y_i <w, xbar_i>)

where only the ``m`` points with a nonzero smoothing weight are materialised
but ``n`` is the full training-set size.  Its dual over the box
``0 <= beta_i <= K_i / n`` is::

    D(beta) = sum_i beta_i - 1/(2 lam) ||sum_i beta_i y_i xbar_i||^2

and ``w = (1/lam) sum_i beta_i y_i xbar_i``.  ``beta_i`` equals ``alpha_i K_i``
for the per-point duals ``alpha_i`` in ``[0, 1/n]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateProblemError, DimensionMismatchError, InvalidProblemError

DEFAULT_MAX_EPOCHS = 10_000


@dataclass(frozen=True, eq=False)
class LocalProblem:
    """One weighted hinge problem.

    ``augmented_points`` rows are ``xbar_i = (phi(x_i), 1)``; ``sample_size``
    is the full ``n`` used as the loss divisor.  ``linear_term`` is an
    optional vector ``g`` adding ``<g, w>`` to the primal; it is only used by
    the signed-weight ablation solver and is zero otherwise.
    """

    augmented_points: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    sample_size: int
    lam: float
    linear_term: np.ndarray | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.augmented_points, dtype=float)
        y = np.ascontiguousarray(self.labels, dtype=float).ravel()
        K = np.ascontiguousarray(self.weights, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidProblemError("augmented_points must be a non-empty (m, p) array")
        m = X.shape[0]
        if y.shape != (m,) or K.shape != (m,):
            raise DimensionMismatchError("labels and weights must have one entry per point")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(K))):
            raise InvalidProblemError("points and weights must be finite")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise InvalidProblemError("labels must be exactly -1 or +1")
        if np.any(K < 0):
            raise InvalidProblemError("smoothing weights must be nonnegative")
        if not np.any(K > 0):
            raise DegenerateProblemError("all smoothing weights are zero")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidProblemError(f"lambda must be positive, got {self.lam!r}")
        if int(self.sample_size) < m:
            raise InvalidProblemError(
                f"sample_size {self.sample_size} is smaller than the {m} local points"
            )
        if np.any(np.sum(X * X, axis=1) == 0):
            raise InvalidProblemError("augmented points must be nonzero")
        g = self.linear_term
        if g is not None:
            g = np.ascontiguousarray(g, dtype=float).ravel()
            if g.shape != (X.shape[1],) or not np.all(np.isfinite(g)):
                raise InvalidProblemError("linear_term must be a finite (p,) vector")
        for arr in (X, y, K) + ((g,) if g is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "augmented_points", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", K)
        object.__setattr__(self, "sample_size", int(self.sample_size))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "linear_term", g)

    @property
    def m(self) -> int:
        return self.augmented_points.shape[0]

    @property
    def upper_bounds(self) -> np.ndarray:
        return self.weights / self.sample_size

    @property
    def loss_scale(self) -> float:
        """(1/n) sum_i K_i, the primal value at w = 0."""
        return float(self.weights.sum() / self.sample_size)

    def default_tol(self) -> float:
        return 1e-8 * max(1.0, self.loss_scale)

    def without(self, j: int) -> "LocalProblem":
        """Drop point ``j`` while keeping the loss divisor ``n`` fixed."""
        keep = np.ones(self.m, dtype=bool)
        keep[j] = False
        return LocalProblem(
            self.augmented_points[keep],
            self.labels[keep],
            self.weights[keep],
            self.sample_size,
            self.lam,
            self.linear_term,
        )


@dataclass(frozen=True, eq=False)
class SolverResult:
    w: np.ndarray
    beta: np.ndarray
    primal_value: float
    dual_value: float
    duality_gap: float
    iterations: int
    converged: bool
    tol: float

    def alpha_for(self, problem: LocalProblem) -> np.ndarray:
        """Per-point duals beta_i / K_i in [0, 1/n]; nan where K_i = 0."""
        K = problem.weights
        out = np.full_like(self.beta, np.nan)
        pos = K > 0
        out[pos] = self.beta[pos] / K[pos]
        return out


def hinge(t):
    return np.maximum(0.0, 1.0 - np.asarray(t, dtype=float))


def primal_value(w, problem: LocalProblem) -> float:
    """Exact primal objective at ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.augmented_points.shape[1],):
        raise DimensionMismatchError("w does not match the feature dimension")
    margins = problem.labels * (problem.augmented_points @ w)
    val = 0.5 * problem.lam * float(w @ w)
    val += float(problem.weights @ hinge(margins)) / problem.sample_size
    if problem.linear_term is not None:
        val += float(problem.linear_term @ w)
    return val


def dual_value(beta, problem: LocalProblem) -> float:
    beta = np.asarray(beta, dtype=float)
    v = (beta * problem.labels) @ problem.augmented_points
    if problem.linear_term is not None:
        v = v - problem.linear_term
    return float(beta.sum()) - float(v @ v) / (2.0 * problem.lam)


def reconstruct_w(beta, problem: LocalProblem) -> np.ndarray:
    v = (np.asarray(beta, dtype=float) * problem.labels) @ problem.augmented_points
    if problem.linear_term is not None:
        v = v - problem.linear_term
    return v / problem.lam


@njit(cache=True, nogil=True)
def _rebuild(X, y, beta, g, lam):
    m, p = X.shape
    w = np.zeros(p)
    for i in range(m):
        b = beta[i]
        if b != 0.0:
            c = b * y[i]
            for k in range(p):
                w[k] += c * X[i, k]
    for k in range(p):
        w[k] = (w[k] - g[k]) / lam
    return w


@njit(cache=True, nogil=True)
def _objectives(X, y, K, beta, g, w, lam, n):
    m, p = X.shape
    ww = 0.0
    gw = 0.0
    for k in range(p):
        ww += w[k] * w[k]
        gw += g[k] * w[k]
    loss = 0.0
    bsum = 0.0
    for i in range(m):
        bsum += beta[i]
        if K[i] > 0.0:
            s = 0.0
            for k in range(p):
                s += w[k] * X[i, k]
            t = 1.0 - y[i] * s
            if t > 0.0:
                loss += K[i] * t
    primal = 0.5 * lam * ww + loss / n + gw
    # lam * w = sum beta y x - g, so ||sum beta y x - g||^2 / (2 lam) = lam ||w||^2 / 2
    dual = bsum - 0.5 * lam * ww
    return primal, dual


@njit(cache=True, nogil=True)
def _dual_cd(X, y, K, g, lam, n, beta, order, tol, max_epochs):
    m, p = X.shape
    sqn = np.empty(m)
    ub = np.empty(m)
    for i in range(m):
        s = 0.0
        for k in range(p):
            s += X[i, k] * X[i, k]
        sqn[i] = s
        ub[i] = K[i] / n
    w = _rebuild(X, y, beta, g, lam)
    primal, dual = _objectives(X, y, K, beta, g, w, lam, n)
    gap = primal - dual
    epochs = 0
    converged = gap <= tol
    while not converged and epochs < max_epochs:
        for j in range(m):
            i = order[j]
            if ub[i] == 0.0:
                continue
            s = 0.0
            for k in range(p):
                s += w[k] * X[i, k]
            nb = beta[i] + lam * (1.0 - y[i] * s) / sqn[i]
            if nb < 0.0:
                nb = 0.0
            elif nb > ub[i]:
                nb = ub[i]
            delta = nb - beta[i]
            if delta != 0.0:
                beta[i] = nb
                c = delta * y[i] / lam
                for k in range(p):
                    w[k] += c * X[i, k]
        epochs += 1
        # drop incremental drift so w matches beta exactly before certifying
        w = _rebuild(X, y, beta, g, lam)
        primal, dual = _objectives(X, y, K, beta, g, w, lam, n)
        gap = primal - dual
        converged = gap <= tol
    return w, primal, dual, gap, epochs, converged


def solve(
    problem: LocalProblem,
    tol: float | None = None,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    order: str = "forward",
    beta0: np.ndarray | None = None,
) -> SolverResult:
    """Dual coordinate ascent with a duality-gap stopping rule.

    Coordinates are swept in index order (``order="reverse"`` for the
    opposite direction).  ``beta0`` warm-starts the duals; it is clipped to
    the box first.
    """
    if tol is None:
        tol = problem.default_tol()
    if not (tol > 0):
        raise InvalidProblemError(f"tol must be positive, got {tol!r}")
    if max_epochs < 1:
        raise InvalidProblemError("max_epochs must be positive")
    m, p = problem.augmented_points.shape
    if order == "forward":
        idx = np.arange(m, dtype=np.int64)
    elif order == "reverse":
        idx = np.arange(m - 1, -1, -1, dtype=np.int64)
    else:
        raise ValueError(f"unknown sweep order {order!r}")
    ub = problem.upper_bounds
    if beta0 is None:
        beta = np.zeros(m)
    else:
        beta = np.clip(np.array(beta0, dtype=float).ravel(), 0.0, ub)
        if beta.shape != (m,):
            raise DimensionMismatchError("beta0 must have one entry per point")
    g = problem.linear_term if problem.linear_term is not None else np.zeros(p)
    w, primal, dual, gap, epochs, converged = _dual_cd(
        problem.augmented_points,
        problem.labels,
        problem.weights,
        g,
        problem.lam,
        float(problem.sample_size),
        beta,
        idx,
        float(tol),
        int(max_epochs),
    )
    return SolverResult(
        w=w,
        beta=beta,
        primal_value=float(primal),
        dual_value=float(dual),
        duality_gap=float(gap),
        iterations=int(epochs),
        converged=bool(converged),
        tol=float(tol),
    )


def solve_signed(
    points: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    sample_size: int,
    lam: float,
    tol: float | None = None,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    max_outer: int = 100,
) -> SolverResult:
    """Local stationary point of the primal when some weights are negative.

    Negative weights make the loss concave on those points, so the objective
    is a difference of convex functions.  Each outer round linearises the
    concave part at the current ``w`` and solves the remaining convex problem
    exactly with :func:`solve`; rounds stop once the active pattern of the
    negative-weight hinges repeats.  The returned gap refers to the last
    convex subproblem.
    """
    X = np.ascontiguousarray(points, dtype=float)
    y = np.asarray(labels, dtype=float).ravel()
    K = np.asarray(weights, dtype=float).ravel()
    neg = K < 0
    if not np.any(neg):
        return solve(LocalProblem(X, y, K, sample_size, lam), tol=tol, max_epochs=max_epochs)
    pos = K > 0
    if not np.any(pos):
        raise DegenerateProblemError("signed problem has no positive weight")
    Xp, yp, Kp = X[pos], y[pos], K[pos]
    Xn, yn, Kn = X[neg], y[neg], -K[neg]
    w = np.zeros(X.shape[1])
    active = None
    res = None
    for _ in range(max_outer):
        # subgradient of -(1/n) sum Kn_i hinge_i at w, with hinge'(0) taken as active
        act = (1.0 - yn * (Xn @ w)) >= 0.0
        if active is not None and np.array_equal(act, active):
            break
        active = act
        grad = -((Kn * act * -yn) @ Xn) / sample_size
        sub = LocalProblem(Xp, yp, Kp, sample_size, lam, linear_term=grad)
        res = solve(sub, tol=tol, max_epochs=max_epochs)
        w = res.w
    beta = np.zeros(X.shape[0])
    beta[pos] = res.beta
    return SolverResult(
        w=res.w,
        beta=beta,
        primal_value=float(
            0.5 * lam * res.w @ res.w + (K @ hinge(y * (X @ res.w))) / sample_size
        ),
        dual_value=res.dual_value,
        duality_gap=res.duality_gap,
        iterations=res.iterations,
        converged=res.converged,
        tol=res.tol,
    )


def norm_bound_holds(result: SolverResult, problem: LocalProblem, slack: float | None = None) -> bool:
    """(lam/2)||w||^2 <= (1/n) sum_j K_j, up to the solver tolerance."""
    if slack is None:
        slack = result.tol
    lhs = 0.5 * problem.lam * float(result.w @ result.w)
    return lhs <= problem.loss_scale + slack


def distance_slack(gap: float, lam: float) -> float:
    """Bound on ||w - w*|| implied by a primal suboptimality ``gap``.

    The primal is lam-strongly convex, so ``P(w) - P(w*) >= lam/2 ||w - w*||^2``.
    """
    return math.sqrt(2.0 * max(gap, 0.0) / lam)
