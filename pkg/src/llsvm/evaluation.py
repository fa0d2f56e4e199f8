"""Runnable checks of the stability, consistency and risk guarantees."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy import stats

from .classifier import (
    FixedBandwidth,
    LLSVMConfig,
    augment,
    build_local_problem,
    gather,
    kbr_predict,
    knn_predict,
    linear_predict,
    predict,
    train_global_linear,
)
from .dataset import LabeledDataset
from .errors import DegenerateProblemError, InvalidSpecError
from .kernels import KernelSpec
from .solver import LocalProblem, distance_slack, hinge, norm_bound_holds, solve
from .spatial import build_index
from .synthetic import SyntheticSpec, generate, make_rng

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# leave-one-out stability


@dataclass(frozen=True)
class StabilityRecord:
    index: int
    weight: float
    observed: float
    bound: float
    slack: float
    control: bool = False

    @property
    def ok(self) -> bool:
        if self.weight > 0:
            return self.observed <= self.bound + self.slack
        return self.observed <= self.slack


@dataclass(frozen=True)
class StabilityReport:
    records: list
    x0: np.ndarray
    sigma: float
    lam: float
    n: int
    radius_bound: float
    sup_kernel: float
    tol: float
    max_violation: float
    passed: bool
    inconclusive: bool

    def summary(self) -> dict:
        return {
            "x0": [float(v) for v in self.x0],
            "sigma": self.sigma,
            "lambda": self.lam,
            "n": self.n,
            "radius_bound": self.radius_bound,
            "sup_kernel": self.sup_kernel,
            "tol": self.tol,
            "records": len(self.records),
            "max_violation": self.max_violation,
            "passed": self.passed,
            "inconclusive": self.inconclusive,
        }


def _stability_tol(problem: LocalProblem, radius: float) -> float:
    # choose tol so the gap-derived slack stays below 10% of the smallest bound
    K = problem.weights
    kmin = float(K[K > 0].min())
    bmin = 2.0 * radius * kmin / (problem.sample_size * problem.lam)
    scale = max(1.0, problem.loss_scale)
    target = problem.lam * (0.05 * bmin) ** 2 / 4.0 * 0.5
    return float(min(1e-10 * scale, max(target, 1e-13 * scale)))


def stability_check(
    dataset: LabeledDataset,
    x0,
    config: LLSVMConfig,
    tol: float | None = None,
    n_controls: int = 3,
    seed: int = 0,
    index=None,
) -> StabilityReport:
    """Compare every leave-one-out change of the local solution with its bound.

    For each training point ``i`` with positive smoothing weight the local
    problem is re-solved without ``i`` (keeping the loss divisor ``n``) and
    ``||w - w_{-i}||`` is compared with ``2 Mbar K_i / (n lam)`` plus a slack
    derived from both duality gaps.  ``n_controls`` zero-weight points are
    removed as controls; their solutions must agree within the slack.
    """
    if not isinstance(config.bandwidth, FixedBandwidth):
        raise InvalidSpecError("stability_check needs a fixed bandwidth")
    kernel = config.bandwidth.kernel
    if not kernel.is_positive:
        raise InvalidSpecError("stability_check needs a nonnegative kernel")
    x0 = np.asarray(x0, dtype=float).ravel()
    index = index or build_index(dataset)
    # growth would let a removal move the bandwidth
    cfg = replace(config, empty_ball=replace(config.empty_ball, kind="abstain"))
    local = gather(dataset, index, cfg, x0)
    if local is None:
        raise DegenerateProblemError("no training point carries positive weight at the query")
    problem = build_local_problem(dataset, local, config.lam, config.degree)
    n, lam = dataset.n, config.lam
    radius = float(np.sqrt(np.max(np.sum(augment(dataset.points, config.degree) ** 2, axis=1))))
    if tol is None:
        tol = _stability_tol(problem, radius)
    full = solve(problem, tol=tol, max_epochs=max(config.max_epochs, 100_000))
    g_full = max(tol, full.duality_gap)

    records = []
    for j in range(problem.m):
        sub = problem.without(j)
        Ki = float(problem.weights[j])
        if sub.m == 0 or not np.any(sub.weights > 0):
            # removing the only weighted point leaves w = 0
            w_sub, g_sub = np.zeros_like(full.w), 0.0
        else:
            res = solve(sub, tol=tol, max_epochs=max(config.max_epochs, 100_000),
                        beta0=np.delete(full.beta, j))
            w_sub, g_sub = res.w, max(tol, res.duality_gap)
        slack = 2.0 * distance_slack(g_full + g_sub, lam)
        records.append(StabilityRecord(
            int(local.indices[j]), Ki, float(np.linalg.norm(full.w - w_sub)),
            2.0 * radius * Ki / (n * lam), slack,
        ))

    outside = np.setdiff1d(np.arange(n), local.indices)
    if n_controls and outside.size:
        rng = make_rng(seed)
        picks = rng.choice(outside, size=min(n_controls, outside.size), replace=False)
        for i in np.sort(picks):
            reduced = dataset.without(int(i))
            loc = gather(reduced, build_index(reduced), cfg, x0)
            sub = LocalProblem(
                augment(reduced.points[loc.indices], config.degree),
                reduced.labels[loc.indices], loc.weights, n, lam,
            )
            res = solve(sub, tol=tol, max_epochs=max(config.max_epochs, 100_000))
            slack = 2.0 * distance_slack(g_full + max(tol, res.duality_gap), lam)
            records.append(StabilityRecord(
                int(i), 0.0, float(np.linalg.norm(full.w - res.w)), 0.0, slack, control=True,
            ))

    viol = [r.observed - (r.bound + r.slack if r.weight > 0 else r.slack) for r in records]
    pos_bounds = [r.bound for r in records if r.weight > 0]
    max_slack = max(r.slack for r in records)
    return StabilityReport(
        records=records,
        x0=x0,
        sigma=kernel.bandwidth,
        lam=lam,
        n=n,
        radius_bound=radius,
        sup_kernel=kernel.sup_value(),
        tol=tol,
        max_violation=float(max(viol)),
        passed=all(r.ok for r in records),
        inconclusive=bool(pos_bounds) and max_slack >= 0.1 * min(pos_bounds),
    )


# --------------------------------------------------------------------------
# pointwise consistency sweeps


@dataclass(frozen=True)
class Schedule:
    """``sigma_n = sigma_scale n^-a`` and ``lambda_n = lambda_scale n^-b``."""

    sigma_exponent: float
    lambda_exponent: float
    theta: float = 0.5
    sigma_scale: float = 1.0
    lambda_scale: float = 1.0

    def growth_exponent(self, d: int) -> float:
        # n lam^2 sigma^(4d) ~ n^(1 - 2b - 4da)
        return 1.0 - 2.0 * self.lambda_exponent - 4.0 * d * self.sigma_exponent

    def validate(self, d: int) -> None:
        if self.sigma_exponent <= 0 or self.lambda_exponent <= 0:
            raise InvalidSpecError("sigma and lambda must shrink with n")
        if self.theta <= 0:
            raise InvalidSpecError("theta must be positive")
        if self.growth_exponent(d) <= 0:
            raise InvalidSpecError(
                f"n lambda^2 sigma^(4d) does not grow for d={d} "
                f"(exponent {self.growth_exponent(d):.4g})"
            )

    def sigma(self, n: int) -> float:
        return self.sigma_scale * n ** (-self.sigma_exponent)

    def lam(self, n: int) -> float:
        return self.lambda_scale * n ** (-self.lambda_exponent)

    def value(self, n: int, d: int) -> float:
        return n * self.lam(n) ** 2 * self.sigma(n) ** (4 * d)


@dataclass(frozen=True)
class CurveRow:
    n: int
    sigma: float
    lam: float
    schedule_value: float
    agreement_rate: float
    agreement_sd: float
    mean_local_risk: float
    mean_excess_local_risk: float


@dataclass(frozen=True)
class ConsistencyCurve:
    schedule: Schedule
    probes: np.ndarray
    excluded_probes: np.ndarray
    rows: list
    cells: list = field(repr=False, default_factory=list)

    def agreement(self) -> np.ndarray:
        return np.array([r.agreement_rate for r in self.rows])

    def nondecreasing(self, noise: float = 0.03) -> bool:
        a = self.agreement()
        return bool(np.all(a[1:] >= a[:-1] - noise))

    def spearman(self) -> float:
        a = self.agreement()
        if np.all(a == a[0]):
            return 0.0
        return float(stats.spearmanr([r.n for r in self.rows], a).statistic)


def local_01_risk(w, x0, kernel: KernelSpec, truth, degree: int = 1, n_mc: int = 20_000,
                  seed: int = 12345) -> tuple[float, float]:
    """Monte-Carlo local 0-1 risk of the linear rule ``w`` and of the Bayes rule.

    With ``f(x) = <w, xbar>``, the risk is
    ``E[(eta 1{f <= 0} + (1 - eta) 1{f >= 0}) K(x, x0, sigma)]``.
    """
    rng = make_rng(seed)
    x = truth.sample_x(rng, n_mc)
    K = kernel.evaluate(x, x0)
    eta = truth.eta(x)
    f = augment(x, degree) @ w
    risk = np.mean((eta * (f <= 0) + (1 - eta) * (f >= 0)) * K)
    bayes = np.mean(np.minimum(eta, 1 - eta) * K)
    return float(risk), float(bayes)


def _cell_seed(seed: int, n: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, n, rep]).generate_state(1, dtype=np.uint64)[0])


def consistency_sweep(
    spec: SyntheticSpec,
    probes,
    schedule: Schedule,
    n_list: Sequence[int],
    replicates: int,
    margin_floor: float,
    family: str = "epanechnikov",
    seed: int = 0,
    workers: int = 1,
    with_risk: bool = True,
) -> ConsistencyCurve:
    """Bayes-agreement of local predictions as n grows along ``schedule``."""
    n_list = sorted(int(n) for n in n_list)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 1 and probes.shape[1] > 1 and spec.generator == "uniform_1d_smooth":
        probes = probes.T
    _, truth = generate(spec.replace(n=2))
    if truth is None:
        raise InvalidSpecError(f"{spec.generator} has no ground truth")
    d = probes.shape[1]
    schedule.validate(d)
    vals = [schedule.value(n, d) for n in n_list]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise InvalidSpecError("schedule value must increase with n")
    keep = truth.margin(probes) >= margin_floor
    used, excluded = probes[keep], probes[~keep]
    if used.shape[0] == 0:
        raise InvalidSpecError("every probe falls below the margin floor")
    bayes = truth.bayes_label(used)

    def cell(args):
        n, rep = args
        ds, _ = generate(spec.replace(n=n, seed=_cell_seed(seed, n, rep)))
        idx = build_index(ds)
        kernel = KernelSpec(family, schedule.sigma(n), d)
        cfg = LLSVMConfig(FixedBandwidth(kernel), schedule.lam(n), shortcut=False)
        out = []
        for p, b in zip(used, bayes):
            pred = predict(ds, idx, cfg, p)
            risk = bayes_risk = math.nan
            if with_risk and pred.result is not None:
                risk, bayes_risk = local_01_risk(pred.result.w, p, kernel, truth)
            out.append((n, rep, tuple(p), pred.label, int(b), risk, bayes_risk))
        return out

    jobs = [(n, r) for n in n_list for r in range(replicates)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(cell, jobs))
    else:
        results = [cell(j) for j in jobs]
    cells = [c for chunk in results for c in chunk]

    rows = []
    for n in n_list:
        mine = [c for c in cells if c[0] == n]
        per_rep = [
            np.mean([c[3] == c[4] for c in mine if c[1] == r]) for r in range(replicates)
        ]
        risks = np.array([c[5] for c in mine])
        excess = risks - np.array([c[6] for c in mine])
        rows.append(CurveRow(
            n=n,
            sigma=schedule.sigma(n),
            lam=schedule.lam(n),
            schedule_value=schedule.value(n, d),
            agreement_rate=float(np.mean(per_rep)),
            agreement_sd=float(np.std(per_rep)),
            mean_local_risk=float(np.nanmean(risks)) if with_risk else math.nan,
            mean_excess_local_risk=float(np.nanmean(excess)) if with_risk else math.nan,
        ))
    return ConsistencyCurve(schedule, used, excluded, rows, cells)


def probe_agreement(
    spec: SyntheticSpec,
    probes,
    kernel: KernelSpec,
    lam: float,
    seeds: Sequence[int],
) -> float:
    """Mean fraction of probes where the local SVM matches the Bayes label."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    rates = []
    for s in seeds:
        ds, truth = generate(spec.replace(seed=int(s)))
        idx = build_index(ds)
        cfg = LLSVMConfig(FixedBandwidth(kernel), lam, shortcut=False)
        bayes = truth.bayes_label(probes)
        rates.append(np.mean([predict(ds, idx, cfg, p).label == b for p, b in zip(probes, bayes)]))
    return float(np.mean(rates))


# --------------------------------------------------------------------------
# generalisation diagnostics


@dataclass(frozen=True)
class RiskReport:
    empirical_risk: float
    heldout_risk: float
    gap: float
    stability_term: float
    confidence_term: float
    bound: float
    radius_bound: float
    max_mean_weight: float
    delta: float
    holds: bool

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _decision_values(train, index, cfg, points, workers):
    def one(p):
        return predict(train, index, cfg, p)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            preds = list(pool.map(one, points))
    else:
        preds = [one(p) for p in points]
    return preds


def risk_report(
    train: LabeledDataset,
    test: LabeledDataset,
    config: LLSVMConfig,
    delta: float = 0.05,
    workers: int = 1,
) -> RiskReport:
    """Empirical versus held-out hinge risk of the pointwise local rule.

    The bound is ``4 M^2 / (n lam sigma^d) + (1 + M sqrt(2 Kbar / lam)) sqrt(ln(1/delta) / 2n)``
    where ``M`` bounds ``||xbar||`` on the training set and ``Kbar`` is the
    largest mean smoothing weight ``(1/n) sum_j K_j`` over the evaluated points.
    """
    if not isinstance(config.bandwidth, FixedBandwidth):
        raise InvalidSpecError("risk_report needs a fixed bandwidth")
    if not (0 < delta < 1):
        raise InvalidSpecError("delta must lie in (0, 1)")
    cfg = replace(config, shortcut=False)
    kernel = config.bandwidth.kernel
    index = build_index(train)
    n, d, lam = train.n, train.dim, config.lam
    tr = _decision_values(train, index, cfg, train.points, workers)
    te = _decision_values(train, index, cfg, test.points, workers)
    emp = float(np.mean(hinge(train.labels * np.array([p.decision_value for p in tr]))))
    held = float(np.mean(hinge(test.labels * np.array([p.decision_value for p in te]))))
    kbar = 0.0
    for x in np.vstack([train.points, test.points]):
        idx = index.range_query(x, kernel.bandwidth)
        if idx.size:
            kbar = max(kbar, float(kernel.evaluate(train.points[idx], x).sum()) / n)
    M = float(np.sqrt(np.max(np.sum(augment(train.points, config.degree) ** 2, axis=1))))
    stab = 4.0 * M ** 2 / (n * lam * kernel.bandwidth ** d)
    conf = (1.0 + M * math.sqrt(2.0 * kbar / lam)) * math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    bound = stab + conf
    return RiskReport(
        empirical_risk=emp,
        heldout_risk=held,
        gap=held - emp,
        stability_term=stab,
        confidence_term=conf,
        bound=bound,
        radius_bound=M,
        max_mean_weight=kbar,
        delta=delta,
        holds=held <= emp + bound,
    )


@dataclass(frozen=True)
class ObjectiveGapReport:
    """Estimated excess regularised local risk against its high-probability bound."""

    excess: float
    beta: float
    loss_bound: float
    bound: float
    delta: float

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def objective_gap_report(
    train: LabeledDataset,
    population: LabeledDataset,
    x0,
    config: LLSVMConfig,
    delta: float = 0.05,
) -> ObjectiveGapReport:
    """Diagnostic for the rate at which the local objective approaches its minimum.

    ``population`` is a large independent sample standing in for the data
    distribution: the regularised local risk is its empirical average and
    its minimiser is the local solution on it.  The bound is
    ``2 beta + (4 n beta + M1) sqrt(ln(1/delta) / 2n)`` with the stability
    ``beta`` and loss bound ``M1`` evaluated with the exact kernel maximum.
    """
    if not isinstance(config.bandwidth, FixedBandwidth):
        raise InvalidSpecError("objective_gap_report needs a fixed bandwidth")
    kernel = config.bandwidth.kernel
    x0 = np.asarray(x0, dtype=float).ravel()
    cfg = replace(config, empty_ball=replace(config.empty_ball, kind="abstain"))

    def local_solve(ds):
        loc = gather(ds, build_index(ds), cfg, x0)
        if loc is None:
            raise DegenerateProblemError("empty neighbourhood")
        prob = build_local_problem(ds, loc, config.lam, config.degree)
        return solve(prob, tol=config.tol, max_epochs=config.max_epochs), loc

    w_hat = local_solve(train)[0].w
    w_star, loc_star = local_solve(population)
    pop_prob = build_local_problem(population, loc_star, config.lam, config.degree)

    def reg_risk(w):
        margins = pop_prob.labels * (pop_prob.augmented_points @ w)
        return 0.5 * config.lam * float(w @ w) + float(pop_prob.weights @ hinge(margins)) / population.n

    n, lam = train.n, config.lam
    km = kernel.sup_value()
    M = float(np.sqrt(np.max(np.sum(augment(train.points, config.degree) ** 2, axis=1))))
    idx = build_index(train).range_query(x0, kernel.bandwidth)
    ksum = float(kernel.evaluate(train.points[idx], x0).sum()) if idx.size else 0.0
    beta = 2.0 * M * km / (n * lam) * (math.sqrt(2.0 * lam / n) * math.sqrt(ksum) + M * km)
    m1 = ksum / n + km + km * M * math.sqrt(2.0 / (n * lam) * ksum)
    bound = 2.0 * beta + (4.0 * n * beta + m1) * math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    return ObjectiveGapReport(reg_risk(w_hat) - reg_risk(w_star.w), beta, m1, bound, delta)


# --------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class KBRMethod:
    kernel: KernelSpec


@dataclass(frozen=True)
class KNNMethod:
    k: int


@dataclass(frozen=True)
class GlobalLinearMethod:
    lam: float
    tol: float | None = None
    degree: int = 1


Method = Union[LLSVMConfig, KBRMethod, KNNMethod, GlobalLinearMethod]


def method_name(method: Method) -> str:
    if isinstance(method, LLSVMConfig):
        bw = method.bandwidth
        if isinstance(bw, FixedBandwidth):
            where = f"{bw.kernel.family},sigma={bw.kernel.bandwidth:g}"
        else:
            where = f"knn={bw.k},{bw.family}"
        return f"llsvm({where},lambda={method.lam:g},degree={method.degree})"
    if isinstance(method, KBRMethod):
        return f"kbr({method.kernel.family},sigma={method.kernel.bandwidth:g})"
    if isinstance(method, KNNMethod):
        return f"knn(k={method.k})"
    return f"linear(lambda={method.lam:g})"


def predict_labels(method: Method, train: LabeledDataset, queries, workers: int = 1) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if isinstance(method, GlobalLinearMethod):
        w = train_global_linear(train, method.lam, method.tol, method.degree)
        return np.array([linear_predict(w, q, method.degree).label for q in queries])
    index = build_index(train)
    if isinstance(method, LLSVMConfig):
        fn = lambda q: predict(train, index, method, q).label  # noqa: E731
    elif isinstance(method, KBRMethod):
        fn = lambda q: kbr_predict(train, index, method.kernel, q).label  # noqa: E731
    elif isinstance(method, KNNMethod):
        fn = lambda q: knn_predict(train, index, method.k, q).label  # noqa: E731
    else:
        raise TypeError(f"unsupported method {method!r}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(fn, queries)))
    return np.array([fn(q) for q in queries])


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is dealt round-robin after a seeded shuffle."""
    rng = make_rng(seed)
    fold = np.empty(labels.shape[0], dtype=int)
    start = 0
    for cls in (-1.0, 1.0):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        fold[members] = (np.arange(members.size) + start) % folds
        start += members.size
    return fold


@dataclass(frozen=True)
class CVRow:
    method: object
    name: str
    mean_accuracy: float
    sd: float
    fold_accuracies: tuple
    single_class_warning: bool


def cross_validate(
    dataset: LabeledDataset,
    folds: int,
    config_grid: Sequence[Method],
    seed: int = 0,
    workers: int = 1,
) -> list[CVRow]:
    if folds < 2:
        raise InvalidSpecError("need at least two folds")
    if folds > dataset.n:
        raise InvalidSpecError("more folds than samples")
    fold = stratified_folds(dataset.labels, folds, seed)
    warn = False
    splits = []
    for f in range(folds):
        tr, te = np.flatnonzero(fold != f), np.flatnonzero(fold == f)
        if np.unique(dataset.labels[tr]).size < 2:
            warn = True
            log.warning("fold %d trains on a single class", f)
        splits.append((dataset.subset(tr), dataset.subset(te)))
    rows = []
    for method in config_grid:
        accs = []
        for train, test in splits:
            pred = predict_labels(method, train, test.points, workers)
            accs.append(float(np.mean(pred == test.labels)))
        rows.append(CVRow(
            method, method_name(method), float(np.mean(accs)),
            float(np.std(accs, ddof=1)), tuple(accs), warn,
        ))
    return rows
