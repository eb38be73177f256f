"""Verification statistics for trial logs.

Period summaries, change-score difference-in-differences with HC1 robust
errors, Benjamini-Hochberg step-up adjustment, and a Gaussian
identity-link GEE with exchangeable working correlation and sandwich
standard errors. Estimators are pure functions of an immutable log.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats as spstats

from .baseline import MIN_WEAR_DAYS, WEAR_THRESHOLD, Period
from .domain import Arm, StepRecord
from .errors import DegenerateDesignError, NoConvergenceError, SingularDesignError
from .simulate import TrialLog

Z_95 = 1.959963984540054  # two-sided 95% normal quantile

ARM_LABELS = {
    Arm.CONTROL: "Control",
    Arm.RANDOM: "Random",
    Arm.FIXED: "Fixed",
    Arm.RL: "RL",
}


@dataclass(frozen=True)
class PeriodCell:
    mean: float
    sd: float
    n: int


@dataclass(frozen=True)
class PeriodSummary:
    """Mean (SD) of per-participant period means, stratified by arm."""

    cells: dict[tuple[Arm, Period], PeriodCell]

    def cell(self, arm: Arm, period: Period) -> PeriodCell:
        return self.cells[(arm, period)]


@dataclass(frozen=True)
class RegressionResult:
    label: str
    coefficient: float
    std_error: float
    p_value: float
    adjusted_p: Optional[float] = None
    n_treated: int = 0
    n_control: int = 0

    def with_adjusted(self, adjusted: float) -> "RegressionResult":
        return replace(self, adjusted_p=adjusted)


@dataclass(frozen=True)
class GeeResult:
    names: tuple[str, ...]
    estimates: np.ndarray
    std_errors: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_values: np.ndarray
    rho: float
    n_clusters: int
    n_obs: int
    n_iterations: int


def _period_means(
    log: TrialLog,
) -> dict[str, dict[Period, Optional[float]]]:
    """Per-participant period means over wear days; None when non-compliant."""
    by_pid: dict[str, list[StepRecord]] = {pid: [] for pid in log.arms}
    for rec in log.steps:
        if rec.participant_id in by_pid:
            by_pid[rec.participant_id].append(rec)
    out: dict[str, dict[Period, Optional[float]]] = {}
    for pid, recs in by_pid.items():
        per: dict[Period, Optional[float]] = {}
        for period in Period:
            worn = [
                r.total_steps
                for r in recs
                if period.contains(r.day) and r.total_steps >= WEAR_THRESHOLD
            ]
            per[period] = float(np.mean(worn)) if len(worn) >= MIN_WEAR_DAYS else None
        out[pid] = per
    return out


def summarize_periods(log: TrialLog) -> PeriodSummary:
    """Arm x period table of per-participant means; non-compliant excluded."""
    if not log.steps:
        raise ValueError("empty trial log")
    means = _period_means(log)
    cells: dict[tuple[Arm, Period], PeriodCell] = {}
    for arm in Arm:
        pids = log.participants_in(arm)
        for period in Period:
            vals = np.array(
                [means[p][period] for p in pids if means[p][period] is not None]
            )
            if vals.size == 0:
                continue
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            cells[(arm, period)] = PeriodCell(float(vals.mean()), sd, int(vals.size))
    return PeriodSummary(cells=cells)


def change_score_regression(
    changes: Sequence[float], treated: Sequence[bool], label: str = ""
) -> RegressionResult:
    """OLS of change scores on a treatment indicator with HC1 errors.

    The coefficient equals the difference of group mean changes; the
    p-value uses the normal reference on the robust z statistic.
    """
    y = np.asarray(changes, dtype=float)
    t = np.asarray(treated, dtype=float)
    n_treated = int(t.sum())
    n_control = int(len(t) - n_treated)
    if n_treated < 2 or n_control < 2:
        raise DegenerateDesignError(
            f"need >= 2 participants per group, got {n_treated} treated / "
            f"{n_control} control"
        )
    X = np.column_stack([np.ones_like(y), t])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    meat = X.T @ (X * resid[:, None] ** 2)
    n, p = X.shape
    cov = bread @ meat @ bread * n / (n - p)
    se = float(np.sqrt(cov[1, 1]))
    z = beta[1] / se
    p_value = float(2.0 * spstats.norm.sf(abs(z)))
    return RegressionResult(
        label=label,
        coefficient=float(beta[1]),
        std_error=se,
        p_value=p_value,
        n_treated=n_treated,
        n_control=n_control,
    )


def did_regression(
    log: TrialLog, arm_a: Arm, arm_b: Arm, period: Period
) -> RegressionResult:
    """Difference-in-differences of ``arm_a`` against ``arm_b``.

    Each participant contributes one change score (period mean minus
    baseline mean, both over wear days); participants must be compliant
    in the baseline and the target period.
    """
    if period == Period.BASELINE:
        raise ValueError("period must be MONTH1 or MONTH2")
    if arm_a == arm_b:
        raise ValueError("arms must differ")
    means = _period_means(log)
    changes: list[float] = []
    treated: list[bool] = []
    for pid, arm in log.arms.items():
        if arm not in (arm_a, arm_b):
            continue
        per = means[pid]
        if per[Period.BASELINE] is None or per[period] is None:
            continue
        changes.append(per[period] - per[Period.BASELINE])
        treated.append(arm == arm_a)
    label = f"{ARM_LABELS[arm_a]} vs {ARM_LABELS[arm_b]}"
    return change_score_regression(changes, treated, label)


def bh_adjust(pvalues: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return []
    if ((p < 0) | (p > 1)).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return [float(v) for v in out]


def gee_exchangeable(
    y: np.ndarray,
    X: np.ndarray,
    clusters: Sequence,
    names: Optional[Sequence[str]] = None,
    max_iter: int = 100,
    tol: float = 1e-8,
    force_rho: Optional[float] = None,
) -> GeeResult:
    """Gaussian identity-link GEE with exchangeable working correlation.

    Alternates a moment update of the within-cluster correlation with a
    GLS coefficient update (using the closed-form inverse of the
    exchangeable block), then reports robust sandwich standard errors.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y and X row counts differ")
    _, cid = np.unique(np.asarray(clusters), return_inverse=True)
    sizes = np.bincount(cid).astype(float)
    k = sizes.size
    if k < 2:
        raise DegenerateDesignError("need at least 2 clusters")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError("design matrix is rank deficient")

    max_size = sizes.max()
    rho_floor = -1.0 / (max_size - 1.0) + 1e-6 if max_size > 1 else 0.0
    nterm = float((sizes * (sizes - 1.0)).sum() / 2.0)

    def cluster_sums(values: np.ndarray) -> np.ndarray:
        return np.bincount(cid, weights=values, minlength=k)

    def col_cluster_sums(mat: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.bincount(cid, weights=mat[:, j], minlength=k) for j in range(p)],
            axis=1,
        )

    xtx = X.T @ X
    xty = X.T @ y
    S = col_cluster_sums(X)
    u = cluster_sums(y)

    beta = np.linalg.solve(xtx, xty)
    rho = 0.0 if force_rho is None else float(force_rho)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resid = y - X @ beta
        if force_rho is None:
            phi = float(resid @ resid) / (n - p)
            res_sums = cluster_sums(resid)
            res_sq = cluster_sums(resid**2)
            pair_sum = float(((res_sums**2 - res_sq) / 2.0).sum())
            denom = phi * (nterm - p)
            rho = pair_sum / denom if denom > 0 else 0.0
            rho = float(np.clip(rho, rho_floor, 1.0 - 1e-6))
        c = rho / (1.0 + (sizes - 1.0) * rho)
        A = xtx - (S * c[:, None]).T @ S
        b = xty - S.T @ (c * u)
        try:
            beta_new = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(f"GLS system is singular: {exc}") from exc
        delta = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if delta < tol:
            converged = True
            break
    if not converged:
        raise NoConvergenceError(f"GEE did not converge in {max_iter} iterations")

    resid = y - X @ beta
    c = rho / (1.0 + (sizes - 1.0) * rho)
    A = xtx - (S * c[:, None]).T @ S
    T = col_cluster_sums(X * resid[:, None])
    res_sums = cluster_sums(resid)
    M_rows = T - S * (c * res_sums)[:, None]
    meat = M_rows.T @ M_rows
    bread = np.linalg.inv(A)
    cov = bread @ meat @ bread
    se = np.sqrt(np.diag(cov))
    zs = beta / se
    pvals = 2.0 * spstats.norm.sf(np.abs(zs))
    if names is None:
        names = tuple(f"x{j}" for j in range(p))
    return GeeResult(
        names=tuple(names),
        estimates=beta,
        std_errors=se,
        ci_low=beta - Z_95 * se,
        ci_high=beta + Z_95 * se,
        p_values=pvals,
        rho=float(rho),
        n_clusters=int(k),
        n_obs=int(n),
        n_iterations=iterations,
    )


GEE_COVARIATES = (
    "intercept",
    "arm_random",
    "arm_fixed",
    "arm_rl",
    "study_day",
    "arm_random_x_day",
    "arm_fixed_x_day",
    "arm_rl_x_day",
)


def gee_fit(
    log: TrialLog,
    max_iter: int = 100,
    tol: float = 1e-8,
    force_rho: Optional[float] = None,
) -> GeeResult:
    """GEE of daily steps on arm, study day, and arm-by-day interactions.

    Uses wear days of participants compliant in the baseline and every
    study period the log covers, clustered by participant.
    """
    means = _period_means(log)
    last_day = max((rec.day for rec in log.steps), default=0)
    required = [Period.BASELINE] + [
        pd for pd in (Period.MONTH1, Period.MONTH2) if pd.day_range[0] <= last_day
    ]
    eligible = {
        pid for pid, per in means.items() if all(per[pd] is not None for pd in required)
    }

    rows_y, rows_x, rows_cluster = [], [], []
    for rec in log.steps:
        if rec.day < 1 or rec.total_steps < WEAR_THRESHOLD:
            continue
        pid = rec.participant_id
        if pid not in eligible:
            continue
        arm = log.arms[pid]
        d_random = 1.0 if arm == Arm.RANDOM else 0.0
        d_fixed = 1.0 if arm == Arm.FIXED else 0.0
        d_rl = 1.0 if arm == Arm.RL else 0.0
        day = float(rec.day)
        rows_y.append(float(rec.total_steps))
        rows_x.append(
            (1.0, d_random, d_fixed, d_rl, day,
             d_random * day, d_fixed * day, d_rl * day)
        )
        rows_cluster.append(pid)
    if not rows_y:
        raise DegenerateDesignError("no usable observations for GEE")
    return gee_exchangeable(
        np.asarray(rows_y),
        np.asarray(rows_x),
        rows_cluster,
        names=GEE_COVARIATES,
        max_iter=max_iter,
        tol=tol,
        force_rho=force_rho,
    )
