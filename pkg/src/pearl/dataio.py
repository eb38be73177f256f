"""Dataset import/export, run manifests, and the analysis results bundle.

Tabular data travels as CSV, nested results as JSON. CSV schemas are
versioned; loaders reject files whose header does not match a known
schema version.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baseline import Period
from .domain import (
    Action,
    Arm,
    DecisionRecord,
    DeliveryTime,
    FeedbackEvent,
    FeedbackRating,
    NudgeTheme,
    StepRecord,
)
from .errors import ConfigError
from .features import FEATURE_NAMES, FeatureVector
from .simulate import TrialConfig, TrialLog
from .stats import GeeResult, PeriodSummary, RegressionResult

ENGINE_VERSION = "0.1.0"
RESULTS_SCHEMA = "pearl-results/1"

STEPS_SCHEMA = "pearl-steps/1"
DECISIONS_SCHEMA = "pearl-decisions/1"
FEEDBACK_SCHEMA = "pearl-feedback/1"

STEPS_HEADER = ["participant_id", "arm", "day", "morning_steps", "evening_steps", "total_steps"]
DECISIONS_HEADER = [
    "participant_id",
    "day",
    "action_index",
    "theme",
    "time",
    "propensity",
    "message_id",
    "reward",
    "feedback_rating",
] + [f"feat_{name}" for name in FEATURE_NAMES]
FEEDBACK_HEADER = ["participant_id", "day", "message_id", "rating", "free_text"]

# The four pre-specified primary comparisons; their month-2 p-values form
# the multiplicity-adjustment family.
PRIMARY_COMPARISONS = (
    (Arm.RANDOM, Arm.CONTROL),
    (Arm.FIXED, Arm.RANDOM),
    (Arm.RL, Arm.RANDOM),
    (Arm.RL, Arm.FIXED),
)
ALL_COMPARISONS = (
    (Arm.RANDOM, Arm.CONTROL),
    (Arm.FIXED, Arm.CONTROL),
    (Arm.RL, Arm.CONTROL),
    (Arm.FIXED, Arm.RANDOM),
    (Arm.RL, Arm.RANDOM),
    (Arm.RL, Arm.FIXED),
)


def config_hash(config: TrialConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    seed: int
    config_hash: str
    engine_version: str = ENGINE_VERSION
    status: str = "running"
    created_at: float = field(default_factory=time.time)
    finalized_at: Optional[float] = None
    schemas: dict = field(
        default_factory=lambda: {
            "steps": STEPS_SCHEMA,
            "decisions": DECISIONS_SCHEMA,
            "feedback": FEEDBACK_SCHEMA,
        }
    )
    files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "engine_version": self.engine_version,
            "status": self.status,
            "created_at": self.created_at,
            "finalized_at": self.finalized_at,
            "schemas": self.schemas,
            "files": self.files,
        }

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(path: Path, header: list[str], rows) -> int:
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            count += 1
    return count


def _fmt(x: float) -> str:
    """Compact float formatting with full round-trip precision."""
    return repr(float(x))


def write_trial_log(log: TrialLog, out_dir: str | Path) -> RunManifest:
    """Write steps/decisions/feedback CSVs plus the run manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = log.config if log.config is not None else TrialConfig()
    manifest = RunManifest(seed=cfg.seed, config_hash=config_hash(cfg))
    manifest.write(out / "manifest.json")

    steps_rows = (
        [
            rec.participant_id,
            log.arms[rec.participant_id].name,
            rec.day,
            rec.morning_steps,
            rec.evening_steps,
            rec.total_steps,
        ]
        for rec in log.steps
    )
    n_steps = _write_csv(out / "steps.csv", STEPS_HEADER, steps_rows)

    def decision_row(rec: DecisionRecord):
        from .domain import action_index

        return [
            rec.participant_id,
            rec.day,
            action_index(rec.action),
            rec.action.theme.name,
            rec.action.time.name,
            _fmt(rec.propensity),
            rec.message_id,
            "" if rec.reward is None else _fmt(rec.reward),
            "" if rec.feedback is None else rec.feedback.rating.name,
        ] + [_fmt(v) for v in rec.features.values]

    n_dec = _write_csv(
        out / "decisions.csv", DECISIONS_HEADER, (decision_row(r) for r in log.decisions)
    )

    fb_rows = (
        [ev.participant_id, ev.day, ev.message_id, ev.rating.name, ev.free_text or ""]
        for ev in log.feedback
    )
    n_fb = _write_csv(out / "feedback.csv", FEEDBACK_HEADER, fb_rows)

    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    manifest.status = "complete"
    manifest.finalized_at = time.time()
    manifest.files = {
        name: {"rows": rows, "sha256": _sha256(out / name)}
        for name, rows in (
            ("steps.csv", n_steps),
            ("decisions.csv", n_dec),
            ("feedback.csv", n_fb),
        )
    }
    manifest.write(out / "manifest.json")
    return manifest


def _read_csv(path: Path, expected_header: list[str], schema: str) -> list[dict]:
    if not path.exists():
        raise ConfigError(f"missing input file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise ConfigError(f"{path} is empty") from exc
        if header != expected_header:
            raise ConfigError(
                f"{path} does not match schema {schema}; "
                f"unknown or incompatible column layout"
            )
        return [dict(zip(header, row)) for row in reader]


def load_trial_log(log_dir: str | Path) -> TrialLog:
    """Rebuild a TrialLog from the three exported CSVs."""
    d = Path(log_dir)
    step_rows = _read_csv(d / "steps.csv", STEPS_HEADER, STEPS_SCHEMA)
    dec_rows = _read_csv(d / "decisions.csv", DECISIONS_HEADER, DECISIONS_SCHEMA)
    fb_rows = _read_csv(d / "feedback.csv", FEEDBACK_HEADER, FEEDBACK_SCHEMA)

    arms: dict[str, Arm] = {}
    steps = []
    for row in step_rows:
        pid = row["participant_id"]
        arms[pid] = Arm[row["arm"]]
        steps.append(
            StepRecord(
                participant_id=pid,
                day=int(row["day"]),
                morning_steps=int(row["morning_steps"]),
                evening_steps=int(row["evening_steps"]),
            )
        )

    decisions = []
    for row in dec_rows:
        fb_rating = row["feedback_rating"]
        decisions.append(
            DecisionRecord(
                participant_id=row["participant_id"],
                day=int(row["day"]),
                features=FeatureVector(
                    values=tuple(float(row[f"feat_{n}"]) for n in FEATURE_NAMES)
                ),
                action=Action(NudgeTheme[row["theme"]], DeliveryTime[row["time"]]),
                propensity=float(row["propensity"]),
                message_id=row["message_id"],
                reward=float(row["reward"]) if row["reward"] else None,
                feedback=(
                    FeedbackEvent(
                        participant_id=row["participant_id"],
                        day=int(row["day"]),
                        message_id=row["message_id"],
                        rating=FeedbackRating[fb_rating],
                    )
                    if fb_rating
                    else None
                ),
            )
        )

    feedback = [
        FeedbackEvent(
            participant_id=row["participant_id"],
            day=int(row["day"]),
            message_id=row["message_id"],
            rating=FeedbackRating[row["rating"]],
            free_text=row["free_text"] or None,
        )
        for row in fb_rows
    ]
    return TrialLog(arms=arms, steps=steps, decisions=decisions, feedback=feedback)


def daily_arm_means(log: TrialLog) -> list[dict]:
    """Mean recorded steps per arm per study day (plot-ready long format)."""
    acc: dict[tuple[str, int], list[float]] = {}
    for rec in log.steps:
        if rec.day < 1:
            continue
        key = (log.arms[rec.participant_id].name, rec.day)
        acc.setdefault(key, []).append(float(rec.total_steps))
    return [
        {"arm": arm, "day": day, "mean_steps": float(np.mean(vals)), "n": len(vals)}
        for (arm, day), vals in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]


def analyze_log(log: TrialLog) -> dict:
    """Run the full verification suite and bundle the results."""
    from .stats import bh_adjust, did_regression, gee_fit, summarize_periods

    summary = summarize_periods(log)
    summary_rows = [
        {
            "arm": arm.name,
            "period": period.name,
            "mean": cell.mean,
            "sd": cell.sd,
            "n": cell.n,
        }
        for (arm, period), cell in sorted(
            summary.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].name)
        )
    ]

    did_results: list[tuple[str, RegressionResult]] = []
    for period in (Period.MONTH1, Period.MONTH2):
        if not any(p == period for (_, p) in summary.cells):
            continue
        for arm_a, arm_b in ALL_COMPARISONS:
            did_results.append((period.name, did_regression(log, arm_a, arm_b, period)))

    # adjust the pre-specified month-2 family
    from .stats import ARM_LABELS

    family_labels = {
        f"{ARM_LABELS[a]} vs {ARM_LABELS[b]}" for a, b in PRIMARY_COMPARISONS
    }
    family_idx = [
        i
        for i, (period, res) in enumerate(did_results)
        if period == Period.MONTH2.name and res.label in family_labels
    ]
    if family_idx:
        adjusted = bh_adjust([did_results[i][1].p_value for i in family_idx])
        for i, adj in zip(family_idx, adjusted):
            period, res = did_results[i]
            did_results[i] = (period, res.with_adjusted(adj))

    did_rows = [
        {
            "comparison": res.label,
            "period": period,
            "coefficient": res.coefficient,
            "std_error": res.std_error,
            "p_value": res.p_value,
            "adjusted_p": res.adjusted_p,
            "n_treated": res.n_treated,
            "n_control": res.n_control,
        }
        for period, res in did_results
    ]

    gee = gee_fit(log)
    gee_block = {
        "rho": gee.rho,
        "n_clusters": gee.n_clusters,
        "n_obs": gee.n_obs,
        "rows": [
            {
                "covariate": name,
                "estimate": float(gee.estimates[j]),
                "std_error": float(gee.std_errors[j]),
                "ci_low": float(gee.ci_low[j]),
                "ci_high": float(gee.ci_high[j]),
                "p_value": float(gee.p_values[j]),
            }
            for j, name in enumerate(gee.names)
        ],
    }

    return {
        "schema": RESULTS_SCHEMA,
        "period_summary": summary_rows,
        "did": did_rows,
        "gee": gee_block,
        "daily_means": daily_arm_means(log),
    }


def write_results(results: dict, out_dir: str | Path) -> None:
    """Emit table3.csv / table4.csv / table6.csv and results.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "table3.csv",
        ["arm", "period", "mean", "sd", "n"],
        (
            [r["arm"], r["period"], _fmt(r["mean"]), _fmt(r["sd"]), r["n"]]
            for r in results["period_summary"]
        ),
    )
    _write_csv(
        out / "table4.csv",
        ["comparison", "period", "coefficient", "std_error", "p_value", "adjusted_p"],
        (
            [
                r["comparison"],
                r["period"],
                _fmt(r["coefficient"]),
                _fmt(r["std_error"]),
                _fmt(r["p_value"]),
                "" if r["adjusted_p"] is None else _fmt(r["adjusted_p"]),
            ]
            for r in results["did"]
        ),
    )
    _write_csv(
        out / "table6.csv",
        ["covariate", "estimate", "std_error", "ci_low", "ci_high", "p_value"],
        (
            [
                r["covariate"],
                _fmt(r["estimate"]),
                _fmt(r["std_error"]),
                _fmt(r["ci_low"]),
                _fmt(r["ci_high"]),
                _fmt(r["p_value"]),
            ]
            for r in results["gee"]["rows"]
        ),
    )
    (out / "results.json").write_text(json.dumps(results, indent=2))


def write_report(results: dict, out_dir: str | Path, warn=print) -> None:
    """Emit plot-ready daily means and a plain-text summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    daily = results.get("daily_means", [])
    present_arms = {row["arm"] for row in daily}
    for arm in Arm:
        if arm.name not in present_arms:
            warn(f"warning: arm {arm.name} has no recorded study days; omitted")
    _write_csv(
        out / "daily_means.csv",
        ["arm", "day", "mean_steps", "n"],
        ([r["arm"], r["day"], _fmt(r["mean_steps"]), r["n"]] for r in daily),
    )

    lines = ["Step count by arm and period (mean [SD], n)", ""]
    for row in results["period_summary"]:
        lines.append(
            f"  {row['arm']:<8} {row['period']:<9} "
            f"{row['mean']:9.1f} [{row['sd']:.1f}], n={row['n']}"
        )
    lines += ["", "Change-score comparisons (coefficient, SE, p, adjusted p)", ""]
    for row in results["did"]:
        adj = "-" if row["adjusted_p"] is None else f"{row['adjusted_p']:.4f}"
        lines.append(
            f"  {row['comparison']:<22} {row['period']:<7} "
            f"B={row['coefficient']:8.1f}  SE={row['std_error']:7.1f}  "
            f"p={row['p_value']:.4f}  adj={adj}"
        )
    gee = results["gee"]
    lines += ["", f"Longitudinal model (exchangeable rho={gee['rho']:.4f})", ""]
    for row in gee["rows"]:
        lines.append(
            f"  {row['covariate']:<18} {row['estimate']:9.2f} "
            f"({row['ci_low']:9.2f}, {row['ci_high']:9.2f})  p={row['p_value']:.4f}"
        )
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
