"""Per-action reward models and the decision layer built on them.

The policy objective is reduced to empirical risk minimization: one
boosted-tree regressor per action, trained on that action's logged
records weighted by 1/propensity. The greedy action is the argmax of
the 12 predicted rewards, and the exploration rate is raised when
bootstrap refits disagree about the greedy choice too often.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .domain import ALL_ACTIONS, N_ACTIONS, Action, DecisionRecord, action_index
from .errors import ZeroPropensityError
from .features import FEATURE_NAMES, FeatureVector
from .gbrt import DEFAULT_BINS, GbrtEnsemble, fit_gbrt_arrays, quantile_bins

MODEL_SCHEMA = "pearl-reward-model/1"


def worker_count() -> int:
    """Worker parallelism, capped by the PEARL_THREADS env var."""
    env = os.environ.get("PEARL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class LearnerConfig:
    rounds: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    ensemble_count: int = 5
    epsilon_low: float = 0.7
    epsilon_high: float = 0.8
    disagreement_threshold: float = 0.3
    n_bins: int = DEFAULT_BINS

    def __post_init__(self):
        if not self.epsilon_low < self.epsilon_high:
            raise ValueError("epsilon_low must be below epsilon_high")
        for name in ("rounds", "max_depth", "learning_rate", "min_samples_leaf",
                     "ensemble_count", "epsilon_low", "disagreement_threshold",
                     "n_bins"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epsilon_high > 1.0:
            raise ValueError("epsilon_high must not exceed 1")

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_samples_leaf": self.min_samples_leaf,
            "ensemble_count": self.ensemble_count,
            "epsilon_low": self.epsilon_low,
            "epsilon_high": self.epsilon_high,
            "disagreement_threshold": self.disagreement_threshold,
            "n_bins": self.n_bins,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LearnerConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass
class RewardModel:
    """Twelve fitted ensembles, one per action, plus fit metadata.

    Actions without enough records get a constant model at the global
    mean reward (an ensemble with no trees).
    """

    ensembles: dict[int, GbrtEnsemble]
    global_mean: float
    n_features: int
    sample_counts: dict[int, int] = field(default_factory=dict)
    config: Optional[LearnerConfig] = None

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Predicted reward for every action; shape (n, 12)."""
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], N_ACTIONS))
        for a in range(N_ACTIONS):
            out[:, a] = self.ensembles[a].predict(X)
        return out

    def predict_one(self, x: FeatureVector) -> np.ndarray:
        return self.predict_matrix(x.as_array()[None, :])[0]

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "global_mean": self.global_mean,
            "n_features": self.n_features,
            "sample_counts": {str(a): c for a, c in self.sample_counts.items()},
            "config": self.config.to_dict() if self.config else None,
            "ensembles": {str(a): e.to_dict() for a, e in self.ensembles.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RewardModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"unsupported model schema: {d.get('schema')!r}")
        return cls(
            ensembles={int(a): GbrtEnsemble.from_dict(e) for a, e in d["ensembles"].items()},
            global_mean=float(d["global_mean"]),
            n_features=int(d["n_features"]),
            sample_counts={int(a): int(c) for a, c in d["sample_counts"].items()},
            config=LearnerConfig.from_dict(d["config"]) if d.get("config") else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "RewardModel":
        return cls.from_dict(json.loads(text))


def fit_gbrt(
    rows: Sequence[tuple[FeatureVector, float, float]], config: LearnerConfig
) -> GbrtEnsemble:
    """Fit one boosted ensemble on (features, target, weight) rows."""
    X = np.stack([fv.as_array() for fv, _, _ in rows])
    y = np.array([t for _, t, _ in rows], dtype=float)
    w = np.array([wt for _, _, wt in rows], dtype=float)
    return fit_gbrt_arrays(
        X,
        y,
        w,
        rounds=config.rounds,
        learning_rate=config.learning_rate,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        n_bins=config.n_bins,
    )


def _constant_ensemble(value: float, n_features: int) -> GbrtEnsemble:
    return GbrtEnsemble(base_score=value, learning_rate=1.0, trees=[], n_features=n_features)


def _decision_arrays(
    history: Sequence[DecisionRecord],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    X = np.stack([d.features.as_array() for d in history])
    y = np.array([d.reward for d in history], dtype=float)
    p = np.array([d.propensity for d in history], dtype=float)
    a = np.array([action_index(d.action) for d in history], dtype=np.int64)
    return X, y, p, a


def fit_reward_model_arrays(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    actions: np.ndarray,
    config: LearnerConfig = LearnerConfig(),
    binned: Optional[np.ndarray] = None,
    edges: Optional[list[np.ndarray]] = None,
) -> RewardModel:
    """Array-level fit; ``binned``/``edges`` may be shared across refits."""
    if binned is None or edges is None:
        binned, edges = quantile_bins(X, config.n_bins)
    global_mean = float(y.mean())

    def fit_action(a: int) -> tuple[GbrtEnsemble, int]:
        idx = np.nonzero(actions == a)[0]
        if idx.size < config.min_samples_leaf:
            return _constant_ensemble(global_mean, X.shape[1]), int(idx.size)
        ens = fit_gbrt_arrays(
            X[idx],
            y[idx],
            w[idx],
            rounds=config.rounds,
            learning_rate=config.learning_rate,
            max_depth=config.max_depth,
            min_samples_leaf=config.min_samples_leaf,
            n_bins=config.n_bins,
            binned=np.ascontiguousarray(binned[idx]),
            edges=edges,
        )
        return ens, int(idx.size)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(fit_action, range(N_ACTIONS)))
    else:
        fitted = [fit_action(a) for a in range(N_ACTIONS)]

    return RewardModel(
        ensembles={a: ens for a, (ens, _) in enumerate(fitted)},
        global_mean=global_mean,
        n_features=X.shape[1],
        sample_counts={a: n for a, (_, n) in enumerate(fitted)},
        config=config,
    )


def fit_reward_models(
    history: Sequence[DecisionRecord],
    config: LearnerConfig = LearnerConfig(),
    n_features: int = len(FEATURE_NAMES),
) -> RewardModel:
    """Fit the 12 per-action ensembles with inverse-propensity weights.

    Records still waiting on their reward window are skipped. Actions
    with fewer than ``min_samples_leaf`` records fall back to a constant
    prediction at the global mean reward.
    """
    usable = [d for d in history if d.reward is not None]
    if not usable:
        return RewardModel(
            ensembles={a: _constant_ensemble(0.0, n_features) for a in range(N_ACTIONS)},
            global_mean=0.0,
            n_features=n_features,
            sample_counts={a: 0 for a in range(N_ACTIONS)},
            config=config,
        )
    X, y, p, actions = _decision_arrays(usable)
    if (p <= 0).any():
        raise ZeroPropensityError("logged propensities must be strictly positive")
    return fit_reward_model_arrays(X, y, 1.0 / p, actions, config)


def bootstrap_reward_models(
    history: Sequence[DecisionRecord],
    config: LearnerConfig,
    rng: np.random.Generator,
    count: Optional[int] = None,
) -> list[RewardModel]:
    """Refit the reward model on ``count`` bootstrap resamples of the log.

    All refits share the original fit's bin edges; only the rows differ.
    """
    k = config.ensemble_count if count is None else count
    usable = [d for d in history if d.reward is not None]
    if not usable:
        return [fit_reward_models([], config) for _ in range(k)]
    X, y, p, actions = _decision_arrays(usable)
    w = 1.0 / p
    binned, edges = quantile_bins(X, config.n_bins)
    models = []
    n = len(usable)
    for _ in range(k):
        picks = rng.integers(n, size=n)
        models.append(
            fit_reward_model_arrays(
                X[picks], y[picks], w[picks], actions[picks], config,
                binned=binned[picks], edges=edges,
            )
        )
    return models


def greedy_action(model: RewardModel, x: FeatureVector) -> Action:
    """Argmax of the 12 predicted rewards; ties go to the lowest index."""
    preds = model.predict_one(x)
    return ALL_ACTIONS[int(np.argmax(preds))]


def is_value_estimate(
    history: Sequence[DecisionRecord],
    target_policy: Callable[[FeatureVector], Sequence[float]],
) -> float:
    """Importance-sampling estimate of the target policy's mean reward.

    ``target_policy`` maps a state to the 12 action probabilities the
    evaluated policy would use there.
    """
    if not history:
        raise ValueError("cannot evaluate on an empty history")
    total = 0.0
    for rec in history:
        if rec.propensity <= 0:
            raise ZeroPropensityError(
                f"record for day {rec.day} has propensity {rec.propensity}"
            )
        if rec.reward is None:
            raise ValueError(f"record for day {rec.day} has no reward yet")
        target = np.asarray(target_policy(rec.features), dtype=float)
        total += rec.reward * float(target[action_index(rec.action)]) / rec.propensity
    return total / len(history)


def ensemble_disagreement(
    models: Sequence[RewardModel], probe: Sequence[FeatureVector]
) -> float:
    """Fraction of probe states where the refits' greedy actions differ."""
    if len(models) < 2:
        raise ValueError("need at least 2 models to measure disagreement")
    if not probe:
        raise ValueError("probe set must be non-empty")
    X = np.stack([x.as_array() for x in probe])
    picks = np.stack([m.predict_matrix(X).argmax(axis=1) for m in models])
    return float((picks != picks[0]).any(axis=0).mean())


def choose_epsilon(disagreement: float, config: LearnerConfig) -> float:
    """More exploration when the model ensemble is unstable."""
    if not 0.0 <= disagreement <= 1.0:
        raise ValueError(f"disagreement rate must lie in [0, 1]: {disagreement}")
    if disagreement > config.disagreement_threshold:
        return config.epsilon_high
    return config.epsilon_low


def feature_importance(model: RewardModel) -> list[tuple[str, float]]:
    """Total split gain per feature, summed over all trees and actions.

    Scores are normalized to sum to 1 (all zero when no split was ever
    made) and returned in descending order.
    """
    gains = np.zeros(model.n_features)
    for ens in model.ensembles.values():
        gains += ens.feature_gains()
    total = gains.sum()
    if total > 0:
        gains = gains / total
    if model.n_features == len(FEATURE_NAMES):
        names = FEATURE_NAMES
    else:
        names = tuple(f"f{i}" for i in range(model.n_features))
    order = sorted(range(model.n_features), key=lambda i: (-gains[i], i))
    return [(names[i], float(gains[i])) for i in order]
