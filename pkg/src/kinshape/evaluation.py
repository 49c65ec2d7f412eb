"""Cross-validated evaluation and the appearance/shape/fused ablation."""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from kinshape.errors import ConfigError
from kinshape.network import TrainConfig, train

BRANCHES = ("appearance", "shape", "fused")
ABLATION_ROWS = {"appearance-only": "appearance", "shape-only": "shape", "fused": "fused"}


@dataclass
class EvalReport:
    per_fold_accuracy: list
    mean_accuracy: float
    per_relation_accuracy: dict
    branch_accuracies: dict
    per_fold_branch_accuracy: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    k: int = 0

    def to_dict(self):
        return {
            "k": self.k,
            "per_fold_accuracy": list(self.per_fold_accuracy),
            "mean_accuracy": self.mean_accuracy,
            "per_relation_accuracy": dict(sorted(self.per_relation_accuracy.items())),
            "branch_accuracies": dict(self.branch_accuracies),
            "per_fold_branch_accuracy": {k: list(v) for k, v in self.per_fold_branch_accuracy.items()},
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self):
        """``key=value`` lines grouped into ``[section]`` blocks."""
        lines = ["[summary]", f"k={self.k}", f"mean_accuracy={self.mean_accuracy!r}"]
        lines.append("[folds]")
        lines += [f"fold{i}={acc!r}" for i, acc in enumerate(self.per_fold_accuracy)]
        lines.append("[branches]")
        lines += [f"{name}={acc!r}" for name, acc in self.branch_accuracies.items()]
        lines.append("[relations]")
        lines += [f"{tag}={acc!r}" for tag, acc in sorted(self.per_relation_accuracy.items())]
        lines.append("[config]")
        lines += [f"{key}={json.dumps(val)}" for key, val in sorted(self.config.items())]
        return "\n".join(lines) + "\n"


def _check_folds(samples, k):
    if k < 2:
        raise ConfigError(f"need k >= 2 folds, got {k}")
    folds = [s.fold for s in samples]
    if any(f is None for f in folds):
        raise ConfigError("every sample needs a fold id; run assign_folds first")
    seen = set(folds)
    if not seen <= set(range(k)) or len(seen) != k:
        raise ConfigError(f"fold ids {sorted(seen)} do not match k={k}")
    return np.array(folds)


def _run_fold(samples, folds, fold, config):
    train_set = [s for s, f in zip(samples, folds) if f != fold]
    test_set = [s for s, f in zip(samples, folds) if f == fold]
    model = train(train_set, config).model
    probs = model.predict(test_set)
    labels = np.array([s.label for s in test_set])
    correct = {name: (p > 0.5) == labels for name, p in zip(BRANCHES, probs)}
    relations = [s.relation or "untagged" for s in test_set]
    return correct, relations


def cross_validate(samples, train_config=None, k=5, *, jobs=1):
    """Hold out each fold once, retraining from scratch every time.

    Fold accuracy is the fraction of held-out pairs whose thresholded
    (0.5) fused probability is correct. Folds run in ``jobs`` processes; the
    result does not depend on ``jobs``.
    """
    config = train_config or TrainConfig()
    folds = _check_folds(samples, k)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_fold, samples, folds, f, config) for f in range(k)]
            results = [fut.result() for fut in futures]
    else:
        results = [_run_fold(samples, folds, f, config) for f in range(k)]

    per_branch = {name: [float(np.mean(r[0][name])) for r in results] for name in BRANCHES}
    relation_hits = {}
    for correct, relations in results:
        for tag, hit in zip(relations, correct["fused"]):
            relation_hits.setdefault(tag, []).append(hit)
    per_fold = per_branch["fused"]
    return EvalReport(
        per_fold_accuracy=per_fold,
        mean_accuracy=float(sum(per_fold) / len(per_fold)),
        per_relation_accuracy={tag: float(np.mean(h)) for tag, h in relation_hits.items()},
        branch_accuracies={name: float(sum(v) / len(v)) for name, v in per_branch.items()},
        per_fold_branch_accuracy=per_branch,
        config=config.to_dict(),
        k=k,
    )


def ablation(samples, train_config=None, k=5, *, jobs=1):
    """Mean cross-validated accuracy for appearance-only, shape-only and fused.

    Branches are trained with separate losses, so one cross-validation run
    yields all three rows.
    """
    report = cross_validate(samples, train_config, k, jobs=jobs)
    return {row: report.branch_accuracies[branch] for row, branch in ABLATION_ROWS.items()}


def ablation_text(table):
    return "".join(f"{row}={acc!r}\n" for row, acc in table.items())
