import dataclasses

import numpy as np
import pytest

from kinshape import data, evaluation
from kinshape.errors import ConfigError
from kinshape.network import TrainConfig

FAST = TrainConfig(epochs=15, hidden_dims=(32, 8))


@pytest.fixture(scope="module")
def samples():
    return data.generate_synthetic(data.SynthConfig(family_count=40, folds=4, seed=2))


@pytest.fixture(scope="module")
def report(samples):
    return evaluation.cross_validate(samples, FAST, 4)


def test_report_fields(report):
    assert len(report.per_fold_accuracy) == 4
    assert abs(report.mean_accuracy - np.mean(report.per_fold_accuracy)) <= 1e-12
    for name, folds in report.per_fold_branch_accuracy.items():
        assert abs(report.branch_accuracies[name] - np.mean(folds)) <= 1e-12
    assert report.branch_accuracies["fused"] == report.mean_accuracy
    assert set(report.per_relation_accuracy) == {"synthetic"}
    assert all(0.0 <= a <= 1.0 for a in report.per_fold_accuracy)


def test_report_serialisation(report):
    text = report.to_text()
    assert text.startswith("[summary]\nk=4\n")
    assert f"mean_accuracy={report.mean_accuracy!r}" in text
    assert '"epochs": 15' in report.to_json()


def test_rerun_is_identical(samples, report):
    again = evaluation.cross_validate(samples, FAST, 4)
    assert again.to_json() == report.to_json()


def test_fold_mismatch(samples):
    with pytest.raises(ConfigError):
        evaluation.cross_validate(samples, FAST, 5)
    with pytest.raises(ConfigError):
        evaluation.cross_validate([dataclasses.replace(s, fold=None) for s in samples], FAST, 4)
    with pytest.raises(ConfigError):
        evaluation.cross_validate(samples, FAST, 1)


def test_leave_one_family_out():
    small = data.generate_synthetic(data.SynthConfig(family_count=6, folds=6))
    rep = evaluation.cross_validate(small, TrainConfig(epochs=2, hidden_dims=(4,)), 6)
    assert len(rep.per_fold_accuracy) == 6
    assert all(a in (0.0, 0.5, 1.0) for a in rep.per_fold_accuracy)


@pytest.mark.slow
def test_ablation_tracks_the_informative_cue():
    shape_only = data.generate_synthetic(
        data.SynthConfig(family_count=120, folds=3, family_deformation_scale=0.25, appearance_heritability=0.0)
    )
    table = evaluation.ablation(shape_only, TrainConfig(), 3)
    assert table["shape-only"] > table["appearance-only"] + 0.25
    assert table["appearance-only"] < 0.65

    app_only = data.generate_synthetic(
        data.SynthConfig(family_count=120, folds=3, family_deformation_scale=0.0, appearance_heritability=0.8)
    )
    table = evaluation.ablation(app_only, TrainConfig(), 3)
    assert table["appearance-only"] > table["shape-only"] + 0.25
    assert table["shape-only"] < 0.65
    assert evaluation.ablation_text(table).splitlines()[0].startswith("appearance-only=")
