import numpy as np
import pytest

from mixforge.core import make_rng
from mixforge.data import SynthSpec, synth_dataset
from mixforge.errors import ConfigError, EmptyInputError, TrainingDiverged
from mixforge.harness import (
    ALPHA_GRID,
    HIST_BINS,
    TinyModel,
    TrainConfig,
    bench,
    load_dataset,
    softmax,
    train,
)
from mixforge.policies import PolicyConfig

SMALL = "synth:n=128,k=2,h=8,w=8,test_n=64"


def finite_difference(model, x, y_i, y_j, lam, mix=None, eps=1e-4):
    theta = model.theta.copy()
    fd = np.empty_like(theta)
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += eps
        down[k] -= eps
        fd[k] = (model.loss_at(up, x, y_i, y_j, lam, mix) - model.loss_at(down, x, y_i, y_j, lam, mix)) / (2 * eps)
    return fd


def batch(seed, n=4, d=6, k=3):
    rng = make_rng(seed)
    x = rng.normal(size=(n, d))
    eye = np.eye(k)
    return x, eye[rng.integers(0, k, n)], eye[rng.integers(0, k, n)], rng.random(n)


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(p, [[1.0, 0.0], [0.5, 0.5]], atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    model = TinyModel(6, 3, hidden=5, seed=seed)
    x, y_i, y_j, lam = batch(seed)
    _, grad = model.loss_and_grad(x, y_i, y_j, lam)
    assert rel_error(grad, finite_difference(model, x, y_i, y_j, lam)) <= 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_manifold_gradient_matches_finite_differences(seed):
    model = TinyModel(6, 3, hidden=5, seed=seed)
    x, y_i, y_j, lam = batch(10 + seed)
    mix = (np.array([2, 3, 0, 0]), lam)
    _, grad = model.loss_and_grad(x, y_i, y_j, lam, mix)
    assert rel_error(grad, finite_difference(model, x, y_i, y_j, lam, mix)) <= 1e-3


def test_loss_at_restores_parameters():
    model = TinyModel(6, 3, hidden=5)
    before = model.theta.copy()
    x, y_i, y_j, lam = batch(0)
    model.loss_at(np.zeros_like(before), x, y_i, y_j, lam)
    np.testing.assert_array_equal(model.theta, before)


# ---------------------------------------------------------------------------
# dataset references
# ---------------------------------------------------------------------------


def test_load_synth_reference():
    train_ds, test_ds = load_dataset("synth:n=20,k=5,test_n=10,label_noise=0.5")
    assert len(train_ds) == 20 and len(test_ds) == 10
    # the test split is always label-clean
    assert test_ds.labels.tolist() == [i % 5 for i in range(10)]


@pytest.mark.parametrize("ref", ["synth:n", "synth:bogus=1", "imagenet:/x"])
def test_load_bad_reference(ref):
    with pytest.raises(ConfigError):
        load_dataset(ref)


def test_load_dir_reference(tmp_path):
    from mixforge.data import write_image_dir

    write_image_dir(synth_dataset(SynthSpec(n=4, h=4, w=4, k=2)), tmp_path / "train")
    write_image_dir(synth_dataset(SynthSpec(n=2, h=4, w=4, k=2), split="test"), tmp_path / "test")
    tr, te = load_dataset(f"dir:{tmp_path}")
    assert (len(tr), len(te), tr.num_classes) == (4, 2, 2)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def test_vanilla_lambda_is_point_mass():
    rep = train(TrainConfig(dataset=SMALL, epochs=1))
    assert rep.lambda_hist[: HIST_BINS - 1] == [0] * (HIST_BINS - 1)
    assert rep.lambda_hist[-1] == 128
    assert rep.lambda_mean == 1.0


def test_vanilla_learns_synthetic_task():
    rep = train(TrainConfig(dataset="synth:n=512,k=2", epochs=30))
    assert rep.test_top1 >= 0.95
    assert rep.train_loss[-1] < rep.train_loss[0]


def test_metrics_are_reproducible():
    cfg = TrainConfig(dataset=SMALL, policy=PolicyConfig("cutmix"), epochs=2, seed=3)
    assert train(cfg).metrics() == train(cfg).metrics()
    other = train(TrainConfig(dataset=SMALL, policy=PolicyConfig("cutmix"), epochs=2, seed=4))
    assert other.metrics() != train(cfg).metrics()


def test_manifold_training_runs():
    rep = train(TrainConfig(dataset=SMALL, policy=PolicyConfig("manifoldmix"), epochs=2))
    assert 0.0 < rep.lambda_mean < 1.0
    assert len(rep.train_loss) == 2


def test_median_last_and_history():
    rep = train(TrainConfig(dataset=SMALL, epochs=4, eval_every=2, median_last=3))
    assert [e for e, _ in rep.test_history] == [1, 2, 3]
    assert rep.test_top1 == float(np.median([a for _, a in rep.test_history]))


def test_training_diverged():
    with pytest.raises(TrainingDiverged) as err:
        train(TrainConfig(dataset=SMALL, epochs=3, lr=1e300))
    assert err.value.step >= 0


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"lr": 0.0}, {"median_last": -1}])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def test_bench_two_seeds_with_mean():
    table = bench([TrainConfig(dataset=SMALL, epochs=1)], trials=2)
    assert [r.seed for r in table.rows] == ["0", "1", "mean"]
    mean = table.rows[-1]
    want = np.mean([r.values["test_top1"] for r in table.rows[:2]])
    assert mean.values["test_top1"] == pytest.approx(want, abs=1e-15)
    assert mean.best_alpha


def test_bench_alpha_grid_marks_one_best():
    cfgs = [TrainConfig(dataset=SMALL, epochs=1, policy=PolicyConfig("mixup", a)) for a in ALPHA_GRID]
    table = bench(cfgs)
    assert len(table.rows) == 6
    marked = [r for r in table.rows if r.best_alpha]
    assert len(marked) == 1
    assert marked[0].values["test_top1"] == max(r.values["test_top1"] for r in table.rows)
    assert table.best_alpha() == {"mixup": marked[0].alpha}
    assert table.to_csv().splitlines()[0].startswith("policy,alpha,seed")
    assert "*" in table.to_text()


def test_bench_records_errors_and_continues():
    cfgs = [TrainConfig(dataset=SMALL, epochs=1, lr=1e300), TrainConfig(dataset=SMALL, epochs=1)]
    table = bench(cfgs)
    assert table.rows[0].error.startswith("TrainingDiverged")
    assert table.rows[1].error == "" and table.rows[1].best_alpha


def test_bench_empty():
    with pytest.raises(EmptyInputError):
        bench([])
