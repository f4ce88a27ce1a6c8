import numpy as np
import pytest

from fairvec.ckpt import Checkpoint, Tensor
from fairvec.corpus import CorpusSpec, gen_corpus
from fairvec.errors import DivergedTraining, EmptyGroup, IncompatibleCheckpoint
from fairvec.metrics import evaluate
from fairvec.arith import diff
from fairvec.features import featurize
from fairvec.toymodel import (
    Hyper,
    ToyModel,
    grad_check,
    init_model,
    loss_and_grads,
    predict,
    train,
    train_lora,
    train_subgroup,
)

DIM, HID = 128, 8


@pytest.fixture(scope="module")
def corpus():
    spec = CorpusSpec(
        attribute="g", proportions={"A": 0.5, "B": 0.5}, total=400, seed=13
    )
    return spec, *gen_corpus(spec)


def separable_examples(n=50):
    """Labels decided by a single token: trivially separable."""
    from fairvec.corpus import Example

    out = []
    for i in range(n):
        y = i % 2
        tokens = ("hot",) if y else ("cold",)
        out.append(Example(id=f"s{i}", tokens=tokens, y_true=y, groups={"g": "A"}))
    return out


def test_zero_epochs_returns_init():
    ex = separable_examples()
    ckpt = train(ex, Hyper(epochs=0, seed=7), dim=DIM, hidden=HID)
    init = init_model(DIM, HID, 7).to_checkpoint()
    assert ckpt.tensors == init.tensors


def test_training_determinism(corpus):
    _, tr, _ = corpus
    hy = Hyper(epochs=5, seed=13)
    a = train(tr, hy, dim=DIM, hidden=HID)
    b = train(tr, hy, dim=DIM, hidden=HID)
    assert a.tensors == b.tensors and a.metadata == b.metadata


def test_separable_data_fits():
    ex = separable_examples()
    ckpt = train(ex, Hyper(epochs=200, lr=0.5, seed=1), dim=DIM, hidden=HID)
    preds = predict(ckpt, ex)
    assert all(p.y_pred == p.y_true for p in preds)


def test_diverged_training():
    ex = separable_examples()
    nan_base = init_model(DIM, HID, 1).to_checkpoint()
    bad = dict(nan_base.tensors)
    bad["W1"] = Tensor.from_numpy(np.full((DIM, HID), np.nan, np.float32))
    with pytest.raises(DivergedTraining):
        train(ex, Hyper(epochs=1, seed=1), base=Checkpoint(tensors=bad))


def test_empty_dataset():
    with pytest.raises(EmptyGroup):
        train([], Hyper(epochs=1))


def test_subgroup_training(corpus):
    spec, tr, _ = corpus
    hy = Hyper(epochs=40, seed=13)
    base = init_model(DIM, HID, 13).to_checkpoint()
    sub = train_subgroup(tr, "g", "A", hy, dim=DIM, hidden=HID)
    assert sub.metadata["subset"] == "A"
    assert diff(sub, base).names() == ["W1", "b1", "b2", "w2"]

    own = [ex for ex in tr if ex.groups["g"] == "A"]
    acc_base = np.mean([p.y_pred == p.y_true for p in predict(base, own)])
    acc_sub = np.mean([p.y_pred == p.y_true for p in predict(sub, own)])
    assert acc_sub > acc_base


def test_subgroup_missing(corpus):
    _, tr, _ = corpus
    with pytest.raises(EmptyGroup):
        train_subgroup(tr, "g", "Nope", Hyper(epochs=1))


def test_degenerate_labels_metadata():
    from fairvec.corpus import Example

    ex = [
        Example(id=f"d{i}", tokens=("t",), y_true=1, groups={"g": "A"})
        for i in range(10)
    ]
    ckpt = train(ex, Hyper(epochs=1, seed=3), dim=DIM, hidden=HID)
    assert ckpt.metadata.get("degenerate_labels") == "true"


class TestLora:
    def test_zero_init_merged_equals_base(self, corpus):
        _, tr, _ = corpus
        base = init_model(DIM, HID, 13).to_checkpoint()
        merged, adapter = train_lora(tr, base, Hyper(epochs=0, seed=13))
        assert merged.tensors["W1"] == base.tensors["W1"]
        assert not adapter.B.any()

    def test_rank_bound(self, corpus):
        _, tr, _ = corpus
        base = init_model(DIM, HID, 13).to_checkpoint()
        merged, adapter = train_lora(tr, base, Hyper(epochs=10, seed=13), rank=4)
        delta = merged.tensors["W1"].to_numpy() - base.tensors["W1"].to_numpy()
        sv = np.linalg.svd(delta, compute_uv=False)
        assert int((sv > 1e-5 * sv[0]).sum()) <= 4
        np.testing.assert_allclose(delta, adapter.delta(), rtol=1e-4, atol=1e-6)

    def test_w1_frozen(self, corpus):
        _, tr, _ = corpus
        base = init_model(DIM, HID, 13).to_checkpoint()
        merged, adapter = train_lora(tr, base, Hyper(epochs=5, seed=13))
        reconstructed = base.tensors["W1"].to_numpy() + adapter.delta()
        np.testing.assert_allclose(
            merged.tensors["W1"].to_numpy(), reconstructed, rtol=1e-5, atol=1e-6
        )

    def test_bad_rank(self, corpus):
        _, tr, _ = corpus
        base = init_model(DIM, HID, 13).to_checkpoint()
        with pytest.raises(ValueError):
            train_lora(tr, base, Hyper(epochs=1), rank=0)


class TestPredict:
    def test_zero_weights_boundary(self):
        model = ToyModel(
            W1=np.zeros((DIM, HID), np.float32),
            b1=np.zeros(HID, np.float32),
            w2=np.zeros(HID, np.float32),
            b2=np.zeros((), np.float32),
        )
        ex = separable_examples(4)
        preds = predict(model.to_checkpoint(), ex)
        assert all(p.score == 0.5 and p.y_pred == 1 for p in preds)

    def test_incompatible_checkpoint(self):
        bad = Checkpoint(
            tensors={"weird": Tensor.from_numpy(np.zeros(3, np.float32))}
        )
        with pytest.raises(IncompatibleCheckpoint):
            predict(bad, separable_examples(2))

    def test_order_independent(self, corpus):
        _, tr, te = corpus
        ckpt = train(tr, Hyper(epochs=3, seed=13), dim=DIM, hidden=HID)
        fwd = {p.id: p.score for p in predict(ckpt, te)}
        rev = {p.id: p.score for p in predict(ckpt, te[::-1])}
        assert fwd == rev

    def test_matches_independent_forward_pass(self, corpus):
        _, tr, te = corpus
        ckpt = train(tr, Hyper(epochs=5, seed=13), dim=DIM, hidden=HID)
        model = ToyModel.from_checkpoint(ckpt)
        preds = predict(ckpt, te)
        for p, ex in zip(preds, te):
            x = featurize(ex.tokens, DIM).astype(np.float64)
            hidden = np.tanh(x @ model.W1.astype(np.float64) + model.b1)
            logit = float(hidden @ model.w2 + model.b2)
            score = 1.0 / (1.0 + np.exp(-logit))
            assert abs(p.score - score) < 1e-6

    def test_carries_group_annotations(self, corpus):
        _, tr, te = corpus
        ckpt = train(tr, Hyper(epochs=1, seed=13), dim=DIM, hidden=HID)
        report = evaluate(predict(ckpt, te), "g")
        assert {r.group for r in report.rows} == {"A", "B"}


class TestGradCheck:
    def test_random_data(self, corpus):
        _, tr, _ = corpus
        model = init_model(DIM, HID, 5)
        assert grad_check(model, tr[:40], eps=1e-4) < 1e-4

    def test_zero_loss_configuration(self):
        ex = separable_examples(20)
        ckpt = train(ex, Hyper(epochs=300, lr=0.5, seed=2), dim=DIM, hidden=HID)
        model = ToyModel.from_checkpoint(ckpt)
        assert grad_check(model, ex, eps=1e-4) < 1e-4

    def test_corrupted_gradient_detected(self, corpus):
        _, tr, _ = corpus
        model = init_model(DIM, HID, 5)
        from fairvec.features import featurize_all

        X = featurize_all(tr[:40], DIM).astype(np.float64)
        y = np.array([e.y_true for e in tr[:40]], np.float64)
        arrays = {n: a.astype(np.float64) for n, a in model.arrays().items()}
        _, grads = loss_and_grads(arrays, X, y)
        grads["w2"] = -grads["w2"]  # sign-flip one tensor
        assert grad_check(model, tr[:40], eps=1e-4, grads_override=grads) > 1e-2

    def test_eps_domain(self):
        model = init_model(DIM, HID, 5)
        with pytest.raises(ValueError):
            grad_check(model, separable_examples(4), eps=1e-2)
