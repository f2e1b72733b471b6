import numpy as np
import pytest

from capseg import (
    SvmParams,
    kkt_violation,
    load_model,
    save_model,
    svm_predict,
    svm_train,
)
from capseg.errors import (
    CorruptModel,
    DimensionMismatch,
    NotFound,
    SingleClass,
    VersionMismatch,
)


def separable_blobs(rng, n=100, margin=2.0):
    half = n // 2
    a = rng.normal(0.0, 0.4, (half, 2)) - (1.0 + margin / 2)
    b = rng.normal(0.0, 0.4, (n - half, 2)) + (1.0 + margin / 2)
    x = np.vstack([a, b])
    y = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    return x, y


def xor_data(rng, n=200):
    x = rng.uniform(-1.0, 1.0, (n, 2))
    y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(int)
    x += rng.normal(0.0, 0.05, x.shape)
    return x, y


class TestTraining:
    def test_separable_blobs_linear(self, rng):
        x, y = separable_blobs(rng)
        model = svm_train(x, y, SvmParams(kernel="linear", c=1.0, seed=0))
        labels, _ = svm_predict(model, x)
        assert (labels == y).mean() == 1.0
        assert model.converged

    def test_xor_rbf(self, rng):
        x, y = xor_data(rng)
        model = svm_train(x, y, SvmParams(kernel="rbf", c=10.0, seed=0))
        labels, _ = svm_predict(model, x)
        assert (labels == y).mean() >= 0.95

    def test_single_class_rejected(self, rng):
        x = rng.random((10, 2))
        with pytest.raises(SingleClass):
            svm_train(x, np.ones(10, dtype=int), SvmParams())

    def test_kkt_residuals_within_tolerance(self, rng):
        params = SvmParams(kernel="rbf", c=10.0, tol=1e-3, seed=1)
        for maker in (separable_blobs, xor_data):
            x, y = maker(rng)
            model = svm_train(x, y, params)
            assert kkt_violation(model, x, y) <= 2 * params.tol

    def test_dual_constraint(self, rng):
        x, y = xor_data(rng)
        model = svm_train(x, y, SvmParams(kernel="rbf", c=10.0, seed=0))
        assert abs(model.dual_coefs.sum()) <= 1e-8

    def test_alphas_bounded(self, rng):
        x, y = xor_data(rng)
        c = 2.5
        model = svm_train(x, y, SvmParams(kernel="rbf", c=c, seed=0))
        mags = np.abs(model.dual_coefs)
        assert (mags > 0).all() and (mags <= c + 1e-12).all()

    def test_deterministic_model_bytes(self, rng, tmp_path):
        x, y = xor_data(rng)
        params = SvmParams(kernel="rbf", c=5.0, seed=42)
        save_model(svm_train(x, y, params), tmp_path / "a.model")
        save_model(svm_train(x, y, params), tmp_path / "b.model")
        assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()


class TestPrediction:
    def test_margin_sv_predicts_own_label(self, rng):
        x, y = separable_blobs(rng)
        model = svm_train(x, y, SvmParams(kernel="linear", c=1.0, seed=0))
        # margin support vectors (alpha < C) classify to their own side
        margin_svs = np.abs(model.dual_coefs) < model.c - 1e-9
        assert margin_svs.any()
        z = model.support_vectors[margin_svs]
        raw = z * model.scaler_std + model.scaler_mean
        labels, _ = svm_predict(model, raw)
        coefs = model.dual_coefs[margin_svs]
        assert (labels == (coefs > 0).astype(int)).all()

    def test_empty_input(self, rng):
        x, y = separable_blobs(rng)
        model = svm_train(x, y, SvmParams(kernel="linear", seed=0))
        labels, decision = svm_predict(model, np.zeros((0, 2)))
        assert labels.shape == (0,) and decision.shape == (0,)

    def test_order_invariance(self, rng):
        x, y = xor_data(rng)
        model = svm_train(x, y, SvmParams(kernel="rbf", c=10.0, seed=0))
        q = rng.uniform(-1, 1, (50, 2))
        perm = rng.permutation(50)
        labels, decision = svm_predict(model, q)
        labels_p, decision_p = svm_predict(model, q[perm])
        assert (labels_p == labels[perm]).all()
        assert (decision_p == decision[perm]).all()

    def test_wrong_width_rejected(self, rng):
        x, y = separable_blobs(rng)
        model = svm_train(x, y, SvmParams(kernel="linear", seed=0))
        with pytest.raises(DimensionMismatch):
            svm_predict(model, np.zeros((3, 5)))

    def test_selection_applied_at_predict(self, rng):
        x, y = separable_blobs(rng)
        wide = np.hstack([rng.random((x.shape[0], 3)), x])  # features at cols 3,4
        model = svm_train(
            x, y, SvmParams(kernel="linear", seed=0),
            selected=np.array([3, 4]), in_width=5,
        )
        labels, _ = svm_predict(model, wide)
        assert (labels == y).mean() == 1.0


class TestPersistence:
    def test_roundtrip_bit_exact(self, rng, tmp_path):
        x, y = xor_data(rng)
        model = svm_train(x, y, SvmParams(kernel="rbf", c=10.0, seed=3))
        save_model(model, tmp_path / "m.model")
        back = load_model(tmp_path / "m.model")
        for field in ("kernel", "c", "gamma", "tol", "max_passes", "seed",
                      "bias", "in_width", "trained_for", "converged"):
            assert getattr(back, field) == getattr(model, field)
        assert (back.support_vectors == model.support_vectors).all()
        assert (back.dual_coefs == model.dual_coefs).all()
        assert (back.scaler_mean == model.scaler_mean).all()
        assert (back.scaler_std == model.scaler_std).all()
        assert (back.selected == model.selected).all()
        q = rng.uniform(-1, 1, (100, 2))
        _, d1 = svm_predict(model, q)
        _, d2 = svm_predict(back, q)
        assert (d1 == d2).all()

    def test_missing_file(self, tmp_path):
        with pytest.raises(NotFound):
            load_model(tmp_path / "missing.model")

    def test_truncated_file(self, rng, tmp_path):
        x, y = separable_blobs(rng)
        model = svm_train(x, y, SvmParams(kernel="linear", seed=0))
        save_model(model, tmp_path / "m.model")
        data = (tmp_path / "m.model").read_bytes()
        (tmp_path / "t.model").write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptModel):
            load_model(tmp_path / "t.model")

    def test_version_mismatch(self, rng, tmp_path):
        x, y = separable_blobs(rng)
        model = svm_train(x, y, SvmParams(kernel="linear", seed=0))
        save_model(model, tmp_path / "m.model")
        text = (tmp_path / "m.model").read_text()
        (tmp_path / "v9.model").write_text(
            text.replace("capseg-svm v1", "capseg-svm v9", 1)
        )
        with pytest.raises(VersionMismatch):
            load_model(tmp_path / "v9.model")

    def test_garbage_file(self, tmp_path):
        (tmp_path / "g.model").write_text("who knows what this is\n")
        with pytest.raises(CorruptModel):
            load_model(tmp_path / "g.model")
