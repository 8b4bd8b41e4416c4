"""Endpoint tests for the stateless HTTP service."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from robtree.service.app import app
from robtree.tree import deserialize

client = TestClient(app)

SEP_ROWS = [[0.0], [0.1], [0.9], [1.0]]
SEP_LABELS = [0, 0, 1, 1]


def fit_payload(**overrides):
    payload = {
        "rows": SEP_ROWS,
        "labels": SEP_LABELS,
        "threat": {"tokens": ["0.1"]},
        "options": {"max_depth": 2, "seed": 0},
        "scale": False,
    }
    payload.update(overrides)
    return payload


class TestHealth:
    def test_ok(self):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert "version" in body


class TestFit:
    def test_smoke(self):
        resp = client.post("/fit", json=fit_payload())
        assert resp.status_code == 200
        body = resp.json()
        assert body["model"]["format"] == "robtree-model"
        assert body["model"]["tree"]["version"] == 1
        assert body["model"]["preprocess"] is None
        assert body["summary"]["depth"] == 1
        assert body["summary"]["n_leaves"] == 2
        assert body["summary"]["train_accuracy"] == 1.0
        assert body["summary"]["train_adversarial_accuracy"] == 1.0
        assert body["summary"]["fit_seconds"] >= 0
        assert body["config"]["seed"] == 0
        assert body["config"]["command"] == "fit"

    def test_scaling_stats_stored(self):
        rows = [[2.0], [4.0], [6.0], [8.0]]
        resp = client.post("/fit", json=fit_payload(rows=rows, scale=True))
        assert resp.status_code == 200
        pre = resp.json()["model"]["preprocess"]
        assert pre["feature_min"] == [2.0]
        assert pre["feature_max"] == [8.0]

    def test_rho_zero_equals_null_threat(self):
        a = client.post("/fit", json=fit_payload(
            threat={"tokens": ["0.1"]},
            options={"max_depth": 2, "seed": 7, "rho": 0.0}))
        b = client.post("/fit", json=fit_payload(
            threat=None, options={"max_depth": 2, "seed": 7}))
        assert a.json()["model"] == b.json()["model"]

    def test_bad_threat_token_names_feature(self):
        resp = client.post("/fit", json=fit_payload(threat={"tokens": ["?"]}))
        assert resp.status_code == 422
        assert "feature 0" in resp.json()["detail"]

    def test_label_length_mismatch(self):
        resp = client.post("/fit", json=fit_payload(labels=[0, 1]))
        assert resp.status_code == 422

    def test_ragged_rows(self):
        resp = client.post("/fit", json=fit_payload(rows=[[0.0], [0.1, 0.2]]))
        assert resp.status_code == 422

    def test_nonbinary_labels(self):
        resp = client.post("/fit", json=fit_payload(labels=[0, 1, 2, 1]))
        assert resp.status_code == 422


class TestEvaluate:
    def test_matches_fit_summary(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        resp = client.post("/evaluate", json={
            "model": fitted["model"],
            "rows": SEP_ROWS,
            "labels": SEP_LABELS,
        })
        assert resp.status_code == 200
        body = resp.json()
        assert body["accuracy"] == fitted["summary"]["train_accuracy"]
        assert (body["adversarial_accuracy"]
                == fitted["summary"]["train_adversarial_accuracy"])

    def test_zero_epsilon_collapses_to_accuracy(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        resp = client.post("/evaluate", json={
            "model": fitted["model"],
            "rows": [[0.2], [0.45], [0.8]],
            "labels": [0, 1, 1],
            "threat": {"tokens": [""], "attacked_classes": [0, 1]},
        })
        body = resp.json()
        assert body["adversarial_accuracy"] == body["accuracy"]

    def test_scaled_model_takes_raw_rows(self):
        rows = [[2.0], [3.0], [7.0], [8.0]]
        fitted = client.post("/fit", json=fit_payload(
            rows=rows, scale=True)).json()
        resp = client.post("/evaluate", json={
            "model": fitted["model"], "rows": rows, "labels": SEP_LABELS,
        })
        assert resp.json()["accuracy"] == 1.0

    def test_report_records(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        resp = client.post("/evaluate", json={
            "model": fitted["model"],
            "rows": [[0.45]],
            "labels": [0],
            "threat": {"tokens": ["0.2"]},
            "report": True,
        })
        body = resp.json()
        assert body["adversarial_accuracy"] == 0.0
        rec = body["records"][0]
        assert rec["misclassifiable"] is True
        assert rec["witness"] is not None

    def test_bare_tree_doc_accepted(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        resp = client.post("/evaluate", json={
            "model": fitted["model"]["tree"],
            "rows": SEP_ROWS,
            "labels": SEP_LABELS,
        })
        assert resp.status_code == 200

    def test_tampered_digest_rejected(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        doc = fitted["model"]
        doc["tree"]["params"]["threat_digest"] = "0" * 16
        resp = client.post("/evaluate", json={
            "model": doc, "rows": SEP_ROWS, "labels": SEP_LABELS,
        })
        assert resp.status_code == 422
        assert "digest" in resp.json()["detail"]

    def test_wrong_arity_rejected(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        resp = client.post("/evaluate", json={
            "model": fitted["model"], "rows": [[0.1, 0.2]], "labels": [0],
        })
        assert resp.status_code == 422


class TestCrossValidate:
    @staticmethod
    def cv_payload(**overrides):
        rng = np.random.default_rng(0)
        X = rng.random((40, 2))
        y = (X[:, 0] > 0.5).astype(int)
        payload = {
            "rows": X.tolist(),
            "labels": y.tolist(),
            "threat": {"tokens": ["0.05", "0.05"]},
            "options": {"max_depth": 2, "seed": 1},
            "folds": 4,
            "scale": True,
        }
        payload.update(overrides)
        return payload

    def test_fold_metrics_shape(self):
        resp = client.post("/cross-validate", json=self.cv_payload())
        assert resp.status_code == 200
        body = resp.json()
        assert [f["fold"] for f in body["folds"]] == [0, 1, 2, 3]
        for f in body["folds"]:
            assert 0.0 <= f["adversarial_accuracy"] <= f["accuracy"] <= 1.0
            assert f["fit_seconds"] >= 0
        assert body["config"]["folds"] == 4
        advs = [f["adversarial_accuracy"] for f in body["folds"]]
        assert body["mean_adversarial_accuracy"] == pytest.approx(
            np.mean(advs))
        assert body["std_adversarial_accuracy"] == pytest.approx(np.std(advs))

    def test_natural_training_with_separate_attack(self):
        resp = client.post("/cross-validate", json=self.cv_payload(
            threat=None, attack={"tokens": ["0.1", "0.1"]}))
        assert resp.status_code == 200
        body = resp.json()
        assert body["config"]["threat"] is None
        assert body["config"]["attack"]["tokens"] == ["0.1", "0.1"]

    def test_attack_defaults_to_training_threat(self):
        with_default = client.post(
            "/cross-validate", json=self.cv_payload()).json()
        explicit = client.post("/cross-validate", json=self.cv_payload(
            attack={"tokens": ["0.05", "0.05"]})).json()
        assert (with_default["mean_adversarial_accuracy"]
                == explicit["mean_adversarial_accuracy"])

    def test_small_class_rejected(self):
        resp = client.post("/cross-validate", json=self.cv_payload(
            rows=[[0.1], [0.2], [0.9]], labels=[0, 0, 1], folds=2))
        assert resp.status_code == 422


class TestGrid:
    @staticmethod
    def two_feature_model():
        rng = np.random.default_rng(3)
        X = rng.random((30, 2))
        y = (X[:, 0] > 0.5).astype(int)
        resp = client.post("/fit", json={
            "rows": X.tolist(), "labels": y.tolist(),
            "options": {"max_depth": 1}, "scale": False,
        })
        return resp.json()["model"]

    def test_grid_matches_predict(self):
        model = self.two_feature_model()
        resp = client.post("/grid", json={"model": model, "resolution": 3})
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["rows"]) == 9
        tree = deserialize(model["tree"])
        for x, yv, label in body["rows"]:
            assert int(tree.predict([[x, yv]])[0]) == label

    def test_resolution_one_is_center_point(self):
        model = self.two_feature_model()
        resp = client.post("/grid", json={"model": model, "resolution": 1})
        rows = resp.json()["rows"]
        assert len(rows) == 1
        assert rows[0][0] == pytest.approx(0.5, abs=0.5)

    def test_many_features_demand_indices(self):
        fitted = client.post("/fit", json={
            "rows": np.random.default_rng(1).random((20, 3)).tolist(),
            "labels": ([0, 1] * 10),
            "scale": False,
        }).json()
        resp = client.post("/grid", json={"model": fitted["model"]})
        assert resp.status_code == 422
        assert "indices" in resp.json()["detail"]
        ok = client.post("/grid", json={
            "model": fitted["model"], "resolution": 2, "features": [0, 2]})
        assert ok.status_code == 200
        assert ok.json()["feature_y"] == 2

    def test_single_feature_model_rejected(self):
        fitted = client.post("/fit", json=fit_payload()).json()
        resp = client.post("/grid", json={"model": fitted["model"]})
        assert resp.status_code == 422

    def test_duplicate_axes_rejected(self):
        model = self.two_feature_model()
        resp = client.post("/grid", json={
            "model": model, "features": [1, 1]})
        assert resp.status_code == 422

    def test_zero_resolution_rejected(self):
        model = self.two_feature_model()
        resp = client.post("/grid", json={"model": model, "resolution": 0})
        assert resp.status_code == 422
