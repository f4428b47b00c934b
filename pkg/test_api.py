"""
Endpoint tests for the cross-validated risk API, run in-process with FastAPI's TestClient
"""

import math

import pytest
from fastapi.testclient import TestClient

from main import app, settings

client = TestClient(app)

CSV = "x1,y\n" + "\n".join(f"{i * 0.25:.2f},{(i * 3) % 7 * 0.5:.2f}" for i in range(16)) + "\n"


def test_root():
    response = client.get("/")
    assert response.status_code == 200
    assert "message" in response.json()


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy"}


def test_analyze_upload():
    response = client.post(
        "/analyze",
        params={"K": 2, "model": "ridge(0.5)", "alpha": 0.1},
        files={"file": ("data.csv", CSV, "text/csv")},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["n"] == 16
    assert body["model"] == "ridge(0.5)"
    assert body["method"] == "ridge-woodbury"
    assert body["ci_lower"] <= body["cv_risk"] <= body["ci_upper"]


def test_analyze_half_sample_center():
    response = client.post(
        "/analyze",
        params={"K": 2, "model": "mean", "center": "half_cv"},
        files={"file": ("data.csv", CSV, "text/csv")},
    )
    assert response.status_code == 200
    assert response.json()["method"] == "generic-refit"


def test_analyze_small_odd_upload():
    # five rows: the half sample holds two, so every half-sample fold and training set is a single row
    response = client.post(
        "/analyze",
        params={"K": 2, "model": "mean"},
        files={"file": ("small.csv", "x1\n0.5\n1.5\n-0.2\n0.9\n2.2\n", "text/csv")},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["n"] == 5
    assert body["dropped_rows"] == 1


def test_analyze_rejects_more_folds_than_half_sample_rows():
    # the half sample holds two rows, fewer than K = 4 folds
    response = client.post(
        "/analyze",
        params={"K": 4, "model": "mean"},
        files={"file": ("loo.csv", "x1\n0\n1\n2\n3\n", "text/csv")},
    )
    assert response.status_code == 422
    assert response.json()["error"] == "INVALID_ARGUMENT"


def test_analyze_parse_error():
    response = client.post("/analyze", files={"file": ("bad.csv", "x1,y\n1,2\n3,oops\n", "text/csv")})
    assert response.status_code == 400
    body = response.json()
    assert body["error"] == "PARSE_ERROR"
    assert body["details"] == [{"line": 3, "column": "y"}]


def test_analyze_unknown_model():
    response = client.post(
        "/analyze", params={"model": "svm"}, files={"file": ("data.csv", CSV, "text/csv")}
    )
    assert response.status_code == 422
    assert response.json()["error"] == "INVALID_ARGUMENT"


def test_analyze_rejects_bad_query():
    response = client.post("/analyze", params={"K": 1}, files={"file": ("data.csv", CSV, "text/csv")})
    assert response.status_code == 422
    body = response.json()
    assert body["error"] == "Validation Error"
    assert any(d["field"].endswith("K") for d in body["details"])


def test_analyze_empty_upload():
    response = client.post("/analyze", files={"file": ("empty.csv", b"", "text/csv")})
    assert response.status_code == 400


def test_analyze_non_utf8_upload():
    response = client.post("/analyze", files={"file": ("latin.csv", "x1\n\xe9\n".encode("latin-1"), "text/csv")})
    assert response.status_code == 400


def test_analyze_too_large(monkeypatch):
    monkeypatch.setattr(settings, "max_upload_bytes", 10)
    response = client.post("/analyze", files={"file": ("data.csv", CSV, "text/csv")})
    assert response.status_code == 413


def test_ridge_asymptotics_default_problem():
    response = client.post("/asymptotics/ridge", json={})
    assert response.status_code == 200
    body = response.json()
    assert round(body["n_var_split"], 3) == 7.140
    assert round(body["n_var_cv"], 3) == 2.124
    assert round(body["speedup"], 3) == 3.362
    assert math.isclose(body["rate_factor"] ** 2, body["speedup"])


def test_ridge_asymptotics_without_penalty():
    response = client.post("/asymptotics/ridge", json={"lambda": 0.0, "K": 5})
    assert response.status_code == 200
    assert math.isclose(response.json()["speedup"], 5.0, rel_tol=1e-9)


def test_ridge_asymptotics_rejects_bad_design():
    problem = {"generator": {"covariance": [[1.0, 2.0], [2.0, 1.0]], "theta_opt": [1.0, 1.0]}}
    response = client.post("/asymptotics/ridge", json=problem)
    assert response.status_code == 422


def test_ridge_calibration():
    response = client.get("/asymptotics/ridge/calibration", params={"top": 3})
    assert response.status_code == 200
    results = response.json()
    assert len(results) == 3
    assert results[0]["problem"]["K"] == 2
    assert results[0]["score"] <= results[1]["score"]


@pytest.mark.parametrize(
    "class1, split, cv",
    [
        ({"family": "gamma", "shape": 10.0, "scale": 0.15}, 0.534, 0.326),
        ({"family": "gamma", "shape": 1.0, "scale": 10.0}, 0.438, 0.185),
    ],
)
def test_lda_asymptotics(class1, split, cv):
    problem = {"class1": class1, "class0": {"family": "gamma", "shape": 1.0, "scale": 1.0}}
    response = client.post("/asymptotics/lda", json=problem)
    assert response.status_code == 200
    body = response.json()
    assert abs(body["n_var_split"] - split) <= 0.002
    assert abs(body["n_var_cv"] - cv) <= 0.002
    assert body["swapped"] is False


def test_lda_asymptotics_relabels_classes():
    problem = {
        "class1": {"family": "gamma", "shape": 1.0, "scale": 1.0},
        "class0": {"family": "gamma", "shape": 10.0, "scale": 0.15},
    }
    body = client.post("/asymptotics/lda", json=problem).json()
    assert body["swapped"] is True
    assert body["notes"]


def test_lda_asymptotics_unknown_family():
    response = client.post("/asymptotics/lda", json={"class1": {"family": "cauchy"}})
    assert response.status_code == 422
