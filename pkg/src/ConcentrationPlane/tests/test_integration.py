"""
Integration Tests for the Calculation Plane
End-to-end service and library workflow validation
"""

import math

import pytest
from fastapi.testclient import TestClient

import canonical
import montecarlo
import norms
import orlicz
from main import app


client = TestClient(app)


class TestServiceEndpoints:
    """Calculator endpoints over HTTP"""

    def test_root_lists_features(self):
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["status"] == "operational"
        assert len(response.json()["features"]) == 6

    def test_health(self):
        body = client.get("/health").json()
        assert body["status"] == "healthy"
        assert body["ci_multiplier"] == 3.0

    def test_nv_worked_example(self):
        response = client.post("/nv", json={"phi": "quadratic", "t": [3.0, 4.0], "v": 2.0})
        assert response.status_code == 200
        body = response.json()
        assert body["value"] == pytest.approx(10.0)
        assert body["maximizer"] == pytest.approx([1.2, 1.6], rel=1e-6)

    def test_conjugate(self):
        body = client.post("/conjugate", json={"phi": "quadratic", "y": [2.0, -2.0]}).json()
        assert body["values"] == pytest.approx([2.0, 2.0])

    def test_general_tail_bound(self):
        body = client.post("/tail-bound/general", json={"t": [3.0, 4.0], "v": 1.0, "s": 1.0, "K": 2.0}).json()
        assert body["threshold"] == pytest.approx(20.0 * math.sqrt(2.0))
        assert body["regime"] == "general"

    def test_iid_tail_bound(self):
        body = client.post("/tail-bound/iid", json={"t": [1.0], "z": 1.0, "K1": 1.0, "K2": 1.0}).json()
        assert body["probability_bound"] == pytest.approx(math.exp(-0.5))

    def test_randomized_threshold(self):
        body = client.post("/randomized", json={"alpha": math.exp(-2.0), "tau": 1.0}).json()
        assert body["threshold"] == pytest.approx(8.0)
        assert body["expected_tightening"] == pytest.approx(-2.0)

    def test_functional_bound(self):
        body = client.post("/functional-bound", json={"coins": 6, "t": [1.0, 3.0, 6.0]}).json()
        assert body["B"] == pytest.approx(1.0, rel=1e-6)
        assert all(p["bound"] >= p["exact_tail"] for p in body["points"])

    def test_pca_with_candidates(self):
        body = client.post("/pca", json={"d": 4, "n": 100, "delta": math.exp(-1.0), "K3": 1.0, "psi1": 2.0}).json()
        assert body["value"] == pytest.approx(24 * math.e / 10)
        assert body["details"]["max"] == pytest.approx(0.2)

    def test_rademacher_with_regression(self):
        body = client.post("/rademacher", json={
            "n": 100, "delta": math.exp(-1.0), "L": 1.0, "norm_x": 1.0, "complexity": 0.5, "norm_y": 1.0
        }).json()
        assert body["value"] == pytest.approx(0.5 + 12 * math.e / 10)
        assert body["details"]["regression_bound"] == pytest.approx(1.2 * 2 * (1 + math.e))


class TestServiceErrors:
    """Library errors mapped to HTTP status codes"""

    def test_unknown_phi_is_bad_request(self):
        response = client.post("/nv", json={"phi": "cubic", "t": [1.0], "v": 1.0})
        assert response.status_code == 400

    def test_hypothesis_violation_is_unprocessable(self):
        response = client.post("/tail-bound/general", json={"t": [1.0], "v": 1.0, "s": 0.5, "K": 1.0})
        assert response.status_code == 422
        assert "s >= 1" in response.json()["detail"]

    def test_unknown_function(self):
        response = client.post("/functional-bound", json={"f": "median", "t": [1.0]})
        assert response.status_code == 400

    def test_invalid_campaign_body(self):
        response = client.post("/verify", json={"bound": "canonical-iid", "trials": 10})
        assert response.status_code == 422


class TestEndToEndWorkflow:
    """Calculators, sampling and verification composed"""

    def test_verify_endpoint_matches_library(self):
        config = {"bound": "canonical-iid", "t": [1.0, 2.0], "z_grid": [1.0, 3.0], "trials": 5000, "seed": 2}
        body = client.post("/verify", json=config).json()
        direct = montecarlo.verify_dominance(montecarlo.CampaignConfig(**config))
        assert body["summary"]["violations"] == direct.summary.violations == 0
        assert body["provenance"]["config_hash"] == direct.provenance.config_hash

    def test_solver_threshold_against_samples(self):
        t = [3.0, 4.0]
        report = canonical.tail_bound_general(canonical.solve_nv(orlicz.quadratic(), t, 2.0), 1.0, 1.0)
        y = montecarlo.sample_canonical(norms.gaussian(), t, 100_000, seed=3)
        estimate, _, high = montecarlo.empirical_tail(y, report.threshold)
        assert estimate <= high <= report.probability_bound

    def test_norm_feeds_iid_bound(self):
        model = norms.uniform()
        K1 = norms.tau_phi_norm(model, orlicz.conjugate_function(orlicz.quadratic())).value
        K2 = norms.exp_orlicz_norm(model).value
        report = canonical.tail_bound_iid(2.0, [1.0, 1.0, 1.0], orlicz.quadratic(), K1, K2)
        y = montecarlo.sample_canonical(model, [1.0, 1.0, 1.0], 50_000, seed=4)
        _, _, high = montecarlo.empirical_tail(y, 2.0)
        assert high <= report.probability_bound


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
