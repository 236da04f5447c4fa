"""Tests for the REST API"""
import math

import pytest
from fastapi.testclient import TestClient

import api
from config import API_PREFIX
from test_database import make_manifest


@pytest.fixture
def client(store, monkeypatch):
    monkeypatch.setattr(api, "get_store", lambda: store)
    return TestClient(api.app)


class TestSystem:
    def test_health(self, client):
        response = client.get(f"{API_PREFIX}/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "healthy"
        assert body["database_connected"]
        assert body["stored_runs"] == 0

    def test_stats(self, client, store):
        store.record_run(make_manifest())
        body = client.get(f"{API_PREFIX}/stats").json()
        assert body["total_runs"] == 1


class TestRuns:
    def test_missing_run(self, client):
        assert client.get(f"{API_PREFIX}/runs/absent").status_code == 404

    def test_listing_and_detail(self, client, store):
        store.record_run(make_manifest())
        listing = client.get(f"{API_PREFIX}/runs").json()
        assert listing["count"] == 1
        assert listing["data"][0]["run_id"] == "lemma4-abc-1"
        detail = client.get(f"{API_PREFIX}/runs/lemma4-abc-1").json()
        assert detail["config"]["seed"] == 7
        assert detail["outputs"][0]["rows"] == 3

    def test_records(self, client, store):
        store.record_run(make_manifest())
        store.store_records("lemma4-abc-1", "lemma4", [{"n": 12, "t": 0.5}])
        body = client.get(f"{API_PREFIX}/runs/lemma4-abc-1/records/lemma4").json()
        assert body["count"] == 1
        assert body["data"][0]["n"] == 12

    def test_records_bad_table(self, client, store):
        store.record_run(make_manifest())
        response = client.get(f"{API_PREFIX}/runs/lemma4-abc-1/records/runs")
        assert response.status_code == 400

    def test_records_of_missing_run(self, client):
        assert client.get(f"{API_PREFIX}/runs/absent/records/lemma4").status_code == 404


class TestOrderStats:
    def test_expected_max(self, client):
        response = client.get(f"{API_PREFIX}/order-stats/expected-max",
                              params={"law": "normal", "n": 2})
        assert response.status_code == 200
        assert response.json()["e_max"] == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-9)

    def test_unknown_law(self, client):
        response = client.get(f"{API_PREFIX}/order-stats/expected-max",
                              params={"law": "cauchy", "n": 2})
        assert response.status_code == 400

    def test_two_sided_check(self, client):
        response = client.get(f"{API_PREFIX}/order-stats/lemma4",
                              params={"law": "uniform", "n": 12, "t": 1.0})
        body = response.json()
        assert body["holds_right"] and body["holds_left"]
        assert body["p_right"] == 1.0

    def test_two_sided_check_needs_twelve(self, client):
        response = client.get(f"{API_PREFIX}/order-stats/lemma4",
                              params={"law": "normal", "n": 11, "t": 0.5})
        assert response.status_code == 422


class TestBodies:
    def test_expected_hull_support(self, client):
        response = client.post(f"{API_PREFIX}/bodies/support",
                               json={"spec_string": "gaussian:2", "n": 2, "direction": [1.0, 0.0]})
        assert response.status_code == 200
        assert response.json()["value"] == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-9)

    def test_structured_model(self, client):
        response = client.post(f"{API_PREFIX}/bodies/support", json={
            "model": {"kind": "uniform_box", "half_widths": [1.0, 1.0]},
            "n": 3, "direction": [0.0, 1.0]})
        assert response.json()["value"] == pytest.approx(0.5, abs=1e-12)

    def test_floating_body(self, client):
        response = client.post(f"{API_PREFIX}/bodies/support", json={
            "spec_string": "gaussian:2", "n": 100, "direction": [1.0, 0.0],
            "body": "floating", "delta": 0.1})
        assert response.json()["value"] == pytest.approx(1.2815516, abs=1e-6)

    def test_floating_default_delta_out_of_range(self, client):
        response = client.post(f"{API_PREFIX}/bodies/support", json={
            "spec_string": "gaussian:2", "n": 2, "direction": [1.0, 0.0], "body": "floating"})
        assert response.status_code == 400

    def test_wrong_direction_length(self, client):
        response = client.post(f"{API_PREFIX}/bodies/support",
                               json={"spec_string": "gaussian:2", "n": 5, "direction": [1.0]})
        assert response.status_code == 400

    def test_model_required(self, client):
        response = client.post(f"{API_PREFIX}/bodies/support",
                               json={"n": 5, "direction": [1.0, 0.0]})
        assert response.status_code == 400
