import base64

import pytest
from fastapi.testclient import TestClient

from rotorshell.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


class TestHealthAndListing:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_scenarios(self, client):
        r = client.get("/scenarios")
        assert r.status_code == 200
        assert "tube-squash" in r.json()["scenarios"]

    def test_describe(self, client):
        r = client.get("/scenarios/tube-squash")
        assert r.status_code == 200
        body = r.json()
        assert body["params"]["radius"]["default"] == 3.0

    def test_describe_unknown_404_with_suggestion(self, client):
        r = client.get("/scenarios/tube-sqash")
        assert r.status_code == 404
        assert "tube-squash" in r.json()["detail"]


class TestRunEndpoint:
    def test_run_sphere(self, client):
        r = client.post("/scenarios/run",
                        json={"scenario": "sphere-inflate", "grid": [8, 8]})
        assert r.status_code == 200
        body = r.json()
        assert body["scenario"] == "sphere-inflate"
        assert body["summary"]["fields"]["route_max_diff"] < 1e-6
        names = {a["name"] for a in body["artifacts"]}
        assert names == {"fields.csv", "summary.json"}
        csv_art = next(a for a in body["artifacts"] if a["name"] == "fields.csv")
        assert csv_art["encoding"] == "text"
        assert csv_art["content"].startswith("# schema=")

    def test_binary_artifacts_base64(self, client):
        r = client.post("/scenarios/run", json={"scenario": "stereo-synthetic"})
        assert r.status_code == 200
        pgm = next(a for a in r.json()["artifacts"] if a["name"] == "camera1.pgm")
        assert pgm["encoding"] == "base64"
        assert base64.b64decode(pgm["content"]).startswith(b"P5\n")

    def test_unknown_scenario_404(self, client):
        r = client.post("/scenarios/run", json={"scenario": "nope"})
        assert r.status_code == 404

    def test_unknown_param_422(self, client):
        r = client.post("/scenarios/run",
                        json={"scenario": "tube-squash",
                              "params": {"bogus": 1}, "grid": [4, 4]})
        assert r.status_code == 422
        assert "bogus" in r.json()["detail"]

    def test_bad_grid_422(self, client):
        r = client.post("/scenarios/run",
                        json={"scenario": "sphere-inflate", "grid": [0, 4]})
        assert r.status_code == 422

    def test_malformed_body_422(self, client):
        r = client.post("/scenarios/run", json={"grid": [4, 4]})
        assert r.status_code == 422
