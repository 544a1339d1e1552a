"""Tests for the HTTP service layer."""

from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from gtdp import Prevalence, TableProvider, bound_report, build_r3, info_bound
from gtdp.service import create_app

Q = 0.9


@pytest.fixture()
def client(tmp_path):
    with TestClient(create_app(TableProvider(tmp_path))) as test_client:
        yield test_client


@pytest.fixture(scope="module")
def reference_table():
    return build_r3(Prevalence(Q), 100)


class TestHealth:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        payload = response.json()
        assert payload["status"] == "ok"
        assert "version" in payload


class TestValue:
    def test_r3_value(self, client, reference_table):
        response = client.post(
            "/value", json={"procedure": "r3", "q": Q, "n": 100}
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["expected_tests"] == pytest.approx(
            reference_table.expected_tests(100), abs=1e-12
        )
        assert payload["first_test"] == reference_table.first_test_size(100)
        assert payload["info_bound"] == pytest.approx(
            info_bound(Prevalence(Q), 100), abs=1e-12
        )
        assert payload["from_cache"] is False
        assert payload["elapsed_ms"] >= 0.0

    def test_cache_flag_flips_on_repeat(self, client):
        first = client.post("/value", json={"procedure": "r3", "q": Q, "n": 60})
        second = client.post("/value", json={"procedure": "r3", "q": Q, "n": 60})
        assert first.json()["from_cache"] is False
        assert second.json()["from_cache"] is True

    def test_r1_windowed(self, client):
        response = client.post(
            "/value", json={"procedure": "r1", "q": Q, "n": 50, "windowed": True}
        )
        assert response.status_code == 200
        assert response.json()["expected_tests"] > 0.0

    def test_zero_population(self, client):
        response = client.post("/value", json={"procedure": "r3", "q": Q, "n": 0})
        assert response.status_code == 200
        payload = response.json()
        assert payload["expected_tests"] == 0.0
        assert payload["first_test"] == 0

    def test_domain_error_is_400(self, client):
        response = client.post("/value", json={"procedure": "r3", "q": 1.5, "n": 10})
        assert response.status_code == 400
        assert "q" in response.json()["detail"]

    def test_validation_error_is_422(self, client):
        assert client.post("/value", json={"procedure": "r3", "q": "x", "n": 10}).status_code == 422
        assert client.post("/value", json={"procedure": "r3", "q": Q, "n": -1}).status_code == 422
        assert client.post("/value", json={"procedure": "r9", "q": Q, "n": 10}).status_code == 422

    def test_memory_budget_is_507(self, client):
        response = client.post("/value", json={"procedure": "r1", "q": Q, "n": 100_000})
        assert response.status_code == 507
        assert "MiB" in response.json()["detail"]


class TestTable:
    def test_rows(self, client, reference_table):
        response = client.post(
            "/table", json={"procedure": "r3", "q": Q, "n_lo": 5, "n_hi": 8}
        )
        assert response.status_code == 200
        rows = response.json()["rows"]
        assert [row["n"] for row in rows] == [5, 6, 7, 8]
        for row in rows:
            assert row["expected_tests"] == pytest.approx(
                reference_table.expected_tests(row["n"]), abs=1e-12
            )
            assert row["first_test"] == reference_table.first_test_size(row["n"])

    def test_empty_range(self, client):
        response = client.post(
            "/table", json={"procedure": "r3", "q": Q, "n_lo": 9, "n_hi": 5}
        )
        assert response.status_code == 200
        assert response.json()["rows"] == []


class TestBounds:
    def test_matches_bound_report(self, client):
        response = client.post("/bounds", json={"q": Q, "n": 80})
        assert response.status_code == 200
        payload = response.json()
        report = bound_report(Prevalence(Q), 80)
        assert payload["individual"] == report.individual
        assert payload["dorfman_best"] == pytest.approx(report.dorfman_best, abs=1e-12)
        assert payload["dorfman_best_k"] == report.dorfman_best_k
        assert payload["info_bound"] == pytest.approx(report.info_bound, abs=1e-12)
        assert payload["n_max"] == report.n_max

    def test_tiny_population(self, client):
        response = client.post("/bounds", json={"q": Q, "n": 1})
        assert response.status_code == 200
        assert response.json()["dorfman_best_k"] == 1


class TestSimulate:
    def test_small_run(self, client):
        response = client.post(
            "/simulate",
            json={"procedure": "r3", "q": Q, "n": 40, "trials": 500, "seed": 3},
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["trials"] == 500
        assert payload["mean"] > 1.0
        assert payload["stderr"] > 0.0

    def test_deterministic(self, client):
        body = {"procedure": "r3", "q": Q, "n": 40, "trials": 400, "seed": 11}
        a = client.post("/simulate", json=body).json()
        b = client.post("/simulate", json={**body, "workers": 3}).json()
        assert a["mean"] == b["mean"]
        assert a["stderr"] == b["stderr"]

    def test_validation(self, client):
        assert (
            client.post(
                "/simulate",
                json={"procedure": "r3", "q": Q, "n": 40, "trials": 0, "seed": 0},
            ).status_code
            == 422
        )


class TestVerify:
    def test_single_claim(self, client):
        response = client.post("/verify", json={"only": ["nmax-9999"]})
        assert response.status_code == 200
        payload = response.json()
        assert payload["passed"] is True
        assert len(payload["claims"]) == 1
        claim = payload["claims"][0]
        assert claim["name"] == "nmax-9999"
        assert claim["computed"] == 92099.0
        assert claim["passed"] is True

    def test_unknown_claim_is_400(self, client):
        response = client.post("/verify", json={"only": ["no-such-claim"]})
        assert response.status_code == 400
        assert "no-such-claim" in response.json()["detail"]

    def test_negative_control(self, client):
        # With the wrong prevalence, the flagship claim must fail.
        response = client.post(
            "/verify", json={"only": ["r3-expected-6765"], "q": 0.5}
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["passed"] is False
        assert payload["claims"][0]["passed"] is False


class TestSessions:
    def create(self, client, n=4, procedure="r3"):
        response = client.post(
            "/sessions", json={"procedure": procedure, "q": Q, "n": n}
        )
        assert response.status_code == 200, response.text
        return response.json()

    def test_lifecycle(self, client):
        state = self.create(client)
        sid = state["session_id"]
        assert state["complete"] is False
        assert state["tests_used"] == 0
        assert state["pool_size"] == 4
        assert state["next_group_size"] >= 1

        fetched = client.get(f"/sessions/{sid}").json()
        assert fetched == state

        steps = 0
        while not state["complete"]:
            state = client.post(f"/sessions/{sid}/outcome", json={"result": "-"}).json()
            steps += 1
            assert steps <= 10, "all-negative session failed to terminate"
        assert state["tests_used"] == steps
        assert state["classified_good_count"] == 4
        assert state["classified_defective_count"] == 0
        assert state["next_group_size"] is None

        assert client.delete(f"/sessions/{sid}").status_code == 204
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_positive_walk_terminates(self, client):
        # Always answering "+" is inconsistent with any truth vector beyond a
        # point, but the protocol itself must keep terminating: positive
        # defective sets shrink strictly.
        state = self.create(client, n=6, procedure="r1")
        sid = state["session_id"]
        steps = 0
        while not state["complete"] and steps < 50:
            result = "+" if state["defective_set_size"] == 0 else "-"
            state = client.post(f"/sessions/{sid}/outcome", json={"result": result}).json()
            steps += 1
        assert state["complete"]

    def test_outcome_on_complete_session_is_400(self, client):
        state = self.create(client, n=0)
        assert state["complete"] is True
        assert state["tests_used"] == 0
        response = client.post(
            f"/sessions/{state['session_id']}/outcome", json={"result": "-"}
        )
        assert response.status_code == 400

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/outcome", json={"result": "+"}).status_code == 404
        assert client.delete("/sessions/nope").status_code == 404

    def test_bad_outcome_token_is_422(self, client):
        state = self.create(client)
        response = client.post(
            f"/sessions/{state['session_id']}/outcome", json={"result": "x"}
        )
        assert response.status_code == 422

    def test_label_strings(self, client):
        state = self.create(client, n=4)
        # q=0.9, n=4: the first recommended test pools several lowest labels
        assert state["next_group"].startswith("u1")
        assert state["pool"] == "u1-u4"
        assert state["classified_good"] == "(none)"

    def test_session_count_independent(self, client):
        first = self.create(client)
        second = self.create(client)
        assert first["session_id"] != second["session_id"]
        client.post(f"/sessions/{first['session_id']}/outcome", json={"result": "-"})
        unchanged = client.get(f"/sessions/{second['session_id']}").json()
        assert unchanged["tests_used"] == 0
