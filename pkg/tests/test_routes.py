import pytest

from backend.app import create_app
from backend.routes.simulations import MAX_API_ROUNDS


@pytest.fixture
def client(runs_dir):
    app = create_app()
    app.config["TESTING"] = True
    return app.test_client()


def test_health(client):
    body = client.get("/api/health").get_json()
    assert body["success"]


def test_groupsize_query(client):
    res = client.get("/api/groupsize?beta=3&rho_log2=40&population=10000")
    assert res.status_code == 200
    assert res.get_json()["data"]["group_size"] == 405


@pytest.mark.parametrize("query", ["", "?beta=3", "?rho_log2=40"])
def test_groupsize_requires_parameters(client, query):
    res = client.get(f"/api/groupsize{query}")
    assert res.status_code == 400
    assert not res.get_json()["success"]


def test_groupsize_bad_beta(client):
    assert client.get("/api/groupsize?beta=x&rho_log2=40").status_code == 400


def test_simulation_lifecycle(client, small_scenario):
    res = client.post("/api/simulations", json=small_scenario().to_dict())
    assert res.status_code == 201
    data = res.get_json()["data"]
    assert data["safety_passed"]
    assert data["min_honest_round"] > 12
    run_id = data["run_id"]

    report = client.get(f"/api/simulations/{run_id}/report").get_json()["data"]
    assert report["safety_passed"]

    rounds = client.get(f"/api/simulations/{run_id}/rounds?limit=5").get_json()["data"]
    assert rounds["count"] == 5
    assert rounds["records"][0]["round"] == 1

    csv = client.get(f"/api/simulations/{run_id}/rounds?export=true")
    assert csv.status_code == 200
    assert csv.mimetype == "text/csv"
    assert csv.data.decode("utf-8").startswith("round,")


def test_simulation_rejects_bad_payloads(client):
    assert client.post("/api/simulations", data="nope", content_type="text/plain").status_code == 400
    assert client.post("/api/simulations", json={"universe_size": 3, "delta": 0}).status_code == 400
    too_long = {"universe_size": 4, "rounds": MAX_API_ROUNDS + 1}
    assert client.post("/api/simulations", json=too_long).status_code == 400


def test_unknown_run(client):
    assert client.get("/api/simulations/missing/report").status_code == 404
    assert client.get("/api/simulations/missing/rounds").status_code == 404


def test_wrong_method_is_json(client):
    res = client.get("/api/simulations")
    assert res.status_code == 405
    assert res.get_json()["success"] is False
