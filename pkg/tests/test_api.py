"""HTTP surface: authentication, idempotency, and view fidelity."""

import io
import tarfile
import threading
import time

import pytest
from fastapi.routing import APIRoute
from fastapi.testclient import TestClient

from multiblock.bench import BisectionBench
from multiblock.clock import VirtualClock
from multiblock.cluster import Cluster
from multiblock.errors import CorruptSnapshot
from multiblock.service.app import IDEMPOTENCY_HEADER, create_app, ensure_admin

from helpers import pingpong_program

ADMIN_TOKEN = "test-admin-token"

PUBLIC = {
    ("GET", "/health"),
    ("POST", "/applications"),
    ("GET", "/applications/{app_id}"),
}
USER_OK = {
    ("GET", "/applications"),
    ("POST", "/applications/{app_id}/reconfirm"),
    ("POST", "/applications/{app_id}/finish"),
    ("POST", "/jobs"),
    ("GET", "/jobs"),
    ("GET", "/jobs/{job_id}"),
    ("GET", "/jobs/{job_id}/results"),
    ("GET", "/jobs/{job_id}/download"),
}
ADMIN_ONLY = {
    ("POST", "/applications/{app_id}/review"),
    ("POST", "/applications/{app_id}/activate"),
    ("GET", "/fleet"),
    ("POST", "/nodes"),
    ("POST", "/nodes/{node_id}/power"),
    ("GET", "/rings"),
    ("GET", "/rings/{ring_id}/trace"),
    ("GET", "/rings/{ring_id}/counters"),
    ("POST", "/bench/run"),
    ("GET", "/bench"),
    ("GET", "/bench/{bench_id}"),
    ("GET", "/bench/{bench_id}/report"),
    ("POST", "/tokens"),
    ("GET", "/state"),
    ("POST", "/clock/advance"),
}


def auth(token):
    return {"Authorization": f"Bearer {token}"}


@pytest.fixture
def api(tmp_path):
    cluster = Cluster(state_path=tmp_path / "state.json",
                      clock=VirtualClock(1_000.0))
    app = create_app(cluster)
    ensure_admin(cluster, token=ADMIN_TOKEN)
    with TestClient(app) as client:
        yield client, cluster
    cluster.close()


def user_token(client, username="rizal"):
    r = client.post("/tokens", headers=auth(ADMIN_TOKEN),
                    json={"username": username, "role": "user"})
    assert r.status_code == 201
    return r.json()["token"]


def add_nodes(client, members=2):
    r = client.post("/nodes", headers=auth(ADMIN_TOKEN),
                    json={"name": "gateway", "internal_addr": "10.0.0.1",
                          "external_addr": "203.0.113.1", "is_master": True})
    assert r.status_code == 201
    master_id = r.json()["node_id"]
    r = client.post(f"/nodes/{master_id}/power", headers=auth(ADMIN_TOKEN),
                    json={"power": "on"})
    assert r.status_code == 200
    ids = []
    for i in range(members):
        r = client.post("/nodes", headers=auth(ADMIN_TOKEN),
                        json={"name": f"n{i + 1:02d}",
                              "internal_addr": f"10.0.0.{i + 2}"})
        assert r.status_code == 201
        node = r.json()
        ids.append(node["node_id"])
        r = client.post(f"/nodes/{node['node_id']}/power",
                        headers=auth(ADMIN_TOKEN), json={"power": "on"})
        assert r.status_code == 200
    return ids


def approved_app(client, node_ids, username="rizal"):
    r = client.post("/applications",
                    json={"username": username, "contact": "r@example.org",
                          "job_description": "numerics",
                          "requested_node_count": len(node_ids)})
    assert r.status_code == 201
    app_id = r.json()["app_id"]
    r = client.post(f"/applications/{app_id}/review", headers=auth(ADMIN_TOKEN),
                    json={"approve": True, "node_ids": node_ids,
                          "period": [0.0, 1e12]})
    assert r.status_code == 200
    return app_id, r.json()["user_token"]


def active_app(client, node_ids, username="rizal"):
    app_id, token = approved_app(client, node_ids, username)
    r = client.post(f"/applications/{app_id}/reconfirm", headers=auth(token),
                    json={"accept": True})
    assert r.status_code == 200
    r = client.post(f"/applications/{app_id}/activate",
                    headers=auth(ADMIN_TOKEN), json={})
    assert r.status_code == 200
    return app_id, token


# -- authentication --------------------------------------------------------

def test_every_route_is_classified(api):
    client, _ = api
    routes = {(m, r.path) for r in client.app.routes
              if isinstance(r, APIRoute) for m in r.methods
              if m not in ("HEAD", "OPTIONS")}
    assert routes == PUBLIC | USER_OK | ADMIN_ONLY


def probe(client, method, path, token=None):
    path = path.format(app_id="x", job_id="x", node_id="x", ring_id="x",
                       bench_id="x")
    headers = auth(token) if token else {}
    if method == "GET":
        return client.get(path, headers=headers)
    return client.post(path, headers=headers, json={})


def test_anonymous_requests_rejected_everywhere_else(api):
    client, _ = api
    for method, path in USER_OK | ADMIN_ONLY:
        r = probe(client, method, path)
        assert r.status_code == 401, f"{method} {path} -> {r.status_code}"
        assert r.json()["error"]["code"] == "UnknownPrincipal"


def test_user_tokens_cannot_reach_admin_routes(api):
    client, _ = api
    token = user_token(client)
    for method, path in ADMIN_ONLY:
        r = probe(client, method, path, token)
        assert r.status_code == 403, f"{method} {path} -> {r.status_code}"
    for method, path in USER_OK:
        r = probe(client, method, path, token)
        assert r.status_code not in (401, 403), \
            f"{method} {path} -> {r.status_code}"


def test_garbage_token_is_unknown(api):
    client, _ = api
    r = client.get("/state", headers=auth("not-a-token"))
    assert r.status_code == 401


# -- idempotency -----------------------------------------------------------

def test_review_replay_allocates_once(api):
    client, cluster = api
    node_ids = add_nodes(client)
    r = client.post("/applications",
                    json={"username": "rizal", "contact": "",
                          "job_description": "numerics",
                          "requested_node_count": 2})
    app_id = r.json()["app_id"]
    body = {"approve": True, "node_ids": node_ids, "period": [0.0, 1e12]}
    key = {IDEMPOTENCY_HEADER: "review-1"}
    first = client.post(f"/applications/{app_id}/review",
                        headers=auth(ADMIN_TOKEN) | key, json=body)
    second = client.post(f"/applications/{app_id}/review",
                         headers=auth(ADMIN_TOKEN) | key, json=body)
    assert first.status_code == second.status_code == 200
    assert first.json() == second.json()
    assert second.headers.get("Idempotency-Replayed") == "true"
    assert "Idempotency-Replayed" not in first.headers
    snap = cluster.fleet.fleet_status()
    assert len(snap.blocks) == 1
    users = [p for p in cluster.auth.list_principals() if p.role == "user"]
    assert len(users) == 1


def test_replay_is_scoped_to_the_key(api):
    client, _ = api
    node_ids = add_nodes(client)
    app_id, _ = approved_app(client, node_ids)
    # Same request without a key is a fresh call and hits the state machine.
    r = client.post(f"/applications/{app_id}/review", headers=auth(ADMIN_TOKEN),
                    json={"approve": True, "node_ids": node_ids,
                          "period": [0.0, 1e12]})
    assert r.status_code == 409


# -- views -----------------------------------------------------------------

def test_fleet_view_matches_registry(api):
    client, cluster = api
    add_nodes(client, members=3)
    r = client.get("/fleet", headers=auth(ADMIN_TOKEN))
    assert r.status_code == 200
    view = r.json()
    snap = cluster.fleet.fleet_status()
    assert view["revision"] == snap.revision
    by_name = {n["name"]: n for n in view["nodes"]}
    assert set(by_name) == {n.name for n in snap.nodes}
    for node in snap.nodes:
        got = by_name[node.name]
        assert got["power"] == node.power
        assert got["is_master"] == node.is_master
        assert got["block_id"] == node.block_id


def test_application_view_hides_addresses(api):
    client, _ = api
    node_ids = add_nodes(client)
    app_id, _ = approved_app(client, node_ids)
    r = client.get(f"/applications/{app_id}")
    assert r.status_code == 200
    view = r.json()
    assert view["state"] == "Approved"
    for assigned in view["assigned_nodes"]:
        assert set(assigned) == {"name", "process_cap"}
    assert "10.0.0" not in r.text


# -- jobs over HTTP --------------------------------------------------------

def test_job_flow_and_download(api):
    client, _ = api
    node_ids = add_nodes(client)
    app_id, token = active_app(client, node_ids)
    r = client.post("/jobs", headers=auth(token),
                    json={"app_id": app_id, "program": pingpong_program(1024),
                          "n_procs": 2, "program_name": "pingpong"})
    assert r.status_code == 201
    job_id = r.json()["job_id"]
    deadline = time.monotonic() + 15
    while time.monotonic() < deadline:
        r = client.get(f"/jobs/{job_id}", headers=auth(token))
        if r.json()["state"] == "Finished":
            break
        time.sleep(0.02)
    assert r.json()["state"] == "Finished"
    assert r.json()["owner"] == "rizal"

    r = client.get(f"/jobs/{job_id}/results", headers=auth(token))
    ranks = r.json()["ranks"]
    assert [rank["status"] for rank in ranks] == ["ok", "ok"]
    r = client.get(f"/jobs/{job_id}/download", headers=auth(token))
    assert r.status_code == 200
    assert r.headers["content-type"] == "application/x-tar"
    with tarfile.open(fileobj=io.BytesIO(r.content)) as tar:
        names = sorted(tar.getnames())
        assert names == [f"{job_id}/rank-0.txt", f"{job_id}/rank-1.txt"]
        text = tar.extractfile(names[0]).read().decode()
    assert f"# job {job_id} rank 0" in text
    assert "round trip complete" in text


def test_jobs_are_invisible_across_users(api):
    client, _ = api
    node_ids = add_nodes(client)
    app_id, token = active_app(client, node_ids)
    r = client.post("/jobs", headers=auth(token),
                    json={"app_id": app_id, "program": pingpong_program(64),
                          "n_procs": 2})
    job_id = r.json()["job_id"]
    other = user_token(client, "eve")
    assert client.get("/jobs", headers=auth(other)).json() == []
    r = client.get(f"/jobs/{job_id}", headers=auth(other))
    assert r.status_code == 404


def test_job_needs_active_application(api):
    client, _ = api
    node_ids = add_nodes(client)
    app_id, token = approved_app(client, node_ids)
    r = client.post("/jobs", headers=auth(token),
                    json={"app_id": app_id, "program": pingpong_program(1024),
                          "n_procs": 2})
    assert r.status_code == 400
    assert "Active" in r.json()["error"]["message"]


# -- benchmarks over HTTP --------------------------------------------------

def test_bench_single_mode_end_to_end(api):
    client, _ = api
    node_ids = add_nodes(client)
    app_id, _ = active_app(client, node_ids)
    block = client.get(f"/applications/{app_id}").json()["assigned_block"]
    r = client.post("/bench/run", headers=auth(ADMIN_TOKEN),
                    json={"mode": "single", "block_a": block,
                          "sizes": [1024, 4096], "reps": 3})
    assert r.status_code == 202
    bench_id = r.json()["bench_id"]
    deadline = time.monotonic() + 15
    state = "Running"
    while time.monotonic() < deadline and state == "Running":
        state = client.get(f"/bench/{bench_id}",
                           headers=auth(ADMIN_TOKEN)).json()["state"]
        time.sleep(0.02)
    assert state == "Finished"
    report = client.get(f"/bench/{bench_id}/report",
                        headers=auth(ADMIN_TOKEN)).json()
    assert report["degradation_per_size"] is None
    assert len(report["curves"]) == 1
    assert report["csv"].startswith(
        "scenario,size_bytes,bandwidth_Bps,stddev,reps\n")


class GatedBench:
    """Stands in for the benchmark so Running-state behaviour is testable."""

    gate = threading.Event()
    check_inputs = staticmethod(BisectionBench.check_inputs)

    def __init__(self, rings, jobs):
        pass

    def run_comparison(self, block_a, block_b, sizes, reps):
        if not GatedBench.gate.wait(10):
            raise TimeoutError("test gate never opened")
        raise RuntimeError("synthetic failure")


def test_bench_running_and_failed_reports(api, monkeypatch):
    client, _ = api
    monkeypatch.setattr("multiblock.service.app.BisectionBench", GatedBench)
    GatedBench.gate.clear()
    r = client.post("/bench/run", headers=auth(ADMIN_TOKEN),
                    json={"block_a": "a", "block_b": "b", "sizes": [1024],
                          "reps": 3})
    assert r.status_code == 202
    bench_id = r.json()["bench_id"]
    r = client.get(f"/bench/{bench_id}/report", headers=auth(ADMIN_TOKEN))
    assert r.status_code == 409
    # Only one benchmark may run at a time.
    r = client.post("/bench/run", headers=auth(ADMIN_TOKEN),
                    json={"block_a": "a", "block_b": "b", "sizes": [1024],
                          "reps": 3})
    assert r.status_code == 409

    GatedBench.gate.set()
    deadline = time.monotonic() + 10
    state = "Running"
    while time.monotonic() < deadline and state == "Running":
        state = client.get(f"/bench/{bench_id}",
                           headers=auth(ADMIN_TOKEN)).json()["state"]
        time.sleep(0.02)
    assert state == "Failed"
    r = client.get(f"/bench/{bench_id}/report", headers=auth(ADMIN_TOKEN))
    assert r.status_code == 400
    assert "RuntimeError" in r.json()["error"]["message"]


def test_bench_rejects_bad_inputs_up_front(api):
    client, _ = api
    r = client.post("/bench/run", headers=auth(ADMIN_TOKEN),
                    json={"block_a": "a", "block_b": "b", "sizes": [1024],
                          "reps": 1})
    assert r.status_code == 400
    r = client.get("/bench/nope", headers=auth(ADMIN_TOKEN))
    assert r.status_code == 404
    r = client.get("/bench/nope/report", headers=auth(ADMIN_TOKEN))
    assert r.status_code == 404


# -- administration --------------------------------------------------------

def test_clock_advance_requires_virtual_clock(tmp_path):
    cluster = Cluster(state_path=tmp_path / "s.json")
    try:
        app = create_app(cluster)
        ensure_admin(cluster, token=ADMIN_TOKEN)
        with TestClient(app) as client:
            r = client.post("/clock/advance", headers=auth(ADMIN_TOKEN),
                            json={"seconds": 10.0})
            assert r.status_code == 400
    finally:
        cluster.close()


def test_token_role_is_checked_by_schema(api):
    client, _ = api
    r = client.post("/tokens", headers=auth(ADMIN_TOKEN),
                    json={"username": "x", "role": "root"})
    assert r.status_code == 422


def test_restart_round_trip(tmp_path):
    path = tmp_path / "state.json"
    cluster = Cluster(state_path=path, clock=VirtualClock(1_000.0))
    app = create_app(cluster)
    ensure_admin(cluster, token=ADMIN_TOKEN)
    with TestClient(app) as client:
        node_ids = add_nodes(client)
        app_id, _ = approved_app(client, node_ids)
        before = client.get(f"/applications/{app_id}").json()
    cluster.close()

    cluster = Cluster(state_path=path, clock=VirtualClock(1_000.0))
    try:
        app = create_app(cluster)
        ensure_admin(cluster, token=ADMIN_TOKEN)
        with TestClient(app) as client:
            after = client.get(f"/applications/{app_id}").json()
            assert after == before
            fleet = client.get("/fleet", headers=auth(ADMIN_TOKEN)).json()
            assert len(fleet["blocks"]) == 1
            assert client.get("/rings", headers=auth(ADMIN_TOKEN)).json() == []
    finally:
        cluster.close()


def test_truncated_snapshot_is_refused(tmp_path):
    path = tmp_path / "state.json"
    cluster = Cluster(state_path=path, clock=VirtualClock(1_000.0))
    ensure_admin(cluster, token=ADMIN_TOKEN)
    cluster.close()
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptSnapshot):
        Cluster(state_path=path)
