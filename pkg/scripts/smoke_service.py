import io
import json
import tarfile
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from multiblock.clock import VirtualClock
from multiblock.cluster import Cluster
from multiblock.service.app import create_app, ensure_admin

tmp = Path(tempfile.mkdtemp())
cluster = Cluster(state_path=tmp / "state.json", clock=VirtualClock(1000.0))
app = create_app(cluster)
admin_token = ensure_admin(cluster)
client = TestClient(app)
A = {"Authorization": f"Bearer {admin_token}"}

def check(name, cond, extra=""):
    print(("PASS" if cond else "FAIL"), name, extra)
    if not cond:
        raise SystemExit(1)

r = client.get("/health")
check("health", r.status_code == 200 and r.json()["status"] == "ok")

# unauthenticated admin route
r = client.get("/fleet")
check("fleet unauth 401", r.status_code == 401, str(r.json()))

# nodes
r = client.post("/nodes", headers=A, json={
    "name": "gateway", "spec_class": "mgmt", "internal_addr": "10.0.0.1",
    "is_master": True, "external_addr": "203.0.113.1"})
check("add master", r.status_code == 201, r.text)
node_ids = {}
for i in range(1, 4):
    r = client.post("/nodes", headers=A, json={
        "name": f"n{i:02d}", "spec_class": "compute",
        "internal_addr": f"10.0.0.{i+1}"})
    check(f"add n{i:02d}", r.status_code == 201, r.text)
    node_ids[f"n{i:02d}"] = r.json()["node_id"]

# power the master on (admin-managed)
r = client.get("/fleet", headers=A)
master_id = [n for n in r.json()["nodes"] if n["is_master"]][0]["node_id"]
r = client.post(f"/nodes/{master_id}/power", headers=A, json={"power": "on"})
check("master power on", r.status_code == 200 and r.json()["power"] == "on")

# submit (public)
r = client.post("/applications", json={
    "username": "rizal", "contact": "rizal@example.org",
    "job_description": "lattice sweep", "requested_node_count": 2})
check("submit", r.status_code == 201, r.text)
app_id = r.json()["app_id"]
check("submitted state", r.json()["state"] == "Submitted")

# public read by id
r = client.get(f"/applications/{app_id}")
check("public read", r.status_code == 200)

# list as admin
r = client.get("/applications", headers=A)
check("admin list", r.status_code == 200 and len(r.json()) == 1)

# review with idempotency replay
idem = {"Idempotency-Key": "rev-1", **A}
body = {"approve": True, "node_ids": [node_ids["n01"], node_ids["n02"]],
        "period": [1000.0, 4000.0]}
r1 = client.post(f"/applications/{app_id}/review", headers=idem, json=body)
check("review approve", r1.status_code == 200, r1.text)
user_token = r1.json()["user_token"]
check("user token present", bool(user_token))
r2 = client.post(f"/applications/{app_id}/review", headers=idem, json=body)
check("idempotent replay", r2.status_code == 200
      and r2.headers.get("Idempotency-Replayed") == "true"
      and r2.json()["user_token"] == user_token)
r3 = client.post(f"/applications/{app_id}/review", headers=A, json=body)
check("non-keyed retry conflicts", r3.status_code == 409, r3.text)
U = {"Authorization": f"Bearer {user_token}"}

# assigned nodes visible without addresses
r = client.get(f"/applications/{app_id}")
an = r.json()["assigned_nodes"]
check("assigned names only", an == [
    {"name": "n01", "process_cap": None}, {"name": "n02", "process_cap": None}])

# reconfirm as user, activate as admin
r = client.post(f"/applications/{app_id}/reconfirm", headers=U,
                json={"accept": True})
check("reconfirm", r.status_code == 200 and r.json()["state"] == "Reconfirmed",
      r.text)
r = client.post(f"/applications/{app_id}/activate", headers=U, json={})
check("user cannot activate", r.status_code == 403)
r = client.post(f"/applications/{app_id}/activate", headers=A, json={})
check("activate", r.status_code == 200 and r.json()["state"] == "Active",
      r.text)

# rings visible to admin
r = client.get("/rings", headers=A)
check("ring live", r.status_code == 200 and len(r.json()) == 1
      and r.json()[0]["nodes"] == ["gateway", "n01", "n02"], r.text)
ring_id = r.json()[0]["ring_id"]
r = client.get(f"/rings/{ring_id}/trace", headers=A)
check("trace", r.status_code == 200 and len(r.json()["entries"]) == 3)

# job: ping-pong between two ranks
prog = "RANK 0:\nSEND 1 4096\nRECV 1\nEMIT done\nRANK 1:\nRECV 0\nSEND 0 4096\n"
r = client.post("/jobs", headers=U, json={
    "app_id": app_id, "program": prog, "n_procs": 2,
    "program_name": "pingpong"})
check("job created", r.status_code == 201, r.text)
job_id = r.json()["job_id"]
deadline = time.time() + 10
state = None
while time.time() < deadline:
    state = client.get(f"/jobs/{job_id}", headers=U).json()["state"]
    if state in ("Finished", "Failed"):
        break
    time.sleep(0.05)
check("job finished", state == "Finished", str(state))
r = client.get(f"/jobs/{job_id}/results", headers=U)
ranks = r.json()["ranks"]
check("results", r.status_code == 200 and ranks[0]["emits"][0][1] == "done")
r = client.get(f"/jobs/{job_id}/download", headers=U)
check("tar content type", r.headers["content-type"].startswith("application/x-tar"))
tf = tarfile.open(fileobj=io.BytesIO(r.content))
names = sorted(tf.getnames())
check("tar members", names == [f"{job_id}/rank-0.txt", f"{job_id}/rank-1.txt"],
      str(names))
text = tf.extractfile(names[0]).read().decode()
check("tar transcript", "done" in text and "status: ok" in text, text[:120])

# bench single mode over the live ring
r = client.post("/bench/run", headers=A, json={
    "mode": "single", "block_a": r1.json()["application"]["assigned_block"],
    "sizes": [1024, 32768], "reps": 3})
check("bench accepted", r.status_code == 202, r.text)
bench_id = r.json()["bench_id"]
deadline = time.time() + 30
bstate = None
while time.time() < deadline:
    bstate = client.get(f"/bench/{bench_id}", headers=A).json()["state"]
    if bstate in ("Finished", "Failed"):
        break
    time.sleep(0.1)
check("bench finished", bstate == "Finished",
      str(client.get(f"/bench/{bench_id}", headers=A).json()))
r = client.get(f"/bench/{bench_id}/report", headers=A)
rep = r.json()
check("bench report", r.status_code == 200
      and rep["curves"][0]["scenario"] == "SingleBlock"
      and len(rep["curves"][0]["points"]) == 2
      and "scenario,size_bytes" in rep["csv"], r.text[:200])

# user cannot see another user's jobs
r = client.post("/tokens", headers=A, json={"username": "eve", "role": "user"})
eve = {"Authorization": f"Bearer {r.json()['token']}"}
r = client.get("/jobs", headers=eve)
check("job list scoped", r.json() == [])
r = client.get(f"/jobs/{job_id}", headers=eve)
check("job read scoped", r.status_code == 404)

# expiry via the virtual clock
r = client.post("/clock/advance", headers=A, json={"seconds": 5000.0})
check("clock advance", r.status_code == 200 and r.json()["now"] == 6000.0,
      r.text)
r = client.get(f"/applications/{app_id}")
check("expired", r.json()["state"] == "Expired", r.json()["state"])
r = client.get("/rings", headers=A)
check("ring gone", r.json() == [])

# state dump round trip through a fresh cluster
r = client.get("/state", headers=A)
check("state dump", r.status_code == 200 and r.json()["fleet"]["nodes"])
cluster.close()
c2 = Cluster(state_path=tmp / "state.json", clock=VirtualClock(6000.0))
apps = c2.workflow.list_applications()
check("restart sees app", len(apps) == 1 and apps[0].state.value == "Expired")
check("restart sees admin", c2.auth.has_role("admin"))
c2.close()
print("service smoke OK")
