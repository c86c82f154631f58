"""``clusterctl``: ops CLI for the control service.

``serve`` runs the service in-process; every other subcommand is a thin
HTTP client against a running instance.  Connection settings come from
``--url``/``--token`` or the CLUSTERCTL_URL / CLUSTERCTL_TOKEN environment
variables.

Exit codes: 0 success, 1 user error (bad arguments, 4xx responses),
2 internal error (connection failures, 5xx responses).
"""

from __future__ import annotations

import json
import os
import sys

import click
import httpx

DEFAULT_URL = "http://127.0.0.1:8311"

SIZE_SUFFIXES = {"k": 1024, "m": 1024 * 1024, "g": 1024 * 1024 * 1024}


class UserError(click.ClickException):
    exit_code = 1


class InternalError(click.ClickException):
    exit_code = 2


def parse_size(text: str) -> int:
    text = text.strip().lower()
    scale = 1
    if text and text[-1] in SIZE_SUFFIXES:
        scale = SIZE_SUFFIXES[text[-1]]
        text = text[:-1]
    try:
        return int(text) * scale
    except ValueError:
        raise UserError(f"bad size {text!r}; use plain bytes or k/m/g")


def parse_listen(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        raise UserError(f"bad listen address {addr!r}; use host:port")
    try:
        return host, int(port)
    except ValueError:
        raise UserError(f"bad port in listen address {addr!r}")


class Client:
    """Minimal API client that maps HTTP failures onto exit codes."""

    def __init__(self, url: str, token: str | None):
        self.url = url.rstrip("/")
        headers = {}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(base_url=self.url, headers=headers,
                                  timeout=60.0)

    def call(self, method: str, path: str, body: dict | None = None):
        try:
            response = self._http.request(method, path, json=body)
        except httpx.HTTPError as exc:
            raise InternalError(f"cannot reach {self.url}: {exc}")
        if response.status_code >= 500:
            raise InternalError(f"{method} {path}: {response.status_code} "
                                f"{response.text}")
        if response.status_code >= 400:
            try:
                detail = response.json()["error"]["message"]
            except Exception:
                detail = response.text
            raise UserError(f"{method} {path}: {detail}")
        return response

    def json(self, method: str, path: str, body: dict | None = None):
        return self.call(method, path, body).json()


pass_client = click.make_pass_decorator(Client)


def emit(data) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group()
@click.option("--url", envvar="CLUSTERCTL_URL", default=DEFAULT_URL,
              show_default=True, help="Service base URL.")
@click.option("--token", envvar="CLUSTERCTL_TOKEN", default=None,
              help="Bearer token (or CLUSTERCTL_TOKEN).")
@click.pass_context
def cli(ctx: click.Context, url: str, token: str | None) -> None:
    """Operate a multiblock control service."""
    ctx.obj = Client(url, token)


# -- serve -----------------------------------------------------------------

@cli.command()
@click.option("--listen", envvar="LISTEN_ADDR", default="127.0.0.1:8311",
              show_default=True, help="host:port to bind.")
@click.option("--state", "state_path", envvar="STATE_PATH",
              default="state.json", show_default=True,
              help="Snapshot file path.")
@click.option("--clock", envvar="CLOCK", default="real", show_default=True,
              type=click.Choice(["real", "virtual"]),
              help="Real wall clock or an admin-advanced virtual clock.")
@click.option("--admin-token", envvar="ADMIN_TOKEN", default=None,
              help="Bootstrap admin token; generated and printed if unset.")
@click.option("--ui-dir", envvar="UI_DIR", default=None,
              help="Directory of static web UI files to mount at /ui.")
def serve(listen: str, state_path: str, clock: str,
          admin_token: str | None, ui_dir: str | None) -> None:
    """Run the control service until interrupted."""
    import uvicorn

    from .clock import VirtualClock
    from .cluster import Cluster
    from .service.app import create_app, ensure_admin

    host, port = parse_listen(listen)
    cluster = Cluster(state_path=state_path,
                      clock=VirtualClock() if clock == "virtual" else None)
    app = create_app(cluster, ui_dir=ui_dir)
    token = ensure_admin(cluster, admin_token)
    if admin_token is None:
        click.echo(f"admin token: {token}")
    click.echo(f"listening on http://{host}:{port}  (state: {state_path}, "
               f"clock: {clock})")
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        cluster.close()


# -- node ------------------------------------------------------------------

@cli.group()
def node() -> None:
    """Manage fleet nodes."""


@node.command("add")
@click.argument("name")
@click.option("--addr", "internal_addr", required=True,
              help="Internal interconnect address.")
@click.option("--spec", "spec_class", default="compute", show_default=True)
@click.option("--master", is_flag=True, help="Register as the master node.")
@click.option("--external", "external_addr", default=None,
              help="External address (master only).")
@pass_client
def node_add(client: Client, name: str, internal_addr: str, spec_class: str,
             master: bool, external_addr: str | None) -> None:
    """Register a node."""
    emit(client.json("POST", "/nodes", {
        "name": name, "spec_class": spec_class,
        "internal_addr": internal_addr, "is_master": master,
        "external_addr": external_addr}))


@node.command("power")
@click.argument("node_id")
@click.argument("state", type=click.Choice(["on", "off"]))
@pass_client
def node_power(client: Client, node_id: str, state: str) -> None:
    """Power a node on or off."""
    emit(client.json("POST", f"/nodes/{node_id}/power",
                     {"power": state}))


@node.command("list")
@pass_client
def node_list(client: Client) -> None:
    """Show the fleet."""
    emit(client.json("GET", "/fleet"))


# -- app -------------------------------------------------------------------

@cli.group("app")
def app_group() -> None:
    """Manage cluster applications."""


@app_group.command("list")
@pass_client
def app_list(client: Client) -> None:
    """List applications visible to the caller."""
    emit(client.json("GET", "/applications"))


@app_group.command("show")
@click.argument("app_id")
@pass_client
def app_show(client: Client, app_id: str) -> None:
    """Show one application."""
    emit(client.json("GET", f"/applications/{app_id}"))


@app_group.command("submit")
@click.option("--user", "username", required=True)
@click.option("--contact", default="")
@click.option("--description", required=True)
@click.option("--nodes", "count", type=int, required=True,
              help="Requested node count.")
@pass_client
def app_submit(client: Client, username: str, contact: str,
               description: str, count: int) -> None:
    """Submit a new application (no token needed)."""
    emit(client.json("POST", "/applications", {
        "username": username, "contact": contact,
        "job_description": description, "requested_node_count": count}))


@app_group.command("approve")
@click.argument("app_id")
@click.option("--nodes", "node_ids", required=True,
              help="Comma-separated node ids to allocate.")
@click.option("--start", type=float, required=True,
              help="Usage period start (unix seconds).")
@click.option("--end", type=float, required=True,
              help="Usage period end (unix seconds).")
@pass_client
def app_approve(client: Client, app_id: str, node_ids: str,
                start: float, end: float) -> None:
    """Approve an application, allocating a block."""
    emit(client.json("POST", f"/applications/{app_id}/review", {
        "approve": True, "node_ids": [n for n in node_ids.split(",") if n],
        "period": [start, end]}))


@app_group.command("reject")
@click.argument("app_id")
@click.option("--reason", default="rejected", show_default=True)
@pass_client
def app_reject(client: Client, app_id: str, reason: str) -> None:
    """Reject an application."""
    emit(client.json("POST", f"/applications/{app_id}/review",
                     {"approve": False, "reason": reason}))


@app_group.command("reconfirm")
@click.argument("app_id")
@click.option("--decline", is_flag=True, help="Decline instead of accept.")
@pass_client
def app_reconfirm(client: Client, app_id: str, decline: bool) -> None:
    """Reconfirm (or decline) an approved application."""
    emit(client.json("POST", f"/applications/{app_id}/reconfirm",
                     {"accept": not decline}))


@app_group.command("activate")
@click.argument("app_id")
@pass_client
def app_activate(client: Client, app_id: str) -> None:
    """Power the block and boot its ring."""
    emit(client.json("POST", f"/applications/{app_id}/activate", {}))


@app_group.command("finish")
@click.argument("app_id")
@pass_client
def app_finish(client: Client, app_id: str) -> None:
    """Finish an active application, releasing its block."""
    emit(client.json("POST", f"/applications/{app_id}/finish", {}))


# -- token -----------------------------------------------------------------

@cli.group()
def token() -> None:
    """Credential management."""


@token.command("issue")
@click.argument("username")
@click.option("--role", type=click.Choice(["admin", "user"]), default="user",
              show_default=True)
@pass_client
def token_issue(client: Client, username: str, role: str) -> None:
    """Mint a bearer token for a principal."""
    emit(client.json("POST", "/tokens", {"username": username, "role": role}))


# -- job -------------------------------------------------------------------

@cli.group()
def job() -> None:
    """Run and inspect jobs."""


@job.command("run")
@click.argument("app_id")
@click.option("--program", "program_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Program file to upload.")
@click.option("--n", "n_procs", type=int, required=True,
              help="Number of ranks.")
@click.option("--placement", default=None,
              help="Comma-separated node names, one per rank.")
@click.option("--name", "program_name", default=None,
              help="Display name (defaults to the file name).")
@pass_client
def job_run(client: Client, app_id: str, program_path: str, n_procs: int,
            placement: str | None, program_name: str | None) -> None:
    """Launch a program on the application's ring."""
    with open(program_path) as fh:
        program = fh.read()
    body = {"app_id": app_id, "program": program, "n_procs": n_procs,
            "program_name": program_name or os.path.basename(program_path)}
    if placement:
        body["placement"] = [p for p in placement.split(",") if p]
    emit(client.json("POST", "/jobs", body))


@job.command("list")
@pass_client
def job_list(client: Client) -> None:
    """List jobs visible to the caller."""
    emit(client.json("GET", "/jobs"))


@job.command("show")
@click.argument("job_id")
@pass_client
def job_show(client: Client, job_id: str) -> None:
    """Show one job."""
    emit(client.json("GET", f"/jobs/{job_id}"))


@job.command("results")
@click.argument("job_id")
@pass_client
def job_results(client: Client, job_id: str) -> None:
    """Print per-rank transcripts of a finished job."""
    emit(client.json("GET", f"/jobs/{job_id}/results"))


@job.command("download")
@click.argument("job_id")
@click.option("-o", "out_path", default=None,
              help="Output archive path (default <job_id>.tar).")
@pass_client
def job_download(client: Client, job_id: str, out_path: str | None) -> None:
    """Download the transcript archive of a finished job."""
    response = client.call("GET", f"/jobs/{job_id}/download")
    out_path = out_path or f"{job_id}.tar"
    with open(out_path, "wb") as fh:
        fh.write(response.content)
    click.echo(out_path)


# -- bench -----------------------------------------------------------------

@cli.group()
def bench() -> None:
    """Bisection bandwidth benchmarks."""


@bench.command("run")
@click.option("--block-a", required=True, help="Measured block id.")
@click.option("--block-b", default=None,
              help="Second block id (comparison mode).")
@click.option("--mode", type=click.Choice(["single", "comparison"]),
              default="comparison", show_default=True)
@click.option("--sizes", default="1k,4k,32k,256k,1m", show_default=True,
              help="Comma-separated message sizes (k/m suffixes).")
@click.option("--reps", type=int, default=5, show_default=True)
@click.option("--wait/--no-wait", default=True, show_default=True,
              help="Poll until the run finishes and print the report.")
@pass_client
def bench_run(client: Client, block_a: str, block_b: str | None, mode: str,
              sizes: str, reps: int, wait: bool) -> None:
    """Start a benchmark run."""
    import time as _time

    size_list = [parse_size(s) for s in sizes.split(",") if s]
    run = client.json("POST", "/bench/run", {
        "mode": mode, "block_a": block_a, "block_b": block_b,
        "sizes": size_list, "reps": reps})
    if not wait:
        emit(run)
        return
    bench_id = run["bench_id"]
    while True:
        status = client.json("GET", f"/bench/{bench_id}")
        if status["state"] != "Running":
            break
        _time.sleep(0.2)
    if status["state"] == "Failed":
        raise UserError(f"benchmark failed: {status['error']}")
    report = client.json("GET", f"/bench/{bench_id}/report")
    click.echo(report["csv"], nl=False)
    if report.get("degradation_per_size") is not None:
        degradation = ", ".join(f"{d:.2%}"
                                for d in report["degradation_per_size"])
        click.echo(f"# degradation per size: {degradation}")


@bench.command("list")
@pass_client
def bench_list(client: Client) -> None:
    """List benchmark runs."""
    emit(client.json("GET", "/bench"))


@bench.command("report")
@click.argument("bench_id")
@pass_client
def bench_report(client: Client, bench_id: str) -> None:
    """Print a finished run's CSV report."""
    report = client.json("GET", f"/bench/{bench_id}/report")
    click.echo(report["csv"], nl=False)


# -- state -----------------------------------------------------------------

@cli.group()
def state() -> None:
    """Service state inspection."""


@state.command("dump")
@pass_client
def state_dump(client: Client) -> None:
    """Dump the full persisted and runtime state as JSON."""
    emit(client.json("GET", "/state"))


@cli.command()
@pass_client
def health(client: Client) -> None:
    """Probe the service."""
    emit(client.json("GET", "/health"))


@cli.command("advance-clock")
@click.argument("seconds", type=float)
@pass_client
def advance_clock(client: Client, seconds: float) -> None:
    """Advance a virtual clock (admin, virtual clock only)."""
    emit(client.json("POST", "/clock/advance", {"seconds": seconds}))


def main() -> None:
    from .errors import ClusterError

    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except InternalError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except ClusterError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
