"""Command line interface.

Exit codes: 0 success, 1 scenario error, 2 protocol error.  The default
output directory comes from PARLEY_OUT (falling back to ./out).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .repository import Repository, RestoreError
from .scenario import ScenarioError, apply_overrides, load_scenario
from .simulation import run_scenario, verify_transcript, write_artifacts
from .wire import WireAgentClient, WireError, serve_scenario

EXIT_OK = 0
EXIT_SCENARIO = 1
EXIT_PROTOCOL = 2


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter(f"expected host:port, got {value!r}")
    return host, int(port)


@click.group()
@click.version_option(package_name="parley")
def main() -> None:
    """Agent marketplace and negotiation simulator."""


@main.command()
@click.argument("scenario_path", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=None, help="override the scenario seed")
@click.option("--max-parties", type=int, default=None)
@click.option("--queue-policy", type=click.Choice(["fcfs", "priority"]), default=None)
@click.option("--rounds", type=int, default=None, help="override the round limit")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              envvar="PARLEY_OUT", help="output directory (env: PARLEY_OUT)")
@click.option("--mode", type=click.Choice(["sequential", "threaded"]),
              default="sequential", show_default=True)
def run(scenario_path: Path, seed: int | None, max_parties: int | None,
        queue_policy: str | None, rounds: int | None, out_dir: Path | None,
        mode: str) -> None:
    """Run a scenario end-to-end and write its artifacts."""
    try:
        scenario = load_scenario(scenario_path)
        scenario = apply_overrides(scenario, seed=seed, max_parties=max_parties,
                                   queue_policy=queue_policy, round_limit=rounds)
        result = run_scenario(scenario, mode=mode)
    except ScenarioError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_SCENARIO)
    out_dir = out_dir or Path("out")
    paths = write_artifacts(result, out_dir)
    stats = result.report["stats"]
    click.echo(f"negotiations: {len(result.report['negotiations'])}  "
               f"agreements: {stats['agreements']}  "
               f"aborted: {stats['aborted']}  "
               f"messages: {stats['messages']}")
    for name, path in paths.items():
        click.echo(f"  {name}: {path}")
    sys.exit(EXIT_OK)


@main.command()
@click.argument("transcript_path", type=click.Path(exists=True, path_type=Path))
def replay(transcript_path: Path) -> None:
    """Verify a transcript by re-running its embedded scenario."""
    try:
        match, index, detail = verify_transcript(transcript_path)
    except ScenarioError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_SCENARIO)
    if match:
        click.echo("Match")
        sys.exit(EXIT_OK)
    where = f" at message {index}" if index is not None else ""
    click.echo(f"Mismatch{where}: {detail}")
    sys.exit(EXIT_PROTOCOL)


@main.command()
@click.option("--listen", required=True, help="address to bind, host:port")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--remote", "remote_agents", multiple=True, required=True,
              help="agent id joining over the wire (repeatable)")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              envvar="PARLEY_OUT")
def serve(listen: str, scenario_path: Path, remote_agents: tuple[str, ...],
          out_dir: Path | None) -> None:
    """Serve the wire protocol: wait for the remote agents, then run."""
    host, port = _parse_listen(listen)
    try:
        scenario = load_scenario(scenario_path)
    except ScenarioError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_SCENARIO)
    try:
        served = serve_scenario(scenario, list(remote_agents), host=host, port=port)
    except WireError as exc:
        click.echo(f"protocol error: {exc}", err=True)
        sys.exit(EXIT_PROTOCOL)
    out_dir = out_dir or Path("out")
    paths = write_artifacts(served.run, out_dir)
    click.echo(f"run complete; transcript: {paths['transcript']}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--connect", required=True, help="server address, host:port")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--agent", "agent_id", required=True)
def join(connect: str, scenario_path: Path, agent_id: str) -> None:
    """Join a served run as a remote agent."""
    host, port = _parse_listen(connect)
    try:
        scenario = load_scenario(scenario_path)
    except ScenarioError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_SCENARIO)
    try:
        WireAgentClient(scenario, agent_id, host, port).run()
    except WireError as exc:
        click.echo(f"protocol error: {exc}", err=True)
        sys.exit(EXIT_PROTOCOL)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("snapshot_path", type=click.Path(exists=True, path_type=Path))
def inspect(snapshot_path: Path) -> None:
    """Print the tables of a repository snapshot."""
    try:
        repo = Repository.restore(snapshot_path)
    except RestoreError as exc:
        click.echo(f"protocol error: {exc}", err=True)
        sys.exit(EXIT_PROTOCOL)
    snap = repo.snapshot()
    click.echo(f"agents: {len(snap['agents'])}")
    for agent in snap["agents"]:
        click.echo(f"  {agent['agent_id']} ({agent['role']}, allies={agent['allies']})")
    click.echo(f"products: {len(snap['products'])}")
    for product in snap["products"]:
        click.echo(f"  {product['product_id']}: {product['product_name']}")
    click.echo(f"attributes: {len(snap['attributes'])}")
    click.echo(f"live advertisements: {len(snap['advertisements'])}")
    for ad in snap["advertisements"]:
        click.echo(f"  {ad['ad_id']} -> {ad['product_id']} "
                   f"(validity {ad['validity_counter']})")
    click.echo(f"ongoing negotiations: {len(snap['ongoing'])}")
    click.echo(f"archived ads: {len(snap['archive'])}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def api(host: str, port: int) -> None:
    """Run the marketplace HTTP service."""
    import uvicorn

    uvicorn.run("parley.service.app:app", host=host, port=port)


@main.group()
@click.option("--base-url", default="http://127.0.0.1:8000", show_default=True,
              envvar="PARLEY_API")
@click.pass_context
def client(ctx: click.Context, base_url: str) -> None:
    """Thin HTTP client for a running marketplace service."""
    ctx.obj = base_url.rstrip("/")


def _post(base_url: str, path: str, payload: dict) -> None:
    import httpx

    response = httpx.post(f"{base_url}{path}", json=payload, timeout=30.0)
    if response.status_code >= 400:
        click.echo(f"error {response.status_code}: {response.text}", err=True)
        sys.exit(EXIT_PROTOCOL)
    click.echo(json.dumps(response.json(), indent=2, sort_keys=True))


@client.command("register-agent")
@click.option("--id", "agent_id", required=True)
@click.option("--name", default="")
@click.option("--role", type=click.Choice(["buyer", "seller"]), required=True)
@click.option("--allies/--no-allies", default=False)
@click.option("--priority", type=int, default=0)
@click.pass_obj
def client_register_agent(base_url: str, agent_id: str, name: str, role: str,
                          allies: bool, priority: int) -> None:
    _post(base_url, "/agents", {"agent_id": agent_id, "name": name, "role": role,
                                "allies": allies, "priority": priority})


@client.command("submit-ad")
@click.option("--id", "ad_id", required=True)
@click.option("--product", required=True)
@click.option("--agent", required=True)
@click.option("--validity", type=int, default=10, show_default=True)
@click.pass_obj
def client_submit_ad(base_url: str, ad_id: str, product: str, agent: str,
                     validity: int) -> None:
    _post(base_url, "/advertisements", {"ad_id": ad_id, "product_id": product,
                                        "agent_id": agent,
                                        "validity_counter": validity})


@client.command("tick")
@click.pass_obj
def client_tick(base_url: str) -> None:
    _post(base_url, "/tick", {})


@client.command("run")
@click.argument("scenario_path", type=click.Path(exists=True, path_type=Path))
@click.pass_obj
def client_run(base_url: str, scenario_path: Path) -> None:
    scenario = json.loads(scenario_path.read_text())
    _post(base_url, "/runs", {"scenario": scenario})


if __name__ == "__main__":
    main()
