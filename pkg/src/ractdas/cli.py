"""opsctl: run scenarios, serve the registry, poke codecs, administer tags.

Machine-readable output goes to stdout; logs and errors to stderr.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import json
import statistics
import sys
from pathlib import Path

import click

from . import frame_codec, singulation
from .frame_codec import TagId
from .registry import Policy, Registry, RegistryError, Role
from .simworld import ScenarioInvalid, World, load_scenario

DEFAULT_ADDR = "http://127.0.0.1:8000"


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Checkpoint network simulator and registry tooling."""


# --- frame -------------------------------------------------------------------


@main.command()
@click.option("--encode", "tag", help="Tag id to encode (10 hex digits).")
@click.option("--decode", "hexbytes",
              help="12 frame bytes as hex, e.g. '0A3046...0D'.")
def frame(tag, hexbytes):
    """Hex dump a tag frame and its 120-bit serial expansion."""
    if bool(tag) == bool(hexbytes):
        raise click.UsageError("give exactly one of --encode or --decode")
    try:
        if tag:
            frame_bytes = frame_codec.encode_frame(TagId(tag))
        else:
            frame_bytes = bytes.fromhex(hexbytes)
            tag = str(frame_codec.decode_frame(frame_bytes))
    except (frame_codec.FrameError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"tag:   {tag}")
    click.echo("bytes: " + " ".join(f"{b:02X}" for b in frame_bytes))
    bits = frame_codec.encode_uart(frame_bytes)
    grouped = " ".join(bits[i:i + 10] for i in range(0, len(bits), 10))
    click.echo(f"bits:  {grouped}  ({len(bits)} bits)")


# --- run -----------------------------------------------------------------


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override scenario seed.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default=None, help="Trace file (default: stdout).")
@click.option("--plot", "plot_path", type=click.Path(dir_okay=False),
              default=None, help="Render a timeline figure to this file.")
def run(scenario_path, seed, out_path, plot_path):
    """Execute a scenario file and emit its event trace."""
    try:
        scenario = load_scenario(scenario_path)
        if seed is not None:
            scenario = type(scenario)(**{**scenario.__dict__, "seed": seed})
        trace = World(scenario).run()
    except (ScenarioInvalid, RegistryError) as exc:
        _fail(str(exc))
    if out_path:
        trace.write(out_path)
        click.echo(f"wrote {len(trace)} records to {out_path}", err=True)
    else:
        for line in trace.to_lines():
            click.echo(line)
    if plot_path:
        from .plotting import render_trace_figure
        render_trace_figure(trace, plot_path)
        click.echo(f"wrote figure to {plot_path}", err=True)


# --- serve -----------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000, help="HTTP API port.")
@click.option("--node-port", type=int, default=8001,
              help="Checkpost line-protocol TCP port.")
@click.option("--journal", "journal_path", type=click.Path(dir_okay=False),
              default="registry.journal")
@click.option("--policy", type=click.Choice(["strict", "lenient"]),
              default="strict")
def serve(host, port, node_port, journal_path, policy):
    """Start the registry service (HTTP API plus node TCP listener)."""
    import uvicorn

    from .server import create_app, start_node_server

    if Path(journal_path).exists():
        registry = Registry.journal_replay(journal_path, policy=Policy(policy))
        registry._journal_path = Path(journal_path)
        registry._journal_file = open(journal_path, "a", encoding="utf-8")
        click.echo(f"replayed journal {journal_path}: seq={registry.snapshot()['seq']}",
                   err=True)
    else:
        registry = Registry(journal_path=journal_path, policy=Policy(policy))
    start_node_server(registry, host, node_port)
    click.echo(f"node line protocol on {host}:{node_port}", err=True)
    uvicorn.run(create_app(registry), host=host, port=port, log_level="warning")


# --- singulate-bench ---------------------------------------------------------


@main.command("singulate-bench")
@click.option("--protocol", type=click.Choice(["aloha", "tree"]), required=True)
@click.option("--tags", "n_tags", type=int, default=16)
@click.option("--frame-size", type=int, default=16)
@click.option("--rounds", type=int, default=64, help="Max Aloha rounds.")
@click.option("--trials", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--plot", "plot_path", type=click.Path(dir_okay=False), default=None)
def singulate_bench(protocol, n_tags, frame_size, rounds, trials, seed, plot_path):
    """Run singulation experiments; one JSON record per line on stdout."""
    import random

    rng = random.Random(seed)
    if protocol == "aloha":
        first_round = []
        for trial in range(trials):
            tags = frozenset(TagId.from_int(v)
                             for v in rng.sample(range(1 << 40), n_tags))
            field = singulation.TagField(tags, rng_seed=rng.getrandbits(64))
            logs, read = singulation.aloha_singulate(
                field, singulation.AlohaParams(frame_size, rounds))
            first = len(logs[0].reads_completed) if logs else 0
            first_round.append(first)
            click.echo(json.dumps({"trial": trial, "rounds": len(logs),
                                   "first_round_reads": first,
                                   "total_read": len(read)}))
        expected = n_tags * (1 - 1 / frame_size) ** (n_tags - 1)
        click.echo(json.dumps({"summary": "aloha",
                               "mean_first_round": statistics.mean(first_round),
                               "analytic_mean": expected}))
        if plot_path:
            from .plotting import render_aloha_figure
            render_aloha_figure(first_round, expected, plot_path)
    else:
        sizes, queries = [], []
        for trial in range(trials):
            size = rng.randint(1, n_tags)
            tags = frozenset(TagId.from_int(v)
                             for v in rng.sample(range(1 << 40), size))
            order, q = singulation.tree_singulate(singulation.TagField(tags))
            sizes.append(size)
            queries.append(q)
            click.echo(json.dumps({"trial": trial, "tags": size, "queries": q}))
        click.echo(json.dumps({"summary": "tree",
                               "mean_queries": statistics.mean(queries)}))
        if plot_path:
            from .plotting import render_tree_figure
            render_tree_figure(sizes, queries, plot_path)


# --- admin -----------------------------------------------------------------


@main.group()
@click.option("--registry", "addr", envvar="RACTDAS_REGISTRY_ADDR",
              default=DEFAULT_ADDR, show_default=True,
              help="Registry HTTP address (env RACTDAS_REGISTRY_ADDR).")
@click.option("--login", "login_id", default=None)
@click.option("--password", default=None)
@click.pass_context
def admin(ctx, addr, login_id, password):
    """Thin client for the registry HTTP API."""
    ctx.obj = {"addr": addr.rstrip("/"), "login": login_id, "password": password}


def _client(ctx):
    import httpx

    return httpx.Client(base_url=ctx.obj["addr"], timeout=10.0)


def _auth_headers(ctx, client) -> dict:
    if not ctx.obj["login"] or not ctx.obj["password"]:
        raise click.UsageError("--login and --password are required")
    r = client.post("/login", json={"login_id": ctx.obj["login"],
                                    "password": ctx.obj["password"]})
    _check(r)
    return {"Authorization": f"Bearer {r.json()['token']}"}


def _check(response):
    if response.status_code >= 400:
        body = response.json()
        _fail(f"{body.get('error')}: {body.get('message')}")


def _emit(response):
    _check(response)
    click.echo(json.dumps(response.json(), sort_keys=True))


@admin.command("register-user")
@click.argument("new_login")
@click.argument("new_password")
@click.option("--role", type=click.Choice(["owner", "operator"]), default="owner")
@click.pass_context
def admin_register_user(ctx, new_login, new_password, role):
    with _client(ctx) as client:
        headers = {}
        if ctx.obj["login"]:
            headers = _auth_headers(ctx, client)
        _emit(client.post("/users", headers=headers,
                          json={"login": new_login, "password": new_password,
                                "role": role}))


@admin.command("register-tag")
@click.option("--tag", required=True)
@click.pass_context
def admin_register_tag(ctx, tag):
    with _client(ctx) as client:
        _emit(client.post("/tags", headers=_auth_headers(ctx, client),
                          json={"tag_id": tag}))


@admin.command("report")
@click.option("--tag", required=True)
@click.pass_context
def admin_report(ctx, tag):
    with _client(ctx) as client:
        _emit(client.post(f"/reports/{tag}", headers=_auth_headers(ctx, client)))


@admin.command("clear")
@click.option("--tag", required=True)
@click.pass_context
def admin_clear(ctx, tag):
    with _client(ctx) as client:
        _emit(client.delete(f"/reports/{tag}", headers=_auth_headers(ctx, client)))


@admin.command("release")
@click.option("--checkpost", required=True)
@click.pass_context
def admin_release(ctx, checkpost):
    with _client(ctx) as client:
        _emit(client.post(f"/release/{checkpost}",
                          headers=_auth_headers(ctx, client)))


@admin.command("events")
@click.option("--since", type=int, default=0)
@click.pass_context
def admin_events(ctx, since):
    with _client(ctx) as client:
        _emit(client.get("/events", params={"since": since},
                         headers=_auth_headers(ctx, client)))


if __name__ == "__main__":
    main()
