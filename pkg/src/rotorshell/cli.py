"""Thin command-line client for the scenario service.

Talks HTTP to a running service when ``--server`` is given; otherwise the
requests go to an in-process instance of the same app over an ASGI
transport, so no server needs to be running for local use.
"""

from __future__ import annotations

import asyncio
import base64
import json
import os
import sys

import click
import httpx


def _request(server, method: str, path: str, payload=None):
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            r = client.request(method, path, json=payload)
        return r.status_code, r.json()

    async def _go():
        from .service.app import create_app
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://rotorshell.local",
                                     timeout=600.0) as client:
            r = await client.request(method, path, json=payload)
            return r.status_code, r.json()

    return asyncio.run(_go())


def _fail(detail):
    click.echo("error: %s" % detail, err=True)
    sys.exit(1)


@click.group()
def main():
    """Shell-kinematics scenario runner."""


@main.command("list")
@click.option("--server", default=None, help="service URL (default: in-process)")
def list_cmd(server):
    """List built-in scenarios."""
    status, body = _request(server, "GET", "/scenarios")
    if status != 200:
        _fail(body.get("detail", body))
    for name in body["scenarios"]:
        click.echo(name)


@main.command()
@click.argument("name")
@click.option("--server", default=None, help="service URL (default: in-process)")
def describe(name, server):
    """Show a scenario's parameters and defaults."""
    status, body = _request(server, "GET", "/scenarios/%s" % name)
    if status != 200:
        _fail(body.get("detail", body))
    click.echo("%s: %s" % (body["name"], body["description"]))
    click.echo("default grid: %dx%d" % tuple(body["default_grid"]))
    click.echo("parameters:")
    width = max(len(k) for k in body["params"])
    for k, info in body["params"].items():
        click.echo("  %-*s  default=%-10s %s" % (width, k, info["default"], info["doc"]))


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None,
              help="output directory (default: ./out/<scenario>)")
@click.option("--grid", type=int, default=None, help="grid resolution N (NxN)")
@click.option("--seed", type=int, default=None, help="RNG seed override")
@click.option("--server", default=None, help="service URL (default: in-process)")
def run(scenario_file, out_dir, grid, seed, server):
    """Run the scenario described by SCENARIO_FILE (JSON) and write its
    artifacts."""
    try:
        with open(scenario_file) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as e:
        _fail("%s: line %d column %d: %s"
              % (scenario_file, e.lineno, e.colno, e.msg))
    if not isinstance(spec, dict) or "scenario" not in spec:
        _fail("%s: top-level object with a \"scenario\" field required"
              % scenario_file)
    payload = {
        "scenario": spec["scenario"],
        "params": spec.get("params", {}),
        "grid": spec.get("grid"),
        "seed": spec.get("seed", 0),
    }
    if grid is not None:
        payload["grid"] = [grid, grid]
    if seed is not None:
        payload["seed"] = seed
    status, body = _request(server, "POST", "/scenarios/run", payload)
    if status != 200:
        _fail(body.get("detail", body))

    out_dir = out_dir or os.path.join("out", body["scenario"])
    os.makedirs(out_dir, exist_ok=True)
    for art in body["artifacts"]:
        path = os.path.join(out_dir, art["name"])
        if art["encoding"] == "text":
            with open(path, "w", newline="") as fh:
                fh.write(art["content"])
        else:
            with open(path, "wb") as fh:
                fh.write(base64.b64decode(art["content"]))
        click.echo("wrote %s" % path)
    click.echo("summary: %s" % json.dumps(body["summary"], sort_keys=True))


if __name__ == "__main__":
    main()
