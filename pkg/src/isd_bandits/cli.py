"""Thin command-line client for the experiment service.

Requests go through the HTTP layer either in process (default) or against a
remote server given with --server. Exit codes: 0 on success, 1 on config or
request errors, 2 when some grid cells failed but the run completed.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL = 2


async def _request(server: str | None, method: str, path: str, payload=None):
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=None) as client:
            response = await client.request(method, path, json=payload)
    else:
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://isd-bandits",
                                     timeout=None) as client:
            response = await client.request(method, path, json=payload)
    return response


def _call(server, method, path, payload=None):
    response = asyncio.run(_request(server, method, path, payload))
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        click.echo(f"error ({response.status_code}): {detail}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    return response.json()


def _submit_run(server, config_doc, out_dir, fmt, reps, seed, threads):
    if reps is not None:
        config_doc["n_repetitions"] = reps
    if seed is not None:
        config_doc["root_seed"] = seed
    if threads is not None:
        config_doc["threads"] = threads
    payload = {"config": config_doc, "out_dir": out_dir, "format": fmt,
               "include_records": False}
    body = _call(server, "POST", "/experiments/run", payload)
    for path in body["paths"]:
        click.echo(f"wrote {body['rows']} rows to {path}")
    for failure in body["failures"]:
        click.echo(f"cell failed: policy={failure['policy_id']} "
                   f"sweep={failure['sweep_value']} rep={failure['repetition']}: "
                   f"{failure['message']}", err=True)
    sys.exit(EXIT_OK if body["status"] == "ok" else EXIT_PARTIAL)


@click.group()
def main():
    """Simulation experiments for invariant-subspace bandit policies."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Experiment config JSON file.")
@click.option("--out", "out_dir", default="results", show_default=True,
              help="Directory for exported tables.")
@click.option("--reps", type=int, default=None, help="Override repetition count.")
@click.option("--seed", type=int, default=None, help="Override the root seed.")
@click.option("--threads", type=int, default=None, help="Worker pool size.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.option("--server", default=None, help="Base URL of a remote service.")
def run(config_path, out_dir, reps, seed, threads, fmt, server):
    """Run the experiment grid described by a config file."""
    try:
        with open(config_path) as fh:
            config_doc = json.load(fh)
    except (OSError, ValueError) as exc:
        click.echo(f"cannot read config: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    _submit_run(server, config_doc, out_dir, fmt, reps, seed, threads)


@main.command()
@click.argument("fig_id", type=click.Choice(["fig2", "fig3", "fig4", "fig5"]))
@click.option("--out", "out_dir", default="results", show_default=True)
@click.option("--reps", type=int, default=None, help="Override repetition count.")
@click.option("--seed", type=int, default=None, help="Override the root seed.")
@click.option("--threads", type=int, default=None, help="Worker pool size.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.option("--server", default=None, help="Base URL of a remote service.")
def reproduce(fig_id, out_dir, reps, seed, threads, fmt, server):
    """Run a paper-matched figure grid and export its table."""
    config_doc = _call(server, "GET", f"/figures/{fig_id}/config")
    _submit_run(server, config_doc, out_dir, fmt, reps, seed, threads)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Serve the experiment API over HTTP."""
    import uvicorn

    uvicorn.run("isd_bandits.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
