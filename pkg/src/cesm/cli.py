"""Command line front end.

Every subcommand is a thin HTTP client: by default it mounts the service
in-process (httpx ASGI transport, no socket), and --server points the same
calls at a remote instance instead. Logic lives behind the API either way,
so the CLI and a remote client cannot drift.

Exit codes: 0 clean, 1 fatal error, 2 the command worked but found a
problem (grounding violations, replay divergence, failed audit, an
ablation arm that moved the wrong way).
"""
from __future__ import annotations

import json
import sys
import time
from typing import Any, Optional

import click
import httpx

from .service import SyncASGITransport, create_app

_POLL_SECONDS = 0.2


class ApiClient:
    """httpx wrapper that either mounts the app in-process or dials out."""

    def __init__(
        self,
        server: Optional[str] = None,
        client: Optional[httpx.Client] = None,
    ) -> None:
        if client is not None:
            self._client = client
        elif server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            self._client = httpx.Client(
                transport=SyncASGITransport(create_app()),
                base_url="http://cesm.local",
                timeout=None,
            )

    def request(self, method: str, path: str, **kwargs: Any) -> Any:
        resp = self._client.request(method, path, **kwargs)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(f"{resp.status_code}: {detail}")
        return resp.json()

    def wait_for(self, run_id: str) -> dict[str, Any]:
        while True:
            info = self.request("GET", f"/runs/{run_id}")
            if info["status"] not in ("queued", "running"):
                return info
            time.sleep(_POLL_SECONDS)


def _client(ctx: click.Context) -> ApiClient:
    injected = ctx.obj.get("client") if ctx.obj else None
    if injected is not None:
        return injected
    return ApiClient(server=ctx.obj.get("server") if ctx.obj else None)


def _switch_flags(switches: tuple[str, ...]) -> dict[str, bool]:
    flags = {}
    for name in switches:
        key = name if name.endswith("_off") else f"{name}_off"
        flags[key] = True
    return flags


def _emit(data: Any, as_json: bool, text: str) -> None:
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
    else:
        click.echo(text)


@click.group()
@click.option("--server", default=None, help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: Optional[str]) -> None:
    """Budgeted prompt-selection controller for research workspaces."""
    ctx.ensure_object(dict)
    ctx.obj.setdefault("server", server)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


@main.command(name="run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--switch", "switches", multiple=True, help="Ablation switch to turn off (repeatable).")
@click.option("--max-transitions", type=int, default=None)
@click.option("--set", "overrides", multiple=True, help="Config override as dotted.key=JSON value.")
@click.option("--no-wait", is_flag=True, help="Return the run id without waiting (needs --server).")
@click.option("--json", "as_json", is_flag=True, help="Print the final job record as JSON.")
@click.pass_context
def run_cmd(
    ctx: click.Context,
    config: str,
    switches: tuple[str, ...],
    max_transitions: Optional[int],
    overrides: tuple[str, ...],
    no_wait: bool,
    as_json: bool,
) -> None:
    """Run the controller against CONFIG until it halts."""
    if no_wait and not (ctx.obj or {}).get("server"):
        raise click.ClickException(
            "--no-wait needs --server; an in-process run dies with the CLI"
        )
    client = _client(ctx)
    body: dict[str, Any] = {
        "config_path": config,
        "switches": _switch_flags(switches),
        "max_transitions": max_transitions,
    }
    if overrides:
        body["overrides"] = _parse_overrides(overrides)
    info = client.request("POST", "/runs", json=body)
    if no_wait:
        click.echo(info["run_id"])
        return
    info = client.wait_for(info["run_id"])
    _emit(
        info,
        as_json,
        f"run {info['run_id']}: {info['status']}, "
        f"{info['steps_executed']} steps, {info['violations']} follow-up violations",
    )
    if info["status"] == "failed":
        raise click.ClickException(info.get("error") or "run failed")
    if info["violations"]:
        sys.exit(2)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.argument("checkpoint")
@click.option("--switch", "switches", multiple=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def resume(
    ctx: click.Context,
    config: str,
    checkpoint: str,
    switches: tuple[str, ...],
    as_json: bool,
) -> None:
    """Continue a checkpointed run (CHECKPOINT is a path, absolute or
    relative to the workspace root)."""
    client = _client(ctx)
    info = client.request(
        "POST",
        "/resume",
        json={
            "config_path": config,
            "checkpoint": checkpoint,
            "switches": _switch_flags(switches),
        },
    )
    info = client.wait_for(info["run_id"])
    _emit(
        info,
        as_json,
        f"resume {info['run_id']}: {info['status']}, "
        f"{info['steps_executed']} steps total",
    )
    if info["status"] == "failed":
        raise click.ClickException(info.get("error") or "resume failed")
    if info["violations"]:
        sys.exit(2)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--trace", default=None, help="Trace file; default is the workspace's own trace.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def replay(ctx: click.Context, config: str, trace: Optional[str], as_json: bool) -> None:
    """Re-derive every decision in a trace and report the first divergence."""
    client = _client(ctx)
    report = client.request(
        "POST", "/replay", json={"config_path": config, "trace": trace}
    )
    if report["diverged"]:
        _emit(
            report,
            as_json,
            f"DIVERGED at step {report['step']} field {report['field']}: "
            f"trace has {report['expected']!r}, recomputed {report['actual']!r}",
        )
        sys.exit(2)
    _emit(report, as_json, f"replay ok: {report['checked']} records match")


@main.group()
def ledger() -> None:
    """Grounding-ledger operations."""


@ledger.command()
@click.argument("workspace", type=click.Path(exists=True, file_okay=False))
@click.option("--ledger-file", default="grounding.json", show_default=True)
@click.option("--run-commands", is_flag=True, help="Re-execute claim commands instead of span checks only.")
@click.option("--timeout", default=30.0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def audit(
    ctx: click.Context,
    workspace: str,
    ledger_file: str,
    run_commands: bool,
    timeout: float,
    as_json: bool,
) -> None:
    """Audit public claims in WORKSPACE against its grounding ledger."""
    client = _client(ctx)
    report = client.request(
        "POST",
        "/ledger/audit",
        json={
            "workspace_root": workspace,
            "ledger": ledger_file,
            "run_commands": run_commands,
            "timeout": timeout,
        },
    )
    counts = ", ".join(f"{k}={v}" for k, v in sorted(report["counts"].items()))
    _emit(
        report,
        as_json,
        f"audit {'ok' if report['ok'] else 'FAILED'}: {counts} "
        f"({report['total_claims']} claims, {report['orphan_count']} orphan literals)",
    )
    if not report["ok"]:
        sys.exit(2)


@main.command()
@click.argument("spec", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def ablate(ctx: click.Context, spec: str, as_json: bool) -> None:
    """Run the ablation comparisons described by SPEC (a JSON file)."""
    client = _client(ctx)
    report = client.request("POST", "/ablate", json={"spec_path": spec})
    if as_json:
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    else:
        for comp in report["comparisons"]:
            mark = "ok " if comp["matches"] else "MISMATCH"
            click.echo(f"{mark} {comp['switch']}")
        if report.get("factorial"):
            click.echo(f"factorial cells: {len(report['factorial'])}")
    if report.get("all_match") is False:
        sys.exit(2)


def _parse_overrides(pairs: tuple[str, ...]) -> dict[str, Any]:
    """Turn --set a.b=1 --set c='"x"' into a nested dict; values are JSON
    when they parse, raw strings otherwise."""
    out: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.ClickException(f"--set needs key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


if __name__ == "__main__":
    main()
