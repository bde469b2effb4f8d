"""Command-line client.

Every per-instance subcommand builds the same request payload the HTTP API
accepts and dispatches it either in process (default) or to a running
server (``--server http://...``).  ``bench`` orchestrates batches locally
with process-level isolation.

Exit codes of ``verify``: 0 robust, 1 nonrobust, 2 timeout, 3 usage error,
4 verification error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
import pydantic

from . import report as report_mod
from .errors import GnncertError
from .service import handlers, schemas

ROUTES = {
    "/verify": (schemas.VerifyRequest, handlers.handle_verify),
    "/bounds": (schemas.BoundsRequest, handlers.handle_bounds),
    "/export-mip": (schemas.ExportMipRequest, handlers.handle_export_mip),
    "/attack": (schemas.AttackRequest, handlers.handle_attack),
    "/oracle": (schemas.OracleRequest, handlers.handle_oracle),
    "/sgm": (schemas.SgmRequest, handlers.handle_sgm),
}


def dispatch(server: str | None, path: str, payload: dict) -> dict:
    if server:
        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
        resp.raise_for_status()
        return resp.json()
    request_model, handler = ROUTES[path]
    return handler(request_model.model_validate(payload)).model_dump()


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _triple_payload(model, graph, spec) -> dict:
    return {"model": _load_json(model), "graph": _load_json(graph), "spec": _load_json(spec)}


def _canonical_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


_model_opt = click.option("--model", required=True, type=click.Path(exists=True))
_graph_opt = click.option("--graph", required=True, type=click.Path(exists=True))
_spec_opt = click.option("--spec", required=True, type=click.Path(exists=True))
_server_opt = click.option("--server", default=None, help="Base URL of a running gnncert server")


@click.group()
def cli():
    """Certified robustness verification for message-passing networks."""


@cli.command()
@_model_opt
@_graph_opt
@_spec_opt
@click.option("--strategy", type=click.Choice(["basic", "sbt", "abt"]), default="abt")
@click.option("--time-limit", type=float, default=3600.0)
@click.option("--node-limit", type=int, default=1_000_000_000)
@click.option("--branching", type=click.Choice(["max_impact", "input_order"]), default="max_impact")
@click.option(
    "--node-selection", type=click.Choice(["best_bound", "depth_first"]), default="best_bound"
)
@click.option("--seed", type=int, default=0)
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--timing/--no-timing", default=True, help="--no-timing zeroes the wall-clock field")
@_server_opt
def verify(model, graph, spec, strategy, time_limit, node_limit, branching, node_selection,
           seed, report_path, timing, server):
    """Decide robustness; exit 0 robust, 1 nonrobust, 2 timeout."""
    payload = _triple_payload(model, graph, spec)
    payload["config"] = {
        "strategy": strategy,
        "time_limit": time_limit,
        "node_limit": node_limit,
        "branching": branching,
        "node_selection": node_selection,
        "seed": seed,
    }
    payload["timing"] = timing
    result = dispatch(server, "/verify", payload)
    if report_path:
        Path(report_path).write_text(_canonical_json(result), encoding="utf-8")
    click.echo(
        f"status={result['status']} certified_bound={result['certified_bound']} "
        f"nodes={result['nodes_explored']} time={result['time_seconds']:.3f}s"
    )
    sys.exit({"robust": 0, "nonrobust": 1, "timeout": 2}[result["status"]])


@cli.command()
@_model_opt
@_graph_opt
@_spec_opt
@click.option("--strategy", type=click.Choice(["basic", "sbt", "abt"]), default="sbt")
@click.option("--fixings", type=click.Path(exists=True), default=None,
              help="JSON file with fixed_zero/fixed_one edge lists")
@click.option("--out", type=click.Path(), default=None, help="Write JSONL here instead of stdout")
@_server_opt
def bounds(model, graph, spec, strategy, fixings, out, server):
    """Emit per (layer, node, feature) intervals as JSONL records."""
    payload = _triple_payload(model, graph, spec)
    payload["strategy"] = strategy
    if fixings:
        payload["fixings"] = _load_json(fixings)
    result = dispatch(server, "/bounds", payload)
    lines = [json.dumps(rec, sort_keys=True) for rec in result["records"]]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)
    click.echo(f"margin_interval={result['margin']}", err=True)


@cli.command("export-mip")
@_model_opt
@_graph_opt
@_spec_opt
@click.option("--strategy", type=click.Choice(["basic", "sbt"]), default="sbt")
@click.option("--out", required=True, type=click.Path())
@_server_opt
def export_mip(model, graph, spec, strategy, out, server):
    """Write the verification problem as a CPLEX-LP file."""
    payload = _triple_payload(model, graph, spec)
    payload["strategy"] = strategy
    result = dispatch(server, "/export-mip", payload)
    Path(out).write_text(result["lp"], encoding="utf-8")
    click.echo(
        f"wrote {out}: {result['num_variables']} variables, "
        f"{result['num_constraints']} constraints"
    )


@cli.command()
@_model_opt
@_graph_opt
@_spec_opt
@click.option("--restarts", type=int, default=3)
@click.option("--seed", type=int, default=0)
@_server_opt
def attack(model, graph, spec, restarts, seed, server):
    """Search for an admissible negative-margin perturbation."""
    payload = _triple_payload(model, graph, spec)
    payload.update({"restarts": restarts, "seed": seed})
    result = dispatch(server, "/attack", payload)
    click.echo(_canonical_json(result), nl=False)


@cli.command()
@_model_opt
@_graph_opt
@_spec_opt
@click.option("--cap", type=int, default=200_000)
@_server_opt
def oracle(model, graph, spec, cap, server):
    """Exact minimum margin by exhaustive enumeration (desk scale only)."""
    payload = _triple_payload(model, graph, spec)
    payload["cap"] = cap
    result = dispatch(server, "/oracle", payload)
    click.echo(_canonical_json(result), nl=False)


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--summary", "summary_path", type=click.Path(), default=None)
@click.option("--workers", type=int, default=None,
              help="Parallel instances; defaults to GNNCERT_THREADS or 1")
def bench(manifest, records_path, summary_path, workers):
    """Run a manifest of instances; records stream to JSONL."""
    summary = report_mod.bench(manifest, records_path, summary_path, workers)
    click.echo(_canonical_json(summary.to_dict()), nl=False)


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP API with uvicorn."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> None:
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(3)
    except click.Abort:
        sys.exit(3)
    except GnncertError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    except (pydantic.ValidationError, httpx.HTTPError, json.JSONDecodeError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)


if __name__ == "__main__":
    main()
