"""Command-line client for the simulator service.

Subcommands post config documents to the HTTP API and write the returned
CSV.  By default the service runs in-process (no sockets); ``--server``
targets a remote instance started with ``scma serve``.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from . import __version__

_EXPERIMENT_ROUTES = {
    "mae": "/experiments/mae",
    "ber": "/experiments/ber",
    "ripcheck": "/ripcheck",
}


class _CliError(Exception):
    """Fatal condition reported as a message plus exit status 1."""


def _post(route: str, payload: dict, server: str | None) -> dict:
    """POST to a running server, or to an in-process app when server is None."""
    if server is not None:
        response = httpx.post(server.rstrip("/") + route, json=payload, timeout=None)
        if response.status_code != 200:
            raise _CliError(f"server returned {response.status_code}: {response.text}")
        return response.json()

    from .service import create_app

    async def call() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://scma.local", timeout=None
        ) as client:
            return await client.post(route, json=payload)

    response = asyncio.run(call())
    if response.status_code != 200:
        raise _CliError(f"request failed ({response.status_code}): {response.text}")
    return response.json()


def _load_config(path: str, seed: int | None) -> dict:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise _CliError(f"config {path} must hold a JSON object")
    if seed is not None:
        doc["master_seed"] = seed
    return doc


def _run_experiment(args: argparse.Namespace) -> int:
    doc = _load_config(args.config, args.seed)
    payload = {"config": doc}
    body = _post(_EXPERIMENT_ROUTES[args.command], payload, args.server)
    out = Path(args.out)
    out.write_text(body["csv"])
    print(f"{args.command}: wrote {len(body['rows'])} rows to {out}")
    return 0


def _run_selftest(args: argparse.Namespace) -> int:
    from .acceptance import run_all

    results = run_all(names=args.only)
    return 0 if all(r.passed for r in results) else 1


def _run_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scma",
        description="Asynchronous overloaded-uplink simulator client",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("mae", "sweep delay-estimation error over an SNR grid"),
        ("ber", "sweep end-to-end bit error rate over an SNR grid"),
        ("ripcheck", "run the recovery-guarantee checks"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config document")
        cmd.add_argument("--out", required=True, help="output CSV path")
        cmd.add_argument("--seed", type=int, default=None, help="override master_seed")
        cmd.add_argument("--server", default=None, help="remote server URL (default: in-process)")
        cmd.set_defaults(handler=_run_experiment)

    selftest = sub.add_parser("selftest", help="run the acceptance checks")
    selftest.add_argument(
        "--only", nargs="*", default=None, help="subset of check names to run"
    )
    selftest.set_defaults(handler=_run_selftest)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=_run_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except _CliError as exc:
        print(f"scma {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
