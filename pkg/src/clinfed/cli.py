"""Command-line client.

Thin HTTP client over the service app: every subcommand serializes its
arguments into a request, sends it (in-process via ASGI by default, or to a
remote --server), and formats the response. Exit codes: 0 success, 1 domain
error, 2 usage/syntax error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

from .service import ServiceConfig, create_app

DEFAULT_DATA_DIR_ENV = "CLINFED_DATA_DIR"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clinfed",
        description="Federated clinical data integration engine",
    )
    parser.add_argument(
        "--data-dir",
        default=os.environ.get(DEFAULT_DATA_DIR_ENV, "clinfed-data"),
        help=f"data directory (env {DEFAULT_DATA_DIR_ENV})",
    )
    parser.add_argument("--registry", help="registry file (default: <data-dir>/registry.json)")
    parser.add_argument("--ontology", help="ontology file (default: <data-dir>/ontology.txt)")
    parser.add_argument("--federation", help="federation config file")
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    parser.add_argument(
        "--format",
        choices=("table", "jsonl"),
        default="table",
        help="output format",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    meta = sub.add_parser("metadata", help="define and list metadata").add_subparsers(
        dest="action", required=True
    )
    p = meta.add_parser("define", help="merge a registry JSON document")
    p.add_argument("file")
    meta.add_parser("list", help="print the registry")

    onto = sub.add_parser("ontology", help="ontology operations").add_subparsers(
        dest="action", required=True
    )
    p = onto.add_parser("load", help="load an ontology text file")
    p.add_argument("file")
    p = onto.add_parser("fragment", help="extract a self-contained fragment")
    p.add_argument("--roots", required=True, help="comma-separated concept uris")
    p.add_argument("--depth", type=int, default=1)
    p = onto.add_parser("map-discover", help="discover local-to-global mappings")
    p.add_argument("--local", required=True, dest="local_file")
    p.add_argument("--global", required=True, dest="global_file")
    p.add_argument("--threshold", default="0.5")
    p.add_argument("--instances", help="JSON file: concept uri -> instance id list")
    p = onto.add_parser("sim", help="information-content similarity of two concepts")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--counts", help="JSON file: concept uri -> annotation count")

    data = sub.add_parser("data", help="ingest and view data").add_subparsers(
        dest="action", required=True
    )
    p = data.add_parser("ingest-csv", help="ingest a CSV file, one event per row")
    p.add_argument("file")
    p.add_argument("--mapping", required=True, help="ingest mapping JSON file")
    p = data.add_parser("ingest-dicom", help="ingest a DICOM metadata sidecar")
    p.add_argument("file")
    p.add_argument("--id", dest="dicom_id")
    p = data.add_parser("view", help="longitudinal per-patient view")
    p.add_argument("patient")
    p.add_argument("--levels", help="comma-separated vertical levels")

    q = sub.add_parser("query", help="run queries").add_subparsers(
        dest="action", required=True
    )
    p = q.add_parser("run", help="run a query against the local store")
    p.add_argument("text")
    p.add_argument("--no-enhance", action="store_true")
    p.add_argument("--explain", action="store_true")

    fed = sub.add_parser("fed", help="federation gateway").add_subparsers(
        dest="action", required=True
    )
    p = fed.add_parser("demo", help="seed three nodes and run the demo query")
    p.add_argument("--query", dest="text", default="")
    p.add_argument("--fail", action="append", default=[], metavar="NODE")
    p.add_argument("--slow", action="append", default=[], metavar="NODE:MS")
    p.add_argument("--no-enhance", action="store_true")
    p = fed.add_parser("query", help="run a federated query")
    p.add_argument("text")
    p.add_argument("--fail", action="append", default=[], metavar="NODE")
    p.add_argument("--slow", action="append", default=[], metavar="NODE:MS")
    p.add_argument("--no-enhance", action="store_true")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    return parser


def make_client(args) -> httpx.Client:
    if args.server:
        return httpx.Client(base_url=args.server.rstrip("/"), timeout=60)
    data_dir = Path(args.data_dir)
    config = ServiceConfig(
        data_dir=data_dir,
        registry_file=Path(args.registry) if args.registry else data_dir / "registry.json",
        ontology_file=Path(args.ontology) if args.ontology else data_dir / "ontology.txt",
        federation_file=Path(args.federation) if args.federation else None,
    )
    # sync client over the in-process ASGI app
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    return TestClient(create_app(config))


# -- output -----------------------------------------------------------------------

def emit_rows(rows: list[dict], fmt: str) -> None:
    if fmt == "jsonl":
        for row in rows:
            print(json.dumps(row, ensure_ascii=False, sort_keys=True))
        return
    if not rows:
        print("(no rows)")
        return
    keys = sorted({k for row in rows for k in row})
    widths = {
        k: max(len(k), *(len(_cell(row.get(k))) for row in rows)) for k in keys
    }
    print("  ".join(k.ljust(widths[k]) for k in keys))
    for row in rows:
        print("  ".join(_cell(row.get(k)).ljust(widths[k]) for k in keys))


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, (list, dict)):
        return json.dumps(value, ensure_ascii=False, sort_keys=True)
    return str(value)


def emit_doc(doc: dict, fmt: str) -> None:
    if fmt == "jsonl":
        print(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    else:
        print(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2))


# -- dispatch -----------------------------------------------------------------------

def _post(client, path, payload):
    resp = client.post(path, json=payload)
    body = resp.json()
    if resp.status_code >= 400:
        raise ServiceError(body.get("error", "Error"), body.get("detail", ""))
    return body


def _get(client, path, params=None):
    resp = client.get(path, params=params)
    body = resp.json()
    if resp.status_code >= 400:
        raise ServiceError(body.get("error", "Error"), body.get("detail", ""))
    return body


class ServiceError(Exception):
    def __init__(self, code: str, detail: str):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}")


def _slow_map(entries: list[str]) -> dict[str, int]:
    out = {}
    for entry in entries:
        node, _, ms = entry.partition(":")
        if not ms.isdigit():
            raise ServiceError("UsageError", f"--slow expects NODE:MS, got {entry!r}")
        out[node] = int(ms)
    return out


def dispatch(args, client: httpx.Client) -> None:
    fmt = args.format
    cmd, action = args.command, getattr(args, "action", None)

    if cmd == "metadata" and action == "define":
        doc = json.loads(Path(args.file).read_text(encoding="utf-8"))
        emit_doc(_post(client, "/metadata/define", doc), fmt)
    elif cmd == "metadata" and action == "list":
        emit_doc(_get(client, "/metadata"), fmt)

    elif cmd == "ontology" and action == "load":
        text = Path(args.file).read_text(encoding="utf-8")
        emit_doc(_post(client, "/ontology/load", {"text": text}), fmt)
    elif cmd == "ontology" and action == "fragment":
        body = _post(
            client,
            "/ontology/fragment",
            {"roots": args.roots.split(","), "depth": args.depth},
        )
        print(body["text"], end="")
    elif cmd == "ontology" and action == "map-discover":
        payload = {
            "local_text": Path(args.local_file).read_text(encoding="utf-8"),
            "global_text": Path(args.global_file).read_text(encoding="utf-8"),
            "threshold": args.threshold,
        }
        if args.instances:
            payload["shared_instances"] = json.loads(
                Path(args.instances).read_text(encoding="utf-8")
            )
        body = _post(client, "/ontology/discover-mappings", payload)
        emit_rows(body["mappings"], fmt)
    elif cmd == "ontology" and action == "sim":
        payload = {"a": args.a, "b": args.b}
        if args.counts:
            payload["annotation_counts"] = json.loads(
                Path(args.counts).read_text(encoding="utf-8")
            )
        emit_doc(_post(client, "/ontology/similarity", payload), fmt)

    elif cmd == "data" and action == "ingest-csv":
        payload = {
            "csv_text": Path(args.file).read_text(encoding="utf-8"),
            "mapping": json.loads(Path(args.mapping).read_text(encoding="utf-8")),
        }
        emit_doc(_post(client, "/data/ingest-csv", payload), fmt)
    elif cmd == "data" and action == "ingest-dicom":
        payload = {"sidecar_text": Path(args.file).read_text(encoding="utf-8")}
        if args.dicom_id:
            payload["dicom_id"] = args.dicom_id
        emit_doc(_post(client, "/data/ingest-dicom", payload), fmt)
    elif cmd == "data" and action == "view":
        params = {"levels": args.levels} if args.levels else None
        emit_doc(_get(client, f"/data/view/{args.patient}", params), fmt)

    elif cmd == "query" and action == "run":
        body = _post(
            client,
            "/query",
            {
                "text": args.text,
                "enhance": not args.no_enhance,
                "explain": args.explain,
            },
        )
        if args.explain:
            print(f"enhanced: {body['enhanced_query']}")
            for step in body["plan"]:
                print(f"  conjunct {step['conjunct']!r} selectivity {step['selectivity']:.4f}")
        emit_rows(body["rows"], fmt)

    elif cmd == "fed":
        payload = {
            "text": args.text,
            "enhance": not args.no_enhance,
            "fail": args.fail,
            "slow": _slow_map(args.slow),
        }
        path = "/federation/demo" if action == "demo" else "/federation/query"
        body = _post(client, path, payload)
        emit_rows(body["rows"], fmt)
        status = {
            "partial": body["partial"],
            "unreachable": body["unreachable"],
            "dropped_predicates": body["dropped_predicates"],
        }
        print(json.dumps(status, ensure_ascii=False, sort_keys=True), file=sys.stderr)

    else:
        raise ServiceError("UsageError", f"unhandled command {cmd} {action}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        data_dir = Path(args.data_dir)
        config = ServiceConfig(
            data_dir=data_dir,
            registry_file=Path(args.registry) if args.registry else data_dir / "registry.json",
            ontology_file=Path(args.ontology) if args.ontology else data_dir / "ontology.txt",
            federation_file=Path(args.federation) if args.federation else None,
        )
        uvicorn.run(create_app(config), host=args.host, port=args.port)
        return 0

    try:
        with make_client(args) as client:
            dispatch(args, client)
    except ServiceError as e:
        print(f"error: {e.code}: {e.detail}", file=sys.stderr)
        # syntax and usage problems are caller errors
        return 2 if e.code in ("SyntaxError", "UsageError") else 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
