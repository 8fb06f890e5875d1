"""Command-line client for the extraction service.

Every subcommand is a thin wrapper that builds a service request, posts it
(in-process by default, or to a remote server with --server), and prints the
JSON response. Exit codes: 0 success, 1 operation failed, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Optional

import click

from .backends import ChatExchange, load_cassette, save_cassette


class ServiceClient:
    def __init__(self, server: Optional[str]):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        try:
            body = response.json()
        except ValueError:
            body = {"error": "BadResponse", "detail": response.text}
        if response.status_code >= 400:
            detail = body.get("detail", body)
            error = body.get("error", response.status_code)
            raise click.ClickException(f"{error}: {detail}")
        return body


def _read_json(path: str) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _backend_spec(backend: str, policy: Optional[str], cassette: Optional[str], record: Optional[str],
                  endpoint: Optional[str], model: Optional[str]) -> dict:
    spec: dict[str, Any] = {"kind": backend, "record": record is not None}
    if backend == "scripted":
        if policy is None:
            raise click.UsageError("--policy is required with --backend scripted")
        spec["policy"] = _read_json(policy)
    elif backend == "replay":
        if cassette is None:
            raise click.UsageError("--cassette is required with --backend replay")
        spec["cassette"] = [
            {"fingerprint": e.fingerprint, "request": e.request, "response": e.response}
            for e in load_cassette(cassette)
        ]
    else:
        if endpoint is None or model is None:
            raise click.UsageError("--endpoint and --model are required with --backend live")
        spec["live"] = {"endpoint": endpoint, "model": model}
    return spec


def _write_recorded(record: Optional[str], body: dict) -> None:
    recorded = body.pop("recorded", None)
    if record is not None and recorded is not None:
        save_cassette(
            record,
            [
                ChatExchange(
                    fingerprint=e["fingerprint"], request=e["request"], response=e["response"]
                )
                for e in recorded
            ],
        )


def _emit(body: dict, out: Optional[str]) -> None:
    text = json.dumps(body, indent=2, sort_keys=True, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


def backend_options(f):
    f = click.option("--backend", type=click.Choice(["scripted", "replay", "live"]),
                     default="scripted", show_default=True)(f)
    f = click.option("--policy", type=click.Path(exists=True),
                     help="scripted policy JSON file")(f)
    f = click.option("--cassette", type=click.Path(exists=True),
                     help="recorded exchanges JSONL file for replay")(f)
    f = click.option("--record", type=click.Path(),
                     help="write exchanges made during the run to this JSONL file")(f)
    f = click.option("--endpoint", help="live backend chat-completions URL")(f)
    f = click.option("--model", help="live backend model name")(f)
    return f


@click.group()
@click.option("--server", help="remote service URL; defaults to running in-process")
@click.pass_context
def main(ctx: click.Context, server: Optional[str]) -> None:
    """Schema-guided structured extraction toolkit."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--task", required=True, help="natural-language extraction task description")
@click.option("--schema", "schema_path", type=click.Path(exists=True),
              help="starting schema JSON; omitted means generate one from the task")
@click.option("--seeds", "seeds_path", type=click.Path(exists=True),
              help="JSONL of {input_text, expected} seed samples")
@click.option("--tau", type=float, default=0.95, show_default=True)
@click.option("--max-iters", type=int, default=6, show_default=True)
@click.option("--n-samples", type=int, default=10, show_default=True)
@click.option("--holdout-samples", type=int, default=None)
@click.option("--relay/--no-relay", default=True, show_default=True,
              help="also produce a verified output-mapping program back to the input schema")
@click.option("--out", type=click.Path(), help="write the JSON result here instead of stdout")
@backend_options
@click.pass_obj
def build(client: ServiceClient, task: str, schema_path: Optional[str], seeds_path: Optional[str],
          tau: float, max_iters: int, n_samples: int, holdout_samples: Optional[int], relay: bool,
          out: Optional[str], backend: str, policy: Optional[str], cassette: Optional[str],
          record: Optional[str], endpoint: Optional[str], model: Optional[str]) -> None:
    """Optimize a schema against synthetic adversarial cases."""
    seeds = []
    if seeds_path:
        for line in Path(seeds_path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                obj = json.loads(line)
                seeds.append({"input_text": obj["input_text"], "expected": obj["expected"]})
    payload: dict[str, Any] = {
        "task": task,
        "seeds": seeds,
        "tau": tau,
        "max_iters": max_iters,
        "n_samples": n_samples,
        "holdout_samples": holdout_samples,
        "relay": relay,
        "backend": _backend_spec(backend, policy, cassette, record, endpoint, model),
    }
    if schema_path:
        payload["schema"] = _read_json(schema_path)
    body = client.post("/build", payload)
    _write_recorded(record, body)
    _emit(body, out)


@main.command()
@click.option("--schema", "schema_path", type=click.Path(exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True),
              help="file with the source text")
@click.option("--text", help="source text given inline")
@click.option("--max-retries", type=int, default=3, show_default=True)
@click.option("--reflection/--no-reflection", default=True, show_default=True)
@click.option("--condition-check", is_flag=True, default=False,
              help="judge condition attributes with the backend")
@click.option("--relay-program", "relay_program_path", type=click.Path(exists=True),
              help="transformation program to apply to the extracted values")
@click.option("--out", type=click.Path())
@backend_options
@click.pass_obj
def extract(client: ServiceClient, schema_path: str, input_path: Optional[str], text: Optional[str],
            max_retries: int, reflection: bool, condition_check: bool,
            relay_program_path: Optional[str], out: Optional[str], backend: str,
            policy: Optional[str], cassette: Optional[str], record: Optional[str],
            endpoint: Optional[str], model: Optional[str]) -> None:
    """Extract schema-conformant values from one input text."""
    if (input_path is None) == (text is None):
        raise click.UsageError("provide exactly one of --input or --text")
    source_text = text if text is not None else Path(input_path).read_text(encoding="utf-8")
    payload: dict[str, Any] = {
        "schema": _read_json(schema_path),
        "source_text": source_text,
        "max_retries": max_retries,
        "reflection_enabled": reflection,
        "llm_condition_check": condition_check,
        "backend": _backend_spec(backend, policy, cassette, record, endpoint, model),
    }
    if relay_program_path:
        payload["relay_program"] = _read_json(relay_program_path)
    body = client.post("/extract", payload)
    _write_recorded(record, body)
    _emit(body, out)
    if not body.get("succeeded"):
        sys.exit(1)


@main.command("eval")
@click.option("--schema", "schema_path", type=click.Path(exists=True), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(["conversation-jsonl", "page-jsonl"]),
              default="conversation-jsonl", show_default=True)
@click.option("--sample-cap", type=int, default=None)
@click.option("--max-retries", type=int, default=3, show_default=True)
@click.option("--reflection/--no-reflection", default=True, show_default=True)
@click.option("--ab", is_flag=True, default=False,
              help="also run with reflection toggled off and report the delta")
@click.option("--out", type=click.Path(), help="write the report JSON here")
@backend_options
@click.pass_obj
def eval_cmd(client: ServiceClient, schema_path: str, dataset_path: str, fmt: str,
             sample_cap: Optional[int], max_retries: int, reflection: bool, ab: bool,
             out: Optional[str], backend: str, policy: Optional[str], cassette: Optional[str],
             record: Optional[str], endpoint: Optional[str], model: Optional[str]) -> None:
    """Run a dataset through extraction and report field-level accuracy."""
    payload: dict[str, Any] = {
        "schema": _read_json(schema_path),
        "dataset_lines": Path(dataset_path).read_text(encoding="utf-8").splitlines(),
        "format": fmt,
        "sample_cap": sample_cap,
        "config": {"max_retries": max_retries, "reflection_enabled": reflection},
        "backend": _backend_spec(backend, policy, cassette, record, endpoint, model),
    }
    if ab:
        payload["ab_config"] = {"max_retries": max_retries, "reflection_enabled": not reflection}
    body = client.post("/eval", payload)
    _write_recorded(record, body)
    _emit(body, out)


@main.command("relay-check")
@click.option("--program", "program_path", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="JSONL of {optimized_output, expected_original} sample pairs")
@click.option("--repair-rounds", type=int, default=0, show_default=True,
              help="attempt this many backend-guided repair rounds when verification fails")
@click.option("--out", type=click.Path())
@backend_options
@click.pass_obj
def relay_check(client: ServiceClient, program_path: str, pairs_path: str, repair_rounds: int,
                out: Optional[str], backend: str, policy: Optional[str], cassette: Optional[str],
                record: Optional[str], endpoint: Optional[str], model: Optional[str]) -> None:
    """Verify a transformation program against recorded sample pairs."""
    pairs = [
        json.loads(line)
        for line in Path(pairs_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    payload: dict[str, Any] = {
        "program": _read_json(program_path),
        "pairs": pairs,
        "max_rounds": repair_rounds,
    }
    if repair_rounds > 0:
        payload["backend"] = _backend_spec(backend, policy, cassette, record, endpoint, model)
    body = client.post("/relay/check", payload)
    _write_recorded(record, body)
    _emit(body, out)
    if not body.get("verified"):
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
