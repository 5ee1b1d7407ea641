"""Command-line surface.

The batch subcommands (ingest, decode, eval, synth) are thin clients of the
HTTP service: with --server they talk to a running instance, otherwise they
drive an in-process app over an ASGI transport, so batch pipelines and CI
need no running daemon. `serve` starts the HTTP service; `sidecar` starts
the NDJSON per-token protocol server.

Exit codes: 0 success (including partial per-question failures, unless
--strict), 1 when all questions fail (or any, with --strict), 2 for
configuration and IO errors.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
import sys
from dataclasses import dataclass

import click

from . import __version__

CONTEXT_SETTINGS = {"max_content_width": 100}

_CONFIG_KEYS = (
    "omega", "beam", "space", "strengthen", "filter", "mask_form", "max_hops",
    "lm", "seed", "predicted_set", "casefold", "jobs",
)


@dataclass(frozen=True)
class RunConfig:
    """Materialized pipeline options; round-trips losslessly through JSON."""

    omega: float = 2.0
    beam: int = 20
    space: str = "logit"
    strengthen: bool = True
    filter: bool = True
    mask_form: str = "[MASK]"
    max_hops: int = 2
    lm: str = "toy"
    seed: int = 0
    predicted_set: str = "all"
    casefold: bool = True
    jobs: int = 1

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def _merge_run_config(ctx: click.Context, config_path: str | None) -> RunConfig:
    """Flags beat config-file values beat defaults."""
    file_cfg: dict = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config file {config_path}: {exc}")
        unknown = set(file_cfg) - set(_CONFIG_KEYS)
        if unknown:
            raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    values = {}
    for key in _CONFIG_KEYS:
        from_flag = ctx.get_parameter_source(key) == click.core.ParameterSource.COMMANDLINE
        if not from_flag and key in file_cfg:
            values[key] = file_cfg[key]
        else:
            values[key] = ctx.params[key]
    return RunConfig(**values)


def _request(server: str | None, method: str, path: str, payload: dict | None = None) -> dict:
    import httpx

    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.request(method, path, json=payload)
    else:
        from .service import create_app

        async def call() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://kgdecode.local", timeout=None
            ) as client:
                return await client.request(method, path, json=payload)

        response = asyncio.run(call())
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", {})
        except ValueError:
            detail = {}
        message = detail.get("message", response.text) if isinstance(detail, dict) else detail
        click.echo(f"error: {message}", err=True)
        sys.exit(2)
    return response.json()


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        click.echo(f"error: cannot read {path}: {exc}", err=True)
        sys.exit(2)


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        click.echo(f"error: cannot write {path}: {exc}", err=True)
        sys.exit(2)


def _load_questions(path: str) -> list[dict]:
    rows = []
    for line_no, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            click.echo(f"error: {path}:{line_no}: invalid JSON: {exc}", err=True)
            sys.exit(2)
        rows.append(
            {
                "id": str(row.get("id", line_no)),
                "question": row.get("question", ""),
                "topic_entities": row.get("topic_entities", []),
                "answers": row.get("answers", []),
            }
        )
    return rows


def _server_option(fn):
    return click.option(
        "--server",
        envvar="KGDECODE_SERVER",
        default=None,
        help="URL of a running kgdecode service; default runs in-process.",
    )(fn)


def _pipeline_options(fn):
    options = [
        click.option("--omega", type=float, default=2.0, show_default=True,
                     help="Strengthening coefficient for the branch contrast."),
        click.option("--beam", type=int, default=20, show_default=True,
                     help="Beam size."),
        click.option("--space", type=click.Choice(["logit", "probability"]),
                     default="logit", show_default=True,
                     help="Space the branch combination runs in."),
        click.option("--strengthen/--no-strengthen", default=True, show_default=True,
                     help="Contrast the original and masked prompt branches."),
        click.option("--filter/--no-filter", default=True, show_default=True,
                     help="Mask automaton-illegal tokens."),
        click.option("--mask-form", default="[MASK]", show_default=True,
                     help="Surface form replacing masked path lines."),
        click.option("--max-hops", type=int, default=2, show_default=True,
                     help="Path extraction depth from each topic entity."),
        click.option("--lm", type=click.Choice(["toy", "adversarial"]), default="toy",
                     show_default=True, help="Deterministic logits provider."),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Provider seed."),
        click.option("--predicted-set", type=click.Choice(["all", "top1"]),
                     default="all", show_default=True,
                     help="Answer set used for F1."),
        click.option("--casefold/--exact-match", "casefold", default=True,
                     show_default=True, help="Answer matching normalization."),
        click.option("--jobs", type=int, default=1, show_default=True,
                     help="Concurrent question workers."),
        click.option("--template", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Prompt template file override."),
        click.option("--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON config file mirroring these flags (flags win)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group(context_settings=CONTEXT_SETTINGS)
@click.version_option(__version__, prog_name="kgdecode")
def main() -> None:
    """Knowledge-graph-constrained decoding: compile reasoning paths into a
    token automaton, strengthen question-aligned logits by contrasting a
    masked prompt branch, filter illegal tokens, and beam-decode legal
    paths."""


@main.command()
@click.argument("triples", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@_server_option
def ingest(triples: str, out: str, server: str | None) -> None:
    """Parse a triples TSV file and write the normalized graph to OUT."""
    body = _request(server, "POST", "/ingest", {"triples_text": _read_text(triples)})
    _write_text(out, body["normalized_tsv"])
    click.echo(
        f"ingested {body['num_triples']} triples "
        f"({body['num_entities']} entities, {body['num_relations']} relations) -> {out}"
    )


@main.command()
@click.option("--kg", "kg_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Triples TSV file.")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Questions JSONL file.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write decode results JSONL here (default: stdout).")
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None,
              help="Write per-step decode trace JSONL here.")
@click.option("--strict", is_flag=True, default=False,
              help="Exit 1 on any per-question failure.")
@_pipeline_options
@_server_option
@click.pass_context
def decode(ctx: click.Context, kg_path: str, dataset_path: str, out_path: str | None,
           trace_out: str | None, strict: bool, template: str | None,
           config_path: str | None, server: str | None, **_flags) -> None:
    """Decode reasoning paths for every question in the dataset."""
    run = _merge_run_config(ctx, config_path)
    options = dataclasses.asdict(run)
    options["template"] = _read_text(template) if template else None
    options["trace"] = trace_out is not None
    body = _request(
        server, "POST", "/decode",
        {
            "triples_text": _read_text(kg_path),
            "questions": _load_questions(dataset_path),
            "options": options,
        },
    )
    results = body["results"]
    lines = []
    trace_lines = []
    for result in results:
        lines.append(json.dumps({
            "id": result["id"],
            "answer": result["answer"],
            "answers": result["answers"],
            "ranked": [
                {"text": r["text"], "log_score": r["log_score"], "accepted": r["accepted"]}
                for r in result["ranked"]
            ],
            "error": result["error"],
        }, ensure_ascii=False))
        for record in result.get("trace", []):
            trace_lines.append(json.dumps({"id": result["id"], **record}, ensure_ascii=False))
    text = "".join(line + "\n" for line in lines)
    if out_path:
        _write_text(out_path, text)
    else:
        click.echo(text, nl=False)
    if trace_out:
        _write_text(trace_out, "".join(line + "\n" for line in trace_lines))
    failures = sum(1 for r in results if r["error"] is not None)
    if failures:
        click.echo(f"{failures}/{len(results)} questions failed", err=True)
        if strict or failures == len(results):
            sys.exit(1)


@main.command(name="eval")
@click.option("--kg", "kg_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Triples TSV file.")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Questions JSONL file with gold answers.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write the report JSON here (default: stdout).")
@click.option("--sweep-omega", is_flag=True, default=False,
              help="Also sweep omega over {-1,0,1,2,3,5,10}.")
@click.option("--sweep-beam", is_flag=True, default=False,
              help="Also sweep beam size over {1,2,5,10,20}.")
@click.option("--omega-csv", type=click.Path(dir_okay=False), default="omega_sweep.csv",
              show_default=True, help="Omega sweep output CSV.")
@click.option("--beam-csv", type=click.Path(dir_okay=False), default="beam_sweep.csv",
              show_default=True, help="Beam sweep output CSV.")
@click.option("--strict", is_flag=True, default=False,
              help="Exit 1 on any per-question failure.")
@_pipeline_options
@_server_option
@click.pass_context
def eval_cmd(ctx: click.Context, kg_path: str, dataset_path: str, report_path: str | None,
             sweep_omega: bool, sweep_beam: bool, omega_csv: str, beam_csv: str,
             strict: bool, template: str | None, config_path: str | None,
             server: str | None, **_flags) -> None:
    """Evaluate Hit@1 / F1 over the dataset; optionally sweep omega and beam."""
    from .evaluate import curve_csv

    run = _merge_run_config(ctx, config_path)
    options = dataclasses.asdict(run)
    options["template"] = _read_text(template) if template else None
    options["sweep_omega"] = sweep_omega
    options["sweep_beam"] = sweep_beam
    body = _request(
        server, "POST", "/eval",
        {
            "triples_text": _read_text(kg_path),
            "questions": _load_questions(dataset_path),
            "options": options,
        },
    )
    report = body["report"]
    text = json.dumps(report, sort_keys=True, indent=2)
    if report_path:
        _write_text(report_path, text)
    else:
        click.echo(text)
    if sweep_omega:
        _write_text(omega_csv, curve_csv(body["omega_curve"], "omega"))
        click.echo(f"omega sweep -> {omega_csv}", err=True)
    if sweep_beam:
        _write_text(beam_csv, curve_csv(body["beam_curve"], "beam"))
        click.echo(f"beam sweep -> {beam_csv}", err=True)
    aggregate = report["aggregate"]
    click.echo(
        f"hit@1 {aggregate['hit1_mean']:.4f}  f1 {aggregate['f1_mean']:.4f}  "
        f"errors {aggregate['errors']}/{aggregate['num_questions']}",
        err=True,
    )
    if aggregate["errors"]:
        if strict or aggregate["errors"] == aggregate["num_questions"]:
            sys.exit(1)


@main.command()
@click.option("--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for triples.tsv, dataset.jsonl, vocab.txt.")
@click.option("--questions", type=int, default=50, show_default=True,
              help="Number of questions to generate.")
@click.option("--seed", type=int, default=0, show_default=True, help="Generator seed.")
@click.option("--two-hop-fraction", type=float, default=0.6, show_default=True,
              help="Fraction of questions with 2-hop gold paths.")
@_server_option
def synth(out_dir: str, questions: int, seed: int, two_hop_fraction: float,
          server: str | None) -> None:
    """Generate a synthetic KGQA suite (graph, dataset, vocabulary)."""
    import pathlib

    body = _request(
        server, "POST", "/synth",
        {"num_questions": questions, "seed": seed, "two_hop_fraction": two_hop_fraction},
    )
    directory = pathlib.Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    _write_text(str(directory / "triples.tsv"), body["triples_tsv"])
    _write_text(str(directory / "dataset.jsonl"), body["dataset_jsonl"])
    _write_text(str(directory / "vocab.txt"), body["vocab_text"])
    click.echo(
        f"wrote {questions} questions over {body['num_triples']} triples to {out_dir}"
    )


def _parse_kg_registry(specs: tuple[str, ...]) -> dict[str, str]:
    registry = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise click.UsageError(f"--kg expects name=path, got {spec!r}")
        registry[name] = path
    return registry


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Vocabulary file enabling the session endpoints.")
@click.option("--kg", "kg_specs", multiple=True, metavar="NAME=PATH",
              help="Register a graph for kg_ref session inits (repeatable).")
def serve(host: str, port: int, vocab_path: str | None, kg_specs: tuple[str, ...]) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app
    from .tokenizer import load_vocabulary

    vocabulary = load_vocabulary(vocab_path) if vocab_path else None
    app = create_app(vocabulary=vocabulary, kg_registry=_parse_kg_registry(kg_specs))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--vocab", "vocab_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Vocabulary file shared with the client runtime.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=7071, show_default=True)
@click.option("--stdio", is_flag=True, default=False,
              help="Serve over stdin/stdout instead of TCP.")
@click.option("--kg", "kg_specs", multiple=True, metavar="NAME=PATH",
              help="Register a graph for kg_ref session inits (repeatable).")
def sidecar(vocab_path: str, host: str, port: int, stdio: bool,
            kg_specs: tuple[str, ...]) -> None:
    """Run the NDJSON per-token logits sidecar (TCP or stdio)."""
    from .sidecar import SidecarEngine, serve_stdio, serve_tcp
    from .tokenizer import ReferenceTokenizer, load_vocabulary

    engine = SidecarEngine(
        ReferenceTokenizer(load_vocabulary(vocab_path)),
        kg_registry=_parse_kg_registry(kg_specs),
    )
    if stdio:
        serve_stdio(engine)
        return

    async def run() -> None:
        server = await serve_tcp(engine, host=host, port=port)
        bound = server.sockets[0].getsockname()[1]
        click.echo(f"sidecar listening on {host}:{bound}", err=True)
        await server.serve_forever()

    asyncio.run(run())


if __name__ == "__main__":
    main()
