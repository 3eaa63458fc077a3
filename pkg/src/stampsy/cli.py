"""Operator command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure. The REPL prints
pipeline internals (skill badge, stamp, retrieved quads) by default since
inspectability is the point; --quiet hides them.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import evalharness, kstore
from .backends import BackendError
from .config import ConfigError, load_config, build_engine
from .corpus import HelpingSkill, corpus_stats, load_corpus
from .engine import ProcessSignal
from .kstore import KnowledgeStore, load_quads, save_quads
from .stsp import extract_state, load_rules, make_stamp


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML config file.")
@click.option("--json", "as_json", is_flag=True, default=False, help="JSON output.")
@click.option("--seed", type=int, default=None, help="Seed for mock backends.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, as_json: bool, seed: int | None) -> None:
    """stampsy: counseling dialogue orchestration toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["json"] = as_json
    ctx.obj["seed"] = seed


def _load_cfg(ctx: click.Context):
    return load_config(ctx.obj.get("config_path"))


@cli.command()
@click.argument("path", type=click.Path(exists=True))
@click.pass_context
def stats(ctx: click.Context, path: str) -> None:
    """Corpus statistics for a JSONL corpus file."""
    report = load_corpus(path)
    result = corpus_stats(report.sessions)
    if ctx.obj["json"]:
        payload = {"stats": result.to_dict(),
                   "errors": [str(e) for e in report.errors],
                   "warnings": report.warnings}
        click.echo(json.dumps(payload, ensure_ascii=False, indent=2))
    else:
        click.echo(result.render())
        for warning in report.warnings:
            click.echo(f"warning: {warning}", err=True)
        for error in report.errors:
            click.echo(f"error: {error}", err=True)
    if report.errors:
        raise RuntimeError(f"{len(report.errors)} malformed line(s) in {path}")


@cli.command()
@click.argument("src", type=click.Path(exists=True))
@click.argument("dst", type=click.Path())
@click.pass_context
def convert(ctx: click.Context, src: str, dst: str) -> None:
    """Convert a role/content chat export (JSONL) into the corpus schema."""
    from .corpus import convert_chat_records, save_corpus

    records = []
    with Path(src).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    report = convert_chat_records(records)
    save_corpus(report.sessions, dst)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    for error in report.errors:
        click.echo(f"error: {error}", err=True)
    click.echo(f"converted {len(report.sessions)} sessions to {dst}")
    if report.errors:
        raise RuntimeError(f"{len(report.errors)} record(s) failed to convert")


@cli.command()
@click.option("--quiet", is_flag=True, default=False, help="Hide pipeline internals.")
@click.pass_context
def chat(ctx: click.Context, quiet: bool) -> None:
    """Interactive REPL session against the engine (stdin/stdout)."""
    cfg = _load_cfg(ctx)
    engine = build_engine(cfg, seed=ctx.obj.get("seed"))
    session = engine.open_session()
    click.echo(f"counselor: {session.utterances[0].text}")
    for line in sys.stdin:
        text = line.strip()
        if not text:
            continue
        try:
            result = engine.step(session, text)
        except BackendError as exc:
            click.echo(f"backend error, turn dropped: {exc}", err=True)
            continue
        if not quiet:
            click.echo(f"[skill={result.prediction.predicted.value}]")
            if result.stamp.text:
                click.echo(f"[stamp: {result.stamp.text}]")
            if result.retrieval.gated and result.retrieval.quadruples:
                for sq in result.retrieval.quadruples:
                    click.echo(
                        f"[knowledge: {sq.quad.slot} = {sq.quad.value}"
                        f" | stamp={sq.quad.stamp or '-'} | score={sq.score:.3f}]"
                    )
            elif not result.retrieval.gated:
                click.echo("[knowledge: gated off (skill outside knowledge set)]")
        click.echo(f"counselor: {result.response.text}")
        if result.process_signal is ProcessSignal.WARN_ENDING:
            click.echo("[process: the session is coming to an end]")
        elif result.process_signal is ProcessSignal.END:
            if result.closing is not None:
                click.echo(f"counselor: {result.closing.text}")
            click.echo("[process: session closed]")
            return
    if session.status.value != "closed":
        closing = engine.close_session(session)
        click.echo(f"counselor: {closing.text}")


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx: click.Context, host: str | None, port: int | None) -> None:
    """Start the HTTP session service."""
    import uvicorn

    from .service import create_app

    cfg = _load_cfg(ctx)
    engine = build_engine(cfg, seed=ctx.obj.get("seed"))
    app = create_app(engine, cfg)
    uvicorn.run(app, host=host or cfg.service.host, port=port or cfg.service.port)


@cli.group()
def kb() -> None:
    """Knowledge-store commands."""


@kb.command("ingest")
@click.argument("path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="Write the deduplicated store back out as JSONL.")
@click.pass_context
def kb_ingest(ctx: click.Context, path: str, out: str | None) -> None:
    """Validate and deduplicate a quadruple file."""
    quads = load_quads(path)
    store = KnowledgeStore(quads)
    if out:
        save_quads(store.quads, out)
    if ctx.obj["json"]:
        click.echo(json.dumps({"read": len(quads), "stored": len(store)}))
    else:
        click.echo(f"read {len(quads)} quads, stored {len(store)} after dedup")


@kb.command("query")
@click.argument("text")
@click.option("--store", "store_path", type=click.Path(exists=True), required=True)
@click.option("--skill", type=click.Choice([s.value for s in HelpingSkill]), required=True)
@click.option("--k", type=int, default=5)
@click.option("--time-of-day", default=None)
@click.option("--weather", default=None)
@click.option("--season", default=None)
@click.option("--location", default=None)
@click.pass_context
def kb_query(ctx: click.Context, text: str, store_path: str, skill: str, k: int,
             time_of_day: str | None, weather: str | None, season: str | None,
             location: str | None) -> None:
    """Stamp-aware retrieval against a quadruple file."""
    from .stsp import SpatioTemporalState

    store = KnowledgeStore(load_quads(store_path))
    state = SpatioTemporalState.from_dict(
        {"time_of_day": time_of_day, "weather": weather, "season": season, "location": location}
    )
    result = kstore.retrieve(store, text, state, HelpingSkill(skill), k)
    if ctx.obj["json"]:
        click.echo(json.dumps(
            {"gated": result.gated,
             "results": [{**sq.quad.to_dict(), "score": sq.score} for sq in result.quadruples]},
            ensure_ascii=False))
        return
    if not result.gated:
        click.echo(f"retrieval gated off: {skill} is not a knowledge-leaning skill")
        return
    if not result.quadruples:
        click.echo("no matching quadruples")
    for sq in result.quadruples:
        click.echo(f"{sq.score:.3f}  [{sq.quad.domain.value} | {sq.quad.slot} | "
                   f"{sq.quad.value} | {sq.quad.stamp or '-'}]")


@cli.group()
def stsp() -> None:
    """Spatiotemporal state commands."""


@stsp.command("extract")
@click.argument("text")
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.pass_context
def stsp_extract(ctx: click.Context, text: str, rules_path: str | None) -> None:
    """Extract the spatiotemporal state of a text and render its stamp."""
    rules = load_rules(rules_path)
    state = extract_state([text], rules=rules)
    stamp = make_stamp(state)
    if ctx.obj["json"]:
        click.echo(json.dumps(
            {"state": state.to_dict(include_evidence=True), "stamp": stamp.text},
            ensure_ascii=False))
    else:
        for field_name, value in state.to_dict().items():
            click.echo(f"{field_name}: {value or '-'}")
        click.echo(f"stamp: {stamp.text or '-'}")


@cli.group("eval")
def eval_group() -> None:
    """Evaluation harness commands."""


@eval_group.command("ghsc")
@click.option("--predictions", "predictions_path", type=click.Path(exists=True), required=True,
              help="JSON list of skill names, one per response unit.")
@click.option("--transcript", "transcript_path", type=click.Path(exists=True), default=None)
@click.pass_context
def eval_ghsc(ctx: click.Context, predictions_path: str, transcript_path: str | None) -> None:
    """Score skill attributions against the golden transcript."""
    transcript = evalharness.load_ghsc_transcript(transcript_path)
    raw = json.loads(Path(predictions_path).read_text("utf-8"))
    predictions = [HelpingSkill(p) for p in raw]
    accuracy = evalharness.score_ghsc(transcript, predictions)
    if ctx.obj["json"]:
        click.echo(json.dumps({"accuracy": accuracy, "total_units": len(transcript.units())}))
    else:
        click.echo(f"accuracy {accuracy:.3f} over {len(transcript.units())} units")


@eval_group.command("dump-gold")
@click.argument("out", type=click.Path())
def eval_dump_gold(out: str) -> None:
    """Write the golden transcript's labels as a predictions file."""
    transcript = evalharness.load_ghsc_transcript()
    Path(out).write_text(
        json.dumps([s.value for s in transcript.gold_skills()], indent=2), "utf-8"
    )
    click.echo(f"wrote {len(transcript.units())} gold labels to {out}")


@eval_group.command("gen")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="JSONL of {\"candidate\", \"reference\"} pairs.")
@click.option("--level", type=click.Choice(["corpus", "sentence"]), default="corpus")
@click.pass_context
def eval_gen(ctx: click.Context, pairs_path: str, level: str) -> None:
    """Generation metrics (BLEU-1/2, ROUGE-L, embedding similarity)."""
    from .backends import MockEmbeddingBackend

    pairs = []
    with Path(pairs_path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                pairs.append((d["candidate"], d["reference"]))
    if not pairs:
        raise RuntimeError("no pairs in input")
    if level == "corpus":
        bleu1 = evalharness.corpus_bleu([(c, [r]) for c, r in pairs], n=1)
        bleu2 = evalharness.corpus_bleu([(c, [r]) for c, r in pairs], n=2)
    else:
        bleu1 = sum(evalharness.bleu(c, [r], n=1) for c, r in pairs) / len(pairs)
        bleu2 = sum(evalharness.bleu(c, [r], n=2) for c, r in pairs) / len(pairs)
    rouge = sum(evalharness.rouge_l(c, r) for c, r in pairs) / len(pairs)
    seed = ctx.obj.get("seed") or 0
    embedder = MockEmbeddingBackend(seed=seed)
    sim = sum(evalharness.embed_sim(c, r, embedder) for c, r in pairs) / len(pairs)
    report = evalharness.EvalReport(bleu1=bleu1, bleu2=bleu2, rouge_l=rouge, embed_sim=sim)
    if ctx.obj["json"]:
        click.echo(json.dumps(report.to_dict()))
    else:
        click.echo(report.render_table())


@eval_group.command("quads")
@click.option("--gold", "gold_path", type=click.Path(exists=True), required=True)
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.pass_context
def eval_quads(ctx: click.Context, gold_path: str, pred_path: str) -> None:
    """Slot accuracy, value ROUGE-L, and stamp accuracy over aligned quads."""
    gold = load_quads(gold_path)
    pred = load_quads(pred_path)
    scores = evalharness.slot_value_scores(gold, pred)
    if ctx.obj["json"]:
        click.echo(json.dumps(scores.to_dict()))
    else:
        stamp = "-" if scores.stamp_accuracy is None else f"{scores.stamp_accuracy:.4f}"
        click.echo(f"slot_accuracy  {scores.slot_accuracy:.4f}")
        click.echo(f"value_rouge_l  {scores.value_rouge_l:.4f}")
        click.echo(f"stamp_accuracy {stamp}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with explicit exit codes (0 ok, 1 usage, 2 runtime)."""
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except click.exceptions.Exit as exc:  # e.g. --help
        return 0 if exc.exit_code == 0 else 1
    except (click.UsageError, ConfigError) as exc:
        click.echo(f"usage error: {exc}", err=True)
        return 1
    except click.Abort:
        return 1
    except Exception as exc:  # runtime failure
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
