"""Command-line entry point: ``czanaphora <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from . import __version__
from .baseline import ConlluError, emit_plain_text, ingest_conllu, resolve
from .client import ChatClient, EndpointConfig, RequestLog, run_batch, run_dir_name
from .corpus import (
    COREF_TYPES,
    PUBLISHED_COUNTS,
    SPLITS,
    CorpusError,
    Dataset,
    distance_sign_check,
    export_finetune_pairs,
    load_path,
    read_jsonl,
    write_jsonl,
)
from .mock import MODES as MOCK_MODES
from .mock import MockEndpoint
from .pipeline import (
    PredictionError,
    now,
    prediction_record,
    score_prediction,
    score_response,
    write_manifest,
    write_reports,
)
from .prompts import SHOT_COUNTS, STRATEGIES, PromptError, PromptInstance, render, render_all, select_exemplars
from .report import ReportError, aggregate
from .responses import parse_response
from .scorer import ScoreResult

logger = logging.getLogger("czanaphora")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_ENDPOINT = 0, 1, 2, 3

RUN_DEFAULTS: dict[str, Any] = {
    "split": "test",
    "strategy": "question_answering",
    "shots": 0,
    "seed": 0,
    "negative_ratio": 0.0,
    "strict_parse": False,
    "run_dir": "runs",
    "mock": None,
    "limit": None,
    "base_url": EndpointConfig.base_url,
    "model": EndpointConfig.model_id,
    "temperature": EndpointConfig.temperature,
    "max_tokens": EndpointConfig.max_output_tokens,
    "timeout": EndpointConfig.request_timeout,
    "max_retries": EndpointConfig.max_retries,
    "max_in_flight": EndpointConfig.max_in_flight,
    "backoff": EndpointConfig.backoff_initial,
}


class ConfigError(Exception):
    pass


def _load(args: argparse.Namespace, path: str | None = None) -> Dataset:
    aliases = json.loads(Path(args.aliases).read_text(encoding="utf-8")) if args.aliases else None
    target = Path(path or args.dataset)
    if not target.exists():
        raise ConfigError(f"dataset not found: {target}")
    return load_path(
        target,
        format=args.format,
        strict=args.strict,
        aliases=aliases,
        flip_distance_sign=args.flip_distance_sign,
    )


def _score_all(records: Sequence[dict], dataset: Dataset) -> list[tuple[str, ScoreResult]]:
    out = []
    for rec in records:
        pid = str(rec.get("id"))
        passage = dataset.get(pid)
        if passage is None:
            raise ReportError(f"prediction for unknown passage {pid!r}")
        out.append((pid, score_prediction(rec, passage)))
    return out


def _write_scores(path: Path, scored: Sequence[tuple[str, ScoreResult]]) -> None:
    write_jsonl(path, ({"id": pid, **res.to_json()} for pid, res in scored))


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        ds = _load(args)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    counts = ds.counts
    if len(ds) == 0:
        print("warning: dataset contains no passages", file=sys.stderr)
    mismatch = False
    print(f"{'split':<11} {'measure':<10} {'grammatical/textual':>22} {'published':>22}")
    for split in SPLITS:
        for measure in ("passages", "sentences", "words"):
            got = tuple(getattr(counts[split][t], measure) for t in COREF_TYPES)
            pub = PUBLISHED_COUNTS[split][measure]
            flag = "" if got == pub else "  (differs)"
            if measure == "passages" and got != pub:
                mismatch = True
            print(f"{split:<11} {measure:<10} {got[0]:>10}/{got[1]:<11} {pub[0]:>10}/{pub[1]:<11}{flag}")
    print(f"passages: {len(ds)}  rejected records: {len(ds.rejections)}")
    for rej in ds.rejections[: args.show_rejections]:
        print(f"  {rej}")
    sign = distance_sign_check(ds)
    print(f"distance sign vs span order: {sign}")
    if sign["inverted"] > sign["consistent"]:
        print("warning: distance sign looks inverted; consider --flip-distance-sign", file=sys.stderr)
    if ds.rejections or (args.check_published and mismatch):
        return EXIT_FAILURE
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    ds = _load(args)
    out = Path(args.out)
    if args.plain_text:
        text, ids = emit_plain_text(ds.split(args.split))
        out.write_text(text, encoding="utf-8")
        out.with_name(out.name + ".ids").write_text("\n".join(ids) + ("\n" if ids else ""), encoding="utf-8")
        print(f"wrote {len(ids)} passages to {out} (ids in {out.name}.ids)")
        return EXIT_OK
    pairs = export_finetune_pairs(ds, args.split)
    n = write_jsonl(out, ({"input": i, "target": t} for i, t in pairs))
    print(f"wrote {n} pairs to {out}")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    started = now()
    ds = _load(args)
    evaluation = ds.split(args.split)
    order = Path(args.ids).read_text(encoding="utf-8").split() if args.ids else None
    try:
        parsed, problems = ingest_conllu(args.conllu, evaluation, order)
    except ConlluError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    by_id = {pp.passage_id: pp for pp in parsed}
    modes = ["nearest", "abstain"] if args.fallback == "both" else [args.fallback]
    root = Path(args.out)
    summary = {}
    for mode in modes:
        run_dir = root / mode if len(modes) > 1 else root
        run_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for p in evaluation:
            span = resolve(by_id[p.id], mode) if p.id in by_id else None
            rows.append({"id": p.id, "span": span.to_json() if span else None})
        write_jsonl(run_dir / "predictions.jsonl", rows)
        scored = _score_all(rows, evaluation)
        _write_scores(run_dir / "scores.jsonl", scored)
        rep = aggregate(scored, evaluation, {"fallback": mode, "aligned_parses": len(parsed)})
        write_reports(run_dir, rep)
        acc = rep.accuracy("overall")
        summary[mode] = acc
        print(f"fallback={mode}: accuracy {acc if acc is None else f'{acc:.3f}'} over {rep.total} passages")
    write_manifest(
        root, "baseline", vars_config(args), [args.dataset, args.conllu], started,
        accuracy=summary, skipped_parses=problems,
    )
    return EXIT_OK


def vars_config(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}


def cmd_prompt_render(args: argparse.Namespace) -> int:
    ds = _load(args)
    evaluation = list(ds.split(args.split))
    if args.limit:
        evaluation = evaluation[: args.limit]
    exemplars = select_exemplars(ds, args.shots, args.seed, exclude=[p.id for p in evaluation])
    prompts = render_all(args.strategy, evaluation, exemplars, negative_ratio=args.negative_ratio, seed=args.seed)
    n = write_jsonl(args.out, (p.to_json() for p in prompts))
    print(f"wrote {n} prompts to {args.out}")
    return EXIT_OK


def cmd_prompt_goldens(args: argparse.Namespace) -> int:
    ds = _load(args)
    passage = ds[args.id] if args.id else ds.passages[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for strategy in STRATEGIES:
        cand = passage.subtree_surface if strategy == "yes_no" else None
        (out / f"{strategy}.txt").write_text(render(strategy, passage, (), cand).rendered, encoding="utf-8")
    print(f"wrote zero-shot prompts for {passage.id} to {out}")
    return EXIT_OK


def _run_settings(args: argparse.Namespace) -> dict[str, Any]:
    settings = dict(RUN_DEFAULTS)
    if args.config:
        try:
            settings.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad config file {args.config}: {exc}") from exc
    for key, value in vars(args).items():
        if value is not None and (key in RUN_DEFAULTS or key == "dataset"):
            settings[key] = value
    if not settings.get("dataset"):
        raise ConfigError("no dataset given (positional argument or 'dataset' in the config file)")
    if settings["strategy"] not in STRATEGIES:
        raise ConfigError(f"unknown strategy {settings['strategy']!r}")
    if int(settings["shots"]) not in SHOT_COUNTS:
        raise ConfigError(f"shots must be one of {SHOT_COUNTS}")
    if settings["mock"] is not None and settings["mock"] not in MOCK_MODES:
        raise ConfigError(f"unknown mock mode {settings['mock']!r}")
    return settings


def cmd_run(args: argparse.Namespace) -> int:
    started = now()
    s = _run_settings(args)
    ds = _load(args, s["dataset"])
    evaluation = list(ds.split(s["split"]))
    if s["limit"]:
        evaluation = evaluation[: int(s["limit"])]
    exemplars = select_exemplars(ds, int(s["shots"]), int(s["seed"]), exclude=[p.id for p in evaluation])
    prompts = render_all(
        s["strategy"], evaluation, exemplars, negative_ratio=float(s["negative_ratio"]), seed=int(s["seed"])
    )
    config = EndpointConfig(
        base_url=s["base_url"],
        model_id=s["model"],
        temperature=float(s["temperature"]),
        max_output_tokens=int(s["max_tokens"]),
        request_timeout=float(s["timeout"]),
        max_retries=int(s["max_retries"]),
        max_in_flight=int(s["max_in_flight"]),
        backoff_initial=float(s["backoff"]),
    )
    run_dir = Path(s["run_dir"]) / run_dir_name(s["strategy"], int(s["shots"]), config.model_id)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(run_dir / "prompts.jsonl", (p.to_json() for p in prompts))

    transport = None
    mock = None
    if s["mock"]:
        mock = MockEndpoint.for_prompts(s["mock"], prompts, ds)
        transport = mock.transport()
    log = RequestLog(run_dir / "requests.jsonl")
    with ChatClient(config, transport=transport, log=log) as client:
        results = run_batch(prompts, client, run_dir)

    responses, predictions, scored = [], [], []
    for prompt, res in zip(prompts, results):
        responses.append({"id": prompt.item_id, "raw": res.raw, "error": res.error, "cached": res.cached})
        parsed, score = score_response(prompt, res.raw, ds[prompt.passage_id], strict=bool(s["strict_parse"]))
        predictions.append(prediction_record(prompt, parsed))
        scored.append((prompt.passage_id, score))
    write_jsonl(run_dir / "responses.jsonl", responses)
    write_jsonl(run_dir / "predictions.jsonl", predictions)
    _write_scores(run_dir / "scores.jsonl", scored)
    extras: dict[str, Any] = {"strategy": s["strategy"], "shots": int(s["shots"]), "model": config.model_id}
    if s["strategy"] == "yes_no":
        extras["negative_ratio"] = float(s["negative_ratio"])
        answered_yes = sum(1 for r in predictions if r.get("label") == "YES")
        extras["yes_rate"] = round(answered_yes / len(predictions), 6) if predictions else None
    rep = aggregate(scored, ds, extras)
    write_reports(run_dir, rep)
    errors = [r for r in results if not r.ok]
    write_manifest(
        run_dir, "run", {**s, "endpoint": config.to_json()}, [s["dataset"]], started,
        dataset_hash=ds.source_hash,
        exemplars=[e.id for e in exemplars],
        items=len(prompts),
        new_requests=log.entries,
        cached_items=sum(r.cached for r in results),
        failed_items=len(errors),
    )
    acc = rep.accuracy("overall")
    print(
        f"{run_dir}: {len(prompts)} items, {sum(r.cached for r in results)} cached, {len(errors)} failed, "
        f"accuracy {'n/a' if acc is None else f'{acc:.3f}'}"
    )
    return EXIT_ENDPOINT if errors else EXIT_OK


def cmd_parse(args: argparse.Namespace) -> int:
    rows = read_jsonl(args.responses)
    out = []
    for row in rows:
        parsed = parse_response(args.strategy, row.get("raw") or "", strict=args.strict_parse)
        out.append({"id": row.get("id"), **parsed.to_json()})
    if args.out:
        write_jsonl(args.out, out)
    else:
        for row in out:
            print(json.dumps(row, ensure_ascii=False))
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    started = now()
    ds = _load(args)
    try:
        scored = _score_all(read_jsonl(args.predictions), ds)
        rep = aggregate(scored, ds)
    except (ReportError, PredictionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_scores(out / "scores.jsonl", scored)
    write_reports(out, rep)
    write_manifest(out, "score", vars_config(args), [args.dataset, args.predictions], started)
    acc = rep.accuracy("overall")
    print(f"accuracy {'n/a' if acc is None else f'{acc:.3f}'} over {rep.total} passages")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    started = now()
    ds = _load(args)
    try:
        scored = [(str(r["id"]), ScoreResult.from_json(r)) for r in read_jsonl(args.scores)]
        rep = aggregate(scored, ds)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reports(out, rep)
    write_manifest(out, "report", vars_config(args), [args.dataset, args.scores], started)
    print((out / "report.md").read_text(encoding="utf-8"))
    return EXIT_OK


def _dataset_args(p: argparse.ArgumentParser, optional: bool = False) -> None:
    if optional:
        p.add_argument("dataset", nargs="?", help="dataset file or directory")
    else:
        p.add_argument("dataset", help="dataset file or directory")
    p.add_argument("--format", choices=("json-lines", "tabular"), help="default: from file extension")
    p.add_argument("--strict", action="store_true", help="fail on any invalid record")
    p.add_argument("--aliases", help="JSON file mapping column names to loader field names")
    p.add_argument("--flip-distance-sign", action="store_true", help="negate the distance field on load")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="czanaphora", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load a dataset and compare split counts with the published ones")
    _dataset_args(p)
    p.add_argument("--check-published", action="store_true", help="exit 1 if passage counts differ")
    p.add_argument("--show-rejections", type=int, default=20)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export", help="write fine-tuning pairs, or plain text for an external parser")
    _dataset_args(p)
    p.add_argument("--split", choices=SPLITS, default="train")
    p.add_argument("--out", required=True)
    p.add_argument("--plain-text", action="store_true", help="blank-line separated passages plus an .ids file")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("baseline", help="run the rule-based baseline over CoNLL-U parses")
    _dataset_args(p)
    p.add_argument("conllu")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--ids", help="passage id order for CoNLL-U files without passage_id comments")
    p.add_argument("--fallback", choices=("nearest", "abstain", "both"), default="both")
    p.add_argument("--out", default="runs/baseline")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("prompt", help="render prompts")
    psub = p.add_subparsers(dest="prompt_command", required=True)
    r = psub.add_parser("render", help="write rendered prompts as JSON lines")
    _dataset_args(r)
    r.add_argument("--strategy", choices=STRATEGIES, required=True)
    r.add_argument("--shots", type=int, choices=SHOT_COUNTS, default=0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--split", choices=SPLITS, default="test")
    r.add_argument("--negative-ratio", type=float, default=0.0)
    r.add_argument("--limit", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_prompt_render)
    g = psub.add_parser("goldens", help="write zero-shot prompts of one passage for every strategy")
    _dataset_args(g)
    g.add_argument("--id", help="passage id (default: first passage)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_prompt_goldens)

    p = sub.add_parser("run", help="render, query an endpoint, parse, score and report")
    _dataset_args(p, optional=True)
    p.add_argument("--config", help="JSON file with run settings; flags override it")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--shots", type=int, choices=SHOT_COUNTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--negative-ratio", type=float)
    p.add_argument("--strict-parse", action="store_true", default=None)
    p.add_argument("--limit", type=int)
    p.add_argument("--run-dir")
    p.add_argument("--base-url")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--backoff", type=float, help="initial retry backoff in seconds")
    p.add_argument("--mock", choices=MOCK_MODES, help="answer from an in-process mock endpoint")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("parse", help="parse raw responses (JSON lines with id, raw)")
    p.add_argument("responses")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--strict-parse", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("score", help="score a predictions file")
    _dataset_args(p)
    p.add_argument("predictions")
    p.add_argument("--out", default="runs/score")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="rebuild reports from a scores file")
    _dataset_args(p)
    p.add_argument("scores")
    p.add_argument("--out", default="runs/report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ConfigError, PromptError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
