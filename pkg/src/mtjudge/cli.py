"""Command-line harness: end-to-end runs and report tables.

Subcommands: ingest, sample, prompt, run, parse, score, metaeval, shapley,
sigtest, sft-build, ced-eval, report. Every config-file key can be overridden
by a command-line flag of the same name; every command is deterministic given
its config and the replay store. Exit codes: 0 success, 1 usage/config error,
2 data error, 3 gateway error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, metaeval, parsing, prompting
from .corpus import (Corpus, CorpusError, build_sft_dataset, load_corpus,
                     sample_demonstrations, sample_test_subset, write_corpus,
                     write_sft_records)
from .data import InputMode
from .gateway import (DecodingParams, Gateway, GatewayError, ModelSpec,
                      TranscriptStore, UsageLedger)
from .metaeval import MetaEvalError
from .parsing import (EvalRecord, ParseError, apply_error_policy,
                      apply_score_policy, read_records, resolve_predictions,
                      write_records)
from .scoring import (ScoringError, SegmentScore, WeightTable, mqm_score,
                      read_scores, system_scores, write_scores)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GATEWAY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

_INT_KEYS = {"seed", "demo_k", "max_tokens", "n_resamples", "n_sources",
             "concurrency"}
_FLOAT_KEYS = {"temperature", "alpha", "price_per_1k", "weight_major",
               "weight_minor", "weight_neutral", "weight_floor",
               "weight_non_translation", "threshold", "no_error_target"}


def load_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; # starts a comment line."""
    cfg: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise UsageError(f"config key {key}: cannot parse {value!r}")
    return value


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        for key, value in cfg.items():
            if hasattr(args, key) and getattr(args, key) is None:
                setattr(args, key, _coerce(key, value))
    return args


def _require(args: argparse.Namespace, *keys: str) -> None:
    for key in keys:
        if getattr(args, key, None) is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")


def _default(args: argparse.Namespace, **defaults) -> None:
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _parse_modes(value: str) -> list[InputMode]:
    modes = [InputMode.from_string(part)
             for part in value.split(",") if part.strip()]
    if not modes:
        raise UsageError("modes must be non-empty")
    return modes


def _weight_table(args: argparse.Namespace) -> WeightTable:
    return WeightTable(
        major=args.weight_major if args.weight_major is not None else -5.0,
        minor=args.weight_minor if args.weight_minor is not None else -1.0,
        neutral=args.weight_neutral if args.weight_neutral is not None else 0.0,
        non_translation=args.weight_non_translation,
        floor=args.weight_floor,
    )


def _load_gold(args: argparse.Namespace) -> Corpus:
    _require(args, "corpus")
    return load_corpus(args.corpus, args.format or "native-jsonl",
                       lp=args.lp, weights=_weight_table(args))


def _gateway(args: argparse.Namespace) -> Gateway:
    store = TranscriptStore(args.store_dir) if args.store_dir else None
    return Gateway(
        store=store,
        mode=args.replay or "record",
        price_per_1k=args.price_per_1k or 0.0,
        concurrency=args.concurrency if args.concurrency is not None else 4,
    )


# ---------------------------------------------------------------------------
# Table rendering (Markdown for humans, TSV for machines, 3 decimals)
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def write_table(out_dir: Path, name: str, headers: list[str],
                rows: list[list]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [[_fmt(v) for v in row] for row in rows]
    with open(out_dir / f"{name}.tsv", "w", encoding="utf-8") as f:
        f.write("\t".join(headers) + "\n")
        for row in cells:
            f.write("\t".join(row) + "\n")
    with open(out_dir / f"{name}.md", "w", encoding="utf-8") as f:
        f.write("| " + " | ".join(headers) + " |\n")
        f.write("|" + "|".join(" --- " for _ in headers) + "|\n")
        for row in cells:
            f.write("| " + " | ".join(row) + " |\n")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    corpus = _load_gold(args)
    _require(args, "out")
    write_corpus(args.out, corpus)
    print(f"ingested {len(corpus)} segments "
          f"({len(corpus.source_units())} sources) -> {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    corpus = _load_gold(args)
    _require(args, "out", "n_sources")
    _default(args, seed=0)
    subset = sample_test_subset(corpus, args.n_sources, args.seed)
    write_corpus(args.out, subset)
    print(f"sampled {args.n_sources} sources -> {len(subset)} segments "
          f"-> {args.out}")
    return EXIT_OK


def _demos_by_lp(args, modes: list[InputMode]) -> dict[str, list]:
    if not args.demo_pool or not args.demo_k:
        return {}
    pool = load_corpus(args.demo_pool, args.format or "native-jsonl",
                       weights=_weight_table(args))
    needs_ref = any(m.includes_reference for m in modes)
    demos = {}
    for lp in pool.lps():
        lp_pool = Corpus(s for s in pool if s.lp.code == lp)
        if needs_ref:
            lp_pool = Corpus(s for s in lp_pool if s.reference)
        demos[lp] = sample_demonstrations(lp_pool, args.demo_k,
                                          args.seed if args.seed is not None
                                          else 0)
    return demos


def cmd_prompt(args) -> int:
    corpus = _load_gold(args)
    _require(args, "out", "modes", "template")
    modes = _parse_modes(args.modes)
    template = args.template
    if template not in ("gemba-sqm", "automqm"):
        raise UsageError(f"unknown template {template!r}")
    if any(m.includes_reference for m in modes):
        missing = [s.key for s in corpus if not s.reference]
        if missing:
            raise CorpusError(
                f"{len(missing)} segments lack references but a reference "
                f"mode was requested (first: {missing[0]})")
    demos = _demos_by_lp(args, modes) if template == "automqm" else {}
    rows = []
    for segment in corpus:
        for mode in modes:
            if template == "gemba-sqm":
                rendered = prompting.render_gemba_sqm(segment, mode)
            else:
                rendered = prompting.render_automqm(
                    segment, mode, demos.get(segment.lp.code, []))
            rows.append({
                "lp": segment.lp.code, "system": segment.system_id,
                "seg_id": segment.seg_id, "mode": mode.value,
                "template": template, "text": rendered.text,
            })
    with open(args.out, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"rendered {len(rows)} prompts -> {args.out}")
    return EXIT_OK


def _read_prompts(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: bad prompt row: {exc}",
                                 raw=line)
    return rows


def cmd_run(args) -> int:
    _require(args, "prompts", "out", "model_name", "endpoint")
    _default(args, model_kind="chat", temperature=0.0, max_tokens=512,
             out_dir="runs")
    prompts = _read_prompts(args.prompts)
    spec = ModelSpec(
        name=args.model_name, kind=args.model_kind, endpoint=args.endpoint,
        decoding=DecodingParams(temperature=args.temperature,
                                max_tokens=args.max_tokens))
    gw = _gateway(args)
    results = gw.batch_complete(spec, [row["text"] for row in prompts])
    ledger = UsageLedger()
    records = []
    for row, (text, usage) in zip(prompts, results):
        records.append(EvalRecord(
            lp=row["lp"], system=row["system"], seg_id=int(row["seg_id"]),
            mode=row["mode"], template=row["template"], raw_output=text))
        ledger.add(row["template"], row["mode"], row["lp"], usage)
    write_records(args.out, records)
    usage_rows = ledger.report()
    out_dir = Path(args.out_dir)
    write_table(out_dir, "usage",
                ["prompt", "mode", "lp", "samples", "tokens", "cost"],
                [[r["prompt"], r["mode"], r["lp"], r["samples"], r["tokens"],
                  round(r["cost"], 6)] for r in usage_rows])
    _write_json(out_dir / "usage.json", usage_rows)
    print(f"completed {len(records)} prompts -> {args.out}")
    return EXIT_OK


def cmd_parse(args) -> int:
    corpus = _load_gold(args)
    _require(args, "records", "out")
    records = read_records(args.records)
    resolved, diags = resolve_predictions(records, corpus.translations())
    with open(args.out, "w", encoding="utf-8") as f:
        for pred in resolved:
            row = {
                "lp": pred.record.lp, "system": pred.record.system,
                "seg_id": pred.record.seg_id, "mode": pred.record.mode,
                "template": pred.record.template, "ok": pred.ok,
            }
            if pred.score is not None:
                row["score"] = pred.score
            if pred.errors is not None:
                row["errors"] = [
                    {"severity": e.severity, "category": e.category.raw,
                     "span": e.span_text, "word_span": sorted(e.word_span)}
                    for e in pred.errors
                ]
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"parsed {diags.parsed}/{diags.total} outputs "
          f"({diags.failed} failures, {diags.unaligned_spans} unaligned "
          f"spans) -> {args.out}")
    return EXIT_OK


def _resolve_groups(args, corpus):
    """records file -> {(template, mode): [ResolvedPrediction]} + diags."""
    records = read_records(args.records)
    known = set(corpus.translations())
    unknown = [r.key for r in records if r.key not in known]
    if unknown:
        raise CorpusError(
            f"{len(unknown)} records reference segments missing from the "
            f"corpus (first: {unknown[0]})")
    resolved, diags = resolve_predictions(records, corpus.translations())
    groups: dict[tuple[str, str], list] = {}
    for pred in resolved:
        groups.setdefault((pred.record.template, pred.record.mode),
                          []).append(pred)
    return groups, diags


def _group_scores(args, groups, weights):
    """Per-(template, mode) segment score maps under the failure policies."""
    score_policy = args.score_policy or "median"
    error_policy = args.error_policy or "no-error"
    out = {}
    for (template, mode), preds in groups.items():
        if template == "automqm":
            errors = apply_error_policy(preds, error_policy)
            out[(template, mode)] = {
                key: mqm_score(errs, weights) for key, errs in errors.items()}
        else:
            out[(template, mode)] = apply_score_policy(preds, score_policy)
    return out


def cmd_score(args) -> int:
    corpus = _load_gold(args)
    _require(args, "records", "out")
    groups, _ = _resolve_groups(args, corpus)
    scores = _group_scores(args, groups, _weight_table(args))
    rows = []
    for (template, mode) in sorted(scores):
        kind = "mqm" if template == "automqm" else "sqm"
        for (lp, system, seg_id), value in sorted(scores[(template, mode)]
                                                  .items()):
            rows.append(SegmentScore(lp=lp, system=system, seg_id=seg_id,
                                     kind=kind, value=value))
    write_scores(args.out, rows)
    print(f"scored {len(rows)} segments -> {args.out}")
    return EXIT_OK


_MODE_ORDER = {m.value: i for i, m in enumerate(InputMode)}


def _sorted_group_keys(score_maps):
    return sorted(score_maps, key=lambda tm: (tm[0],
                                              _MODE_ORDER.get(tm[1], 99)))


def _safe(fn, *fn_args):
    try:
        return fn(*fn_args)
    except (MetaEvalError, ScoringError) as exc:
        logger.warning("statistic unavailable: %s", exc)
        return None


def cmd_metaeval(args) -> int:
    corpus = _load_gold(args)
    _require(args, "records", "out_dir")
    _default(args, n_resamples=1000, alpha=0.05, seed=0)
    weights = _weight_table(args)
    groups, diags = _resolve_groups(args, corpus)
    if diags.parsed == 0:
        raise ParseError("no records parsed; nothing to evaluate", raw="")
    score_maps = _group_scores(args, groups, weights)
    gold_scores = corpus.gold_scores()
    gold_errors = corpus.gold_errors()
    word_counts = parsing.word_counts_for(corpus.translations())
    lps = corpus.lps()

    score_rows, span_rows, category_rows = [], [], []
    for (template, mode) in _sorted_group_keys(score_maps):
        scores = score_maps[(template, mode)]
        keys = sorted(scores)
        gold_sub = {k: gold_scores[k] for k in keys}
        row = {"template": template, "mode": mode}
        row["acc"] = _safe(
            lambda: metaeval.system_accuracy(system_scores(gold_sub),
                                             system_scores(scores)))
        for lp in lps:
            lp_keys = [k for k in keys if k[0] == lp]
            g = [gold_sub[k] for k in lp_keys]
            m = [scores[k] for k in lp_keys]
            row[f"{lp}_tau"] = _safe(metaeval.kendall_tau, g, m)
            row[f"{lp}_rho"] = _safe(metaeval.pearson, g, m)
        score_rows.append(row)

        if template == "automqm":
            errors = apply_error_policy(groups[(template, mode)],
                                        args.error_policy or "no-error")
            gold_err_sub = {k: gold_errors[k] for k in errors}
            wc_sub = {k: word_counts[k] for k in errors}
            sm = metaeval.span_metrics(gold_err_sub, errors, wc_sub)
            span_rows.append({
                "template": template, "mode": mode,
                "sp": sm.sp, "sr": sm.sr, "sf1": sm.sf1,
                "mp": sm.mp, "mr": sm.mr, "mf1": sm.mf1, "mcc": sm.mcc,
            })
            cm = metaeval.category_metrics(gold_err_sub, errors)
            for category, (p, r, f1) in sorted(cm.per_category.items()):
                category_rows.append({
                    "template": template, "mode": mode, "category": category,
                    "p": p, "r": r, "f1": f1,
                })

    shapley_rows = _shapley_rows(score_rows, lps)
    significance = _significance(args, score_maps, score_rows, gold_scores,
                                 lps)

    results = {
        "diagnostics": {"total": diags.total, "parsed": diags.parsed,
                        "failed": diags.failed,
                        "unaligned_spans": diags.unaligned_spans},
        "lps": lps,
        "score_table": score_rows,
        "span_table": span_rows,
        "category_table": category_rows,
        "shapley_table": shapley_rows,
        "significance": significance,
    }
    out_dir = Path(args.out_dir)
    _write_json(out_dir / "results.json", results)
    _render_report(out_dir, results)
    print(f"meta-evaluation complete -> {out_dir}")
    return EXIT_OK


def _shapley_rows(score_rows, lps) -> list[dict]:
    rows = []
    by_template: dict[str, dict[str, dict]] = {}
    for row in score_rows:
        by_template.setdefault(row["template"], {})[row["mode"]] = row
    for template in sorted(by_template):
        modes = by_template[template]
        if set(modes) != {m.value for m in InputMode}:
            continue
        columns = ["acc"] + [f"{lp}_tau" for lp in lps]
        parts = {"src": {}, "ref": {}}
        for column in columns:
            values = {mode: modes[mode][column] for mode in modes}
            if any(v is None for v in values.values()):
                parts["src"][column] = None
                parts["ref"][column] = None
                continue
            result = metaeval.shapley(values)
            parts["src"][column] = result.src
            parts["ref"][column] = result.ref
        for part in ("src", "ref"):
            rows.append({"template": template, "part": part,
                         **parts[part]})
    return rows


def _significance(args, score_maps, score_rows, gold_scores, lps):
    """Best mode vs every other mode, per template and metric column."""
    out = []
    by_template: dict[str, dict[str, dict]] = {}
    for row in score_rows:
        by_template.setdefault(row["template"], {})[row["mode"]] = row
    for template in sorted(by_template):
        rows = by_template[template]
        if len(rows) < 2:
            continue
        columns = (["acc"] + [f"{lp}_tau" for lp in lps]
                   + [f"{lp}_rho" for lp in lps])
        for column in columns:
            values = {mode: row[column] for mode, row in rows.items()
                      if row[column] is not None}
            if len(values) < 2:
                continue
            best = max(values, key=values.get)
            if column == "acc":
                target, lp_filter = "accuracy", None
            elif column.endswith("_tau"):
                target, lp_filter = "tau", column[:-len("_tau")]
            else:
                target, lp_filter = "pearson", column[:-len("_rho")]
            comparisons = {}
            for other in sorted(values):
                if other == best:
                    continue
                a = score_maps[(template, best)]
                b = score_maps[(template, other)]
                keys = set(a) & set(b)
                if lp_filter is not None:
                    keys = {k for k in keys if k[0] == lp_filter}
                a = {k: a[k] for k in keys}
                b = {k: b[k] for k in keys}
                g = {k: gold_scores[k] for k in keys}
                result = _safe(metaeval.perm_both_test, a, b, g, target,
                               args.n_resamples, args.alpha, args.seed)
                comparisons[other] = None if result is None else result.p_value
            ps = [p for p in comparisons.values()]
            significant = bool(ps) and all(
                p is not None and p < args.alpha for p in ps)
            out.append({"template": template, "column": column,
                        "best_mode": best, "comparisons": comparisons,
                        "significant": significant})
    return out


def _render_report(out_dir: Path, results: dict) -> None:
    lps = results["lps"]
    stars = {(s["template"], s["best_mode"], s["column"])
             for s in results["significance"] if s["significant"]}

    headers = ["template", "mode", "acc"]
    for lp in lps:
        headers += [f"{lp}_tau", f"{lp}_rho"]
    rows = []
    for row in results["score_table"]:
        cells = [row["template"], row["mode"]]
        for column in headers[2:]:
            value = row[column]
            cell = _fmt(value)
            if (row["template"], row["mode"], column) in stars:
                cell += "*"
            cells.append(cell)
        rows.append(cells)
    write_table(out_dir, "score_table", headers, rows)

    if results["span_table"]:
        write_table(out_dir, "span_table",
                    ["template", "mode", "sp", "sr", "sf1", "mp", "mr",
                     "mf1", "mcc"],
                    [[r["template"], r["mode"], r["sp"], r["sr"], r["sf1"],
                      r["mp"], r["mr"], r["mf1"], r["mcc"]]
                     for r in results["span_table"]])

    if results["category_table"]:
        write_table(out_dir, "category_table",
                    ["template", "mode", "category", "p", "r", "f1"],
                    [[r["template"], r["mode"], r["category"], r["p"],
                      r["r"], r["f1"]] for r in results["category_table"]])

    if results["shapley_table"]:
        headers = ["template", "part", "acc"] + [f"{lp}_tau" for lp in lps]
        write_table(out_dir, "shapley_table", headers,
                    [[r["template"], r["part"], r["acc"]]
                     + [r[f"{lp}_tau"] for lp in lps]
                     for r in results["shapley_table"]])

    if results["significance"]:
        write_table(out_dir, "significance",
                    ["template", "column", "best_mode", "other_mode", "p"],
                    [[s["template"], s["column"], s["best_mode"], other, p]
                     for s in results["significance"]
                     for other, p in sorted(s["comparisons"].items())])


def cmd_shapley(args) -> int:
    values = {}
    for mode, flag in ((InputMode.T, "score_t"), (InputMode.ST, "score_st"),
                       (InputMode.RT, "score_rt"),
                       (InputMode.SRT, "score_srt")):
        value = getattr(args, flag)
        if value is None:
            raise UsageError(f"missing --{flag.replace('_', '-')}")
        values[mode] = float(value)
    result = metaeval.shapley(values)
    payload = {"src": result.src, "ref": result.ref, "basis": result.basis}
    if args.out:
        _write_json(Path(args.out), payload)
    print(f"src {result.src:.3f}  ref {result.ref:.3f}")
    return EXIT_OK


def cmd_sigtest(args) -> int:
    corpus = _load_gold(args)
    _require(args, "scores_a", "scores_b")
    _default(args, target="tau", n_resamples=1000, alpha=0.05, seed=0)
    a = {s.key: s.value for s in read_scores(args.scores_a)}
    b = {s.key: s.value for s in read_scores(args.scores_b)}
    gold = corpus.gold_scores()
    keys = set(a) & set(b) & set(gold)
    if args.sig_lp:
        keys = {k for k in keys if k[0] == args.sig_lp}
    if not keys:
        raise MetaEvalError("no common segments between the score files "
                            "and the corpus")
    result = metaeval.perm_both_test(
        {k: a[k] for k in keys}, {k: b[k] for k in keys},
        {k: gold[k] for k in keys}, target=args.target,
        n=args.n_resamples, alpha=args.alpha, seed=args.seed)
    payload = {"p_value": result.p_value, "statistic": result.statistic,
               "n_resamples": result.n_resamples, "alpha": result.alpha,
               "significant": result.significant}
    if args.out:
        _write_json(Path(args.out), payload)
    print(f"delta {result.statistic:.4f}  p {result.p_value:.4f}  "
          f"{'significant' if result.significant else 'not significant'} "
          f"at alpha={result.alpha}")
    return EXIT_OK


def cmd_sft_build(args) -> int:
    corpus = _load_gold(args)
    _require(args, "out")
    _default(args, seed=0, no_error_target=0.3, modes="S-T,R-T,S-R-T",
             out_dir="runs")
    modes = _parse_modes(args.modes)
    records, stats = build_sft_dataset(corpus, args.seed,
                                       args.no_error_target, modes)
    write_sft_records(args.out, records)
    rows = stats.rows()
    out_dir = Path(args.out_dir)
    write_table(out_dir, "sft_stats",
                ["lp", "#S-T", "#R-T", "#S-R-T", "total", "no_error_pct"],
                [[r["lp"], r["#S-T"], r["#R-T"], r["#S-R-T"], r["total"],
                  r["no_error_pct"]] for r in rows])
    _write_json(out_dir / "sft_stats.json", rows)
    print(f"built {len(records)} training records -> {args.out}")
    return EXIT_OK


def cmd_ced_eval(args) -> int:
    corpus = _load_gold(args)
    _require(args, "records")
    groups, _ = _resolve_groups(args, corpus)
    predictions: dict[tuple, list] = {}
    for (template, _mode), preds in groups.items():
        if template != "automqm":
            continue
        predictions.update(apply_error_policy(preds,
                                              args.error_policy or "no-error"))
    if not predictions:
        raise MetaEvalError("no error predictions in the records file")
    gold = {key: errs for key, errs in corpus.gold_errors().items()
            if key in predictions}
    result = metaeval.critical_error_eval(gold, predictions)
    payload = {"sp": result.sp, "sr": result.sr, "sf1": result.sf1,
               "accuracy": result.accuracy}
    if args.out:
        _write_json(Path(args.out), payload)
    print(f"SP {result.sp:.3f}  SR {result.sr:.3f}  SF1 {result.sf1:.3f}  "
          f"accuracy {result.accuracy:.3f}")
    return EXIT_OK


def cmd_report(args) -> int:
    _require(args, "results", "out_dir")
    with open(args.results, encoding="utf-8") as f:
        results = json.load(f)
    _render_report(Path(args.out_dir), results)
    print(f"report rendered -> {args.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--corpus", help="gold corpus file")
    sub.add_argument("--format", choices=["native-jsonl", "wmt-mqm-tsv"])
    sub.add_argument("--lp", help="language pair code for TSV corpora")
    sub.add_argument("--weight-major", type=float, dest="weight_major")
    sub.add_argument("--weight-minor", type=float, dest="weight_minor")
    sub.add_argument("--weight-neutral", type=float, dest="weight_neutral")
    sub.add_argument("--weight-floor", type=float, dest="weight_floor")
    sub.add_argument("--weight-non-translation", type=float,
                     dest="weight_non_translation")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output file")
    sub.add_argument("--out-dir", dest="out_dir", help="report directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="mtjudge",
                     description="LLM translation-evaluation harness")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, func, help_text):
        p = subs.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=func)
        return p

    sub("ingest", cmd_ingest, "load a corpus and write it in native form")

    p = sub("sample", cmd_sample, "sample source sentences with all outputs")
    p.add_argument("--n-sources", type=int, dest="n_sources")

    p = sub("prompt", cmd_prompt, "render prompts for a corpus")
    p.add_argument("--template", choices=["gemba-sqm", "automqm"])
    p.add_argument("--modes", help="comma-separated input modes")
    p.add_argument("--demo-pool", dest="demo_pool")
    p.add_argument("--demo-k", type=int, dest="demo_k")

    p = sub("run", cmd_run, "complete prompts against a model endpoint")
    p.add_argument("--prompts")
    p.add_argument("--model-name", dest="model_name")
    p.add_argument("--model-kind", dest="model_kind",
                   choices=["chat", "base"])
    p.add_argument("--endpoint")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int, dest="max_tokens")
    p.add_argument("--price-per-1k", type=float, dest="price_per_1k")
    p.add_argument("--store-dir", dest="store_dir")
    p.add_argument("--replay", choices=["record", "replay"])
    p.add_argument("--concurrency", type=int)

    p = sub("parse", cmd_parse, "parse raw model outputs")
    p.add_argument("--records")

    p = sub("score", cmd_score, "turn parsed outputs into segment scores")
    p.add_argument("--records")
    p.add_argument("--score-policy", dest="score_policy",
                   choices=["median", "drop", "zero"])
    p.add_argument("--error-policy", dest="error_policy",
                   choices=["no-error", "drop"])

    p = sub("metaeval", cmd_metaeval, "full meta-evaluation report")
    p.add_argument("--records")
    p.add_argument("--score-policy", dest="score_policy",
                   choices=["median", "drop", "zero"])
    p.add_argument("--error-policy", dest="error_policy",
                   choices=["no-error", "drop"])
    p.add_argument("--n-resamples", type=int, dest="n_resamples")
    p.add_argument("--alpha", type=float)

    p = sub("shapley", cmd_shapley, "source/reference Shapley values")
    p.add_argument("--score-t", dest="score_t", type=float)
    p.add_argument("--score-st", dest="score_st", type=float)
    p.add_argument("--score-rt", dest="score_rt", type=float)
    p.add_argument("--score-srt", dest="score_srt", type=float)

    p = sub("sigtest", cmd_sigtest, "paired permutation significance test")
    p.add_argument("--scores-a", dest="scores_a")
    p.add_argument("--scores-b", dest="scores_b")
    p.add_argument("--target", choices=["tau", "pearson", "accuracy"])
    p.add_argument("--sig-lp", dest="sig_lp",
                   help="restrict the test to one language pair")
    p.add_argument("--n-resamples", type=int, dest="n_resamples")
    p.add_argument("--alpha", type=float)

    p = sub("sft-build", cmd_sft_build, "build an instruction-tuning set")
    p.add_argument("--no-error-target", type=float, dest="no_error_target")
    p.add_argument("--modes", help="comma-separated training modes")

    p = sub("ced-eval", cmd_ced_eval, "critical error detection metrics")
    p.add_argument("--records")
    p.add_argument("--error-policy", dest="error_policy",
                   choices=["no-error", "drop"])

    p = sub("report", cmd_report, "re-render tables from results.json")
    p.add_argument("--results")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except (CorpusError, ParseError, ScoringError, MetaEvalError,
            prompting.PromptError, OSError, json.JSONDecodeError,
            ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
