"""Command-line front end: ``trafficpsm {evaluate,balance,synth,compare}``.

Exit codes: 0 success, 1 usage or data error, 2 methodological failure
(no balanced control pool, model fit failure, or an unbalanced fixed-m pass).
Every error prints one line to stderr of the form
``error=<code> key=value ... message="..."``.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from . import __version__, report
from .dataset import covariate_matrix, load_study, load_study_configs, write_study_csv
from .errors import (
    InsufficientControlPoolError,
    ModelFitError,
    ParseError,
    PSMError,
    SchemaError,
)
from .matching import Method
from .pipeline import EvaluationConfig, compare_methods, evaluate, single_pass
from .synthetic import ScenarioSpec, generate_synthetic

EXIT_OK, EXIT_DATA, EXIT_METHOD = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _error_line(code: str, message: str, **fields) -> str:
    parts = [f"error={code}"]
    parts += [f"{k}={json.dumps(str(v), ensure_ascii=False)}" for k, v in fields.items()]
    parts.append(f"message={json.dumps(str(message), ensure_ascii=False)}")
    return " ".join(parts)


def _fail(code: str, message: str, exit_code: int = EXIT_DATA, **fields) -> int:
    print(_error_line(code, message, **fields), file=sys.stderr)
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trafficpsm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"trafficpsm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def study_args(p, with_method=True):
        p.add_argument("--data", required=True, help="hourly CSV")
        p.add_argument("--study", required=True, help="study config JSON (windows, covariates, segments)")
        p.add_argument("--config", help="evaluation config JSON")
        if with_method:
            p.add_argument("--method", choices=[m.value for m in Method])
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--max-weeks", type=int, dest="max_weeks")
        p.add_argument("--out", default=".", help="report directory (default: current)")
        p.add_argument("--jobs", type=int, default=1, help="threads for split search (results do not depend on it)")

    study_args(sub.add_parser("evaluate", help="iterate the control pool until balanced and report the effect"))
    bal = sub.add_parser("balance", help="one matching and balance pass at a fixed pool size")
    study_args(bal)
    bal.add_argument("--m", type=int, required=True, help="number of control weeks")
    study_args(sub.add_parser("compare", help="evaluate with probit, GBM and XGBoost"), with_method=False)

    syn = sub.add_parser("synth", help="generate a synthetic study")
    syn.add_argument("--config", required=True, help="scenario spec JSON")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True, help="output directory")
    return parser


def _eval_config(args) -> EvaluationConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise json.JSONDecodeError("expected an object", args.config, 0)
    if getattr(args, "method", None):
        doc["method"] = args.method
    for key in ("seed", "alpha", "max_weeks"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    doc["n_jobs"] = args.jobs
    return EvaluationConfig.from_dict(doc)


def _load(args):
    configs = load_study_configs(args.study)
    tables = [load_study(args.data, cfg) for cfg in configs]
    data_hash = hashlib.sha256(Path(args.data).read_bytes()).hexdigest()
    return configs, tables, data_hash


def _report_config(configs, eval_config: EvaluationConfig, data_hash: str, **extra) -> dict:
    return {
        "study": [c.to_dict() for c in configs],
        "evaluation": eval_config.report_dict(),
        "data_sha256": data_hash,
        **extra,
    }


def _emit(doc: report.ReportDocument, out_dir, name: str, text: str) -> Path:
    path = doc.write(Path(out_dir) / name)
    print(text)
    print(f"report: {path}")
    return path


def cmd_evaluate(args) -> int:
    config = _eval_config(args)
    configs, tables, data_hash = _load(args)
    results, texts, failures = [], [], []
    for table in tables:
        try:
            r = report.result_to_dict(evaluate(table, config))
            texts.append(report.iteration_table(r))
            texts.append(report.balance_table(r["balance"], f"{r['segment_id']} balance at {r['sample_size_weeks']} weeks"))
        except InsufficientControlPoolError as exc:
            r = report.failure_to_dict(table.segment_id, config.method.value, "insufficient_control_pool", str(exc), exc.trace)
            failures.append(_error_line("insufficient_control_pool", exc, segment=table.segment_id,
                                        method=config.method.value, iterations=len(exc.trace)))
        except ModelFitError as exc:
            r = report.failure_to_dict(table.segment_id, config.method.value, "model_fit_error", str(exc), exc.trace)
            failures.append(_error_line("model_fit_error", exc.cause, segment=table.segment_id,
                                        method=exc.method, m=exc.m))
        results.append(r)
    doc = report.ReportDocument.build("evaluate", _report_config(configs, config, data_hash),
                                      {"results": results}, config.seed, tables)
    _emit(doc, args.out, "evaluate_report.json", "\n\n".join([report.result_table(results), *texts]))
    for line in failures:
        print(line, file=sys.stderr)
    return EXIT_METHOD if failures else EXIT_OK


def cmd_balance(args) -> int:
    config = _eval_config(args)
    configs, tables, data_hash = _load(args)
    sections, texts, failures = [], [], []
    for table in tables:
        if not 1 <= args.m <= len(table.week_order):
            return _fail("bad_argument", f"--m must be in 1..{len(table.week_order)}", segment=table.segment_id, m=args.m)
        try:
            res = single_pass(table, config, args.m)
        except ModelFitError as exc:
            sections.append({"segment_id": table.segment_id, "m": args.m, "status": "model_fit_error", "message": str(exc)})
            failures.append(_error_line("model_fit_error", exc.cause, segment=table.segment_id, method=exc.method, m=args.m))
            continue
        X, y = covariate_matrix(res.table)
        treated, matched = X[res.pairs.treated_indices], X[res.pairs.control_indices]
        ecdf = {
            name: {
                "treated": report.ecdf_to_dict(treated[:, k]),
                "control_before": report.ecdf_to_dict(X[y == 0, k]),
                "control_after": report.ecdf_to_dict(matched[:, k]),
            }
            for k, name in enumerate(res.table.covariate_names)
        }
        ok = res.overlap.passed and res.balance.balanced
        sections.append({
            "segment_id": table.segment_id,
            "m": args.m,
            "status": "ok" if ok else "unbalanced",
            "windows": list(res.table.week_order),
            "overlap": report.overlap_to_dict(res.overlap),
            "balance": report.balance_to_dict(res.balance),
            "ecdf": ecdf,
        })
        bp = res.overlap
        texts.append(report.balance_table(report.balance_to_dict(res.balance),
                                          f"{table.segment_id} ({config.method.value}), {args.m} control weeks"))
        texts.append("\n".join(
            [f"common support coverage {bp.coverage:.2f} (threshold {bp.threshold:.2f}): {'pass' if bp.passed else 'fail'}"]
            + [f"  {g} scores min/q1/median/q3/max: " + " ".join(f"{v:.3f}" for v in s)
               for g, s in (("treated", bp.treated_summary), ("control", bp.control_summary))]
        ))
        if not ok:
            failures.append(_error_line("unbalanced", "common support or balance failed", segment=table.segment_id,
                                        m=args.m, failing=",".join(res.balance.failing) or "-",
                                        coverage=f"{bp.coverage:.4f}"))
    doc = report.ReportDocument.build("balance", _report_config(configs, config, data_hash, m=args.m),
                                      {"segments": sections}, config.seed, tables)
    _emit(doc, args.out, "balance_report.json", "\n\n".join(texts))
    for line in failures:
        print(line, file=sys.stderr)
    return EXIT_METHOD if failures else EXIT_OK


def cmd_compare(args) -> int:
    config = _eval_config(args)
    configs, tables, data_hash = _load(args)
    comparisons = [report.comparison_to_dict(compare_methods(t, config)) for t in tables]
    doc = report.ReportDocument.build("compare", _report_config(configs, config, data_hash),
                                      {"comparisons": comparisons}, config.seed, tables)
    rows = [r for c in comparisons for r in c["methods"].values()]
    _emit(doc, args.out, "compare_report.json",
          report.comparison_table(comparisons) + "\n\n" + report.result_table(rows))
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = ScenarioSpec.load(args.config)
    table, truth = generate_synthetic(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_study_csv(table, out / "data.csv")
    study = dataclasses.replace(table.to_config(), window_days=7).to_dict()
    (out / "study.json").write_text(json.dumps(study, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    doc = {"scenario": spec.to_dict(), "ground_truth": truth.to_dict(), "rows": len(table.observations)}
    (out / "truth.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(table.observations)} rows to {out / 'data.csv'}; effect {truth.effect_mph} mph")
    return EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "balance": cmd_balance, "compare": cmd_compare, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        return _fail("file_not_found", exc.strerror or "not found", path=exc.filename)
    except IsADirectoryError as exc:
        return _fail("file_not_found", "is a directory", path=exc.filename)
    except json.JSONDecodeError as exc:
        return _fail("bad_json", exc)
    except SchemaError as exc:
        return _fail("schema", exc, column=exc.column)
    except ParseError as exc:
        return _fail("parse", exc, row=exc.row, column=exc.column)
    except (PSMError, ValueError) as exc:
        return _fail("data", exc)


if __name__ == "__main__":
    sys.exit(main())
