"""``studyforge`` command-line entry point.

Exit codes: 0 success, 1 domain failure (comparison failed, findings with
errors), 2 usage or input error, 3 at least one case failed.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from studyforge import crosslink, packaging, recipe_lint, regression, report, runner
from studyforge import secondary_table as st
from studyforge.errors import StudyforgeError
from studyforge.study_model import expand, parse_study_definition, write_case_map

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_EXECUTION = 3


def _default_root():
    return os.environ.get("STUDYFORGE_ROOT", ".")


def _default_timestamp():
    value = os.environ.get("SOURCE_DATE_EPOCH")
    return int(value) if value else None


def _emit(args, payload, text):
    if getattr(args, "format", "text") == "json":
        print(json.dumps(payload, indent=2))
    elif text:
        print(text)


def _load_definition(path):
    return parse_study_definition(Path(path).read_text(encoding="utf-8"))


# subcommands

def cmd_plan(args):
    definition = _load_definition(args.definition)
    plan = expand(definition)
    if args.dry_run:
        if args.format == "json":
            _emit(args, {"study": plan.study_name, "cases": [
                {"case_id": c.case_id, "vector": c.vector} for c in plan.cases]}, None)
        else:
            sys.stdout.write(write_case_map(plan))
        return EXIT_OK
    created = runner.materialize(plan, args.root, force=args.force)
    sdir = runner.study_dir(args.root, plan.study_name)
    _emit(args, {"study": plan.study_name, "cases": len(created), "directory": str(sdir)},
          f"materialized {len(created)} cases in {sdir}")
    return EXIT_OK


def _report_text(rep):
    lines = [f"{c.case_id}\t{c.status}\t{'' if c.exit_code is None else c.exit_code}"
             for c in rep.cases]
    counts = ", ".join(f"{k}={v}" for k, v in rep.counts.items() if v)
    return "\n".join(lines + [counts])


def cmd_run(args):
    definition = _load_definition(args.definition)
    plan = expand(definition)
    sdir = runner.study_dir(args.root, plan.study_name)
    if not (sdir / runner.CASE_MAP).is_file():
        runner.materialize(plan, args.root)
    else:
        plan = runner.load_plan(sdir)
    cfg = runner.ExecutorConfig(
        root=args.root, max_parallel=args.max_parallel,
        env_passthrough=tuple(args.env_passthrough or ()), submit_wrapper=args.submit_wrapper,
    )
    rep = runner.run(plan, definition, cfg)
    (sdir / "run_report.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    _emit(args, rep.to_dict(), _report_text(rep))
    bad = rep.counts.get(runner.FAILED, 0) + rep.counts.get(runner.UNKNOWN, 0)
    return EXIT_EXECUTION if bad else EXIT_OK


def cmd_stop(args):
    marker = runner.request_stop(Path(args.root) / args.study)
    _emit(args, {"stop": str(marker)}, f"stop requested: {marker}")
    return EXIT_OK


def cmd_status(args):
    rep = runner.status(Path(args.root) / args.study)
    _emit(args, rep.to_dict(), _report_text(rep))
    return EXIT_OK


def cmd_collect(args):
    definition = _load_definition(args.definition)
    sdir = runner.study_dir(args.root, definition.study_name)
    table, missing = st.collect_study(sdir, definition.secondary_file, args.include_case_id)
    out = Path(args.out) if args.out else sdir / packaging.SECONDARY_TABLE_FILE
    st.save_table(table, out)
    _emit(args, {"table": str(out), "rows": len(table), "missing_cases": missing},
          f"collected {len(table)} rows into {out}"
          + (f"; no data from cases {missing}" if missing else ""))
    return EXIT_OK


def cmd_validate(args):
    table = st.load_table(args.table)
    findings = st.validate_table(table)
    _emit(args, {"findings": [f.to_dict() for f in findings]},
          "\n".join(f"{f.severity}: {f.message}" for f in findings) or "no findings")
    return EXIT_FAILURE if any(f.severity == st.ERROR for f in findings) else EXIT_OK


def _tolerance(args):
    return regression.ToleranceSpec(rel=args.rel, abs=args.abs, nan_equal=args.nan_equal)


def _keys(value):
    return [k for k in value.split(",") if k] if value else None


def cmd_compare(args):
    ref = st.load_table(args.reference)
    act = st.load_table(args.actual)
    rep = regression.compare_tables(act, ref, _tolerance(args), _keys(args.key))
    if args.report:
        Path(args.report).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    text = [rep.status.upper()]
    for col, s in rep.columns.items():
        if s.failures:
            text.append(f"  {col}: {s.failures} failing cells, first at row {s.first_failing_row}, "
                        f"max abs dev {s.max_abs_dev:.6g}")
    if rep.missing_columns:
        text.append(f"  missing columns: {', '.join(rep.missing_columns)}")
    if rep.extra_columns:
        text.append(f"  extra columns: {', '.join(rep.extra_columns)}")
    if rep.row_count_delta:
        text.append(f"  row count delta: {rep.row_count_delta:+d}")
    _emit(args, rep.to_dict(), "\n".join(text))
    return EXIT_OK if rep.passed else EXIT_FAILURE


def cmd_link(args):
    if args.link_command == "tag":
        tag = crosslink.make_tag(args.year, args.venue, args.topic, args.revision)
        _emit(args, {"tag": tag}, tag)
        return EXIT_OK
    ledger = crosslink.Ledger.load(args.ledger)
    sub = args.link_command
    if sub == "add":
        rec = crosslink.ArtifactRecord(
            local_id=args.id, kind=args.kind, pid=args.pid or "", title=args.title or "",
            version_label=args.version_label, vcs_tag=args.vcs_tag,
        )
        crosslink.add_artifact(ledger, rec)
        _emit(args, {"added": rec.local_id}, f"added {rec.local_id}")
    elif sub == "milestone":
        ledger.add_milestone(args.name, args.artifacts.split(","), args.tag)
        _emit(args, {"milestone": args.name}, f"created milestone {args.name}")
    elif sub == "mesh":
        crosslink.cross_link_mesh(ledger, args.milestone)
        n = ledger.last_mesh_added
        _emit(args, {"pairs_added": n}, f"added {n} link pairs")
    elif sub == "check":
        findings = crosslink.validate_milestone(ledger, args.milestone)
        _emit(args, {"findings": [f.to_dict() for f in findings]},
              "\n".join(f"{f.code}: {f.message}" for f in findings) or "no findings")
        return EXIT_FAILURE if findings else EXIT_OK
    elif sub == "render":
        text = crosslink.render_repo_metadata(ledger, args.id)
        if args.out_dir:
            path = Path(args.out_dir) / f"{args.id}.metadata.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    elif sub == "readme":
        text = crosslink.readme_snippet(ledger, args.milestone)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    elif sub == "new-version":
        rec = crosslink.new_version(ledger, args.id, args.pid)
        _emit(args, {"added": rec.local_id}, f"added {rec.local_id}")
    return EXIT_OK


def cmd_lint_recipe(args):
    cfg = recipe_lint.LintConfig(
        persistent_host_allowlist=recipe_lint.DEFAULT_ALLOWLIST + tuple(args.allow_host or ()))
    text = Path(args.file).read_bytes()
    findings = recipe_lint.lint(recipe_lint.parse_recipe(text), cfg)
    _emit(args, {"findings": [f.to_dict() for f in findings]},
          "\n".join(f"{args.file}:{f.line}: {f.severity} {f.rule}: {f.message}" for f in findings))
    if any(f.severity == recipe_lint.ERROR for f in findings):
        return EXIT_FAILURE
    if args.strict and findings:
        return EXIT_FAILURE
    return EXIT_OK


def cmd_metadata(args):
    definition = _load_definition(args.definition)
    sdir = runner.study_dir(args.root, definition.study_name)
    table, missing = st.collect_study(sdir, definition.secondary_file)
    secondary = sdir / packaging.SECONDARY_TABLE_FILE
    if secondary.is_file():
        table = st.load_table(secondary)
    meta = packaging.export_study_metadata(
        runner.load_plan(sdir), table, sdir, created=args.timestamp,
        primary_globs=definition.primary_globs, missing_cases=missing,
    )
    _emit(args, meta, f"wrote {sdir / packaging.METADATA_FILE}")
    return EXIT_OK


def cmd_pack(args):
    if args.pack_command == "secondary":
        man = packaging.package_secondary(args.root, args.out, mtime=args.timestamp)
    else:
        man = packaging.package_primary(args.root, args.study, args.out, mtime=args.timestamp)
    _emit(args, man.to_dict(), f"wrote {args.out} ({len(man.entries)} files)")
    return EXIT_OK


def cmd_report(args):
    sdir = Path(args.root) / args.study
    plan = runner.load_plan(sdir)
    rep = runner.status(sdir)
    table = st.load_table(args.table or sdir / packaging.SECONDARY_TABLE_FILE)
    comparison = None
    if args.reference:
        comparison = regression.compare_tables(
            table, st.load_table(args.reference), _tolerance(args), _keys(args.key))
    charts = [report.ChartSpec.parse(c) for c in args.chart or ()]
    html = report.render_study_html(plan, rep, table, comparison, charts)
    out = Path(args.out) if args.out else sdir / "report.html"
    out.write_text(html, encoding="utf-8")
    _emit(args, {"report": str(out)}, f"wrote {out}")
    return EXIT_OK


# parser

def _add_format(p):
    p.add_argument("--format", choices=("text", "json"), default="text")


def _add_tolerances(p):
    p.add_argument("--rel", type=float, default=1e-6, help="relative tolerance (default 1e-6)")
    p.add_argument("--abs", type=float, default=1e-12, help="absolute tolerance (default 1e-12)")
    p.add_argument("--nan-equal", action="store_true", help="treat NaN as equal to NaN")
    p.add_argument("--key", help="comma-separated key columns to align rows on")


def build_parser():
    root_help = "results root (default $STUDYFORGE_ROOT or .)"
    ts_help = "fixed POSIX timestamp for reproducible output (default $SOURCE_DATE_EPOCH)"
    parser = argparse.ArgumentParser(prog="studyforge", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs.required = True

    p = subs.add_parser("plan", help="expand a study definition and create case directories")
    p.add_argument("definition")
    p.add_argument("--root", default=_default_root(), help=root_help)
    p.add_argument("--force", action="store_true", help="overwrite an existing study directory")
    p.add_argument("--dry-run", action="store_true", help="print the case map only")
    _add_format(p)
    p.set_defaults(func=cmd_plan)

    p = subs.add_parser("run", help="run all pending cases of a study")
    p.add_argument("definition")
    p.add_argument("--root", default=_default_root(), help=root_help)
    p.add_argument("--max-parallel", type=int, default=1)
    p.add_argument("--submit-wrapper", help="command prefix, e.g. a scheduler submit command")
    p.add_argument("--env-passthrough", action="append", metavar="NAME",
                   help="environment variable forwarded to cases (repeatable)")
    _add_format(p)
    p.set_defaults(func=cmd_run)

    for name, func, help_ in (("stop", cmd_stop, "ask a running study to stop early"),
                              ("status", cmd_status, "show case states of a study")):
        p = subs.add_parser(name, help=help_)
        p.add_argument("--root", default=_default_root(), help=root_help)
        p.add_argument("--study", required=True)
        _add_format(p)
        p.set_defaults(func=func)

    p = subs.add_parser("collect", help="merge per-case results into secondary.csv")
    p.add_argument("definition")
    p.add_argument("--root", default=_default_root(), help=root_help)
    p.add_argument("--include-case-id", action="store_true", help="add a PARAM_CASE_ID column")
    p.add_argument("--out", help="output CSV (default <study>/secondary.csv)")
    _add_format(p)
    p.set_defaults(func=cmd_collect)

    p = subs.add_parser("validate", help="check a secondary-data CSV")
    p.add_argument("table")
    _add_format(p)
    p.set_defaults(func=cmd_validate)

    p = subs.add_parser("compare", help="compare a table against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--actual", required=True)
    _add_tolerances(p)
    p.add_argument("--report", help="write the comparison report as JSON")
    _add_format(p)
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("link", help="manage the PID cross-link ledger")
    p.add_argument("--ledger", default="crosslink.json")
    _add_format(p)
    lsubs = p.add_subparsers(dest="link_command", metavar="ACTION")
    lsubs.required = True
    q = lsubs.add_parser("add", help="register an artifact")
    q.add_argument("--id", required=True)
    q.add_argument("--kind", required=True, choices=crosslink.KINDS)
    q.add_argument("--pid")
    q.add_argument("--title")
    q.add_argument("--version-label")
    q.add_argument("--vcs-tag")
    q = lsubs.add_parser("milestone", help="group artifacts into a milestone")
    q.add_argument("--name", required=True)
    q.add_argument("--artifacts", required=True, help="comma-separated artifact ids")
    q.add_argument("--tag")
    for action, help_ in (("mesh", "cross-link every artifact pair of a milestone"),
                          ("check", "validate a milestone"),
                          ("readme", "print a README section for a milestone")):
        q = lsubs.add_parser(action, help=help_)
        q.add_argument("--milestone", required=True)
        if action == "readme":
            q.add_argument("--out")
    q = lsubs.add_parser("render", help="render an artifact's repository metadata record")
    q.add_argument("--id", required=True)
    q.add_argument("--out-dir", help="write <id>.metadata.json here instead of stdout")
    q = lsubs.add_parser("tag", help="build a milestone tag string")
    q.add_argument("year")
    q.add_argument("venue")
    q.add_argument("topic")
    q.add_argument("--revision", type=int)
    q = lsubs.add_parser("new-version", help="register a new version of an artifact")
    q.add_argument("--id", required=True)
    q.add_argument("--pid", required=True)
    p.set_defaults(func=cmd_link)

    p = subs.add_parser("lint-recipe", help="lint a container build recipe")
    p.add_argument("file")
    p.add_argument("--allow-host", action="append", metavar="HOST",
                   help="additional persistent host (repeatable)")
    p.add_argument("--strict", action="store_true", help="fail on warnings too")
    _add_format(p)
    p.set_defaults(func=cmd_lint_recipe)

    p = subs.add_parser("metadata", help="export study_metadata.json")
    p.add_argument("definition")
    p.add_argument("--root", default=_default_root(), help=root_help)
    p.add_argument("--timestamp", type=int, default=_default_timestamp(), help=ts_help)
    _add_format(p)
    p.set_defaults(func=cmd_metadata)

    p = subs.add_parser("pack", help="write secondary or primary data archives")
    psubs = p.add_subparsers(dest="pack_command", metavar="KIND")
    psubs.required = True
    for kind in ("secondary", "primary"):
        q = psubs.add_parser(kind, help=f"{kind}-data archive")
        q.add_argument("--root", default=_default_root(), help=root_help)
        if kind == "primary":
            q.add_argument("--study", required=True)
        q.add_argument("--out", required=True)
        q.add_argument("--timestamp", type=int, default=_default_timestamp(), help=ts_help)
        _add_format(q)
    p.set_defaults(func=cmd_pack)

    p = subs.add_parser("report", help="render a static HTML study report")
    p.add_argument("--root", default=_default_root(), help=root_help)
    p.add_argument("--study", required=True)
    p.add_argument("--table", help="secondary table (default <study>/secondary.csv)")
    p.add_argument("--chart", action="append", metavar="SPEC",
                   help="y=COL,x=COL[,group=PARAM_COL][,title=TEXT] (repeatable)")
    p.add_argument("--reference", help="reference table for a comparison verdict")
    _add_tolerances(p)
    p.add_argument("--out", help="output file (default <study>/report.html)")
    _add_format(p)
    p.set_defaults(func=cmd_report)
    return parser


def dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (StudyforgeError, OSError, ValueError) as exc:
        print(f"studyforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
