"""Command line: ``clusterjudge <verb> --run-dir DIR [--config FILE] [flags]``.

Exit status: 0 on success, 1 when a stage fails (the stage is named on stderr),
2 for usage, configuration or stage-order errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import store
from .config import Config
from .errors import (ClusterJudgeError, ConfigurationError, NotARunError, RunLockedError,
                     StageConflictError, StageFailedError, StageOrderError)
from .pipeline import RUN_CONFIG, VERB_STAGES, Pipeline, summary_table

VERBS = ("ingest", "cluster", "refine", "label", "assign", "evaluate", "temporal", "run", "export")
EXPORTS = ("coords", "grid", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterjudge",
                                     description="Judge-verified refinement of density-based text clusters.")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--run-dir", required=True, help="run directory (created by ingest/run)")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--corpus", help="NDJSON corpus (overrides corpus.path)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tau", type=float, help="fixed merge threshold instead of the grid choice")
    parser.add_argument("--label-tau", type=float)
    parser.add_argument("--k-representatives", type=int)
    parser.add_argument("--max-cost", type=float, help="abort before estimated spend exceeds this")
    parser.add_argument("--provider", choices=("mock", "remote"))
    parser.add_argument("--export", choices=EXPORTS, action="append", default=[],
                        help="with the export verb: what to write (repeatable)")
    for name in EXPORTS:
        parser.add_argument(f"--{name}", dest="export", action="append_const", const=name,
                            help=f"same as --export {name}")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config value, e.g. --set clustering.max_workers=4")
    parser.add_argument("--force", action="store_true", help="recompute stages even when current")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args) -> Config:
    path = args.config
    stored = Path(args.run_dir) / RUN_CONFIG
    if path is None and stored.exists():
        path = stored  # later verbs reuse the configuration the run was started with
    cfg = Config.load(path, args.overrides)
    flag_keys = {
        "corpus": "corpus.path", "seed": "run.seed", "tau": "refine.tau", "label_tau": "refine.label_tau",
        "k_representatives": "refine.k_representatives", "max_cost": "provider.max_cost",
        "provider": "provider.kind",
    }
    for attr, key in flag_keys.items():
        value = getattr(args, attr)
        if value is not None:
            cfg.set(key, value)
    return cfg


def _dispatch(args, pipeline: Pipeline, out) -> None:
    verb = args.verb
    if verb in VERB_STAGES:
        ran = pipeline.run(verb, force=args.force)
        print(f"stages computed: {', '.join(ran) if ran else 'none (all current)'}", file=out)
        if verb in ("run", "evaluate"):
            print(summary_table(pipeline.load("08_report")), file=out, end="")
            print(f"report: {pipeline.run_dir / '08_report.json'}", file=out)
    elif verb == "temporal":
        result = pipeline.temporal()
        w = result["window"]
        print(f"densest window ({result['reference_platform']}): {w['start']} .. {w['end']}, "
              f"{w['post_count']} posts", file=out)
        for name, comp in result["comparisons"].items():
            chi = comp.get("chi_square", {})
            if "error" in chi or "error" in comp:
                print(f"{name}: {chi.get('error') or comp.get('error')}", file=out)
            else:
                print(f"{name}: chi2={chi['statistic']:.4f} df={chi['df']} p={chi['p_value']:.4g}", file=out)
        print(f"written: {pipeline.run_dir / 'temporal.json'}", file=out)
    elif verb == "export":
        if not args.export:
            raise ConfigurationError("export needs at least one of --coords, --grid, --report")
        for what in dict.fromkeys(args.export):
            for path in pipeline.export(what):
                print(f"written: {path}", file=out)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        pipeline = Pipeline(args.run_dir, cfg)
        if args.verb in ("temporal", "export"):
            store.read_manifest(args.run_dir)  # read-only verbs never create or reset a run
        _dispatch(args, pipeline, out)
    except StageFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, StageOrderError, NotARunError, StageConflictError, RunLockedError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ClusterJudgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
