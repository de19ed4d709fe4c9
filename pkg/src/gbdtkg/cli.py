"""Command-line entry point: ``gbdtkg {generate,run,meta,predict,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from gbdtkg.config import load_config
from gbdtkg.errors import ConfigError, NumericError
from gbdtkg.pipeline import StageError, predict_from_artifacts, run_meta, run_pipeline, summarize
from gbdtkg.records import generate_synthetic, write_records
from gbdtkg.tfr import DEFAULT_THRESHOLD

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("gbdtkg")


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def cmd_generate(args) -> int:
    cfg = _config(args)
    d = cfg.data
    records = generate_synthetic(d.n_per_class, d.separation, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(records, out / "records.csv")
    log.info("wrote %d records to %s", len(records), out / "records.csv")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg)
    result.write(cfg.output_dir)
    print(summarize(result.report))
    return EXIT_OK


def cmd_meta(args) -> int:
    cfg = _config(args)
    result = run_meta(cfg)
    result.write(cfg.output_dir)
    print(json.dumps(result.report["metrics"], sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    if not 0.0 <= args.threshold <= 1.0:
        raise ConfigError("threshold must lie in [0, 1]")
    text = predict_from_artifacts(args.model_dir, args.records, args.threshold)
    if args.out is None:
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "tfr.csv").write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.out or "out") / "report.json"
    if not path.exists():
        raise FileNotFoundError(f"no report at {path}")
    print(summarize(json.loads(path.read_text(encoding="utf-8"))))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbdtkg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file (defaults built in)")
            p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides config output_dir)")

    common(sub.add_parser("generate", help="write a synthetic records CSV"))
    common(sub.add_parser("run", help="train all models, evaluate and score TFR"))
    common(sub.add_parser("meta", help="few-shot meta-training and link prediction"))
    p = sub.add_parser("predict", help="TFR-score records with a saved run")
    p.add_argument("--model-dir", required=True, help="output directory of a previous run")
    p.add_argument("--records", required=True, help="records CSV to score")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    common(p, config=False)
    common(sub.add_parser("report", help="print the summary of a saved run"), config=False)
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "meta": cmd_meta,
    "predict": cmd_predict,
    "report": cmd_report,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericError, ArithmeticError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, StageError, ValueError, KeyError, OSError, ArithmeticError) as exc:
        log.error("%s", exc)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
