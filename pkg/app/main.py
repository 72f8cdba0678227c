# app/main.py
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from .commands import CommandContext, get_handler, plain
from .core.artifacts import write_csv, write_json
from .core.config import get_settings
from .core.errors import ConfigValidationError, ZeroLabError
from .core.log import configure_logging
from .schemas.config import ExperimentConfig, config_hash, cross_checks, dump_config, parse_config
from .schemas.reports import CSV_FIELDS, Summary
from .spec.dictionary import content_hash

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ACCEPTANCE = 2

COMMANDS = ("bergman", "sample", "equidist", "moderate", "constants", "approx")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zerolab", description="Equidistribution experiments for zeros of random sections.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML experiment document")
    ap.add_argument("--seed", type=int, default=None, help="overrides ZEROLAB_SEED and [run].seed")
    ap.add_argument("--out", default=None, help="overrides [output].dir")
    ap.add_argument("--deterministic", action="store_true", help="omit wall times; byte-stable artifacts")
    ap.add_argument("--log-level", default=None)
    return ap


def apply_overrides(cfg: ExperimentConfig, command: str, seed: Optional[int] = None, out: Optional[str] = None,
                    deterministic: bool = False) -> ExperimentConfig:
    env_seed = get_settings().seed
    run_update = {"command": command}
    if seed is not None:
        run_update["seed"] = seed
    elif env_seed is not None:
        run_update["seed"] = env_seed
    if deterministic:
        run_update["deterministic"] = True
    update = {"run": cfg.run.model_copy(update=run_update)}
    if out is not None:
        update["output"] = cfg.output.model_copy(update={"dir": out})
    cfg = cfg.model_copy(update=update)
    problems = cross_checks(cfg)
    if problems:
        raise ConfigValidationError(problems)
    return cfg


def run_command(cfg: ExperimentConfig) -> int:
    """Execute the configured pipeline and write CSV + JSON artifacts; returns the exit status."""
    t0 = time.perf_counter()
    chash = config_hash(cfg)
    ctx = CommandContext(cfg=cfg, config_hash=chash)
    logger.info("running %s seed=%d config=%s", cfg.run.command, cfg.run.seed, chash[:12])
    result = get_handler(cfg.run.command)(ctx)

    out_dir = Path(cfg.output.dir)
    write_csv(out_dir / cfg.output.csv, CSV_FIELDS, (row.to_csv() for row in result.rows))
    summary = Summary(
        command=cfg.run.command, seed=cfg.run.seed, config_hash=chash, content_hash=content_hash(),
        config=cfg.model_dump(mode="json", by_alias=True, exclude_none=True),
        results=plain(result.results), acceptance=result.verdicts, passed=result.passed,
        wall_time=None if cfg.run.deterministic else time.perf_counter() - t0,
    )
    write_json(out_dir / cfg.output.json_name, summary.model_dump(mode="json", exclude_none=True))

    for v in result.verdicts:
        logger.info("acceptance %s: %s", v.name, "pass" if v.passed else "FAIL")
    return EXIT_OK if result.passed else EXIT_ACCEPTANCE


def _report_error(doc: dict, out_dir: Optional[Path]) -> None:
    print(json.dumps(doc, default=str), file=sys.stderr)
    if out_dir is not None:
        try:
            write_json(out_dir / "error.json", json.loads(json.dumps(doc, default=str)))
        except OSError as e:
            logger.warning("could not write error.json: %s", e)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    out_dir: Optional[Path] = Path(args.out) if args.out else None
    try:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise ZeroLabError(f"cannot read config: {e}", path=args.config) from e
        cfg = parse_config(text)
        cfg = apply_overrides(cfg, args.command, args.seed, args.out, args.deterministic)
        out_dir = Path(cfg.output.dir)
        logger.debug("effective config:\n%s", dump_config(cfg))
        return run_command(cfg)
    except ZeroLabError as e:
        _report_error(e.to_dict(), out_dir)
        return EXIT_ERROR
    except Exception as e:
        # numpy/scipy failures outside the ZeroLabError hierarchy
        logger.exception("unexpected %s", type(e).__name__)
        _report_error({"error": type(e).__name__, "message": str(e), "detail": {"unexpected": True}}, out_dir)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
