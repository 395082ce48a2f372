"""Command-line entry point.

Exit codes: 0 success, 2 invalid input (config, parameters, price file),
3 degenerate ensemble (no usable escape events).  The default output root
is ``$ESCAPELAB_OUT`` or ``./runs``.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

import yaml

from .canonical import fingerprint
from .config import ConfigError, apply_overrides, canonical_yaml, config_from_dict, parse_override
from .engine import ParameterError
from .escape import DegenerateEnsembleError
from .market import (
    PriceTableError,
    empirical_escape_dataset,
    load_price_table,
    return_table,
    write_escape_times,
)
from .presets import PRESETS, preset
from .runner import RunReport, run_experiment, versioned_dir

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 2, 3
OUT_ENV = "ESCAPELAB_OUT"


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def _flag_overrides(args) -> dict:
    out = {}
    for flag, key in (("seed", "sim.seed"), ("events", "sim.n_events"), ("workers", "sim.workers"), ("dt", "sim.dt")):
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    for text in getattr(args, "set", None) or []:
        k, v = parse_override(text)
        out[k] = v
    return out


def _raw_config(source: str) -> dict:
    path = Path(source)
    if not path.exists() and source in PRESETS:
        return preset(source)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{source}: cannot read config ({exc.strerror})") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return raw


def run_preset(name: str, overrides: dict | None = None, out_dir=None) -> RunReport:
    cfg = config_from_dict(apply_overrides(preset(name), overrides or {}))
    return run_experiment(cfg, out_dir or default_out())


def run_config(path, overrides: dict | None = None, out_dir=None) -> RunReport:
    cfg = config_from_dict(apply_overrides(_raw_config(str(path)), overrides or {}))
    return run_experiment(cfg, out_dir or default_out())


def ingest(path, k_i: float = -0.1, k_f: float = -2.0, kind: str = "log", allow_gaps: bool = False,
           out_dir=None) -> Path:
    """Pool the empirical escape times of a price file into a versioned directory."""
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    table = load_price_table(path, allow_gaps=allow_gaps)
    rt = return_table(table, kind)
    times = empirical_escape_dataset(rt, k_i, k_f)
    fp = fingerprint({"prices_sha256": digest, "k_i": k_i, "k_f": k_f, "returns": kind, "allow_gaps": allow_gaps})
    d = versioned_dir(out_dir or default_out(), "ingest", fp)
    write_escape_times(d / "escape_times.txt", times, fp)
    with (d / "sigmas.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fingerprint: {fp}\n# n_days: {table.n_days}\nticker,sigma,n_returns\n")
        for t, s, r in zip(rt.tickers, rt.sigmas, rt.returns):
            fh.write(f"{t},{float(s)!r},{r.size}\n")
    return d


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="escapelab", description="Escape-time experiments for stochastic volatility models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--events", type=int, help="events per ensemble / sweep point")
        p.add_argument("--workers", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--out", type=Path, help=f"output root (default ${OUT_ENV} or ./runs)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")

    p = sub.add_parser("run-preset", help="run a named preset")
    p.add_argument("name", choices=sorted(PRESETS))
    run_flags(p)
    p = sub.add_parser("run", help="run a YAML config file")
    p.add_argument("config")
    run_flags(p)
    p = sub.add_parser("ingest", help="pool empirical escape times from a price CSV")
    p.add_argument("prices", type=Path)
    p.add_argument("--k-i", type=float, default=-0.1)
    p.add_argument("--k-f", type=float, default=-2.0)
    p.add_argument("--returns", choices=("log", "simple"), default="log")
    p.add_argument("--allow-gaps", action="store_true")
    p.add_argument("--out", type=Path)
    p = sub.add_parser("dump-canonical", help="print the canonical form of a config file or preset")
    p.add_argument("config")
    run_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run-preset":
            report = run_preset(args.name, _flag_overrides(args), args.out)
        elif args.command == "run":
            report = run_config(args.config, _flag_overrides(args), args.out)
        elif args.command == "ingest":
            print(ingest(args.prices, args.k_i, args.k_f, args.returns, args.allow_gaps, args.out))
            return EXIT_OK
        else:
            cfg = config_from_dict(apply_overrides(_raw_config(args.config), _flag_overrides(args)))
            sys.stdout.write(canonical_yaml(cfg))
            return EXIT_OK
    except (ConfigError, ParameterError, PriceTableError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateEnsembleError as exc:
        print(f"degenerate ensemble: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    print(report.out_dir)
    for path in report.outputs:
        print(f"  {path.name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
