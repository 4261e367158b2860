"""Command-line runner: ``nonlocalma run|list|diff|init``.

Progress goes to standard error. Machine-readable output goes to files under
the run directory, except for ``list``, ``init`` and ``diff``, which print
JSON (or a table for ``list``) on standard output.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from pathlib import Path

from . import __version__
from . import experiments as ex

OUTPUT_ENV = "NONLOCALMA_OUTPUT"
DEFAULT_OUTPUT_ROOT = "runs"


def _log(msg):
    print(f"[nonlocalma] {msg}", file=sys.stderr, flush=True)


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ex.ConfigError(f"{path}: not valid JSON ({exc})") from exc


def apply_overrides(cfg, strict=None, threads=None, margin=None):
    """Copy of ``cfg`` with command-line overrides written into it (and hence into its hash)."""
    cfg = dict(cfg)
    if strict:
        cfg["strict"] = True
    if threads is not None:
        cfg["threads"] = threads
    if margin is not None:
        cfg["margin"] = margin
    return cfg


def run_dir_for(cfg, root=None):
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    root = Path(root or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_ROOT)
    return root / f"{cfg['experiment']}-{ex.config_hash(cfg)[:12]}"


def write_table(path, table, cfg_hash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {cfg_hash}\n# version: {__version__}\n")
        w = csv.writer(fh)
        w.writerow(table["header"])
        for row in table["rows"]:
            w.writerow([repr(float(x)) if isinstance(x, (int, float)) and not isinstance(x, bool) else x for x in row])


def execute(cfg, root=None):
    """Validate, run and write a configuration. Returns (report, run directory)."""
    cfg = ex.validate_config(cfg)
    out = run_dir_for(cfg, root)
    out.mkdir(parents=True, exist_ok=True)
    _log(f"running {cfg['experiment']} -> {out}")
    t0 = time.perf_counter()
    report, tables = ex.run_experiment(cfg, log=_log)
    wall = time.perf_counter() - t0
    h = report["config_hash"]
    _dump(report, out / "report.json")
    _dump({**report["config"], "config_hash": h, "version": __version__}, out / "config.json")
    _dump({"config_hash": h, "version": __version__, "wall_time_s": wall, "python": platform.python_version(),
           "backend": report["backend"]}, out / "run_meta.json")
    for name, table in sorted(tables.items()):
        write_table(out / f"{name}.csv", table, h)
    s = report["summary"]
    _log(f"{s['pass']} pass, {s['fail']} fail, {s['inconclusive']} inconclusive in {wall:.1f} s")
    return report, out


def _cmd_run(args):
    cfg = apply_overrides(load_config(args.config), args.strict, args.threads, args.margin)
    report, out = execute(cfg, args.output)
    for c in report["checks"]:
        if c["status"] != "pass":
            _log(f"{c['status']}: {c['id']}")
    print(str(out / "report.json"))
    return 0 if report["summary"]["ok"] else 1


def _cmd_list(args):
    rows = ex.list_experiments()
    if args.json:
        print(json.dumps(rows, indent=2, sort_keys=True))
        return 0
    width = max(len(r["id"]) for r in rows)
    for r in rows:
        print(f"{r['id']:<{width}}  {r['title']}")
        print(f"{'':<{width}}    {r['anchor']}")
    return 0


def _cmd_init(args):
    cfg = ex.default_config(args.experiment)
    cfg = apply_overrides(cfg, args.strict, args.threads, args.margin)
    text = json.dumps(cfg, indent=2, sort_keys=True)
    if args.write:
        Path(args.write).write_text(text + "\n")
        _log(f"wrote {args.write}")
    else:
        print(text)
    return 0


def _load_report(path):
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    with open(p) as fh:
        return json.load(fh)


def _cmd_diff(args):
    try:
        d = ex.diff_reports(_load_report(args.a), _load_report(args.b), rtol=args.rtol)
    except ValueError as exc:
        _log(f"error: {exc}")
        return 2
    print(json.dumps(d, indent=2, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="nonlocalma", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)

    def overrides(sp):
        sp.add_argument("--strict", action="store_true", help="count inconclusive checks as failures")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for independent radii")
        sp.add_argument("--margin", type=float, default=None, help="exponent margin of the decay checks")

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--output", default=None, help=f"output root (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT_ROOT})")
    overrides(r)
    r.set_defaults(fn=_cmd_run)

    ls = sub.add_parser("list", help="print the experiment catalog")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(fn=_cmd_list)

    d = sub.add_parser("diff", help="compare two reports (files or run directories)")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--rtol", type=float, default=0.0, help="ignore relative differences up to this size")
    d.set_defaults(fn=_cmd_diff)

    i = sub.add_parser("init", help="emit the default config of an experiment")
    i.add_argument("experiment", choices=ex.EXPERIMENT_ORDER)
    i.add_argument("--write", default=None, help="write to this path instead of standard output")
    overrides(i)
    i.set_defaults(fn=_cmd_init)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ex.ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
