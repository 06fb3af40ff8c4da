"""Command-line entry point ``hicon``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path


from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, HiconError
from .pipeline import Pipeline
from .store import ArtifactStore, default_cache_dir

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMANDS = ("mesh", "bloch", "macro", "zhikov", "dispersion", "steklov", "pipeline", "validate")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hicon", description="High-contrast periodic elasticity pipeline.")
    p.add_argument("--version", action="version", version=f"hicon {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML run configuration")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--cache", help="cache directory (HICON_CACHE takes precedence)")
        s.add_argument("--no-cache", action="store_true", help="do not read or write the artifact cache")
        s.add_argument("--threads", type=int, default=1, help="upper bound on worker threads")
        s.add_argument("--refine", type=int, help="override the refinement level")
        s.add_argument("--element-order", type=int, choices=(1, 2), help="override the element order")
        s.add_argument("--mesh-in", help="read the base mesh from this JSON file")
        s.add_argument("--mesh-out", help="write the mesh used by the run to this JSON file")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _limit_threads(n: int):
    """Pin BLAS/OpenMP pools to one thread.

    ``--threads`` sizes the stage-level worker pools instead, so the total
    stays within the cap and results do not depend on the flag: a threaded
    BLAS reduction would change the last bits of every output.
    """
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    over = {}
    if args.refine is not None:
        over["refine"] = args.refine
    if args.element_order is not None:
        over["element_order"] = args.element_order
    if args.out is not None:
        over["output_dir"] = args.out
    try:
        return replace(cfg, **over) if over else cfg
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"hicon: configuration error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        from .validate import run_validation

        with _limit_threads(args.threads):
            rows = run_validation(cfg)
        width = max(len(r[0]) for r in rows)
        for name, ok, detail in rows:
            print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        n_fail = sum(not ok for _, ok, _ in rows)
        print(f"{len(rows) - n_fail}/{len(rows)} checks passed")
        return 0 if n_fail == 0 else 1

    store = None if args.no_cache else ArtifactStore(default_cache_dir(args.cache or cfg.cache_dir))
    pipe = Pipeline(cfg, cfg.output_dir, store, args.mesh_in, args.mesh_out, args.threads)
    try:
        with _limit_threads(args.threads):
            pipe.run(args.command)
    except HiconError as exc:
        _cleanup(pipe.written)
        code = EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_NUMERIC
        print(f"hicon: {exc.stage} failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return code
    except BaseException:
        _cleanup(pipe.written)
        raise
    for p in pipe.written:
        print(p)
    return 0


def _cleanup(paths) -> None:
    for p in paths:
        Path(p).unlink(missing_ok=True)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
