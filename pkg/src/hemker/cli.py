"""Command line front end: convergence tables, solution fields and error fields.

Examples::

    hemker --table 1 --eps-max-exponent 10 --n-list 8,16,32,64 --out out/
    hemker --table 5 --n-list 8,16,32 --n-ref 512 --eps-max-exponent 4
    hemker --field-dump --error-dump --field-eps-exponent 10 --field-n 128 --n-ref 512
"""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hemker.output import emit_field, emit_table
from hemker.pipeline import run_pipeline
from hemker.solver import RTOL
from hemker.verification import ConvergenceTable, Which, default_params, difference_row, error_row, orders

log = logging.getLogger("hemker")


class Stages(enum.Enum):
    INITIAL_ONLY = "initial"
    FULL = "full"


class Output(enum.Enum):
    TABLE1 = "table1"  # polar solution orders over x <= 0
    TABLE2 = "table2"  # initial composite orders
    TABLE3 = "table3"  # corrected composite orders over the patches
    TABLE4 = "table4"  # corrected composite orders
    TABLE5 = "table5"  # corrected composite errors against a fine reference
    FIELD_DUMP = "field"
    ERROR_DUMP = "error"


TABLE_WHICH = {
    Output.TABLE1: Which.SECTOR,
    Output.TABLE2: Which.INITIAL,
    Output.TABLE3: Which.PATCH,
    Output.TABLE4: Which.CORRECTED,
    Output.TABLE5: Which.CORRECTED,
}
ORDER_TABLES = {Output.TABLE1, Output.TABLE2, Output.TABLE3, Output.TABLE4}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    eps_exponents: list = field(default_factory=lambda: list(range(0, 21, 2)))
    n_list: list = field(default_factory=lambda: [8, 16, 32, 64, 128, 256, 512])
    R: float = 4.0
    delta: float = 0.05
    rtol: float = RTOL
    stages: Stages = Stages.FULL
    outputs: set = field(default_factory=set)
    out_dir: Path = Path("out")
    threads: int = 1
    n_ref: int = 2048
    field_eps_exponent: int = 10
    field_n: int = 128
    resolution: int = 257
    field_format: str = "csv"
    verbose: bool = False

    def validate(self) -> "RunConfig":
        if any(n % 8 for n in self.n_list):
            raise ConfigError(f"every N must be a multiple of 8, got {self.n_list}")
        if self.outputs & ORDER_TABLES:
            n = self.n_list
            if len(n) < 2 or any(b != 2 * a for a, b in zip(n, n[1:])):
                raise ConfigError(f"order tables need a strictly doubling n_list, got {n}")
        if self.stages is Stages.INITIAL_ONLY:
            full_only = self.outputs & {Output.TABLE3, Output.TABLE4, Output.TABLE5}
            if full_only:
                names = sorted(o.value for o in full_only)
                raise ConfigError(f"{names} need the full pipeline, not stages=initial")
        if Output.TABLE5 in self.outputs and self.n_list and self.n_ref < 4 * max(self.n_list):
            raise ConfigError(f"n_ref={self.n_ref} must be at least 4 * max(n_list)")
        if Output.ERROR_DUMP in self.outputs and self.n_ref < 4 * self.field_n:
            raise ConfigError(f"n_ref={self.n_ref} must be at least 4 * field_n for an error dump")
        if self.resolution < 32:
            raise ConfigError("field resolution must be at least 32")
        if self.field_format not in ("csv", "vtk"):
            raise ConfigError(f"unknown field format {self.field_format!r}")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        return self

    @property
    def eps_list(self) -> list:
        return [2.0 ** -j for j in self.eps_exponents]


_CONVERTERS = {
    "stages": Stages,
    "outputs": lambda v: {Output(x) for x in v},
    "out_dir": Path,
    "eps_exponents": lambda v: [int(x) for x in v],
    "n_list": lambda v: [int(x) for x in v],
}


def _coerce(key, value):
    return _CONVERTERS.get(key, lambda v: v)(value)


def config_from_mapping(data: dict) -> dict:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {k: _coerce(k, v) for k, v in data.items()}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hemker", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", type=Path, help="JSON file with RunConfig keys")
    ap.add_argument("--eps-max-exponent", type=int, help="largest j in eps = 2^-j (default 20)")
    ap.add_argument("--eps-step", type=int, help="step between exponents (default 2)")
    ap.add_argument("--n-list", help="comma separated N values, e.g. 8,16,32")
    ap.add_argument("--table", type=int, action="append", choices=range(1, 6), help="table to emit; repeatable")
    ap.add_argument("--field-dump", action="store_true", help="write the computed solution on a uniform grid")
    ap.add_argument("--error-dump", action="store_true", help="write |U^N - U^n_ref| on a uniform grid")
    ap.add_argument("--field-eps-exponent", type=int)
    ap.add_argument("--field-n", type=int)
    ap.add_argument("--resolution", type=int, help="grid points per direction for field files")
    ap.add_argument("--field-format", choices=("csv", "vtk"))
    ap.add_argument("--n-ref", type=int, help="reference N for the error table and error dumps")
    ap.add_argument("--stages", choices=[s.value for s in Stages])
    ap.add_argument("--out", type=Path)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--rtol", type=float)
    ap.add_argument("--delta", type=float)
    ap.add_argument("--R", type=float)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _flag_values(ns: argparse.Namespace, base: RunConfig) -> dict:
    out = {}
    if ns.eps_max_exponent is not None or ns.eps_step is not None:
        top = ns.eps_max_exponent if ns.eps_max_exponent is not None else max(base.eps_exponents, default=20)
        step = ns.eps_step or 2
        out["eps_exponents"] = list(range(0, top + 1, step))
    if ns.n_list is not None:
        out["n_list"] = [int(s) for s in ns.n_list.split(",") if s.strip()]
    outputs = {Output(f"table{k}") for k in ns.table or []}
    if ns.field_dump:
        outputs.add(Output.FIELD_DUMP)
    if ns.error_dump:
        outputs.add(Output.ERROR_DUMP)
    if outputs:
        out["outputs"] = outputs
    simple = {
        "field_eps_exponent": ns.field_eps_exponent,
        "field_n": ns.field_n,
        "resolution": ns.resolution,
        "field_format": ns.field_format,
        "n_ref": ns.n_ref,
        "stages": Stages(ns.stages) if ns.stages else None,
        "out_dir": ns.out,
        "threads": ns.threads,
        "rtol": ns.rtol,
        "delta": ns.delta,
        "R": ns.R,
        "verbose": True if ns.verbose else None,
    }
    out.update({k: v for k, v in simple.items() if v is not None})
    return out


def parse_config(argv=None) -> RunConfig:
    """Defaults, then the JSON file, then explicit flags (flags win)."""
    ns = build_parser().parse_args(argv)
    cfg = RunConfig()
    from_file = {}
    if ns.config is not None:
        from_file = config_from_mapping(json.loads(ns.config.read_text()))
        cfg = dataclasses.replace(cfg, **from_file)
    flags = _flag_values(ns, cfg)
    for key in sorted(set(flags) & set(from_file)):
        log.info("flag overrides config file for %s: %r -> %r", key, from_file[key], flags[key])
    cfg = dataclasses.replace(cfg, **flags)
    return cfg.validate()


# ---------------------------------------------------------------------------
# work units (module level so a process pool can pickle them)


def _table_row(eps, output: Output, cfg: RunConfig):
    which = TABLE_WHICH[output]
    kw = dict(delta=cfg.delta, R=cfg.R, rtol=cfg.rtol)
    try:
        if output is Output.TABLE5:
            return error_row(eps, cfg.n_list, cfg.n_ref, which, **kw)
        return difference_row(eps, cfg.n_list, which, **kw)
    except Exception as exc:  # a failed cell becomes a gap, the run still reports failure
        log.error("eps=%r %s failed: %s", eps, output.value, exc)
        return [np.nan] * len(cfg.n_list)


def build_table(output: Output, cfg: RunConfig, pool=None) -> ConvergenceTable:
    eps = cfg.eps_list
    args = [(e, output, cfg) for e in eps]
    rows = list(pool.map(_table_row, *zip(*args))) if (pool and args) else [_table_row(*a) for a in args]
    D = np.array(rows, float).reshape(len(eps), len(cfg.n_list))
    if output is Output.TABLE5:
        return ConvergenceTable(eps, list(cfg.n_list), D, "errors", meta={"n_ref": cfg.n_ref})
    t = ConvergenceTable(eps, list(cfg.n_list), D, "orders", meta={"which": TABLE_WHICH[output].value})
    return orders(t)


def _field_solutions(cfg: RunConfig):
    eps = 2.0 ** -cfg.field_eps_exponent
    stages = cfg.stages.value
    run = run_pipeline(default_params(eps, cfg.field_n, cfg.delta, cfg.R), stages, cfg.rtol)
    return eps, run


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(argv)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"hemker: {exc}", file=sys.stderr)
        return 2
    if cfg.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    if not cfg.outputs:
        print("hemker: nothing to do; pass --table, --field-dump or --error-dump", file=sys.stderr)
        return 2

    ok = True
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tables = sorted(cfg.outputs & set(TABLE_WHICH), key=lambda o: o.value)
    pool = ProcessPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 and tables else None
    try:
        for out in tables:
            t = build_table(out, cfg, pool)
            path = cfg.out_dir / f"{out.value}.csv"
            rows = emit_table(t, path)
            if t.kind == "orders":
                emit_table(ConvergenceTable(t.eps_list, t.n_list, t.D, "errors"), cfg.out_dir / f"{out.value}_differences.csv")
            gaps = int(np.isnan(t.D).sum())
            log.info("wrote %s (%d rows, %d missing cells)", path, rows, gaps)
            if rows == 0 or gaps:
                ok = False
    finally:
        if pool is not None:
            pool.shutdown()

    if cfg.outputs & {Output.FIELD_DUMP, Output.ERROR_DUMP}:
        try:
            ok &= _write_fields(cfg)
        except Exception as exc:
            log.error("field output failed: %s", exc)
            ok = False
    return 0 if ok else 1


def _write_fields(cfg: RunConfig) -> bool:
    eps, run = _field_solutions(cfg)
    ext = cfg.field_format
    tag = f"eps2m{cfg.field_eps_exponent}_N{cfg.field_n}"
    labels = ["initial"] + (["corrected"] if cfg.stages is Stages.FULL else [])
    if Output.FIELD_DUMP in cfg.outputs:
        sol = run.corrected if cfg.stages is Stages.FULL else run.initial
        path = cfg.out_dir / f"field_{sol.label}_{tag}.{ext}"
        emit_field(sol, cfg.resolution, path, fmt=ext)
        log.info("wrote %s", path)
    if Output.ERROR_DUMP in cfg.outputs:
        ref = run_pipeline(default_params(eps, cfg.n_ref, cfg.delta, cfg.R), cfg.stages.value, cfg.rtol)
        for label in labels:
            path = cfg.out_dir / f"error_{label}_{tag}_ref{cfg.n_ref}.{ext}"
            X, Y, vals, mask = emit_field(getattr(run, label), cfg.resolution, path, getattr(ref, label), fmt=ext)
            k = int(np.nanargmax(np.where(mask, vals, np.nan)))
            log.info("wrote %s (max error %.4f at (%.4f, %.4f))", path, vals.ravel()[k], X.ravel()[k], Y.ravel()[k])
    return True


if __name__ == "__main__":
    sys.exit(main())
