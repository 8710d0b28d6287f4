"""Command-line front end: ``ghzbell <subcommand> [flags]``.

Every subcommand writes one CSV (header row, fixed columns) and a JSON
manifest next to it.  Exit codes: 0 all checks passed, 1 a check failed,
2 bad usage, 3 too many indeterminate LP results.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .correlations import NOISELESS, NoiseSpec
from .exceptions import GHZBellError, ResourceLimitError, UsageError
from .inequalities import InequalityClass
from .local_polytope import DEFAULT_MAX_PARTIES
from .sampling import SamplerSpec

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INDETERMINATE = 3

OUTPUT_ENV = "GHZBELL_OUTPUT_DIR"
SUBCOMMANDS = ("prob", "table1", "table2", "noise-sweep", "perturbed", "theorem1", "lp-check")
SAMPLERS = ("rim", "rom", "prom-xy", "prom-rotated", "prom-perturbed")
CLASSES = tuple(c.value for c in InequalityClass)


# -- run configuration -----------------------------------------------------------------


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    text = str(text).strip()
    return tuple(float(v) for v in text.split(",") if v.strip()) if text else ()


def _strings(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(str(v) for v in text)
    text = str(text).strip()
    return tuple(v.strip() for v in text.split(",") if v.strip()) if text else ()


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's data output.

    Keys of the config file match the long flag names (``lambda-std`` or
    ``lambda_std`` both work).  ``workers`` and ``output`` never affect data.
    """

    subcommand: str = "prob"
    n: int = 2
    n_max: int = 6
    sampler: str = "rim"
    alpha: float = 0.0
    lam: float = 0.0
    lambda_std: tuple = ()
    noise: tuple = ("none",)
    nu: tuple = (0.0,)
    cls: str = "mabk"
    samples: int = 10**5
    seed: int = 0
    grid_alpha: int = 64
    grid_lambda: int = 64
    early_stop: bool = False
    max_indeterminate: float = 0.0
    output: str = ""
    format: str = "csv"
    workers: int = 0

    _SEQUENCES = {"lambda_std": _floats, "noise": _strings, "nu": _floats}
    _NON_DATA = ("output", "workers", "format")
    _KEY_ALIASES = {"class": "cls", "lambda": "lam"}

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if self.sampler not in SAMPLERS:
            raise UsageError(f"unknown sampler {self.sampler!r}")
        if self.cls not in CLASSES:
            raise UsageError(f"unknown class {self.cls!r}")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if self.n < 2 or self.n_max < 2:
            raise UsageError("N must be at least 2")
        if self.samples < 1:
            raise UsageError("samples must be positive")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must fit in 64 bits")
        for kind in self.noise:
            if kind not in ("none", "depolarizing", "dephasing"):
                raise UsageError(f"unknown noise kind {kind!r}")
        if any(not 0.0 <= v <= 1.0 for v in self.nu):
            raise UsageError("nu must lie in [0, 1]")
        if not 0.0 <= self.max_indeterminate <= 1.0:
            raise UsageError("max-indeterminate is a fraction in [0, 1]")

    # round trip through the key=value file ----------------------------------
    def to_text(self, data_only: bool = False) -> str:
        lines = []
        for f in fields(self):
            if data_only and f.name in self._NON_DATA:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            key = {"cls": "class", "lam": "lambda"}.get(f.name, f.name).replace("_", "-")
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse_text(cls, text: str) -> dict:
        out = {}
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {number}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            key = cls._KEY_ALIASES.get(key, key)
            if key not in {f.name for f in fields(cls)}:
                raise UsageError(f"config line {number}: unknown key {key!r}")
            out[key] = value
        return out

    @classmethod
    def coerce(cls, values: dict) -> dict:
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, value in values.items():
            if key in cls._SEQUENCES:
                out[key] = cls._SEQUENCES[key](value)
            elif kinds[key] == "int":
                out[key] = int(value)
            elif kinds[key] == "float":
                out[key] = float(value)
            elif kinds[key] == "bool":
                out[key] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
            else:
                out[key] = str(value)
        return out

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(**cls.coerce(cls.parse_text(text)))

    def spec_hash(self) -> str:
        """sha256 of the canonical data-determining configuration."""
        return hashlib.sha256(self.to_text(data_only=True).encode()).hexdigest()

    @property
    def single_noise(self) -> NoiseSpec:
        kind = self.noise[0] if self.noise else "none"
        nu = self.nu[0] if self.nu else 0.0
        if kind == "none":
            if nu != 0.0:
                raise UsageError("--nu needs --noise depolarizing or dephasing")
            return NOISELESS
        return NoiseSpec(kind, nu)


# -- output --------------------------------------------------------------------------

# Everything else that is a float is written as an inequality value with %.12e.
_PROBABILITY_COLUMNS = {"p_hat", "std_err", "p_s1", "p_s1s2", "p_mabk", "p_wwzb", "p_nl", "A0", "A1", "delta", "nu", "lambda_std"}


def _format(key: str, value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if key in _PROBABILITY_COLUMNS:
            return "%.6f" % value
        return "%.12e" % value
    return str(value)


def render_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format(c, row.get(c, "")) for c in columns])
    return buf.getvalue()


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return f"v{__version__}"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else f"v{__version__}"


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def output_paths(config: RunConfig) -> tuple[Path, Path]:
    """(data file, manifest file)."""
    if config.output:
        data = Path(config.output)
        if data.is_dir() or config.output.endswith(os.sep):
            data = data / f"{config.subcommand}.{config.format}"
    else:
        base = Path(os.environ.get(OUTPUT_ENV) or ".")
        data = base / f"{config.subcommand}.{config.format}"
    manifest = data.with_suffix(".manifest.json") if config.format == "csv" else data
    return data, manifest


def write_outputs(config: RunConfig, rows: list[dict], columns: list[str], summary: dict) -> Path:
    data, manifest_path = output_paths(config)
    data.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": config.seed,
        "git_describe": git_describe(),
        "run_spec_hash": config.spec_hash(),
        "config": config.to_text(data_only=True),
        "columns": columns,
        "records": [{c: _json_safe(r.get(c)) for c in columns} for r in rows],
        "summary": _json_safe(summary),
    }
    if config.format == "csv":
        data.write_text(render_csv(rows, columns), encoding="utf-8")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return data


# -- subcommands ---------------------------------------------------------------------

RECORD_COLUMNS = [
    "n_parties", "sampler", "lambda_std", "noise", "nu", "inequality_class", "n_samples",
    "n_violations", "n_indeterminate", "p_hat", "std_err", "seed", "wall_time",
]


class Outcome:
    def __init__(self, rows, columns, passed=True, indeterminate=0, evaluated=0, message="", summary=None):
        self.rows = rows
        self.columns = columns
        self.passed = passed
        self.indeterminate = indeterminate
        self.evaluated = evaluated
        self.message = message
        self.summary = summary or {}


def _sampler_args(config: RunConfig) -> dict:
    if config.sampler == "prom-rotated":
        return {"alpha": config.alpha, "lam": config.lam}
    if config.sampler == "prom-perturbed":
        if len(config.lambda_std) != 1:
            raise UsageError("prom-perturbed needs exactly one --lambda-std")
        return {"lambda_std": config.lambda_std[0]}
    return {}


def _check_lp_cap(n: int, cls: str) -> None:
    if cls == InequalityClass.COMPLETE_SET.value and n > DEFAULT_MAX_PARTIES:
        raise UsageError(f"--class complete is limited to N <= {DEFAULT_MAX_PARTIES}")


def _workers(config: RunConfig):
    return config.workers or None


def cmd_prob(config: RunConfig) -> Outcome:
    _check_lp_cap(config.n, config.cls)
    record = ex.estimate_p(
        config.n, config.sampler, config.single_noise, config.cls, config.samples, config.seed,
        _workers(config), **_sampler_args(config),
    )
    row = record.to_row()
    return Outcome([row], RECORD_COLUMNS, True, record.n_indeterminate, record.n_samples,
                   f"p_hat = {record.p_hat:.6f} +/- {record.std_err:.6f}")


TABLE1_COLUMNS = ["sampler", "n_parties", "p_s1", "p_mabk", "p_wwzb", "p_nl", "n_samples", "n_indeterminate", "seed"]


def cmd_table1(config: RunConfig) -> Outcome:
    rows, indeterminate, evaluated = [], 0, 0
    for sampler in ("rim", "rom"):
        for n in range(2, config.n_max + 1):
            classes = [InequalityClass.S1, InequalityClass.MABK, InequalityClass.WWZB]
            if n <= DEFAULT_MAX_PARTIES:
                classes.append(InequalityClass.COMPLETE_SET)
            recs = ex.estimate_many(n, sampler, NOISELESS, classes, config.samples, config.seed, _workers(config))
            nl = recs.get(InequalityClass.COMPLETE_SET)
            rows.append({
                "sampler": sampler,
                "n_parties": n,
                "p_s1": recs[InequalityClass.S1].p_hat,
                "p_mabk": recs[InequalityClass.MABK].p_hat,
                "p_wwzb": recs[InequalityClass.WWZB].p_hat,
                "p_nl": nl.p_hat if nl else float("nan"),
                "n_samples": config.samples,
                "n_indeterminate": nl.n_indeterminate if nl else 0,
                "seed": config.seed,
            })
            if nl:
                indeterminate += nl.n_indeterminate
                evaluated += nl.n_samples
    return Outcome(rows, TABLE1_COLUMNS, True, indeterminate, evaluated, f"{len(rows)} rows")


TABLE2_COLUMNS = ["n_parties", "inequality_class", "n_alpha", "n_lambda", "samples_per_node", "A0", "A1", "indeterminate", "seed"]


def cmd_table2(config: RunConfig) -> Outcome:
    _check_lp_cap(config.n, config.cls)
    grid = ex.default_grid(config.grid_alpha, config.grid_lambda)
    record = ex.area_fractions(config.n, config.cls, grid, config.samples, config.seed, _workers(config), config.early_stop)
    evaluated = int(record.n_evaluated.sum() + record.n_indeterminate.sum())
    return Outcome([record.to_row()], TABLE2_COLUMNS, True, int(record.n_indeterminate.sum()), evaluated,
                   f"A0 = {record.a0:.4f}, A1 = {record.a1:.4f}")


def cmd_noise_sweep(config: RunConfig) -> Outcome:
    _check_lp_cap(config.n, config.cls)
    kinds = [k for k in config.noise if k != "none"] or ["depolarizing", "dephasing"]
    records = ex.noise_sweep(config.n, config.sampler, kinds, config.nu, config.cls, config.samples, config.seed, _workers(config))
    rows = [r.to_row() for r in records]
    # p_hat is expected to be non-increasing in nu for each noise kind
    passed = True
    for kind in kinds:
        series = [r for r in records if r.noise.kind.value in (kind, "none")]
        series.sort(key=lambda r: r.noise.nu)
        for a, b in zip(series, series[1:]):
            if b.p_hat > a.p_hat + 3 * math.hypot(a.std_err, b.std_err):
                passed = False
    return Outcome(rows, RECORD_COLUMNS, passed, sum(r.n_indeterminate for r in records),
                   sum(r.n_samples for r in records), "monotone" if passed else "non-monotone sweep")


PERTURBED_COLUMNS = ["n_parties", "lambda_std", "p_s1s2", "p_mabk", "delta", "n_samples", "seed"]


def cmd_perturbed(config: RunConfig) -> Outcome:
    stds = config.lambda_std or (0.0,)
    points = ex.perturbed_sweep(config.n, stds, n_samples=config.samples, seed=config.seed, workers=_workers(config))
    rows = [{
        "n_parties": config.n,
        "lambda_std": p.lambda_std,
        "p_s1s2": p.records[InequalityClass.S1S2].p_hat,
        "p_mabk": p.records[InequalityClass.MABK].p_hat,
        "delta": p.delta,
        "n_samples": config.samples,
        "seed": config.seed,
    } for p in points]
    return Outcome(rows, PERTURBED_COLUMNS, True, 0, 0, f"{len(rows)} widths")


THEOREM1_COLUMNS = ["n_parties", "n_samples", "floor_failures", "closed_form_failures", "worst_margin", "min_ratio", "max_relative_error"]


def cmd_theorem1(config: RunConfig) -> Outcome:
    report = ex.theorem1_check(config.n, config.samples, config.seed)
    row = dataclasses.asdict(report)
    failures = report.floor_failures + report.closed_form_failures
    return Outcome([row], THEOREM1_COLUMNS, report.passed, 0, 0, f"{failures} failures")


LP_CHECK_COLUMNS = ["n_parties", "n_samples", "agreements", "disagreements", "indeterminate", "n_nonlocal", "seed"]


def cmd_lp_check(config: RunConfig) -> Outcome:
    """Compare LP verdicts with CHSH-class violations on RIM samples (equivalent for N = 2)."""
    if config.n != 2:
        raise UsageError("lp-check compares against the CHSH class and needs --n 2")
    spec = SamplerSpec(config.sampler if config.sampler in ("rim", "rom") else "rim", 2, config.seed)
    codes = ex.classify_samples(spec, config.single_noise, [InequalityClass.CHSH4, InequalityClass.COMPLETE_SET],
                                config.samples, _workers(config), shortcut=False)
    chsh, lp = codes[InequalityClass.CHSH4], codes[InequalityClass.COMPLETE_SET]
    valid = lp != ex.INDETERMINATE
    agree = int(np.count_nonzero(valid & (chsh == lp)))
    disagree = int(np.count_nonzero(valid & (chsh != lp)))
    row = {
        "n_parties": 2, "n_samples": config.samples, "agreements": agree, "disagreements": disagree,
        "indeterminate": int(np.count_nonzero(~valid)), "n_nonlocal": int(np.count_nonzero(lp == ex.VIOLATED)),
        "seed": config.seed,
    }
    return Outcome([row], LP_CHECK_COLUMNS, disagree == 0, row["indeterminate"], config.samples,
                   f"agreement count CHSH-vs-LP = {agree}")


COMMANDS = {
    "prob": cmd_prob,
    "table1": cmd_table1,
    "table2": cmd_table2,
    "noise-sweep": cmd_noise_sweep,
    "perturbed": cmd_perturbed,
    "theorem1": cmd_theorem1,
    "lp-check": cmd_lp_check,
}


# -- argument parsing ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ghzbell", description="Bell-violation experiments with GHZ states.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; flags given explicitly override it")
        p.add_argument("--n", type=int)
        p.add_argument("--n-max", type=int)
        p.add_argument("--sampler", choices=SAMPLERS)
        p.add_argument("--alpha", type=float, help="prom-rotated normal azimuth (rad)")
        p.add_argument("--lambda", dest="lam", type=float, help="prom-rotated normal polar angle (rad)")
        p.add_argument("--lambda-std", help="comma-separated widths (rad) for prom-perturbed")
        p.add_argument("--noise", help="none, depolarizing, dephasing (comma-separated for noise-sweep)")
        p.add_argument("--nu", help="noise strength(s), comma-separated")
        p.add_argument("--class", dest="cls", choices=CLASSES)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--grid-alpha", type=int)
        p.add_argument("--grid-lambda", type=int)
        p.add_argument("--early-stop", action="store_const", const=True)
        p.add_argument("--max-indeterminate", type=float, help="allowed fraction of indeterminate LP results")
        p.add_argument("--output", help=f"output file or directory (default: ${OUTPUT_ENV} or cwd)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--workers", type=int, help="process pool size (default: available CPUs)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        values.update(RunConfig.parse_text(Path(args.config).read_text(encoding="utf-8")))
    for f in fields(RunConfig):
        if f.name == "subcommand":
            continue
        given = getattr(args, f.name, None)
        if given is not None:
            values[f.name] = given
    values["subcommand"] = args.subcommand
    return RunConfig(**RunConfig.coerce(values))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        outcome = COMMANDS[config.subcommand](config)
    except (UsageError, ResourceLimitError, ValueError, OSError) as exc:
        print(f"ghzbell {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GHZBellError as exc:
        print(f"ghzbell {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    summary = {"passed": outcome.passed, "indeterminate": outcome.indeterminate, "message": outcome.message}
    path = write_outputs(config, outcome.rows, outcome.columns, summary)
    print(f"{config.subcommand}: {outcome.message} -> {path}")
    if outcome.evaluated and outcome.indeterminate > config.max_indeterminate * outcome.evaluated:
        print(f"ghzbell: {outcome.indeterminate} indeterminate LP results exceed the allowed fraction "
              f"{config.max_indeterminate}", file=sys.stderr)
        return EXIT_INDETERMINATE
    if not outcome.passed:
        print(f"ghzbell: check failed: {outcome.message}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
