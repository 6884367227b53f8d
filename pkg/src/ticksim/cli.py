"""Command-line front end: ``ticksim {delay,accuracy,trajectories,verify}``.

Each command reads a JSON run configuration, writes CSV/JSON results and a
``manifest.json`` into the output directory, and reports failures through
its exit status.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, axioms
from .clockmodel import (
    THERMO_DEFAULTS,
    ClockSpec,
    RegisterMode,
    ladder_clock,
    quasi_ideal_clock,
    quasi_ideal_defaults,
    thermodynamic_clock,
)
from .errors import (
    AccuracyError,
    DegenerateDistributionError,
    DomainError,
    HorizonError,
    HorizonWarning,
    InsufficientDataError,
    InvariantError,
    ModeError,
    NumericError,
    PairingError,
    ResourceError,
    ShapeError,
    SizeError,
    TicksimError,
    ValidationError,
)
from .evolve import TimeGrid
from .tickstats import (
    RNG_ALGORITHM,
    accuracy,
    atg_referee,
    delay_function,
    empirical_accuracy,
    sample_trajectories,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_RESOURCE = 4
EXIT_INTERNAL = 5

_EXIT_FOR = (
    ((ValidationError, ShapeError, DomainError, ModeError, PairingError), EXIT_USAGE),
    ((HorizonError, AccuracyError, NumericError, DegenerateDistributionError, InsufficientDataError),
     EXIT_NUMERIC),
    ((ResourceError, SizeError), EXIT_RESOURCE),
    ((InvariantError,), EXIT_INTERNAL),
)

U64 = 2**64


class UsageError(ValidationError):
    """Malformed configuration or command line."""


# --------------------------------------------------------------------------
# configuration


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _finite(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise UsageError(f"{name} must be a finite number, got {value!r}")
    return value


def _check_finite_tree(node, path="config"):
    if isinstance(node, dict):
        for key, val in node.items():
            _check_finite_tree(val, f"{path}.{key}")
    elif isinstance(node, list):
        for i, val in enumerate(node):
            _check_finite_tree(val, f"{path}[{i}]")
    elif isinstance(node, float) and not math.isfinite(node):
        raise UsageError(f"{path} is not finite")


def load_config(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError("config must be a JSON object")
    _check_finite_tree(config)
    return config


def _matrix_from_json(value, name) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{name} must be a matrix of [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise UsageError(f"{name} must be a matrix of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def _matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def spec_to_config(spec: ClockSpec) -> dict:
    """Explicit-operator clock section reproducing ``spec`` exactly."""
    return {
        "explicit": {
            "d": spec.d,
            "n_ticks": spec.n_ticks,
            "mode": spec.mode.value,
            "k0": spec.k0,
            "h": _matrix_to_json(spec.h),
            "l_ops": [_matrix_to_json(op) for op in spec.l_ops],
            "j_ops": [_matrix_to_json(op) for op in spec.j_ops],
            "rho_c0": _matrix_to_json(spec.rho_c0),
            "name": spec.name,
        }
    }


_BUILTIN_KEYS = {
    "ladder": {"d", "n_ticks", "mode", "k0"},
    "thermodynamic": set(THERMO_DEFAULTS) | {"n_ticks", "mode"},
    "quasi-ideal": set(quasi_ideal_defaults(2)) | {"d", "n_ticks", "mode", "reset"},
}


def spec_from_config(section) -> ClockSpec:
    """Build a ClockSpec from a ``clock`` section (builtin or explicit)."""
    if not isinstance(section, dict):
        raise UsageError("clock section must be an object")
    has_builtin, has_explicit = "builtin" in section, "explicit" in section
    if has_builtin == has_explicit:
        raise UsageError("clock section needs exactly one of 'builtin' or 'explicit'")
    if has_explicit:
        e = section["explicit"]
        if not isinstance(e, dict):
            raise UsageError("explicit clock must be an object")
        missing = {"d", "n_ticks", "mode", "h", "rho_c0"} - set(e)
        if missing:
            raise UsageError(f"explicit clock lacks {sorted(missing)}")
        return ClockSpec(
            d=int(_finite(e["d"], "d")),
            n_ticks=int(_finite(e["n_ticks"], "n_ticks")),
            mode=e["mode"],
            h=_matrix_from_json(e["h"], "h"),
            l_ops=tuple(_matrix_from_json(m, f"l_ops[{i}]") for i, m in enumerate(e.get("l_ops", []))),
            j_ops=tuple(_matrix_from_json(m, f"j_ops[{i}]") for i, m in enumerate(e.get("j_ops", []))),
            rho_c0=_matrix_from_json(e["rho_c0"], "rho_c0"),
            k0=int(_finite(e.get("k0", 0), "k0")),
            name=str(e.get("name", "explicit")),
        )
    name = section["builtin"]
    params = dict(section.get("params", {}))
    if name not in _BUILTIN_KEYS:
        raise UsageError(f"unknown builtin clock {name!r}; choose from {sorted(_BUILTIN_KEYS)}")
    unknown = set(params) - _BUILTIN_KEYS[name]
    if unknown:
        raise UsageError(f"unknown parameters for {name}: {sorted(unknown)}")
    n_ticks = int(_finite(params.pop("n_ticks", 4), "n_ticks"))
    mode = RegisterMode.parse(params.pop("mode", "cutoff"))
    if name == "ladder":
        return ladder_clock(
            int(_finite(params.get("d", 2), "d")), n_ticks=n_ticks, mode=mode,
            k0=int(_finite(params.get("k0", 0), "k0")),
        )
    if name == "thermodynamic":
        return thermodynamic_clock(
            {k: _finite(v, k) for k, v in params.items()}, n_ticks=n_ticks, mode=mode,
        )
    d = int(_finite(params.pop("d", 8), "d"))
    reset = params.pop("reset", True)
    if not isinstance(reset, bool):
        raise UsageError("reset must be true or false")
    return quasi_ideal_clock(
        d, {k: _finite(v, k) for k, v in params.items()}, reset=reset, n_ticks=n_ticks, mode=mode,
    )


def _grid(config) -> TimeGrid:
    g = config.get("grid")
    if not isinstance(g, dict) or "t_max" not in g or "steps" not in g:
        raise UsageError("config needs grid {t_max, steps}")
    steps = _finite(g["steps"], "grid.steps")
    if int(steps) != steps:
        raise UsageError("grid.steps must be an integer")
    return TimeGrid.span(float(_finite(g["t_max"], "grid.t_max")), int(steps))


def _ks(value, name="k") -> list[int]:
    ks = value if isinstance(value, list) else [value]
    out = []
    for k in ks:
        _finite(k, name)
        if int(k) != k:
            raise UsageError(f"{name} entries must be integers")
        out.append(int(k))
    if not out:
        raise UsageError(f"{name} range is empty")
    return out


# --------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


class _Writer:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.files: list[str] = []

    def csv(self, name: str, header: list[str], rows) -> None:
        lines = [",".join(header)]
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        self._write(name, "\n".join(lines) + "\n")

    def json(self, name: str, payload) -> None:
        self._write(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def _write(self, name: str, text: str) -> None:
        with open(self.out / name, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
        self.files.append(name)


# --------------------------------------------------------------------------
# commands


def cmd_delay(config: dict, w: _Writer, args) -> int:
    spec = spec_from_config(config.get("clock"))
    grid = _grid(config)
    status = EXIT_OK
    for k in _ks(config.get("k", 1)):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", HorizonWarning)
            df = delay_function(spec, k, grid)
        for warning in caught:
            if issubclass(warning.category, HorizonWarning):
                print(f"ticksim: warning: {warning.message}", file=sys.stderr)
                status = EXIT_NUMERIC
        w.csv(f"delay_k{k}.csv", ["t", "density"], zip(df.times, df.density))
    return status


def cmd_accuracy(config: dict, w: _Writer, args) -> int:
    spec = spec_from_config(config.get("clock"))
    grid = _grid(config)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonWarning)
        for k in _ks(config.get("k", 1)):
            a = accuracy(delay_function(spec, k, grid))
            rows.append((k, a.mean, a.variance, a.r_value))
    w.csv("accuracy.csv", ["k", "mean", "variance", "R"], rows)
    return EXIT_OK


def _trajectory_section(config, args) -> tuple[int, int, float, list[int]]:
    t = config.get("trajectories")
    if not isinstance(t, dict):
        raise UsageError("config needs a trajectories section {n, seed, t_max}")
    n = _finite(t.get("n"), "trajectories.n")
    seed = args.seed if args.seed is not None else t.get("seed", 0)
    _finite(seed, "trajectories.seed")
    if int(seed) != seed or not 0 <= seed < U64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    t_max = float(_finite(t.get("t_max"), "trajectories.t_max"))
    return int(n), int(seed), t_max, _ks(t.get("k", 1), "trajectories.k")


def _tick_rows(records):
    for r in records:
        for i, t in enumerate(r.tick_times, start=1):
            yield (r.trajectory_id, i, t)


def cmd_trajectories(config: dict, w: _Writer, args) -> int:
    spec = spec_from_config(config.get("clock"))
    n, seed, t_max, ks = _trajectory_section(config, args)
    threads = args.threads
    records = sample_trajectories(spec, t_max, n, seed, threads=threads)
    w.csv("ticks.csv", ["trajectory_id", "tick_index", "time"], _tick_rows(records))
    rows = []
    for k in ks:
        e = empirical_accuracy(records, k)
        rows.append((k, e.mean, e.variance, e.r_value, e.se_mean, e.se_variance, e.se_r,
                     e.n_used, e.n_excluded))
    w.csv("empirical_accuracy.csv",
          ["k", "mean", "variance", "R", "se_mean", "se_variance", "se_R", "n_used", "n_excluded"], rows)
    if config.get("clock_b") is not None:
        spec_b = spec_from_config(config["clock_b"])
        seed_b = (seed + 1) % U64
        records_b = sample_trajectories(spec_b, t_max, n, seed_b, threads=threads)
        w.csv("ticks_b.csv", ["trajectory_id", "tick_index", "time"], _tick_rows(records_b))
        games = atg_referee(records, records_b)
        w.csv("atg.csv", ["game_id", "length", "winner"],
              ((g.game_id, g.length, g.winner) for g in games.games))
    return EXIT_OK


def _basis(spec: ClockSpec, value) -> np.ndarray:
    if value in (None, "computational"):
        return np.eye(spec.d, dtype=complex)
    if value == "fourier":
        n = np.arange(spec.d)
        return np.exp(2j * math.pi * np.outer(n, n) / spec.d) / math.sqrt(spec.d)
    return _matrix_from_json(value, "basis")


def _run_check(spec: ClockSpec, name: str, tol, params: dict):
    """Dispatch one named check; ``tol`` None keeps the check's default."""
    kw = {} if tol is None else {"tol": float(tol)}
    seed = int(params.get("seed", 0))
    samples = int(params.get("samples", axioms.DEFAULT_SAMPLES))
    if name == "condition1":
        return axioms.check_condition1(spec, float(params.get("t", 0.7)), samples, seed=seed, **kw)
    if name == "condition2":
        return axioms.self_timing_check(spec, float(params.get("t1", 0.5)), float(params.get("t2", 0.5)),
                                        **kw)
    if name == "condition3":
        return axioms.check_condition3(spec, **kw)
    if name == "condition4":
        return axioms.check_condition4(spec, samples=min(samples, 5), seed=seed)
    if name == "condition5":
        return axioms.check_condition5(spec, params.get("times", [0.1, 1.0, 10.0]), samples=samples,
                                       seed=seed, **kw)
    if name == "classical_register":
        return axioms.check_classical_register(spec, float(params.get("t", 0.7)), samples=samples,
                                               seed=seed, **kw)
    if name == "classical_clockwork":
        grid = TimeGrid.span(float(params.get("t_max", 5.0)), int(params.get("steps", 50)))
        return axioms.check_classical_clockwork(spec, _basis(spec, params.get("basis")), grid, **kw)
    if name == "k_independence":
        return axioms.check_k_independence(spec, float(params.get("t", 1.0)), seed=seed, **kw)
    if name == "semigroup":
        return axioms.check_semigroup(spec, seed=seed, **kw)
    if name == "cptp":
        return axioms.check_cptp(spec, params.get("times", [0.1, 1.0]))
    if name == "measured_equivalence":
        times = params.get("times", [0.2, 0.3, 0.5])
        return axioms.check_measured_equivalence(spec, None, int(params.get("k0", spec.k0)), times, **kw)
    if name == "finite_running_memory":
        rho_t0 = np.zeros((spec.n_register, spec.n_register), dtype=complex)
        rho_t0[spec.k0, spec.k0] = 1.0
        _, report = axioms.check_finite_running_memory(
            spec, rho_t0, float(params.get("eps", 1e-3)), float(params.get("t", 0.1)),
        )
        return report
    raise UsageError(f"unknown check {name!r}")


DEFAULT_CHECKS = (
    "condition1", "condition2", "condition3", "condition4", "condition5", "classical_register",
    "k_independence", "semigroup", "cptp", "measured_equivalence",
)


def cmd_verify(config: dict, w: _Writer, args) -> int:
    spec = spec_from_config(config.get("clock"))
    checks = config.get("checks")
    if checks is None:
        checks = [{"name": c} for c in DEFAULT_CHECKS
                  if not (c == "condition5" and spec.mode is RegisterMode.PERIODIC)]
    if not isinstance(checks, list):
        raise UsageError("checks must be a list")
    results = {}
    all_ok = True
    for entry in checks:
        entry = {"name": entry} if isinstance(entry, str) else entry
        if not isinstance(entry, dict) or "name" not in entry:
            raise UsageError("each check needs a name")
        expect = entry.get("expect", "pass")
        if expect not in ("pass", "fail"):
            raise UsageError("expect must be 'pass' or 'fail'")
        report = _run_check(spec, entry["name"], entry.get("tol"), entry.get("params", {}))
        record = report.as_dict()
        record["expect"] = expect
        results[entry["name"]] = record
        all_ok &= report.passed == (expect == "pass")
    w.json("verify.json", results)
    return EXIT_OK if all_ok else EXIT_INTERNAL


COMMANDS = {
    "delay": cmd_delay,
    "accuracy": cmd_accuracy,
    "trajectories": cmd_trajectories,
    "verify": cmd_verify,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: config 'outputs')")
    common.add_argument("--seed", type=int, help="override the trajectory seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
    parser = argparse.ArgumentParser(prog="ticksim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ticksim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", ""))
    return parser


def _exit_code(exc: BaseException) -> int:
    for types, code in _EXIT_FOR:
        if isinstance(exc, types):
            return code
    return EXIT_INTERNAL


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    start = time.perf_counter()
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if args.seed is not None and not 0 <= args.seed < U64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        config = load_config(args.config)
        if args.seed is not None:
            config.setdefault("trajectories", {})
            if isinstance(config["trajectories"], dict):
                config["trajectories"]["seed"] = args.seed
        out = args.out or config.get("outputs")
        if not out:
            raise UsageError("no output directory: pass --out or set 'outputs'")
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = _Writer(out_dir)
        status = COMMANDS[args.command](config, writer, args)
        manifest = {
            "command": args.command,
            "config_hash": config_hash(config),
            "version": __version__,
            "rng": RNG_ALGORITHM,
            "runtime_seconds": time.perf_counter() - start,
            "files": writer.files + ["manifest.json"],
        }
        writer.json("manifest.json", manifest)
        return status
    except TicksimError as exc:
        print(f"ticksim: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"ticksim: error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except Exception as exc:  # noqa: BLE001 - report anything else as an internal failure
        print(f"ticksim: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
