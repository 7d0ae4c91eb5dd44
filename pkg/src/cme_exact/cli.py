"""Command-line front end: closed forms, oracles, moments and sweeps as CSV/JSON.

Exit codes: 1 bad input (parse errors, bad flags), 2 no closed form for the
system class, 3 a numerical guard tripped.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .master_equation import NumericGuardError, integrate, suggest_n_max
from .moments import cumulants_from_pgf
from .polyseries import SeriesError
from .reaction_model import (
    DSLSyntaxError,
    ReactionSystem,
    SystemClass,
    classify,
    parse_dsl,
    parse_initial,
    serialize_dsl,
    system_from_json,
)
from .semilinear import composite_one_species, solve_semilinear
from .sobolev_jacobi import binary_solution
from .ssa import simulate

__all__ = ["RunConfig", "run", "main", "solve_closed", "ternary_grid", "UnsolvableError"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_UNSOLVABLE, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_TERNARY_STEP = 0.02


class UnsolvableError(ValueError):
    """No closed form is available for this system."""


class _InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    system: ReactionSystem
    times: list[float]
    max_deg: int | None = None
    n_max: int | None = None
    dt: float | None = None
    n_traj: int = 1000
    seed: int = 0
    fmt: str = "csv"
    out: str | None = None
    step: float = DEFAULT_TERNARY_STEP
    initial_count: int = 100
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(t < 0 for t in self.times):
            raise _InputError("times must be nonnegative")
        self.times = sorted(self.times)


# ----------------------------------------------------------------- solvers

def _binary_rates(system: ReactionSystem) -> tuple:
    rates = {(1, 0): 0, (2, 0): 0, (2, 1): 0}
    for r in system.reactions:
        if r.rate > 0:
            rates[(r.inputs[0], r.outputs[0])] += r.rate
    return rates[(1, 0)], rates[(2, 0)], rates[(2, 1)]


def solve_closed(system: ReactionSystem, t: float, max_deg: int | None = None) -> np.ndarray:
    """Closed-form probabilities at ``t`` (array indexed by counts).

    Raises :class:`UnsolvableError` for systems without a closed form.
    """
    cls = classify(system)
    if cls is SystemClass.GENERIC:
        raise UnsolvableError("system has no closed-form solution (class Generic)")
    if cls is SystemClass.BINARY_SJ:
        r_d, r_k, r_l = _binary_rates(system)
        top = system.max_initial()
        out = np.zeros(top + 1)
        for (M,), c in system.initial.items():
            out[:M + 1] += float(c) * binary_solution(r_d, r_k, r_l, M).pgf_coefficients(t)
        return out
    if max_deg is None:
        max_deg = suggest_n_max(system, t)
    try:
        series = solve_semilinear(system, t, max_deg)
    except ValueError as exc:
        if isinstance(exc, SeriesError):
            raise
        raise UnsolvableError(str(exc)) from exc
    return series.probabilities()


def _cumulant_row(probs: np.ndarray) -> list[float]:
    return cumulants_from_pgf(probs, 3)


def ternary_grid(step: float = DEFAULT_TERNARY_STEP) -> list[tuple[float, float, float]]:
    """Points ``(beta, gamma, tau)`` with ``beta + gamma + tau = 1`` on a regular grid."""
    k = round(1.0 / step)
    if k <= 0 or abs(k * step - 1.0) > 1e-9:
        raise _InputError("ternary step must divide 1")
    return [(a / k, b / k, (k - a - b) / k) for a in range(k + 1) for b in range(k + 1 - a)]


def _ternary_point(args) -> list[list[float]]:
    beta, gamma, tau, times, M, max_deg = args
    rows = []
    for t in times:
        deg = max_deg if max_deg is not None else _ternary_degree(beta, gamma, tau, t, M)
        p = composite_one_species(0.0, beta, gamma, tau, t, {(M,): 1.0}, deg).probabilities()
        c1, c2, _ = cumulants_from_pgf(p, 3)
        rows.append([beta, gamma, tau, t, c1, c2])
    return rows


def _ternary_degree(beta, gamma, tau, t, M) -> int:
    mean = M + (beta + 2 * gamma) * t
    return int(math.ceil(mean + 10 * math.sqrt(mean + 4 * gamma * t + 1))) + 10


def _threads() -> int:
    raw = os.environ.get("CME_EXACT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise _InputError(f"CME_EXACT_THREADS must be an integer, got {raw!r}")
    return max(1, min(os.cpu_count() or 1, 8))


# ----------------------------------------------------------------- output

def _state_label(idx) -> str:
    return str(idx[0]) if len(idx) == 1 else ":".join(str(int(k)) for k in idx)


def _distribution_rows(t: float, probs: np.ndarray, extra: Sequence = ()) -> list[list]:
    rows = []
    for idx, v in np.ndenumerate(probs):
        if probs.ndim > 1 and v == 0:
            continue
        rows.append([t, _state_label(idx), float(v), *extra])
    return rows


def _system_hash(system: ReactionSystem) -> str:
    text = serialize_dsl(system) + json.dumps(
        sorted([list(k), float(v)] for k, v in system.initial.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit(cfg: RunConfig, columns: list[str], rows: list[list], meta: dict) -> None:
    if cfg.fmt == "json":
        payload = {
            "command": cfg.command,
            "version": __version__,
            "system_hash": _system_hash(cfg.system),
            "system": serialize_dsl(cfg.system),
            "columns": columns,
            "rows": rows,
            **meta,
        }
        text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
    if cfg.out and cfg.out != "-":
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- commands

def _cmd_solve_closed(cfg: RunConfig) -> None:
    rows, tails = [], {}
    for t in cfg.times:
        p = solve_closed(cfg.system, t, cfg.max_deg)
        tails[repr(t)] = float(1.0 - p.sum())
        rows += _distribution_rows(t, p)
    _emit(cfg, ["t", "n", "p"], rows, {"class": classify(cfg.system).value, "tail_mass": tails,
                                       "truncation": {"max_deg": cfg.max_deg}})


def _master(cfg: RunConfig):
    t_final = max(cfg.times) if cfg.times else 0.0
    return integrate(cfg.system, t_final, n_max=cfg.n_max, dt=cfg.dt, sample_times=cfg.times)


def _cmd_solve_master(cfg: RunConfig) -> None:
    snaps = _master(cfg)
    rows = []
    for s in snaps:
        rows += _distribution_rows(s.time, s.probs, [s.leak])
    n_max = snaps[0].probs.shape[0] - 1 if snaps else cfg.n_max
    _emit(cfg, ["t", "n", "p", "leak"], rows, {"truncation": {"n_max": n_max, "dt": cfg.dt}})


def _cmd_simulate(cfg: RunConfig) -> None:
    t_final = max(cfg.times) if cfg.times else 0.0
    ens = simulate(cfg.system, t_final, cfg.times, cfg.n_traj, cfg.seed, workers=cfg.extra.get("workers", 1))
    rows = []
    for i, t in enumerate(ens.sample_times):
        for state in sorted(ens.samples[i]):
            p = ens.samples[i][state] / ens.n_traj
            rows.append([t, _state_label(state), p, math.sqrt(p * (1 - p) / ens.n_traj)])
    _emit(cfg, ["t", "n", "p", "se"], rows, {"n_traj": cfg.n_traj, "seed": cfg.seed})


def _cmd_moments(cfg: RunConfig) -> None:
    method = cfg.extra.get("method", "closed")
    rows = []
    if method == "closed":
        for t in cfg.times:
            rows.append([t, *_cumulant_row(solve_closed(cfg.system, t, cfg.max_deg))])
    else:
        for s in _master(cfg):
            rows.append([s.time, *_cumulant_row(s.probs / s.probs.sum())])
    _emit(cfg, ["t", "c1", "c2", "c3"], rows, {"method": method})


def _cmd_compare(cfg: RunConfig) -> None:
    snaps = _master(cfg)
    rows = []
    for s in snaps:
        p = solve_closed(cfg.system, s.time, cfg.max_deg)
        q = s.probs
        shape = tuple(max(a, b) for a, b in zip(p.shape, q.shape))
        pa, qa = np.zeros(shape), np.zeros(shape)
        pa[tuple(slice(0, k) for k in p.shape)] = p
        qa[tuple(slice(0, k) for k in q.shape)] = q
        rows.append([s.time, float(np.max(np.abs(pa - qa))), s.leak])
    worst = max((r[1] for r in rows), default=0.0)
    _emit(cfg, ["t", "sup_norm", "leak"], rows, {"max_sup_norm": worst})


def _cmd_sweep_ternary(cfg: RunConfig) -> None:
    grid = ternary_grid(cfg.step)
    jobs = [(b, g, tau, cfg.times, cfg.initial_count, cfg.max_deg) for b, g, tau in grid]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_ternary_point, jobs, chunksize=16))
    else:
        parts = [_ternary_point(j) for j in jobs]
    rows = [row for part in parts for row in part]
    _emit(cfg, ["beta", "gamma", "tau", "t", "c1", "c2"], rows,
          {"step": cfg.step, "initial": cfg.initial_count})


COMMANDS = {
    "solve-closed": _cmd_solve_closed,
    "solve-master": _cmd_solve_master,
    "simulate": _cmd_simulate,
    "moments": _cmd_moments,
    "compare": _cmd_compare,
    "sweep-ternary": _cmd_sweep_ternary,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        COMMANDS[cfg.command](cfg)
    except UnsolvableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSOLVABLE
    except (NumericGuardError, SeriesError, FloatingPointError, OverflowError) as exc:
        print(f"numeric guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (_InputError, DSLSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


# ----------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--system", help="reaction file (DSL or JSON); '-' reads stdin")
    src.add_argument("--dsl", help="inline reaction DSL; ';' separates reactions")
    common.add_argument("--initial", help="initial count (one species) or JSON {state: prob}")
    common.add_argument("--times", default="1", help="comma-separated sample times")
    common.add_argument("--max-deg", type=int, help="series truncation degree for closed forms")
    common.add_argument("--n-max", type=int, help="per-species truncation of the master equation")
    common.add_argument("--dt", type=float, help="RK4 step size")
    common.add_argument("--traj", type=int, default=1000, help="number of SSA trajectories")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cme-exact", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve-closed", parents=[common], help="closed-form distribution")
    sub.add_parser("solve-master", parents=[common], help="truncated master equation (RK4)")
    p = sub.add_parser("simulate", parents=[common], help="Gillespie simulation")
    p.add_argument("--workers", type=int, default=None, help="processes (default CME_EXACT_THREADS or 1)")
    p = sub.add_parser("moments", parents=[common], help="cumulants c1..c3 over time")
    p.add_argument("--method", choices=("closed", "master"), default="closed")
    sub.add_parser("compare", parents=[common], help="closed form vs master equation sup-norm")
    p = sub.add_parser("sweep-ternary", parents=[common],
                       help="c1, c2 over beta+gamma+tau=1 for birth, pair creation and decay")
    p.add_argument("--step", type=float, default=DEFAULT_TERNARY_STEP)
    return parser


def _read_system(args) -> ReactionSystem:
    if args.command == "sweep-ternary" and args.system is None and args.dsl is None:
        text = "0 -> A @ 1\n0 -> 2 A @ 1\nA -> 0 @ 1"
    elif args.dsl is not None:
        text = args.dsl.replace(";", "\n")
    elif args.system is not None:
        if args.system == "-":
            text = sys.stdin.read()
        else:
            try:
                with open(args.system, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise _InputError(f"cannot read system file: {exc}") from exc
    else:
        raise _InputError("one of --system or --dsl is required")
    if text.lstrip().startswith("{"):
        try:
            system = system_from_json(text)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise _InputError(f"invalid system JSON: {exc}") from exc
    else:
        system = parse_dsl(text)
    if args.initial is not None:
        try:
            initial = parse_initial(args.initial, system.nspecies)
        except (json.JSONDecodeError, ValueError) as exc:
            raise _InputError(f"invalid --initial: {exc}") from exc
        system = ReactionSystem(system.species, system.reactions, initial)
    return system


def _parse_times(text: str) -> list[float]:
    try:
        times = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise _InputError(f"invalid --times: {exc}") from exc
    if not times or any(not math.isfinite(t) for t in times):
        raise _InputError("--times needs finite values")
    return times


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    system = _read_system(args)
    extra = {}
    if args.command == "simulate":
        extra["workers"] = args.workers if args.workers is not None else (
            _threads() if os.environ.get("CME_EXACT_THREADS") else 1)
    if args.command == "moments":
        extra["method"] = args.method
    initial_count = 100
    if args.command == "sweep-ternary":
        if args.initial is not None:
            if len(system.initial) != 1:
                raise _InputError("sweep-ternary needs a pure initial state")
            initial_count = next(iter(system.initial))[0]
    return RunConfig(args.command, system, _parse_times(args.times), args.max_deg, args.n_max,
                     args.dt, args.traj, args.seed, args.format, args.out,
                     getattr(args, "step", DEFAULT_TERNARY_STEP), initial_count, extra)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
    except SystemExit as exc:
        # argparse usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    except (_InputError, DSLSyntaxError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
