"""Command-line front door: simulations, estimators and verification suites."""

from __future__ import annotations

import argparse
import ast
import dataclasses
import json
import math
import operator
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mixing, stats
from .errors import (ConfigError, DegenerateDirection, GroupTooLarge, HorizonExceeded, InvalidType,
                     NotInGroup, QuotientTooLarge, RBWalkError, WindowTooLong, ZeroVector)
from .raytrace import classify_direction, hit_rate, window_frequencies
from .rng import RngStream
from .walk import (EnsembleError, WalkConfig, ensemble, ensemble_summary, simulate_continuous,
                   simulate_discrete, simulate_refraction)

EXIT_OK = 0
EXIT_DEGENERATE = 2
EXIT_ESTIMATOR = 3
EXIT_CONFIG = 4

# Shipped reference configurations: (type, p, b as expression strings).
REFERENCE_CONFIGS = {
    "a1-p0.3": ("A1", "0.3", ("1",)),
    "a1-p0.5": ("A1", "0.5", ("1",)),
    "a1-p0.7": ("A1", "0.7", ("1",)),
    "a2-rational": ("A2", "0.3", ("0", "1")),
    "a2-irrational": ("A2", "0.3", ("1", "sqrt(2)")),
    "g2-p0.3": ("G2", "0.3", ("1", "sqrt(2)")),
}
DEFAULT_REFERENCE = "a2-irrational"

# ------------------------------------------------------------ expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sqrt": math.sqrt}
_NAMES = {"pi": math.pi}


def eval_scalar(text: str) -> float:
    """Evaluate a decimal literal or a small arithmetic expression such as ``1+sqrt(2)/3``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse number {text!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](ev(node.args[0]))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        raise ConfigError(f"unsupported expression in {text!r}")

    try:
        value = ev(tree)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot evaluate {text!r}: {exc}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"non-finite value {text!r}")
    return value


def split_vector(text: str) -> tuple[str, ...]:
    """Split ``"1,sqrt(2)"`` on top-level commas."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    if any(not p for p in parts):
        raise ConfigError(f"empty component in vector {text!r}")
    return tuple(parts)


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    """Everything needed to re-run one command bit-identically."""

    command: str
    type: str = "A2"
    p: str = "0.3"
    b: tuple = ("1", "sqrt(2)")
    L0: tuple | None = None
    seed: int = 0
    N: int | None = None
    T: float | None = None
    runs: int | None = None
    threads: int = 1
    jitter: int | None = None
    options: dict = field(default_factory=dict)

    def walk(self) -> WalkConfig:
        p = eval_scalar(self.p)
        if not 0.0 < p < 1.0:
            raise ConfigError(f"p must lie in (0, 1), got {p}")
        b = np.array([eval_scalar(x) for x in self.b])
        try:
            geom = WalkConfig(self.type, p).geom
        except InvalidType as exc:
            raise ConfigError(str(exc)) from exc
        if b.size != geom.rank:
            raise ConfigError(f"b has {b.size} components but {self.type} has rank {geom.rank}")
        norm = float(np.linalg.norm(b))
        if norm == 0.0:
            raise ConfigError("direction b must be nonzero")
        L0 = None
        if self.L0 is not None:
            L0 = tuple(eval_scalar(x) for x in self.L0)
            if len(L0) != geom.rank:
                raise ConfigError(f"L0 has {len(L0)} components but {self.type} has rank {geom.rank}")
        return WalkConfig(self.type, p, tuple(float(x) for x in b / norm), L0, self.seed, self.jitter)

    def echo(self) -> dict:
        """Config echo: exact input strings plus the normalized direction."""
        wc = self.walk()
        out = {"command": self.command, "type": self.type, "p": self.p, "b": list(self.b),
               "b_normalized": [repr(x) for x in wc.b], "L0": None if self.L0 is None else list(self.L0),
               "seed": self.seed, "jitter": self.jitter}
        for key in ("N", "T", "runs"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        out.update({k: v for k, v in self.options.items() if v is not None})
        return out


# ------------------------------------------------------------------ output

def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def emit_json(report: dict, out: str | None) -> None:
    text = json.dumps(to_jsonable(report), indent=2, sort_keys=True) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: ExperimentConfig, out: str | None) -> None:
    from .walk import write_trajectory_csv

    wc = cfg.walk()
    mode = cfg.options["mode"]
    T = cfg.T
    if mode != "discrete" and T is None:
        T = cfg.N / hit_rate(wc.direction, wc.geom.spec)
    if cfg.runs is not None:
        # ensemble of endpoints over streams 0..runs-1, fanned out over --threads
        values = ensemble(wc, cfg.runs, lambda tr: tr.points[-1], N=cfg.N, T=T, mode=mode,
                          threads=cfg.threads)
        summary = ensemble_summary(wc, values, cfg.runs, "endpoint", N=cfg.N if mode == "discrete" else None,
                                   T=None if mode == "discrete" else T)
        emit_json({"config": cfg.echo(), "ensemble": summary}, out)
        return
    rng = RngStream(wc.seed, 0)
    if mode == "discrete":
        traj = simulate_discrete(wc.start, wc.direction, wc.p, cfg.N, rng, wc.geom, jitter=wc.jitter)
    else:
        if mode == "continuous":
            traj = simulate_continuous(wc.start, wc.direction, wc.p, T, rng, wc.geom, jitter=wc.jitter)
        else:
            traj = simulate_refraction(wc.start, wc.direction, wc.p, T, rng, wc.geom)
    if out is None or out == "-":
        write_trajectory_csv(sys.stdout, traj)
    else:
        write_trajectory_csv(out, traj)


def cmd_sigma(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    emp = stats.empirical_sigma(wc, cfg.N, cfg.runs)
    series = stats.sigma_via_series(wc, cfg.options["m_max"], cfg.options["N_freq"])
    rel = abs(series.sigma2 - emp.sigma2) / emp.sigma2
    report = {"config": cfg.echo(), "empirical": emp, "sigma2_continuous": emp.sigma2_continuous,
              "series": series, "relative_gap": rel}
    if wc.type == "A1":
        report["a1_closed_form"] = stats.a1_sigma2(wc.p)
    emit_json(report, out)


def cmd_mixing(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    curve = mixing.mixing_curve(wc, cfg.N, cfg.runs, n0=cfg.options["n0"])
    report = {"config": cfg.echo(), "curve": curve.report(wc)}
    lam = cfg.options.get("lam")
    if lam:
        report["quotient"] = mixing.quotient_equidistribution(wc, lam, cfg.options["quotient_n"], cfg.runs)
    emit_json(report, out)


def cmd_freq(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    w = cfg.options["window_length"]
    table = window_frequencies(wc.start, wc.direction, w, cfg.N, cfg.options["n0"], wc.geom)
    kind, why = classify_direction(wc.direction, wc.geom.spec)
    freqs = {",".join(map(str, k)): v for k, v in sorted(table.frequencies.items())}
    emit_json({"config": cfg.echo(), "direction_class": kind, "direction_reason": why,
               "window_length": w, "total": table.total, "frequencies": freqs}, out)


def cmd_moments(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    Y = stats.scaled_endpoints(wc, cfg.N, cfg.runs)
    d = Y.shape[1]
    emp = stats.empirical_sigma(wc, cfg.N, cfg.runs)
    tensors = {}
    for k in range(1, cfg.options["max_order"] + 1):
        T = stats.moment_tensor_from_samples(Y, k)
        gauss = stats.gaussian_moment_tensor(k, emp.sigma2, d)
        z = np.abs(T.entries - gauss.entries) / np.maximum(T.se, 1e-300)
        tensors[str(k)] = {"entries": T.entries, "se": T.se, "gaussian": gauss.entries,
                           "max_z": float(z.max())}
        if k == 4:
            tensors[str(k)]["diag_offdiag_ratio"] = stats.fourth_moment_ratio(T)
    emit_json({"config": cfg.echo(), "sigma2": emp.sigma2, "tensors": tensors}, out)


def cmd_growth(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    g = stats.growth_function(wc, cfg.options["n_grid"], cfg.options["n0_grid"], cfg.runs)
    emit_json({"config": cfg.echo(), "growth": g, "ratio": g.ratio,
               "all_checks_hold": all(c["holds"] for c in g.checks)}, out)


def cmd_martingale(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    res = {}
    for n in cfg.options["n_grid"]:
        m = stats.martingale_error(wc, n, cfg.runs)
        res[str(n)] = {"s_n": m.s_n, "median": m.median, "correction_norms": m.correction_norms,
                       "correction_bound": m.correction_bound, "C": m.C}
    emit_json({"config": cfg.echo(), "martingale": res}, out)


def cmd_functional(cfg: ExperimentConfig, out: str | None) -> None:
    wc = cfg.walk()
    rep = stats.functional_tests(wc, cfg.N, cfg.runs)
    emit_json({"config": cfg.echo(), "functional": rep, "corr_band": rep.corr_band,
               "passes": rep.passes()}, out)


def cmd_verify_all(cfg: ExperimentConfig, out: str | None) -> int:
    from .verify import run_all

    results = run_all(stream=sys.stderr)
    emit_json({"criteria": [r.as_dict() for r in results]}, out)
    failed = [r for r in results if not r.ok and not r.expected_fail]
    if failed:
        print(json.dumps({"error": "VerificationFailed", "criterion": failed[0].name,
                          "detail": failed[0].detail}), file=sys.stderr)
        return EXIT_ESTIMATOR
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sigma": cmd_sigma, "mixing": cmd_mixing, "freq": cmd_freq,
            "moments": cmd_moments, "growth": cmd_growth, "martingale": cmd_martingale,
            "functional": cmd_functional, "verify-all": cmd_verify_all}

# Per-command defaults for (N, runs), sized to finish well under a minute.
DEFAULTS = {"simulate": (200, None), "sigma": (10_000, 10_000), "mixing": (40, 100_000),
            "freq": (100_000, None), "moments": (10_000, 10_000), "growth": (None, 2_000),
            "martingale": (None, 1_000), "functional": (10_000, 10_000), "verify-all": (None, None)}


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    """Argument errors become ConfigError so they map to the config exit code."""

    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in split_vector(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbwalk", description="Random billiard walks in affine Weyl alcoves.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", choices=sorted(REFERENCE_CONFIGS),
                       help=f"reference configuration (default {DEFAULT_REFERENCE})")
        p.add_argument("--type", help="root system type, e.g. A1, A2, B2, G2")
        p.add_argument("--p", help="reflection probability in (0, 1)")
        p.add_argument("--b", help="direction, comma separated; sqrt(...) allowed")
        p.add_argument("--L0", help="start point, comma separated (default: A0 centroid)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--steps", "-N", dest="N", type=int, help="crossings per run")
        p.add_argument("--runs", "-M", dest="runs", type=int, help="number of runs")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--jitter", type=int, help="jitter seed used when the ray meets a codim-2 face")
        p.add_argument("--out", "-o", help="output file (default stdout)")
        p.add_argument("--verify", action="store_true", help="run this module's invariant suite first")

    p = sub.add_parser("simulate", help="one trajectory as CSV, or endpoint JSON with --runs")
    common(p)
    p.add_argument("--mode", choices=("discrete", "continuous", "refraction"), default="discrete")
    p.add_argument("--T", type=float, help="time horizon for continuous/refraction modes")

    p = sub.add_parser("sigma", help="empirical and series variance")
    common(p)
    p.add_argument("--m-max", dest="m_max", type=int, default=12)
    p.add_argument("--n-freq", dest="N_freq", type=int, default=10**6)

    p = sub.add_parser("mixing", help="TV-to-uniform decay of the finite Weyl group image")
    common(p)
    p.add_argument("--n0", type=int, default=0)
    p.add_argument("--lam", type=int, help="also run the quotient chain mod lam Q^vee")
    p.add_argument("--quotient-n", dest="quotient_n", type=int, default=1000)

    p = sub.add_parser("freq", help="window frequencies of the cutting sequence")
    common(p)
    p.add_argument("--window", dest="window_length", type=int, default=3)
    p.add_argument("--n0", type=int, default=0)

    p = sub.add_parser("moments", help="moment tensors of the rescaled endpoint")
    common(p)
    p.add_argument("--max-order", dest="max_order", type=int, default=4)

    p = sub.add_parser("growth", help="expected number of distinct blocks f(n)")
    common(p)
    p.add_argument("--n-grid", dest="n_grid", type=_int_list, default=[100, 1000, 10000])
    p.add_argument("--n0-grid", dest="n0_grid", type=_int_list, default=[0, 1000])

    p = sub.add_parser("martingale", help="martingale approximation error")
    common(p)
    p.add_argument("--n-grid", dest="n_grid", type=_int_list, default=[16, 32])

    p = sub.add_parser("functional", help="Brownian proxies for the rescaled path")
    common(p)

    p = sub.add_parser("verify-all", help="every acceptance criterion at reduced budgets")
    p.add_argument("--out", "-o")
    return parser


_OPTION_KEYS = {"mode", "m_max", "N_freq", "n0", "lam", "quotient_n", "window_length", "max_order",
                "n_grid", "n0_grid"}


def config_from_args(args) -> ExperimentConfig:
    if args.command == "verify-all":
        return ExperimentConfig("verify-all")
    name = args.config
    if name is None and args.type:
        # first shipped reference of the requested type, if any, supplies p and b
        name = next((k for k, v in REFERENCE_CONFIGS.items() if v[0] == args.type), DEFAULT_REFERENCE)
    ref = REFERENCE_CONFIGS[name or DEFAULT_REFERENCE]
    type_ = args.type or ref[0]
    N_def, M_def = DEFAULTS[args.command]
    opts = {k: getattr(args, k) for k in _OPTION_KEYS if hasattr(args, k)}
    return ExperimentConfig(
        command=args.command, type=type_, p=args.p or ref[1],
        b=split_vector(args.b) if args.b else ref[2],
        L0=split_vector(args.L0) if args.L0 else None, seed=args.seed,
        N=args.N if args.N is not None else N_def, T=getattr(args, "T", None),
        runs=args.runs if args.runs is not None else M_def, threads=args.threads,
        jitter=args.jitter, options=opts)


def _error_exit(exc: BaseException, code: int, hint: str | None = None) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if hint:
        payload["hint"] = hint
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        if cfg.command != "verify-all":
            cfg.walk()
            if args.verify:
                from .verify import run_module_suite

                results = run_module_suite(cfg.command, stream=sys.stderr)
                bad = [r for r in results if not r.ok]
                if bad:
                    print(json.dumps({"error": "InvariantViolated", "check": bad[0].name,
                                      "detail": bad[0].detail, "exit_code": EXIT_ESTIMATOR}),
                          file=sys.stderr)
                    return EXIT_ESTIMATOR
        rc = COMMANDS[cfg.command](cfg, args.out)
        return EXIT_OK if rc is None else rc
    except DegenerateDirection as exc:
        return _error_exit(exc, EXIT_DEGENERATE, "pass --jitter SEED to perturb b off the codim-2 face")
    except (ConfigError, InvalidType, ZeroVector) as exc:
        return _error_exit(exc, EXIT_CONFIG)
    except (GroupTooLarge, NotInGroup, QuotientTooLarge, WindowTooLong, HorizonExceeded,
            EnsembleError, RBWalkError, FloatingPointError) as exc:
        return _error_exit(exc, EXIT_ESTIMATOR)


if __name__ == "__main__":
    sys.exit(main())
