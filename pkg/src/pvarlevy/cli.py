"""Command-line entry point: ``pvarlevy <command> [options]``.

Exit codes: 0 success, 2 invalid input (bad flags, missing or malformed
files), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core_path import CadlagPath, PathError
from .levy import ModelError, corollary_a_classify, decompensate, load_model, sample_path
from .marcus import (MarcusError, SupportCurveSpec, load_system, solve_marcus, solve_support_ode,
                     support_distance)
from .pvar import (SawParams, linear_path, make_saw, pvar_bruteforce, pvar_exact,
                   saw_pvar_p)
from .smalldev import (StableSmallBallParams, conditioned_draw, construct_witness_dim1,
                       debruijn_rate, estimate_small_deviation, stated_small_ball_limit,
                       scaled_log_prob, stable_small_ball_constant, subordinator_scale,
                       verify_witness_skeleton)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
SEED_ENV = "PVARLEVY_SEED"
CANDIDATE_FIELDS = {"schema", "phi_L", "alpha_nu", "jumps"}


class UsageError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


def _existing(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise UsageError(f"no such file: {text}")
    return p


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def resolve_seed(args, required: bool = True) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if args.seed is None and required:
        raise UsageError("this command is stochastic: pass --seed or set " + SEED_ENV)
    return args.seed


def _load_json(path: Path, allowed: set) -> dict:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    if data.get("schema", 1) != 1:
        raise UsageError(f"{path}: unsupported schema {data['schema']!r}")
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"{path}: unknown fields {sorted(unknown)}")
    return data


def load_candidate(path: Path) -> SupportCurveSpec:
    data = _load_json(path, CANDIDATE_FIELDS)
    phi = data["phi_L"]
    phi_L = CadlagPath.polygon(phi["times"], phi["values"])
    jumps = data.get("jumps", [])
    d = phi_L.dim
    return SupportCurveSpec(phi_L, data.get("alpha_nu", [0.0] * d),
                            [j["time"] for j in jumps],
                            np.array([j["size"] for j in jumps], dtype=float).reshape(-1, d))


# -- reporting ------------------------------------------------------------------

class Report:
    """Inputs echo, result rows and provenance; printed as a table or JSON."""

    def __init__(self, command: str, inputs: dict, seed: int | None):
        self.command = command
        self.inputs = inputs
        self.seed = seed
        self.rows: list[dict] = []
        self.t0 = time.perf_counter()

    def add(self, **row):
        self.rows.append(row)

    def emit(self, as_json: bool, out=None):
        out = sys.stdout if out is None else out
        prov = {"version": __version__, "git": _git_describe(), "seed": self.seed,
                "wall_time_s": round(time.perf_counter() - self.t0, 3)}
        if as_json:
            json.dump({"schema": 1, "command": self.command, "inputs": self.inputs,
                       "results": self.rows, "provenance": prov}, out, indent=1, default=_jsonable)
            out.write("\n")
            return
        for row in self.rows:
            out.write("  ".join(f"{k} = {_fmt(v)}" for k, v in row.items()) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.ndarray, tuple)):
        return list(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(type(x))


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                               for x in v) + "]"
    return str(v)


def _echo(args) -> dict:
    skip = {"func", "json"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in skip}


# -- commands -------------------------------------------------------------------

def cmd_simulate(args) -> Report:
    seed = resolve_seed(args)
    model = load_model(_existing(args.model))
    if args.decompensated:
        model = decompensate(model)
    path = sample_path(model, args.T, args.eta, seed)
    path.to_csv(args.out)
    rep = Report("simulate", _echo(args), seed)
    rep.add(nodes=len(path), jumps=int(np.sum(path.kinds == 1)), end=path.values[-1].tolist(),
            out=str(args.out))
    return rep


def cmd_pvar(args) -> Report:
    path = CadlagPath.from_csv(_existing(args.inp))
    if args.window:
        if len(args.window) != 2:
            raise UsageError("--window takes a,b")
        path = path.restrict(*args.window)
    out = pvar_bruteforce(path, args.p) if args.brute else pvar_exact(path, args.p)
    if args.partition_out:
        with open(args.partition_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "time"] + [f"x{i + 1}" for i in range(path.dim)])
            for i in out.partition:
                w.writerow([i, repr(float(path.times[i]))] + [repr(float(x)) for x in path.values[i]])
    rep = Report("pvar", _echo(args), None)
    rep.add(p=args.p, pvar=out.value, pvar_p=out.value_p, partition_size=len(out.partition),
            method="bruteforce" if args.brute else "dp")
    return rep


def cmd_saw(args) -> Report:
    params = SawParams(args.n, args.T, np.array(args.v))
    value = pvar_exact(make_saw(params), args.p).value_p
    rep = Report("saw", _echo(args), None)
    rep.add(**{"pvar^p": value, "closed_form": saw_pvar_p(params, args.p)})
    return rep


def cmd_smalldev(args) -> Report:
    seed = resolve_seed(args)
    model = load_model(_existing(args.model))
    center = CadlagPath.from_csv(_existing(args.center)) if args.center else None
    est = estimate_small_deviation(model, args.T, args.p, args.eps, args.trials, args.eta, seed,
                                   workers=args.workers, center=center)
    rep = Report("smalldev", _echo(args), seed)
    rep.add(**est.to_dict())
    return rep


def cmd_witness(args) -> Report:
    seed = resolve_seed(args, required=args.draws > 0)
    model = load_model(_existing(args.model))
    w = construct_witness_dim1(model, args.T, args.p, args.eps, args.eta)
    ok, total = verify_witness_skeleton(w, args.p, args.eps)
    row = {"witness": w.to_dict() if args.out is None else str(args.out),
           "skeleton_ok": bool(ok), "skeleton_sum": total, "feasible": w.feasible}
    if args.out:
        Path(args.out).write_text(json.dumps(w.to_dict(), indent=1))
    if args.draws:
        dm = decompensate(model)
        floor = args.floor_ratio if args.floor_ratio > 0 else None
        vals = [pvar_exact(conditioned_draw(dm, w, seed, i, floor), args.p).value
                for i in range(args.draws)]
        row.update(draws=args.draws, below_eps=int(sum(v < args.eps for v in vals)),
                   max_draw_pvar=max(vals))
    rep = Report("witness", _echo(args), seed)
    rep.add(**row)
    return rep


GNUPLOT = """set terminal pngcairo size 640,440
set output '{png}'
set datafile separator ','
set logscale x
set key bottom right
set xlabel 'eps'
set ylabel '-eps^(delta/(1-delta)) log P[S_1 < eps]'
plot '{csv}' using 1:2 skip 1 with linespoints title 'exact CDF', \\
     {debruijn!r} with lines dashtype 2 title 'de Bruijn rate', \\
     {stated!r} with lines dashtype 3 title 'stated limit'
"""


def cmd_stable_ball(args) -> Report:
    params = StableSmallBallParams(args.beta, args.gamma, args.clambda)
    eps = np.array(sorted(args.eps_grid, reverse=True))
    if np.any(eps <= 0):
        raise UsageError("--eps-grid values must be positive")
    d = params.delta
    try:
        scaled = scaled_log_prob(params, eps)
    except ValueError:
        scaled = np.full(len(eps), np.nan)
    const = stable_small_ball_constant(params)
    db = debruijn_rate(d, subordinator_scale(params))
    pub = stated_small_ball_limit(params)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "stable_ball.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "scaled_log_prob", "debruijn_rate", "stated_limit", "constant"])
        for e, s in zip(eps, scaled):
            w.writerow([repr(float(e)), repr(float(s)), repr(db), repr(pub), repr(const)])
    (out / "stable_ball.gp").write_text(GNUPLOT.format(png="stable_ball_gnuplot.png", csv=csv_path.name,
                                                       debruijn=db, stated=pub))
    rep = Report("stable-ball", _echo(args), None)
    if not args.no_png:
        from .plotting import plot_small_ball
        plot_small_ball(eps, scaled, {"de Bruijn rate": db, "stated limit": pub},
                        out / "stable_ball.png")
    for e, s in zip(eps, scaled):
        rep.add(eps=float(e), scaled_log_prob=float(s), debruijn_rate=db, stated_limit=pub,
                constant=const)
    return rep


def cmd_marcus(args) -> Report:
    system = load_system(_existing(args.system))
    drive = CadlagPath.from_csv(_existing(args.drive))
    x = solve_marcus(system, drive)
    x.to_csv(args.out)
    rep = Report("marcus", _echo(args), None)
    rep.add(nodes=len(x), end=x.values[-1].tolist(), out=str(args.out))
    return rep


def cmd_support(args) -> Report:
    seed = resolve_seed(args)
    system = load_system(_existing(args.system))
    spec = load_candidate(_existing(args.candidate))
    model = decompensate(load_model(_existing(args.model)))
    if model.dim != system.f.d:
        raise UsageError("model dimension does not match the vector field")
    T = spec.phi_L.end
    target = solve_support_ode(spec, system.f, system.x0, system.ode)
    rep = Report("support", _echo(args), seed)
    for i in range(args.samples):
        x = solve_marcus(system, sample_path(model, T, args.eta, seed, i))
        dist, flagged = support_distance(x, target, args.p, args.n)
        rep.add(sample=i, distance=dist, identity_time_change=flagged)
    return rep


def cmd_classify(args) -> Report:
    model = load_model(_existing(args.model))
    v = corollary_a_classify(model, args.p)
    rep = Report("classify", _echo(args), None)
    rep.add(case=v.case, details=v.details, generalized_drift=list(v.generalized_drift))
    return rep


def selftest_checks(cases: int = 300, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Oracle equivalence and closed forms on a small budget."""
    rng = np.random.default_rng(seed)
    out = []
    bad = 0
    for _ in range(cases):
        n = int(rng.integers(2, 11))
        d = int(rng.integers(1, 3))
        p = float(rng.choice([1.0, 1.3, 1.7, 1.99]))
        path = CadlagPath.polygon(np.arange(n, dtype=float), rng.normal(size=(n, d)))
        bad += pvar_exact(path, p).value != pvar_bruteforce(path, p).value
    out.append(("dp equals brute force", bad == 0, f"{bad} mismatches in {cases}"))
    worst = 0.0
    for n in (1, 2, 5):
        for p in (1.0, 1.5, 2.0, 3.0):
            sp = SawParams(n, 1.3, np.array([0.6, -0.8]))
            worst = max(worst, abs(pvar_exact(make_saw(sp), p).value_p / saw_pvar_p(sp, p) - 1))
    out.append(("saw closed form", worst < 1e-9, f"max rel err {worst:.2e}"))
    worst = 0.0
    for _ in range(50):
        a = rng.normal(size=3)
        T = float(rng.uniform(0.1, 5))
        worst = max(worst, abs(pvar_exact(linear_path(a, T), 1.7).value / (T * np.linalg.norm(a)) - 1))
    out.append(("linear path", worst < 1e-12, f"max rel err {worst:.2e}"))
    c = stable_small_ball_constant(StableSmallBallParams(0.5, 1.0, 1.0))
    out.append(("stable constant beta=1/2", abs(c - math.sqrt(math.pi) / 2) < 1e-12, f"{float(c)!r}"))
    return out


def cmd_selftest(args) -> Report:
    rep = Report("selftest", _echo(args), None)
    for name, ok, info in selftest_checks(args.cases):
        rep.add(check=name, status="PASS" if ok else "FAIL", info=info)
    return rep


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (env %s overrides)" % SEED_ENV)
    common.add_argument("--workers", type=int, default=1, help="process pool size for trial sharding")
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")

    ap = argparse.ArgumentParser(prog="pvarlevy", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "simulate a Levy path from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--eta", type=_positive, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decompensated", action="store_true", help="remove the generalized drift first")

    p = add("pvar", cmd_pvar, "exact p-variation of a path CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--window", type=_floats, default=None, help="a,b")
    p.add_argument("--brute", action="store_true", help="exhaustive oracle (at most 20 nodes)")
    p.add_argument("--partition-out", default=None)

    p = add("saw", cmd_saw, "p-variation of a saw function")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--v", type=_floats, required=True)
    p.add_argument("--p", type=float, required=True)

    p = add("smalldev", cmd_smalldev, "Monte Carlo small-deviation estimate")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--eps", type=_positive, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--eta", type=_positive, required=True)
    p.add_argument("--center", default=None, help="path CSV to measure the distance to")

    p = add("witness", cmd_witness, "construct and verify a witness event (dim L <= 1)")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=_positive, default=1.0)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--eps", type=_positive, required=True)
    p.add_argument("--eta", type=_positive, required=True)
    p.add_argument("--draws", type=int, default=0, help="conditioned draws to check")
    p.add_argument("--floor-ratio", type=float, default=0.1,
                   help="simulate small jumps down to this fraction of the cutoff (0: none)")
    p.add_argument("--out", default=None, help="write the witness JSON here")

    p = add("stable-ball", cmd_stable_ball, "stable small-ball constants and rates")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--clambda", type=_positive, required=True)
    p.add_argument("--eps-grid", type=_floats, required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-png", action="store_true", help="skip the matplotlib rendering")

    p = add("marcus", cmd_marcus, "solve a Marcus equation along a drive CSV")
    p.add_argument("--system", required=True)
    p.add_argument("--drive", required=True)
    p.add_argument("--out", required=True)

    p = add("support", cmd_support, "distance of simulated solutions to a support curve")
    p.add_argument("--system", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--eta", type=_positive, default=1e-2)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--n", type=int, default=0, help="Skorohod horizon index")

    p = add("classify", cmd_classify, "small-deviation verdict from the cone geometry")
    p.add_argument("--model", required=True)
    p.add_argument("--p", type=float, required=True)

    p = add("selftest", cmd_selftest, "oracle equivalence and closed-form checks")
    p.add_argument("--cases", type=int, default=300)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    try:
        rep = args.func(args)
    except (UsageError, PathError, ModelError, FileNotFoundError, KeyError, TypeError,
            ValueError) as e:
        print(f"pvarlevy {args.command}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (MarcusError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as e:
        print(f"pvarlevy {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    rep.emit(args.json)
    if args.command == "selftest" and any(r["status"] != "PASS" for r in rep.rows):
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())
