"""Command-line entry point: ``mfstackelberg <command> [options]``.

Exit codes: 0 success, 2 bad arguments or input, 3 condition failure
under ``--strict``, 4 finite escape of a Riccati solution.
"""

from __future__ import annotations

import csv
import datetime
import functools
import hashlib
import io
import json
import sys
from pathlib import Path as FsPath

import click
import numpy as np

from . import __version__
from .assembly import assemble
from .compare import (NoCrossingError, ModelNotAffineError, compare_games, delta0_sweep, loglog_regression,
                      threshold_bisect, threshold_L)
from .conditions import check_all
from .cost import cost_to_go_curve, solve_follower, solve_game
from .fixtures import BUILTIN, PERTURBATION_PATTERN, load_pattern
from .matrixops import BlowUpError, InvalidInputError
from .mcsim import NotEstimableError, SimConfig, convergence_study, simulate_mean_field
from .model import GameKind, ModelParams, base_scale_factor, load_model, reduce_to_unit_k, save_model
from .odesolve import DEFAULT_STEPS, NotRepresentableError, default_grid, path_to_csv

EXIT_BAD_INPUT, EXIT_CONDITION, EXIT_ESCAPE = 2, 3, 4


class ConditionFailure(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_csv(header, rows, out_dir, name) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _emit(buf.getvalue(), out_dir, name)


def _emit(text: str, out_dir, name: str) -> None:
    if out_dir is None:
        click.echo(text, nl=False)
    else:
        FsPath(out_dir, name).write_text(text, encoding="utf-8")


def _manifest(ctx_name: str, model_path, steps, seed, out_dir, extra=None) -> None:
    if out_dir is None:
        return
    digest = None
    if model_path is not None:
        digest = hashlib.sha256(FsPath(model_path).read_bytes()).hexdigest()
    data = {"command": ctx_name, "model_sha256": digest, "grid_steps": steps, "seed": seed,
            "version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")}
    if extra:
        data.update(extra)
    FsPath(out_dir, "manifest.json").write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _games(choice: str) -> list[GameKind]:
    return [GameKind.NASH, GameKind.PARETO] if choice == "both" else [GameKind.parse(choice)]


def _conditions(p: ModelParams, games) -> list:
    systems = {g: assemble(p, g) for g in games}
    base = base_scale_factor(p) is not None and p.is_scalar
    rows = check_all(p, systems, base)
    if base and abs(base_scale_factor(p) - 1.0) > 1e-12:
        # the unit-scale equivalent is a change of variables with its own margins
        u = reduce_to_unit_k(p)
        extra = check_all(u, {g: assemble(u, g) for g in games}, False)[1:]
        rows += [type(r)(r.name + "_unit_scale", r.holds, r.margin, r.details, r.verifiable) for r in extra]
    return rows


def _enforce(p, games, strict: bool) -> None:
    if not strict:
        return
    failed = [r.name for r in _conditions(p, games) if not r.holds]
    if failed:
        raise ConditionFailure("conditions not verified: " + ", ".join(failed))


def common(func):
    """Options shared by the model-driven commands."""

    @click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False),
                  help="Model JSON file.")
    @click.option("--grid-steps", default=DEFAULT_STEPS, show_default=True, type=click.IntRange(min=2),
                  help="Steps of the time grid.")
    @click.option("--game", default="both", show_default=True,
                  type=click.Choice(["nash", "pareto", "both"]))
    @click.option("--seed", default=0, show_default=True, type=click.IntRange(0, 2**64 - 1))
    @click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
                  help="Output directory (stdout when omitted).")
    @click.option("--strict", is_flag=True, help="Fail with exit code 3 when a condition does not hold.")
    @functools.wraps(func)
    def wrapper(model_path, grid_steps, game, seed, out_dir, strict, **kw):
        p = load_model(model_path)
        if out_dir is not None:
            FsPath(out_dir).mkdir(parents=True, exist_ok=True)
        ctx = dict(p=p, grid=default_grid(p.T, grid_steps), games=_games(game), seed=seed,
                   out_dir=out_dir, strict=strict)
        func(ctx, **kw)
        _manifest(click.get_current_context().info_name, model_path, grid_steps, seed, out_dir)

    return wrapper


@click.group()
@click.version_option(__version__)
def cli():
    """Linear-quadratic mean-field games with two leaders playing Nash or Pareto."""


@cli.command()
@common
def check(ctx):
    """Table of the well-posedness and comparison conditions."""
    rows = _conditions(ctx["p"], ctx["games"])
    header = ["condition", "holds", "margin", "verifiable"]
    _write_csv(header, [(r.name, r.holds, r.margin, r.verifiable) for r in rows], ctx["out_dir"],
               "conditions.csv")
    if ctx["strict"] and not all(r.holds for r in rows):
        raise ConditionFailure("conditions not verified")


@cli.command()
@common
def solve(ctx):
    """Riccati solution of each game on the grid (one CSV per game)."""
    p = ctx["p"]
    _enforce(p, ctx["games"], ctx["strict"])
    follower = solve_follower(p, ctx["grid"])
    for g in ctx["games"]:
        sol = solve_game(p, g, ctx["grid"], follower=follower)
        buf = io.StringIO()
        path_to_csv(sol.paths.Gamma, buf, "Gamma")
        _emit(buf.getvalue(), ctx["out_dir"], f"gamma_{g.value}.csv")


@cli.command()
@common
def cost(ctx):
    """Follower's optimal cost and its components."""
    p = ctx["p"]
    _enforce(p, ctx["games"], ctx["strict"])
    follower = solve_follower(p, ctx["grid"])
    rows = []
    for g in ctx["games"]:
        r = solve_game(p, g, ctx["grid"], follower=follower).report()
        rows.append((g.value, r.J1, r.quadratic_term, r.trace_term, r.linear_term, r.l0, r.c))
    _write_csv(["game", "J1", "quadratic_term", "trace_term", "linear_term", "l0", "c"], rows,
               ctx["out_dir"], "cost.csv")


@cli.command("cost-to-go")
@common
def cost_to_go_cmd(ctx):
    """Expected remaining cost at every grid node for both games."""
    p = ctx["p"]
    _enforce(p, [GameKind.NASH, GameKind.PARETO], ctx["strict"])
    follower = solve_follower(p, ctx["grid"])
    curves = {g: cost_to_go_curve(solve_game(p, g, ctx["grid"], follower=follower))
              for g in (GameKind.NASH, GameKind.PARETO)}
    JN, JP = curves[GameKind.NASH], curves[GameKind.PARETO]
    rows = zip(ctx["grid"].nodes, JN, JP, JN - JP)
    _write_csv(["t", "J_N", "J_P", "diff"], rows, ctx["out_dir"], "cost_to_go.csv")


@cli.command()
@common
def compare(ctx):
    """Cost under both games, their difference and the regime."""
    p = ctx["p"]
    _enforce(p, [GameKind.NASH, GameKind.PARETO], ctx["strict"])
    r = compare_games(p, ctx["grid"])
    a, b = r.affine if r.affine else (None, None)
    _write_csv(["J_N", "J_P", "diff", "a", "b", "eta1_star", "L", "regime"],
               [(r.J_N, r.J_P, r.diff, _opt(a), _opt(b), _opt(r.eta1_star), _opt(r.threshold_L),
                 r.regime or "")], ctx["out_dir"], "compare.csv")


def _opt(v):
    return "" if v is None else v


@cli.command()
@common
@click.option("--bisect", is_flag=True, help="Also locate the crossing by root bracketing.")
def threshold(ctx, bisect):
    """Crossing value of E[eta_1] where both games cost the follower the same."""
    p = ctx["p"]
    _enforce(p, [GameKind.NASH, GameKind.PARETO], ctx["strict"])
    th = threshold_L(p, ctx["grid"])
    header = ["eta1_star", "leader_sum", "product", "L", "regime", "a", "b"]
    row = [th.eta1_star, th.leader_sum, th.product, th.L, th.regime, th.a, th.b]
    if bisect:
        header.append("eta1_star_bisect")
        row.append(threshold_bisect(p, grid=ctx["grid"]))
    _write_csv(header, [row], ctx["out_dir"], "threshold.csv")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"not a comma-separated list of numbers: {text!r}") from exc


@cli.command()
@common
@click.option("--pattern", "pattern_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON object slot -> direction (the built-in pattern when omitted).")
@click.option("--eta1", "eta1_text", default=None,
              help="Comma-separated E[eta_1] values (default: evenly spaced above the crossing up to 2).")
@click.option("--points", default=15, show_default=True, type=click.IntRange(min=2))
@click.option("--delta-max", default=1.0, show_default=True, type=click.FloatRange(min=0, min_open=True))
@click.option("--tol", default=1e-4, show_default=True, type=click.FloatRange(min=0, min_open=True))
def sweep(ctx, pattern_path, eta1_text, points, delta_max, tol):
    """Smallest perturbation flipping the sign of the cost difference, per E[eta_1]."""
    p = ctx["p"]
    pattern = load_pattern(pattern_path) if pattern_path else dict(PERTURBATION_PATTERN)
    if eta1_text is None:
        lo = threshold_L(p, ctx["grid"]).eta1_star
        eta1 = np.linspace(lo, 2.0, points + 1)[1:]
    else:
        eta1 = _float_list(eta1_text)
    rows = delta0_sweep(p, pattern, eta1, delta_max=delta_max, tol=tol, grid=ctx["grid"])
    _write_csv(["eta1", "deltaJ0", "delta0", "censored"],
               [(r.eta1, r.deltaJ0, r.delta0, r.censored) for r in rows], ctx["out_dir"], "sweep.csv")
    try:
        fit = loglog_regression(rows)
        click.echo(f"log-log fit: slope={fit['slope']:.6g} intercept={fit['intercept']:.6g} "
                   f"r2={fit['r2']:.6g}", err=True)
    except InvalidInputError:
        pass


@cli.command()
@common
@click.option("--paths", default=10_000, show_default=True, type=click.IntRange(min=1))
@click.option("--steps", default=8000, show_default=True, type=click.IntRange(min=1))
@click.option("--antithetic", is_flag=True)
@click.option("--dump-paths", is_flag=True, help="Also write per-path costs.")
def simulate(ctx, paths, steps, antithetic, dump_paths):
    """Monte Carlo estimate of the follower's cost next to the analytic value."""
    p = ctx["p"]
    _enforce(p, ctx["games"], ctx["strict"])
    cfg = SimConfig(paths=paths, steps=steps, seed=ctx["seed"], antithetic=antithetic,
                    keep_samples=dump_paths)
    follower = solve_follower(p, ctx["grid"])
    rows, dumps = [], {}
    for g in ctx["games"]:
        sol = solve_game(p, g, ctx["grid"], follower=follower)
        r = simulate_mean_field(p, g, cfg, solution=sol)
        rows.append((g.value, r.mean, r.stderr, r.paths, sol.report().J1))
        if dump_paths:
            dumps[g.value] = r.samples
    _write_csv(["game", "mean", "stderr", "paths", "analytic"], rows, ctx["out_dir"], "simulate.csv")
    for g, s in dumps.items():
        _write_csv(["path", "J1"], enumerate(s), ctx["out_dir"], f"paths_{g}.csv")


@cli.command()
@common
@click.option("--N", "n_text", default="25,50,100,200,400", show_default=True)
@click.option("--paths", default=2000, show_default=True, type=click.IntRange(min=2))
@click.option("--steps", default=200, show_default=True, type=click.IntRange(min=1))
def convergence(ctx, n_text, paths, steps):
    """Deviation of the N-player game from the mean-field limit across population sizes."""
    p = ctx["p"]
    Ns = [int(x) for x in _float_list(n_text)]
    cfg = SimConfig(paths=paths, steps=steps, seed=ctx["seed"])
    for g in ctx["games"]:
        res = convergence_study(p, g, Ns, cfg, ctx["grid"])
        rows = [(r.N, r.sup_dev_sq.mean, r.sup_dev_sq.stderr, r.eps_nash_gap.mean, r.eps_nash_gap.stderr)
                for r in res.reports]
        _write_csv(["N", "mean", "stderr", "eps_nash_gap", "eps_nash_gap_stderr"], rows, ctx["out_dir"],
                   f"convergence_{g.value}.csv")
        click.echo(f"{g.value}: slope={res.slope:.6g} intercept={res.intercept:.6g} r2={res.r2:.6g}",
                   err=True)


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def fixtures(out_dir):
    """Write the built-in example models and the perturbation pattern as JSON."""
    FsPath(out_dir).mkdir(parents=True, exist_ok=True)
    for name, make in BUILTIN.items():
        save_model(make(), FsPath(out_dir, f"{name}.json"))
    FsPath(out_dir, "perturbation_pattern.json").write_text(
        json.dumps(PERTURBATION_PATTERN, indent=2) + "\n", encoding="utf-8")
    _manifest("fixtures", None, None, None, out_dir)


def run(argv=None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        cli.main(args=argv, prog_name="mfstackelberg", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return EXIT_BAD_INPUT
    except click.exceptions.Abort:
        return 1
    except (InvalidInputError, ModelNotAffineError, NoCrossingError, NotEstimableError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_BAD_INPUT
    except ConditionFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONDITION
    except (BlowUpError, NotRepresentableError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ESCAPE
    return 0


def main() -> None:
    sys.exit(run())
