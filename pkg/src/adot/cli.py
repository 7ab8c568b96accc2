"""Command line front end producing JSON run reports.

Errors exit with status 1 for invalid or infeasible input and 2 for numerical failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from .errors import AdotError

DEFAULT_TOL = 1e-8


class Context:
    def __init__(self, threads: int | None, tol: float):
        self.threads = threads
        self.tol = tol
        self.inputs: dict[str, str] = {}
        self.start = time.perf_counter()

    def read(self, path) -> str:
        data = Path(path).read_bytes()
        self.inputs[str(path)] = hashlib.sha256(data).hexdigest()
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            from .errors import MalformedInput
            raise MalformedInput(f"{path} is not UTF-8: {exc}") from exc

    def report(self, command: str, argv: list[str], **payload) -> dict:
        diag = payload.pop("diagnostics", {})
        diag["wall_time_ms"] = round(1e3 * (time.perf_counter() - self.start), 3)
        return {"command": command, "argv": argv, "inputs": self.inputs, "status": 0,
                "tolerance": self.tol, **payload, "diagnostics": diag}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps(report: dict) -> str:
    # repr-based floats round-trip exactly, so identical runs give identical bytes
    return json.dumps(_jsonable(report), indent=2, sort_keys=False) + "\n"


def _emit(report: dict, out) -> None:
    text = dumps(report)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _load_processes(ctx: Context, files):
    from .process import load_process
    return [load_process(ctx.read(f)) for f in files]


@click.group()
@click.option("--threads", type=int, default=None, help="Cap on parallel one-step solves in the DP.")
@click.option("--tol", type=float, default=DEFAULT_TOL, show_default=True,
              help="Tolerance for derived-quantity checks.")
@click.pass_context
def cli(cctx, threads, tol):
    """Adapted optimal transport on finite scenario trees."""
    cctx.obj = Context(threads, tol)


@cli.command()
@click.option("--mode", type=click.Choice(["causal", "anticausal", "bicausal", "multicausal"]), required=True)
@click.option("--marginals", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cost", "cost_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["auto", "dp", "lp"]), default="auto", show_default=True,
              help="Bicausal problems use backward induction unless 'lp' is chosen.")
@click.option("--dual", is_flag=True, help="Include the structured dual potential.")
@click.option("--coupling", is_flag=True, help="Include the optimal coupling.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def solve(ctx: Context, mode, marginals, cost_file, method, dual, coupling, out):
    """Solve an adapted transport problem in the chosen mode."""
    from .costs import load_cost
    from .coupling import check_coupling
    procs = _load_processes(ctx, marginals)
    cost = load_cost(ctx.read(cost_file))
    payload: dict = {"mode": mode}
    if mode == "bicausal" and method != "lp":
        from .bicausal_dp import dual_from_value, solve_bicausal
        if len(procs) != 2:
            raise click.UsageError("bicausal mode needs exactly two marginals")
        sol = solve_bicausal(procs[0], procs[1], cost, threads=ctx.threads)
        pot = dual_from_value(sol)
        pi, value = sol.coupling, sol.value
        diag = {"method": "dp", "lp_iterations": sol.diagnostics["lp_iterations"],
                "transport_solves": sol.diagnostics["transport_solves"]}
    else:
        from .causal_solver import extract_dual, solve_adapted_lp
        res = solve_adapted_lp(procs, cost, mode)
        pot = extract_dual(res)
        pi, value = res.coupling, res.value
        diag = {"method": "lp", **res.diagnostics()}
    check = check_coupling(pi, mode, ctx.tol)
    diag["duality_gap"] = abs(pot.value - value)
    diag["max_constraint_residual"] = check.worst_violation
    diag["dual_max_excess"] = float((pot.s_tensor() - cost.tensor(procs)).max())
    diag["compensator_mean"] = pot.max_compensator_mean()
    payload["value"] = value
    payload["dual_value"] = pot.value
    payload["coupling_check"] = check.to_dict()
    if dual:
        payload["dual"] = pot.to_document()
    if coupling:
        payload["coupling"] = pi.to_document(list(marginals))
    _emit(ctx.report("solve", sys.argv[1:], diagnostics=diag, **payload), out)


@cli.command()
@click.option("--marginals", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--payoff", "payoff_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--least-squares", is_flag=True, help="Allow non-binomial nodes when the residual is tiny.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def hedge(ctx: Context, marginals, payoff_file, least_squares, out):
    """Superhedging price together with a dominating strategy."""
    from .hedging import extract_strategy, load_payoff, superhedge_price, verify_superhedge
    procs = _load_processes(ctx, marginals)
    pay = load_payoff(ctx.read(payoff_file))
    res = superhedge_price(procs, pay)
    strat = extract_strategy(procs, pay, res.dual, least_squares=least_squares)
    rep = verify_superhedge(strat, pay, res.worst_case_model, tol=max(ctx.tol, 1e-7))
    lp = res.lp.diagnostics()
    diag = {**lp, "duality_gap": abs(strat.p0 - res.price), "min_slack": rep.min_slack,
            "replication_residual": strat.residual}
    _emit(ctx.report("hedge", sys.argv[1:], diagnostics=diag, price=res.price,
                     worst_case_model=res.worst_case_model.to_document(list(marginals)),
                     strategy=strat.to_document(), verification=rep.to_dict()), out)


@cli.command()
@click.option("--marginals", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cost", "cost_files", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False),
              help="One cost file for all marginals, or one per marginal.")
@click.option("--candidates", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def barycenter(ctx: Context, marginals, cost_files, candidates, out):
    """Causal barycenter supported on a candidate path set."""
    from .barycenter import causal_barycenter, load_candidates, verify_barycenter_dual
    from .costs import load_cost
    procs = _load_processes(ctx, marginals)
    costs = [load_cost(ctx.read(f)) for f in cost_files]
    if len(costs) == 1:
        costs = costs * len(procs)
    if len(costs) != len(procs):
        raise click.UsageError("give one cost file or one per marginal")
    A = load_candidates(ctx.read(candidates))
    res = causal_barycenter(procs, costs, A)
    rep = verify_barycenter_dual(res.dual, procs, costs, A, res.value)
    diag = {"lp_iterations": res.lp_iterations, "duality_gap": rep["duality_gap"],
            "congruency": rep["congruency"], "max_constraint_residual": rep["max_excess"]}
    _emit(ctx.report("barycenter", sys.argv[1:], diagnostics=diag, value=res.value, nu=res.nu_table(),
                     dual=res.dual.to_document()), out)


@cli.command()
@click.option("--mode", type=click.Choice(["causal", "bicausal", "multicausal"]), default="multicausal",
              show_default=True)
@click.option("--marginals", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--event", "event_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def polar(ctx: Context, mode, marginals, event_file, out):
    """Largest mass of an event and, when it is polar, a glued certificate."""
    from .causal_solver import polar_certificate, polar_max
    from .errors import MalformedInput
    procs = _load_processes(ctx, marginals)
    try:
        doc = json.loads(ctx.read(event_file))
        tuples = [tuple(t) for t in doc["tuples"]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedInput(f"event file must look like {{\"tuples\": [[leaf ids]]}}: {exc}") from exc
    try:
        value = polar_max(tuples, procs, mode)
    except ValueError as exc:
        raise MalformedInput(str(exc)) from exc
    payload = {"mode": mode, "value": value, "polar": value <= 1e-9}
    if payload["polar"]:
        payload["certificate"] = polar_certificate(tuples, procs, mode).to_document()
    _emit(ctx.report("polar", sys.argv[1:], **payload), out)


@cli.command()
@click.option("--process", "process_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the merged tree here.")
@click.option("--report", "report_file", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def canonicalize(ctx: Context, process_file, out, report_file):
    """Merge indistinguishable sibling nodes; reports the adapted distance to the input."""
    from .bicausal_dp import adapted_wasserstein
    from .process import canonicalize as canon
    P = _load_processes(ctx, [process_file])[0]
    Q = canon(P)
    aw = adapted_wasserstein(P, Q, threads=ctx.threads)
    rep = ctx.report("canonicalize", sys.argv[1:], nodes_before=sum(P.n_nodes(t) for t in range(1, P.horizon + 1)),
                     nodes_after=sum(Q.n_nodes(t) for t in range(1, Q.horizon + 1)), aw_to_original=aw,
                     process=None if out else Q.to_document())
    if out:
        Path(out).write_text(dumps(Q.to_document()), encoding="utf-8")
    _emit(rep, report_file)


@cli.command()
@click.option("--process", "process_files", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--coupling", "coupling_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Also check a coupling of the given processes in every mode.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def validate(ctx: Context, process_files, coupling_file, out):
    """Validate process files (and optionally a coupling of them)."""
    from .coupling import check_coupling, load_coupling
    from .process import is_martingale
    procs = _load_processes(ctx, process_files)
    items = []
    for f, P in zip(process_files, procs):
        m = is_martingale(P)
        items.append({"file": f, "horizon": P.horizon, "dimension": P.dimension, "leaves": P.n_leaves,
                      "martingale": {"ok": m.ok, "worst_violation": m.worst_violation}})
    payload = {"processes": items}
    if coupling_file:
        pi = load_coupling(ctx.read(coupling_file), procs)
        modes = ["plain", "multicausal"] + (["causal", "anticausal", "bicausal"] if len(procs) == 2 else [])
        payload["coupling"] = {m: check_coupling(pi, m, ctx.tol).to_dict() for m in modes}
    _emit(ctx.report("validate", sys.argv[1:], **payload), out)


@cli.command()
@click.option("--count", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def selftest(ctx: Context, count, out):
    """Cross-check the DP against the LP on random instances (seed from ADOT_SEED)."""
    from .bicausal_dp import dual_from_value, solve_bicausal
    from .causal_solver import extract_dual, solve_adapted_lp
    from .costs import CostFunction
    from .instances import random_tree
    seed = int(os.environ.get("ADOT_SEED", "0"))
    rng = np.random.default_rng(seed)
    worst_dpp = worst_gap = 0.0
    for _ in range(count):
        T = int(rng.integers(1, 4))
        d = int(rng.integers(1, 3))
        X, Y = random_tree(rng, T, 3, d, prefix="x"), random_tree(rng, T, 3, d, prefix="y")
        c = CostFunction.lp_sum(int(rng.integers(1, 3)))
        sol = solve_bicausal(X, Y, c, threads=ctx.threads)
        res = solve_adapted_lp([X, Y], c, "bicausal")
        worst_dpp = max(worst_dpp, abs(sol.value - res.value))
        worst_gap = max(worst_gap, abs(dual_from_value(sol).value - sol.value),
                        abs(extract_dual(res).value - res.value))
    ok = worst_dpp <= ctx.tol and worst_gap <= 1e-7
    rep = ctx.report("selftest", sys.argv[1:], seed=seed, instances=count, ok=ok,
                     diagnostics={"max_dp_lp_difference": worst_dpp, "duality_gap": worst_gap})
    _emit(rep, out)
    if not ok:
        sys.exit(2)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="adot", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except AdotError as exc:
        click.echo(json.dumps({"status": exc.exit_code, "error": type(exc).__name__, "message": str(exc)}),
                   err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(json.dumps({"status": 1, "error": "OSError", "message": str(exc)}), err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
