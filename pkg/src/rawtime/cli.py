"""Command-line front end: model runs, simulation, comparison and planning.

Exit codes: 0 success, 1 usage or input error, 2 result carries a deficit
above epsilon (model truncation) or a failed comparison, 3 unsatisfiable
quantile target.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from . import __version__
from .chains import run_chains
from .distribution import (
    TimeDistribution,
    UnsatisfiableQuantileError,
    kolmogorov_distance,
    load_distribution,
)
from .manifest import RunManifest, check_comparable, load_manifest
from .params import (
    AH_CW_MAX,
    AH_CW_MIN,
    AH_RETRY_LIMIT,
    AH_SLOT_DURATIONS,
    ConfigurationError,
    ModelParams,
    SlotDurations,
)
from .planner import (
    MAX_RAW_SLOT_US,
    Conditioning,
    MixtureSpec,
    mixture_pa,
    optimize_groups,
)
from .simulate import SimConfig, simulate

_QUANTILE_LEVELS = (0.5, 0.95, 0.99, 0.999)


def _param_options(f):
    options = [
        click.option("--n", "n_stations", type=int, required=True, help="Number of contending stations."),
        click.option("--cw-min", type=int, default=None, help="Initial contention window."),
        click.option("--cw-max", type=int, default=None, help="Contention window cap."),
        click.option("--retry-limit", type=int, default=None, help="Transmission attempts before giving up."),
        click.option("--epsilon", type=float, default=1e-6, show_default=True,
                      help="Absorbed-mass threshold that stops the chain run."),
        click.option("--t-max-cap", type=int, default=None, help="Safety cap on model time (virtual slots)."),
        click.option("--prune-floor", type=float, default=1e-12, show_default=True,
                      help="Carried states below this mass are dropped into the deficit."),
        click.option("--te-us", type=int, default=None, help="Empty virtual slot duration (us)."),
        click.option("--ts-us", type=int, default=None, help="Successful slot duration (us)."),
        click.option("--tc-us", type=int, default=None, help="Collision slot duration (us)."),
        click.option("--paper-params", is_flag=True,
                      help="Fill unset options with the 802.11ah reference setup "
                           "(CWmin 16, CWmax 1024, RL 7, Te 52 us, Ts = Tc = 2184 us)."),
        click.option("--out", type=click.Path(), required=True, help="Output path prefix."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                      show_default=True, help="Distribution file format."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _resolve(n_stations, cw_min, cw_max, retry_limit, epsilon, t_max_cap, prune_floor,
             te_us, ts_us, tc_us, paper_params) -> tuple[ModelParams, SlotDurations]:
    if paper_params:
        cw_min = AH_CW_MIN if cw_min is None else cw_min
        cw_max = AH_CW_MAX if cw_max is None else cw_max
        retry_limit = AH_RETRY_LIMIT if retry_limit is None else retry_limit
        te_us = AH_SLOT_DURATIONS.t_empty if te_us is None else te_us
        ts_us = AH_SLOT_DURATIONS.t_success if ts_us is None else ts_us
        tc_us = AH_SLOT_DURATIONS.t_collision if tc_us is None else tc_us
    missing = [name for name, value in (
        ("--cw-min", cw_min), ("--cw-max", cw_max), ("--retry-limit", retry_limit),
        ("--te-us", te_us), ("--ts-us", ts_us), ("--tc-us", tc_us),
    ) if value is None]
    if missing:
        raise click.UsageError(
            f"missing {', '.join(missing)} (set them explicitly or pass --paper-params)"
        )
    try:
        params = ModelParams(
            n_stations=n_stations, cw_min=cw_min, cw_max=cw_max, retry_limit=retry_limit,
            epsilon=epsilon, t_max_cap=t_max_cap, prune_floor=prune_floor,
        )
        durations = SlotDurations(t_empty=te_us, t_success=ts_us, t_collision=tc_us)
    except ConfigurationError as exc:
        raise click.UsageError(str(exc)) from exc
    return params, durations


def _write_distribution(dist: TimeDistribution, path: Path, fmt: str, extra: dict | None = None) -> Path:
    if fmt == "csv":
        dist.write_csv(path)
    else:
        payload = dist.to_json_dict()
        payload.update(extra or {})
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def _quantile_rows(named: dict[str, TimeDistribution]) -> list[tuple[str, float, int | None]]:
    rows = []
    for name, dist in named.items():
        for q in _QUANTILE_LEVELS:
            try:
                rows.append((name, q, dist.quantile(q)))
            except UnsatisfiableQuantileError:
                rows.append((name, q, None))
    return rows


def _write_quantiles(rows, path: Path, fmt: str) -> Path:
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("distribution,q,duration_us\n")
            for name, q, dur in rows:
                fh.write(f"{name},{q},{'' if dur is None else dur}\n")
    else:
        payload = [{"distribution": n, "q": q, "duration_us": d} for n, q, d in rows]
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


@click.group()
@click.version_option(version=__version__, prog_name="rawtime")
def cli() -> None:
    """Delivery-time distributions and RAW slot planning for 802.11ah groups."""


@cli.command("model")
@_param_options
def cmd_model(n_stations, cw_min, cw_max, retry_limit, epsilon, t_max_cap, prune_floor,
              te_us, ts_us, tc_us, paper_params, out, fmt) -> int:
    """Compute the delivery-time distributions for one and for all stations."""
    params, durations = _resolve(n_stations, cw_min, cw_max, retry_limit, epsilon,
                                 t_max_cap, prune_floor, te_us, ts_us, tc_us, paper_params)
    started = time.perf_counter()
    result = run_chains(params, durations)
    elapsed = time.perf_counter() - started
    diag = result.diagnostics

    ext = fmt
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pa_path = _write_distribution(
        result.p_a, out.with_name(out.name + f".pa.{ext}"), fmt,
        extra={"p_fail": result.p_fail_a},
    )
    pb_path = _write_distribution(result.p_b, out.with_name(out.name + f".pb.{ext}"), fmt)
    q_path = _write_quantiles(
        _quantile_rows({"pa": result.p_a, "pb": result.p_b}),
        out.with_name(out.name + f".quantiles.{ext}"), fmt,
    )

    outputs = [pa_path, pb_path, q_path]
    extra = {
        "p_fail_a": result.p_fail_a,
        "deficit_a": result.p_a.deficit,
        "deficit_b": result.p_b.deficit,
        "truncated": diag.truncated,
        "t_stop": diag.t_stop,
    }
    for path, artifact in ((pa_path, "pa"), (pb_path, "pb"), (q_path, "quantiles")):
        RunManifest.build("model", artifact, "model", params, durations, outputs,
                          elapsed, extra=extra).write_for(path)

    click.echo(
        f"model: N={params.n_stations} t_stop={diag.t_stop} "
        f"mass_a={result.p_a.total_mass:.9f} p_fail_a={result.p_fail_a:.3e} "
        f"mass_b={result.p_b.total_mass:.9f} -> {out}.{{pa,pb,quantiles}}.{ext}"
    )
    unresolved = diag.unresolved_a + diag.unresolved_b
    if diag.truncated and unresolved > params.epsilon:
        click.echo(
            f"warning: stopped at t_max_cap={params.t_max_cap} with unresolved "
            f"mass {unresolved:.3e} > epsilon", err=True,
        )
        return 2
    return 0


@cli.command("simulate")
@_param_options
@click.option("--runs", type=int, required=True, help="Number of Monte-Carlo runs.")
@click.option("--seed", type=int, required=True, help="RNG seed (64-bit).")
def cmd_simulate(n_stations, cw_min, cw_max, retry_limit, epsilon, t_max_cap, prune_floor,
                 te_us, ts_us, tc_us, paper_params, out, fmt, runs, seed) -> int:
    """Monte-Carlo the slotted backoff protocol and write empirical distributions."""
    params, durations = _resolve(n_stations, cw_min, cw_max, retry_limit, epsilon,
                                 t_max_cap, prune_floor, te_us, ts_us, tc_us, paper_params)
    config = SimConfig(params=params, durations=durations, runs=runs, seed=seed)
    started = time.perf_counter()
    emp_a, emp_b = simulate(config)
    elapsed = time.perf_counter() - started

    ext = fmt
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pa_path = _write_distribution(
        emp_a.to_time_distribution(), out.with_name(out.name + f".pa.{ext}"), fmt,
        extra={"runs": emp_a.runs, "failure_count": emp_a.failure_count},
    )
    pb_path = _write_distribution(
        emp_b.to_time_distribution(), out.with_name(out.name + f".pb.{ext}"), fmt,
        extra={"runs": emp_b.runs, "failure_count": emp_b.failure_count},
    )
    outputs = [pa_path, pb_path]
    for path, artifact, emp in ((pa_path, "pa", emp_a), (pb_path, "pb", emp_b)):
        RunManifest.build(
            "simulate", artifact, "simulation", params, durations, outputs, elapsed,
            seed=seed, runs=runs, extra={"failure_count": emp.failure_count},
        ).write_for(path)
    click.echo(
        f"simulate: N={params.n_stations} runs={runs} seed={seed} "
        f"fail_a={emp_a.failure_count} fail_b={emp_b.failure_count} -> {out}.{{pa,pb}}.{ext}"
    )
    return 0


@cli.command("compare")
@click.argument("model_file", type=click.Path(exists=True))
@click.argument("sim_file", type=click.Path(exists=True))
@click.option("--tolerance", type=float, default=0.03, show_default=True,
              help="Maximum acceptable Kolmogorov distance.")
@click.option("--report", type=click.Path(), default=None,
              help="Optional JSON report path.")
def cmd_compare(model_file, sim_file, tolerance, report) -> int:
    """Compare a model distribution against a simulated one (manifest-checked)."""
    try:
        model_manifest = load_manifest(model_file)
        sim_manifest = load_manifest(sim_file)
    except FileNotFoundError as exc:
        raise click.UsageError(str(exc)) from exc
    if model_manifest.get("source") != "model":
        raise click.UsageError(f"{model_file} is not a model output (source="
                               f"{model_manifest.get('source')!r})")
    if sim_manifest.get("source") != "simulation":
        raise click.UsageError(f"{sim_file} is not a simulation output (source="
                               f"{sim_manifest.get('source')!r})")
    problems = check_comparable(model_manifest, sim_manifest)
    if problems:
        for problem in problems:
            click.echo(f"error: {problem}", err=True)
        raise click.UsageError("manifests do not match; refusing to compare")

    model_dist = load_distribution(model_file)
    sim_dist = load_distribution(sim_file)
    distance = kolmogorov_distance(model_dist, sim_dist)
    atoms_m, atoms_s = model_dist.atoms, sim_dist.atoms
    support = sorted(set(atoms_m) | set(atoms_s))
    diffs = {d: atoms_m.get(d, 0.0) - atoms_s.get(d, 0.0) for d in support}
    max_atom_diff = max((abs(v) for v in diffs.values()), default=0.0)
    passed = distance <= tolerance

    click.echo(f"kolmogorov_distance: {distance:.6f}")
    click.echo(f"max_atom_abs_difference: {max_atom_diff:.6f}")
    click.echo(f"tolerance: {tolerance} -> {'PASS' if passed else 'FAIL'}")
    if report:
        Path(report).write_text(json.dumps({
            "kolmogorov_distance": distance,
            "max_atom_abs_difference": max_atom_diff,
            "tolerance": tolerance,
            "passed": passed,
            "atom_differences": {str(d): v for d, v in diffs.items()},
        }, indent=2) + "\n", encoding="utf-8")
    return 0 if passed else 2


@cli.command("plan")
@_param_options
@click.option("--p", "p_active", type=float, required=True,
              help="Probability a station holds a frame at the slot start.")
@click.option("--q", "quantile", type=float, required=True,
              help="Required delivery probability.")
@click.option("--conditioning", type=click.Choice([c.value for c in Conditioning]),
              default=Conditioning.TAGGED_HAS_PACKET.value, show_default=True,
              help="Mixture conditioning over the random active count.")
@click.option("--k-stride", default="1", show_default=True,
              help="Mixture subsampling stride (integer or 'auto').")
def cmd_plan(n_stations, cw_min, cw_max, retry_limit, epsilon, t_max_cap, prune_floor,
             te_us, ts_us, tc_us, paper_params, out, fmt, p_active, quantile,
             conditioning, k_stride) -> int:
    """Minimal RAW slot duration for a population with a random active count."""
    params, durations = _resolve(n_stations, cw_min, cw_max, retry_limit, epsilon,
                                 t_max_cap, prune_floor, te_us, ts_us, tc_us, paper_params)
    stride = k_stride if k_stride == "auto" else int(k_stride)
    spec = MixtureSpec(n_total=n_stations, p_active=p_active,
                       conditioning=Conditioning(conditioning))
    started = time.perf_counter()
    mixture = mixture_pa(spec, params, durations, k_stride=stride)
    elapsed = time.perf_counter() - started

    ext = fmt
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mix_path = _write_distribution(mixture, out.with_name(out.name + f".mixture.{ext}"), fmt)
    cdf_path = out.with_name(out.name + ".cdf.csv")
    with open(cdf_path, "w", encoding="utf-8") as fh:
        fh.write("duration_us,cumulative_probability\n")
        for d, c in zip(mixture.durations, mixture.cumulative()):
            fh.write(f"{int(d)},{float(c)!r}\n")

    extra = {"p_active": p_active, "q": quantile, "conditioning": conditioning,
             "k_stride": str(stride), "total_mass": mixture.total_mass}
    outputs = [mix_path, cdf_path]
    plan_path = out.with_name(out.name + ".plan.json")

    try:
        slot = mixture.quantile(quantile)
    except UnsatisfiableQuantileError as exc:
        click.echo(
            f"error: q={quantile} unsatisfiable; achievable delivery probability "
            f"is {exc.total_mass:.9f}", err=True,
        )
        for path, artifact in ((mix_path, "pa_mixture"), (cdf_path, "pa_mixture_cdf")):
            RunManifest.build("plan", artifact, "planner", params, durations, outputs,
                              elapsed, extra=extra).write_for(path)
        return 3

    compliant = slot <= MAX_RAW_SLOT_US
    plan_path.write_text(json.dumps({
        "q": quantile,
        "slot_duration_us": slot,
        "standard_compliant": compliant,
        "max_raw_slot_us": MAX_RAW_SLOT_US,
        "total_mass": mixture.total_mass,
        "deficit": mixture.deficit,
    }, indent=2) + "\n", encoding="utf-8")
    outputs.append(plan_path)
    for path, artifact in ((mix_path, "pa_mixture"), (cdf_path, "pa_mixture_cdf"),
                           (plan_path, "plan")):
        RunManifest.build("plan", artifact, "planner", params, durations, outputs,
                          elapsed, extra=extra).write_for(path)
    click.echo(
        f"plan: N={n_stations} p={p_active} q={quantile} -> slot {slot} us "
        f"({slot / 1000:.2f} ms), standard_compliant={compliant}"
    )
    return 0


@cli.command("groups")
@_param_options
@click.option("--p", "p_active", type=float, required=True,
              help="Probability a station holds a frame at the slot start.")
@click.option("--q", "quantile", type=float, required=True,
              help="Required delivery probability.")
@click.option("--g-min", type=int, required=True, help="Smallest group count to try.")
@click.option("--g-max", type=int, required=True, help="Largest group count to try.")
@click.option("--problem", type=click.Choice(["A", "B"]), default="A", show_default=True,
              help="A: one station delivers; B: all active stations deliver.")
@click.option("--conditioning", type=click.Choice([c.value for c in Conditioning]),
              default=Conditioning.TAGGED_HAS_PACKET.value, show_default=True)
@click.option("--k-stride", default="auto", show_default=True,
              help="Mixture subsampling stride (integer or 'auto').")
def cmd_groups(n_stations, cw_min, cw_max, retry_limit, epsilon, t_max_cap, prune_floor,
               te_us, ts_us, tc_us, paper_params, out, fmt, p_active, quantile,
               g_min, g_max, problem, conditioning, k_stride) -> int:
    """Sweep group counts and report the one minimizing total reserved time."""
    params, durations = _resolve(n_stations, cw_min, cw_max, retry_limit, epsilon,
                                 t_max_cap, prune_floor, te_us, ts_us, tc_us, paper_params)
    stride = k_stride if k_stride == "auto" else int(k_stride)
    spec = MixtureSpec(n_total=n_stations, p_active=p_active,
                       conditioning=Conditioning(conditioning))
    started = time.perf_counter()
    try:
        plans, best = optimize_groups(spec, params, durations, quantile,
                                      (g_min, g_max), problem, k_stride=stride)
    except UnsatisfiableQuantileError as exc:
        click.echo(
            f"error: q={quantile} unsatisfiable for every group count; best "
            f"achievable delivery probability is {exc.total_mass:.9f}", err=True,
        )
        return 3
    elapsed = time.perf_counter() - started

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sweep_path = out.with_name(out.name + ".groups.csv")
    infeasible = [plan.group_count for plan in plans if not plan.feasible]
    with open(sweep_path, "w", encoding="utf-8") as fh:
        fh.write("g,group_size,slot_us,total_us,compliant\n")
        for plan in plans:
            if not plan.feasible:
                continue
            fh.write(
                f"{plan.group_count},{max(plan.group_sizes)},{plan.per_group_slot},"
                f"{plan.total_reserved},{str(plan.standard_compliant).lower()}\n"
            )
    best_path = out.with_name(out.name + ".best.json")
    best_path.write_text(json.dumps({
        "g": best.group_count,
        "group_sizes": list(best.group_sizes),
        "per_group_slot_us": best.per_group_slot,
        "total_reserved_us": best.total_reserved,
        "standard_compliant": best.standard_compliant,
        "q": quantile,
        "problem": problem,
        "infeasible_group_counts": infeasible,
    }, indent=2) + "\n", encoding="utf-8")

    extra = {"p_active": p_active, "q": quantile, "problem": problem,
             "g_min": g_min, "g_max": g_max, "k_stride": str(stride),
             "infeasible_group_counts": infeasible}
    for path, artifact in ((sweep_path, "groups"), (best_path, "groups_best")):
        RunManifest.build("groups", artifact, "planner", params, durations,
                          [sweep_path, best_path], elapsed, extra=extra).write_for(path)
    click.echo(
        f"groups: N={n_stations} p={p_active} q={quantile} problem={problem} -> "
        f"best g={best.group_count} total {best.total_reserved} us "
        f"({best.total_reserved / 1000:.2f} ms)"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns the exit code instead of raising SystemExit."""
    try:
        result = cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return max(exc.exit_code, 1)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    if result is None:
        return 0
    return int(result)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
