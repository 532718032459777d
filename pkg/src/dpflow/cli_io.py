"""Command-line front end: configuration, dispatch, and result serialization.

Exit codes: 0 on success, 1 on domain or usage errors, 2 when a solve does
not produce a dispatch.  Results are machine-readable JSON (or CSV for
tabular reports) written to ``--out`` or stdout, with floats carried at 12
significant digits; the same argv, case file, and seed always reproduce
byte-identical output.

Option values resolve as flags > ``--config`` JSON file > built-in
defaults.  No environment variable is consulted except DPFLOW_SOLVER_TOL,
which the conic solver reads for CI tuning.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import click
import numpy as np

from .ccopf import DEFAULT_ETAS, VARIANTS, solve_ccopf
from .dopf import SolveError, solve_dopf
from .grid_model import (
    GridError,
    RadialGrid,
    build_topology,
    bundled_case_path,
    load_case_file,
)
from .mechanism import MechanismError, run_dp_ccopf, run_output_perturbation
from .privacy_calibration import PrivacyError, calibrate_sigma
from .validation import (
    OracleError,
    cvar_sweep,
    dp_ratio_check,
    mc_validate,
    sensitivity_oracle,
    std_floor_check,
    timeseries_demo,
)

__all__ = ["RunConfig", "dispatch", "emit_results", "main"]

UNIT_CHOICES = ("mw", "pu")

#: defaults shared by every subcommand; flags and config files override them
DEFAULTS = MappingProxyType({
    "sides": 12,
    "seed": 0,
    "units": "mw",
    "format": "json",
    "variant": "base",
    "psi": 0.0,
    "theta": 0.0,
    "varrho": 0.1,
    "samples": 5000,
    "bins": 20,
    "max_resamples": 0,
    "thetas": "0.0",
    "steps": 24,
})


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved invocation: case, privacy request, and subflags."""

    command: str
    case: str | None = None
    epsilon: float | None = None
    delta: float | None = None
    beta_frac: float | None = None
    beta_file: str | None = None
    etas: dict | None = None
    sides: int = 12
    seed: int = 0
    out: str | None = None
    units: str = "mw"
    extra: Mapping[str, object] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.extra[key]


def _read_config_file(path: str) -> dict:
    if not Path(path).is_file():
        raise click.UsageError(f"config file not found: {path}")
    try:
        loaded = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config file {path}: invalid JSON ({exc})")
    if not isinstance(loaded, dict):
        raise click.UsageError(f"config file {path}: expected a JSON object")
    return loaded


def _resolve(command: str, params: dict) -> RunConfig:
    """Merge flag values over config-file values over defaults."""
    config_path = params.pop("config", None)
    merged = dict(DEFAULTS)
    if config_path is not None:
        for key, value in _read_config_file(config_path).items():
            slot = key.replace("-", "_")
            if slot not in params and slot not in merged:
                raise click.UsageError(
                    f"config file {config_path}: unknown option {key!r}")
            merged[slot] = value
    merged.update({k: v for k, v in params.items() if v is not None})

    etas = None
    if any(merged.get(f"eta_{k}") is not None for k in "guf"):
        etas = {k: float(merged.get(f"eta_{k}") or DEFAULT_ETAS[k])
                for k in "guf"}
    named = {"case", "epsilon", "delta", "beta_frac", "beta_file",
             "sides", "seed", "out", "units", "eta_g", "eta_u", "eta_f"}
    extra = {k: v for k, v in merged.items() if k not in named}
    return RunConfig(
        command=command,
        case=merged.get("case"),
        epsilon=None if merged.get("epsilon") is None else float(merged["epsilon"]),
        delta=None if merged.get("delta") is None else float(merged["delta"]),
        beta_frac=None if merged.get("beta_frac") is None else float(merged["beta_frac"]),
        beta_file=merged.get("beta_file"),
        etas=etas,
        sides=int(merged.get("sides")),
        seed=int(merged.get("seed")),
        out=merged.get("out"),
        units=str(merged.get("units")),
        extra=MappingProxyType(extra),
    )


def _load_grid(cfg: RunConfig):
    if cfg.case is None:
        raise click.UsageError("--case is required")
    path = Path(cfg.case)
    if not path.is_file():
        try:
            path = Path(bundled_case_path(cfg.case))
        except GridError:
            raise GridError(f"case file not found: {cfg.case}")
    grid = load_case_file(path)
    return grid, build_topology(grid)


def _beta_vector(cfg: RunConfig, grid: RadialGrid) -> np.ndarray:
    """Per-line adjacency radii in MW from --beta-frac or --beta-file."""
    if (cfg.beta_frac is None) == (cfg.beta_file is None):
        raise click.UsageError(
            "provide exactly one of --beta-frac / --beta-file")
    if cfg.beta_frac is not None:
        if cfg.beta_frac < 0:
            raise PrivacyError(f"beta fraction must be non-negative, "
                               f"got {cfg.beta_frac}")
        return cfg.beta_frac * grid.d_p[1:] * grid.base_mva
    if not Path(cfg.beta_file).is_file():
        raise GridError(f"beta file not found: {cfg.beta_file}")
    beta = np.asarray(json.loads(Path(cfg.beta_file).read_text()), dtype=float)
    if beta.shape != (grid.line_count,):
        raise GridError(f"beta file {cfg.beta_file}: expected "
                        f"{grid.line_count} entries, got {beta.shape}")
    return beta


def _need(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n, None) is None
               and cfg.extra.get(n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise click.UsageError(f"missing required option(s): {flags}")


def _round12(obj):
    """Recursively coerce floats to 12 significant digits for stable output."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, np.ndarray):
        return [_round12(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_text(rows) -> str:
    if not isinstance(rows, list) or not rows or not isinstance(rows[0], dict):
        raise click.UsageError("csv format is only available for row reports")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = list(rows[0])
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.12g}" if isinstance(v, float) else v
                         for v in (row[h] for h in header)])
    return buffer.getvalue()


def emit_results(payload, format: str = "json", path: str = None) -> None:
    """Serialize a result payload as JSON or CSV to a file or stdout."""
    if format == "json":
        text = json.dumps(_round12(payload), indent=2) + "\n"
    elif format == "csv":
        text = _csv_text(_round12(payload))
    else:
        raise click.UsageError(f"unknown output format: {format}")
    if path is not None:
        Path(path).write_text(text)
    else:
        click.echo(text, nl=False)


def _dispatch_payload(grid: RadialGrid, g_p, g_q, f_p, f_q, u, units: str):
    """Power quantities in the requested units; voltages always per-unit."""
    scale = grid.base_mva if units == "mw" else 1.0
    return {
        "g_p": np.asarray(g_p) * scale,
        "g_q": np.asarray(g_q) * scale,
        "f_p": np.asarray(f_p) * scale,
        "f_q": np.asarray(f_q) * scale,
        "u": np.asarray(u),
        "v": np.sqrt(np.asarray(u)),
    }


def _power_scale(grid: RadialGrid, units: str) -> float:
    """Factor applied to MW-denominated report quantities."""
    return 1.0 if units == "mw" else 1.0 / grid.base_mva


# --- command group -----------------------------------------------------------

_COMMON = [
    click.option("--case", help="Case file path or bundled name "
                                "(feeder15, feeder10, chain3)."),
    click.option("--config", type=str,
                 help="JSON file of option defaults (flags win)."),
    click.option("--out", type=str, help="Write the result here instead of "
                                         "stdout."),
    click.option("--sides", type=int, help="Polygon sides approximating each "
                                           "second-order cone (default 12)."),
    click.option("--units", type=click.Choice(UNIT_CHOICES),
                 help="Power units in output: mw (default) or pu."),
]

_PRIVACY = [
    click.option("--epsilon", type=float, help="Privacy loss bound, in (0, 1]."),
    click.option("--delta", type=float, help="Residual privacy failure "
                                             "probability, in (0, 1)."),
    click.option("--beta-frac", type=float,
                 help="Adjacency radius per line as a fraction of the "
                      "downstream node's load."),
    click.option("--beta-file", type=str,
                 help="JSON array of per-line adjacency radii in MW."),
]

_ETAS = [
    click.option("--eta-g", type=float, help="Generator-limit violation "
                                             "budget (default 0.01)."),
    click.option("--eta-u", type=float, help="Voltage-limit violation "
                                             "budget (default 0.02)."),
    click.option("--eta-f", type=float, help="Flow-limit violation budget "
                                             "(default 0.10)."),
]


def _apply(options):
    def wrap(f):
        for option in reversed(options):
            f = option(f)
        return f
    return wrap


@click.group(name="dpflow")
def cli():
    """Differentially private dispatch for radial distribution feeders."""


@cli.command("solve-dopf")
@_apply(_COMMON)
def cmd_solve_dopf(**params):
    """Solve the deterministic optimal dispatch."""
    cfg = _resolve("solve-dopf", params)
    grid, topo = _load_grid(cfg)
    sol = solve_dopf(grid, topo, cfg.sides)
    payload = {
        "command": "solve-dopf",
        "case": cfg.case,
        "units": cfg.units,
        "objective": sol.objective,
        "dispatch": _dispatch_payload(grid, sol.g_p, sol.g_q, sol.f_p,
                                      sol.f_q, sol.u, cfg.units),
    }
    emit_results(payload, "json", cfg.out)


@cli.command("solve-ccopf")
@_apply(_COMMON)
@_apply(_PRIVACY)
@_apply(_ETAS)
@click.option("--variant", type=click.Choice(VARIANTS),
              help="Objective variant (default base).")
@click.option("--psi", type=float,
              help="Variability penalty weight for tov/tav.")
@click.option("--sigma-hat-file", type=str,
              help="JSON array of per-line target stds in MW (tov/tav).")
@click.option("--theta", type=float,
              help="Risk-aversion weight for cvar/meanstd.")
@click.option("--varrho", type=float,
              help="Tail fraction for the cvar variant (default 0.1).")
def cmd_solve_ccopf(**params):
    """Solve the noise-aware dispatch with affine recourse."""
    cfg = _resolve("solve-ccopf", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    spec = calibrate_sigma(cfg.epsilon, cfg.delta, _beta_vector(cfg, grid))
    sigma_hat = None
    if cfg.extra.get("sigma_hat_file") is not None:
        hat_path = Path(cfg["sigma_hat_file"])
        if not hat_path.is_file():
            raise GridError(f"sigma-hat file not found: {hat_path}")
        sigma_hat = np.asarray(json.loads(hat_path.read_text()), dtype=float)
    affine = solve_ccopf(grid, topo, spec, cfg.etas, cfg.sides,
                         variant=cfg["variant"], psi=float(cfg["psi"]),
                         sigma_hat=sigma_hat, theta=float(cfg["theta"]),
                         varrho=float(cfg["varrho"]))
    scale = _power_scale(grid, cfg.units)
    nom = affine.nominal
    payload = {
        "command": "solve-ccopf",
        "case": cfg.case,
        "units": cfg.units,
        "variant": cfg["variant"],
        "epsilon": spec.epsilon,
        "delta": spec.delta,
        "objective": nom.objective,
        "sigma": affine.sigma * scale,
        "flow_std": affine.flow_std * scale,
        "gen_std": affine.gen_std * scale,
        "volt_std": affine.volt_std,
        "dispatch": _dispatch_payload(grid, nom.g_p, nom.g_q, nom.f_p,
                                      nom.f_q, nom.u, cfg.units),
    }
    if affine.target_met is not None:
        payload["target_sigma"] = affine.target_sigma * scale
        payload["target_met"] = affine.target_met
    emit_results(payload, "json", cfg.out)


@cli.group("mechanism")
def cmd_mechanism():
    """Run one randomized release of the dispatch."""


def _realized_payload(command, cfg, grid, realized, ledger):
    scale = 1.0 if cfg.units == "mw" else 1.0 / grid.base_mva
    return {
        "command": command,
        "case": cfg.case,
        "units": cfg.units,
        "seed": realized.seed,
        "xi": realized.xi * scale,
        "dispatch": {
            "g_p": realized.g_p * scale,
            "g_q": realized.g_q * scale,
            "f_p": realized.f_p * scale,
            "f_q": realized.f_q * scale,
            "u": realized.u,
            "v": np.sqrt(realized.u),
        },
        "feasible": dict(realized.feasible),
        "ledger": {"epsilon_per_draw": ledger.epsilon_per_draw,
                   "delta_per_draw": ledger.delta_per_draw,
                   "draws": ledger.draws,
                   "epsilon_spent": ledger.epsilon_spent},
    }


@cmd_mechanism.command("run")
@_apply(_COMMON)
@_apply(_PRIVACY)
@_apply(_ETAS)
@click.option("--seed", type=int, help="Release seed (default 0).")
@click.option("--max-resamples", type=int,
              help="Extra draws allowed after an unlucky one (default 0; "
                   "each spends the full privacy budget).")
def cmd_mechanism_run(**params):
    """Release a noise-following dispatch (policy mechanism)."""
    cfg = _resolve("mechanism run", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    beta = _beta_vector(cfg, grid)
    realized, ledger = run_dp_ccopf(grid, topo, cfg.epsilon, cfg.delta, beta,
                                    cfg.etas, cfg.sides, cfg.seed,
                                    int(cfg["max_resamples"]))
    emit_results(_realized_payload("mechanism run", cfg, grid, realized,
                                   ledger), "json", cfg.out)


@cmd_mechanism.command("op-baseline")
@_apply(_COMMON)
@_apply(_PRIVACY)
@click.option("--seed", type=int, help="Release seed (default 0).")
def cmd_mechanism_op(**params):
    """Release perturbed optimal flows and re-dispatch around them."""
    cfg = _resolve("mechanism op-baseline", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    beta = _beta_vector(cfg, grid)
    realized, ledger = run_output_perturbation(grid, topo, cfg.epsilon,
                                               cfg.delta, beta, cfg.sides,
                                               cfg.seed)
    emit_results(_realized_payload("mechanism op-baseline", cfg, grid,
                                   realized, ledger), "json", cfg.out)


@cli.command("calibrate")
@_apply(_COMMON)
@_apply(_PRIVACY)
def cmd_calibrate(**params):
    """Report the per-line noise stds for a privacy requirement."""
    cfg = _resolve("calibrate", params)
    _need(cfg, "epsilon", "delta")
    grid, _ = _load_grid(cfg)
    spec = calibrate_sigma(cfg.epsilon, cfg.delta, _beta_vector(cfg, grid))
    scale = _power_scale(grid, cfg.units)
    payload = {
        "command": "calibrate",
        "case": cfg.case,
        "units": cfg.units,
        "epsilon": spec.epsilon,
        "delta": spec.delta,
        "beta": spec.beta * scale,
        "sigma": spec.sigma * scale,
    }
    emit_results(payload, "json", cfg.out)


@cli.group("validate")
def cmd_validate():
    """Independent oracles for the dispatch policies."""


@cmd_validate.command("mc")
@_apply(_COMMON)
@_apply(_PRIVACY)
@_apply(_ETAS)
@click.option("--samples", type=int, help="Perturbation draws (default 5000).")
@click.option("--bins", type=int, help="Cost histogram bins (default 20).")
@click.option("--varrho", type=float, help="Cost tail fraction (default 0.1).")
@click.option("--seed", type=int, help="Sampling seed (default 0).")
@click.option("--format", type=click.Choice(("json", "csv")),
              help="csv emits the cost histogram rows.")
def cmd_validate_mc(**params):
    """Sample the noise-aware policy against the raw limits."""
    cfg = _resolve("validate mc", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    spec = calibrate_sigma(cfg.epsilon, cfg.delta, _beta_vector(cfg, grid))
    affine = solve_ccopf(grid, topo, spec, cfg.etas, cfg.sides)
    report = mc_validate(affine, grid, topo, int(cfg["samples"]), cfg.seed,
                         varrho=float(cfg["varrho"]), bins=int(cfg["bins"]))
    edges = report.histogram.edges
    if cfg["format"] == "csv":
        rows = [{"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]),
                 "freq": float(report.histogram.freq[i])}
                for i in range(len(report.histogram.freq))]
        emit_results(rows, "csv", cfg.out)
        return
    payload = {
        "command": "validate mc",
        "case": cfg.case,
        "samples": report.samples,
        "joint_violation": report.joint_violation,
        "per_constraint_violation": report.per_constraint_violation,
        "flow_std_mc": report.flow_std_mc,
        "flow_std_analytic": affine.flow_std,
        "cost_mean": report.cost_mean,
        "cost_std": report.cost_std,
        "cost_cvar": report.cost_cvar,
        "histogram": {"edges": edges, "freq": report.histogram.freq},
    }
    emit_results(payload, "json", cfg.out)


@cmd_validate.command("sensitivity")
@_apply(_COMMON)
@_apply(_PRIVACY)
@click.option("--node", type=int,
              help="Restrict the table to one node (default: all).")
@click.option("--resolution", type=float,
              help="Sweep load shifts at this MW spacing instead of only "
                   "the endpoints.")
@click.option("--format", type=click.Choice(("json", "csv")),
              help="Output format for the per-node table.")
def cmd_validate_sensitivity(**params):
    """Re-solve neighbouring datasets and bound the optimal-flow change."""
    cfg = _resolve("validate sensitivity", params)
    grid, topo = _load_grid(cfg)
    beta = _beta_vector(cfg, grid)
    nodes = ([int(cfg["node"])] if cfg.extra.get("node") is not None
             else list(range(1, grid.node_count)))
    resolution = (None if cfg.extra.get("resolution") is None
                  else float(cfg["resolution"]))
    rows = []
    for node in nodes:
        beta_i = float(beta[node - 1])
        worst = sensitivity_oracle(grid, topo, node, beta_i, resolution,
                                   cfg.sides)
        rows.append({"node": node, "beta_mw": beta_i,
                     "sensitivity_mw": worst,
                     "within_beta": bool(worst <= beta_i + 1e-6)})
    if cfg["format"] == "csv":
        emit_results(rows, "csv", cfg.out)
        return
    payload = {
        "command": "validate sensitivity",
        "case": cfg.case,
        "rows": rows,
        "all_within_beta": all(r["within_beta"] for r in rows),
    }
    emit_results(payload, "json", cfg.out)


@cmd_validate.command("stdfloor")
@_apply(_COMMON)
@_apply(_PRIVACY)
@_apply(_ETAS)
def cmd_validate_stdfloor(**params):
    """Check every released flow's std against its injected noise."""
    cfg = _resolve("validate stdfloor", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    spec = calibrate_sigma(cfg.epsilon, cfg.delta, _beta_vector(cfg, grid))
    affine = solve_ccopf(grid, topo, spec, cfg.etas, cfg.sides)
    flags = std_floor_check(affine)
    payload = {
        "command": "validate stdfloor",
        "case": cfg.case,
        "rows": [{"line": line, "sigma_mw": float(affine.sigma[line - 1]),
                  "flow_std_mw": float(affine.flow_std[line - 1]),
                  "ok": bool(flags[line - 1])}
                 for line in grid.lines],
        "all_ok": bool(flags.all()),
    }
    emit_results(payload, "json", cfg.out)


@cmd_validate.command("dpratio")
@_apply(_COMMON)
@_apply(_PRIVACY)
@_apply(_ETAS)
@click.option("--node", type=int, required=True,
              help="Node whose load defines the neighbouring datasets.")
@click.option("--beta-mw", type=float, required=True,
              help="Adjacency radius of that node's load in MW.")
@click.option("--samples", type=int, help="Draws per dataset (default 5000).")
@click.option("--bins", type=int, help="Histogram bins (default 20).")
@click.option("--seed", type=int, help="Sampling seed (default 0).")
def cmd_validate_dpratio(**params):
    """Histogram falsification test of the privacy bound."""
    cfg = _resolve("validate dpratio", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    spec = calibrate_sigma(cfg.epsilon, cfg.delta, _beta_vector(cfg, grid))
    report = dp_ratio_check(grid, topo, int(cfg["node"]),
                            float(cfg["beta_mw"]), spec, cfg.etas, cfg.sides,
                            int(cfg["samples"]), int(cfg["bins"]), cfg.seed)
    payload = {
        "command": "validate dpratio",
        "case": cfg.case,
        "node": int(cfg["node"]),
        "beta_mw": float(cfg["beta_mw"]),
        "samples": report.samples,
        "epsilon": report.epsilon,
        "delta": report.delta,
        "satisfied": report.satisfied,
        "max_ratio": report.max_ratio,
        "tv_minus": report.tv_minus,
        "tv_plus": report.tv_plus,
        "edges": report.edges,
        "freq_base": report.freq_base,
        "freq_minus": report.freq_minus,
        "freq_plus": report.freq_plus,
    }
    emit_results(payload, "json", cfg.out)


@cmd_validate.command("cvar-sweep")
@_apply(_COMMON)
@_apply(_PRIVACY)
@_apply(_ETAS)
@click.option("--thetas", type=str,
              help="Comma-separated risk weights (default \"0.0\").")
@click.option("--varrho", type=float, help="Cost tail fraction (default 0.1).")
@click.option("--samples", type=int, help="Common evaluation draws "
                                          "(default 5000).")
@click.option("--seed", type=int, help="Sampling seed (default 0).")
@click.option("--format", type=click.Choice(("json", "csv")),
              help="Output format for the sweep rows.")
def cmd_validate_cvar_sweep(**params):
    """Expected-vs-tail cost trade-off across risk weights."""
    cfg = _resolve("validate cvar-sweep", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    spec = calibrate_sigma(cfg.epsilon, cfg.delta, _beta_vector(cfg, grid))
    try:
        thetas = [float(v) for v in str(cfg["thetas"]).split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"--thetas: expected comma-separated numbers, "
                               f"got {cfg['thetas']!r}")
    rows = cvar_sweep(grid, topo, spec, cfg.etas, cfg.sides, thetas,
                      float(cfg["varrho"]), int(cfg["samples"]), cfg.seed)
    table = [{"theta": r.theta, "expected_cost": r.expected_cost,
              "cvar_cost": r.cvar_cost, "flow_std_sum": r.flow_std_sum}
             for r in rows]
    if cfg["format"] == "csv":
        emit_results(table, "csv", cfg.out)
        return
    emit_results({"command": "validate cvar-sweep", "case": cfg.case,
                  "varrho": float(cfg["varrho"]), "rows": table},
                 "json", cfg.out)


@cmd_validate.command("timeseries")
@_apply(_COMMON)
@click.option("--node", type=int, required=True,
              help="Node whose load is scaled and traced.")
@click.option("--beta-mw", type=float, required=True,
              help="Adjacency radius of that node's load in MW.")
@click.option("--epsilon", type=float, help="Privacy loss bound, in (0, 1].")
@click.option("--delta", type=float, help="Residual privacy failure "
                                          "probability, in (0, 1).")
@click.option("--steps", type=int, help="Trace length (default 24).")
@click.option("--seed", type=int, help="Sampling seed (default 0).")
def cmd_validate_timeseries(**params):
    """Released flow/voltage bands over a scaled-demand horizon.

    With --out as a path prefix, writes {out}_flow.csv and
    {out}_voltage.csv and prints a JSON summary to stdout.
    """
    cfg = _resolve("validate timeseries", params)
    _need(cfg, "epsilon", "delta")
    grid, topo = _load_grid(cfg)
    trace = timeseries_demo(grid, topo, int(cfg["node"]),
                            float(cfg["beta_mw"]), cfg.epsilon, cfg.delta,
                            int(cfg["steps"]), cfg.seed, sides=cfg.sides,
                            out=cfg.out)
    payload = {
        "command": "validate timeseries",
        "case": cfg.case,
        "node": int(cfg["node"]),
        "beta_mw": float(cfg["beta_mw"]),
        "steps": int(cfg["steps"]),
        "flow_csv": trace.flow_path,
        "voltage_csv": trace.voltage_path,
        "flow": trace.flow,
        "voltage": trace.voltage,
    }
    emit_results(payload, "json", None)


def dispatch(argv=None) -> int:
    """Parse argv, run the subcommand, and map failures to exit codes."""
    try:
        result = cli.main(args=None if argv is None else list(argv),
                          standalone_mode=False)
        return 0 if result is None else int(result)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except SolveError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        return 2
    except (GridError, PrivacyError, MechanismError, OracleError,
            ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


def main() -> None:
    sys.exit(dispatch())
