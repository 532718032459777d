"""Monte-Carlo and re-solve oracles for the dispatch policies.

Every check here takes an independent route from the optimization modules:
realized samples are tallied against the raw grid limits, adjacency claims
are established by explicitly re-solving neighbouring datasets, and the
privacy guarantee is attacked with histogram ratio tests.  The solvers are
never trusted to certify themselves.

Sampling uses the counter-based generator from :mod:`.mechanism`; one
logical stream per dataset (or sweep) keeps runs reproducible and lets
callers parallelize across streams without changing any number.  Scalar
statistics are aggregated with compensated summation so the results do not
depend on accumulation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .ccopf import AffineSolution, solve_ccopf
from .dopf import SolveError, solve_dopf
from .grid_model import GridError, RadialGrid, TopologyIndex
from .mechanism import FEAS_TOL, GaussianSampler
from .privacy_calibration import PrivacySpec, adjacent_dataset, calibrate_sigma

__all__ = [
    "Histogram",
    "McReport",
    "OracleError",
    "RatioReport",
    "SweepRow",
    "TimeseriesTrace",
    "cc_violation_mask",
    "cc_violation_rate",
    "cvar_sweep",
    "demand_multiplier",
    "dp_ratio_check",
    "mc_validate",
    "op_infeasible_mask",
    "op_infeasibility_rate",
    "sensitivity_oracle",
    "std_floor_check",
    "timeseries_demo",
    "wilson_half_width",
]

#: tolerance for the analytic std-floor and own-coordinate identities
FLOOR_TOL = 1e-8

TRACE_HEADER = ("t", "mean", "lo3", "hi3", "sample")


class OracleError(RuntimeError):
    """An oracle could not produce its reference value (e.g. infeasible re-solve)."""


@dataclass(frozen=True)
class Histogram:
    """Binned frequencies: ``freq[k]`` is the mass in ``[edges[k], edges[k+1])``."""

    edges: np.ndarray
    freq: np.ndarray

    def __post_init__(self):
        for arr in (self.edges, self.freq):
            arr.flags.writeable = False


@dataclass(frozen=True)
class McReport:
    """Sampled behaviour of one affine policy against the raw grid limits."""

    samples: int
    per_constraint_violation: dict
    joint_violation: float
    flow_std_mc: np.ndarray
    cost_mean: float
    cost_std: float
    cost_cvar: float
    histogram: Histogram

    def __post_init__(self):
        self.flow_std_mc.flags.writeable = False


@dataclass(frozen=True)
class RatioReport:
    """Histogram falsification test of the (epsilon, delta) release bound.

    ``satisfied`` means no bin of any neighbour pair broke
    ``P_a <= exp(epsilon) * P_b + delta`` by more than three Wilson
    half-widths; ``max_ratio`` is the worst delta-adjusted bin ratio.
    ``tv_minus``/``tv_plus`` are total-variation distances between the
    released-flow histograms of the base dataset and its two neighbours.
    """

    samples: int
    epsilon: float
    delta: float
    edges: np.ndarray
    freq_base: np.ndarray
    freq_minus: np.ndarray
    freq_plus: np.ndarray
    max_ratio: float
    satisfied: bool
    tv_minus: float
    tv_plus: float

    def __post_init__(self):
        for arr in (self.edges, self.freq_base, self.freq_minus, self.freq_plus):
            arr.flags.writeable = False


@dataclass(frozen=True)
class SweepRow:
    """One point of the risk-aversion sweep (costs in objective currency)."""

    theta: float
    expected_cost: float
    cvar_cost: float
    flow_std_sum: float


@dataclass(frozen=True)
class TimeseriesTrace:
    """Per-step released-flow and voltage traces, each (steps, 5) with
    columns ``t, mean, lo3, hi3, sample``."""

    flow: np.ndarray
    voltage: np.ndarray
    flow_path: str | None = None
    voltage_path: str | None = None

    def __post_init__(self):
        self.flow.flags.writeable = False
        self.voltage.flags.writeable = False


def _fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def _fsum_std(values: np.ndarray, mean: float) -> float:
    if len(values) < 2:
        return 0.0
    return math.sqrt(math.fsum((values - mean) ** 2) / (len(values) - 1))


def _upper_tail_mean(values: np.ndarray, fraction: float) -> float:
    """Mean of the worst (largest) ``fraction`` of the sample."""
    count = max(1, int(math.ceil(fraction * len(values))))
    tail = np.sort(values)[-count:]
    return math.fsum(tail) / count


def _sample_costs(grid: RadialGrid, g_p_pu: np.ndarray) -> np.ndarray:
    g_mw = g_p_pu * grid.base_mva
    costs = g_mw @ np.asarray(grid.c, dtype=float)
    if np.any(grid.c2 > 0.0):
        costs = costs + (g_mw ** 2) @ np.asarray(grid.c2, dtype=float)
    return costs


def _realized_batch(affine: AffineSolution, xi_mw: np.ndarray):
    """Evaluate the policy on a (samples, lines) MW perturbation batch."""
    grid = affine.grid
    xi_pu = xi_mw / grid.base_mva
    nom = affine.nominal
    return (nom.g_p + xi_pu @ affine.rho_p.T,
            nom.g_q + xi_pu @ affine.rho_q.T,
            nom.f_p - xi_pu @ affine.a_p.T,
            nom.f_q - xi_pu @ affine.a_q.T,
            nom.u + xi_pu @ affine.volt_response.T)


def _violation_columns(grid: RadialGrid, g_p, g_q, f_p, f_q, u) -> dict:
    """Per-sample violation indicators, one per individual limit.

    Box limits are split into their lower and upper sides because each side
    is its own chance constraint with its own violation budget.
    """
    tol = FEAS_TOL
    cols = {}
    for i in range(grid.node_count):
        cols[f"generator p node {i} lower"] = g_p[:, i] < grid.g_p_min[i] - tol
        cols[f"generator p node {i} upper"] = g_p[:, i] > grid.g_p_max[i] + tol
        cols[f"generator q node {i} lower"] = g_q[:, i] < grid.g_q_min[i] - tol
        cols[f"generator q node {i} upper"] = g_q[:, i] > grid.g_q_max[i] + tol
        cols[f"voltage node {i} lower"] = u[:, i] < grid.v_min[i] ** 2 - tol
        cols[f"voltage node {i} upper"] = u[:, i] > grid.v_max[i] ** 2 + tol
    for line in grid.lines:
        k = line - 1
        cols[f"flow line {line}"] = (
            np.hypot(f_p[:, k], f_q[:, k]) > grid.f_max[k] + tol)
    return cols


def mc_validate(affine: AffineSolution, grid: RadialGrid = None,
                topo: TopologyIndex = None, samples: int = 5000,
                seed: int = 0, varrho: float = 0.1,
                bins: int = 20) -> McReport:
    """Sample the policy and tally violations against the raw limits.

    Draws ``samples`` perturbation vectors, evaluates the affine policy on
    each, and reports per-limit and joint violation frequencies, per-line
    empirical flow stds, and generation-cost statistics (mean, std, and the
    mean of the worst ``varrho`` tail) with a ``bins``-bin cost histogram.
    """
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    grid = affine.grid if grid is None else grid
    xi = GaussianSampler(seed, affine.sigma).batch(samples)
    g_p, g_q, f_p, f_q, u = _realized_batch(affine, xi)

    cols = _violation_columns(grid, g_p, g_q, f_p, f_q, u)
    freq = {name: float(np.mean(hit)) for name, hit in cols.items()}
    joint = np.zeros(samples, dtype=bool)
    family = {"generator": np.zeros(samples, dtype=bool),
              "voltage": np.zeros(samples, dtype=bool),
              "flow": np.zeros(samples, dtype=bool)}
    for name, hit in cols.items():
        joint |= hit
        family[name.split()[0]] |= hit
    for name, hit in family.items():
        freq[name] = float(np.mean(hit))

    flow_std_mc = (np.std(f_p, axis=0, ddof=1) * grid.base_mva
                   if samples > 1 else np.zeros(grid.line_count))
    costs = _sample_costs(grid, g_p)
    cost_mean = _fsum_mean(costs)
    cost_std = _fsum_std(costs, cost_mean)
    counts, edges = np.histogram(costs, bins=bins)
    return McReport(
        samples=samples,
        per_constraint_violation=freq,
        joint_violation=float(np.mean(joint)),
        flow_std_mc=flow_std_mc,
        cost_mean=cost_mean,
        cost_std=cost_std,
        cost_cvar=_upper_tail_mean(costs, varrho),
        histogram=Histogram(edges=edges, freq=counts / samples),
    )


def std_floor_check(affine: AffineSolution, tol: float = FLOOR_TOL) -> np.ndarray:
    """Per-line check of the flow-std lower bound and its equality witness.

    Recomputes each line's std from the response matrix (independently of
    ``affine.flow_std``) and checks both that it is at least the injected
    std and that the line's own response coordinate is exactly -1 -- the
    structural reason the bound cannot be beaten.
    """
    sigma = affine.sigma
    row_std = np.linalg.norm(affine.a_p * sigma, axis=1)
    own = np.abs(np.diag(affine.a_p) + 1.0) <= tol
    return (row_std >= sigma - tol) & own


def sensitivity_oracle(grid: RadialGrid, topo: TopologyIndex, node: int,
                       beta_i: float, resolution: float = None,
                       sides: int = 12) -> float:
    """Worst optimal-flow change over neighbouring datasets of one node.

    Re-solves the deterministic dispatch with the node's load shifted by
    up to ``beta_i`` MW in both directions and returns the maximum over
    lines and shifts of the optimal active-flow change (MW).  With a
    ``resolution`` below ``beta_i`` the shift range is swept at that
    spacing instead of only at the endpoints.
    """
    if beta_i < 0:
        raise GridError(f"beta must be non-negative, got {beta_i}")
    base = grid.base_mva
    try:
        f0 = solve_dopf(grid, topo, sides).f_p * base
    except SolveError as exc:
        raise OracleError(f"base dataset did not solve: {exc}") from exc
    if beta_i == 0.0:
        return 0.0
    if resolution is not None and not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    if resolution is None or resolution >= beta_i:
        magnitudes = [beta_i]
    else:
        magnitudes = list(np.arange(resolution, beta_i, resolution)) + [beta_i]
    worst = 0.0
    for magnitude in magnitudes:
        for direction in (-1, 1):
            shifted = adjacent_dataset(grid, node, direction, magnitude / base)
            try:
                flows = solve_dopf(shifted, topo, sides).f_p * base
            except SolveError as exc:
                raise OracleError(
                    f"neighbouring dataset (node {node}, shift "
                    f"{direction * magnitude:+g} MW) did not solve: {exc}") from exc
            worst = max(worst, float(np.max(np.abs(flows - f0))))
    return worst


def wilson_half_width(p_hat, n: int, z: float = 1.0):
    """Half-width of the Wilson score interval for a binomial frequency."""
    p = np.asarray(p_hat, dtype=float)
    denom = 1.0 + z * z / n
    return (z / denom) * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))


def _released_flow_samples(grid: RadialGrid, topo: TopologyIndex, line: int,
                           spec: PrivacySpec, etas, sides: int,
                           samples: int, seed: int, stream: int) -> np.ndarray:
    """MW samples of one line's released flow under a fresh policy solve."""
    affine = solve_ccopf(grid, topo, spec, etas, sides)
    xi = GaussianSampler(seed, spec.sigma, stream=stream).batch(samples)
    mean = affine.nominal.f_p[line - 1] * grid.base_mva
    return mean - xi @ affine.a_p[line - 1]


def dp_ratio_check(grid: RadialGrid, topo: TopologyIndex, node: int,
                   beta_i: float, spec: PrivacySpec, etas=None,
                   sides: int = 12, samples: int = 5000, bins: int = 20,
                   seed: int = 0) -> RatioReport:
    """Attack the release bound with histograms of one node's flow.

    Runs the release pipeline on the dataset and on both neighbours (the
    node's load shifted by ``+-beta_i`` MW), bins the released active flow
    into a common grid, and tests every bin of every neighbour pair in both
    directions against ``P_a <= exp(eps) * P_b + delta`` with three Wilson
    half-widths of slack -- finite-sample histograms can falsify the bound,
    never certify it.
    """
    if samples < 2:
        raise ValueError(f"samples must be at least 2, got {samples}")
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    beta_pu = beta_i / grid.base_mva
    datasets = (grid,
                adjacent_dataset(grid, node, -1, beta_pu),
                adjacent_dataset(grid, node, +1, beta_pu))
    draws = [_released_flow_samples(ds, topo, node, spec, etas, sides,
                                    samples, seed, stream)
             for stream, ds in enumerate(datasets)]
    edges = np.histogram_bin_edges(np.concatenate(draws), bins=bins)
    freqs = [np.histogram(d, bins=edges)[0] / samples for d in draws]
    widths = [wilson_half_width(f, samples) for f in freqs]

    grow = math.exp(spec.epsilon)
    max_ratio = 0.0
    satisfied = True
    for a, b in ((0, 1), (1, 0), (0, 2), (2, 0)):
        slack = 3.0 * (widths[a] + grow * widths[b])
        if np.any(freqs[a] > grow * freqs[b] + spec.delta + slack):
            satisfied = False
        positive = freqs[b] > 0.0
        if np.any(positive):
            adjusted = np.clip(freqs[a][positive] - spec.delta, 0.0, None)
            max_ratio = max(max_ratio,
                            float(np.max(adjusted / freqs[b][positive])))
    tv = [0.5 * float(np.sum(np.abs(freqs[0] - freqs[k]))) for k in (1, 2)]
    return RatioReport(
        samples=samples, epsilon=spec.epsilon, delta=spec.delta,
        edges=edges, freq_base=freqs[0], freq_minus=freqs[1],
        freq_plus=freqs[2], max_ratio=max_ratio, satisfied=satisfied,
        tv_minus=tv[0], tv_plus=tv[1])


def demand_multiplier(t):
    """Periodic demand profile with three components of distinct amplitude."""
    t = np.asarray(t, dtype=float)
    return (np.maximum(np.sin(0.05 * t), 0.7)
            + 0.05 * np.sin(0.05 * t)
            + 0.025 * np.sin(0.75 * t))


def _write_trace(path: str, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in rows:
            writer.writerow([f"{value:.12g}" for value in row])


def timeseries_demo(grid: RadialGrid, topo: TopologyIndex, node: int,
                    beta_i: float, epsilon: float, delta: float,
                    steps: int, seed: int = 0, etas=None, sides: int = 12,
                    out: str = None) -> TimeseriesTrace:
    """Trace one node's released flow and voltage over a scaled-demand day.

    For each step ``t = 1..steps`` the node's load is scaled by the
    three-component periodic multiplier, the release policy is re-solved
    with noise calibrated for ``beta_i`` on that node, and the row records
    the nominal value, the +-3-std band, and one released sample.  With
    ``out`` given, ``{out}_flow.csv`` and ``{out}_voltage.csv`` are written
    (columns ``t, mean, lo3, hi3, sample``; flow in MW, voltage in
    per-unit).
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    beta = np.zeros(grid.line_count)
    beta[node - 1] = beta_i
    spec = calibrate_sigma(epsilon, delta, beta)
    xi = GaussianSampler(seed, spec.sigma).batch(steps) if steps else None
    base = grid.base_mva
    d0 = float(grid.d_p[node])

    flow_rows = np.zeros((steps, 5))
    volt_rows = np.zeros((steps, 5))
    for k in range(steps):
        t = k + 1
        scaled = grid.with_load(node, float(demand_multiplier(t)) * d0)
        affine = solve_ccopf(scaled, topo, spec, etas, sides)
        mean = affine.nominal.f_p[node - 1] * base
        std = affine.flow_std[node - 1]
        sample = mean - float(xi[k] @ affine.a_p[node - 1])
        flow_rows[k] = (t, mean, mean - 3.0 * std, mean + 3.0 * std, sample)

        u = float(affine.nominal.u[node])
        u_std = float(affine.volt_std[node])
        u_sample = u + float(affine.volt_response[node] @ (xi[k] / base))
        volt_rows[k] = (t, math.sqrt(u),
                        math.sqrt(max(u - 3.0 * u_std, 0.0)),
                        math.sqrt(u + 3.0 * u_std),
                        math.sqrt(max(u_sample, 0.0)))
    flow_path = volt_path = None
    if out is not None:
        flow_path, volt_path = f"{out}_flow.csv", f"{out}_voltage.csv"
        _write_trace(flow_path, flow_rows)
        _write_trace(volt_path, volt_rows)
    return TimeseriesTrace(flow=flow_rows, voltage=volt_rows,
                           flow_path=flow_path, voltage_path=volt_path)


def cvar_sweep(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
               etas=None, sides: int = 12, thetas=(0.0,),
               varrho: float = 0.1, samples: int = 5000,
               seed: int = 0) -> list:
    """Expected-vs-tail cost trade-off across risk-aversion weights.

    Solves the risk-weighted policy for each ``theta`` and evaluates all of
    them on one common perturbation batch (paired comparisons), reporting
    the sampled expected cost, the mean of the worst ``varrho`` cost tail,
    and the summed analytic flow stds.
    """
    thetas = [float(t) for t in thetas]
    if not thetas:
        raise ValueError("thetas must contain at least one weight")
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    xi = GaussianSampler(seed, np.asarray(spec.sigma, dtype=float)).batch(samples)
    rows = []
    for theta in thetas:
        affine = solve_ccopf(grid, topo, spec, etas, sides, variant="cvar",
                             theta=theta, varrho=varrho)
        g_p = affine.nominal.g_p + (xi / grid.base_mva) @ affine.rho_p.T
        costs = _sample_costs(grid, g_p)
        rows.append(SweepRow(
            theta=theta,
            expected_cost=_fsum_mean(costs),
            cvar_cost=_upper_tail_mean(costs, varrho),
            flow_std_sum=float(affine.flow_std.sum())))
    return rows


def _per_seed_draws(sigma: np.ndarray, seeds: int) -> np.ndarray:
    """One draw per release seed, matching the single-shot mechanisms."""
    if seeds < 1:
        raise ValueError(f"seeds must be positive, got {seeds}")
    return np.stack([GaussianSampler(s, sigma)() for s in range(seeds)])


def cc_violation_mask(grid: RadialGrid, topo: TopologyIndex, epsilon: float,
                      delta: float, beta, seeds: int = 5000, etas=None,
                      sides: int = 12) -> np.ndarray:
    """Per-seed indicator that the noise-following dispatch breaks a limit.

    Replays ``run_dp_ccopf`` for seeds ``0..seeds-1`` without re-solving:
    the policy is solved once and each seed's single draw is evaluated
    against the raw limits exactly as the mechanism's feasibility flags do.
    """
    spec = calibrate_sigma(epsilon, delta, beta)
    affine = solve_ccopf(grid, topo, spec, etas, sides)
    xi = _per_seed_draws(spec.sigma, seeds)
    g_p, g_q, f_p, f_q, u = _realized_batch(affine, xi)
    joint = np.zeros(seeds, dtype=bool)
    for hit in _violation_columns(grid, g_p, g_q, f_p, f_q, u).values():
        joint |= hit
    return joint


def cc_violation_rate(grid: RadialGrid, topo: TopologyIndex, epsilon: float,
                      delta: float, beta, seeds: int = 5000, etas=None,
                      sides: int = 12) -> float:
    """Fraction of release seeds whose noise-following dispatch breaks a limit."""
    return float(np.mean(cc_violation_mask(grid, topo, epsilon, delta, beta,
                                           seeds, etas, sides)))


def op_infeasible_mask(grid: RadialGrid, topo: TopologyIndex,
                       epsilon: float, delta: float, beta,
                       seeds: int = 5000, sides: int = 12) -> np.ndarray:
    """Per-seed indicator that pinned perturbed flows admit no dispatch.

    Replays ``run_output_perturbation`` for seeds ``0..seeds-1`` without
    re-solving each pin: pinning every line's active flow forces each
    node's active generation through nodal balance, so a seed is infeasible
    exactly when a forced generation leaves its box or a pinned flow
    exceeds its line rating.  (The re-solve is still free to steer the
    reactive side, which keeps enough slack on the bundled cases to never
    bind first; the mechanism tests cross-check this fast path against
    true re-solves.)
    """
    spec = calibrate_sigma(epsilon, delta, beta)
    nominal = solve_dopf(grid, topo, sides)
    xi_pu = _per_seed_draws(spec.sigma, seeds) / grid.base_mva

    n = grid.node_count
    shift = np.zeros((n, grid.line_count))
    for i in range(n):
        for child in topo.children.get(i, ()):
            shift[i, child - 1] += 1.0
        if i:
            shift[i, i - 1] -= 1.0
    g_p = nominal.g_p + xi_pu @ shift.T
    f_p = nominal.f_p + xi_pu

    tol = FEAS_TOL
    bad = np.any((g_p < grid.g_p_min - tol) | (g_p > grid.g_p_max + tol), axis=1)
    bad |= np.any(np.abs(f_p) > grid.f_max + tol, axis=1)
    return bad


def op_infeasibility_rate(grid: RadialGrid, topo: TopologyIndex,
                          epsilon: float, delta: float, beta,
                          seeds: int = 5000, sides: int = 12) -> float:
    """Fraction of release seeds on which pinned perturbed flows cannot dispatch."""
    return float(np.mean(op_infeasible_mask(grid, topo, epsilon, delta, beta,
                                            seeds, sides)))
