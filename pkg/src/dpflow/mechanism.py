"""Randomized dispatch release and privacy accounting.

Two mechanisms turn a privacy requirement (epsilon, delta, beta) into a
released dispatch.  The chance-constrained route solves the affine-recourse
program once, draws the calibrated flow noise, and evaluates the policy at
the draw, so balance equations hold for every sample by construction.  The
output-perturbation baseline instead adds the same calibrated noise to the
deterministic optimal flows and re-solves the dispatch with those flows
pinned; when no generator or voltage profile can support the pinned flows
the run comes back flagged infeasible -- that outcome is data, not an error.

Power quantities on this surface are MW (squared voltages stay per-unit);
conversion against ``grid.base_mva`` happens exactly once per evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ccopf import AffineSolution, solve_ccopf
from .conic_core import solve
from .dopf import SolveError, assemble_dopf, extract_dispatch, solve_dopf
from .grid_model import GridError, RadialGrid, TopologyIndex
from .privacy_calibration import PrivacyError, calibrate_sigma

FEAS_TOL = 1e-7
"""Absolute per-unit slack when judging realized values against grid limits."""


class MechanismError(RuntimeError):
    """The privacy requirement cannot be accommodated by the grid."""


@dataclass(frozen=True)
class PrivacyLedger:
    """Linear composition ledger over repeated noise draws.

    Every draw spends the full per-draw budget, so the total loss grows
    linearly; ``epsilon_spent`` is derived from the other fields and always
    equals ``draws * epsilon_per_draw``.
    """

    epsilon_per_draw: float
    delta_per_draw: float
    draws: int
    epsilon_spent: float = field(init=False)

    def __post_init__(self) -> None:
        if self.draws < 1:
            raise PrivacyError(f"draws must be at least 1, got {self.draws}")
        object.__setattr__(
            self, "epsilon_spent", self.draws * self.epsilon_per_draw)


@dataclass(frozen=True)
class RealizedDispatch:
    """One realization of a released dispatch.

    Powers are MW; ``u`` is squared voltage magnitude, per-unit.
    ``feasible`` maps each physical constraint family ("generator",
    "voltage", "flow") to a verdict plus an "overall" conjunction; flows
    are judged against the true circular apparent-power limit rather than
    its polygonal inner approximation, so the flags measure engineering
    feasibility.  ``seed`` is the RNG seed of the producing run (None when
    the perturbation was supplied directly).
    """

    xi: np.ndarray
    g_p: np.ndarray
    g_q: np.ndarray
    f_p: np.ndarray
    f_q: np.ndarray
    u: np.ndarray
    feasible: dict
    seed: int | None = None


class GaussianSampler:
    """Reproducible stream of centred Gaussian vectors with fixed stds.

    Runs Box-Muller over a counter-based bit generator, so a given
    (seed, stream) pair replays the same draws on any platform and
    distinct streams stay independent for concurrent runs.  Components
    with zero std come out exactly zero, not merely small.
    """

    def __init__(self, seed: int, sigma, stream: int = 0):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 1:
            raise PrivacyError("sigma must be a one-dimensional per-line array")
        if (sigma < 0).any():
            raise PrivacyError("sigma must be non-negative")
        self.sigma = sigma.copy()
        self.sigma.flags.writeable = False
        self.seed = seed
        self.stream = stream
        entropy = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
        self._bits = np.random.Generator(np.random.Philox(entropy))

    def batch(self, count: int) -> np.ndarray:
        """Draw ``count`` independent vectors as a (count, lines) array."""
        shape = (count, self.sigma.size)
        u1 = 1.0 - self._bits.random(shape)  # (0, 1] keeps the log finite
        u2 = self._bits.random(shape)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return np.where(self.sigma > 0.0, z * self.sigma, 0.0)

    def __call__(self) -> np.ndarray:
        return self.batch(1)[0]


def gaussian_sampler(seed: int, sigma, stream: int = 0) -> GaussianSampler:
    """Sampler of independent N(0, sigma_l) per-line perturbation vectors."""
    return GaussianSampler(seed, sigma, stream)


def _family_flags(grid: RadialGrid, g_p, g_q, f_p, f_q, u) -> dict:
    """Per-family limit verdicts for one per-unit operating point."""
    tol = FEAS_TOL
    gen = (np.all(g_p >= grid.g_p_min - tol) and np.all(g_p <= grid.g_p_max + tol)
           and np.all(g_q >= grid.g_q_min - tol)
           and np.all(g_q <= grid.g_q_max + tol))
    volt = bool(np.all(u >= grid.v_min ** 2 - tol)
                and np.all(u <= grid.v_max ** 2 + tol))
    flow = bool(np.all(np.hypot(f_p, f_q) <= grid.f_max + tol))
    flags = {"generator": bool(gen), "voltage": volt, "flow": flow}
    flags["overall"] = all(flags.values())
    return flags


def realize(affine: AffineSolution, xi, seed: int = None) -> RealizedDispatch:
    """Evaluate the affine policy at one perturbation sample.

    ``xi`` is the per-line active-flow perturbation in MW.  Nodal balance
    and the voltage recursion hold exactly for any ``xi`` because the
    policy enters them linearly; only box and apparent-power limits can
    break, and the flags report which family did.
    """
    grid = affine.grid
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (grid.line_count,):
        raise GridError(
            f"xi needs one component per line ({grid.line_count}), "
            f"got shape {xi.shape}")
    xi_pu = xi / grid.base_mva
    nom = affine.nominal
    g_p = nom.g_p + affine.rho_p @ xi_pu
    g_q = nom.g_q + affine.rho_q @ xi_pu
    f_p = nom.f_p - affine.a_p @ xi_pu
    f_q = nom.f_q - affine.a_q @ xi_pu
    u = nom.u + affine.volt_response @ xi_pu
    flags = _family_flags(grid, g_p, g_q, f_p, f_q, u)
    base = grid.base_mva
    return RealizedDispatch(xi=xi.copy(), g_p=g_p * base, g_q=g_q * base,
                            f_p=f_p * base, f_q=f_q * base, u=u,
                            feasible=flags, seed=seed)


def run_dp_ccopf(grid: RadialGrid, topo: TopologyIndex, epsilon: float,
                 delta: float, beta, etas=None, sides: int = 12,
                 seed: int = 0, max_resamples: int = 0):
    """Release one dispatch under an (epsilon, delta) requirement.

    Calibrates per-line noise from the adjacency vector ``beta`` (MW),
    solves the chance-constrained program, draws the perturbation, and
    evaluates the policy.  When the draw lands outside the grid limits and
    ``max_resamples`` allows, fresh draws are taken -- each spends the full
    per-draw budget, which the returned ledger records.  The default is to
    report the unlucky draw rather than silently retry.

    Returns ``(RealizedDispatch, PrivacyLedger)``.  Raises
    :class:`MechanismError` when the chance-constrained program is
    infeasible, i.e. the grid cannot absorb the calibrated noise.
    """
    spec = calibrate_sigma(epsilon, delta, beta)
    try:
        affine = solve_ccopf(grid, topo, spec, etas, sides)
    except SolveError as exc:
        if exc.report is not None and exc.report.status == "infeasible":
            raise MechanismError("privacy requirement not accommodable") from exc
        raise
    sampler = GaussianSampler(seed, spec.sigma)
    draws = 0
    while True:
        draws += 1
        realized = realize(affine, sampler(), seed=seed)
        if realized.feasible["overall"] or draws > max_resamples:
            break
    return realized, PrivacyLedger(epsilon, delta, draws)


def _forced_point(grid: RadialGrid, topo: TopologyIndex, nominal, target_pu):
    """Operating point implied by pinned active flows, per-unit.

    Active generation is read off nodal balance, reactive quantities keep
    their unperturbed optima, and voltages follow the drop recursion, so
    the point is balance-consistent and the flags can show which family
    the pinned flows broke.
    """
    n = grid.node_count
    g_p = np.asarray(grid.d_p, dtype=float).copy()
    for i in range(n):
        g_p[i] += sum(target_pu[m - 1] for m in topo.children.get(i, ()))
        if i:
            g_p[i] -= target_pu[i - 1]
    f_q = nominal.f_q.copy()
    u = np.ones(n)
    for i in range(1, n):
        drop = sum(grid.r[l - 1] * target_pu[l - 1] + grid.x[l - 1] * f_q[l - 1]
                   for l in topo.root_path_lines[i])
        u[i] = 1.0 - 2.0 * drop
    return g_p, nominal.g_q.copy(), target_pu.copy(), f_q, u


def run_output_perturbation(grid: RadialGrid, topo: TopologyIndex,
                            epsilon: float, delta: float, beta,
                            sides: int = 12, seed: int = 0):
    """Perturb the deterministic optimal flows and re-dispatch around them.

    Solves the deterministic OPF, adds calibrated noise to every line's
    active flow, and re-solves with those flows pinned; reactive flows,
    voltages, and generation re-optimize around the pins.  When the pinned
    flows admit no feasible dispatch the realization is returned flagged
    infeasible, evaluated at the balance-forced operating point.

    Returns ``(RealizedDispatch, PrivacyLedger)``.
    """
    spec = calibrate_sigma(epsilon, delta, beta)
    nominal = solve_dopf(grid, topo, sides)
    xi = GaussianSampler(seed, spec.sigma)()
    target_pu = nominal.f_p + xi / grid.base_mva
    prog, vm = assemble_dopf(grid, topo, sides)
    for line in grid.lines:
        row = np.zeros(prog.var_count)
        row[vm.f_p(line)] = 1.0
        prog.add_equality(row, float(target_pu[line - 1]),
                          name=f"pin perturbed flow line {line}")
    report = solve(prog)
    ledger = PrivacyLedger(epsilon, delta, 1)
    base = grid.base_mva
    if report.status == "optimal":
        disp = extract_dispatch(report, vm)
        flags = _family_flags(grid, disp.g_p, disp.g_q, disp.f_p, disp.f_q,
                              disp.u)
        return RealizedDispatch(
            xi=xi.copy(), g_p=disp.g_p * base, g_q=disp.g_q * base,
            f_p=disp.f_p * base, f_q=disp.f_q * base, u=disp.u,
            feasible=flags, seed=seed), ledger
    if report.status != "infeasible":
        raise SolveError("perturbed-flow re-solve did not solve: "
                         f"solver status {report.status}", report=report)
    g_p, g_q, f_p, f_q, u = _forced_point(grid, topo, nominal, target_pu)
    flags = _family_flags(grid, g_p, g_q, f_p, f_q, u)
    flags["overall"] = False
    return RealizedDispatch(
        xi=xi.copy(), g_p=g_p * base, g_q=g_q * base,
        f_p=f_p * base, f_q=f_q * base, u=u,
        feasible=flags, seed=seed), ledger
