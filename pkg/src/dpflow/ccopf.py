"""Chance-constrained OPF with affine balancing recourse.

The randomized dispatch follows an affine policy: each generator absorbs a
chosen share alpha of every per-line noise component, with nodes above a
line ramping up and nodes below it ramping down.  Under Gaussian noise each
probabilistic limit reduces to a second-order-cone row, so the programs
stay solvable by the interior-point core.  Variants reshape the induced
flow variance: penalising it (``tov``), steering it toward per-line targets
(``tav``), or trading expected cost against cost risk (``cvar``,
``meanstd``).

Conventions: grid quantities are per-unit internally; noise magnitudes
(``sigma``) are absolute MW, converted by ``base_mva`` where they meet
per-unit rows.  Flow and generator standard deviations are therefore
reported in MW, voltage standard deviations in per-unit of squared voltage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .conic_core import ConicProgram, SolveReport, solve
from .dopf import (
    DispatchSolution,
    SolveError,
    VarMap,
    _grow,
    add_base_opf,
    add_cost_objective,
    extract_dispatch,
    polygon_coefficients,
)
from .grid_model import GridError, RadialGrid, TopologyIndex
from .privacy_calibration import PrivacyError, PrivacySpec, cvar_factor, z_quantile

__all__ = [
    "AffineSolution",
    "DEFAULT_ETAS",
    "VARIANTS",
    "assemble_ccopf",
    "assemble_cvar",
    "assemble_mean_std",
    "assemble_tav",
    "assemble_tov",
    "default_sigma_hat",
    "expected_quadratic_cost",
    "extract_affine",
    "flow_std_row",
    "solve_ccopf",
    "voltage_std_row",
]

DEFAULT_ETAS: Mapping[str, float] = {"g": 0.01, "u": 0.02, "f": 0.10}
VARIANTS = ("base", "tov", "tav", "cvar", "meanstd")

#: slack used when judging whether an achieved flow std meets its target;
#: the optimum often sits exactly on the equality face, so the check allows
#: a small relative term on top of the absolute floor to absorb interior-point
#: terminal accuracy
TARGET_TOL = 1e-6
TARGET_RTOL = 1e-4


@dataclass(frozen=True)
class AffineSolution:
    """A solved affine dispatch policy.

    ``alpha`` holds the per-node, per-line balancing shares; ``rho_p`` and
    ``rho_q`` are the signed generator responses (``rho_p = T * alpha``).
    ``sigma`` is the MW noise vector the conic rows were built against.
    ``a_p``/``a_q`` map noise to line-flow deviations (``f~ = f - a @ xi``)
    and ``volt_response`` maps per-unit noise to squared-voltage deviations
    (``u~ = u + volt_response @ xi``).  For the target-variance variant,
    ``target_sigma`` carries the privacy-calibrated stds and ``target_met``
    whether every achieved flow std reaches its target.
    """

    nominal: DispatchSolution
    alpha: np.ndarray
    rho_p: np.ndarray
    rho_q: np.ndarray
    sigma: np.ndarray
    flow_std: np.ndarray
    volt_std: np.ndarray
    gen_std: np.ndarray
    a_p: np.ndarray
    a_q: np.ndarray
    volt_response: np.ndarray
    grid: RadialGrid
    target_sigma: np.ndarray | None = None
    target_met: bool | None = None

    def __post_init__(self):
        for name in ("alpha", "rho_p", "rho_q", "sigma", "flow_std",
                     "volt_std", "gen_std", "a_p", "a_q", "volt_response"):
            arr = getattr(self, name)
            arr.flags.writeable = False


def _eta_triple(etas) -> tuple[float, float, float]:
    if etas is None:
        etas = DEFAULT_ETAS
    if isinstance(etas, Mapping):
        missing = [k for k in ("g", "u", "f") if k not in etas]
        if missing:
            raise PrivacyError(f"etas mapping missing keys {missing}")
        vals = (etas["g"], etas["u"], etas["f"])
    else:
        vals = tuple(float(v) for v in etas)
        if len(vals) != 3:
            raise PrivacyError(f"etas needs entries for g, u, f; got {len(vals)}")
    for v in vals:
        v = float(v)
        if not 0.0 < v < 0.5:
            raise PrivacyError(
                f"eta must lie in (0, 0.5) so the quantile factor stays positive, got {v}")
    return tuple(float(v) for v in vals)


def _sigma_for(grid: RadialGrid, spec: PrivacySpec) -> np.ndarray:
    sigma = np.asarray(spec.sigma, dtype=float)
    if sigma.shape != (grid.line_count,):
        raise PrivacyError(
            f"privacy spec covers {sigma.size} lines but the grid has {grid.line_count}")
    return sigma


def _subtree_matrix(topo: TopologyIndex) -> np.ndarray:
    """(L, n) indicator: entry (l-1, j) is 1 when node j lies in subtree(l)."""
    return (np.asarray(topo.T) == -1).T.astype(float)


def _path_matrix(topo: TopologyIndex) -> np.ndarray:
    """(n, L) indicator: entry (i, l-1) is 1 when line l is on the root path of i."""
    return (np.asarray(topo.T) == -1).astype(float)


class _Assembly:
    """In-flight chance-constrained program plus its noise bookkeeping."""

    def __init__(self, grid: RadialGrid, topo: TopologyIndex, sigma_mw: np.ndarray):
        self.grid = grid
        self.topo = topo
        self.sigma_mw = sigma_mw
        self.sigma_pu = sigma_mw / grid.base_mva
        self.noisy = [line for line in grid.lines if self.sigma_pu[line - 1] > 0.0]
        self.vm = VarMap(grid.node_count)
        prog = ConicProgram(self.vm.base_count)
        for i in range(self.vm.n):
            prog.name_var(self.vm.g_p(i), f"g_p[{i}]")
            prog.name_var(self.vm.g_q(i), f"g_q[{i}]")
            prog.name_var(self.vm.u(i), f"u[{i}]")
        for line in grid.lines:
            prog.name_var(self.vm.f_p(line), f"f_p[{line}]")
            prog.name_var(self.vm.f_q(line), f"f_q[{line}]")
        self.prog = prog
        add_base_opf(prog, grid, topo, self.vm)
        self.alpha: dict[tuple[int, int], int] = {}
        self._add_alpha_block()

    def _add_alpha_block(self) -> None:
        """Participation variables and their balancing equalities (noisy lines)."""
        T = np.asarray(self.topo.T)
        pairs = [(j, m) for m in self.noisy
                 for j in range(self.vm.n) if T[j, m - 1] != 0]
        if not pairs:
            return
        first = self.vm.add_extras(len(pairs))
        _grow(self.prog, self.vm)
        for k, (j, m) in enumerate(pairs):
            var = first + k
            self.alpha[(j, m)] = var
            self.prog.name_var(var, f"alpha[{j},{m}]")
        for m in self.noisy:
            up = np.zeros(self.prog.var_count)
            down = np.zeros(self.prog.var_count)
            for j in range(self.vm.n):
                sign = T[j, m - 1]
                if sign == 1:
                    up[self.alpha[(j, m)]] = 1.0
                elif sign == -1:
                    down[self.alpha[(j, m)]] = 1.0
            self.prog.add_equality(up, 1.0, name=f"balance recourse up line {m}")
            self.prog.add_equality(down, 1.0, name=f"balance recourse down line {m}")

    def noise_matrix(self, coef) -> np.ndarray:
        """Rows of a conic block: one row per noisy line.

        ``coef(j, m)`` gives the multiplier of alpha[j, m] before the
        per-line noise scale; entries are filled as coef * T[j, m].
        """
        T = np.asarray(self.topo.T)
        A = np.zeros((len(self.noisy), self.prog.var_count))
        for k, m in enumerate(self.noisy):
            for j in range(self.vm.n):
                sign = T[j, m - 1]
                if sign == 0:
                    continue
                value = coef(j, m)
                if value != 0.0:
                    A[k, self.alpha[(j, m)]] = value * sign
        return A


def _add_generator_rows(asm: _Assembly, z_g: float) -> None:
    grid, vm, prog = asm.grid, asm.vm, asm.prog
    sig = asm.sigma_pu
    for i in range(vm.n):
        for label, g_of, scale, lo, hi in (
                ("p", vm.g_p, 1.0, grid.g_p_min[i], grid.g_p_max[i]),
                ("q", vm.g_q, float(grid.tan_phi[i]), grid.g_q_min[i], grid.g_q_max[i])):
            A = asm.noise_matrix(
                lambda j, m, i=i, scale=scale: z_g * sig[m - 1] * scale if j == i else 0.0)
            up = np.zeros(prog.var_count)
            up[g_of(i)] = -1.0
            prog.add_soc(A, np.zeros(len(asm.noisy)), up, float(hi),
                         name=f"generator {label} up node {i}")
            down = np.zeros(prog.var_count)
            down[g_of(i)] = 1.0
            prog.add_soc(A.copy(), np.zeros(len(asm.noisy)), down, -float(lo),
                         name=f"generator {label} down node {i}")


def _add_voltage_rows(asm: _Assembly, z_u: float) -> None:
    grid, vm, prog, topo = asm.grid, asm.vm, asm.prog, asm.topo
    sig = asm.sigma_pu
    P = _path_matrix(topo)
    shared_r = P @ np.diag(grid.r) @ P.T
    shared_x = P @ np.diag(grid.x) @ P.T
    tan_phi = np.asarray(grid.tan_phi)
    for i in range(1, vm.n):
        A = asm.noise_matrix(
            lambda j, m, i=i: z_u * sig[m - 1]
            * (shared_r[i, j] + tan_phi[j] * shared_x[i, j]))
        up = np.zeros(prog.var_count)
        up[vm.u(i)] = -0.5
        prog.add_soc(A, np.zeros(len(asm.noisy)), up,
                     0.5 * float(grid.v_max[i]) ** 2, name=f"voltage upper node {i}")
        down = np.zeros(prog.var_count)
        down[vm.u(i)] = 0.5
        prog.add_soc(A.copy(), np.zeros(len(asm.noisy)), down,
                     -0.5 * float(grid.v_min[i]) ** 2, name=f"voltage lower node {i}")


def _add_flow_rows(asm: _Assembly, z_f: float, sides: int) -> None:
    grid, vm, prog, topo = asm.grid, asm.vm, asm.prog, asm.topo
    sig = asm.sigma_pu
    faces = polygon_coefficients(sides)
    in_subtree = _subtree_matrix(topo)
    tan_phi = np.asarray(grid.tan_phi)
    for line in grid.lines:
        f_bar = float(grid.f_max[line - 1])
        members = in_subtree[line - 1]
        for c_idx, (gp, gq, gs) in enumerate(faces):
            A = asm.noise_matrix(
                lambda j, m, members=members, gp=gp, gq=gq:
                z_f * sig[m - 1] * (gp + gq * tan_phi[j]) if members[j] else 0.0)
            lin = np.zeros(prog.var_count)
            lin[vm.f_p(line)] = -gp
            lin[vm.f_q(line)] = -gq
            prog.add_soc(A, np.zeros(len(asm.noisy)), lin, -gs * f_bar,
                         name=f"flow line {line} side {c_idx}")


def _add_variability_block(asm: _Assembly) -> dict[int, int]:
    """Per-line epigraph t_l >= achieved flow std (MW); returns line -> var."""
    grid, vm, prog, topo = asm.grid, asm.vm, asm.prog, asm.topo
    first = vm.add_extras(vm.L)
    _grow(prog, vm)
    in_subtree = _subtree_matrix(topo)
    t_vars = {}
    for line in grid.lines:
        t = first + line - 1
        t_vars[line] = t
        prog.name_var(t, f"t[{line}]")
        prog.set_bound(t, lo=0.0)
        members = in_subtree[line - 1]
        A = asm.noise_matrix(
            lambda j, m, members=members: asm.sigma_mw[m - 1] if members[j] else 0.0)
        c_row = np.zeros(prog.var_count)
        c_row[t] = 1.0
        prog.add_soc(A, np.zeros(len(asm.noisy)), c_row, 0.0,
                     name=f"variability line {line}")
    return t_vars


def _add_cost_risk_var(asm: _Assembly) -> int:
    """Scalar epigraph for the std of linear dispatch cost (currency units)."""
    grid, vm, prog = asm.grid, asm.vm, asm.prog
    var = vm.add_extras(1)
    _grow(prog, vm)
    prog.name_var(var, "sigma_c")
    prog.set_bound(var, lo=0.0)
    cost = np.asarray(grid.c) * grid.base_mva
    A = asm.noise_matrix(lambda j, m: cost[j] * asm.sigma_pu[m - 1])
    c_row = np.zeros(prog.var_count)
    c_row[var] = 1.0
    prog.add_soc(A, np.zeros(len(asm.noisy)), c_row, 0.0, name="cost risk")
    return var


def _psi_vector(psi, line_count: int) -> np.ndarray:
    vec = np.broadcast_to(np.asarray(psi, dtype=float), (line_count,)).copy()
    if np.any(vec < 0.0):
        raise ValueError("psi weights must be non-negative")
    return vec


def _build(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
           etas, sides: int, variant: str, *, psi=0.0, sigma_hat=None,
           theta: float = 0.0, varrho: float = 0.1) -> tuple[ConicProgram, np.ndarray]:
    """Assemble one program; returns (program, MW noise vector used in rows)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    eta_g, eta_u, eta_f = _eta_triple(etas)
    sigma = _sigma_for(grid, spec)
    if variant == "tav":
        if sigma_hat is None:
            sigma_hat = default_sigma_hat(topo, spec)
        sigma_hat = np.asarray(sigma_hat, dtype=float)
        if sigma_hat.shape != sigma.shape:
            raise PrivacyError(
                f"sigma_hat covers {sigma_hat.size} lines but the grid has {sigma.size}")
        if np.any(sigma_hat < 0.0):
            raise PrivacyError("sigma_hat entries must be non-negative")
        budget = float(np.sum(sigma ** 2))
        spent = float(np.sum(sigma_hat ** 2))
        if spent > budget * (1.0 + 1e-9) + 1e-15:
            raise PrivacyError(
                f"sigma_hat variance {spent:.6g} exceeds the calibrated budget {budget:.6g}")
        rows_sigma = sigma_hat
    else:
        rows_sigma = sigma

    asm = _Assembly(grid, topo, rows_sigma)
    _add_generator_rows(asm, z_quantile(eta_g))
    _add_voltage_rows(asm, z_quantile(eta_u))
    _add_flow_rows(asm, z_quantile(eta_f), sides)
    add_cost_objective(asm.prog, grid, asm.vm)

    if variant == "tov":
        weights = _psi_vector(psi, grid.line_count)
        # no noise means every achieved std is structurally zero; building
        # the epigraph anyway would only leak psi-amplified solver noise
        # into the objective
        t_vars = _add_variability_block(asm) if asm.noisy else {}
        for line, t in t_vars.items():
            asm.prog.objective[t] += weights[line - 1]
    elif variant == "tav" and not asm.noisy and not np.any(sigma > 0.0):
        _psi_vector(psi, grid.line_count)
    elif variant == "tav":
        weights = _psi_vector(psi, grid.line_count)
        t_vars = _add_variability_block(asm)
        first_tau = asm.vm.add_extras(grid.line_count)
        _grow(asm.prog, asm.vm)
        for line, t in t_vars.items():
            tau = first_tau + line - 1
            asm.prog.name_var(tau, f"tau[{line}]")
            asm.prog.set_bound(tau, lo=0.0)
            target = float(sigma[line - 1])
            for sign, tag in ((1.0, "above"), (-1.0, "below")):
                # sign*(t - target) <= tau, as the linear row tau - sign*t + sign*target >= 0
                row = np.zeros(asm.prog.var_count)
                row[tau] = 1.0
                row[t] = -sign
                asm.prog.add_soc(np.zeros((0, asm.prog.var_count)), np.zeros(0),
                                 row, sign * target, name=f"target {tag} line {line}")
            asm.prog.objective[tau] += weights[line - 1]
    elif variant in ("cvar", "meanstd"):
        theta = float(theta)
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        risk_var = _add_cost_risk_var(asm)
        if variant == "cvar":
            asm.prog.objective[risk_var] += theta * cvar_factor(varrho)
        else:
            asm.prog.objective *= (1.0 - theta)
            asm.prog.objective[risk_var] += theta

    return asm.prog, rows_sigma


def assemble_ccopf(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
                   etas=None, sides: int = 12) -> ConicProgram:
    """Chance-constrained OPF: every grid limit held with its 1 - eta level."""
    prog, _ = _build(grid, topo, spec, etas, sides, "base")
    return prog


def assemble_tov(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
                 etas=None, sides: int = 12, psi=0.0) -> ConicProgram:
    """Variability-penalised variant: objective gains psi-weighted flow stds."""
    prog, _ = _build(grid, topo, spec, etas, sides, "tov", psi=psi)
    return prog


def assemble_tav(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
                 sigma_hat=None, etas=None, sides: int = 12, psi=0.0) -> ConicProgram:
    """Target-variance variant: inject sigma_hat, steer per-line stds to sigma."""
    prog, _ = _build(grid, topo, spec, etas, sides, "tav", psi=psi,
                     sigma_hat=sigma_hat)
    return prog


def assemble_cvar(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
                  etas=None, sides: int = 12, theta: float = 0.0,
                  varrho: float = 0.1) -> ConicProgram:
    """Mean/CVaR trade-off: objective cost + theta * cvar_factor * cost-std."""
    prog, _ = _build(grid, topo, spec, etas, sides, "cvar", theta=theta,
                     varrho=varrho)
    return prog


def assemble_mean_std(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
                      etas=None, sides: int = 12, theta: float = 0.0) -> ConicProgram:
    """Mean/std trade-off: objective (1-theta) * cost + theta * cost-std."""
    prog, _ = _build(grid, topo, spec, etas, sides, "meanstd", theta=theta)
    return prog


def default_sigma_hat(topo: TopologyIndex, spec: PrivacySpec) -> np.ndarray:
    """Concentrate each chain segment's noise budget on its top line.

    A segment is a maximal run of lines without branching; the returned
    vector carries sqrt(sum of squared sigmas) of each segment at the
    segment's first (closest-to-root) line and zero elsewhere, so the total
    variance budget is spent exactly.
    """
    sigma = np.asarray(spec.sigma, dtype=float)
    line_count = topo.node_count - 1
    if sigma.shape != (line_count,):
        raise PrivacyError(
            f"privacy spec covers {sigma.size} lines but the topology has {line_count}")
    seg_of = {}
    members: dict[int, list[int]] = {}
    for line in range(1, line_count + 1):
        path = topo.root_path_lines[line]
        parent = path[-2] if len(path) >= 2 else 0  # parent node of node `line`
        if parent == 0 or len(topo.children[parent]) >= 2:
            seg_of[line] = line
            members[line] = [line]
        else:
            top = seg_of[parent]
            seg_of[line] = top
            members[top].append(line)
    out = np.zeros(line_count)
    for top, lines in members.items():
        out[top - 1] = math.sqrt(float(np.sum(sigma[np.array(lines) - 1] ** 2)))
    return out


def flow_std_row(topo: TopologyIndex, rho_p: np.ndarray, line: int,
                 sigma) -> tuple[np.ndarray, float]:
    """Noise-to-flow functional for one line and its standard deviation.

    Returns ``(row, std)`` with the realized flow given by
    ``f~ = f + row @ xi``; the row's own-line coordinate is +1 whenever the
    balancing shares sum to one on each side.  ``sigma`` and the returned
    std share whatever unit ``xi`` uses.
    """
    sigma = np.asarray(sigma, dtype=float)
    mask = np.asarray(topo.T)[:, line - 1] == -1
    row = -np.asarray(rho_p)[mask].sum(axis=0)
    return row, float(np.linalg.norm(row * sigma))


def voltage_std_row(grid: RadialGrid, topo: TopologyIndex, rho_p: np.ndarray,
                    rho_q: np.ndarray, node: int,
                    sigma) -> tuple[np.ndarray, float]:
    """Noise-to-squared-voltage functional for one node and its std.

    ``u~ = u + row @ xi`` with ``xi`` (and ``sigma``) in per-unit of the
    system base.  The substation voltage is fixed, so node 0 is rejected.
    """
    if node == 0:
        raise GridError("substation voltage is deterministic; no noise row exists")
    sigma = np.asarray(sigma, dtype=float)
    S = _subtree_matrix(topo)
    a_p = S @ np.asarray(rho_p)
    a_q = S @ np.asarray(rho_q)
    row = np.zeros(a_p.shape[1])
    for line in topo.root_path_lines[node]:
        idx = line - 1
        row += 2.0 * (grid.r[idx] * a_p[idx] + grid.x[idx] * a_q[idx])
    return row, float(np.linalg.norm(row * sigma))


def expected_quadratic_cost(g, rho_p, c2, sigma) -> float:
    """Closed-form expectation of the quadratic cost under zero-mean noise.

    Evaluates sum_i c2_i g_i^2 + c2_i^2 sum_l rho_p[i,l]^2 sigma_l^2.  The
    second term squares c2 as written in the source expression; the
    Monte-Carlo estimate of E[c2 (g + rho xi)^2] carries c2 to the first
    power instead, and the validation oracle reports both values.
    """
    g = np.asarray(g, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    rho_p = np.asarray(rho_p, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    quad = float(np.sum(c2 * g * g))
    noise = float(np.sum((c2 ** 2)[:, None] * rho_p ** 2 * sigma[None, :] ** 2))
    return quad + noise


def extract_affine(program: ConicProgram, report: SolveReport, grid: RadialGrid,
                   topo: TopologyIndex, sigma_mw) -> AffineSolution:
    """Pull the affine policy out of a solved chance-constrained program.

    Lines that carried no noise get the canonical shares (all of the
    upstream duty on the substation, all of the downstream duty on the
    line's end node) so the balancing identities hold for every line.
    """
    sigma_mw = np.asarray(sigma_mw, dtype=float)
    vm = VarMap(grid.node_count)
    nominal = extract_dispatch(report, vm)
    n, L = grid.node_count, grid.line_count
    alpha = np.zeros((n, L))
    seen = set()
    for var, name in program.names.items():
        if not name.startswith("alpha["):
            continue
        j, m = (int(tok) for tok in name[6:-1].split(","))
        alpha[j, m - 1] = report.primal[var]
        seen.add(m)
    for line in grid.lines:
        if line not in seen:
            alpha[0, line - 1] = 1.0
            alpha[line, line - 1] = 1.0
    T = np.asarray(topo.T, dtype=float)
    rho_p = T * alpha
    rho_q = np.asarray(grid.tan_phi)[:, None] * rho_p
    S = _subtree_matrix(topo)
    a_p = S @ rho_p
    a_q = S @ rho_q
    P = _path_matrix(topo)
    volt_response = 2.0 * P @ (grid.r[:, None] * a_p + grid.x[:, None] * a_q)
    sigma_pu = sigma_mw / grid.base_mva
    return AffineSolution(
        nominal=nominal,
        alpha=alpha,
        rho_p=rho_p,
        rho_q=rho_q,
        sigma=sigma_mw.copy(),
        flow_std=np.linalg.norm(a_p * sigma_mw[None, :], axis=1),
        volt_std=np.linalg.norm(volt_response * sigma_pu[None, :], axis=1),
        gen_std=np.linalg.norm(rho_p * sigma_mw[None, :], axis=1),
        a_p=a_p,
        a_q=a_q,
        volt_response=volt_response,
        grid=grid,
    )


_FAMILIES = ("generator", "voltage", "flow", "balance")


def _dominant_family(program: ConicProgram, report: SolveReport) -> str | None:
    """Constraint family carrying the largest infeasibility-certificate weight."""
    weights: dict[str, float] = {}

    def tally(name: str, weight: float) -> None:
        head = name.split(" ", 1)[0] if name else ""
        if head in ("quadratic", "pin"):
            head = {"quadratic": "generator", "pin": "balance"}[head]
        if head in _FAMILIES:
            weights[head] = weights.get(head, 0.0) + abs(weight)

    if report.dual_eq is not None:
        for name, dual in zip(program.equality_names, report.dual_eq):
            tally(name, dual)
    if report.soc_row_duals is not None:
        for soc, dual in zip(program.soc_rows, report.soc_row_duals):
            tally(soc.name, dual)
    if not weights:
        return None
    return max(weights, key=weights.get)


def solve_ccopf(grid: RadialGrid, topo: TopologyIndex, spec: PrivacySpec,
                etas=None, sides: int = 12, variant: str = "base", *,
                psi=0.0, sigma_hat=None, theta: float = 0.0,
                varrho: float = 0.1, tol: float = None) -> AffineSolution:
    """Assemble, solve, and extract one chance-constrained program.

    Raises :class:`SolveError` unless the optimizer reports an optimal
    point; infeasible programs name the dominant constraint family.
    """
    prog, rows_sigma = _build(grid, topo, spec, etas, sides, variant, psi=psi,
                              sigma_hat=sigma_hat, theta=theta, varrho=varrho)
    report = solve(prog, tol=tol)
    if report.status != "optimal":
        detail = f"solver status {report.status}"
        if report.status == "infeasible":
            family = _dominant_family(prog, report)
            if family:
                detail += f"; dominant constraint family: {family}"
        raise SolveError(f"chance-constrained program did not solve: {detail}",
                         report=report)
    affine = extract_affine(prog, report, grid, topo, rows_sigma)
    if variant == "tav":
        target = _sigma_for(grid, spec)
        slack = TARGET_RTOL * target + TARGET_TOL
        met = bool(np.all(affine.flow_std >= target - slack))
        affine = AffineSolution(
            **{f: getattr(affine, f) for f in (
                "nominal", "alpha", "rho_p", "rho_q", "sigma", "flow_std",
                "volt_std", "gen_std", "a_p", "a_q", "volt_response", "grid")},
            target_sigma=target, target_met=met)
    return affine
