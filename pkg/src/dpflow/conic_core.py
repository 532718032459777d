"""Conic-program container and a dense reference interior-point solver.

Programs have a linear objective, linear equalities, and second-order-cone
rows  ||A z + b||_2 <= c z + d.  Zero-A rows degenerate to linear
inequalities and are folded into the non-negative orthant.  The reference
solver is a homogeneous-self-dual-embedding primal-dual interior-point
method with Nesterov-Todd scaling and Mehrotra predictor-corrector steps,
using dense LU factorizations; it is sized for problems with at most a few
hundred variables.  Any callable with the same contract can be registered
as an alternative backend.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "BuildError",
    "ConicProgram",
    "SocRow",
    "SolveReport",
    "add_soc",
    "dump_program",
    "register_backend",
    "solve",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
_STEP_FRACTION = 0.99


class BuildError(ValueError):
    """Inconsistent dimensions or indices while assembling a program."""


@dataclass
class SocRow:
    """One second-order-cone row ||A z + b|| <= c z + d."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float
    name: str = ""


class ConicProgram:
    """min objective . z  s.t.  equalities, SOC rows, box bounds."""

    def __init__(self, var_count: int):
        if var_count < 1:
            raise BuildError("var_count must be positive")
        self.var_count = var_count
        self.objective = np.zeros(var_count)
        self.equalities: list[tuple[np.ndarray, float]] = []
        self.soc_rows: list[SocRow] = []
        self.bounds: dict[int, tuple[float, float]] = {}
        self.names: dict[int, str] = {}
        self.equality_names: list[str] = []

    # -- assembly -------------------------------------------------------------

    def _check_row(self, row, what: str) -> np.ndarray:
        row = np.asarray(row, dtype=float)
        if row.shape != (self.var_count,):
            raise BuildError(
                f"{what}: expected a length-{self.var_count} coefficient row, "
                f"got shape {row.shape}"
            )
        return row

    def add_equality(self, row, rhs: float, name: str = "") -> int:
        self.equalities.append((self._check_row(row, "equality"), float(rhs)))
        self.equality_names.append(name)
        return len(self.equalities) - 1

    def add_soc(self, A, b, c, d: float, name: str = "") -> int:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, self.var_count)
        if A.shape[1] != self.var_count:
            raise BuildError(
                f"SOC row: A has {A.shape[1]} columns, program has {self.var_count} variables"
            )
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if b.shape != (A.shape[0],):
            raise BuildError(f"SOC row: b has shape {b.shape}, A has {A.shape[0]} rows")
        c = self._check_row(c, "SOC row c")
        self.soc_rows.append(SocRow(A=A, b=b, c=c, d=float(d), name=name))
        return len(self.soc_rows) - 1

    def set_bound(self, var: int, lo: float = -math.inf, hi: float = math.inf) -> None:
        if not 0 <= var < self.var_count:
            raise BuildError(f"bound: no variable {var}")
        if lo > hi:
            raise BuildError(f"bound: lo {lo} exceeds hi {hi} for variable {var}")
        self.bounds[var] = (float(lo), float(hi))

    def name_var(self, var: int, label: str) -> None:
        if not 0 <= var < self.var_count:
            raise BuildError(f"name: no variable {var}")
        self.names[var] = label


def add_soc(program: ConicProgram, A, b, c, d: float, name: str = "") -> int:
    """Append ||A z + b|| <= c z + d to the program; returns a stable row id."""
    return program.add_soc(A, b, c, d, name)


@dataclass
class SolveReport:
    """Solver outcome: status, primal point, objective, KKT residuals.

    ``status`` is one of optimal / infeasible / unbounded / max-iterations.
    ``soc_row_duals`` carries one non-negative weight per SOC row (the dual
    block magnitude), and ``dual_eq`` the equality multipliers; for an
    infeasible status these form the certificate that priced out the
    constraints.
    """

    status: str
    primal: np.ndarray
    objective_value: float
    kkt_residuals: dict
    iterations: int
    dual_eq: np.ndarray = field(default=None, repr=False)
    soc_row_duals: np.ndarray = field(default=None, repr=False)


# -- compilation to (c, A, b, G, h, cones) ------------------------------------


def _compile(prog: ConicProgram):
    """Lower to  min c.x  s.t.  Ax=b,  Gx + s = h,  s in orthant x SOCs.

    Returns (c, A, b, G, h, ml, blocks, soc_map) where blocks is a list of
    (offset, size) for the SOC part and soc_map locates each original SOC
    row in the compiled cone ("lin", orthant-offset) or ("soc", block-index).
    """
    n = prog.var_count
    lin_G, lin_h = [], []
    soc_G, soc_h, blocks = [], [], []
    soc_map = []

    for var, (lo, hi) in sorted(prog.bounds.items()):
        if math.isfinite(lo):
            row = np.zeros(n)
            row[var] = -1.0
            lin_G.append(row)
            lin_h.append(-lo)
        if math.isfinite(hi):
            row = np.zeros(n)
            row[var] = 1.0
            lin_G.append(row)
            lin_h.append(hi)

    trivially_infeasible = False
    for soc in prog.soc_rows:
        live = np.abs(soc.A).sum(axis=1) > 0.0
        const = ~live & (soc.b != 0.0)
        if not live.any():
            # wholly degenerate: c z + d >= ||constant part||
            cnorm = float(np.linalg.norm(soc.b[const]))
            if not soc.c.any():
                # no variables left at all: a constant truth or falsehood
                soc_map.append(("drop", -1))
                if soc.d < cnorm:
                    trivially_infeasible = True
                continue
            lin_G.append(-soc.c)
            lin_h.append(soc.d - cnorm)
            soc_map.append(("lin", len(lin_h) - 1))
        else:
            keep = live | const
            A = soc.A[keep]
            b = soc.b[keep]
            G_blk = -np.vstack([soc.c[None, :], A])
            h_blk = np.concatenate([[soc.d], b])
            soc_map.append(("soc", len(blocks)))
            blocks.append(G_blk.shape[0])
            soc_G.append(G_blk)
            soc_h.append(h_blk)

    ml = len(lin_h)
    G_parts = []
    h_parts = []
    if ml:
        G_parts.append(np.vstack(lin_G))
        h_parts.append(np.array(lin_h))
    G_parts.extend(soc_G)
    h_parts.extend(soc_h)
    if G_parts:
        G = np.vstack(G_parts)
        h = np.concatenate(h_parts)
    else:
        G = np.zeros((0, n))
        h = np.zeros(0)

    offsets = []
    pos = ml
    for size in blocks:
        offsets.append((pos, size))
        pos += size

    if prog.equalities:
        A = np.vstack([row for row, _ in prog.equalities])
        b = np.array([rhs for _, rhs in prog.equalities])
    else:
        A = np.zeros((0, n))
        b = np.zeros(0)

    return prog.objective.copy(), A, b, G, h, ml, offsets, soc_map, trivially_infeasible


# -- cone algebra -------------------------------------------------------------


def _jordan_mul(u, v, ml, blocks):
    out = np.empty_like(u)
    out[:ml] = u[:ml] * v[:ml]
    for off, size in blocks:
        u0, u1 = u[off], u[off + 1:off + size]
        v0, v1 = v[off], v[off + 1:off + size]
        out[off] = u0 * v0 + u1 @ v1
        out[off + 1:off + size] = u0 * v1 + v0 * u1
    return out


def _jordan_div(lam, d, ml, blocks):
    """Solve lam o x = d for x."""
    out = np.empty_like(d)
    out[:ml] = d[:ml] / lam[:ml]
    for off, size in blocks:
        l0, l1 = lam[off], lam[off + 1:off + size]
        d0, d1 = d[off], d[off + 1:off + size]
        det = l0 * l0 - l1 @ l1
        x0 = (l0 * d0 - l1 @ d1) / det
        out[off] = x0
        out[off + 1:off + size] = (d1 - x0 * l1) / l0
    return out


def _cone_identity(m, ml, blocks):
    e = np.zeros(m)
    e[:ml] = 1.0
    for off, _ in blocks:
        e[off] = 1.0
    return e


def _max_step(u, du, ml, blocks):
    """Largest t with u + t*du staying in the cone (u strictly interior)."""
    t = math.inf
    neg = du[:ml] < 0
    if neg.any():
        t = float(np.min(u[:ml][neg] / -du[:ml][neg]))
    for off, size in blocks:
        u0, u1 = u[off], u[off + 1:off + size]
        d0, d1 = du[off], du[off + 1:off + size]
        a = d0 * d0 - d1 @ d1
        b = 2.0 * (u0 * d0 - u1 @ d1)
        c0 = u0 * u0 - u1 @ u1
        roots = []
        if abs(a) < 1e-14 * max(1.0, d0 * d0 + d1 @ d1):
            if b < 0:
                roots.append(-c0 / b)
        else:
            disc = b * b - 4.0 * a * c0
            if disc >= 0.0:
                sq = math.sqrt(disc)
                q = -(b + math.copysign(sq, b)) / 2.0
                for r in (q / a, c0 / q if q != 0.0 else math.inf):
                    if r > 0.0:
                        roots.append(r)
        if roots:
            t = min(t, min(roots))
    return t


class _Scaling:
    """Nesterov-Todd scaling W with lam = W z = W^{-1} s."""

    def __init__(self, s, z, ml, blocks):
        self.ml = ml
        self.blocks = blocks
        self.w_l = np.sqrt(s[:ml] / z[:ml])
        self.block_data = []
        for off, size in blocks:
            s0, s1 = s[off], s[off + 1:off + size]
            z0, z1 = z[off], z[off + 1:off + size]
            det_s = s0 * s0 - s1 @ s1
            det_z = z0 * z0 - z1 @ z1
            if det_s <= 0.0 or det_z <= 0.0:
                raise FloatingPointError("iterate left the cone interior")
            sq_s, sq_z = math.sqrt(det_s), math.sqrt(det_z)
            sb0, sb1 = s0 / sq_s, s1 / sq_s
            zb0, zb1 = z0 / sq_z, z1 / sq_z
            gamma = math.sqrt((1.0 + sb0 * zb0 + sb1 @ zb1) / 2.0)
            wb0 = (sb0 + zb0) / (2.0 * gamma)
            wb1 = (sb1 - zb1) / (2.0 * gamma)
            eta = math.sqrt(sq_s / sq_z)
            self.block_data.append((off, size, eta, wb0, wb1))
        lam = self.mul_w(z)
        self.lam = lam

    def _apply(self, x, invert: bool):
        out = np.array(x, dtype=float, copy=True)
        if invert:
            out[:self.ml] = x[:self.ml] / self.w_l
        else:
            out[:self.ml] = x[:self.ml] * self.w_l
        for off, size, eta, wb0, wb1 in self.block_data:
            x0, x1 = x[off], x[off + 1:off + size]
            if invert:
                dot = wb1 @ x1
                top = wb0 * x0 - dot
                bot = x1 + wb1 * (dot / (1.0 + wb0) - x0)
                out[off] = top / eta
                out[off + 1:off + size] = bot / eta
            else:
                dot = wb1 @ x1
                top = wb0 * x0 + dot
                bot = x1 + wb1 * (dot / (1.0 + wb0) + x0)
                out[off] = top * eta
                out[off + 1:off + size] = bot * eta
        return out

    def mul_w(self, x):
        return self._apply(x, invert=False)

    def mul_winv(self, x):
        return self._apply(x, invert=True)

    def apply_winv_matrix(self, G):
        """W^{-1} G with G given row-wise (returns a new matrix)."""
        B = np.array(G, dtype=float, copy=True)
        B[:self.ml] /= self.w_l[:, None]
        for off, size, eta, wb0, wb1 in self.block_data:
            X0 = G[off]
            X1 = G[off + 1:off + size]
            dot = wb1 @ X1
            top = wb0 * X0 - dot
            bot = X1 + np.outer(wb1, dot / (1.0 + wb0) - X0)
            B[off] = top / eta
            B[off + 1:off + size] = bot / eta
        return B


# -- reference HSDE interior-point solver -------------------------------------


class _KKT:
    """Factorization of [[B'B, A'], [A, 0]] with B = W^{-1} G, plus solves."""

    def __init__(self, A, G, scaling: _Scaling):
        self.A = A
        self.G = G
        self.scaling = scaling
        self.B = scaling.apply_winv_matrix(G)
        n = G.shape[1]
        p = A.shape[0]
        H = self.B.T @ self.B
        M = np.zeros((n + p, n + p))
        M[:n, :n] = H
        M[:n, n:] = A.T
        M[n:, :n] = A
        self.M = M
        scale = max(1.0, float(np.abs(H).max()) if H.size else 1.0)
        reg = 1e-12 * scale
        for attempt in range(4):
            R = M.copy()
            R[:n, :n] += reg * np.eye(n)
            if p:
                R[n:, n:] -= reg * np.eye(p)
            try:
                self.lu = scipy.linalg.lu_factor(R)
                break
            except (scipy.linalg.LinAlgError, ValueError):
                reg *= 1e3
                if attempt == 3:
                    raise FloatingPointError("KKT factorization failed")
        self.n, self.p = n, p

    def _saddle(self, r1, r2):
        rhs = np.concatenate([r1, r2])
        sol = scipy.linalg.lu_solve(self.lu, rhs)
        # one round of iterative refinement against the unregularized matrix
        resid = rhs - self.M @ sol
        sol += scipy.linalg.lu_solve(self.lu, resid)
        return sol[:self.n], sol[self.n:]

    def _solve_once(self, bx, by, bz):
        wz = self.scaling.mul_winv(bz)
        vx, vy = self._saddle(bx + self.B.T @ wz, by)
        vz = self.scaling.mul_winv(self.B @ vx - wz)
        return vx, vy, vz

    def solve(self, bx, by, bz):
        """Solve [[0,A',G'],[A,0,0],[G,0,-W^2]] (vx,vy,vz) = (bx,by,bz).

        The elimination of vz loses accuracy once the scaling gets
        ill-conditioned near convergence, so refine against the full
        3x3 system rather than only the inner saddle solve.
        """
        vx, vy, vz = self._solve_once(bx, by, bz)
        for _ in range(2):
            w2vz = self.scaling.mul_w(self.scaling.mul_w(vz))
            r1 = bx - (self.A.T @ vy + self.G.T @ vz)
            r2 = by - self.A @ vx
            r3 = bz - (self.G @ vx - w2vz)
            ex, ey, ez = self._solve_once(r1, r2, r3)
            vx += ex
            vy += ey
            vz += ez
        return vx, vy, vz


def _lp_no_cone(c, A, b):
    """Equality-only fallback: optimal iff c lies in range(A'), else unbounded."""
    if A.shape[0] == 0:
        if np.allclose(c, 0.0):
            return SolveReport("optimal", np.zeros(c.shape[0]), 0.0,
                               {"primal": 0.0, "dual": 0.0, "gap": 0.0}, 0)
        return SolveReport("unbounded", np.zeros(c.shape[0]), -math.inf,
                           {"primal": 0.0, "dual": math.inf, "gap": math.inf}, 0)
    x, res, _, _ = np.linalg.lstsq(A, b, rcond=None)
    if not np.allclose(A @ x, b, atol=1e-9):
        return SolveReport("infeasible", x, math.nan,
                           {"primal": math.inf, "dual": 0.0, "gap": math.inf}, 0)
    y, _, _, _ = np.linalg.lstsq(A.T, -c, rcond=None)
    if np.allclose(A.T @ y, -c, atol=1e-9):
        return SolveReport("optimal", x, float(c @ x),
                           {"primal": 0.0, "dual": 0.0, "gap": 0.0}, 0,
                           dual_eq=y, soc_row_duals=np.zeros(0))
    return SolveReport("unbounded", x, -math.inf,
                       {"primal": 0.0, "dual": math.inf, "gap": math.inf}, 0)


def _solve_reference(prog: ConicProgram, tol: float, max_iter: int) -> SolveReport:
    c, A, b, G, h, ml, blocks, soc_map, trivially_infeasible = _compile(prog)
    # normalize the objective so huge penalty weights keep mu near unit scale;
    # primal iterates are unaffected, duals and cost are scaled back on exit
    c_scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    c = c / c_scale
    n = c.shape[0]
    m = G.shape[0]
    p = A.shape[0]
    if trivially_infeasible:
        return SolveReport("infeasible", np.zeros(n), math.nan,
                           {"primal": math.inf, "dual": 0.0, "gap": math.inf}, 0,
                           dual_eq=np.zeros(p), soc_row_duals=np.zeros(len(soc_map)))
    if m == 0:
        return _lp_no_cone(c, A, b)

    e = _cone_identity(m, ml, blocks)
    deg = ml + len(blocks)
    norm_b = 1.0 + np.linalg.norm(b)
    norm_h = 1.0 + np.linalg.norm(h)
    norm_c = 1.0 + np.linalg.norm(c)

    # interior starting point from two least-squares solves at W = I
    try:
        kkt0 = _KKT(A, G, _Scaling(e, e, ml, blocks))
        x, _, _ = kkt0.solve(np.zeros(n), b, h)
        s_try = h - G @ x
        gap_p = _cone_gap(s_try, ml, blocks)
        s = s_try if gap_p < 0 else _cone_shift(s_try, 1.0 + gap_p, ml, blocks)
        xd, y, _ = kkt0.solve(-c, np.zeros(p), np.zeros(m))
        z_try = -(G @ xd)
        gap_d = _cone_gap(z_try, ml, blocks)
        z = z_try if gap_d < 0 else _cone_shift(z_try, 1.0 + gap_d, ml, blocks)
    except FloatingPointError:
        x = np.zeros(n)
        y = np.zeros(p)
        s = e.copy()
        z = e.copy()
    tau, kappa = 1.0, 1.0

    best = None
    best_score = math.inf
    status = "max-iterations"
    iters = 0
    for iters in range(1, max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rtau = c @ x + b @ y + h @ z + kappa
        mu = (s @ z + tau * kappa) / (deg + 1)

        pcost = c @ x / tau
        gap = s @ z / (tau * tau)
        relgap = gap / max(1.0, abs(pcost))
        pres = max(np.linalg.norm(ry) / norm_b, np.linalg.norm(rz) / norm_h) / tau
        dres = np.linalg.norm(rx) / norm_c / tau
        score = max(pres, dres, min(gap, relgap))
        if score < best_score:
            best_score = score
            best = (x / tau, y / tau, z / tau, pcost, pres, dres, min(gap, relgap))

        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            status = "optimal"
            best = (x / tau, y / tau, z / tau, pcost, pres, dres, min(gap, relgap))
            break

        # infeasibility / unboundedness certificates of the embedding
        denom = -(b @ y + h @ z)
        if denom > 0:
            pinfres = np.linalg.norm(A.T @ y + G.T @ z) / denom / norm_c
            if pinfres <= tol * 10 or (pinfres <= 1e-6 and tau <= 1e-8 * max(1.0, kappa)):
                status = "infeasible"
                best = (x / max(tau, 1e-300), y / denom, z / denom,
                        math.nan, pinfres, 0.0, math.inf)
                break
        if c @ x < 0:
            dinf_num = max(np.linalg.norm(A @ x), np.linalg.norm(G @ x + s))
            dinfres = dinf_num / (-(c @ x)) / max(norm_b, norm_h)
            if dinfres <= tol * 10 or (dinfres <= 1e-6 and tau <= 1e-8 * max(1.0, kappa)):
                status = "unbounded"
                best = (x / (-(c @ x)), y, z, -math.inf, 0.0, dinfres, math.inf)
                break

        try:
            scal = _Scaling(s, z, ml, blocks)
            kkt = _KKT(A, G, scal)
            x2, y2, z2 = kkt.solve(-c, b, h)
        except FloatingPointError:
            break
        lam = scal.lam
        lam_sq = _jordan_mul(lam, lam, ml, blocks)

        def newton(bx, by, bz, btau, ds, dkappa):
            dsl = _jordan_div(lam, ds, ml, blocks)
            bz_t = bz - scal.mul_w(dsl)
            x1, y1, z1 = kkt.solve(bx, by, bz_t)
            num = btau - dkappa / tau - (c @ x1 + b @ y1 + h @ z1)
            den = (c @ x2 + b @ y2 + h @ z2) - kappa / tau
            dtau = num / den
            dx = x1 + dtau * x2
            dy = y1 + dtau * y2
            dz = z1 + dtau * z2
            dsv = scal.mul_w(dsl - scal.mul_w(dz))
            dk = (dkappa - kappa * dtau) / tau
            return dx, dy, dz, dtau, dsv, dk

        try:
            # predictor
            dxa, dya, dza, dtaua, dsa, dka = newton(
                -rx, -ry, -rz, -rtau, -lam_sq, -tau * kappa)
            alpha = _step_limit(s, z, tau, kappa, dsa, dza, dtaua, dka, ml, blocks)
            sigma = (1.0 - min(alpha, 1.0)) ** 3
            # corrector
            comb = -lam_sq - _jordan_mul(
                scal.mul_winv(dsa), scal.mul_w(dza), ml, blocks)
            comb += sigma * mu * e
            dk_rhs = -tau * kappa - dtaua * dka + sigma * mu
            f = 1.0 - sigma
            dx, dy, dz, dtau, ds, dk = newton(
                -f * rx, -f * ry, -f * rz, -f * rtau, comb, dk_rhs)
            alpha = _step_limit(s, z, tau, kappa, ds, dz, dtau, dk, ml, blocks)
        except FloatingPointError:
            break
        step = min(1.0, _STEP_FRACTION * alpha)
        x += step * dx
        y += step * dy
        z += step * dz
        s += step * ds
        tau += step * dtau
        kappa += step * dk
        if tau <= 0 or kappa <= 0 or not np.isfinite(tau):
            break

    xr, yr, zr, obj, pres, dres, gapr = best
    if status == "max-iterations" and best_score <= tol * 100:
        # Degenerate corners (non-strictly-complementary optima) stall the
        # path a hair above tol; accept the best iterate when it is within
        # two orders of the requested accuracy, as mainstream IPMs do.
        status = "optimal"
    if status in ("optimal", "max-iterations"):
        obj = obj * c_scale
        yr = yr * c_scale
        zr = zr * c_scale
    residuals = {"primal": float(pres), "dual": float(dres), "gap": float(gapr)}
    report = SolveReport(
        status=status,
        primal=xr,
        objective_value=float(obj),
        kkt_residuals=residuals,
        iterations=iters,
        dual_eq=yr,
        soc_row_duals=_soc_duals(zr, ml, blocks, soc_map),
    )
    return report


def _cone_gap(u, ml, blocks):
    """How far u is from the cone interior (negative means interior)."""
    worst = -math.inf
    if ml:
        worst = max(worst, float(-u[:ml].min()))
    for off, size in blocks:
        worst = max(worst, float(np.linalg.norm(u[off + 1:off + size]) - u[off]))
    return worst


def _cone_shift(u, amount, ml, blocks):
    out = np.array(u, copy=True)
    out[:ml] += amount
    for off, _ in blocks:
        out[off] += amount
    return out


def _step_limit(s, z, tau, kappa, ds, dz, dtau, dk, ml, blocks):
    alpha = min(_max_step(s, ds, ml, blocks), _max_step(z, dz, ml, blocks))
    if dtau < 0:
        alpha = min(alpha, tau / -dtau)
    if dk < 0:
        alpha = min(alpha, kappa / -dk)
    return alpha


def _soc_duals(z, ml, blocks, soc_map):
    out = np.zeros(len(soc_map))
    for row_id, (kind, idx) in enumerate(soc_map):
        if kind == "lin":
            out[row_id] = abs(z[idx])
        elif kind == "soc":
            off, size = blocks[idx]
            out[row_id] = float(np.linalg.norm(z[off:off + size]))
    return out


# -- public entry points ------------------------------------------------------

_BACKENDS: dict[str, callable] = {}


def register_backend(name: str, fn) -> None:
    """Register an alternative solve backend with the same contract."""
    _BACKENDS[name] = fn


def solve(program: ConicProgram, tol: float = None, max_iter: int = DEFAULT_MAX_ITER,
          backend: str = None) -> SolveReport:
    """Solve the program; deterministic for identical input.

    ``tol`` defaults to the DPFLOW_SOLVER_TOL environment variable when set,
    else 1e-8.  Numerical breakdown yields a max-iterations report with the
    last residuals, never an exception.
    """
    if tol is None:
        tol = float(os.environ.get("DPFLOW_SOLVER_TOL", DEFAULT_TOL))
    if tol <= 0:
        raise BuildError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise BuildError(f"max_iter must be at least 1, got {max_iter}")
    if backend is not None:
        return _BACKENDS[backend](program, tol, max_iter)
    with np.errstate(divide="raise", over="raise", invalid="raise", under="ignore"):
        try:
            return _solve_reference(program, tol, max_iter)
        except FloatingPointError:
            log.warning("solver hit a numerical breakdown; reporting max-iterations")
            return SolveReport(
                status="max-iterations",
                primal=np.zeros(program.var_count),
                objective_value=math.nan,
                kkt_residuals={"primal": math.inf, "dual": math.inf, "gap": math.inf},
                iterations=0,
            )


def dump_program(prog: ConicProgram) -> str:
    """Plain-text dump, one section per cone, for debugging."""
    lines = [f"VARS {prog.var_count}"]
    for var, label in sorted(prog.names.items()):
        lines.append(f"  # x{var} = {label}")
    lines.append("MIN " + " ".join(
        f"{v:+.12g}*x{i}" for i, v in enumerate(prog.objective) if v != 0.0))
    lines.append(f"EQUALITIES {len(prog.equalities)}")
    for k, (row, rhs) in enumerate(prog.equalities):
        terms = " ".join(f"{v:+.12g}*x{i}" for i, v in enumerate(row) if v != 0.0)
        tag = prog.equality_names[k]
        lines.append(f"  {terms} == {rhs:.12g}" + (f"  # {tag}" if tag else ""))
    lines.append(f"BOUNDS {len(prog.bounds)}")
    for var, (lo, hi) in sorted(prog.bounds.items()):
        lines.append(f"  {lo:.12g} <= x{var} <= {hi:.12g}")
    for k, soc in enumerate(prog.soc_rows):
        lines.append(f"CONE {k} rows={soc.A.shape[0]}" +
                     (f"  # {soc.name}" if soc.name else ""))
        for i in range(soc.A.shape[0]):
            terms = " ".join(f"{v:+.12g}*x{j}" for j, v in enumerate(soc.A[i]) if v != 0.0)
            lines.append(f"  row {terms} {soc.b[i]:+.12g}")
        terms = " ".join(f"{v:+.12g}*x{j}" for j, v in enumerate(soc.c) if v != 0.0)
        lines.append(f"  <= {terms} {soc.d:+.12g}")
    return "\n".join(lines) + "\n"
