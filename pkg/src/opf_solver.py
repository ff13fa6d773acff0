"""
Branch-flow OPF with the second-order-cone relaxation

Minimizes the generation cost sum(c_i * PG_i), plus a small weight on DG
reactive output, subject to the DistFlow balance and voltage-drop equations,
the relaxed current definition (P^2 + Q^2) / v_j <= l and box bounds, using a
primal-dual interior-point method with an infeasible start. The reported
objective is the active generation cost alone.

Variable vector z = [P (L), Q (L), l (L), v (N), pg (G), qg (G)] in per-unit.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from src.exceptions import InfeasibleOPFError, SolverConvergenceError
from src.grid import GridModel, UncertainSample

logger = logging.getLogger(__name__)

GAP_TOL = 1e-8
FEAS_TOL = 1e-8
MAX_ITER = 120
# accepted on a stalled line search
RELAXED_FEAS_TOL = 1e-7
RELAXED_GAP_TOL = 1e-6

# objective weight of DG reactive output, relative to the largest active cost
REACTIVE_TIE_BREAK = 1e-4

MU = 10.0
ALPHA = 0.01
BETA = 0.5


@dataclass
class OPFSolution:
    """
    Optimal branch-flow state

    Flows are in MW/MVar at the sending end, ell in per-unit squared current,
    v in per-unit squared voltage, generation in MW/MVar keyed by bus id.
    """

    bus_ids: np.ndarray
    line_ends: List[Tuple[int, int]]
    P: np.ndarray
    Q: np.ndarray
    ell: np.ndarray
    v: np.ndarray
    pg: Dict[int, float]
    qg: Dict[int, float]
    objective: float
    residuals: Dict[str, float]
    base_kv: float
    iterations: int = 0

    def voltage_kv(self, bus_id: int) -> float:
        index = int(np.flatnonzero(self.bus_ids == bus_id)[0])
        return float(np.sqrt(self.v[index]) * self.base_kv)

    def to_record(self) -> Dict[str, float]:
        """Flat {quantity: value} view used for Monte Carlo statistics"""
        record: Dict[str, float] = {"objective": self.objective}
        for (j, k), p, q, l in zip(self.line_ends, self.P, self.Q, self.ell):
            record[f"P_{j}_{k}"] = float(p)
            record[f"Q_{j}_{k}"] = float(q)
            record[f"l_{j}_{k}"] = float(l)
        for bus_id, v in zip(self.bus_ids, self.v):
            record[f"v_{bus_id}"] = float(v)
            record[f"V_kv_{bus_id}"] = float(np.sqrt(v) * self.base_kv)
        for bus_id, p in self.pg.items():
            record[f"PG_{bus_id}"] = float(p)
        for bus_id, q in self.qg.items():
            record[f"QG_{bus_id}"] = float(q)
        return record


@dataclass
class _Problem:
    """Linear equalities, box inequalities and cone index maps for one instance"""

    n: int
    L: int
    N: int
    G: int
    A: np.ndarray
    b: np.ndarray
    row_labels: List[str]
    cost: np.ndarray
    box_index: np.ndarray
    box_sign: np.ndarray
    box_bound: np.ndarray
    cone_from: np.ndarray
    z0: np.ndarray
    groups: Dict[str, np.ndarray] = field(default_factory=dict)

    def iP(self) -> np.ndarray:
        return np.arange(self.L)

    def iQ(self) -> np.ndarray:
        return self.L + np.arange(self.L)

    def iL(self) -> np.ndarray:
        return 2 * self.L + np.arange(self.L)

    def iv(self) -> np.ndarray:
        return 3 * self.L + np.arange(self.N)

    def ipg(self) -> np.ndarray:
        return 3 * self.L + self.N + np.arange(self.G)

    def iqg(self) -> np.ndarray:
        return 3 * self.L + self.N + self.G + np.arange(self.G)

    @property
    def m(self) -> int:
        return self.L + self.box_index.size


def _build_problem(grid: GridModel, p_net: np.ndarray, q_net: np.ndarray) -> _Problem:
    L, N = grid.n_lines, grid.n_buses
    gens = grid.generators
    G = gens.size
    n = 3 * L + N + 2 * G
    prob = _Problem(
        n=n, L=L, N=N, G=G, A=np.zeros((0, n)), b=np.zeros(0), row_labels=[],
        cost=np.zeros(n), box_index=np.zeros(0, dtype=int), box_sign=np.zeros(0),
        box_bound=np.zeros(0), cone_from=grid.line_from.copy(), z0=np.zeros(n),
    )
    iP, iQ, iL, iv, ipg, iqg = prob.iP(), prob.iQ(), prob.iL(), prob.iv(), prob.ipg(), prob.iqg()
    gen_of = {int(b): g for g, b in enumerate(gens)}
    ids = grid.bus_ids

    rows: List[np.ndarray] = []
    rhs: List[float] = []
    labels: List[str] = []
    groups: Dict[str, List[int]] = {"balance_p": [], "balance_q": [], "voltage_drop": [], "fixed": []}

    def add(row: np.ndarray, value: float, label: str, group: str) -> None:
        groups[group].append(len(rows))
        rows.append(row)
        rhs.append(value)
        labels.append(label)

    for i in range(L):
        j, k = grid.line_from[i], grid.line_to[i]
        name = f"{ids[j]}-{ids[k]}"
        out = grid.children(k)
        row = np.zeros(n)
        row[iP[i]], row[iL[i]] = 1.0, -grid.r[i]
        row[iP[out]] = -1.0
        if k in gen_of:
            row[ipg[gen_of[k]]] = 1.0
        add(row, p_net[k], f"balance_p[{name}]", "balance_p")
        row = np.zeros(n)
        row[iQ[i]], row[iL[i]] = 1.0, -grid.x[i]
        row[iQ[out]] = -1.0
        if k in gen_of:
            row[iqg[gen_of[k]]] = 1.0
        add(row, q_net[k], f"balance_q[{name}]", "balance_q")
        row = np.zeros(n)
        row[iv[k]], row[iv[j]] = 1.0, -1.0
        row[iP[i]], row[iQ[i]] = 2.0 * grid.r[i], 2.0 * grid.x[i]
        row[iL[i]] = -(grid.r[i] ** 2 + grid.x[i] ** 2)
        add(row, 0.0, f"voltage_drop[{name}]", "voltage_drop")

    s = grid.slack
    head = grid.children(s)
    row = np.zeros(n)
    row[ipg[gen_of[s]]], row[iP[head]] = 1.0, -1.0
    add(row, p_net[s], f"balance_p[slack {ids[s]}]", "balance_p")
    row = np.zeros(n)
    row[iqg[gen_of[s]]], row[iQ[head]] = 1.0, -1.0
    add(row, q_net[s], f"balance_q[slack {ids[s]}]", "balance_q")
    row = np.zeros(n)
    row[iv[s]] = 1.0
    add(row, grid.v_slack, f"v_slack[{ids[s]}]", "fixed")

    z0 = np.zeros(n)
    z0[iv[s]] = grid.v_slack
    box_index: List[int] = []
    box_sign: List[float] = []
    box_bound: List[float] = []

    def add_box(index: int, sign: float, bound: float) -> None:
        box_index.append(index)
        box_sign.append(sign)
        box_bound.append(bound)

    def bounded(index: int, lo: float, hi: float, label: str) -> None:
        if np.isclose(lo, hi, rtol=0.0, atol=1e-14):
            row = np.zeros(n)
            row[index] = 1.0
            add(row, lo, f"fixed[{label}]", "fixed")
            z0[index] = lo
            return
        if np.isfinite(lo):
            add_box(index, -1.0, lo)
        if np.isfinite(hi):
            add_box(index, 1.0, hi)
        z0[index] = 0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else (lo + 1.0 if np.isfinite(lo) else 0.0)

    for b in range(N):
        if b != s:
            bounded(iv[b], grid.vmin[b], grid.vmax[b], f"v_{ids[b]}")
    for g, b in enumerate(gens):
        bounded(ipg[g], grid.pmin[b], grid.pmax[b], f"pg_{ids[b]}")
        bounded(iqg[g], grid.qmin[b], grid.qmax[b], f"qg_{ids[b]}")
    for i in range(L):
        if np.isfinite(grid.lmax[i]):
            add_box(iL[i], 1.0, grid.lmax[i])
            z0[iL[i]] = 0.5 * grid.lmax[i]
        else:
            z0[iL[i]] = 1.0

    cost = np.zeros(n)
    scale = max(float(np.max(grid.cost[gens])), 1e-12)
    cost[ipg] = grid.cost[gens] / scale
    # DG reactive output is unique even where losses are flat in it
    dgs = np.array([g for g, b in enumerate(gens) if b != s], dtype=int)
    cost[iqg[dgs]] = REACTIVE_TIE_BREAK

    prob.A = np.vstack(rows)
    prob.b = np.asarray(rhs)
    prob.row_labels = labels
    prob.cost = cost
    prob.box_index = np.asarray(box_index, dtype=int)
    prob.box_sign = np.asarray(box_sign)
    prob.box_bound = np.asarray(box_bound)
    prob.z0 = z0
    prob.groups = {k: np.asarray(v, dtype=int) for k, v in groups.items()}
    return prob


def _inequalities(prob: _Problem, z: np.ndarray) -> np.ndarray:
    P, Q, ell = z[prob.iP()], z[prob.iQ()], z[prob.iL()]
    v_from = z[prob.iv()[prob.cone_from]]
    cones = (P ** 2 + Q ** 2) / v_from - ell
    boxes = prob.box_sign * (z[prob.box_index] - prob.box_bound)
    return np.concatenate([cones, boxes])


def _in_domain(prob: _Problem, z: np.ndarray) -> bool:
    return bool(np.all(z[prob.iv()[prob.cone_from]] > 0))


def _jacobian(prob: _Problem, z: np.ndarray) -> np.ndarray:
    L = prob.L
    P, Q = z[prob.iP()], z[prob.iQ()]
    ivf = prob.iv()[prob.cone_from]
    v_from = z[ivf]
    D = np.zeros((prob.m, prob.n))
    lines = np.arange(L)
    D[lines, prob.iP()] = 2.0 * P / v_from
    D[lines, prob.iQ()] = 2.0 * Q / v_from
    D[lines, prob.iL()] = -1.0
    D[lines, ivf] = -(P ** 2 + Q ** 2) / v_from ** 2
    D[L + np.arange(prob.box_index.size), prob.box_index] = prob.box_sign
    return D


def _cone_hessian(prob: _Problem, z: np.ndarray, lam_cones: np.ndarray) -> np.ndarray:
    iP, iQ = prob.iP(), prob.iQ()
    ivf = prob.iv()[prob.cone_from]
    P, Q, v = z[iP], z[iQ], z[ivf]
    H = np.zeros((prob.n, prob.n))
    H[iP, iP] += 2.0 * lam_cones / v
    H[iQ, iQ] += 2.0 * lam_cones / v
    np.add.at(H, (iP, ivf), -2.0 * lam_cones * P / v ** 2)
    np.add.at(H, (ivf, iP), -2.0 * lam_cones * P / v ** 2)
    np.add.at(H, (iQ, ivf), -2.0 * lam_cones * Q / v ** 2)
    np.add.at(H, (ivf, iQ), -2.0 * lam_cones * Q / v ** 2)
    np.add.at(H, (ivf, ivf), 2.0 * lam_cones * (P ** 2 + Q ** 2) / v ** 3)
    return H


def _residuals(prob: _Problem, z, lam, nu, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = _inequalities(prob, z)
    r_dual = prob.cost + _jacobian(prob, z).T @ lam + prob.A.T @ nu
    r_cent = -lam * f - 1.0 / t
    r_pri = prob.A @ z - prob.b
    return r_dual, r_cent, r_pri


def _solve_kkt(H: np.ndarray, A: np.ndarray, rhs_top: np.ndarray, rhs_bottom: np.ndarray) -> np.ndarray:
    n, p = H.shape[0], A.shape[0]
    K = np.zeros((n + p, n + p))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([rhs_top, rhs_bottom])
    try:
        return scipy.linalg.solve(K, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        return scipy.linalg.lstsq(K, rhs)[0]


def _interior_point(prob: _Problem, max_iter: int) -> Tuple[np.ndarray, Dict[str, Any]]:
    z = prob.z0.copy()
    f = _inequalities(prob, z)
    if np.any(f >= 0) or not _in_domain(prob, z):
        raise SolverConvergenceError("starting point is not strictly inside the inequalities")
    m = prob.m
    lam = -1.0 / f
    nu = np.zeros(prob.A.shape[0])
    status = "max_iter"
    iteration = 0
    for iteration in range(1, max_iter + 1):
        f = _inequalities(prob, z)
        eta = float(-f @ lam)
        t = MU * m / eta
        r_dual, r_cent, r_pri = _residuals(prob, z, lam, nu, t)
        if np.linalg.norm(r_pri) <= FEAS_TOL and np.linalg.norm(r_dual) <= FEAS_TOL and eta <= GAP_TOL:
            status = "optimal"
            break

        Df = _jacobian(prob, z)
        w = lam / -f
        H = _cone_hessian(prob, z, lam[: prob.L]) + Df.T @ (w[:, None] * Df)
        rhs = -prob.cost - prob.A.T @ nu - (1.0 / t) * (Df.T @ (1.0 / -f))
        step = _solve_kkt(H, prob.A, rhs, -r_pri)
        dz, dnu = step[: prob.n], step[prob.n :]
        if not (np.all(np.isfinite(dz)) and np.all(np.isfinite(dnu))):
            status = "stalled"
            break
        dlam = -lam - 1.0 / (t * f) - lam * (Df @ dz) / f

        negative = dlam < 0
        s = min(1.0, float(np.min(-lam[negative] / dlam[negative]))) if np.any(negative) else 1.0
        s *= 0.99
        while s > 1e-14:
            trial = z + s * dz
            if _in_domain(prob, trial) and np.all(_inequalities(prob, trial) < 0):
                break
            s *= BETA
        norm_now = np.linalg.norm(np.concatenate([r_dual, r_cent, r_pri]))
        while s > 1e-14:
            trial = _residuals(prob, z + s * dz, lam + s * dlam, nu + s * dnu, t)
            if np.linalg.norm(np.concatenate(trial)) <= (1.0 - ALPHA * s) * norm_now:
                break
            s *= BETA
        if s <= 1e-14:
            status = "stalled"
            break
        z, lam, nu = z + s * dz, lam + s * dlam, nu + s * dnu

    f = _inequalities(prob, z)
    eta = float(-f @ lam)
    r_dual = prob.cost + _jacobian(prob, z).T @ lam + prob.A.T @ nu
    r_pri = prob.A @ z - prob.b
    info = {
        "status": status,
        "iterations": iteration,
        "gap": eta,
        "primal_residual": float(np.linalg.norm(r_pri)),
        "dual_residual": float(np.linalg.norm(r_dual)),
        "r_pri": r_pri,
    }
    return z, info


def _capacity_check(grid: GridModel, p_net: np.ndarray, q_net: np.ndarray) -> None:
    gens = grid.generators
    demand = float(p_net.sum())
    violated = []
    if demand > grid.pmax[gens].sum():
        violated.append("aggregate_capacity_p")
    if demand < grid.pmin[gens].sum():
        violated.append("aggregate_minimum_p")
    reactive = float(q_net.sum())
    if reactive > grid.qmax[gens].sum():
        violated.append("aggregate_capacity_q")
    if violated:
        raise InfeasibleOPFError(
            f"net demand {demand * grid.base_mva:.4g} MW / {reactive * grid.base_mva:.4g} MVar cannot be met "
            f"by generation limits",
            violated,
        )


def solve_opf(
    grid: GridModel,
    sample: Optional[UncertainSample] = None,
    max_iter: int = MAX_ITER,
) -> OPFSolution:
    """
    Solve the relaxed branch-flow OPF for one realization of the uncertainty

    Args:
        grid: Radial grid
        sample: Renewable outputs and load perturbation (zero if omitted)
        max_iter: Interior-point iteration cap

    Returns:
        OPFSolution with residual diagnostics

    Raises:
        InfeasibleOPFError: aggregate capacity is insufficient or the primal
            residual cannot be driven to zero
        SolverConvergenceError: iteration cap or stalled line search on a
            problem whose primal residual did vanish
    """
    if sample is None:
        sample = UncertainSample(
            wind=tuple(0.0 for _ in grid.placements.wt), solar=tuple(0.0 for _ in grid.placements.pv)
        )
    p_net, q_net = grid.net_loads(sample)
    _capacity_check(grid, p_net, q_net)
    prob = _build_problem(grid, p_net, q_net)
    z, info = _interior_point(prob, max_iter)

    r_pri = info.pop("r_pri")
    if info["status"] != "optimal":
        if np.max(np.abs(r_pri)) > RELAXED_FEAS_TOL:
            violated = [prob.row_labels[i] for i in np.flatnonzero(np.abs(r_pri) > RELAXED_FEAS_TOL)]
            logger.warning(f"OPF infeasible: {info}")
            raise InfeasibleOPFError(
                f"OPF has no feasible point; {len(violated)} equality rows remain violated", violated
            )
        if info["gap"] > RELAXED_GAP_TOL or info["dual_residual"] > RELAXED_GAP_TOL:
            logger.warning(f"OPF solver did not converge: {info}")
            raise SolverConvergenceError("interior point method did not converge", info)
        logger.debug(f"OPF accepted at reduced accuracy: {info}")

    iP, iQ, iL, iv = prob.iP(), prob.iQ(), prob.iL(), prob.iv()
    P, Q, ell, v = z[iP], z[iQ], z[iL], z[iv]
    pg_pu, qg_pu = z[prob.ipg()], z[prob.iqg()]
    gens = grid.generators
    base = grid.base_mva

    def group_max(name: str) -> float:
        rows = prob.groups[name]
        return float(np.max(np.abs(r_pri[rows]))) if rows.size else 0.0

    residuals = {
        "balance_p": group_max("balance_p"),
        "balance_q": group_max("balance_q"),
        "voltage_drop": group_max("voltage_drop"),
        "relaxation_gap": float(np.max(ell * v[grid.line_from] - P ** 2 - Q ** 2)) if grid.n_lines else 0.0,
    }
    objective = float(grid.cost[gens] @ pg_pu * base)
    return OPFSolution(
        bus_ids=grid.bus_ids.copy(),
        line_ends=[(int(grid.bus_ids[j]), int(grid.bus_ids[k])) for j, k in zip(grid.line_from, grid.line_to)],
        P=P * base,
        Q=Q * base,
        ell=ell,
        v=v,
        pg={int(grid.bus_ids[b]): float(p * base) for b, p in zip(gens, pg_pu)},
        qg={int(grid.bus_ids[b]): float(q * base) for b, q in zip(gens, qg_pu)},
        objective=objective,
        residuals=residuals,
        base_kv=grid.base_kv,
        iterations=info["iterations"],
    )
