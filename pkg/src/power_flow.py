"""
Reference power-flow computations on radial grids

A branch-flow backward/forward sweep solves the exact (non-relaxed) DistFlow
equations for a fixed set of injections. Exhaustive dispatch enumeration on
top of the sweep gives a brute-force OPF optimum for small grids, used to
check the interior-point solver.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.exceptions import ArgumentError, InfeasibleOPFError, SolverConvergenceError
from src.grid import GridModel, UncertainSample

logger = logging.getLogger(__name__)


@dataclass
class SweepResult:
    P: np.ndarray
    Q: np.ndarray
    ell: np.ndarray
    v: np.ndarray
    slack_p: float
    slack_q: float
    iterations: int


def forward_backward_sweep(
    grid: GridModel,
    p_net: np.ndarray,
    q_net: np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 500,
) -> SweepResult:
    """
    Fixed-point sweep of the branch-flow equations

    Args:
        grid: Radial grid
        p_net, q_net: Per-unit net demand per bus (load minus local generation);
            the slack entry is the slack bus's own demand
        tol: Convergence threshold on the change of v and l
        max_iter: Iteration cap

    Returns:
        SweepResult with line flows, squared currents, squared voltages and the
        slack injection that closes the balance (all per-unit)
    """
    feed = grid.feeding_line
    children = [grid.children(b) for b in range(grid.n_buses)]
    downstream = [b for b in grid.order[::-1] if b != grid.slack]
    forward = [b for b in grid.order if b != grid.slack]

    P = np.zeros(grid.n_lines)
    Q = np.zeros(grid.n_lines)
    ell = np.zeros(grid.n_lines)
    v = np.full(grid.n_buses, grid.v_slack)
    for iteration in range(1, max_iter + 1):
        for k in downstream:
            i = feed[k]
            P[i] = p_net[k] + P[children[k]].sum() + grid.r[i] * ell[i]
            Q[i] = q_net[k] + Q[children[k]].sum() + grid.x[i] * ell[i]
        new_ell = (P ** 2 + Q ** 2) / v[grid.line_from]
        new_v = v.copy()
        for k in forward:
            i = feed[k]
            j = grid.line_from[i]
            new_v[k] = (
                new_v[j]
                - 2.0 * (grid.r[i] * P[i] + grid.x[i] * Q[i])
                + (grid.r[i] ** 2 + grid.x[i] ** 2) * new_ell[i]
            )
        if not (np.all(np.isfinite(new_v)) and np.all(np.isfinite(new_ell))) or np.any(new_v <= 0):
            raise SolverConvergenceError("sweep produced non-positive or non-finite voltages", {"iteration": iteration})
        change = max(np.max(np.abs(new_v - v)), np.max(np.abs(new_ell - ell), initial=0.0))
        v, ell = new_v, new_ell
        if change < tol:
            break
    else:
        raise SolverConvergenceError(f"sweep did not converge in {max_iter} iterations", {"change": float(change)})

    # flows consistent with the final currents
    for k in downstream:
        i = feed[k]
        P[i] = p_net[k] + P[children[k]].sum() + grid.r[i] * ell[i]
        Q[i] = q_net[k] + Q[children[k]].sum() + grid.x[i] * ell[i]
    head = children[grid.slack]
    return SweepResult(
        P=P,
        Q=Q,
        ell=ell,
        v=v,
        slack_p=float(p_net[grid.slack] + P[head].sum()),
        slack_q=float(q_net[grid.slack] + Q[head].sum()),
        iterations=iteration,
    )


@dataclass
class DispatchResult:
    objective: float
    pg: Dict[int, float]
    qg: Dict[int, float]
    sweep: SweepResult
    evaluated: int


def _levels(lo: float, hi: float, step: float) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    count = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


def _is_feasible(grid: GridModel, result: SweepResult, tol: float = 1e-9) -> bool:
    s = grid.slack
    others = np.arange(grid.n_buses) != s
    return (
        grid.pmin[s] - tol <= result.slack_p <= grid.pmax[s] + tol
        and grid.qmin[s] - tol <= result.slack_q <= grid.qmax[s] + tol
        and np.all(result.v[others] >= grid.vmin[others] - tol)
        and np.all(result.v[others] <= grid.vmax[others] + tol)
        and np.all(result.ell <= grid.lmax + tol)
    )


def _zero_sample(grid: GridModel) -> UncertainSample:
    return UncertainSample(wind=tuple(0.0 for _ in grid.placements.wt), solar=tuple(0.0 for _ in grid.placements.pv))


def _dispatch(
    grid: GridModel,
    p_base: np.ndarray,
    q_base: np.ndarray,
    setpoints: Mapping[int, Tuple[float, float]],
    tol: float,
) -> Optional[DispatchResult]:
    p_net, q_net = p_base.copy(), q_base.copy()
    for g, (p, q) in setpoints.items():
        p_net[g] -= p
        q_net[g] -= q
    try:
        result = forward_backward_sweep(grid, p_net, q_net)
    except SolverConvergenceError:
        return None
    if not _is_feasible(grid, result, tol):
        return None
    ids = grid.bus_ids
    pg = {int(ids[grid.slack]): result.slack_p}
    pg.update({int(ids[g]): p for g, (p, _) in setpoints.items()})
    qg = {int(ids[grid.slack]): result.slack_q}
    qg.update({int(ids[g]): q for g, (_, q) in setpoints.items()})
    cost = sum(grid.cost[grid.bus_index(b)] * p for b, p in pg.items()) * grid.base_mva
    return DispatchResult(cost, pg, qg, result, 1)


def evaluate_dispatch(
    grid: GridModel,
    setpoints: Mapping[int, Tuple[float, float]],
    sample: Optional[UncertainSample] = None,
    tol: float = 1e-9,
) -> Optional[DispatchResult]:
    """
    Cost and power flow of one DG dispatch

    Args:
        grid: Radial grid
        setpoints: {bus id: (p, q)} per-unit output of each DG; missing DGs produce nothing
        sample: Renewable outputs and load perturbation (zero if omitted)
        tol: Slack on every operating limit

    Returns:
        DispatchResult with the slack closing the balance, or None when the
        sweep diverges or a limit is violated
    """
    p_base, q_base = grid.net_loads(sample or _zero_sample(grid))
    return _dispatch(grid, p_base, q_base, {grid.bus_index(b): pq for b, pq in setpoints.items()}, tol)


def enumerate_dispatch(
    grid: GridModel,
    sample: Optional[UncertainSample] = None,
    step: float = 1e-3,
    max_points: int = 2_000_000,
) -> DispatchResult:
    """
    Brute-force OPF for small grids: every DG set point on a grid of `step`
    (per-unit) is evaluated with the sweep and the cheapest feasible one kept

    Raises:
        ArgumentError: step <= 0 or the enumeration would exceed max_points
        InfeasibleOPFError: no enumerated dispatch is feasible
    """
    if step <= 0:
        raise ArgumentError(f"enumeration step must be positive, got {step}")
    p_base, q_base = grid.net_loads(sample or _zero_sample(grid))
    dgs = [g for g in grid.generators if g != grid.slack]
    axes: List[np.ndarray] = []
    for g in dgs:
        axes.append(_levels(grid.pmin[g], grid.pmax[g], step))
        axes.append(_levels(grid.qmin[g], grid.qmax[g], step))
    total = int(np.prod([a.size for a in axes])) if axes else 1
    if total > max_points:
        raise ArgumentError(f"{total} dispatch points exceed the enumeration cap {max_points}")

    best: Optional[DispatchResult] = None
    for point in itertools.product(*axes):
        setpoints = {g: (point[2 * n], point[2 * n + 1]) for n, g in enumerate(dgs)}
        candidate = _dispatch(grid, p_base, q_base, setpoints, tol=1e-9)
        if candidate is not None and (best is None or candidate.objective < best.objective):
            best = candidate
    if best is None:
        raise InfeasibleOPFError("no enumerated dispatch is feasible", ["enumeration"])
    best.evaluated = total
    logger.debug(f"enumerated {total} dispatch points, best cost {best.objective:.6g}")
    return best
