"""
Radial Distribution Grid Model

Loads grid documents (JSON or the built-in IEEE 33-bus feeder), validates
radiality and converts everything to per-unit on the grid's base. Internally
voltages are squared magnitudes (v = |V|^2) and currents squared magnitudes
(l = |I|^2), the variables of the branch-flow model.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from src.data_processor import read_json
from src.exceptions import DimensionError, SchemaError, TopologyError
from src.schemas import BusRecord, GridDocument, LineRecord, Placements

logger = logging.getLogger(__name__)

BUILTIN_GRIDS = ("ieee33",)

# bus id, P (MW), Q (MVar)
_IEEE33_LOADS = [
    (1, 0.0, 0.0), (2, 0.1, 0.06), (3, 0.09, 0.04), (4, 0.12, 0.08), (5, 0.06, 0.03),
    (6, 0.06, 0.02), (7, 0.2, 0.1), (8, 0.2, 0.1), (9, 0.06, 0.02), (10, 0.06, 0.02),
    (11, 0.045, 0.03), (12, 0.06, 0.035), (13, 0.06, 0.035), (14, 0.12, 0.08), (15, 0.06, 0.01),
    (16, 0.06, 0.02), (17, 0.06, 0.02), (18, 0.09, 0.04), (19, 0.09, 0.04), (20, 0.09, 0.04),
    (21, 0.09, 0.04), (22, 0.09, 0.04), (23, 0.09, 0.05), (24, 0.42, 0.2), (25, 0.42, 0.2),
    (26, 0.06, 0.025), (27, 0.06, 0.025), (28, 0.06, 0.02), (29, 0.12, 0.07), (30, 0.2, 0.6),
    (31, 0.15, 0.07), (32, 0.21, 0.1), (33, 0.06, 0.04),
]

# from, to, r (ohm), x (ohm)
_IEEE33_LINES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]

IEEE33_AMPACITY_A = 400.0
DG_PMAX_MW = 8.0
DG_QMAX_MVAR = 2.0
DG_COST = 30.0
SLACK_COST = 50.0
SLACK_LIMIT_MW = 100.0
# set-point that puts the mean bus-30 voltage at 12.66 kV under the default uncertainty
IEEE33_SLACK_VOLTAGE = 1.006


@dataclass(frozen=True)
class UncertainSample:
    """Renewable outputs (MW) and the customer's additive load perturbation (MW)"""

    wind: Tuple[float, ...] = (0.0, 0.0)
    solar: Tuple[float, ...] = (0.0, 0.0)
    load_perturbation: float = 0.0


def ieee33_document(
    dg_buses: Sequence[int] = (6, 12),
    placements: Placements = None,
    slack_voltage: float = IEEE33_SLACK_VOLTAGE,
) -> GridDocument:
    """Baran-Wu 33-bus feeder with controllable DGs and renewable placements"""
    placements = placements or Placements()
    base_kv, base_mva = 12.66, 10.0
    i_base = base_mva * 1e6 / (math.sqrt(3.0) * base_kv * 1e3)
    lmax = (IEEE33_AMPACITY_A / i_base) ** 2
    buses = []
    for bus_id, p, q in _IEEE33_LOADS:
        record = {"id": bus_id, "p": p, "q": q}
        if bus_id == 1:
            record.update(
                kind="slack", pmin=0.0, pmax=SLACK_LIMIT_MW,
                qmin=-SLACK_LIMIT_MW, qmax=SLACK_LIMIT_MW, cost=SLACK_COST,
            )
        elif bus_id in dg_buses:
            record.update(kind="dg", pmin=0.0, pmax=DG_PMAX_MW, qmin=0.0, qmax=DG_QMAX_MVAR, cost=DG_COST)
        buses.append(BusRecord(**record))
    lines = [LineRecord(**{"from": f, "to": t, "r": r, "x": x, "lmax": lmax}) for f, t, r, x in _IEEE33_LINES]
    return GridDocument(
        base_kv=base_kv, base_mva=base_mva, slack=1, units="ohm", slack_voltage=slack_voltage,
        buses=buses, lines=lines, placements=placements,
    )


@dataclass
class GridModel:
    """
    Radial grid in per-unit

    Lines are oriented away from the slack bus; line i feeds bus line_to[i].
    Bus arrays are indexed by position in bus_ids.
    """

    bus_ids: np.ndarray
    kinds: List[str]
    p_load: np.ndarray
    q_load: np.ndarray
    pmin: np.ndarray
    pmax: np.ndarray
    qmin: np.ndarray
    qmax: np.ndarray
    vmin: np.ndarray
    vmax: np.ndarray
    cost: np.ndarray
    line_from: np.ndarray
    line_to: np.ndarray
    r: np.ndarray
    x: np.ndarray
    lmax: np.ndarray
    slack: int
    base_kv: float
    base_mva: float
    placements: Placements
    order: np.ndarray = field(default=None)
    # squared
    v_slack: float = 1.0

    @classmethod
    def from_document(cls, doc: GridDocument) -> "GridModel":
        ids = [b.id for b in doc.buses]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate bus ids")
        index = {bus_id: i for i, bus_id in enumerate(ids)}
        if doc.slack not in index:
            raise SchemaError(f"slack bus {doc.slack} is not among the buses")
        head = doc.buses[index[doc.slack]]
        if not head.vmin <= doc.slack_voltage <= head.vmax:
            raise SchemaError(f"slack voltage {doc.slack_voltage} outside [{head.vmin}, {head.vmax}] of bus {doc.slack}")
        for line in doc.lines:
            if line.from_bus not in index or line.to_bus not in index:
                raise SchemaError(f"line {line.from_bus}-{line.to_bus} references an unknown bus")
            if line.from_bus == line.to_bus:
                raise TopologyError(f"line {line.from_bus}-{line.to_bus} is a self loop")
        for placed in list(doc.placements.wt) + list(doc.placements.pv) + [doc.placements.customer]:
            if placed not in index:
                raise SchemaError(f"placement refers to unknown bus {placed}")

        n = len(ids)
        if len(doc.lines) != n - 1:
            raise TopologyError(f"{len(doc.lines)} lines for {n} buses; a radial grid needs {n - 1}")
        rows = [index[line.from_bus] for line in doc.lines]
        cols = [index[line.to_bus] for line in doc.lines]
        adjacency = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
        n_components, _ = connected_components(adjacency, directed=False)
        if n_components != 1:
            raise TopologyError(f"line graph has {n_components} components; it must be a single tree")
        order, predecessors = breadth_first_order(adjacency, index[doc.slack], directed=False, return_predecessors=True)

        z_base = doc.base_kv ** 2 / doc.base_mva
        impedance_scale = 1.0 if doc.units == "pu" else 1.0 / z_base
        # orient every line parent -> child
        parent_of = {int(k): int(predecessors[k]) for k in order[1:]}
        line_from, line_to, r, x, lmax = [], [], [], [], []
        for line, j, k in zip(doc.lines, rows, cols):
            if parent_of.get(k) != j:
                j, k = k, j
            line_from.append(j)
            line_to.append(k)
            r.append(line.r * impedance_scale)
            x.append(line.x * impedance_scale)
            lmax.append(np.inf if line.lmax is None else line.lmax)

        def column(name: str) -> np.ndarray:
            return np.array([getattr(b, name) for b in doc.buses], dtype=float)

        s = doc.base_mva
        return cls(
            bus_ids=np.array(ids),
            kinds=[b.kind for b in doc.buses],
            p_load=column("p") / s,
            q_load=column("q") / s,
            pmin=column("pmin") / s,
            pmax=column("pmax") / s,
            qmin=column("qmin") / s,
            qmax=column("qmax") / s,
            vmin=column("vmin") ** 2,
            vmax=column("vmax") ** 2,
            cost=column("cost"),
            line_from=np.array(line_from, dtype=int),
            line_to=np.array(line_to, dtype=int),
            r=np.array(r),
            x=np.array(x),
            lmax=np.array(lmax),
            slack=index[doc.slack],
            base_kv=doc.base_kv,
            base_mva=doc.base_mva,
            placements=doc.placements,
            order=np.asarray(order, dtype=int),
            v_slack=doc.slack_voltage ** 2,
        )

    @property
    def n_buses(self) -> int:
        return int(self.bus_ids.size)

    @property
    def n_lines(self) -> int:
        return int(self.line_from.size)

    @property
    def z_base(self) -> float:
        return self.base_kv ** 2 / self.base_mva

    def bus_index(self, bus_id: int) -> int:
        matches = np.flatnonzero(self.bus_ids == bus_id)
        if matches.size == 0:
            raise SchemaError(f"unknown bus id {bus_id}")
        return int(matches[0])

    @property
    def generators(self) -> np.ndarray:
        """Indices of buses with a dispatchable injection (slack first)"""
        others = [i for i, kind in enumerate(self.kinds) if kind == "dg"]
        return np.array([self.slack] + others, dtype=int)

    @property
    def feeding_line(self) -> np.ndarray:
        """feeding_line[k] is the line ending at bus k (-1 for the slack)"""
        feed = -np.ones(self.n_buses, dtype=int)
        feed[self.line_to] = np.arange(self.n_lines)
        return feed

    def children(self, bus: int) -> np.ndarray:
        """Lines leaving `bus`"""
        return np.flatnonzero(self.line_from == bus)

    def customer_load_mw(self, sample: UncertainSample) -> float:
        """Customer demand after the additive perturbation, never negative"""
        nominal = self.p_load[self.bus_index(self.placements.customer)] * self.base_mva
        return max(0.0, nominal + sample.load_perturbation)

    def net_loads(self, sample: UncertainSample) -> Tuple[np.ndarray, np.ndarray]:
        """
        Per-unit net active/reactive demand per bus with renewables as negative load

        Returns:
            (p, q) arrays over buses
        """
        if len(sample.wind) != len(self.placements.wt) or len(sample.solar) != len(self.placements.pv):
            raise DimensionError(
                f"sample has {len(sample.wind)} wind / {len(sample.solar)} solar values, grid places "
                f"{len(self.placements.wt)} WT / {len(self.placements.pv)} PV"
            )
        p = self.p_load.copy()
        p[self.bus_index(self.placements.customer)] = self.customer_load_mw(sample) / self.base_mva
        for bus_id, value in zip(self.placements.wt, sample.wind):
            p[self.bus_index(bus_id)] -= value / self.base_mva
        for bus_id, value in zip(self.placements.pv, sample.solar):
            p[self.bus_index(bus_id)] -= value / self.base_mva
        return p, self.q_load.copy()

    def with_customer_load(self, p_mw: float) -> "GridModel":
        """Copy with the customer's nominal active demand replaced"""
        scaled = copy.deepcopy(self)
        scaled.p_load[self.bus_index(self.placements.customer)] = p_mw / self.base_mva
        return scaled

    def with_loads(self, p_pu: np.ndarray, q_pu: np.ndarray) -> "GridModel":
        scaled = copy.deepcopy(self)
        scaled.p_load = np.asarray(p_pu, dtype=float).copy()
        scaled.q_load = np.asarray(q_pu, dtype=float).copy()
        return scaled

    def voltage_kv(self, v_squared: float) -> float:
        return math.sqrt(max(v_squared, 0.0)) * self.base_kv

    def summary(self) -> Dict[str, float]:
        return {
            "buses": self.n_buses,
            "lines": self.n_lines,
            "total_load_mw": float(self.p_load.sum() * self.base_mva),
            "total_load_mvar": float(self.q_load.sum() * self.base_mva),
            "generation_capacity_mw": float(self.pmax[self.generators].sum() * self.base_mva),
        }


def load_grid(source: Union[str, Path], placements: Optional[Placements] = None) -> GridModel:
    """
    Load and validate a radial grid

    Args:
        source: Built-in name ("ieee33") or path to a grid JSON document
        placements: Optional override of the WT/PV/customer placement

    Returns:
        Validated GridModel

    Raises:
        SchemaError: document does not parse or references unknown buses
        TopologyError: lines do not form a tree
    """
    if str(source) in BUILTIN_GRIDS:
        doc = ieee33_document(placements=placements)
    else:
        payload = read_json(source)
        try:
            doc = GridDocument.model_validate(payload)
        except ValidationError as exc:
            raise SchemaError(f"invalid grid document {source}: {exc}") from exc
        if placements is not None:
            doc = doc.model_copy(update={"placements": placements})
    grid = GridModel.from_document(doc)
    logger.info(f"Loaded grid {source}: {grid.n_buses} buses, {grid.n_lines} lines")
    return grid
