"""Coupled gas/power network model: loading, preprocessing, validation.

The canonical model file is a YAML document with sections ``gas_nodes``,
``pipes``, ``buses``, ``branches``, ``gtus`` and ``constants``.  Pressures
appear in bar in files and are converted to SI densities on load; mass flows
are kg/s and lengths are metres.  A loaded model is an immutable value object
and can be shared freely between threads.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import ModelError

SOURCE = "source"
SINK = "sink"
VIRTUAL = "virtual"
NODE_KINDS = (SOURCE, SINK, VIRTUAL)

DEFAULT_MAX_SEGMENT_LENGTH = 20_000.0  # m
DEFAULT_VELOCITY = 5.0                 # m/s, replaced by calibration
VELOCITY_FLOOR = 1.0                   # m/s

BAR = 1.0e5  # Pa per bar


def bar_to_pa(p: float) -> float:
    return p * BAR


def pa_to_bar(p: float) -> float:
    return p / BAR


def pressure_to_density(p_pa: float, c_s: float) -> float:
    """Isothermal relation p = c_s^2 rho, inverted.  Rejects non-physical input."""
    rho = p_pa / (c_s * c_s)
    if rho <= 0.0:
        raise ModelError(f"pressure {p_pa} Pa maps to non-positive density")
    return rho


def density_to_pressure(rho: float, c_s: float) -> float:
    """Isothermal relation p = c_s^2 rho (Pa)."""
    return c_s * c_s * rho


def bar_to_density(p_bar: float, c_s: float) -> float:
    return pressure_to_density(bar_to_pa(p_bar), c_s)


def density_to_bar(rho: float, c_s: float) -> float:
    return pa_to_bar(density_to_pressure(rho, c_s))


def mass_flow_rate(rho: float, velocity: float, area: float) -> float:
    """Mass flow through a cross section, rho * v * a."""
    return rho * velocity * area


def flow_velocity(mdot: float, rho: float, area: float) -> float:
    return mdot / (rho * area)


@dataclass(frozen=True)
class GasNode:
    """A gas network node: source (fixed density), sink (offtake), or virtual."""

    id: int
    kind: str
    const_density: float | None = None  # kg/m3, source nodes only
    load: float = 0.0                   # kg/s nominal offtake, sink nodes only
    profile: str | None = None          # load profile reference, sink nodes only


@dataclass(frozen=True)
class PipeSegment:
    """One pipeline segment; ``from_node < to_node`` and both flow states are
    positive in the from->to direction."""

    from_node: int
    to_node: int
    length: float          # m
    diameter: float        # m
    area: float            # m2
    friction: float        # dimensionless
    velocity: float        # |avg gas velocity|, m/s
    ratio_from: float = 1.0  # compressor density ratio applied at the from end
    ratio_to: float = 1.0    # compressor density ratio applied at the to end

    @property
    def key(self) -> tuple[int, int]:
        return (self.from_node, self.to_node)


@dataclass(frozen=True)
class PowerBus:
    id: int
    load_p: float = 0.0         # MW
    load_q: float = 0.0         # MVAr
    gen_p: float | None = None  # MW, None when no generator attached
    gen_v: float | None = None  # voltage setpoint, per-unit
    slack: bool = False
    profile: str | None = None

    @property
    def has_generator(self) -> bool:
        return self.gen_p is not None or self.slack

    @property
    def has_load(self) -> bool:
        return self.load_p != 0.0 or self.load_q != 0.0


@dataclass(frozen=True)
class Branch:
    """Series admittance g + jb plus total line-charging susceptance."""

    from_bus: int
    to_bus: int
    g: float
    b: float
    b_shunt: float = 0.0

    @property
    def key(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)


@dataclass(frozen=True)
class GtuLink:
    """Gas turbine unit: converts gas offtake at ``gas_node`` into electric
    power injected at ``bus`` with a constant coefficient eta (MW.s/kg)."""

    bus: int
    gas_node: int
    eta: float


@dataclass(frozen=True)
class IgesModel:
    """Immutable description of the integrated gas-electric network."""

    gas_nodes: tuple[GasNode, ...]
    pipes: tuple[PipeSegment, ...]
    buses: tuple[PowerBus, ...]
    branches: tuple[Branch, ...]
    gtus: tuple[GtuLink, ...]
    c_s: float           # sound speed, m/s
    dt: float            # time step, s
    s_base: float = 100.0  # MVA

    # -- gas side ------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.gas_nodes)

    @property
    def n_pipes(self) -> int:
        return len(self.pipes)

    @property
    def sources(self) -> tuple[GasNode, ...]:
        return tuple(n for n in self.gas_nodes if n.kind == SOURCE)

    @property
    def sinks(self) -> tuple[GasNode, ...]:
        return tuple(n for n in self.gas_nodes if n.kind == SINK)

    @property
    def virtuals(self) -> tuple[GasNode, ...]:
        return tuple(n for n in self.gas_nodes if n.kind == VIRTUAL)

    @property
    def gas_state_dim(self) -> int:
        return self.n_nodes + 2 * self.n_pipes

    def gas_node(self, node_id: int) -> GasNode:
        for n in self.gas_nodes:
            if n.id == node_id:
                return n
        raise ModelError(f"unknown gas node {node_id}")

    def node_degree(self, node_id: int) -> int:
        return sum(1 for p in self.pipes if node_id in p.key)

    def incident_pipes(self, node_id: int) -> tuple[PipeSegment, ...]:
        return tuple(p for p in self.pipes if node_id in p.key)

    def load_sink_ids(self) -> tuple[int, ...]:
        """Sinks that carry an offtake: nominal load, a profile, or a GTU."""
        gtu_nodes = {g.gas_node for g in self.gtus}
        out = []
        for n in self.sinks:
            if n.load != 0.0 or n.profile is not None or n.id in gtu_nodes:
                out.append(n.id)
        return tuple(out)

    # -- power side ----------------------------------------------------

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def power_state_dim(self) -> int:
        return 2 * self.n_buses

    def bus(self, bus_id: int) -> PowerBus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise ModelError(f"unknown bus {bus_id}")

    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def slack_bus(self) -> PowerBus:
        for b in self.buses:
            if b.slack:
                return b
        raise ModelError("model has no slack bus")

    def gtu_for_gas_node(self, node_id: int) -> GtuLink | None:
        for g in self.gtus:
            if g.gas_node == node_id:
                return g
        return None

    def power_state_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for b in self.buses:
            names.append(f"e_{b.id}")
            names.append(f"f_{b.id}")
        return tuple(names)


# ---------------------------------------------------------------------------
# Loading and serialization
# ---------------------------------------------------------------------------


def _req(section: dict, key: str, where: str):
    if key not in section:
        raise ModelError(f"{where}: missing required field '{key}'")
    return section[key]


def _positive(value: float, name: str, where: str) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise ModelError(f"{where}: {name} must be positive, got {value}")
    return v


def _normalized_segment(a: int, b: int, ratio_a: float, ratio_b: float,
                        **params) -> PipeSegment:
    """Store a segment with from < to, carrying the end ratios with the ends."""
    if a < b:
        return PipeSegment(from_node=a, to_node=b,
                           ratio_from=ratio_a, ratio_to=ratio_b, **params)
    return PipeSegment(from_node=b, to_node=a,
                       ratio_from=ratio_b, ratio_to=ratio_a, **params)


def _parse_gas_node(raw: dict, c_s: float, where: str) -> GasNode:
    nid = int(_req(raw, "id", where))
    kind = str(_req(raw, "kind", where))
    if kind not in NODE_KINDS:
        raise ModelError(f"{where}: unknown node kind '{kind}' "
                         f"(expected one of {NODE_KINDS})")
    density = None
    if kind == SOURCE:
        if "density" in raw:
            density = _positive(raw["density"], "density", where)
        elif "pressure" in raw:
            density = bar_to_density(_positive(raw["pressure"], "pressure", where), c_s)
        else:
            raise ModelError(f"{where}: source node needs 'pressure' (bar) or "
                             f"'density' (kg/m3)")
        if raw.get("load"):
            raise ModelError(f"{where}: source node cannot carry a load")
    if kind == VIRTUAL and (raw.get("load") or raw.get("pressure") or raw.get("density")):
        raise ModelError(f"{where}: virtual node carries neither load nor density")
    load = float(raw.get("load", 0.0))
    if load < 0.0:
        raise ModelError(f"{where}: negative load {load}")
    return GasNode(id=nid, kind=kind, const_density=density, load=load,
                   profile=raw.get("profile"))


def _parse_pipe(raw: dict, defaults: dict, where: str) -> PipeSegment:
    a = int(_req(raw, "from", where))
    b = int(_req(raw, "to", where))
    if a == b:
        raise ModelError(f"{where}: self-loop on node {a}")
    length = _positive(_req(raw, "length", where), "length", where)
    diameter = _positive(_req(raw, "diameter", where), "diameter", where)
    area = raw.get("area")
    area = _positive(area, "area", where) if area is not None \
        else math.pi * diameter * diameter / 4.0
    friction = _positive(raw.get("friction", defaults["gamma"]), "friction", where)
    velocity = _positive(raw.get("velocity", defaults["velocity"]), "velocity", where)
    ratio_a = float(raw.get("ratio_from", 1.0))
    ratio_b = float(raw.get("ratio_to", 1.0))
    if ratio_a < 1.0 or ratio_b < 1.0:
        raise ModelError(f"{where}: compressor ratios must be >= 1")
    return _normalized_segment(a, b, ratio_a, ratio_b, length=length,
                               diameter=diameter, area=area, friction=friction,
                               velocity=velocity)


def _parse_bus(raw: dict, where: str) -> PowerBus:
    bid = int(_req(raw, "id", where))
    gen_p = raw.get("gen_p")
    gen_v = raw.get("gen_v")
    slack = bool(raw.get("slack", False))
    if gen_p is not None:
        gen_p = float(gen_p)
    if gen_v is not None:
        gen_v = _positive(gen_v, "gen_v", where)
    if (gen_p is not None or slack) and gen_v is None:
        raise ModelError(f"{where}: generator bus needs a voltage setpoint 'gen_v'")
    return PowerBus(id=bid, load_p=float(raw.get("load_p", 0.0)),
                    load_q=float(raw.get("load_q", 0.0)), gen_p=gen_p,
                    gen_v=gen_v, slack=slack, profile=raw.get("profile"))


def _parse_branch(raw: dict, where: str) -> Branch:
    a = int(_req(raw, "from", where))
    b = int(_req(raw, "to", where))
    if a == b:
        raise ModelError(f"{where}: self-loop on bus {a}")
    if a > b:
        a, b = b, a
    return Branch(from_bus=a, to_bus=b, g=float(_req(raw, "g", where)),
                  b=float(_req(raw, "b", where)),
                  b_shunt=float(raw.get("b_shunt", 0.0)))


def _parse_gtu(raw: dict, where: str) -> GtuLink:
    return GtuLink(bus=int(_req(raw, "bus", where)),
                   gas_node=int(_req(raw, "gas_node", where)),
                   eta=_positive(_req(raw, "eta", where), "eta", where))


def load_model(path: str | Path) -> IgesModel:
    """Load and cross-check a model file.  The result is not yet preprocessed."""
    path = Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}" if mark is not None else ""
        raise ModelError(f"{path}: YAML parse error{loc}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError(f"{path}: model file must be a mapping")

    consts = doc.get("constants", {})
    c_s = _positive(_req(consts, "c_s", "constants"), "c_s", "constants")
    dt = _positive(_req(consts, "dt", "constants"), "dt", "constants")
    s_base = _positive(consts.get("s_base", 100.0), "s_base", "constants")
    defaults = {
        "gamma": _positive(consts.get("gamma_default", 0.003), "gamma_default",
                           "constants"),
        "velocity": _positive(consts.get("velocity_default", DEFAULT_VELOCITY),
                              "velocity_default", "constants"),
    }

    nodes = tuple(_parse_gas_node(raw, c_s, f"gas_nodes[{i}]")
                  for i, raw in enumerate(doc.get("gas_nodes", [])))
    pipes = tuple(_parse_pipe(raw, defaults, f"pipes[{i}]")
                  for i, raw in enumerate(doc.get("pipes", [])))
    buses = tuple(_parse_bus(raw, f"buses[{i}]")
                  for i, raw in enumerate(doc.get("buses", [])))
    branches = tuple(_parse_branch(raw, f"branches[{i}]")
                     for i, raw in enumerate(doc.get("branches", [])))
    gtus = tuple(_parse_gtu(raw, f"gtus[{i}]")
                 for i, raw in enumerate(doc.get("gtus", [])))

    model = IgesModel(gas_nodes=_sorted_nodes(nodes), pipes=_sorted_pipes(pipes),
                      buses=tuple(sorted(buses, key=lambda b: b.id)),
                      branches=tuple(sorted(branches, key=lambda br: br.key)),
                      gtus=tuple(sorted(gtus, key=lambda g: g.bus)),
                      c_s=c_s, dt=dt, s_base=s_base)
    _check_references(model)
    return model


def _sorted_nodes(nodes: tuple[GasNode, ...]) -> tuple[GasNode, ...]:
    return tuple(sorted(nodes, key=lambda n: n.id))


def _sorted_pipes(pipes: tuple[PipeSegment, ...]) -> tuple[PipeSegment, ...]:
    return tuple(sorted(pipes, key=lambda p: p.key))


def _check_references(model: IgesModel) -> None:
    node_ids = {n.id for n in model.gas_nodes}
    if len(node_ids) != len(model.gas_nodes):
        dup = [i for i, c in Counter(n.id for n in model.gas_nodes).items() if c > 1]
        raise ModelError(f"duplicate gas node ids {dup}")
    bus_ids = {b.id for b in model.buses}
    if len(bus_ids) != len(model.buses):
        dup = [i for i, c in Counter(b.id for b in model.buses).items() if c > 1]
        raise ModelError(f"duplicate bus ids {dup}")
    seen = set()
    for p in model.pipes:
        for end in p.key:
            if end not in node_ids:
                raise ModelError(f"pipe {p.key} references missing gas node {end}")
        if p.key in seen:
            raise ModelError(f"duplicate pipe {p.key}")
        seen.add(p.key)
    seen = set()
    for br in model.branches:
        for end in br.key:
            if end not in bus_ids:
                raise ModelError(f"branch {br.key} references missing bus {end}")
        if br.key in seen:
            raise ModelError(f"duplicate branch {br.key}")
        seen.add(br.key)
    for g in model.gtus:
        if g.bus not in bus_ids:
            raise ModelError(f"GTU references missing bus {g.bus}")
        if g.gas_node not in node_ids:
            raise ModelError(f"GTU references missing gas node {g.gas_node}")


def save_model(model: IgesModel, path: str | Path) -> None:
    """Write a model back into the canonical file layout (densities in kg/m3,
    so re-loading reproduces the model exactly)."""
    doc: dict = {
        "constants": {"c_s": model.c_s, "dt": model.dt, "s_base": model.s_base},
        "gas_nodes": [],
        "pipes": [],
        "buses": [],
        "branches": [],
        "gtus": [],
    }
    for n in model.gas_nodes:
        raw: dict = {"id": n.id, "kind": n.kind}
        if n.const_density is not None:
            raw["density"] = float(n.const_density)
        if n.load:
            raw["load"] = float(n.load)
        if n.profile is not None:
            raw["profile"] = n.profile
        doc["gas_nodes"].append(raw)
    for p in model.pipes:
        raw = {"from": p.from_node, "to": p.to_node, "length": p.length,
               "diameter": p.diameter, "area": p.area, "friction": p.friction,
               "velocity": p.velocity}
        if p.ratio_from != 1.0:
            raw["ratio_from"] = p.ratio_from
        if p.ratio_to != 1.0:
            raw["ratio_to"] = p.ratio_to
        doc["pipes"].append(raw)
    for b in model.buses:
        raw = {"id": b.id}
        if b.load_p:
            raw["load_p"] = b.load_p
        if b.load_q:
            raw["load_q"] = b.load_q
        if b.gen_p is not None:
            raw["gen_p"] = b.gen_p
        if b.gen_v is not None:
            raw["gen_v"] = b.gen_v
        if b.slack:
            raw["slack"] = True
        if b.profile is not None:
            raw["profile"] = b.profile
        doc["buses"].append(raw)
    for br in model.branches:
        raw = {"from": br.from_bus, "to": br.to_bus, "g": br.g, "b": br.b}
        if br.b_shunt:
            raw["b_shunt"] = br.b_shunt
        doc["branches"].append(raw)
    for g in model.gtus:
        doc["gtus"].append({"bus": g.bus, "gas_node": g.gas_node, "eta": g.eta})
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def preprocess(model: IgesModel,
               max_segment_length: float = DEFAULT_MAX_SEGMENT_LENGTH) -> IgesModel:
    """Fold source-fed compressors and split long pipelines into segments.

    Splitting inserts fresh virtual nodes with ids above every existing id so
    the from < to flow convention is preserved; a compressor connecting a
    degree-one source directly to the network is folded by turning the far
    node into a source with the ratio-scaled density and deleting the
    original source.  Idempotent.
    """
    if max_segment_length <= 0.0:
        raise ModelError(f"max_segment_length must be positive, "
                         f"got {max_segment_length}")
    model = _fold_source_compressors(model)
    model = _split_long_pipes(model, max_segment_length)
    return model


def _fold_source_compressors(model: IgesModel) -> IgesModel:
    while True:
        target = None
        for p in model.pipes:
            from_kind = model.gas_node(p.from_node).kind
            to_kind = model.gas_node(p.to_node).kind
            if p.ratio_from > 1.0 and from_kind == SOURCE:
                target = (p, p.from_node, p.to_node, p.ratio_from)
                break
            if p.ratio_to > 1.0 and to_kind == SOURCE:
                target = (p, p.to_node, p.from_node, p.ratio_to)
                break
        if target is None:
            return model
        pipe, source_id, other_id, ratio = target
        source = model.gas_node(source_id)
        other = model.gas_node(other_id)
        if model.node_degree(source_id) != 1:
            raise ModelError(f"cannot fold compressor on pipe {pipe.key}: source "
                             f"{source_id} connects more than one pipe")
        if other.kind != SINK or other.load != 0.0 or other.profile is not None:
            raise ModelError(f"cannot fold compressor on pipe {pipe.key}: node "
                             f"{other_id} must be a load-free sink")
        folded = GasNode(id=other_id, kind=SOURCE,
                         const_density=ratio * source.const_density)
        nodes = tuple(folded if n.id == other_id else n
                      for n in model.gas_nodes if n.id != source_id)
        pipes = tuple(p for p in model.pipes if p.key != pipe.key)
        model = replace(model, gas_nodes=_sorted_nodes(nodes),
                        pipes=_sorted_pipes(pipes))


def _split_long_pipes(model: IgesModel, max_len: float) -> IgesModel:
    next_id = max(n.id for n in model.gas_nodes) + 1 if model.gas_nodes else 1
    new_nodes = list(model.gas_nodes)
    new_pipes: list[PipeSegment] = []
    for p in model.pipes:
        if p.length <= max_len:
            new_pipes.append(p)
            continue
        n_seg = math.ceil(p.length / max_len)
        seg_len = p.length / n_seg
        chain = [p.from_node]
        for _ in range(n_seg - 1):
            new_nodes.append(GasNode(id=next_id, kind=VIRTUAL))
            chain.append(next_id)
            next_id += 1
        chain.append(p.to_node)
        params = dict(length=seg_len, diameter=p.diameter, area=p.area,
                      friction=p.friction, velocity=p.velocity)
        for k in range(n_seg):
            ratio_a = p.ratio_from if k == 0 else 1.0
            ratio_b = p.ratio_to if k == n_seg - 1 else 1.0
            new_pipes.append(_normalized_segment(chain[k], chain[k + 1],
                                                 ratio_a, ratio_b, **params))
    return replace(model, gas_nodes=_sorted_nodes(tuple(new_nodes)),
                   pipes=_sorted_pipes(tuple(new_pipes)))


# ---------------------------------------------------------------------------
# Admittance matrix
# ---------------------------------------------------------------------------


def build_ybus(model: IgesModel) -> tuple[np.ndarray, np.ndarray]:
    """Assemble the nodal admittance matrix and return (G, B) real parts."""
    n = model.n_buses
    index = model.bus_index()
    y = np.zeros((n, n), dtype=complex)
    for br in model.branches:
        i, j = index[br.from_bus], index[br.to_bus]
        ys = br.g + 1j * br.b
        ysh = 1j * br.b_shunt / 2.0
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    return np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def raise_if_failed(self) -> None:
        if self.issues:
            raise ModelError("model validation failed:\n  " +
                             "\n  ".join(self.issues))


def _gas_components(model: IgesModel) -> list[set[int]]:
    adjacency: dict[int, set[int]] = {n.id: set() for n in model.gas_nodes}
    for p in model.pipes:
        adjacency[p.from_node].add(p.to_node)
        adjacency[p.to_node].add(p.from_node)
    seen: set[int] = set()
    components = []
    for start in adjacency:
        if start in seen:
            continue
        stack, comp = [start], set()
        while stack:
            nid = stack.pop()
            if nid in comp:
                continue
            comp.add(nid)
            stack.extend(adjacency[nid] - comp)
        seen |= comp
        components.append(comp)
    return components


def validate_model(model: IgesModel) -> ValidationReport:
    """Structural checks on a preprocessed model.

    Verifies the node classification, the state/equation count identity
    (2*n_P PDE rows plus one boundary row per node), gas graph connectivity,
    per-component source availability, and the GTU cross references.
    """
    issues: list[str] = []
    for n in model.gas_nodes:
        if n.kind not in NODE_KINDS:
            issues.append(f"gas node {n.id}: unclassifiable kind '{n.kind}'")
            continue
        if n.kind == SOURCE:
            if n.const_density is None or n.const_density <= 0.0:
                issues.append(f"gas node {n.id}: source without positive density")
            if n.load:
                issues.append(f"gas node {n.id}: source carries a load")
        if n.kind == VIRTUAL:
            if n.load or n.const_density is not None:
                issues.append(f"gas node {n.id}: virtual node carries data")
            if model.node_degree(n.id) != 2:
                issues.append(f"gas node {n.id}: virtual node must join exactly "
                              f"two segments (degree {model.node_degree(n.id)})")
        if n.kind == SINK and n.const_density is not None:
            issues.append(f"gas node {n.id}: sink carries a constant density")

    n_s, n_si, n_v = len(model.sources), len(model.sinks), len(model.virtuals)
    if n_s + n_si + n_v != model.n_nodes:
        issues.append(f"node classification does not cover the network: "
                      f"{n_s}+{n_si}+{n_v} != {model.n_nodes}")
    n_equations = 2 * model.n_pipes + n_s + n_si + n_v
    if n_equations != model.gas_state_dim:
        issues.append(f"equation count {n_equations} != state count "
                      f"{model.gas_state_dim}")

    for p in model.pipes:
        if not (p.from_node < p.to_node):
            issues.append(f"pipe {p.key}: from >= to violates flow convention")
        for name in ("length", "diameter", "area", "friction", "velocity"):
            if getattr(p, name) <= 0.0:
                issues.append(f"pipe {p.key}: non-positive {name}")

    if model.gas_nodes:
        components = _gas_components(model)
        if len(components) > 1:
            issues.append(f"gas graph is disconnected "
                          f"({len(components)} components)")
        source_ids = {n.id for n in model.sources}
        for comp in components:
            if not comp & source_ids:
                issues.append(f"gas component {sorted(comp)[:6]}... has no source")

    for g in model.gtus:
        node = next((n for n in model.gas_nodes if n.id == g.gas_node), None)
        if node is None:
            issues.append(f"GTU at bus {g.bus}: gas node {g.gas_node} missing")
        elif node.kind != SINK:
            issues.append(f"GTU at bus {g.bus}: gas node {g.gas_node} is "
                          f"{node.kind}, not a sink")
        if g.eta <= 0.0:
            issues.append(f"GTU at bus {g.bus}: non-positive eta")

    if model.buses:
        slack = [b.id for b in model.buses if b.slack]
        if len(slack) != 1:
            issues.append(f"expected exactly one slack bus, found {slack}")
    return ValidationReport(issues=tuple(issues))
