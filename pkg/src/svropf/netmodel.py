"""Multi-phase feeder description: domain types, JSON ingestion, radial ordering.

All quantities held by a :class:`Network` are per unit. Matrices and vectors
attached to a bus or an edge are indexed by that element's present phases in
a-b-c order.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import CycleError, PhaseMismatch, SchemaError, UnitsError
from .svrgain import SVR_TYPES, VARIANTS, SvrSpec

PHASE_NAMES = "abc"
SWITCH_IMPEDANCE = 1e-6


class PhaseMask:
    """Ordered subset of {a, b, c}."""

    __slots__ = ("phases",)

    def __init__(self, phases: Iterable[int] | str):
        if isinstance(phases, str):
            try:
                idx = sorted({PHASE_NAMES.index(p) for p in phases.lower()})
            except ValueError:
                raise PhaseMismatch(f"invalid phase string {phases!r}") from None
        else:
            idx = sorted(set(int(p) for p in phases))
        if not idx or idx[0] < 0 or idx[-1] > 2:
            raise PhaseMismatch(f"invalid phase set {phases!r}")
        self.phases = tuple(idx)

    def __len__(self):
        return len(self.phases)

    def __iter__(self):
        return iter(self.phases)

    def __contains__(self, p):
        return p in self.phases

    def __eq__(self, other):
        return isinstance(other, PhaseMask) and self.phases == other.phases

    def __hash__(self):
        return hash(self.phases)

    def __repr__(self):
        return f"PhaseMask({str(self)!r})"

    def __str__(self):
        return "".join(PHASE_NAMES[p] for p in self.phases)

    def issubset(self, other: "PhaseMask") -> bool:
        return set(self.phases) <= set(other.phases)

    def intersection(self, other: "PhaseMask") -> "PhaseMask":
        common = set(self.phases) & set(other.phases)
        if not common:
            raise PhaseMismatch(f"phase sets {self} and {other} are disjoint")
        return PhaseMask(common)

    def index(self, p: int) -> int:
        return self.phases.index(p)

    def positions(self, sub: "PhaseMask") -> list[int]:
        """Local indices of ``sub``'s phases inside this mask."""
        return [self.phases.index(p) for p in sub.phases]

    @staticmethod
    def right(p: int) -> int:
        return (p + 1) % 3

    @staticmethod
    def left(p: int) -> int:
        return (p - 1) % 3

    def right_present(self, p: int) -> int:
        """Right shift restricted to present phases (cyclic successor)."""
        k = self.phases.index(p)
        return self.phases[(k + 1) % len(self.phases)]

    def left_present(self, p: int) -> int:
        k = self.phases.index(p)
        return self.phases[(k - 1) % len(self.phases)]


@dataclass
class DgSpec:
    smax: float
    pf: float = 1.0

    def __post_init__(self):
        if not self.smax >= 0:
            raise SchemaError("DG capacity must be non-negative")
        if not 0 < self.pf <= 1:
            raise SchemaError("DG power factor must lie in (0, 1]")


@dataclass
class Bus:
    id: int
    phases: PhaseMask
    shunt: np.ndarray = None
    load: np.ndarray = None
    dg: DgSpec | None = None
    region: str = "default"
    name: str | None = None

    def __post_init__(self):
        k = len(self.phases)
        self.shunt = np.zeros((k, k), complex) if self.shunt is None else np.array(self.shunt, complex)
        self.load = np.zeros(k, complex) if self.load is None else np.array(self.load, complex).reshape(-1)
        if self.shunt.shape != (k, k):
            raise PhaseMismatch(f"bus {self.id}: shunt matrix shape {self.shunt.shape} != ({k}, {k})")
        if self.load.shape != (k,):
            raise PhaseMismatch(f"bus {self.id}: load vector has {self.load.size} entries, bus has {k} phases")
        if not np.all(np.isfinite(self.load)) or not np.all(np.isfinite(self.shunt)):
            raise SchemaError(f"bus {self.id}: non-finite load or shunt")


@dataclass
class Edge:
    from_bus: int
    to_bus: int
    phases: PhaseMask
    name: str | None = None

    @property
    def pair(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)

    @property
    def is_svr(self) -> bool:
        return False


@dataclass
class LineEdge(Edge):
    z: np.ndarray = None

    def __post_init__(self):
        k = len(self.phases)
        self.z = np.array(self.z, complex)
        if self.z.shape != (k, k):
            raise PhaseMismatch(f"line {self.pair}: impedance shape {self.z.shape} != ({k}, {k})")
        if not np.all(np.isfinite(self.z)):
            raise SchemaError(f"line {self.pair}: non-finite impedance")


@dataclass
class SvrEdge(Edge):
    spec: SvrSpec = None
    delta_deg: float | None = None

    @property
    def is_svr(self) -> bool:
        return True

    def __post_init__(self):
        if self.spec is None:
            self.spec = SvrSpec()
        if self.spec.svr_type != "wye" and len(self.phases) != 3:
            raise PhaseMismatch(f"{self.spec.svr_type} regulator {self.pair} needs three phases")
        if self.spec.size != len(self.phases):
            raise PhaseMismatch(f"regulator {self.pair}: {self.spec.size} ratio entries for {len(self.phases)} phases")


@dataclass
class Network:
    buses: dict[int, Bus]
    lines: list[LineEdge]
    svrs: list[SvrEdge]
    slack_voltage: np.ndarray
    v_min: float = 0.9
    v_max: float = 1.1
    slack_bus: int = 0
    name: str = ""
    s_base_kva: float | None = None
    v_base_kv: dict[str, float] = field(default_factory=dict)

    @property
    def edges(self) -> list[Edge]:
        """Line edges followed by regulator edges; positions are edge keys."""
        return [*self.lines, *self.svrs]

    @property
    def bus_ids(self) -> list[int]:
        return list(self.buses)

    def svr_secondaries(self) -> set[int]:
        return {e.to_bus for e in self.svrs}

    def edges_out(self, bus: int) -> list[int]:
        return [k for k, e in enumerate(self.edges) if e.from_bus == bus]

    def edges_in(self, bus: int) -> list[int]:
        return [k for k, e in enumerate(self.edges) if e.to_bus == bus]

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return to_dict(self) == to_dict(other)


# --------------------------------------------------------------------------- parsing

def _complex(x, where):
    try:
        re, im = x
        return complex(float(re), float(im))
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected [re, im] pair, got {x!r}") from None


def _cvec(xs, where):
    if not isinstance(xs, list):
        raise SchemaError(f"{where}: expected list of [re, im] pairs")
    return np.array([_complex(x, where) for x in xs], complex)


def _cmat(rows, where):
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise SchemaError(f"{where}: expected matrix of [re, im] pairs")
    return np.array([[_complex(x, where) for x in r] for r in rows], complex).reshape(len(rows), -1)


def _require(d, key, where):
    if key not in d:
        raise SchemaError(f"{where}: missing field {key!r}")
    return d[key]


def _z_base(base, region, where):
    if base is None:
        raise UnitsError(f"{where}: ohmic values given but no 'base' section")
    try:
        kv = float(base["v_base_kv_per_region"][region])
        kva = float(base["s_base_kva"])
    except (KeyError, TypeError):
        raise UnitsError(f"{where}: no voltage base for region {region!r}") from None
    return (kv * 1e3) ** 2 / (kva * 1e3)


def parse_feeder(text: str | dict) -> Network:
    """Build a validated per-unit :class:`Network` from feeder JSON."""
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"feeder file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("feeder document must be an object")

    base = doc.get("base")
    limits = doc.get("limits", {})

    buses: dict[int, Bus] = {}
    for k, b in enumerate(_require(doc, "buses", "feeder")):
        where = f"bus[{k}]"
        bid = int(_require(b, "id", where))
        if bid in buses:
            raise SchemaError(f"{where}: duplicate bus id {bid}")
        phases = PhaseMask(b.get("phases", "abc"))
        n = len(phases)
        units = b.get("units", "pu")
        region = b.get("region", "default")
        load = _cvec(b["load_s"], where) if "load_s" in b else np.zeros(n, complex)
        shunt = _cmat(b["shunt_y"], where) if "shunt_y" in b else np.zeros((n, n), complex)
        if units == "si":
            if base is None:
                raise UnitsError(f"{where}: physical units given but no 'base' section")
            load = load / float(base["s_base_kva"])
            shunt = shunt * _z_base(base, region, where)
        elif units != "pu":
            raise SchemaError(f"{where}: units must be 'pu' or 'si'")
        dg = None
        if b.get("dg") is not None:
            dg = DgSpec(float(_require(b["dg"], "smax", where)), float(b["dg"].get("pf", 1.0)))
        buses[bid] = Bus(bid, phases, shunt=shunt, load=load, dg=dg, region=region, name=b.get("name"))

    def bus_of(bid, where):
        if bid not in buses:
            raise SchemaError(f"{where}: references unknown bus {bid}")
        return buses[bid]

    def edge_phases(e, nb, mb, where):
        if "phases" in e:
            ph = PhaseMask(e["phases"])
            if not (ph.issubset(nb.phases) and ph.issubset(mb.phases)):
                raise PhaseMismatch(f"{where}: phases {ph} absent at an endpoint ({nb.phases}, {mb.phases})")
            return ph
        return nb.phases.intersection(mb.phases)

    lines: list[LineEdge] = []
    for k, e in enumerate(doc.get("lines", [])):
        where = f"line[{k}]"
        n, m = int(_require(e, "from", where)), int(_require(e, "to", where))
        nb, mb = bus_of(n, where), bus_of(m, where)
        ph = edge_phases(e, nb, mb, where)
        z = _cmat(_require(e, "z_matrix", where), where)
        units = e.get("units", "pu")
        if units == "ohm":
            if nb.region != mb.region:
                raise UnitsError(f"{where}: ohmic line spans regions {nb.region}/{mb.region}")
            z = z / _z_base(base, nb.region, where)
        elif units != "pu":
            raise SchemaError(f"{where}: units must be 'pu' or 'ohm'")
        lines.append(LineEdge(n, m, ph, name=e.get("name"), z=z))

    for k, e in enumerate(doc.get("switches", [])):
        where = f"switch[{k}]"
        n, m = int(_require(e, "from", where)), int(_require(e, "to", where))
        ph = edge_phases(e, bus_of(n, where), bus_of(m, where), where)
        lines.append(LineEdge(n, m, ph, name=e.get("name"), z=SWITCH_IMPEDANCE * np.eye(len(ph))))

    for e in lines:
        if e.from_bus >= e.to_bus:
            raise SchemaError(f"line {e.pair}: endpoints must satisfy from < to")

    svrs: list[SvrEdge] = []
    for k, e in enumerate(doc.get("svrs", [])):
        where = f"svr[{k}]"
        n, m = int(_require(e, "from", where)), int(_require(e, "to", where))
        nb, mb = bus_of(n, where), bus_of(m, where)
        typ = e.get("type", "wye")
        variant = e.get("variant", "B")
        if typ not in SVR_TYPES:
            raise SchemaError(f"{where}: unknown type {typ!r}")
        if variant not in VARIANTS:
            raise SchemaError(f"{where}: unknown variant {variant!r}")
        if typ != "wye":
            if len(nb.phases) != 3 or len(mb.phases) != 3:
                raise PhaseMismatch(f"{where}: {typ} regulator requires three-phase buses")
            ph = PhaseMask("abc")
            if "phases" in e and PhaseMask(e["phases"]) != ph:
                raise PhaseMismatch(f"{where}: {typ} regulator must span abc")
        else:
            ph = edge_phases(e, nb, mb, where)
        size = len(ph)
        rb = e.get("r_bounds")
        r_min, r_max = (np.full(size, 0.9), np.full(size, 1.1)) if rb is None else (rb[0], rb[1])
        try:
            spec = SvrSpec(typ, variant, bool(e.get("gang", False)), r_min, r_max)
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from None
        delta = e.get("delta_deg")
        svrs.append(SvrEdge(n, m, ph, name=e.get("name"), spec=spec,
                            delta_deg=None if delta is None else float(delta)))

    slack = _require(doc, "slack", "feeder")
    slack_bus = int(slack.get("bus", 0))
    if slack_bus != 0:
        raise SchemaError("slack must be bus 0")
    sb = bus_of(slack_bus, "slack")
    v0 = _cvec(_require(slack, "voltage_phasors", "slack"), "slack")
    if v0.size != len(sb.phases):
        raise PhaseMismatch(f"slack: {v0.size} phasors for {len(sb.phases)} phases")

    v_base = {} if base is None else {str(k): float(v) for k, v in base.get("v_base_kv_per_region", {}).items()}
    net = Network(
        buses=buses,
        lines=lines,
        svrs=svrs,
        slack_voltage=v0,
        v_min=float(limits.get("v_min", 0.9)),
        v_max=float(limits.get("v_max", 1.1)),
        slack_bus=slack_bus,
        name=str(doc.get("name", "")),
        s_base_kva=None if base is None else float(base["s_base_kva"]),
        v_base_kv=v_base,
    )
    _validate(net)
    return net


def _validate(net: Network):
    if not 0 < net.v_min <= net.v_max:
        raise SchemaError("voltage limits must satisfy 0 < v_min <= v_max")
    adj = {b: set() for b in net.buses}
    for e in net.edges:
        if e.from_bus == e.to_bus:
            raise SchemaError(f"edge {e.pair} is a self loop")
        adj[e.from_bus].add(e.to_bus)
        adj[e.to_bus].add(e.from_bus)
    seen = {net.slack_bus}
    todo = [net.slack_bus]
    while todo:
        b = todo.pop()
        for c in adj[b] - seen:
            seen.add(c)
            todo.append(c)
    if len(seen) != len(net.buses):
        missing = sorted(set(net.buses) - seen)
        raise SchemaError(f"network is disconnected; unreachable buses {missing[:10]}")
    for bid, bus in net.buses.items():
        if bid == net.slack_bus:
            continue
        covered = set()
        for e in net.edges:
            if bid in e.pair:
                covered |= set(e.phases)
        if not set(bus.phases) <= covered:
            raise PhaseMismatch(f"bus {bid}: phases {bus.phases} not all reached by an edge")


def load_feeder(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_feeder(fh.read())


# --------------------------------------------------------------------------- serialization

def _pair(z):
    return [float(np.real(z)), float(np.imag(z))]


def _pvec(v):
    return [_pair(z) for z in np.asarray(v).reshape(-1)]


def _pmat(m):
    return [[_pair(z) for z in row] for row in np.asarray(m)]


def to_dict(net: Network) -> dict:
    """Per-unit JSON-ready description; ``parse_feeder`` inverts it."""
    doc = {"name": net.name}
    if net.s_base_kva is not None:
        doc["base"] = {"s_base_kva": net.s_base_kva, "v_base_kv_per_region": dict(net.v_base_kv)}
    doc["limits"] = {"v_min": net.v_min, "v_max": net.v_max}
    doc["slack"] = {"bus": net.slack_bus, "voltage_phasors": _pvec(net.slack_voltage)}
    buses = []
    for b in net.buses.values():
        d = {"id": b.id, "phases": str(b.phases), "region": b.region, "units": "pu",
             "load_s": _pvec(b.load), "shunt_y": _pmat(b.shunt)}
        if b.name is not None:
            d["name"] = b.name
        if b.dg is not None:
            d["dg"] = {"smax": b.dg.smax, "pf": b.dg.pf}
        buses.append(d)
    doc["buses"] = buses
    doc["lines"] = []
    for e in net.lines:
        d = {"from": e.from_bus, "to": e.to_bus, "phases": str(e.phases), "units": "pu", "z_matrix": _pmat(e.z)}
        if e.name is not None:
            d["name"] = e.name
        doc["lines"].append(d)
    doc["svrs"] = []
    for e in net.svrs:
        s = e.spec
        d = {"from": e.from_bus, "to": e.to_bus, "phases": str(e.phases), "type": s.svr_type,
             "variant": s.variant, "gang": s.gang, "r_bounds": [s.r_min.tolist(), s.r_max.tolist()]}
        if e.delta_deg is not None:
            d["delta_deg"] = e.delta_deg
        if e.name is not None:
            d["name"] = e.name
        doc["svrs"].append(d)
    return doc


def dumps(net: Network) -> str:
    return json.dumps(to_dict(net), indent=1)


# --------------------------------------------------------------------------- topology

@dataclass
class RadialOrder:
    """Breadth-first edge sequence from the slack bus.

    ``edges`` holds keys into ``Network.edges``; ``pairs`` the matching
    (upstream, downstream) bus pairs. ``forward[k]`` is False when the stored
    edge points towards the slack.
    """

    edges: list[int]
    pairs: list[tuple[int, int]]
    forward: list[bool]
    radial: bool


def radial_order(net: Network, strict: bool = False) -> RadialOrder:
    edges = net.edges
    incident: dict[int, list[int]] = {b: [] for b in net.buses}
    for k, e in enumerate(edges):
        incident[e.from_bus].append(k)
        incident[e.to_bus].append(k)
    visited = {net.slack_bus}
    used = set()
    order, pairs, forward = [], [], []
    queue = deque([net.slack_bus])
    cycle = False
    while queue:
        n = queue.popleft()
        for k in incident[n]:
            if k in used:
                continue
            used.add(k)
            e = edges[k]
            m = e.to_bus if e.from_bus == n else e.from_bus
            if m in visited:
                cycle = True
                continue
            visited.add(m)
            order.append(k)
            pairs.append((n, m))
            forward.append(e.from_bus == n)
            queue.append(m)
    radial = not cycle and len(edges) == len(net.buses) - 1 and len(visited) == len(net.buses)
    if strict and not radial:
        raise CycleError(f"network {net.name!r} is not radial")
    return RadialOrder(order, pairs, forward, radial)
