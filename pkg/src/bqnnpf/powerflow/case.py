"""Network case model and the JSON case-file reader."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ValidationError

BUS_KINDS = ("slack", "pv", "pq")
PRESET_CASES = ("ieee6", "ieee30", "ieee118")


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_load: float = 0.0
    q_load: float = 0.0
    v_set: float | None = None
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float = 0.0
    tap: float = 1.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_gen: float
    q_gen: float = 0.0
    is_renewable: bool = False
    p_max: float = 0.0


@dataclass(frozen=True)
class PowerCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    gens: tuple[Generator, ...]
    name: str = field(default="case", compare=False)

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    def indices(self, kind: str) -> np.ndarray:
        return np.array([b.id for b in self.buses if b.kind == kind], dtype=np.int64)

    def branch_arrays(self):
        """``(from, to, r, x, b_charge, tap)`` as numpy arrays."""
        br = self.branches
        f = np.array([b.from_bus for b in br], dtype=np.int64)
        t = np.array([b.to_bus for b in br], dtype=np.int64)
        cols = [np.array([getattr(b, k) for b in br], dtype=float) for k in ("r", "x", "b_charge", "tap")]
        return (f, t, *cols)

    def loads(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([b.p_load for b in self.buses], dtype=float),
            np.array([b.q_load for b in self.buses], dtype=float),
        )

    def generation(self) -> tuple[np.ndarray, np.ndarray]:
        pg = np.zeros(self.n)
        qg = np.zeros(self.n)
        for g in self.gens:
            pg[g.bus] += g.p_gen
            qg[g.bus] += g.q_gen
        return pg, qg

    def scheduled_injections(self) -> tuple[np.ndarray, np.ndarray]:
        """Net specified injections ``(P_gen - P_load, Q_gen - Q_load)`` in p.u."""
        pl, ql = self.loads()
        pg, qg = self.generation()
        return pg - pl, qg - ql

    def v_setpoints(self) -> np.ndarray:
        return np.array([b.v_set if b.v_set is not None else 1.0 for b in self.buses], dtype=float)

    def with_loads(self, p_load, q_load) -> PowerCase:
        buses = tuple(replace(b, p_load=float(p), q_load=float(q)) for b, p, q in zip(self.buses, p_load, q_load))
        return replace(self, buses=buses)

    def with_gens(self, gens) -> PowerCase:
        return replace(self, gens=tuple(gens))

    def to_dict(self) -> dict:
        buses = []
        for b in self.buses:
            d = {"id": b.id, "kind": b.kind, "p_load": b.p_load, "q_load": b.q_load, "shunt_b": b.shunt_b}
            if b.v_set is not None:
                d["v_set"] = b.v_set
            buses.append(d)
        branches = [
            {"from": b.from_bus, "to": b.to_bus, "r": b.r, "x": b.x, "b_charge": b.b_charge, "tap": b.tap}
            for b in self.branches
        ]
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": buses,
            "branches": branches,
            "gens": [asdict(g) for g in self.gens],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _num(obj, key, where, default=None, required=True):
    if key not in obj:
        if required and default is None:
            raise ValidationError(f"{where}.{key}: missing required field")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"{where}.{key}: expected a number, got {val!r}")
    if not np.isfinite(val):
        raise ValidationError(f"{where}.{key}: must be finite")
    return float(val)


def _list(doc, key):
    val = doc.get(key)
    if not isinstance(val, list):
        raise ValidationError(f"{key}: expected a list")
    for i, item in enumerate(val):
        if not isinstance(item, dict):
            raise ValidationError(f"{key}[{i}]: expected an object")
    return val


def case_from_dict(doc: dict) -> PowerCase:
    """Build and validate a :class:`PowerCase` from a decoded case document."""
    if not isinstance(doc, dict):
        raise ValidationError("case: top-level value must be a JSON object")
    base = _num(doc, "base_mva", "case")
    if base <= 0:
        raise ValidationError("case.base_mva: must be positive")

    buses = []
    for i, b in enumerate(_list(doc, "buses")):
        where = f"buses[{i}]"
        if b.get("id") != i:
            raise ValidationError(f"{where}.id: bus ids must be contiguous 0..n-1 in order, got {b.get('id')!r}")
        kind = b.get("kind")
        if kind not in BUS_KINDS:
            raise ValidationError(f"{where}.kind: expected one of {BUS_KINDS}, got {kind!r}")
        v_set = _num(b, "v_set", where, required=False)
        if kind != "pq":
            if v_set is None:
                raise ValidationError(f"{where}.v_set: required for {kind} buses")
            if v_set <= 0:
                raise ValidationError(f"{where}.v_set: must be > 0")
        buses.append(
            Bus(
                id=i,
                kind=kind,
                p_load=_num(b, "p_load", where, 0.0),
                q_load=_num(b, "q_load", where, 0.0),
                v_set=v_set,
                shunt_b=_num(b, "shunt_b", where, 0.0),
            )
        )
    n = len(buses)
    if n < 2:
        raise ValidationError(f"buses: a case needs at least 2 buses, got {n}")
    n_slack = sum(b.kind == "slack" for b in buses)
    if n_slack != 1:
        raise ValidationError(f"buses: exactly one slack bus required, found {n_slack}")

    def bus_ref(obj, key, where):
        v = obj.get(key)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValidationError(f"{where}.{key}: expected an integer bus id, got {v!r}")
        if not 0 <= v < n:
            raise ValidationError(f"{where}.{key}: references bus {v}, which does not exist (n={n})")
        return v

    branches = []
    for i, br in enumerate(_list(doc, "branches")):
        where = f"branches[{i}]"
        f = bus_ref(br, "from", where)
        t = bus_ref(br, "to", where)
        if f == t:
            raise ValidationError(f"{where}: from and to bus are both {f}")
        r = _num(br, "r", where, 0.0)
        x = _num(br, "x", where)
        tap = _num(br, "tap", where, 1.0)
        if r < 0:
            raise ValidationError(f"{where}.r: must be >= 0")
        if x == 0:
            raise ValidationError(f"{where}.x: zero series reactance is not supported")
        if tap <= 0:
            raise ValidationError(f"{where}.tap: must be > 0")
        branches.append(Branch(f, t, r, x, _num(br, "b_charge", where, 0.0), tap))

    gens = []
    for i, g in enumerate(_list(doc, "gens") if "gens" in doc else []):
        where = f"gens[{i}]"
        bus = bus_ref(g, "bus", where)
        ren = g.get("is_renewable", False)
        if not isinstance(ren, bool):
            raise ValidationError(f"{where}.is_renewable: expected true/false")
        p_gen = _num(g, "p_gen", where, 0.0)
        p_max = _num(g, "p_max", where, 0.0)
        if ren and not 0.0 <= p_gen <= p_max:
            raise ValidationError(f"{where}: renewable output must satisfy 0 <= p_gen <= p_max")
        gens.append(Generator(bus, p_gen, _num(g, "q_gen", where, 0.0), ren, p_max))

    return PowerCase(base, tuple(buses), tuple(branches), tuple(gens), name=str(doc.get("name", "case")))


def parse_case(text: str) -> PowerCase:
    """Parse JSON case-file contents into a validated :class:`PowerCase`.

    Raises:
        ValidationError: on malformed JSON (with line/column) or any
            structural violation (with the offending record's path).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"case: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return case_from_dict(doc)


def load_case(name_or_path: str | Path) -> PowerCase:
    """Load a bundled preset (``ieee6``, ``ieee30``, ``ieee118``) or a case file."""
    key = str(name_or_path)
    if key in PRESET_CASES:
        text = resources.files("bqnnpf.powerflow").joinpath("cases", f"{key}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise ValidationError(f"case file {path} does not exist")
        text = path.read_text()
    return parse_case(text)
