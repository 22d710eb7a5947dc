"""Renewable-uncertainty scenario sampling and the power-flow dataset."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from ..errors import NumericalError, RedrawRateError, ValidationError
from .case import Generator, PowerCase
from .network import build_ybus
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_nr

MAX_REDRAW_RATE = 0.2
_SCALE_FLOOR = 1e-9


@dataclass(frozen=True)
class ScenarioConfig:
    penetration: float = 0.0
    load_scale_range: tuple[float, float] = (0.8, 1.2)
    pv_beta: tuple[float, float] = (2.06, 2.5)
    wind_weibull: tuple[float, float] = (2.0, 0.4)
    seed: int = 0
    count: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.penetration <= 1.0:
            raise ValidationError(f"scenario.penetration must lie in [0, 1], got {self.penetration}")
        lo, hi = self.load_scale_range
        if not 0 < lo <= hi:
            raise ValidationError(f"scenario.load_scale_range must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if min(self.pv_beta) <= 0 or min(self.wind_weibull) <= 0:
            raise ValidationError("scenario distribution shape parameters must all be > 0")
        if self.count < 1:
            raise ValidationError(f"scenario.count must be >= 1, got {self.count}")
        if self.seed < 0:
            raise ValidationError(f"scenario.seed must be >= 0, got {self.seed}")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        for k in ("load_scale_range", "pv_beta", "wind_weibull"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class Normalization:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, groups=None) -> Normalization:
        """Column-wise z-score.

        Constant columns (slack angle, PV magnitudes) borrow the median spread
        of the varying columns in their group, given as ``(start, stop)``
        pairs, so one normalized unit means the same physical amount across a
        group. Without a varying neighbour the scale is 1.
        """
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        live = std > _SCALE_FLOOR
        scale = np.where(live, std, 1.0)
        for lo, hi in groups or [(0, x.shape[1])]:
            seg = std[lo:hi][live[lo:hi]]
            if seg.size:
                scale[lo:hi] = np.where(live[lo:hi], std[lo:hi], np.median(seg))
        return cls(mean, scale)

    def apply(self, x):
        return (x - self.mean) / self.scale

    def invert(self, z):
        return z * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Normalization:
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def fit_norms(inputs, targets, n: int, nb: int) -> tuple[Normalization, Normalization]:
    """Input and target normalizations grouped by physical quantity."""
    x_groups = [(0, n), (n, 2 * n)]
    y_groups = [(0, n), (n, 2 * n), (2 * n, 2 * n + nb), (2 * n + nb, 2 * n + 2 * nb)]
    return Normalization.fit(inputs, x_groups), Normalization.fit(targets, y_groups)


@dataclass(frozen=True)
class Dataset:
    """Raw per-unit samples plus the normalization applied to them.

    ``inputs`` is ``(N, 2n)``: net injections ``P_0..P_{n-1}, Q_0..Q_{n-1}``.
    ``targets`` is ``(N, 2n + 2*n_branch)``: ``V, phi`` per bus then the
    from-end ``P_ij, Q_ij`` per branch.
    """

    inputs: np.ndarray
    targets: np.ndarray
    input_norm: Normalization
    target_norm: Normalization
    n_bus: int
    n_branch: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.input_norm.apply(self.inputs)

    @property
    def y(self) -> np.ndarray:
        return self.target_norm.apply(self.targets)

    def subset(self, idx) -> Dataset:
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx])

    def renormalized(self, input_norm: Normalization, target_norm: Normalization) -> Dataset:
        return replace(self, input_norm=input_norm, target_norm=target_norm)

    def columns(self) -> list[str]:
        n, nb = self.n_bus, self.n_branch
        return (
            [f"P_{i}" for i in range(n)]
            + [f"Q_{i}" for i in range(n)]
            + [f"V_{i}" for i in range(n)]
            + [f"phi_{i}" for i in range(n)]
            + [f"Pf_{k}" for k in range(nb)]
            + [f"Qf_{k}" for k in range(nb)]
        )

    def save(self, csv_path: str | Path) -> Path:
        """Write the CSV and its ``.json`` sidecar; returns the sidecar path."""
        csv_path = Path(csv_path)
        rows = np.hstack([self.inputs, self.targets])
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for r in rows:
                w.writerow([repr(float(v)) for v in r])
        side = csv_path.with_suffix(".json")
        doc = {
            "n_bus": self.n_bus,
            "n_branch": self.n_branch,
            "input_norm": self.input_norm.to_dict(),
            "target_norm": self.target_norm.to_dict(),
            "meta": self.meta,
        }
        side.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return side

    @classmethod
    def load(cls, csv_path: str | Path) -> Dataset:
        csv_path = Path(csv_path)
        side = csv_path.with_suffix(".json")
        if not csv_path.is_file() or not side.is_file():
            raise ValidationError(f"dataset {csv_path} or its sidecar {side} is missing")
        doc = json.loads(side.read_text())
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        n = doc["n_bus"]
        return cls(
            inputs=data[:, : 2 * n],
            targets=data[:, 2 * n :],
            input_norm=Normalization.from_dict(doc["input_norm"]),
            target_norm=Normalization.from_dict(doc["target_norm"]),
            n_bus=n,
            n_branch=doc["n_branch"],
            meta=doc.get("meta", {}),
        )


@lru_cache(maxsize=32)
def wind_capacity_factor(shape: float, scale: float) -> float:
    """E[min(u**3, 1)] for normalised wind speed u ~ Weibull(shape, scale)."""
    dist = stats.weibull_min(shape, scale=scale)
    below, _ = integrate.quad(lambda u: u**3 * dist.pdf(u), 0.0, 1.0)
    return below + float(dist.sf(1.0))


def pv_capacity_factor(a: float, b: float) -> float:
    return a / (a + b)


def renewable_sites(case: PowerCase) -> list[tuple[int, str]]:
    """Load buses hosting renewables, largest load first, alternating PV / wind."""
    loads = [(b.p_load, b.id) for b in case.buses if b.kind == "pq" and b.p_load > 0]
    if not loads:
        loads = [(b.p_load, b.id) for b in case.buses if b.kind != "slack"]
    loads.sort(key=lambda t: (-t[0], t[1]))
    sites = [(bus, "pv" if i % 2 == 0 else "wind") for i, (_, bus) in enumerate(loads)]
    if len(sites) == 1:
        sites.append((sites[0][0], "wind"))
    return sites


def add_renewables(case: PowerCase, cfg: ScenarioConfig) -> PowerCase:
    """Attach PV and wind units sized for the configured penetration.

    Expected renewable output equals ``penetration`` times the total base
    load, split evenly between PV and wind; within a technology, nameplate is
    proportional to the host bus load. Existing renewable units are dropped.
    """
    total_load = sum(b.p_load for b in case.buses)
    sites = renewable_sites(case)
    cf = {"pv": pv_capacity_factor(*cfg.pv_beta), "wind": wind_capacity_factor(*cfg.wind_weibull)}
    host_load = {"pv": 0.0, "wind": 0.0}
    for bus, tech in sites:
        host_load[tech] += max(case.buses[bus].p_load, 0.0)
    gens = [g for g in case.gens if not g.is_renewable]
    for bus, tech in sites:
        share = case.buses[bus].p_load / host_load[tech] if host_load[tech] > 0 else 1.0 / len(sites)
        expected = 0.5 * cfg.penetration * total_load * share
        gens.append(Generator(bus=bus, p_gen=0.0, q_gen=0.0, is_renewable=True, p_max=expected / cf[tech]))
    return case.with_gens(gens)


def _tech(case: PowerCase) -> list[str]:
    # add_renewables appends units in renewable_sites order
    sites = iter(renewable_sites(case))
    return [next(sites)[1] if g.is_renewable else "" for g in case.gens]


def draw_operating_point(case: PowerCase, cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[PowerCase, float]:
    """One scenario: scaled loads, renewable draws, proportional re-dispatch.

    Returns the modified case and the total renewable output (p.u.).
    """
    lo, hi = cfg.load_scale_range
    s = rng.uniform(lo, hi)
    pv_frac = rng.beta(*cfg.pv_beta)
    k, lam = cfg.wind_weibull
    wind_frac = min((lam * rng.weibull(k)) ** 3, 1.0)
    pl, ql = case.loads()
    base_load = float(pl.sum())
    techs = _tech(case)
    slack = case.slack
    renew = 0.0
    gens = []
    for g, tech in zip(case.gens, techs):
        if tech:
            out = g.p_max * (pv_frac if tech == "pv" else wind_frac)
            renew += out
            gens.append(replace(g, p_gen=out))
        else:
            gens.append(g)
    net = max(s * base_load - renew, 0.0)
    ratio = net / base_load if base_load > 0 else 0.0
    redisp = []
    for g, tech in zip(gens, techs):
        if tech or g.bus == slack:
            redisp.append(g)
        else:
            cap = g.p_max if g.p_max > 0 else np.inf
            redisp.append(replace(g, p_gen=float(np.clip(ratio * g.p_gen, 0.0, cap))))
    return case.with_loads(s * pl, s * ql).with_gens(redisp), renew


def sample_scenarios(
    case: PowerCase,
    cfg: ScenarioConfig,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Dataset:
    """Draw ``cfg.count`` solved operating points.

    Sample ``i`` uses its own RNG stream spawned from ``cfg.seed``; draws
    whose power flow fails are redrawn from the same stream and counted.

    Raises:
        RedrawRateError: more than 20% of draws had to be discarded.
    """
    base = add_renewables(case, cfg)
    ybus = build_ybus(base)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.count)
    budget = int(np.floor(MAX_REDRAW_RATE * cfg.count))
    redraws = 0
    x = np.empty((cfg.count, 2 * case.n))
    y = np.empty((cfg.count, 2 * case.n + 2 * case.n_branch))
    ren_share = np.empty(cfg.count)
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        while True:
            op, renew = draw_operating_point(base, cfg, rng)
            try:
                sol = solve_nr(op, ybus, tol=tol, max_iter=max_iter)
                break
            except NumericalError:
                redraws += 1
                if redraws > budget:
                    raise RedrawRateError(
                        f"{redraws} of {i + redraws + 1} scenario draws failed to converge "
                        f"(limit {MAX_REDRAW_RATE:.0%}); check penetration or load range"
                    ) from None
        x[i] = np.r_[sol.p_inj, sol.q_inj]
        y[i] = np.r_[sol.v, sol.phi, sol.flows[:, 0], sol.flows[:, 1]]
        ren_share[i] = renew / float(op.loads()[0].sum())
    meta = {
        "case": case.name,
        "base_mva": case.base_mva,
        "scenario": cfg.to_dict(),
        "redraws": redraws,
        "mean_renewable_share": float(ren_share.mean()),
        "solver_tol": tol,
    }
    return Dataset(x, y, *fit_norms(x, y, case.n, case.n_branch), case.n, case.n_branch, meta)


def split_dataset(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test partition; both halves use train-fitted norms."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(ds)
    if n < 2:
        raise ValidationError(f"need at least 2 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.clip(round(n * train_fraction), 1, n - 1))
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    train = ds.subset(tr)
    norms = fit_norms(train.inputs, train.targets, ds.n_bus, ds.n_branch)
    return train.renormalized(*norms), ds.subset(te).renormalized(*norms)
