"""Capacity, generalization and accuracy metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .model.train import as_arrays
from .powerflow.case import PowerCase
from .powerflow.scenarios import Dataset

EIG_FLOOR = 1e-12
PHI_THRESHOLD_RAD = 0.05
P_THRESHOLD_MW = 5.0


@dataclass
class FisherEstimate:
    matrix: np.ndarray
    sample_count: int
    sigma_obs: float


def fisher_from_scores(scores: np.ndarray, sigma_obs: float = 1.0) -> FisherEstimate:
    """Average outer product of per-sample score vectors ``(n, d)``."""
    g = np.atleast_2d(scores)
    f = g.T @ g / g.shape[0]
    return FisherEstimate(0.5 * (f + f.T), g.shape[0], sigma_obs)


def empirical_fisher(model, params, data, sigma_obs: float, noise=None) -> FisherEstimate:
    """Empirical Fisher information of the Gaussian likelihood at ``params``."""
    if not sigma_obs > 0:
        raise ValidationError(f"sigma_obs must be > 0, got {sigma_obs}")
    x, y = as_arrays(data)
    if x.shape[0] == 0:
        raise ValidationError("empirical Fisher needs a nonempty data set")
    r = y - model.predict(params, x, noise)
    return fisher_from_scores(model.vjp(params, x, r / sigma_obs**2, noise), sigma_obs)


@dataclass
class EffDimConfig:
    gamma: float = 1.0
    n: int | None = None  # defaults to the data size
    draws: int = 100
    classical_bound: float = 1.0
    seed: int = 0
    quantum_only: bool = False

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValidationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.draws < 1:
            raise ValidationError(f"draws must be >= 1, got {self.draws}")
        if not self.classical_bound > 0:
            raise ValidationError(f"classical_bound must be > 0, got {self.classical_bound}")
        if self.n is not None and self.n < 2:
            raise ValidationError(f"n must be >= 2, got {self.n}")


@dataclass
class EffDimResult:
    d_eff_raw: float
    d_eff_normalized: float
    trace_norm_factor: float
    d: int
    zeta: float
    config: dict = field(default_factory=dict)


def zeta_of(gamma: float, n: int) -> float:
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    return gamma * n / (2 * np.pi * np.log(n))


def effective_dimension_from_fishers(fishers, gamma: float, n: int) -> EffDimResult:
    """Effective dimension from Fisher matrices sampled over parameter space.

    The matrices are rescaled together so their average trace equals ``d``;
    the parameter-space average of ``sqrt(det(I + zeta F))`` is taken in log
    space.
    """
    fs = np.asarray(fishers, dtype=float)
    if fs.ndim != 3 or fs.shape[1] != fs.shape[2]:
        raise ValidationError(f"expected a stack of square matrices, got shape {fs.shape}")
    k, d, _ = fs.shape
    zeta = zeta_of(gamma, n)
    if zeta <= 1:
        raise ValidationError(
            f"zeta = gamma*n/(2*pi*ln n) = {zeta:.4g} must exceed 1 (gamma={gamma}, n={n}); use more samples"
        )
    mean_trace = float(np.mean(np.trace(fs, axis1=1, axis2=2)))
    factor = d / mean_trace if mean_trace > 0 else 0.0
    fs = 0.5 * (fs + np.transpose(fs, (0, 2, 1))) * factor
    eig = np.linalg.eigvalsh(np.eye(d)[None] + zeta * fs)
    logdet = np.sum(np.log(np.maximum(eig, EIG_FLOOR)), axis=1)
    log_avg = logsumexp(0.5 * logdet) - np.log(k)
    raw = max(0.0, 2.0 * log_avg / np.log(zeta))
    return EffDimResult(raw, raw / d, factor, d, zeta)


def parameter_box(layout, classical_bound: float = 1.0, quantum_only: bool = False):
    """Per-coordinate bounds of the parameter region and the selected indices."""
    q = layout.mask(quantum=True)
    hi = np.where(q, np.pi, classical_bound)
    idx = np.flatnonzero(q) if quantum_only else np.arange(layout.size)
    return -hi, hi, idx


def effective_dimension(model, data, cfg: EffDimConfig, noise=None, sigma_obs: float = 1.0) -> EffDimResult:
    """Effective dimension over uniform parameter draws in the configured box.

    ``sigma_obs`` only rescales the Fisher and cancels in the trace
    normalization.
    """
    x, y = as_arrays(data)
    n = cfg.n if cfg.n is not None else x.shape[0]
    lo, hi, idx = parameter_box(model.layout, cfg.classical_bound, cfg.quantum_only)
    if cfg.quantum_only and idx.size == 0:
        raise ValidationError("model has no quantum parameters to restrict to")
    rng = np.random.default_rng(cfg.seed)
    fishers = []
    for _ in range(cfg.draws):
        theta = rng.uniform(lo, hi)
        f = empirical_fisher(model, theta, (x, y), sigma_obs, noise).matrix
        fishers.append(f[np.ix_(idx, idx)])
    res = effective_dimension_from_fishers(fishers, cfg.gamma, n)
    res.config = asdict(cfg) | {"n": n}
    return res


def parameter_counts(model) -> tuple[int, int]:
    """``(classical, quantum)`` parameter counts from the model's index map."""
    layout = model.layout
    return layout.count(quantum=False), layout.count(quantum=True)


def vc_dim_estimate(model) -> int:
    """Capacity proxy: total classical plus quantum parameter count."""
    c, q = parameter_counts(model)
    return c + q


def squared_error(pred, target) -> np.ndarray:
    return np.sum((np.atleast_2d(pred) - np.atleast_2d(target)) ** 2, axis=1)


def empirical_risk(predict_fn, data, loss_fn=squared_error) -> float:
    """Mean per-sample loss of ``predict_fn`` over ``data``.

    ``loss_fn(pred, target)`` returns one value per row; the default is the
    squared Euclidean error of the whole prediction vector.
    """
    x, y = as_arrays(data)
    if x.shape[0] == 0:
        raise ValidationError("empirical risk needs a nonempty data set")
    return float(np.mean(loss_fn(predict_fn(x), y)))


@dataclass
class GenBoundResult:
    h: int
    n: int
    delta: float
    empirical_risk: float
    complexity_term: float
    bound: float


def gen_error_bound(h: int, n: int, delta: float, empirical_risk: float) -> GenBoundResult:
    """VC-style bound ``risk + sqrt((h (ln(n/h) + 1) + ln(1/delta)) / n)``."""
    if h < 1:
        raise ValidationError(f"h must be >= 1, got {h}")
    if n <= h:
        raise ValidationError(f"bound needs n > h (ln(n/h) <= 0 otherwise); got n={n}, h={h}")
    if not 0 < delta <= 1:
        raise ValidationError(f"delta must lie in (0, 1], got {delta}")
    if not empirical_risk >= 0:
        raise ValidationError(f"empirical risk must be >= 0, got {empirical_risk}")
    c = float(np.sqrt((h * (np.log(n / h) + 1) + np.log(1 / delta)) / n))
    return GenBoundResult(int(h), int(n), float(delta), float(empirical_risk), c, float(empirical_risk) + c)


@dataclass
class AccuracyReport:
    v_mse: float
    phi_dev: float
    p_dev: float

    def meets(self, phi_tol: float = 0.05, p_tol: float = 0.05) -> bool:
        return self.phi_dev <= phi_tol and self.p_dev <= p_tol


def accuracy_from_arrays(pred, truth, n: int, n_branch: int, base_mva: float) -> AccuracyReport:
    """Accuracy of per-unit prediction vectors ``[V, phi, P_ij, Q_ij]``."""
    pred, truth = np.atleast_2d(pred), np.atleast_2d(truth)
    if pred.shape != truth.shape or pred.shape[1] < 2 * n + n_branch:
        raise ValidationError(f"prediction shape {pred.shape} and target shape {truth.shape} are incompatible")
    dv = pred[:, :n] - truth[:, :n]
    dphi = pred[:, n : 2 * n] - truth[:, n : 2 * n]
    dp = (pred[:, 2 * n : 2 * n + n_branch] - truth[:, 2 * n : 2 * n + n_branch]) * base_mva
    return AccuracyReport(
        v_mse=float(np.mean(dv**2) * 1e3),
        phi_dev=float(np.mean(np.abs(dphi) > PHI_THRESHOLD_RAD)),
        p_dev=float(np.mean(np.abs(dp) > P_THRESHOLD_MW)),
    )


def accuracy_report(predict_fn, data: Dataset, case: PowerCase) -> AccuracyReport:
    """Accuracy of a normalized predictor on a data set, in physical units."""
    if data.targets.shape[1] != 2 * case.n + 2 * case.n_branch:
        raise ValidationError("data targets do not include branch flows for this case")
    pred = data.target_norm.invert(predict_fn(data.x))
    return accuracy_from_arrays(pred, data.targets, case.n, case.n_branch, case.base_mva)


def epochs_to_target(run, max_epochs: int, phi_tol: float = 0.05, p_tol: float = 0.05) -> int | None:
    """First epoch (1-based) whose report meets both tolerances, else ``None``.

    ``run`` is either a callable ``epoch -> AccuracyReport`` or a sequence of
    reports/rows (with ``phi_dev`` and ``p_dev``) indexed from epoch 1.
    """
    if max_epochs < 1:
        raise ValidationError(f"max_epochs must be >= 1, got {max_epochs}")
    for epoch in range(1, max_epochs + 1):
        if callable(run):
            rep = run(epoch)
        elif epoch <= len(run):
            rep = run[epoch - 1]
        else:
            break
        phi, p = (rep["phi_dev"], rep["p_dev"]) if isinstance(rep, dict) else (rep.phi_dev, rep.p_dev)
        if phi <= phi_tol and p <= p_tol:
            return epoch
    return None


def to_json(obj) -> str:
    """Stable JSON text for metric dataclasses and plain dicts."""

    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(f"cannot serialise {type(o).__name__}")

    doc = asdict(obj) if hasattr(obj, "__dataclass_fields__") else obj
    return json.dumps(doc, indent=1, sort_keys=True, default=default) + "\n"


__all__ = [
    "FisherEstimate",
    "EffDimConfig",
    "EffDimResult",
    "GenBoundResult",
    "AccuracyReport",
    "fisher_from_scores",
    "empirical_fisher",
    "effective_dimension",
    "effective_dimension_from_fishers",
    "parameter_box",
    "parameter_counts",
    "vc_dim_estimate",
    "zeta_of",
    "squared_error",
    "empirical_risk",
    "gen_error_bound",
    "accuracy_from_arrays",
    "accuracy_report",
    "epochs_to_target",
    "to_json",
]
