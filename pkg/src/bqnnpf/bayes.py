"""Mean-field Gaussian variational inference over model parameters."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DivergenceError, ValidationError
from .model.head import Prediction
from .model.loss import per_sample_loss
from .model.params import FlatParams
from .model.train import TrainLog, as_arrays, epoch_batches, make_optimizer
from .quantum.circuit import NoiseSpec

INIT_SIGMA = 0.05
DEFAULT_SIGMA_OBS = 0.05


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass
class PriorSpec:
    std: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValidationError(f"prior std must be > 0, got {self.std}")


@dataclass
class VariationalPosterior:
    """Independent Gaussians with ``sigma = softplus(raw_scale)``.

    ``mask`` marks the Bayesian components; the rest are point estimates
    (their draws equal the mean and they contribute nothing to the KL).
    """

    mean: np.ndarray
    raw_scale: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.raw_scale = np.asarray(self.raw_scale, dtype=float)
        if self.mean.shape != self.raw_scale.shape or self.mean.ndim != 1:
            raise ValidationError("posterior mean and raw_scale must be 1-D arrays of equal length")
        if self.mask is None:
            self.mask = np.ones(self.mean.size, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)

    @classmethod
    def around(cls, mean, sigma: float = INIT_SIGMA, mask=None) -> VariationalPosterior:
        mean = np.asarray(mean, dtype=float).copy()
        return cls(mean, np.full(mean.size, float(inverse_softplus(sigma))), mask)

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.raw_scale)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "raw_scale": self.raw_scale.tolist(), "mask": self.mask.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> VariationalPosterior:
        return cls(np.asarray(d["mean"]), np.asarray(d["raw_scale"]), np.asarray(d.get("mask", np.ones(len(d["mean"]))), dtype=bool))


def sample_params(post: VariationalPosterior, rng: np.random.Generator, layout=None):
    """One reparameterized draw ``mean + sigma * eps``.

    Returns :class:`FlatParams` when ``layout`` is given, else the raw vector.
    """
    eps = rng.standard_normal(post.d) * post.mask
    theta = post.mean + post.sigma * eps
    return FlatParams(theta, layout) if layout is not None else theta


def kl_gaussian(post: VariationalPosterior, prior: PriorSpec) -> float:
    """Closed-form KL from the posterior to an isotropic Gaussian prior."""
    s = post.sigma[post.mask]
    mu = post.mean[post.mask] - prior.mean
    sp = prior.std
    return float(np.sum(np.log(sp / s) + (s**2 + mu**2) / (2 * sp**2) - 0.5))


def _kl_grads(post: VariationalPosterior, prior: PriorSpec):
    s = post.sigma
    g_mu = (post.mean - prior.mean) / prior.std**2
    g_rho = (-1.0 / s + s / prior.std**2) * expit(post.raw_scale)
    return g_mu * post.mask, g_rho * post.mask


def log_likelihood(model, params, batch, sigma_obs: float, noise: NoiseSpec | None = None) -> float:
    """Gaussian log-likelihood summed over the batch."""
    if not sigma_obs > 0:
        raise ValidationError(f"sigma_obs must be > 0, got {sigma_obs}")
    x, y = as_arrays(batch)
    r = y - model.predict(params, x, noise)
    k = r.shape[1]
    return float(np.sum(-0.5 * k * np.log(2 * np.pi * sigma_obs**2) - np.sum(r * r, axis=1) / (2 * sigma_obs**2)))


def log_likelihood_grad(model, params, batch, sigma_obs: float, noise=None) -> tuple[float, np.ndarray]:
    """Log-likelihood and its gradient (summed over the batch)."""
    x, y = as_arrays(batch)
    r = y - model.predict(params, x, noise)
    k = r.shape[1]
    ll = np.sum(-0.5 * k * np.log(2 * np.pi * sigma_obs**2) - np.sum(r * r, axis=1) / (2 * sigma_obs**2))
    g = model.vjp(params, x, r / sigma_obs**2, noise).sum(axis=0)
    return float(ll), g


@dataclass
class ElboEstimate:
    value: float
    log_likelihood: float
    kl: float
    grad_mean: np.ndarray
    grad_raw_scale: np.ndarray


def elbo(
    post: VariationalPosterior,
    model,
    batch,
    M: int,
    prior: PriorSpec,
    sigma_obs: float,
    rng: np.random.Generator | None = None,
    noise: NoiseSpec | None = None,
    eps: np.ndarray | None = None,
    data_scale: float = 1.0,
    with_grad: bool = True,
) -> ElboEstimate:
    """Monte Carlo ELBO with reparameterization gradients.

    ``eps`` fixes the standard-normal draws (shape ``(M, d)``) instead of
    drawing them from ``rng``. ``data_scale`` multiplies the likelihood term,
    used to rescale a mini-batch to the full data set.
    """
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    if eps is None:
        if rng is None:
            raise ValidationError("elbo needs either rng or eps")
        eps = rng.standard_normal((M, post.d))
    eps = np.asarray(eps, dtype=float).reshape(M, post.d) * post.mask
    sigma = post.sigma
    dsig = expit(post.raw_scale)
    ll_sum = 0.0
    g_mu = np.zeros(post.d)
    g_rho = np.zeros(post.d)
    for k in range(M):
        theta = post.mean + sigma * eps[k]
        if not with_grad:
            ll_sum += log_likelihood(model, theta, batch, sigma_obs, noise)
            continue
        ll, g = log_likelihood_grad(model, theta, batch, sigma_obs, noise)
        ll_sum += ll
        g_mu += g
        g_rho += g * eps[k] * dsig
    ll_mean = data_scale * ll_sum / M
    kl = kl_gaussian(post, prior)
    kg_mu, kg_rho = _kl_grads(post, prior)
    value = ll_mean - kl
    if not np.isfinite(value):
        raise DivergenceError(f"ELBO estimate is not finite (log-likelihood {ll_mean}, KL {kl})")
    return ElboEstimate(
        value=value,
        log_likelihood=ll_mean,
        kl=kl,
        grad_mean=data_scale * g_mu / M - kg_mu,
        grad_raw_scale=(data_scale * g_rho / M - kg_rho) * post.mask,
    )


@dataclass
class PredictiveEnsemble:
    members: np.ndarray  # (S, B, K) normalized prediction vectors
    n_bus: int

    @property
    def sample_count(self) -> int:
        return self.members.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.members.std(axis=0)

    def predictions(self) -> list[Prediction]:
        return [Prediction.from_vector(m, self.n_bus) for m in self.members]

    def mean_prediction(self) -> Prediction:
        return Prediction.from_vector(self.mean, self.n_bus)

    def to_csv(self, path, columns: list[str] | None = None) -> None:
        mean, std = np.atleast_2d(self.mean), np.atleast_2d(self.std)
        k = mean.shape[1]
        columns = columns or [f"y{i}" for i in range(k)]
        header = ["row"] + [f"{c}_mean" for c in columns] + [f"{c}_std" for c in columns]
        lines = [",".join(header)]
        for i in range(mean.shape[0]):
            lines.append(",".join([str(i)] + [repr(float(v)) for v in mean[i]] + [repr(float(v)) for v in std[i]]))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def predict_bayes(
    model, post: VariationalPosterior, x, S: int, noise: NoiseSpec | None = None, rng: np.random.Generator | None = None
) -> PredictiveEnsemble:
    """Posterior-predictive ensemble from ``S`` independent parameter draws."""
    if S < 1:
        raise ValidationError(f"S must be >= 1, got {S}")
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.atleast_2d(np.asarray(x, dtype=float))
    members = np.stack([model.predict(sample_params(post, rng), x, noise) for _ in range(S)])
    return PredictiveEnsemble(members, model.n)


def ensemble_predictor(model, post, S: int, seed: int, noise=None):
    """``x -> ensemble mean`` using the same ``S`` draws on every call."""
    thetas = [sample_params(post, np.random.default_rng([seed, s])) for s in range(S)]

    def predict(x):
        x = np.atleast_2d(x)
        return np.mean([model.predict(t, x, noise) for t in thetas], axis=0)

    return predict


def train_vi(
    model,
    data,
    epochs: int,
    lr: float,
    M: int,
    prior: PriorSpec,
    sigma_obs: float,
    seed: int,
    *,
    test=None,
    batch_size: int | None = None,
    noise: NoiseSpec | None = None,
    optimizer: str = "gd",
    init: VariationalPosterior | None = None,
    quantum_only: bool = False,
    start_epoch: int = 0,
    optimizer_state: dict | None = None,
    eval_samples: int = 20,
    monitor=None,
) -> tuple[VariationalPosterior, TrainLog]:
    """Gradient ascent on ELBO / N over the posterior mean and raw scale.

    Each step uses ``M`` reparameterized draws on a mini-batch whose
    likelihood is scaled up to the full training set. Log rows carry the
    ELBO, KL and expected log-likelihood on the full training set, plus the
    composite loss of the ``eval_samples``-member ensemble mean.

    Raises:
        DivergenceError: non-finite ELBO or gradient; ``diagnostics`` holds the
            last finite posterior under ``last_good``.
    """
    if not lr >= 0:
        raise ValidationError(f"lr must be >= 0, got {lr}")
    if epochs < 0:
        raise ValidationError(f"epochs must be >= 0, got {epochs}")
    if not sigma_obs > 0:
        raise ValidationError(f"sigma_obs must be > 0, got {sigma_obs}")
    x, y = as_arrays(data)
    n_rows = x.shape[0]
    if n_rows == 0:
        raise ValidationError("training data is empty")
    if init is None:
        mask = model.layout.mask(quantum=True) if quantum_only else None
        post = VariationalPosterior.around(model.init_params(np.random.default_rng(seed)), INIT_SIGMA, mask)
    else:
        post = VariationalPosterior(init.mean.copy(), init.raw_scale.copy(), init.mask.copy())
    opt = make_optimizer(optimizer, lr)
    if optimizer_state:
        opt.load_state(optimizer_state)
    d = post.d
    log = TrainLog()
    for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, epoch])
        last_good = VariationalPosterior(post.mean.copy(), post.raw_scale.copy(), post.mask.copy())
        for idx in epoch_batches(n_rows, batch_size, rng):
            try:
                est = elbo(post, model, (x[idx], y[idx]), M, prior, sigma_obs, rng, noise, data_scale=n_rows / idx.size)
            except DivergenceError as exc:
                raise DivergenceError(str(exc), epoch=epoch, diagnostics={"last_good": last_good}) from None
            g = np.r_[est.grad_mean, est.grad_raw_scale] / n_rows
            if not np.all(np.isfinite(g)):
                raise DivergenceError(
                    f"non-finite ELBO gradient at epoch {epoch}", epoch=epoch, diagnostics={"last_good": last_good}
                )
            # ascent: hand the optimizer the negative gradient
            new = opt.step(np.r_[post.mean, post.raw_scale], -g)
            post = VariationalPosterior(new[:d], new[d:], post.mask)
        try:
            est = elbo(post, model, (x, y), M, prior, sigma_obs, np.random.default_rng([seed, epoch, 1]), noise, with_grad=False)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), epoch=epoch, diagnostics={"last_good": last_good}) from None
        predict = ensemble_predictor(model, post, eval_samples, seed, noise)
        row = {
            "epoch": epoch,
            "elbo": est.value,
            "kl": est.kl,
            "log_likelihood": est.log_likelihood,
            "train_loss": float(np.mean(per_sample_loss(predict(x), y, model.n))),
        }
        if test is not None:
            xt, yt = as_arrays(test)
            row["test_loss"] = float(np.mean(per_sample_loss(predict(xt), yt, model.n)))
        if monitor is not None:
            row.update(monitor(epoch, post))
        log.rows.append(row)
        log.wall_seconds.append(time.perf_counter() - t0)
    log.optimizer_state = opt.state()
    return post, log


def save_posterior(path, post: VariationalPosterior, prior: PriorSpec, sigma_obs: float, extra: dict | None = None):
    doc = {"posterior": post.to_dict(), "prior": {"mean": prior.mean, "std": prior.std}, "sigma_obs": sigma_obs}
    doc.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_posterior(path) -> tuple[VariationalPosterior, PriorSpec, float, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    post = VariationalPosterior.from_dict(doc["posterior"])
    prior = PriorSpec(**doc["prior"])
    return post, prior, float(doc["sigma_obs"]), doc


__all__ = [
    "INIT_SIGMA",
    "DEFAULT_SIGMA_OBS",
    "PriorSpec",
    "VariationalPosterior",
    "PredictiveEnsemble",
    "ElboEstimate",
    "sample_params",
    "kl_gaussian",
    "log_likelihood",
    "log_likelihood_grad",
    "elbo",
    "train_vi",
    "predict_bayes",
    "ensemble_predictor",
    "softplus",
    "inverse_softplus",
    "save_posterior",
    "load_posterior",
]
