"""Config-driven training, checkpoints and the QNN/BQNN comparison experiment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bayes import PriorSpec, VariationalPosterior, ensemble_predictor, train_vi
from .config import ExperimentConfig, parse_config, with_overrides
from .errors import ValidationError
from .metrics import AccuracyReport, accuracy_report, epochs_to_target
from .model.networks import HybridModel, MLPModel
from .model.train import TrainLog, train_deterministic
from .powerflow.case import PowerCase, case_from_dict, load_case
from .powerflow.scenarios import Dataset, Normalization, sample_scenarios, split_dataset
from .quantum.circuit import CircuitSpec, NoiseSpec

CHECKPOINT_FORMAT = 1


def make_model(cfg: ExperimentConfig, case: PowerCase, target_norm: Normalization):
    if cfg.model.kind == "hybrid":
        return HybridModel(case, CircuitSpec(cfg.model.m, cfg.model.layers), target_norm)
    return MLPModel(case, cfg.model.widths, target_norm)


def generate(cfg: ExperimentConfig) -> tuple[PowerCase, Dataset]:
    case = load_case(cfg.case)
    return case, sample_scenarios(case, cfg.scenario_config())


def split(cfg: ExperimentConfig, ds: Dataset) -> tuple[Dataset, Dataset]:
    return split_dataset(ds, cfg.split.train_fraction, cfg.seed)


@dataclass
class TrainedModel:
    cfg: ExperimentConfig
    case: PowerCase
    model: HybridModel | MLPModel
    input_norm: Normalization
    params: np.ndarray | None = None
    posterior: VariationalPosterior | None = None
    log: TrainLog = field(default_factory=TrainLog)

    @property
    def bayesian(self) -> bool:
        return self.posterior is not None

    def predictor(self, noise: NoiseSpec | None = None, S: int | None = None):
        """``x -> normalized prediction vector``; Bayesian models use the ensemble mean."""
        if self.bayesian:
            return ensemble_predictor(self.model, self.posterior, S or self.cfg.trainer.S, self.cfg.seed, noise)
        return lambda x: self.model.predict(self.params, x, noise)

    def to_dict(self) -> dict:
        t = self.cfg.trainer
        doc = {
            "format": CHECKPOINT_FORMAT,
            "trainer": t.kind,
            "config": self.cfg.model_dump(mode="json"),
            "seed": self.cfg.seed,
            "case": self.case.to_dict(),
            "model": self.model.to_dict(),
            "index_map": self.model.layout.to_dict(),
            "input_norm": self.input_norm.to_dict(),
            "target_norm": self.model.target_norm.to_dict(),
            "epochs_done": len(self.log.rows),
            "optimizer_state": self.log.optimizer_state,
            "log": self.log.rows,
        }
        if self.bayesian:
            doc["posterior"] = self.posterior.to_dict()
            doc["prior"] = {"mean": 0.0, "std": t.prior_std}
            doc["sigma_obs"] = t.sigma_obs
        else:
            doc["params"] = self.params.tolist()
        return doc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> TrainedModel:
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"unsupported checkpoint format {doc.get('format')!r}")
        cfg = parse_config(doc["config"], "checkpoint config")
        case = case_from_dict(doc["case"])
        model = make_model(cfg, case, Normalization.from_dict(doc["target_norm"]))
        log = TrainLog(rows=list(doc.get("log", [])), optimizer_state=doc.get("optimizer_state") or {})
        tm = cls(cfg, case, model, Normalization.from_dict(doc["input_norm"]), log=log)
        if "posterior" in doc:
            tm.posterior = VariationalPosterior.from_dict(doc["posterior"])
            if tm.posterior.d != model.n_params:
                raise ValidationError(f"checkpoint posterior has {tm.posterior.d} parameters, model needs {model.n_params}")
        else:
            tm.params = np.asarray(doc["params"], dtype=float)
            if tm.params.shape != (model.n_params,):
                raise ValidationError(f"checkpoint has {tm.params.size} parameters, model needs {model.n_params}")
        return tm

    @classmethod
    def load(cls, path) -> TrainedModel:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"checkpoint {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"checkpoint {path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)


def accuracy_columns(report: AccuracyReport) -> dict:
    return {"test_v_mse": report.v_mse, "test_phi_dev": report.phi_dev, "test_p_dev": report.p_dev}


def train_from_config(
    cfg: ExperimentConfig,
    train: Dataset,
    test: Dataset | None,
    resume: TrainedModel | None = None,
    track_accuracy: bool = True,
) -> TrainedModel:
    """Train the configured model; with ``resume``, continue up to ``cfg.trainer.epochs``."""
    t = cfg.trainer
    case = load_case(cfg.case) if resume is None else resume.case
    model = make_model(cfg, case, train.target_norm) if resume is None else resume.model
    if model.n_inputs != train.x.shape[1] or model.n_outputs != train.y.shape[1]:
        raise ValidationError(
            f"model expects {model.n_inputs} inputs/{model.n_outputs} targets, "
            f"data has {train.x.shape[1]}/{train.y.shape[1]}"
        )
    done = 0 if resume is None else len(resume.log.rows)
    remaining = max(0, t.epochs - done)
    noise = cfg.noise_spec() if t.train_noise else None
    opt_state = None if resume is None else resume.log.optimizer_state
    tm = TrainedModel(cfg, case, model, train.input_norm)

    def monitor_for(predict_of):
        if not (track_accuracy and test is not None):
            return None
        return lambda epoch, state: accuracy_columns(accuracy_report(predict_of(state), test, case))

    if t.kind == "variational":
        prior = PriorSpec(t.prior_std)
        post, log = train_vi(
            model, train, remaining, t.lr, t.M, prior, t.sigma_obs, cfg.seed,
            test=test, batch_size=t.batch_size, noise=noise, optimizer=t.optimizer,
            init=None if resume is None else resume.posterior, quantum_only=t.quantum_only,
            start_epoch=done, optimizer_state=opt_state, eval_samples=t.S,
            monitor=monitor_for(lambda p: ensemble_predictor(model, p, t.S, cfg.seed, noise)),
        )
        tm.posterior = post
    else:
        params, log = train_deterministic(
            model, train, remaining, t.lr, cfg.seed,
            test=test, batch_size=t.batch_size, noise=noise, optimizer=t.optimizer,
            init=None if resume is None else resume.params, start_epoch=done, optimizer_state=opt_state,
            monitor=monitor_for(lambda p: (lambda x: model.predict(p, x, noise))),
        )
        tm.params = params.values
    prior_rows = [] if resume is None else resume.log.rows
    tm.log = TrainLog(prior_rows + log.rows, log.wall_seconds, log.optimizer_state)
    return tm


def reports_from_log(rows) -> list[AccuracyReport]:
    return [AccuracyReport(r["test_v_mse"], r["test_phi_dev"], r["test_p_dev"]) for r in rows]


@dataclass
class ComparisonOutcome:
    seed: int
    trainer: str
    v_mse: float
    v_mse_noisy: float
    phi_dev: float
    p_dev: float
    epochs_to_target: int | None


def directional_comparison(cfg: ExperimentConfig, seeds, noise_p: float = 0.1, progress=None) -> list[ComparisonOutcome]:
    """Train a plain QNN and a Bayesian QNN per seed on freshly sampled data.

    Each seed fixes the scenario draw, the split, the initialization and the
    training streams; both trainers see identical data and initial means.
    """
    noisy = NoiseSpec.single("depolarizing", noise_p)
    out = []
    for seed in seeds:
        base = with_overrides(cfg, {"seed": int(seed), "scenario.seed": None})
        case, ds = generate(base)
        tr, te = split(base, ds)
        for trainer in ("deterministic", "variational"):
            c = with_overrides(base, {"trainer.kind": trainer})
            tm = train_from_config(c, tr, te)
            clean = accuracy_report(tm.predictor(), te, case)
            dirty = accuracy_report(tm.predictor(noisy), te, case)
            ett = epochs_to_target(reports_from_log(tm.log.rows), c.trainer.epochs)
            res = ComparisonOutcome(int(seed), trainer, clean.v_mse, dirty.v_mse, clean.phi_dev, clean.p_dev, ett)
            out.append(res)
            if progress is not None:
                progress(res)
    return out
