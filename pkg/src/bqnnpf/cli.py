"""Command-line entry points: gen, train, eval, noise-sweep, edim, bound."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import predict_bayes
from .config import ExperimentConfig, load_config, with_overrides
from .errors import BqnnError, DivergenceError, NumericalError, ValidationError
from .metrics import (
    EffDimConfig,
    accuracy_report,
    effective_dimension,
    empirical_risk,
    gen_error_bound,
    parameter_counts,
    to_json,
    vc_dim_estimate,
)
from .model.loss import per_sample_loss
from .model.networks import HybridModel
from .powerflow.case import load_case
from .powerflow.scenarios import Dataset
from .quantum.circuit import NoiseSpec
from .runs import TrainedModel, generate, make_model, split, train_from_config

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
DATASET = "dataset.csv"
CHECKPOINT = "checkpoint.json"
LOCK = ".bqnnpf.lock"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


@contextmanager
def _locked(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(f"output directory {out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


class Run:
    """One command invocation: output directory, produced files and the manifest."""

    def __init__(self, command: str, cfg: ExperimentConfig, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.inputs: dict[str, str] = {}
        self.files: list[Path] = []
        self.t0 = time.perf_counter()

    def input(self, path: Path) -> Path:
        self.inputs[path.name] = _sha256(path)
        return path

    def write(self, name: str, text: str) -> Path:
        p = self.out / name
        _write_atomic(p, text)
        self.files.append(p)
        return p

    def produced(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def finish(self) -> None:
        h = hashlib.sha256()
        h.update(self.cfg.canonical_json().encode())
        for name in sorted(self.inputs):
            h.update(f"{name}:{self.inputs[name]}".encode())
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": self.cfg.model_dump(mode="json"),
            "input_hash": h.hexdigest(),
            "inputs": self.inputs,
            "seeds": {"seed": self.cfg.seed, "scenario_seed": self.cfg.scenario_seed},
            "files": {p.name: _sha256(p) for p in self.files},
        }
        _write_atomic(self.out / f"manifest-{self.command}.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        # wall-clock time stays out of the output files so reruns are byte-identical
        print(f"{self.command}: done in {time.perf_counter() - self.t0:.2f} s -> {self.out}", file=sys.stderr)


def _load_dataset(run: Run) -> Dataset:
    path = run.out / DATASET
    if not path.is_file():
        raise ValidationError(f"no dataset at {path}; run `bqnnpf gen` with the same config first")
    run.input(path)
    run.input(path.with_suffix(".json"))
    ds = Dataset.load(path)
    expected = run.cfg.scenario_config().to_dict()
    if ds.meta.get("scenario") != expected:
        raise ValidationError(f"dataset at {path} was generated with a different scenario config; regenerate it")
    return ds


def _load_checkpoint(run: Run, checkpoint: str | None) -> TrainedModel:
    path = Path(checkpoint) if checkpoint else run.out / CHECKPOINT
    if not path.is_file():
        raise ValidationError(f"checkpoint {path} does not exist; run `bqnnpf train` first")
    run.input(path)
    return TrainedModel.load(path)


def _check_dims(tm: TrainedModel, ds: Dataset) -> None:
    if ds.n_bus != tm.case.n or ds.n_branch != tm.case.n_branch:
        raise ValidationError(
            f"checkpoint is for {tm.case.n} buses/{tm.case.n_branch} branches, "
            f"dataset has {ds.n_bus}/{ds.n_branch}"
        )


def _composite_risk(tm: TrainedModel, data: Dataset, noise) -> float:
    return empirical_risk(tm.predictor(noise), data, lambda p, y: per_sample_loss(p, y, tm.case.n))


def cmd_gen(run: Run, args) -> None:
    case, ds = generate(run.cfg)
    csv = run.out / DATASET
    side = ds.save(csv)
    run.produced(csv)
    run.produced(side)


def cmd_train(run: Run, args) -> None:
    ds = _load_dataset(run)
    train, test = split(run.cfg, ds)
    resume = None
    if args.checkpoint:
        resume = _load_checkpoint(run, args.checkpoint)
        _check_dims(resume, ds)
        if resume.cfg.trainer.kind != run.cfg.trainer.kind or resume.cfg.model != run.cfg.model:
            raise ValidationError("checkpoint model/trainer settings differ from the config; cannot resume")
    try:
        tm = train_from_config(run.cfg, train, test, resume=resume)
    except DivergenceError as exc:
        good = exc.diagnostics.get("last_good")
        if good is not None:
            model = make_model(run.cfg, load_case(run.cfg.case), train.target_norm)
            tm = TrainedModel(run.cfg, model.case, model, train.input_norm)
            if run.cfg.trainer.kind == "variational":
                tm.posterior = good
            else:
                tm.params = good
            tm.save(run.out / "checkpoint.last_good.json")
        raise
    tm.save(run.out / CHECKPOINT)
    run.produced(run.out / CHECKPOINT)
    tm.log.to_csv(run.out / "train_log.csv")
    run.produced(run.out / "train_log.csv")


def _edim(cfg: ExperimentConfig, model, train: Dataset, noise) -> dict:
    m = cfg.metrics
    ecfg = EffDimConfig(
        gamma=m.gamma, n=len(train), draws=m.draws, classical_bound=m.classical_bound,
        seed=cfg.seed, quantum_only=m.quantum_only,
    )
    try:
        return json.loads(to_json(effective_dimension(model, train, ecfg, noise)))
    except ValidationError as exc:
        return {"error": str(exc)}


def _bound(cfg: ExperimentConfig, model, n: int, risk: float) -> dict:
    try:
        return json.loads(to_json(gen_error_bound(vc_dim_estimate(model), n, cfg.metrics.delta, risk)))
    except ValidationError as exc:
        return {"error": str(exc), "h": vc_dim_estimate(model), "n": n}


def cmd_eval(run: Run, args) -> None:
    ds = _load_dataset(run)
    tm = _load_checkpoint(run, args.checkpoint)
    _check_dims(tm, ds)
    tm.cfg = with_overrides(tm.cfg, {"trainer.S": run.cfg.trainer.S})
    train, test = split(tm.cfg, ds)
    noise = run.cfg.noise_spec()
    pc, pq = parameter_counts(tm.model)
    risk = _composite_risk(tm, train, noise)
    doc = {
        "trainer": tm.cfg.trainer.kind,
        "noise": None if noise is None else noise.to_dict(),
        "seeds": {"seed": tm.cfg.seed, "scenario_seed": tm.cfg.scenario_seed},
        "ensemble_size": tm.cfg.trainer.S if tm.bayesian else None,
        "test": json.loads(to_json(accuracy_report(tm.predictor(noise), test, tm.case))),
        "train": json.loads(to_json(accuracy_report(tm.predictor(noise), train, tm.case))),
        "empirical_risk_train": risk,
        "empirical_risk_test": _composite_risk(tm, test, noise),
        "parameters": {"classical": pc, "quantum": pq},
        "effective_dimension": _edim(run.cfg, tm.model, train, noise),
        "bound": _bound(run.cfg, tm.model, len(train), risk),
    }
    run.write("metrics.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    if tm.bayesian:
        ens = predict_bayes(tm.model, tm.posterior, test.x, tm.cfg.trainer.S, noise, np.random.default_rng(tm.cfg.seed))
        path = run.out / "predictive.csv"
        ens.to_csv(path, ds.columns()[2 * ds.n_bus :])
        run.produced(path)


def cmd_noise_sweep(run: Run, args) -> None:
    ds = _load_dataset(run)
    tm = _load_checkpoint(run, args.checkpoint)
    _check_dims(tm, ds)
    tm.cfg = with_overrides(tm.cfg, {"trainer.S": run.cfg.trainer.S})
    _, test = split(tm.cfg, ds)
    grid = args.grid if args.grid is not None else run.cfg.sweep.grid
    lines = ["channel,p,v_mse,phi_dev,p_dev"]
    for kind in run.cfg.sweep.channels:
        for p in grid:
            rep = accuracy_report(tm.predictor(NoiseSpec.single(kind, p)), test, tm.case)
            lines.append(f"{kind},{p!r},{rep.v_mse!r},{rep.phi_dev!r},{rep.p_dev!r}")
    run.write("noise_sweep.csv", "\n".join(lines) + "\n")


def cmd_edim(run: Run, args) -> None:
    ds = _load_dataset(run)
    train, _ = split(run.cfg, ds)
    if args.checkpoint:
        tm = _load_checkpoint(run, args.checkpoint)
        _check_dims(tm, ds)
        model = tm.model
    else:
        model = make_model(run.cfg, load_case(run.cfg.case), train.target_norm)
    doc = _edim(run.cfg, model, train, run.cfg.noise_spec())
    doc["model"] = model.to_dict()
    run.write("edim.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def cmd_bound(run: Run, args) -> None:
    ds = _load_dataset(run)
    train, _ = split(run.cfg, ds)
    if args.checkpoint:
        tm = _load_checkpoint(run, args.checkpoint)
        _check_dims(tm, ds)
        model, risk, source = tm.model, _composite_risk(tm, train, run.cfg.noise_spec()), "checkpoint"
    else:
        model, risk, source = make_model(run.cfg, load_case(run.cfg.case), train.target_norm), 0.0, "none"
    doc = _bound(run.cfg, model, len(train), risk)
    doc["risk_source"] = source
    doc["parameters"] = dict(zip(("classical", "quantum"), parameter_counts(model)))
    doc["hybrid"] = isinstance(model, HybridModel)
    run.write("bound.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "noise-sweep": cmd_noise_sweep,
    "edim": cmd_edim,
    "bound": cmd_bound,
}


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {v}")
    return v


def _grid(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bqnnpf", description="Hybrid quantum-classical power-flow experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config JSON path or preset name (1a..3c)")
        p.add_argument("--seed", type=_seed, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--checkpoint", help="checkpoint to evaluate or resume from")
        if name == "noise-sweep":
            p.add_argument("--grid", type=_grid, help="comma-separated noise levels, e.g. 0,0.05,0.1")
    return parser


def run_command(argv=None) -> int:
    """Run one command; raises package errors instead of mapping them to exit codes."""
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        cfg = with_overrides(cfg, overrides)
    with _locked(Path(cfg.out)) as out:
        run = Run(args.command, cfg, out)
        COMMANDS[args.command](run, args)
        run.finish()
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run_command(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        epoch = getattr(exc, "epoch", None)
        where = f" (epoch {epoch})" if epoch is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BqnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
