import csv
import hashlib
import json

import numpy as np
import pytest

from bqnnpf.bayes import sample_params
from bqnnpf.cli import LOCK, main, run_command
from bqnnpf.config import PRESETS, load_config
from bqnnpf.errors import ValidationError
from bqnnpf.metrics import accuracy_report
from bqnnpf.powerflow.scenarios import Dataset
from bqnnpf.runs import TrainedModel, split

BASE = {
    "case": "ieee6",
    "seed": 3,
    "scenario": {"penetration": 0.5, "count": 60},
    "model": {"kind": "hybrid", "m": 2, "layers": 1},
    "trainer": {"kind": "deterministic", "epochs": 3, "lr": 0.01, "batch_size": 16, "optimizer": "adam", "S": 4},
    "metrics": {"draws": 2},
    "sweep": {"channels": ["depolarizing"], "grid": [0.0, 0.1]},
}


def _config(tmp_path, name="cfg.json", **sections):
    doc = json.loads(json.dumps(BASE))
    for key, value in sections.items():
        if isinstance(value, dict):
            doc.setdefault(key, {}).update(value)
        else:
            doc[key] = value
    doc.setdefault("out", str(tmp_path / "run"))
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _hashes(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir()) if p.is_file()}


def _run(*argv):
    assert main(list(argv)) == 0


def _metrics(out):
    return json.loads((out / "metrics.json").read_text())


@pytest.fixture
def trained(tmp_path):
    cfg = _config(tmp_path)
    _run("gen", "--config", cfg)
    _run("train", "--config", cfg)
    return cfg, tmp_path / "run"


# ------------------------------------------------------------------- gen


def test_gen_writes_requested_rows(tmp_path):
    cfg = _config(tmp_path, scenario={"penetration": 0.0, "count": 1000})
    _run("gen", "--config", cfg)
    out = tmp_path / "run"
    with open(out / "dataset.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1001
    assert (out / "dataset.json").is_file()
    assert (out / "manifest-gen.json").is_file()
    assert len(Dataset.load(out / "dataset.csv")) == 1000


def test_gen_count_zero_is_validation_error(tmp_path, capsys):
    cfg = _config(tmp_path, scenario={"count": 0})
    assert main(["gen", "--config", cfg]) == 2
    assert "scenario.count" in capsys.readouterr().err
    assert not (tmp_path / "run" / "dataset.csv").exists()


def test_config_errors_name_every_field(tmp_path):
    cfg = _config(tmp_path, trainer={"lr": -1.0}, model={"m": 0})
    with pytest.raises(ValidationError) as info:
        run_command(["gen", "--config", cfg])
    assert "trainer.lr" in str(info.value) and "model.m" in str(info.value)


def test_unknown_config_field_rejected(tmp_path):
    cfg = _config(tmp_path, trainer={"learning_rate": 0.1})
    with pytest.raises(ValidationError, match="trainer.learning_rate"):
        run_command(["gen", "--config", cfg])


def test_missing_config_file(tmp_path):
    assert main(["gen", "--config", str(tmp_path / "nope.json")]) == 2


@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate(name):
    cfg = load_config(name)
    assert cfg.name == name and cfg.split.train_fraction == 0.6


def test_negative_seed_rejected_by_parser():
    with pytest.raises(SystemExit):
        main(["gen", "--config", "1c", "--seed", "-1"])


# ------------------------------------------------------------ reproducibility


@pytest.mark.parametrize("trainer", ["deterministic", "variational"])
def test_gen_train_eval_bit_identical(tmp_path, trainer):
    cfg = _config(tmp_path, trainer={"kind": trainer})
    out = tmp_path / "run"
    snapshots = []
    for _ in range(2):
        for cmd in ("gen", "train", "eval"):
            _run(cmd, "--config", cfg)
        snapshots.append(_hashes(out))
    assert snapshots[0] == snapshots[1]
    assert {"dataset.csv", "checkpoint.json", "train_log.csv", "metrics.json"} <= set(snapshots[0])


def test_seed_flag_changes_outputs(tmp_path):
    cfg = _config(tmp_path)
    _run("gen", "--config", cfg, "--out", str(tmp_path / "a"))
    _run("gen", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4")
    assert _hashes(tmp_path / "a")["dataset.csv"] != _hashes(tmp_path / "b")["dataset.csv"]


def test_manifest_lists_outputs(trained):
    _, out = trained
    man = json.loads((out / "manifest-train.json").read_text())
    assert man["command"] == "train"
    assert set(man["files"]) == {"checkpoint.json", "train_log.csv"}
    assert "dataset.csv" in man["inputs"]
    assert "wall" not in json.dumps(man)


# ------------------------------------------------------------------ train


def test_train_single_epoch_log(tmp_path):
    cfg = _config(tmp_path, trainer={"epochs": 1})
    _run("gen", "--config", cfg)
    _run("train", "--config", cfg)
    lines = (tmp_path / "run" / "train_log.csv").read_text().splitlines()
    assert len(lines) == 2


def test_variational_log_columns(tmp_path):
    cfg = _config(tmp_path, trainer={"kind": "variational", "epochs": 1})
    _run("gen", "--config", cfg)
    _run("train", "--config", cfg)
    header = (tmp_path / "run" / "train_log.csv").read_text().splitlines()[0].split(",")
    assert {"elbo", "kl", "log_likelihood"} <= set(header)


def test_train_without_dataset_fails(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["train", "--config", cfg]) == 2
    assert "gen" in capsys.readouterr().err


@pytest.mark.parametrize("trainer", ["deterministic", "variational"])
def test_resume_matches_uninterrupted(tmp_path, trainer):
    full = _config(tmp_path, "full.json", trainer={"kind": trainer, "epochs": 4}, out=str(tmp_path / "full"))
    first = _config(tmp_path, "first.json", trainer={"kind": trainer, "epochs": 2}, out=str(tmp_path / "part"))
    rest = _config(tmp_path, "rest.json", trainer={"kind": trainer, "epochs": 4}, out=str(tmp_path / "part"))
    for cfg in (full, first):
        _run("gen", "--config", cfg)
        _run("train", "--config", cfg)
    (tmp_path / "half.json").write_bytes((tmp_path / "part" / "checkpoint.json").read_bytes())
    _run("train", "--config", rest, "--checkpoint", str(tmp_path / "half.json"))
    a = (tmp_path / "full" / "train_log.csv").read_text()
    b = (tmp_path / "part" / "train_log.csv").read_text()
    assert a == b
    ca = json.loads((tmp_path / "full" / "checkpoint.json").read_text())
    cb = json.loads((tmp_path / "part" / "checkpoint.json").read_text())
    assert ca.get("params") == cb.get("params") and ca.get("posterior") == cb.get("posterior")


def test_resume_with_mismatched_model_rejected(trained, tmp_path):
    cfg, out = trained
    other = _config(tmp_path, "other.json", model={"layers": 2})
    assert main(["train", "--config", other, "--checkpoint", str(out / "checkpoint.json")]) == 2


def test_divergence_exit_code_keeps_last_good(tmp_path, capsys):
    cfg = _config(tmp_path, trainer={"lr": 1e12, "optimizer": "gd", "epochs": 5})
    _run("gen", "--config", cfg)
    assert main(["train", "--config", cfg]) == 3
    assert "epoch" in capsys.readouterr().err
    assert (tmp_path / "run" / "checkpoint.last_good.json").is_file()


# ------------------------------------------------------------------- eval


@pytest.mark.parametrize("trainer", ["deterministic", "variational"])
def test_eval_train_risk_matches_log(tmp_path, trainer):
    cfg = _config(tmp_path, trainer={"kind": trainer})
    _run("gen", "--config", cfg)
    _run("train", "--config", cfg)
    _run("eval", "--config", cfg)
    out = tmp_path / "run"
    last = (out / "train_log.csv").read_text().splitlines()
    header, row = last[0].split(","), last[-1].split(",")
    logged = float(row[header.index("train_loss")])
    assert abs(_metrics(out)["empirical_risk_train"] - logged) < 1e-9


def test_eval_reports_all_sections(tmp_path):
    # 200 rows give 120 training samples, above the 92 parameters of the model
    cfg = _config(tmp_path, scenario={"count": 200})
    out = tmp_path / "run"
    for cmd in ("gen", "train", "eval"):
        _run(cmd, "--config", cfg)
    doc = _metrics(out)
    assert set(doc["test"]) == {"v_mse", "phi_dev", "p_dev"}
    assert doc["bound"]["h"] == doc["parameters"]["classical"] + doc["parameters"]["quantum"]
    assert doc["bound"]["bound"] >= doc["bound"]["empirical_risk"]
    assert doc["effective_dimension"]["d_eff_raw"] >= 0


def test_eval_single_member_equals_drawn_sample(tmp_path):
    cfg = _config(tmp_path, trainer={"kind": "variational", "S": 1})
    _run("gen", "--config", cfg)
    _run("train", "--config", cfg)
    _run("eval", "--config", cfg)
    out = tmp_path / "run"
    tm = TrainedModel.load(out / "checkpoint.json")
    theta = sample_params(tm.posterior, np.random.default_rng([tm.cfg.seed, 0]))
    _, test = split(tm.cfg, Dataset.load(out / "dataset.csv"))
    rep = accuracy_report(lambda x: tm.model.predict(theta, x), test, tm.case)
    assert _metrics(out)["test"] == {"v_mse": rep.v_mse, "phi_dev": rep.phi_dev, "p_dev": rep.p_dev}
    assert (out / "predictive.csv").is_file()


def test_eval_noise_off_equals_zero_noise(trained, tmp_path):
    cfg, out = trained
    _run("eval", "--config", cfg)
    off = _metrics(out)
    zero = _config(tmp_path, "zero.json", noise={"p_bitflip": 0.0, "p_phaseflip": 0.0, "p_depolarizing": 0.0})
    _run("eval", "--config", zero)
    on = _metrics(out)
    for key in ("test", "train", "empirical_risk_train", "empirical_risk_test", "effective_dimension", "bound"):
        assert off[key] == on[key], key


def test_eval_dimension_mismatch(trained, tmp_path):
    _, out = trained
    cfg30 = _config(tmp_path, "c30.json", case="ieee30", scenario={"count": 20}, out=str(tmp_path / "r30"))
    _run("gen", "--config", cfg30)
    assert main(["eval", "--config", cfg30, "--checkpoint", str(out / "checkpoint.json")]) == 2


# ------------------------------------------------------------ noise sweep


def _sweep_rows(out):
    with open(out / "noise_sweep.csv") as fh:
        return list(csv.DictReader(fh))


def test_sweep_zero_matches_noiseless_eval(trained):
    cfg, out = trained
    _run("eval", "--config", cfg)
    _run("noise-sweep", "--config", cfg, "--grid", "0")
    rows = _sweep_rows(out)
    assert len(rows) == 1
    test = _metrics(out)["test"]
    assert float(rows[0]["v_mse"]) == test["v_mse"]
    assert float(rows[0]["phi_dev"]) == test["phi_dev"]
    assert float(rows[0]["p_dev"]) == test["p_dev"]


def test_sweep_row_count_per_channel(trained, tmp_path):
    _, out = trained
    cfg = _config(tmp_path, "all.json", sweep={"channels": ["bitflip", "phaseflip", "depolarizing"]})
    _run("noise-sweep", "--config", cfg, "--grid", "0,0.05,0.1")
    rows = _sweep_rows(out)
    assert len(rows) == 9
    for kind in ("bitflip", "phaseflip", "depolarizing"):
        assert [float(r["p"]) for r in rows if r["channel"] == kind] == [0.0, 0.05, 0.1]


def test_depolarizing_noise_increases_v_mse(tmp_path):
    cfg = _config(tmp_path, scenario={"count": 120}, trainer={"epochs": 30})
    _run("gen", "--config", cfg)
    _run("train", "--config", cfg)
    _run("noise-sweep", "--config", cfg)
    rows = {float(r["p"]): float(r["v_mse"]) for r in _sweep_rows(tmp_path / "run")}
    assert rows[0.1] > rows[0.0]


# ------------------------------------------------------------- edim, bound


def test_edim_and_bound_commands(trained):
    cfg, out = trained
    _run("edim", "--config", cfg)
    _run("bound", "--config", cfg, "--checkpoint", str(out / "checkpoint.json"))
    edim = json.loads((out / "edim.json").read_text())
    bound = json.loads((out / "bound.json").read_text())
    assert 0 <= edim["d_eff_normalized"] < 1.1
    assert bound["risk_source"] == "checkpoint" and bound["h"] > 0


def test_bound_reports_n_not_above_h(trained):
    # 36 training rows against a 100+ parameter model: the bound is flagged, not computed
    cfg, out = trained
    _run("bound", "--config", cfg)
    doc = json.loads((out / "bound.json").read_text())
    assert "error" in doc and doc["n"] <= doc["h"]


# ------------------------------------------------------------------- lock


def test_locked_output_directory(trained, capsys):
    cfg, out = trained
    (out / LOCK).write_text("123")
    assert main(["eval", "--config", cfg]) == 2
    assert "locked" in capsys.readouterr().err
    (out / LOCK).unlink()
    _run("eval", "--config", cfg)
    assert not (out / LOCK).exists()


def test_commands_do_not_touch_inputs(trained):
    cfg, out = trained
    before = _hashes(out)
    _run("eval", "--config", cfg)
    after = _hashes(out)
    for name in ("dataset.csv", "dataset.json", "checkpoint.json", "train_log.csv"):
        assert before[name] == after[name]
