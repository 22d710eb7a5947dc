"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``python -m pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``. Criterion 6 trains six 300-epoch models
and takes roughly ten minutes on one core.
"""

import hashlib
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bqnnpf.bayes import PriorSpec, kl_gaussian, inverse_softplus, VariationalPosterior, train_vi
from bqnnpf.cli import main as cli_main
from bqnnpf.config import load_config, with_overrides
from bqnnpf.metrics import (
    EffDimConfig,
    effective_dimension,
    effective_dimension_from_fishers,
    gen_error_bound,
)
from bqnnpf.model import HybridModel, dataset_loss, grad
from bqnnpf.powerflow import load_case, solve_nr
from bqnnpf.quantum import CircuitSpec, NoiseSpec, StateVector, apply_gate, cnot, evaluate_batch, init_state, ry, rz
from bqnnpf.runs import directional_comparison, generate, split, train_from_config

from builders import ScalarSlope, toy_target_norm, two_bus
from oracles import conjugate_slope_posterior, five_point_diff, gauss_seidel, kl_monte_carlo

GOLDEN = json.loads((Path(__file__).parent / "golden" / "gates.json").read_text())
SEEDS = (0, 1, 2)


@pytest.fixture
def verdict(capsys):
    """Print ``PASS``/``FAIL`` for a criterion, then assert it."""

    def report(label: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}", flush=True)
        assert ok, f"{label}: {detail}"

    return report


# ------------------------------------------------------------ 1 power flow


@pytest.mark.parametrize("name", ["ieee6", "ieee30"])
def test_criterion_1_power_flow(name, verdict):
    case = load_case(name)
    t0 = time.perf_counter()
    sol = solve_nr(case, tol=1e-8)
    elapsed = time.perf_counter() - t0
    v, phi, _ = gauss_seidel(case)
    dv = float(np.max(np.abs(sol.v - v)))
    dphi = float(np.max(np.abs(sol.phi - phi)))
    ok = sol.iterations <= 10 and sol.max_mismatch <= 1e-8 and dv <= 1e-6 and dphi <= 1e-6 and elapsed < 1.0
    verdict(
        f"1 power flow [{name}]",
        ok,
        f"{sol.iterations} iterations, mismatch {sol.max_mismatch:.1e}, |dV| {dv:.1e}, |dphi| {dphi:.1e}, {elapsed:.3f} s",
    )


# --------------------------------------------------------------- 2 quantum


def test_criterion_2_quantum_simulator(verdict):
    worst_golden = 0.0
    for c in GOLDEN["cases"]:
        state = StateVector(np.array([complex(*a) for a in c["input"]]))
        for kind, a, b in c["gates"]:
            apply_gate(state, {"ry": ry, "rz": rz, "cnot": cnot}[kind](a, b))
        expected = np.array([complex(*a) for a in c["expected"]])
        worst_golden = max(worst_golden, float(np.max(np.abs(state.amplitudes - expected))))

    rng = np.random.default_rng(2024)
    state = init_state(5)
    for _ in range(100):
        k = rng.integers(3)
        if k == 2:
            apply_gate(state, cnot(*rng.choice(5, 2, replace=False)))
        else:
            apply_gate(state, (ry, rz)[k](rng.uniform(-np.pi, np.pi), int(rng.integers(5))))
    drift = abs(state.norm_sq() - 1.0)

    worst_dm = 0.0
    for m, layers in [(1, 1), (2, 2), (3, 2), (4, 3)]:
        spec = CircuitSpec(m, layers)
        f = rng.uniform(-np.pi, np.pi, (8, 2 * m))
        p = rng.uniform(-np.pi, np.pi, spec.n_params)
        sv = evaluate_batch(f, p, spec)
        dm = evaluate_batch(f, p, spec, NoiseSpec(0.0, 0.0, 0.0), density=True)
        worst_dm = max(worst_dm, float(np.max(np.abs(sv - dm))))

    ok = worst_golden < 1e-12 and drift < 1e-10 and worst_dm < 1e-10
    verdict(
        "2 quantum simulator",
        ok,
        f"{len(GOLDEN['cases'])} golden vectors (max err {worst_golden:.1e}), "
        f"norm drift {drift:.1e} over 100 gates, DM vs SV {worst_dm:.1e}",
    )


# -------------------------------------------------------------- 3 gradient


@pytest.mark.parametrize("noisy", [False, True], ids=["noiseless", "p=0.1"])
def test_criterion_3_gradient_fidelity(noisy, verdict):
    rng = np.random.default_rng(31)
    case = two_bus(r=0.02, x=0.1, b_charge=0.03)
    model = HybridModel(case, CircuitSpec(2, 2), toy_target_norm(case, rng))
    params = model.init_params(rng)
    batch = (rng.normal(size=(4, 4)), rng.normal(size=(4, model.n_outputs)))
    noise = NoiseSpec(0.1, 0.1, 0.1) if noisy else None

    t0 = time.perf_counter()
    g = grad(model, params, batch, noise)
    elapsed = time.perf_counter() - t0
    fd = five_point_diff(lambda p: dataset_loss(model, p, batch, noise), params, 1e-4)
    big = np.abs(fd) > 1e-6
    rel = float(np.max(np.abs(g - fd)[big] / np.abs(fd)[big]))
    small = float(np.max(np.abs(g - fd)[~big], initial=0.0))
    ok = rel < 1e-5 and small < 1e-8 and elapsed < 30
    verdict(
        f"3 gradient fidelity [{'p=0.1 channels' if noisy else 'noiseless'}]",
        ok,
        f"{params.size} parameters, max relative error {rel:.1e}, analytic gradient in {elapsed:.2f} s",
    )


# ----------------------------------------------------------------- 4 Bayes


def test_criterion_4a_kl_closed_form_vs_monte_carlo(verdict):
    rng = np.random.default_rng(44)
    mu = rng.normal(0, 0.5, 10)
    sigma = rng.uniform(0.1, 2.0, 10)
    post = VariationalPosterior(mu, inverse_softplus(sigma))
    closed = kl_gaussian(post, PriorSpec(1.0))
    mc = kl_monte_carlo(mu, sigma, 1.0, 100_000, rng)
    rel = abs(mc - closed) / closed
    verdict("4a KL closed form vs Monte Carlo", rel < 0.02, f"closed {closed:.4f}, MC {mc:.4f}, rel diff {rel:.2%}")


def test_criterion_4b_conjugate_posterior(verdict):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 4))
    y = 0.7 * x + rng.normal(size=x.shape)
    mean, std = conjugate_slope_posterior(x, y, 1.0, 1.0)
    post, _ = train_vi(ScalarSlope(), (x, y), 800, 0.1, 200, PriorSpec(1.0), 1.0, 0, eval_samples=2)
    e_mu = abs(post.mean[0] - mean) / abs(mean)
    e_sd = abs(post.sigma[0] - std) / std
    verdict(
        "4b conjugate toy posterior",
        e_mu < 0.05 and e_sd < 0.05,
        f"mu {post.mean[0]:.4f} vs {mean:.4f} ({e_mu:.2%}), sigma {post.sigma[0]:.4f} vs {std:.4f} ({e_sd:.2%})",
    )


# --------------------------------------------------------------- 5 metrics


def test_criterion_5a_bound_reference(verdict):
    c = gen_error_bound(100, 1000, 0.05, 0.0).complexity_term
    verdict("5a generalization bound", abs(c - 0.5773) <= 1e-4, f"complexity term {c:.6f} (target 0.5773)")


def test_criterion_5b_identity_fisher(verdict):
    res = effective_dimension_from_fishers(np.broadcast_to(np.eye(12), (5, 12, 12)), 1.0, 1000)
    zeta = res.zeta
    expected = np.log(1 + zeta) / np.log(zeta)
    err = abs(res.d_eff_normalized - expected)
    verdict("5b identity-Fisher effective dimension", err < 1e-6, f"{res.d_eff_normalized:.8f} vs {expected:.8f}")


@pytest.mark.parametrize("trainer", ["deterministic", "variational"])
def test_criterion_5c_trained_effective_dimension(trainer, verdict):
    cfg = with_overrides(load_config("1c"), {"trainer.kind": trainer, "trainer.epochs": 30})
    case, ds = generate(cfg)
    train, test = split(cfg, ds)
    tm = train_from_config(cfg, train, test, track_accuracy=False)
    m = cfg.metrics
    res = effective_dimension(tm.model, train, EffDimConfig(m.gamma, len(train), m.draws, m.classical_bound, cfg.seed))
    ok = 0 < res.d_eff_normalized < 1.1 and abs(res.d_eff_normalized - 0.44) <= 0.5
    verdict(
        f"5c trained 4-qubit effective dimension [{trainer}]",
        ok,
        f"d_eff_normalized {res.d_eff_normalized:.3f} (d={res.d}, n={len(train)}, K={m.draws})",
    )


# ------------------------------------------------------- 6 directional claims


@pytest.fixture(scope="module")
def comparison():
    cfg = load_config("1c")
    t0 = time.perf_counter()
    outcomes = directional_comparison(cfg, SEEDS, noise_p=0.1)
    for o in outcomes:
        print(f"  seed {o.seed} {o.trainer}: {o}", file=sys.stderr)
    return outcomes, time.perf_counter() - t0


def _by_trainer(outcomes, attr):
    out = {}
    for t in ("deterministic", "variational"):
        out[t] = [getattr(o, attr) for o in outcomes if o.trainer == t]
    return out


@pytest.mark.slow
def test_criterion_6a_bqnn_v_mse_not_worse(comparison, verdict):
    outcomes, elapsed = comparison
    v = _by_trainer(outcomes, "v_mse")
    q, b = statistics.median(v["deterministic"]), statistics.median(v["variational"])
    verdict(
        "6a BQNN test v_mse <= QNN (median over seeds)",
        b <= q and elapsed < 7200,
        f"QNN {q:.5f} vs BQNN {b:.5f} (per seed QNN {np.round(v['deterministic'], 5).tolist()}, "
        f"BQNN {np.round(v['variational'], 5).tolist()}); comparison took {elapsed / 60:.1f} min",
    )


@pytest.mark.slow
def test_criterion_6b_noise_degrades_both(comparison, verdict):
    outcomes, _ = comparison
    clean = _by_trainer(outcomes, "v_mse")
    noisy = _by_trainer(outcomes, "v_mse_noisy")
    ratios = {t: statistics.median(n / c for n, c in zip(noisy[t], clean[t])) for t in clean}
    verdict(
        "6b p=0.1 depolarizing raises v_mse >= 2x on both models",
        all(r >= 2 for r in ratios.values()),
        f"median ratio QNN {ratios['deterministic']:.1f}x, BQNN {ratios['variational']:.1f}x",
    )


@pytest.mark.slow
def test_criterion_6c_bqnn_reaches_target_no_later(comparison, verdict):
    outcomes, _ = comparison
    cap = load_config("1c").trainer.epochs + 1
    ett = _by_trainer(outcomes, "epochs_to_target")
    # a run that never meets the target ranks after every run that does
    med = {t: statistics.median(e if e is not None else cap for e in v) for t, v in ett.items()}
    verdict(
        "6c BQNN epochs-to-target <= QNN (median over seeds)",
        med["variational"] <= med["deterministic"],
        f"QNN {med['deterministic']} vs BQNN {med['variational']} "
        f"(per seed QNN {ett['deterministic']}, BQNN {ett['variational']})",
    )


# ------------------------------------------------------- 7 reproducibility


@pytest.mark.parametrize("trainer", ["deterministic", "variational"])
def test_criterion_7_reproducibility(trainer, tmp_path, verdict):
    doc = load_config("1c").model_dump(mode="json")
    doc.update(out=str(tmp_path / "run"), seed=5)
    doc["scenario"]["count"] = 200
    doc["trainer"].update(kind=trainer, epochs=3, S=4)
    doc["metrics"]["draws"] = 3
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    snapshots = []
    for _ in range(2):
        for cmd in ("gen", "train", "eval"):
            assert cli_main([cmd, "--config", str(cfg)]) == 0
        snapshots.append(
            {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted((tmp_path / "run").iterdir()) if p.is_file()}
        )
    same = snapshots[0] == snapshots[1]
    verdict(f"7 reproducibility [{trainer}]", same, f"{len(snapshots[0])} output files, identical hashes: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s", "-p", "no:cacheprovider"]))
