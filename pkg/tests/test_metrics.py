import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqnnpf.errors import ValidationError
from bqnnpf.metrics import (
    AccuracyReport,
    EffDimConfig,
    accuracy_from_arrays,
    accuracy_report,
    effective_dimension,
    effective_dimension_from_fishers,
    empirical_fisher,
    empirical_risk,
    epochs_to_target,
    fisher_from_scores,
    gen_error_bound,
    to_json,
    vc_dim_estimate,
    zeta_of,
)
from bqnnpf.model import HybridModel, MLPModel
from bqnnpf.quantum import CircuitSpec

from builders import LinearToy, ScalarSlope, toy_target_norm, two_bus


@pytest.fixture
def hybrid(rng):
    case = two_bus(r=0.02, x=0.1, b_charge=0.03)
    model = HybridModel(case, CircuitSpec(2, 2), toy_target_norm(case, rng))
    x = rng.normal(size=(6, 4))
    y = rng.normal(size=(6, model.n_outputs))
    return model, model.init_params(rng), x, y


# ----------------------------------------------------------------- Fisher


def test_fisher_zero_residual_is_zero(hybrid):
    model, params, x, _ = hybrid
    y = model.predict(params, x)
    f = empirical_fisher(model, params, (x, y), 0.5)
    np.testing.assert_array_equal(f.matrix, 0.0)
    assert f.sample_count == 6 and f.sigma_obs == 0.5


def test_fisher_scalar_model_is_residual_squared():
    r = 0.37
    f = empirical_fisher(ScalarSlope(), np.array([1.2]), (np.array([[1.0]]), np.array([[1.2 + r]])), 1.0)
    assert f.matrix.shape == (1, 1)
    assert f.matrix[0, 0] == pytest.approx(r**2, rel=1e-12)


def test_fisher_symmetric_psd(hybrid, rng):
    model, params, x, y = hybrid
    f = empirical_fisher(model, params, (x, y), 0.3).matrix
    np.testing.assert_allclose(f, f.T, atol=1e-10)
    for v in rng.normal(size=(100, f.shape[0])):
        assert v @ f @ v >= -1e-10


def test_fisher_rejects_empty_and_bad_sigma():
    m = ScalarSlope()
    with pytest.raises(ValidationError):
        empirical_fisher(m, np.ones(1), (np.zeros((0, 1)), np.zeros((0, 1))), 1.0)
    with pytest.raises(ValidationError):
        empirical_fisher(m, np.ones(1), (np.ones((1, 1)), np.ones((1, 1))), 0.0)


def test_fisher_from_scores_is_mean_outer_product(rng):
    g = rng.normal(size=(5, 3))
    expected = sum(np.outer(row, row) for row in g) / 5
    np.testing.assert_allclose(fisher_from_scores(g).matrix, expected, rtol=1e-12)


# --------------------------------------------------- effective dimension


@pytest.mark.parametrize("seed", range(5))
def test_logdet_path_matches_direct_determinant(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(5, 5))
    f = a @ a.T
    # a single draw at trace d makes the trace normalization the identity map
    f *= 5 / np.trace(f)
    res = effective_dimension_from_fishers([f], 1.0, 1000)
    direct = 2 * np.log(np.sqrt(np.linalg.det(np.eye(5) + res.zeta * f))) / np.log(res.zeta)
    assert res.d_eff_raw == pytest.approx(direct, rel=1e-8)
    assert res.trace_norm_factor == pytest.approx(1.0, rel=1e-12)


def test_zero_fisher_gives_zero_dimension():
    res = effective_dimension_from_fishers(np.zeros((4, 3, 3)), 1.0, 1000)
    assert res.d_eff_raw == 0.0 and res.d_eff_normalized == 0.0


def test_identity_fisher_closed_form():
    zeta = 1000 / (2 * np.pi * np.log(1000))
    assert zeta == pytest.approx(23.04, abs=0.01)
    expected = np.log(1 + zeta) / np.log(zeta)
    res = effective_dimension_from_fishers(np.broadcast_to(np.eye(7), (3, 7, 7)), 1.0, 1000)
    assert res.d_eff_normalized == pytest.approx(expected, abs=1e-6)
    assert res.d_eff_normalized == pytest.approx(1.014, abs=1e-3)
    assert res.d_eff_raw == pytest.approx(7 * expected, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_effective_dimension_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 6, 3))
    fs = a @ np.transpose(a, (0, 2, 1))
    base = effective_dimension_from_fishers(fs, 0.8, 500)
    scaled = effective_dimension_from_fishers(c * fs, 0.8, 500)
    assert scaled.d_eff_raw == pytest.approx(base.d_eff_raw, rel=1e-9)


def test_effective_dimension_rejects_small_zeta():
    assert zeta_of(1.0, 10) < 1
    with pytest.raises(ValidationError, match="zeta"):
        effective_dimension_from_fishers(np.ones((1, 2, 2)), 1.0, 10)


def test_effdim_config_validation():
    for bad in ({"gamma": 0.0}, {"gamma": 1.5}, {"draws": 0}, {"n": 1}, {"classical_bound": 0.0}):
        with pytest.raises(ValidationError):
            EffDimConfig(**bad)


def test_effective_dimension_on_model_deterministic_and_bounded(hybrid):
    model, _, x, y = hybrid
    cfg = EffDimConfig(gamma=1.0, n=1000, draws=4, seed=3)
    a = effective_dimension(model, (x, y), cfg)
    b = effective_dimension(model, (x, y), cfg)
    assert a == b
    assert 0 < a.d_eff_normalized < 1.1
    assert a.config["n"] == 1000 and a.d == model.n_params


def test_effective_dimension_quantum_only(hybrid):
    model, _, x, y = hybrid
    res = effective_dimension(model, (x, y), EffDimConfig(n=1000, draws=2, quantum_only=True))
    assert res.d == model.circuit.n_params


# ------------------------------------------------------------ VC and risk


def test_vc_dim_six_bus_hybrid(ieee6, small_data):
    _, train, _ = small_data
    model = HybridModel(ieee6, CircuitSpec(4, 2), train.target_norm)
    assert vc_dim_estimate(model) == (12 * 8 + 8) + (2 * 4 * 2) + (4 * 12 + 12) == 180


def test_vc_dim_mlp_counts_weights_and_biases(ieee6, small_data):
    _, train, _ = small_data
    model = MLPModel(ieee6, (16, 8), train.target_norm)
    assert vc_dim_estimate(model) == (12 * 16 + 16) + (16 * 8 + 8) + (8 * 12 + 12)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_vc_dim_extra_layer_adds_two_m(m, ieee6, small_data):
    _, train, _ = small_data
    one = HybridModel(ieee6, CircuitSpec(m, 1), train.target_norm)
    two = HybridModel(ieee6, CircuitSpec(m, 2), train.target_norm)
    assert vc_dim_estimate(two) - vc_dim_estimate(one) == 2 * m


def test_empirical_risk_perfect_is_zero(rng):
    model = LinearToy()
    p = model.init_params(rng)
    x = rng.normal(size=(5, 4))
    assert empirical_risk(lambda z: model.predict(p, z), (x, model.predict(p, x))) == 0.0


def test_empirical_risk_constant_predictor(rng):
    y = rng.normal(size=(8, 4))
    y -= y.mean(axis=0)
    expected = sum(float(row @ row) for row in y) / 8
    risk = empirical_risk(lambda z: np.zeros((z.shape[0], 4)), (np.zeros((8, 2)), y))
    assert risk == pytest.approx(expected, rel=1e-12)


def test_empirical_risk_duplicate_invariant(rng):
    x, y = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    fn = lambda z: 0.5 * z  # noqa: E731
    assert empirical_risk(fn, (np.r_[x, x], np.r_[y, y])) == pytest.approx(empirical_risk(fn, (x, y)), rel=1e-12)


def test_empirical_risk_empty_rejected():
    with pytest.raises(ValidationError):
        empirical_risk(lambda z: z, (np.zeros((0, 2)), np.zeros((0, 2))))


# ------------------------------------------------------------------ bound


def test_bound_reference_value():
    res = gen_error_bound(100, 1000, 0.05, 0.0)
    direct = np.sqrt((100 * (np.log(10) + 1) + np.log(20)) / 1000)
    assert res.complexity_term == pytest.approx(direct, rel=1e-12)
    assert abs(res.complexity_term - 0.5773) < 1e-4
    assert res.bound == res.complexity_term


def test_bound_vanishes_for_huge_n():
    res = gen_error_bound(100, 10**9, 0.05, 0.2)
    assert abs(res.bound - 0.2) < 1e-2


def test_bound_delta_one_drops_confidence_term():
    res = gen_error_bound(10, 200, 1.0, 0.0)
    assert res.complexity_term == pytest.approx(np.sqrt(10 * (np.log(20) + 1) / 200), rel=1e-12)


def test_bound_monotonicity_grid():
    hs = [1, 5, 20, 50]
    ns = [100, 300, 1000, 5000]
    ds = [0.01, 0.05, 0.2, 0.9]
    for n in ns:
        for d in ds:
            vals = [gen_error_bound(h, n, d, 0.1).bound for h in hs]
            assert np.all(np.diff(vals) > 0)
    for h in hs:
        for d in ds:
            vals = [gen_error_bound(h, n, d, 0.1).bound for n in ns]
            assert np.all(np.diff(vals) < 0)
        for n in ns:
            vals = [gen_error_bound(h, n, d, 0.1).bound for d in ds]
            assert np.all(np.diff(vals) < 0)


@given(st.integers(1, 500), st.integers(1, 10**6), st.floats(1e-6, 1.0), st.floats(0, 10))
def test_bound_dominates_risk(h, extra, delta, risk):
    res = gen_error_bound(h, h + extra, delta, risk)
    assert res.complexity_term >= 0 and res.bound >= res.empirical_risk


@pytest.mark.parametrize(
    "args",
    [(100, 100, 0.05, 0.0), (100, 50, 0.05, 0.0), (0, 10, 0.05, 0.0), (5, 10, 0.0, 0.0), (5, 10, 1.5, 0.0), (5, 10, 0.1, -1.0)],
)
def test_bound_rejects_invalid(args):
    with pytest.raises(ValidationError):
        gen_error_bound(*args)


# --------------------------------------------------------------- accuracy


def _vectors(n, nb, rng):
    truth = rng.normal(size=(4, 2 * n + 2 * nb))
    return truth, truth.copy()


def test_accuracy_perfect(rng):
    truth, pred = _vectors(3, 2, rng)
    assert accuracy_from_arrays(pred, truth, 3, 2, 100.0) == AccuracyReport(0.0, 0.0, 0.0)


def test_accuracy_angle_threshold_counting():
    n, nb = 4, 1
    truth = np.zeros((1, 2 * n + 2 * nb))
    pred = truth.copy()
    pred[0, n : 2 * n] = [0.01, 0.06, -0.04, -0.10]
    assert accuracy_from_arrays(pred, truth, n, nb, 100.0).phi_dev == 0.5


def test_accuracy_uniform_voltage_error(rng):
    truth, pred = _vectors(3, 2, rng)
    pred[:, :3] += 0.05
    assert accuracy_from_arrays(pred, truth, 3, 2, 100.0).v_mse == pytest.approx(2.5, rel=1e-9)


def test_accuracy_flow_threshold_uses_base_mva():
    n, nb = 1, 4
    truth = np.zeros((1, 2 * n + 2 * nb))
    pred = truth.copy()
    pred[0, 2 : 2 + nb] = [0.04, 0.06, -0.051, 0.0]
    assert accuracy_from_arrays(pred, truth, n, nb, 100.0).p_dev == 0.5
    assert accuracy_from_arrays(pred, truth, n, nb, 10.0).p_dev == 0.0


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=30))
def test_accuracy_counts_match_direct_threshold(errs):
    n = len(errs)
    truth = np.zeros((1, 2 * n + 2))
    pred = truth.copy()
    pred[0, n : 2 * n] = errs
    rep = accuracy_from_arrays(pred, truth, n, 1, 100.0)
    assert rep.phi_dev == sum(abs(e) > 0.05 for e in errs) / n
    assert 0 <= rep.phi_dev <= 1


def test_accuracy_report_denormalizes(ieee6, small_data):
    _, _, test = small_data
    rep = accuracy_report(lambda x: test.y, test, ieee6)
    assert rep.v_mse < 1e-20 and rep.phi_dev == 0.0 and rep.p_dev == 0.0


def test_accuracy_shape_mismatch_rejected(rng):
    with pytest.raises(ValidationError):
        accuracy_from_arrays(np.zeros((2, 10)), np.zeros((2, 9)), 3, 2, 100.0)


# -------------------------------------------------------- epochs to target


def _reports(pairs):
    return [AccuracyReport(0.0, phi, p) for phi, p in pairs]


def test_epochs_to_target_immediate():
    assert epochs_to_target(_reports([(0.0, 0.0), (0.5, 0.5)]), 5) == 1


def test_epochs_to_target_never():
    assert epochs_to_target(_reports([(0.2, 0.0)] * 5), 5) is None


def test_epochs_to_target_needs_both():
    log = _reports([(0.01, 0.2), (0.2, 0.01), (0.05, 0.05)])
    assert epochs_to_target(log, 3) == 3


def test_epochs_to_target_callable_and_dict_rows():
    assert epochs_to_target(lambda e: AccuracyReport(0, 0.1 / e, 0.0), 10) == 2
    assert epochs_to_target([{"phi_dev": 0.3, "p_dev": 0}, {"phi_dev": 0.0, "p_dev": 0}], 2) == 2


def test_epochs_to_target_respects_max_epochs():
    assert epochs_to_target(_reports([(0.2, 0.0), (0.0, 0.0)]), 1) is None
    with pytest.raises(ValidationError):
        epochs_to_target([], 0)


@given(st.lists(st.tuples(st.floats(0, 0.2), st.floats(0, 0.2)), min_size=1, max_size=20), st.floats(0, 0.2), st.floats(0, 0.2))
def test_epochs_to_target_monotone_in_tolerance(pairs, t_loose, t_tight):
    t_tight, t_loose = sorted((t_tight, t_loose))
    log = _reports(pairs)
    loose = epochs_to_target(log, len(log), phi_tol=t_loose)
    tight = epochs_to_target(log, len(log), phi_tol=t_tight)
    if loose is None:
        assert tight is None
    elif tight is not None:
        assert tight >= loose


def test_to_json_is_stable():
    text = to_json(gen_error_bound(100, 1000, 0.05, 0.0))
    assert json.loads(text)["h"] == 100
    assert text == to_json(gen_error_bound(100, 1000, 0.05, 0.0))
    assert json.loads(to_json({"a": np.float64(1.5), "b": np.arange(2)})) == {"a": 1.5, "b": [0, 1]}
