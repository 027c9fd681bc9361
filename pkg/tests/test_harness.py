"""Tests for experiment configs, canonical reports, and the study runners."""

import math

import numpy as np
import pytest

import roughsk
from roughsk.errors import BlowUp, InsufficientData, ValidationError
from roughsk.harness import (
    DEFAULT_EPSILONS,
    AveragingReport,
    ConvergenceReport,
    EpsScaled,
    ExperimentConfig,
    FixedDt,
    HolderScalingReport,
    canonical_json,
    config_hash,
    run_averaging_validation,
    run_convergence,
    run_holder_scaling,
)
from roughsk.harness import _annotate_failure, _grid_for, _noise_block, _stat
from roughsk.models import ScalarObservableSpec, builtin_model
from roughsk.sde import sample_noise, stream_key


def _small_config(**kwargs):
    base = dict(
        model_name="const_iso",
        epsilons=(0.5, 0.25),
        fine_dt_rule=EpsScaled(0.1),
        coarsen=8,
        n_paths=8,
        seed=3,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# config parsing and validation
# ---------------------------------------------------------------------------


def test_config_defaults():
    c = ExperimentConfig("scalar_sin")
    assert c.epsilons == DEFAULT_EPSILONS
    assert c.fine_dt_rule == EpsScaled(0.05)
    assert c.coarsen == 16
    assert c.horizon is None
    assert c.n_paths == 100
    assert c.alpha == 0.4
    assert c.p_moments == (1, 2)
    assert c.scheme == "ExponentialEuler"
    assert c.outputs == "."


def test_rule_resolution():
    assert FixedDt(0.01).resolve(0.5) == 0.01
    assert EpsScaled(0.05).resolve(0.5) == 0.05 * 0.25
    assert FixedDt(0.01).to_dict() == {"kind": "fixed_dt", "dt": 0.01}
    assert EpsScaled(0.05).to_dict() == {"kind": "eps_scaled", "c": 0.05}


def test_rule_parsing_from_dicts():
    c = ExperimentConfig("scalar_sin", fine_dt_rule={"kind": "fixed_dt", "dt": 0.02})
    assert c.fine_dt_rule == FixedDt(0.02)
    c = ExperimentConfig("scalar_sin", fine_dt_rule={"kind": "eps_scaled", "c": 0.1})
    assert c.fine_dt_rule == EpsScaled(0.1)


@pytest.mark.parametrize(
    "rule",
    [
        {"kind": "fixed_dt", "c": 0.1},
        {"kind": "eps_scaled", "dt": 0.1},
        {"kind": "eps_scaled"},
        {"kind": "other", "dt": 0.1},
        {"kind": "fixed_dt", "dt": 0.1, "extra": 1},
        "0.1",
        {"kind": "fixed_dt", "dt": -0.1},
        {"kind": "eps_scaled", "c": 0.0},
    ],
)
def test_bad_rules_rejected(rule):
    with pytest.raises(ValidationError):
        ExperimentConfig("scalar_sin", fine_dt_rule=rule)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epsilons": ()},
        {"epsilons": (0.5, 0.5)},
        {"epsilons": (0.25, 0.5)},
        {"epsilons": (1.5,)},
        {"epsilons": (0.5, 0.0)},
        {"coarsen": 1},
        {"n_paths": 1},
        {"alpha": 0.6},
        {"alpha": 1.0 / 3.0},
        {"alpha": 0.5},
        {"p_moments": ()},
        {"p_moments": (0,)},
        {"horizon": -1.0},
        {"scheme": "midpoint"},
    ],
)
def test_config_validation_rejects(kwargs):
    with pytest.raises(ValidationError):
        ExperimentConfig("scalar_sin", **kwargs)


def test_from_dict_round_trip():
    c = _small_config(alpha=0.45, p_moments=(1, 2, 4))
    again = ExperimentConfig.from_dict(c.to_dict())
    assert again == c


def test_from_dict_rejects_unknown_keys_and_missing_model():
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"model_name": "const_iso", "paths": 10})
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"epsilons": [0.5]})
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict([1, 2])


def test_replace_keeps_other_fields():
    c = _small_config()
    c2 = c.replace(alpha=0.42)
    assert c2.alpha == 0.42
    assert c2.model_name == c.model_name
    assert c2.epsilons == c.epsilons
    assert c2.fine_dt_rule == c.fine_dt_rule
    assert c == _small_config()


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------


def test_canonical_json_frozen_layout():
    assert canonical_json({"a": 1, "b": 0.1}) == '{\n  "a": 1,\n  "b": 0.10000000000000001\n}\n'


def test_canonical_json_sorts_keys_and_nests():
    text = canonical_json({"b": [1, 2], "a": {"y": None, "x": True}})
    assert text.index('"a"') < text.index('"b"')
    assert text.index('"x"') < text.index('"y"')
    assert "true" in text and "null" in text


def test_canonical_json_rejects_non_finite_and_unknown_types():
    with pytest.raises(ValidationError):
        canonical_json({"a": float("nan")})
    with pytest.raises(ValidationError):
        canonical_json({"a": {1, 2}})


def test_config_hash_frozen_value():
    # the hash is the identity of an experiment; it must never drift
    assert (
        config_hash(ExperimentConfig("const_iso"))
        == "f16166486f2a02254d06117a3f433055cbce69a0b870185578bee17505bc0a7e"
    )


def test_config_hash_sensitivity():
    a = config_hash(_small_config())
    assert config_hash(_small_config()) == a
    assert config_hash(_small_config(seed=4)) != a
    assert config_hash(_small_config(alpha=0.41)) != a


# ---------------------------------------------------------------------------
# grids, statistics, seeding
# ---------------------------------------------------------------------------


def test_grid_rounds_up_to_coarsen_multiple():
    model = builtin_model("scalar_sin")
    # eps-scaled: dt0 = 0.05 * 0.25 = 0.0125 gives exactly 80 steps
    assert _grid_for(ExperimentConfig("scalar_sin"), model, 0.5) == (80, 0.0125, 1.0)
    # fixed dt 0.01 asks for 100 steps; 112 is the next multiple of 16
    cfg = ExperimentConfig("scalar_sin", fine_dt_rule={"kind": "fixed_dt", "dt": 0.01})
    n, dt, T = _grid_for(cfg, model, 0.5)
    assert (n, T) == (112, 1.0)
    assert dt == pytest.approx(1.0 / 112, rel=1e-15)
    # config horizon overrides the model's default
    cfg = ExperimentConfig("scalar_sin", horizon=2.0)
    assert _grid_for(cfg, model, 0.354) == (320, 0.00625, 2.0)


def test_stat_hand_computed():
    st = _stat([1.0, 2.0, 3.0], 2)
    assert st["n"] == 3
    np.testing.assert_allclose(st["mean"], 14.0 / 3.0, rtol=1e-15)
    np.testing.assert_allclose(st["stderr"], np.std([1, 4, 9], ddof=1) / math.sqrt(3), rtol=1e-15)


def test_noise_block_follows_stream_policy():
    # path k of epsilon index e must use the stream keyed by (seed, e, k)
    block = _noise_block(6, 2, 0.1, seed=9, eps_index=1, start=3, end=6)
    for row, k in enumerate(range(3, 6)):
        expect = sample_noise(6, 2, 0.1, stream_key(9, 1, k)).increments
        np.testing.assert_array_equal(block[row], expect)


def test_annotate_failure_offsets_path_index():
    err = BlowUp("state norm 1e9 at step 7")
    err.batch_index = 3
    with pytest.raises(BlowUp, match="path index 259"):
        _annotate_failure(err, 0.25, 256)
    with pytest.raises(KeyError):
        _annotate_failure(KeyError("x"), 0.25, 0)


# ---------------------------------------------------------------------------
# convergence runner
# ---------------------------------------------------------------------------


def test_convergence_report_structure():
    cfg = _small_config()
    rep = run_convergence(cfg)
    assert isinstance(rep, ConvergenceReport)
    assert rep.meta["model"] == "const_iso"
    assert rep.meta["config_hash"] == config_hash(cfg)
    assert rep.meta["package_version"] == roughsk.__version__
    assert rep.meta["kernel_backend"] in ("compiled", "python")
    assert [r["epsilon"] for r in rep.per_epsilon] == [0.5, 0.25]
    rec = rep.per_epsilon[0]
    assert rec["n_steps"] % cfg.coarsen == 0
    assert set(rec["metrics"]) == {
        "rho_alpha",
        "holder_level1_diff",
        "holder_level2_diff",
        "sup_error",
        "y_sup",
        "averaging_error",
    }
    assert set(rec["metrics"]["rho_alpha"]) == {"p1", "p2"}
    assert set(rec["metrics"]["averaging_error"]) == {"p1"}
    st = rec["metrics"]["rho_alpha"]["p1"]
    assert st["n"] == cfg.n_paths and st["mean"] > 0 and st["stderr"] > 0
    rates = rep.meta["empirical_rates"]
    assert set(rates) == {
        "rho_alpha",
        "holder_level1_diff",
        "holder_level2_diff",
        "sup_error",
        "y_sup",
        "averaging_error",
    }
    assert rates["sup_error"] is not None
    assert rep.wall_time_s > 0


def test_convergence_rho_dominates_sup_over_horizon_power():
    # per path rho >= lvl1 >= sup / T^alpha, so the means inherit the bound
    cfg = _small_config(n_paths=16)
    rep = run_convergence(cfg)
    for rec in rep.per_epsilon:
        T = rec["horizon"]
        mean_rho = rec["metrics"]["rho_alpha"]["p1"]["mean"]
        mean_sup = rec["metrics"]["sup_error"]["p1"]["mean"]
        assert mean_rho >= mean_sup / T**cfg.alpha - 1e-13


def test_convergence_sup_error_decreases_for_constant_friction():
    cfg = _small_config(n_paths=64)
    rep = run_convergence(cfg)
    sups = [r["metrics"]["sup_error"]["p1"]["mean"] for r in rep.per_epsilon]
    assert sups[1] < sups[0]


def test_convergence_byte_determinism():
    cfg = _small_config()
    a = run_convergence(cfg).to_json()
    b = run_convergence(cfg).to_json()
    assert a == b
    # and a different seed changes the bytes
    c = run_convergence(cfg.replace(seed=4)).to_json()
    assert c != a


def test_convergence_identical_across_thread_counts(monkeypatch):
    cfg = _small_config(epsilons=(0.5,), n_paths=300)
    monkeypatch.delenv("ROUGHSK_THREADS", raising=False)
    serial = run_convergence(cfg).to_json()
    monkeypatch.setenv("ROUGHSK_THREADS", "3")
    threaded = run_convergence(cfg).to_json()
    assert serial == threaded


def test_convergence_stderr_scales_with_path_count():
    # quadrupling the sample size should roughly halve the standard error
    small = run_convergence(_small_config(epsilons=(0.5,), n_paths=32))
    big = run_convergence(_small_config(epsilons=(0.5,), n_paths=128))
    se_small = small.per_epsilon[0]["metrics"]["rho_alpha"]["p1"]["stderr"]
    se_big = big.per_epsilon[0]["metrics"]["rho_alpha"]["p1"]["stderr"]
    assert 0.25 <= se_big / se_small <= 1.0


def test_convergence_csv_layout():
    rep = run_convergence(_small_config())
    lines = rep.to_csv().strip().split("\n")
    assert lines[0] == "epsilon,metric,mean,stderr,n"
    # 5 metrics x 2 moments + averaging_error, per epsilon
    assert len(lines) == 1 + 2 * (5 * 2 + 1)
    cells = lines[1].split(",")
    assert len(cells) == 5
    float(cells[0])
    float(cells[2])
    int(cells[4])


def test_convergence_validates_observable_dimension():
    obs = ScalarObservableSpec(kind="yy", k=3, l=3)
    with pytest.raises(ValidationError):
        run_convergence(_small_config(), obs=obs)


# ---------------------------------------------------------------------------
# Hölder scaling runner
# ---------------------------------------------------------------------------


def _holder_config(**kwargs):
    base = dict(
        model_name="const_iso",
        epsilons=(0.5,),
        fine_dt_rule=FixedDt(1.0 / 256.0),
        coarsen=4,
        n_paths=16,
        seed=5,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


def test_holder_scaling_record_structure():
    rep = run_holder_scaling(_holder_config())
    assert isinstance(rep, HolderScalingReport)
    assert rep.meta["path_kind"] == "fast_slow"
    assert len(rep.records) == 2  # one per p moment
    rec = rep.records[0]
    assert rec["epsilon"] == 0.5
    assert rec["p"] == 1
    assert len(rec["gaps_dt"]) == 6  # gaps 1..32 on a 64-step coarse grid
    for level in ("level1", "level2"):
        fit = rec[level]
        assert set(fit) == {"slope", "se", "ci95", "moments"}
        assert fit["ci95"] == pytest.approx(1.96 * fit["se"])
        assert len(fit["moments"]) == 6
    assert rec["n_samples"] > 0
    # Brownian-like scaling is far from the smooth regime
    assert rec["degenerate"] is False


def test_holder_scaling_limit_path_kind():
    rep = run_holder_scaling(_holder_config(), path_kind="limit")
    assert rep.meta["path_kind"] == "limit"
    assert len(rep.records) == 2
    assert all(rec["epsilon"] is None for rec in rep.records)
    lines = rep.to_csv().strip().split("\n")
    assert lines[0] == "epsilon,metric,mean,stderr,n"
    assert lines[1].startswith("nan,level1_slope_p1,")


def test_holder_scaling_rejects_bad_path_kind():
    with pytest.raises(ValidationError):
        run_holder_scaling(_holder_config(), path_kind="velocity")


def test_holder_scaling_needs_enough_gaps():
    # coarse grid of 5 steps has dyadic gaps {1, 2} only
    cfg = ExperimentConfig(
        "const_iso",
        epsilons=(0.5,),
        fine_dt_rule=EpsScaled(0.1),
        coarsen=8,
        n_paths=4,
    )
    with pytest.raises(InsufficientData):
        run_holder_scaling(cfg)


def test_holder_scaling_byte_determinism(monkeypatch):
    cfg = _holder_config(n_paths=300)
    monkeypatch.setenv("ROUGHSK_THREADS", "4")
    a = run_holder_scaling(cfg).to_json()
    monkeypatch.delenv("ROUGHSK_THREADS")
    b = run_holder_scaling(cfg).to_json()
    assert a == b


def test_holder_scaling_brownian_slopes_bracket_theory():
    # the limit path of the isotropic model is exact Brownian motion, so the
    # level-1 p=1 slope sits near 1/2 and the level-2 slope near 1; the
    # fast-slow path at large epsilon is smooth below the relaxation scale
    # and must regress steeper than the limit
    limit = run_holder_scaling(_holder_config(n_paths=64), path_kind="limit")
    rec = limit.records[0]
    assert 0.3 < rec["level1"]["slope"] < 0.7
    assert 0.6 < rec["level2"]["slope"] < 1.4
    fast = run_holder_scaling(_holder_config(n_paths=64))
    assert fast.records[0]["level1"]["slope"] > rec["level1"]["slope"]


# ---------------------------------------------------------------------------
# averaging runner
# ---------------------------------------------------------------------------


def test_averaging_validation_structure():
    cfg = ExperimentConfig(
        "scalar_sin",
        epsilons=(0.5, 0.25),
        fine_dt_rule=EpsScaled(0.05),
        coarsen=8,
        n_paths=32,
        seed=1,
    )
    obs = ScalarObservableSpec(kind="yy", k=1, l=1)
    rep = run_averaging_validation(cfg, obs)
    assert isinstance(rep, AveragingReport)
    assert rep.meta["observable"] == {"kind": "yy", "i": 1, "k": 1, "l": 1}
    assert isinstance(rep.decreasing, bool)
    assert [r["epsilon"] for r in rep.per_epsilon] == [0.5, 0.25]
    for rec in rep.per_epsilon:
        assert rec["averaging_error"]["mean"] > 0
    lines = rep.to_csv().strip().split("\n")
    assert lines[0] == "epsilon,metric,mean,stderr,n"
    assert len(lines) == 3
    assert "averaging_error_p1" in lines[1]
    assert "decreasing" in rep.to_json()


def test_averaging_validation_checks_observable():
    cfg = _small_config()
    obs = ScalarObservableSpec(kind="yy", k=5, l=5)
    with pytest.raises(ValidationError):
        run_averaging_validation(cfg, obs)
