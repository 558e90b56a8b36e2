from __future__ import annotations

import math

import numpy as np
import pytest

from effectfuse.domain.errors import DataValidationError, NumericalError
from effectfuse.domain.models import CategoricalCovariate, Dataset, LevelPartition
from effectfuse.services.design import build_design, flatten
from effectfuse.services.refit import (
    bic_mcmc,
    block_members,
    build_fused_design,
    deviance,
    dic,
    expand_fused,
    hpd_interval,
    loglik_draws,
    model_averaged_estimates,
    refit_flat,
    summarize_fit,
)
from effectfuse.services.prior import (
    FixedPsi,
    GlobalPriorSpec,
    MixturePriorSpec,
    flat_fit_vector,
    residual_variance,
)
from effectfuse.services.sampler import McmcTrace, SamplerConfig, run_mcmc


def _design():
    a = CategoricalCovariate("a", ("0", "1", "2", "3"), np.arange(12) % 4)
    b = CategoricalCovariate("b", ("u", "v"), (np.arange(12) // 2) % 2)
    return build_design(Dataset(response=np.zeros(12), categorical=(a, b)))


def _trace(beta: np.ndarray, sigma2: np.ndarray, design) -> McmcTrace:
    return McmcTrace(
        beta=np.atleast_2d(beta),
        sigma2=np.asarray(sigma2, dtype=float),
        allocations={},
        column_map=design.column_map,
        burn_in=0,
        seed=0,
    )


# ------------------------------
# Fused design
# ------------------------------
def test_identity_partitions_reproduce_the_design():
    design = _design()
    parts = {"a": LevelPartition.identity("a", 4), "b": LevelPartition.identity("b", 2)}
    fused = build_fused_design(design, parts)
    np.testing.assert_array_equal(fused.matrix, design.matrix)
    assert fused.group_counts() == {"a": 4, "b": 2}


def test_fully_fused_covariate_drops_out():
    design = _design()
    parts = {"a": LevelPartition("a", ((0, 1, 2, 3),)), "b": LevelPartition.identity("b", 2)}
    fused = build_fused_design(design, parts)
    assert fused.n_columns == 2
    assert fused.design.labels == ["(Intercept)", "b[v]"]


def test_fused_block_column_sums_its_dummies():
    design = _design()
    parts = {"a": LevelPartition("a", ((0,), (1, 2), (3,))), "b": LevelPartition.identity("b", 2)}
    fused = build_fused_design(design, parts)
    assert fused.n_columns == 4
    np.testing.assert_array_equal(fused.matrix[:, 1], design.matrix[:, 1] + design.matrix[:, 2])
    np.testing.assert_array_equal(fused.matrix[:, 2], design.matrix[:, 3])
    assert fused.design.labels[1] == "a[1+2]"


def test_expand_fused_maps_back_to_every_level():
    design = _design()
    parts = {"a": LevelPartition("a", ((0, 3), (1, 2))), "b": LevelPartition.identity("b", 2)}
    fused = build_fused_design(design, parts)
    coefs = expand_fused(fused, np.array([0.5, 2.0, -1.0]))
    assert coefs.beta0 == 0.5
    assert coefs.beta[0].tolist() == [2.0, 2.0, 0.0]
    assert coefs.beta[1].tolist() == [-1.0]
    with pytest.raises(DataValidationError):
        expand_fused(fused, np.zeros(4))


def test_fused_design_needs_matching_partitions():
    design = _design()
    with pytest.raises(DataValidationError):
        build_fused_design(design, {"a": LevelPartition.identity("a", 4)})
    with pytest.raises(DataValidationError):
        build_fused_design(
            design, {"a": LevelPartition.identity("a", 3), "b": LevelPartition.identity("b", 2)}
        )


def test_block_members_names_levels():
    design = _design()
    parts = {"a": LevelPartition("a", ((0,), (1, 3), (2,))), "b": LevelPartition.identity("b", 2)}
    fused = build_fused_design(design, parts)
    labels = {"a": ("0", "1", "2", "3"), "b": ("u", "v")}
    assert block_members(fused, labels) == ["", "1 3", "2", "v"]


# ------------------------------
# HPD interval
# ------------------------------
def test_hpd_interval_on_uniform_grid():
    assert hpd_interval(np.arange(100.0), 0.9) == (0.0, 89.0)


def test_hpd_interval_picks_the_shortest_window():
    draws = np.concatenate([np.zeros(90), np.linspace(5.0, 50.0, 10)])
    assert hpd_interval(draws, 0.9) == (0.0, 0.0)


def test_hpd_interval_of_normal_draws(rng):
    lo, hi = hpd_interval(rng.standard_normal(200_000), 0.95)
    assert lo == pytest.approx(-1.96, abs=0.03)
    assert hi == pytest.approx(1.96, abs=0.03)


def test_hpd_interval_validation():
    with pytest.raises(DataValidationError):
        hpd_interval(np.arange(5.0))
    with pytest.raises(DataValidationError):
        hpd_interval(np.arange(50.0), level=1.0)


# ------------------------------
# Criteria
# ------------------------------
def _intercept_only():
    a = CategoricalCovariate("a", ("0", "1"), np.array([0, 1, 0]))
    design = build_design(Dataset(response=np.zeros(3), categorical=(a,)))
    return design, np.array([1.0, 2.0, 3.0])


def test_deviance_closed_form():
    design, y = _intercept_only()
    d = deviance(np.array([2.0, 0.0]), 1.0, design, y)
    assert d == pytest.approx(3 * math.log(2 * math.pi) + 2.0)


def test_loglik_draws_match_deviance(rng):
    design, y = _intercept_only()
    beta = rng.standard_normal((5, 2))
    sigma2 = rng.uniform(0.5, 2.0, 5)
    ll = loglik_draws(_trace(beta, sigma2, design), design, y)
    for i in range(5):
        assert -2 * ll[i] == pytest.approx(deviance(beta[i], sigma2[i], design, y))


def test_dic_of_a_point_mass_has_no_effective_parameters():
    design, y = _intercept_only()
    trace = _trace(np.tile([2.0, 0.5], (20, 1)), np.full(20, 1.5), design)
    result = dic(trace, design, y)
    assert result.p_d == pytest.approx(0.0, abs=1e-9)
    assert result.dic == pytest.approx(deviance(np.array([2.0, 0.5]), 1.5, design, y))


def test_bic_counts_columns_plus_error_variance(rng):
    a = CategoricalCovariate("a", ("0", "1"), np.arange(100) % 2)
    design = build_design(Dataset(response=np.zeros(100), categorical=(a,)))
    y = rng.standard_normal(100)
    trace = _trace(rng.standard_normal((30, 2)) * 0.1, rng.uniform(0.8, 1.2, 30), design)
    result = bic_mcmc(trace, design, y)
    ll = loglik_draws(trace, design, y)
    assert result.n_parameters == 3
    assert result.draw_index == int(np.argmax(ll))
    assert result.bic == pytest.approx(-2 * ll.max() + 3 * math.log(100))
    assert result.bic + 2 * result.max_loglik == pytest.approx(13.8155, abs=1e-4)


def test_criteria_do_not_depend_on_draw_order(rng):
    a = CategoricalCovariate("a", ("0", "1", "2"), np.arange(60) % 3)
    design = build_design(Dataset(response=np.zeros(60), categorical=(a,)))
    y = rng.standard_normal(60)
    beta = 0.1 * rng.standard_normal((40, 3))
    sigma2 = rng.uniform(0.8, 1.2, 40)
    order = rng.permutation(40)
    trace, shuffled = _trace(beta, sigma2, design), _trace(beta[order], sigma2[order], design)

    assert dic(shuffled, design, y).dic == pytest.approx(dic(trace, design, y).dic, rel=1e-12)
    assert dic(shuffled, design, y).p_d == pytest.approx(dic(trace, design, y).p_d, abs=1e-8)
    b1, b2 = bic_mcmc(trace, design, y), bic_mcmc(shuffled, design, y)
    assert b2.bic == pytest.approx(b1.bic, rel=1e-12)
    assert order[b2.draw_index] == b1.draw_index


def test_true_fusion_beats_full_model_on_bic(toy_data, toy_design):
    design = build_design(toy_data)
    y = toy_data.response
    truth = {c.name: c.true_partition() for c in toy_design.covariates}
    fused = build_fused_design(design, truth)
    fused_trace = refit_flat(fused, y, iterations=300, burn_in=100, seed=1)
    full_trace = refit_flat(design, y, iterations=300, burn_in=100, seed=1)
    assert bic_mcmc(fused_trace, fused.design, y).bic < bic_mcmc(full_trace, design, y).bic


def test_refit_recovers_fused_effects(toy_data, toy_design):
    design = build_design(toy_data)
    truth = {c.name: c.true_partition() for c in toy_design.covariates}
    fused = build_fused_design(design, truth)
    trace = refit_flat(fused, toy_data.response, iterations=300, burn_in=100, seed=2)
    estimate = expand_fused(fused, trace.beta.mean(axis=0))
    expected = flatten(toy_design.beta_true())
    np.testing.assert_allclose(flatten(estimate), expected, atol=0.1)


def test_model_averaged_estimates_is_the_posterior_mean():
    design = _design()
    beta = np.arange(20.0).reshape(4, 5)
    coefs = model_averaged_estimates(_trace(beta, np.ones(4), design))
    np.testing.assert_allclose(flatten(coefs), beta.mean(axis=0))
    with pytest.raises(NumericalError):
        model_averaged_estimates(_trace(np.empty((0, 5)), np.empty(0), design))


def test_summarize_fit_frame(rng):
    design, y = _intercept_only()
    trace = _trace(rng.normal(2.0, 0.1, (200, 2)), rng.uniform(0.9, 1.1, 200), design)
    summary = summarize_fit(trace, design, y, group_counts={"a": 2})
    frame = summary.to_frame()
    assert list(frame.columns) == ["coefficient", "mean", "hpd_lower", "hpd_upper"]
    assert (frame["hpd_lower"] <= frame["mean"]).all()
    assert (frame["mean"] <= frame["hpd_upper"]).all()
    d = summary.to_dict()
    assert d["group_counts"] == {"a": 2}
    assert d["n_parameters"] == 3
    assert summary.flags == ()



# ------------------------------
# Refit against the fusion sampler
# ------------------------------
def _batch_se(x: np.ndarray, batches: int = 40) -> float:
    means = np.array([b.mean() for b in np.array_split(np.asarray(x), batches)])
    return float(means.std(ddof=1) / np.sqrt(batches))


def test_identity_refit_reproduces_the_full_model(toy_data):
    design = build_design(toy_data)
    y = toy_data.response
    parts = {c.name: LevelPartition.identity(c.name, len(c.levels)) for c in toy_data.categorical}
    fused = build_fused_design(design, parts)

    refit = refit_flat(fused, y, iterations=400, burn_in=100, seed=8)
    full = refit_flat(design, y, iterations=400, burn_in=100, seed=8)

    np.testing.assert_allclose(refit.beta, full.beta)
    np.testing.assert_allclose(refit.sigma2, full.sigma2)
    np.testing.assert_allclose(
        flatten(expand_fused(fused, refit.beta.mean(axis=0))), full.beta.mean(axis=0)
    )
    assert dic(refit, fused.design, y).dic == pytest.approx(dic(full, design, y).dic)


def test_refit_matches_a_spike_only_fusion_sampler():
    """L = 0 with psi = B0: the mixture prior collapses to the flat prior."""
    r = np.random.default_rng(4)
    obs = np.arange(60) % 3
    a = CategoricalCovariate("a", ("0", "1", "2"), obs)
    y = 0.5 + np.array([0.0, 1.0, -0.5])[obs] + 0.6 * r.standard_normal(60)
    design = build_design(Dataset(response=y, categorical=(a,)))
    B0 = 1e10
    spike = MixturePriorSpec(
        covariate="a", L=0, e0=0.01, m0=0.0, M0=1.0, V=1.0, nu=1.0, psi_prior=FixedPsi(B0)
    )
    prior = GlobalPriorSpec(mixtures=(spike,), B0=B0)
    beta_hat = flat_fit_vector(design.matrix, y)

    fusion = run_mcmc(
        design,
        y,
        prior,
        SamplerConfig(burn_in=500, iterations=20_000, seed=31),
        beta_hat=beta_hat,
        sigma2_init=residual_variance(design.matrix, y, beta_hat),
    )
    refit = refit_flat(design, y, B0=B0, iterations=20_000, burn_in=500, seed=32)

    assert (fusion.allocations["a"] == 0).all()
    for i in range(design.n_columns):
        gap = abs(fusion.beta[:, i].mean() - refit.beta[:, i].mean())
        assert gap < 4 * np.hypot(_batch_se(fusion.beta[:, i]), _batch_se(refit.beta[:, i]))
        assert fusion.beta[:, i].var() == pytest.approx(refit.beta[:, i].var(), rel=0.08)
    gap = abs(fusion.sigma2.mean() - refit.sigma2.mean())
    assert gap < 4 * np.hypot(_batch_se(fusion.sigma2), _batch_se(refit.sigma2))
