import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnpmc import (
    AnnealingSchedule,
    ChainConfig,
    ContractError,
    GaussianLinearLikelihood,
    GaussianMixture,
    SampleBatch,
    ScoreModel,
    pmc_pnp_step,
    pmc_red_step,
    run_batch,
    schedule_at,
)


def conjugate_1d():
    """Prior N(0, 1), y = 2, A = 1, beta = 1: posterior N(1, 1/2)."""
    lik = GaussianLinearLikelihood([[1.0]], [2.0], 1.0)
    return lik, ScoreModel(GaussianMixture([1.0], [[0.0]], [1.0]))


def test_schedule_values():
    s = AnnealingSchedule(10.0, 0.975, 0.0, 10.0)
    assert s.at(0) == (10.0, 1000.0)
    sigma, alpha = schedule_at(s, 100)
    assert sigma == pytest.approx(10 * 0.975**100)
    assert alpha == pytest.approx(max(10 * sigma**2, 1.0))
    floor = AnnealingSchedule(10.0, 0.5, 0.3, 10.0)
    assert floor.at(50)[0] == 0.3


def test_schedule_monotone_and_alpha_reaches_one():
    s = AnnealingSchedule(10.0, 0.975, 0.1, 6.25)
    sig, alp = s.arrays(600)
    assert np.all(np.diff(sig) <= 0) and np.all(np.diff(alp) <= 0)
    first = int(np.argmax(6.25 * sig**2 <= 1))
    assert np.all(alp[first:] == 1.0)
    assert alp[first - 1] > 1.0


def test_schedule_rejects_bad_parameters():
    with pytest.raises(ContractError):
        AnnealingSchedule(10.0, 0.975, 0.4, 10.0)
    with pytest.raises(ContractError):
        AnnealingSchedule(10.0, 1.0, 0.0, 10.0)
    with pytest.raises(ContractError):
        AnnealingSchedule(-1.0, 0.9, 0.0, 10.0)
    with pytest.raises(ContractError):
        AnnealingSchedule().at(-1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 100), st.floats(0.5, 0.999), st.floats(0.0, 1.0), st.integers(0, 500))
def test_schedule_property(sigma0, xi, smin, k):
    alpha0 = 1.0 / max(smin, 1e-3) ** 2
    s = AnnealingSchedule(sigma0, xi, smin, alpha0)
    sk, ak = s.at(k)
    sk1, ak1 = s.at(k + 1)
    assert sk1 <= sk and ak1 <= ak
    assert sk >= smin and ak >= 1.0


def test_step_worked_examples():
    lik, score = conjugate_1d()
    g = 0.1
    x = np.array([[0.0]])
    red = pmc_red_step(x, lik, score, g, 0.0, 1.0, deterministic=True)
    pnp = pmc_pnp_step(x, lik, score, g, 0.0, 1.0, deterministic=True)
    assert red[0, 0] == pytest.approx(2 * g)
    assert pnp[0, 0] == pytest.approx(g * (2 - 2 * g))


def test_step_adds_brownian_increment():
    lik, score = conjugate_1d()
    x = np.array([[0.0]])

    class Fixed:
        def standard_normal(self, size=None):
            return np.array([[1.0]])

    out = pmc_red_step(x, lik, score, 0.01, 0.0, 1.0, rng=Fixed())
    assert out[0, 0] == pytest.approx(0.02 + np.sqrt(0.02))


def test_config_validation():
    with pytest.raises(ContractError):
        ChainConfig(gamma=0.1, n_iters=0).validate()
    with pytest.raises(ContractError):
        ChainConfig(gamma=0.0, n_iters=1).validate()
    with pytest.raises(ContractError):
        ChainConfig(gamma=0.1, n_iters=1, discretization="euler").validate()
    with pytest.raises(ContractError):
        ChainConfig(gamma=0.1, n_iters=1, annealed=True).validate()


def test_config_round_trip_and_digest():
    cfg = ChainConfig(0.4, 10, 5, 3, "red", True, AnnealingSchedule(), init_box=(-50, 50))
    back = ChainConfig.from_dict(cfg.to_dict())
    assert back.digest() == cfg.digest()
    assert ChainConfig(0.4, 10, 5, 4).digest() != ChainConfig(0.4, 10, 5, 3).digest()


def test_reproducible_and_seed_sensitive():
    lik, score = conjugate_1d()
    noisy = ScoreModel(score.base, "noisy_gmm", eps_max=0.5)
    cfg = ChainConfig(0.01, 50, 8, 11, init_box=(-3, 3))
    a = run_batch(cfg, lik, noisy).samples
    b = run_batch(cfg, lik, noisy).samples
    c = run_batch(ChainConfig(0.01, 50, 8, 12, init_box=(-3, 3)), lik, noisy).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_chain_rows_do_not_depend_on_batch_size():
    lik, score = conjugate_1d()
    small = run_batch(ChainConfig(0.01, 100, 3, 5), lik, score).samples
    large = run_batch(ChainConfig(0.01, 100, 7, 5), lik, score).samples
    np.testing.assert_array_equal(small, large[:3])


def test_annealed_degenerates_to_stationary():
    lik, score = conjugate_1d()
    sigma = 0.3
    flat = AnnealingSchedule(sigma0=sigma, xi=0.9, sigma_min=sigma, alpha0=1 / sigma**2)
    for disc in ("pnp", "red"):
        ann = run_batch(ChainConfig(0.01, 200, 6, 2, disc, True, flat), lik, score)
        sta = run_batch(ChainConfig(0.01, 200, 6, 2, disc, False, sigma_static=sigma), lik, score)
        np.testing.assert_array_equal(ann.samples, sta.samples)


def test_deterministic_red_descends_objective():
    prior = GaussianMixture([0.4, 0.6], [[-2.0, 1.0], [2.0, 0.0]], [1.0, 0.5])
    lik = GaussianLinearLikelihood([[1.0, 0.5], [0.0, 1.0]], [1.0, -1.0], 1.0)
    score = ScoreModel(prior)
    sigma, alpha, gamma = 0.2, 1.0, 0.02
    smoothed = prior.smoothed(sigma)
    cfg = ChainConfig(gamma, 300, 4, 0, "red", sigma_static=sigma, deterministic=True,
                      init_box=(-4, 4), record_every=1)
    out = run_batch(cfg, lik, score)
    obj = np.array([lik.value(x) - alpha * smoothed.logpdf(x) for x in out.trajectory])
    assert np.all(np.diff(obj, axis=0) <= 1e-12)


def test_langevin_matches_gaussian_posterior():
    lik, score = conjugate_1d()
    for disc in ("pnp", "red"):
        cfg = ChainConfig(0.01, 1500, 4000, 1, disc, init_box=(-1, 3))
        x = run_batch(cfg, lik, score).samples[:, 0]
        assert abs(x.mean() - 1.0) < 4 * np.sqrt(0.5 / x.size)
        # unadjusted bias of the variance is O(gamma)
        assert abs(x.var() - 0.5) < 0.05


def test_divergent_chains_are_isolated():
    class Blowup:
        dim = 1

        def grad(self, x):
            return np.where(x > 0, np.inf, x)

    score = ScoreModel(GaussianMixture([1.0], [[0.0]], [1.0]))
    cfg = ChainConfig(0.01, 20, 10, 0, init_box=(-1, 1))
    out = run_batch(cfg, Blowup(), score)
    starts = cfg.batch
    bad = {c for c, _ in out.diverged}
    assert bad and len(bad) < starts
    assert all(np.isnan(out.samples[c]).all() for c in bad)
    assert np.isfinite(out.finite()).all()
    assert len(out.finite()) == starts - len(bad)


def test_clipped_score_keeps_steps_bounded():
    prior = GaussianMixture([1.0], [[0.0, 0.0]], [1e-3])
    lik = GaussianLinearLikelihood(np.zeros((1, 2)), [0.0], 1.0)
    score = ScoreModel(prior, r_s=5.0)
    x0 = np.array([[100.0, 0.0]])
    out = run_batch(ChainConfig(0.1, 1, 1, 0, deterministic=True), lik, score, x0=x0)
    assert np.linalg.norm(out.samples - x0) == pytest.approx(0.5)


def test_sample_batch_csv_round_trip(tmp_path):
    lik, score = conjugate_1d()
    out = run_batch(ChainConfig(0.01, 5, 4, 0), lik, score)
    out.to_csv(tmp_path / "s.csv")
    back = SampleBatch.read_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back, out.samples)
    side = out.sidecar()
    assert side["batch"] == 4 and side["config_digest"] == out.config_digest


def test_monitor_and_trajectory():
    lik, score = conjugate_1d()
    seen = []
    out = run_batch(ChainConfig(0.01, 20, 2, 0, record_every=5), lik, score,
                    monitor=lambda k, x: seen.append(k), monitor_every=10)
    assert seen == [10, 20]
    assert out.trajectory_iters == [5, 10, 15, 20]
    np.testing.assert_array_equal(out.trajectory[-1], out.samples)
