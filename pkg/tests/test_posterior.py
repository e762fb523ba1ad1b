import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gammaln

import levyhazard as lh
from levyhazard.exceptions import DivergentIntegralError, EnumerationCapError
from levyhazard.partitions import Partition, enumerate_partitions
from levyhazard.posterior import (
    ModelSpec,
    QuadSettings,
    cell_posterior,
    exact_partition_posterior,
    log_cell_integral,
    log_moment_measure,
    mean_intensity_given,
    predictive_hazard,
    prior_mean_intensity,
)

from conftest import make_data


def quad_cell_integral(model, cell):
    """Independent oracle: the cell integral by scipy adaptive quadrature."""
    xs = [float(model.X[i]) for i in cell]
    hi = min([model.eta.hi] + xs) if isinstance(model.kernel, lh.DykstraLaud) else model.eta.hi
    order = len(cell)

    def f(y):
        val = math.exp(float(model.family.log_kappa(order, model.exposure.at(y), y)))
        for x in xs:
            val *= float(model.kernel.k(x, np.array([y]))[0])
        return val * math.exp(float(model.eta.log_density(np.array([y]))[0]))

    pts = [t for t in model.exposure.times if model.eta.lo < t < hi]
    val, _ = quad(f, model.eta.lo, hi, points=pts, limit=200, epsabs=0, epsrel=1e-11)
    return val


def test_cell_integrals_match_scipy_quadrature(gg_model):
    for cell in [(0,), (1,), (0, 1), (0, 1, 2), (2, 3), (0, 1, 2, 3)]:
        mine = math.exp(log_cell_integral(gg_model, cell))
        ref = quad_cell_integral(gg_model, cell)
        assert mine == pytest.approx(ref, rel=1e-8)


def test_cell_integrals_match_scipy_quadrature_beta(beta_model):
    for cell in [(0,), (0, 3), (1, 2, 3)]:
        mine = math.exp(log_cell_integral(beta_model, cell))
        ref = quad_cell_integral(beta_model, cell)
        assert mine == pytest.approx(ref, rel=1e-7)


def test_cell_integral_point_mass_reduction(small_data):
    # with a point-mass base measure the integral collapses to evaluation
    model = ModelSpec(
        lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0), lh.PointMass(0.2, 2.0),
        small_data,
    )
    cell = (0, 1)
    g0 = model.exposure.at(0.2)
    expected = math.log(2.0) + float(model.family.log_kappa(2, g0, 0.2))
    assert log_cell_integral(model, cell) == pytest.approx(expected, rel=1e-12)


def test_cell_integral_support_mismatch(small_data):
    # eta lives beyond every event time: the Dykstra-Laud kernel kills it
    model = ModelSpec(
        lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0), lh.lebesgue(2.0, 2.5),
        small_data,
    )
    assert log_cell_integral(model, (0,)) == -np.inf
    with pytest.raises(DivergentIntegralError):
        cell_posterior(model, (0,))


def test_cell_integral_validation(gg_model):
    with pytest.raises(ValueError):
        log_cell_integral(gg_model, ())
    with pytest.raises(IndexError):
        log_cell_integral(gg_model, (9,))


def test_exact_posterior_normalizes(gg_model):
    table = exact_partition_posterior(gg_model)
    assert len(table.partitions) == 15
    assert table.probs.sum() == pytest.approx(1.0, abs=1e-10)


def test_exact_posterior_single_event():
    model = ModelSpec(
        lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0), lh.lebesgue(0.0, 2.0),
        make_data([1.0]),
    )
    table = exact_partition_posterior(model)
    assert len(table.partitions) == 1
    assert table.probs[0] == pytest.approx(1.0)


def test_exact_posterior_weights_product_structure(gg_model):
    """Unnormalized weights are products of cell integrals and C(X) is
    their sum, recomputed independently here."""
    table = exact_partition_posterior(gg_model)
    total = 0.0
    for p, lw in zip(table.partitions, table.log_weights):
        ref = sum(log_cell_integral(gg_model, c) for c in p.cells)
        assert lw == pytest.approx(ref, rel=1e-12)
        total += math.exp(ref)
    assert math.log(total) == pytest.approx(table.log_normalizer, rel=1e-10)


def test_exact_posterior_cap(small_data):
    model = ModelSpec(
        lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0), lh.lebesgue(0.0, 2.5),
        small_data, QuadSettings(enumeration_cap=3),
    )
    with pytest.raises(EnumerationCapError):
        exact_partition_posterior(model)


def test_exact_posterior_relabel_invariance():
    """Permuting records with identical observed times leaves the table
    unchanged."""
    d1 = make_data([0.5, 0.5, 1.0], [0.8])
    d2 = make_data([0.5, 1.0, 0.5], [0.8])
    m1 = ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0), lh.lebesgue(0.0, 2.0), d1)
    m2 = ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0), lh.lebesgue(0.0, 2.0), d2)
    t1 = exact_partition_posterior(m1)
    t2 = exact_partition_posterior(m2)
    # compare by multiset of (sorted cell sizes of tied groups, prob)
    swap = {0: 0, 1: 2, 2: 1}
    for p, pr in zip(t1.partitions, t1.probs):
        relabeled = Partition.from_cells([[swap[i] for i in c] for c in p.cells])
        assert t2.prob_of(relabeled) == pytest.approx(pr, rel=1e-9)


def test_cell_posterior_reduces_to_eta_when_flat():
    """Tiny event time and gamma family: kernel and cumulant are flat in y,
    so the cell posterior is eta normalized."""
    data = make_data([1e-9])
    model = ModelSpec(lh.Exponential(), lh.GeneralizedGamma(0.0, 1.0),
                      lh.lebesgue(0.5, 1.5), data)
    cp = cell_posterior(model, (0,))
    rng = np.random.default_rng(0)
    draws = np.asarray(cp.sample(rng, 50_000))
    assert draws.mean() == pytest.approx(1.0, abs=0.005)
    assert cp.mean(lambda y: y) == pytest.approx(1.0, rel=1e-6)


def test_cell_posterior_histogram_chi_square(gg_model):
    cp = cell_posterior(gg_model, (0, 1))
    rng = np.random.default_rng(21)
    draws = np.asarray(cp.sample(rng, 100_000))
    lo, hi = draws.min(), 0.8  # support is (0, X_0=0.4] intersected with eta
    assert draws.max() <= 0.4 + 1e-12
    edges = np.linspace(0.0, 0.4, 31)
    counts, _ = np.histogram(draws, edges)

    def dens(y):
        return math.exp(
            float(gg_model.family.log_kappa(2, gg_model.exposure.at(y), y))
        )

    probs = np.array([quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    probs /= probs.sum()
    from scipy.stats import chi2, chisquare

    stat, _ = chisquare(counts, probs * counts.sum())
    assert stat < chi2.ppf(0.99, len(counts) - 1)


def test_cell_posterior_mean_grid_refinement(gg_model):
    cp = cell_posterior(gg_model, (1, 2))
    m128 = cp.mean(lambda y: y, grid_points=128)
    m256 = cp.mean(lambda y: y, grid_points=256)
    assert abs(m256 - m128) / abs(m256) < 1e-6


def test_mean_intensity_prior_term_only(gg_model):
    p = Partition(())
    xs = np.array([0.5, 1.0])
    vals = mean_intensity_given(gg_model, p, np.array([]), xs)
    np.testing.assert_allclose(vals, prior_mean_intensity(gg_model, xs), rtol=1e-12)


def test_mean_intensity_gg_jump_term(gg_model):
    """The jump contribution is k(x|Y*)(e_j - alpha)/(b + g(Y*))."""
    p = Partition(((0, 1), (2,), (3,)))
    ystar = np.array([0.3, 0.9, 1.1])
    xs = np.array([1.0, 2.0])
    vals = mean_intensity_given(gg_model, p, ystar, xs)
    prior = prior_mean_intensity(gg_model, xs)
    for i, x in enumerate(xs):
        jump = 0.0
        for j, c in enumerate(p.cells):
            if ystar[j] <= x:
                g = gg_model.exposure.at(float(ystar[j]))
                jump += (len(c) - 0.5) / (1.0 + g)
        assert vals[i] == pytest.approx(prior[i] + jump, rel=1e-10)


def test_predictive_hazard_two_routes(gg_model):
    """Exact predictive hazard via prediction integrals equals the average
    of cell-posterior means of k(x|.) E[J|.] over the exact table."""
    xs = np.array([0.5, 1.0, 1.5])
    route1 = predictive_hazard(gg_model, xs)
    table = exact_partition_posterior(gg_model)
    route2 = np.array([float(v) for v in prior_mean_intensity(gg_model, xs)])
    acc = np.zeros_like(route2)
    for p, pr in zip(table.partitions, table.probs):
        val = np.zeros_like(route2)
        for c in p.cells:
            cp = cell_posterior(gg_model, c)
            e = len(c)
            for i, x in enumerate(xs):
                def fn(y, x=float(x), e=e):
                    k = gg_model.kernel.k(x, y)
                    jm = np.exp(gg_model.family.log_jump_mean(e, gg_model.exposure(y), y))
                    return k * jm

                val[i] += cp.mean(fn)
        acc += pr * val
    np.testing.assert_allclose(route1, route2 + acc, rtol=1e-6)


def test_predictive_hazard_no_events():
    with pytest.warns(UserWarning, match="no exact events"):
        data = lh.Dataset([lh.SurvivalRecord(0.7, False)])
    model = ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0),
                      lh.lebesgue(0.0, 2.0), data)
    xs = np.array([0.5, 1.0])
    np.testing.assert_allclose(
        predictive_hazard(model, xs), prior_mean_intensity(model, xs), rtol=1e-12
    )


def test_log_moment_measure_single(gg_model):
    y = 0.7
    val = log_moment_measure(gg_model, [y])
    expected = float(gg_model.family.log_kappa(1, gg_model.exposure.at(y), y)) + float(
        gg_model.eta.log_density(np.array([y]))[0]
    )
    assert val == pytest.approx(expected, rel=1e-12)


def test_log_moment_measure_gg_closed_form(gg_model):
    """Generic cumulant route equals the displayed product
    prod_j Gamma(e_j - a)/Gamma(1 - a) (b + g(Y_j*))^-(e_j - a)."""
    Y = [0.3, 0.3, 0.9, 0.3]  # tie pattern {0,1,3},{2}
    val = log_moment_measure(gg_model, Y)
    alpha, b = 0.5, 1.0
    expected = 0.0
    for ystar, e in [(0.3, 3), (0.9, 1)]:
        g = gg_model.exposure.at(ystar)
        expected += (
            gammaln(e - alpha) - gammaln(1.0 - alpha)
            - (e - alpha) * math.log(b + g)
        )
    # lebesgue density contributes log(1) per unique value
    assert val == pytest.approx(expected, rel=1e-10)


def test_log_moment_measure_beta_tied_pair(beta_model):
    """A tied pair under the beta process carries kappa_2, i.e. the
    1F1(2, theta + 2, -g) factor; cross-checked against direct quadrature."""
    ystar = 0.3
    val = log_moment_measure(beta_model, [ystar, ystar])
    g = beta_model.exposure.at(ystar)
    theta = 2.0
    ref, _ = quad(lambda s: s * math.exp(-g * s) * theta * (1 - s) ** (theta - 1.0), 0, 1)
    assert val == pytest.approx(math.log(ref), rel=1e-9)
    # and explicitly through the 1F1 display
    from levyhazard.special import log_hyp1f1

    display = (
        math.log(theta) + gammaln(2.0) + gammaln(theta) - gammaln(2.0 + theta)
        + log_hyp1f1(2.0, theta + 2.0, -g)
    )
    assert val == pytest.approx(display, rel=1e-12)


def test_monotone_exposure_lowers_first_cumulant(gg_model, small_data):
    bigger = lh.Dataset(list(small_data.records) + [lh.SurvivalRecord(1.3, False)])
    model2 = ModelSpec(gg_model.kernel, gg_model.family, gg_model.eta, bigger)
    ys = np.linspace(0.01, 2.4, 40)
    k1_small = gg_model.family.log_kappa(1, gg_model.exposure(ys), ys)
    k1_big = model2.family.log_kappa(1, model2.exposure(ys), ys)
    assert np.all(k1_big <= k1_small + 1e-14)


def test_model_finiteness_check_rejects_stable_without_exposure():
    # b = 0 with only a censored record at 0.7: the exposure vanishes on
    # (0.7, 2.0), where every tilted moment is infinite
    with pytest.warns(UserWarning, match="no exact events"):
        data = lh.Dataset([lh.SurvivalRecord(0.7, False)])
    with pytest.raises(DivergentIntegralError):
        ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 0.0),
                  lh.lebesgue(0.0, 2.0), data)


def test_stable_family_with_dl_kernel_works():
    """b = 0 is fine when the kernel truncates the latent support to where
    the exposure is positive; the singular integrals go through the graded
    panels."""
    data = make_data([0.5, 1.0])
    model = ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 0.0),
                      lh.lebesgue(0.0, 1.0), data)
    table = exact_partition_posterior(model)
    assert table.probs.sum() == pytest.approx(1.0, abs=1e-9)
    mine = math.exp(log_cell_integral(model, (1,)))
    ref = quad_cell_integral(model, (1,))
    assert mine == pytest.approx(ref, rel=1e-4)


def test_table_json(gg_model):
    import json

    table = exact_partition_posterior(gg_model)
    payload = json.loads(table.to_json())
    assert len(payload["partitions"]) == 15
    assert sum(p["prob"] for p in payload["partitions"]) == pytest.approx(1.0, abs=1e-9)
