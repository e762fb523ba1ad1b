import math

import numpy as np
import pytest
from scipy.stats import chi2, chisquare, kstest

import levyhazard as lh
from levyhazard.crm import (
    CrmDraw,
    auto_epsilon,
    draw_posterior_crm,
    draw_tilted_crm,
    expected_dropped_mass,
    expected_total_mass,
    log_laplace_functional,
    nu_integral,
    verify_moment_identity,
    verify_tilting,
    _untilted_atoms,
)
from levyhazard.exceptions import DivergentIntegralError
from levyhazard.partitions import Partition
from levyhazard.posterior import ModelSpec

from conftest import make_data


@pytest.fixture(scope="module")
def compound_model(small_data):
    # finite-activity gamma compound Poisson: exact simulation with eps = 0
    return ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(-1.0, 1.0),
                     lh.lebesgue(0.0, 2.5), small_data)


@pytest.fixture(scope="module")
def gg_inf_model(small_data):
    return ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0),
                     lh.lebesgue(0.0, 2.5), small_data)


def test_atom_count_poisson_mean():
    """alpha=-1, b=1, g=0, eta mass 1: rho is e^{-s} ds, total mass 1."""
    fam = lh.GeneralizedGamma(-1.0, 1.0)
    eta = lh.lebesgue(0.0, 1.0)
    rng = np.random.default_rng(5)
    counts = []
    for _ in range(10_000):
        ss, ys = _untilted_atoms(fam, eta, 0.0, rng)
        counts.append(len(ss))
    counts = np.array(counts, dtype=float)
    mean_ref = fam.tail_mass(0.0) * 1.0
    assert mean_ref == pytest.approx(1.0, rel=1e-12)
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - mean_ref) < 4.0 * se


def test_tilted_mean_measure_gamma_process(small_data):
    """E[mu_g(A)] = int_A kappa_1(g|y) eta(dy): the gamma process has a
    slowly growing atom count, so the 1e-4 dropped-mass budget is cheap."""
    model = ModelSpec(lh.DykstraLaud(), lh.GeneralizedGamma(0.0, 1.0),
                      lh.lebesgue(0.0, 2.5), small_data)
    eps = 1e-7
    assert expected_dropped_mass(model, eps) < 1e-4 * expected_total_mass(model)
    rng = np.random.default_rng(42)
    lo, hi = 0.5, 1.8
    masses = np.array([
        draw_tilted_crm(model, eps, rng).mass_in(lo, hi) for _ in range(10_000)
    ])
    ref = math.exp(model.eta.log_integral(
        lambda y: model.family.log_kappa(1, model.exposure(y), y),
        lo=lo, hi=hi, knots=model.exposure.knots,
    ))
    se = masses.std(ddof=1) / math.sqrt(len(masses))
    assert abs(masses.mean() - ref) < 4.0 * se


def test_tilted_mean_measure_stable_with_truncation_correction(gg_inf_model):
    """At alpha = 1/2 the dropped mass scales like sqrt(eps): correct the
    reference by the region's expected dropped mass instead of chasing a
    tiny eps."""
    model = gg_inf_model
    eps = 1e-5
    rng = np.random.default_rng(43)
    lo, hi = 0.5, 1.8
    masses = np.array([
        draw_tilted_crm(model, eps, rng).mass_in(lo, hi) for _ in range(6_000)
    ])
    ref = math.exp(model.eta.log_integral(
        lambda y: model.family.log_kappa(1, model.exposure(y), y),
        lo=lo, hi=hi, knots=model.exposure.knots,
    )) - expected_dropped_mass(model, eps, lo=lo, hi=hi)
    se = masses.std(ddof=1) / math.sqrt(len(masses))
    assert abs(masses.mean() - ref) < 4.0 * se


def test_total_mass_mean_with_truncation_correction(compound_model):
    model = compound_model
    rng = np.random.default_rng(3)
    masses = [draw_tilted_crm(model, 0.0, rng).total_mass for _ in range(8_000)]
    masses = np.array(masses)
    ref = expected_total_mass(model)
    se = masses.std(ddof=1) / math.sqrt(len(masses))
    assert abs(masses.mean() - ref) < 4.0 * se


def test_zero_exposure_thinning_is_identity(small_data):
    """With g = 0 thinning accepts every atom: same stream, same draw."""
    fam = lh.GeneralizedGamma(-1.0, 1.0)
    eta = lh.lebesgue(0.0, 2.5)
    empty = lh.Dataset([])
    model = ModelSpec(lh.DykstraLaud(), fam, eta, empty)
    d1 = draw_tilted_crm(model, 0.0, np.random.default_rng(7))
    ss, ys = _untilted_atoms(fam, eta, 0.0, np.random.default_rng(7))
    np.testing.assert_array_equal(d1.jumps, ss)
    np.testing.assert_array_equal(d1.locations, ys)


def test_smaller_eps_never_lowers_expected_count(gg_inf_model):
    fam = gg_inf_model.family
    tails = [fam.tail_mass(eps) for eps in (0.1, 0.05, 0.025, 0.0125)]
    assert all(b >= a for a, b in zip(tails, tails[1:]))


def test_auto_epsilon(gg_inf_model):
    eps = auto_epsilon(gg_inf_model, frac=1e-4)
    assert eps > 0
    assert expected_dropped_mass(gg_inf_model, eps) < 1e-4 * expected_total_mass(gg_inf_model)


def test_eps_validation(gg_inf_model, compound_model):
    rng = np.random.default_rng(0)
    with pytest.raises(DivergentIntegralError):
        draw_tilted_crm(gg_inf_model, 0.0, rng)  # infinite activity needs eps > 0
    with pytest.raises(DivergentIntegralError):
        _untilted_atoms(lh.GeneralizedGamma(-1.0, 1.0), lh.lebesgue(0.0, np.inf), 0.0, rng)


def test_thinning_acceptance_profile(gg_inf_model):
    """Empirical acceptance frequency in jump-size bins matches e^{-g(y)s}."""
    model = gg_inf_model
    rng = np.random.default_rng(11)
    eps = 0.01
    ss_all, acc_all = [], []
    for _ in range(4000):
        ss, ys = _untilted_atoms(model.family, model.eta, eps, rng)
        if not len(ss):
            continue
        keep = rng.random(len(ss)) < np.exp(-model.exposure(ys) * ss)
        ss_all.append(np.column_stack([ss, model.exposure(ys) * ss]))
        acc_all.append(keep)
    data = np.concatenate(ss_all)
    acc = np.concatenate(acc_all)
    # bin by the exponent g(y) s, compare acceptance rate within bins
    expo = data[:, 1]
    edges = np.quantile(expo, np.linspace(0, 1, 9))
    stat = 0.0
    dof = 0
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (expo >= a) & (expo < b)
        if sel.sum() < 50:
            continue
        p_hat = acc[sel].mean()
        p_ref = np.exp(-expo[sel]).mean()
        var = max(p_ref * (1 - p_ref) / sel.sum(), 1e-12)
        stat += (p_hat - p_ref) ** 2 / var
        dof += 1
    assert stat < chi2.ppf(0.99, dof)


def test_posterior_crm_decomposition(gg_inf_model):
    """E[mu*(A)] = int_A kappa_1 eta + sum_j E[J_j] 1{Y_j* in A}, given
    fixed (p, Y*)."""
    model = gg_inf_model
    p = Partition(((0, 2), (1,), (3,)))
    ystar = np.array([0.35, 0.7, 1.3])
    eps = 1e-6
    rng = np.random.default_rng(13)
    lo, hi = 0.0, 1.0
    masses = np.array([
        draw_posterior_crm(model, p, ystar, eps, rng).mass_in(lo, hi)
        for _ in range(8_000)
    ])
    diffuse = math.exp(model.eta.log_integral(
        lambda y: model.family.log_kappa(1, model.exposure(y), y),
        lo=lo, hi=hi, knots=model.exposure.knots,
    ))
    g = model.exposure(ystar)
    fixed = sum(
        math.exp(float(model.family.log_jump_mean(len(c), g[j], ystar[j])))
        for j, c in enumerate(p.cells) if lo <= ystar[j] <= hi
    )
    se = masses.std(ddof=1) / math.sqrt(len(masses))
    assert abs(masses.mean() - (diffuse + fixed)) < 4.0 * se


def test_posterior_crm_empty_partition_equals_tilted(gg_inf_model):
    rng1 = np.random.default_rng(19)
    rng2 = np.random.default_rng(19)
    a = draw_tilted_crm(gg_inf_model, 1e-4, rng1)
    b = draw_posterior_crm(gg_inf_model, Partition(()), np.array([]), 1e-4, rng2)
    np.testing.assert_array_equal(a.jumps, b.jumps)


def test_posterior_crm_fixed_atoms_are_gamma(gg_inf_model):
    """Fixed-atom jumps follow Gamma(e_j - alpha) / (b + g)."""
    model = gg_inf_model
    p = Partition(((0, 1),))
    ystar = np.array([0.3])
    rng = np.random.default_rng(23)
    eps = 1e-5
    draws = []
    for _ in range(4000):
        d = draw_posterior_crm(model, p, ystar, eps, rng)
        # the fixed atom is the last one appended at location ystar
        draws.append(d.jumps[-1])
    g = float(model.exposure(ystar)[0])
    from scipy.stats import gamma as gamma_dist

    res = kstest(np.array(draws), gamma_dist(a=2.0 - 0.5, scale=1.0 / (1.0 + g)).cdf)
    assert res.pvalue > 0.001


def test_crm_draw_validation_and_export(tmp_path):
    d = CrmDraw(np.array([0.5, 0.2]), np.array([1.0, 2.0]), 0.01, 1e-6)
    assert d.total_mass == pytest.approx(0.7)
    rep = d.truncation_report()
    assert rep["atom_count"] == 2 and rep["eps"] == 0.01
    path = tmp_path / "draw.csv"
    d.write_csv(path)
    assert path.read_text().splitlines()[0] == "jump,location"
    with pytest.raises(ValueError):
        CrmDraw(np.array([0.0]), np.array([1.0]), 0.0, 0.0)


# --- Poisson-calculus identities -------------------------------------------


def test_nu_integral_against_scipy():
    from scipy.integrate import dblquad

    fam = lh.GeneralizedGamma(-1.0, 1.0)
    eta = lh.lebesgue(0.0, 1.0)
    fn = lambda s, y: (1.0 - np.exp(-s)) * (1.0 + y)
    mine = nu_integral(fam, eta, fn)
    ref, _ = dblquad(
        lambda s, y: (1 - math.exp(-s)) * (1 + y) * math.exp(-s), 0, 1, 0, 50
    )
    assert mine == pytest.approx(ref, rel=1e-7)


def test_verify_tilting_zero_function_is_exact_identity():
    fam = lh.GeneralizedGamma(-1.0, 1.0)
    eta = lh.lebesgue(0.0, 1.0)
    zero = lambda s, y: np.zeros(np.broadcast(s, y).shape)
    h = lambda s, y: 0.5 * (1.0 - np.exp(-s))
    rep = verify_tilting(fam, eta, zero, h, 50_000, seed=31)
    assert abs(rep.z_score) < 4.0


def test_verify_tilting_point_mass_closed_form():
    """Constant f, h on a point-mass eta: N(f) = c K with K Poisson, so
    both sides reduce to exp(-M(1 - e^{-(c_f + c_h)})), computed by hand."""
    fam = lh.GeneralizedGamma(-1.0, 2.0)  # jumps Gamma(1, 1/2), mass 1/2
    eta = lh.PointMass(0.5, mass=2.0)
    cf, ch = 0.4, 0.7
    f = lambda s, y: np.full(np.broadcast(s, y).shape, cf)
    h = lambda s, y: np.full(np.broadcast(s, y).shape, ch)
    lam = fam.tail_mass(0.0) * 2.0
    hand = math.exp(-lam * (1.0 - math.exp(-(cf + ch))))
    analytic = math.exp(
        log_laplace_functional(fam, eta, f)
        + log_laplace_functional(fam, eta, h, tilt_by=f)
    )
    assert analytic == pytest.approx(hand, rel=1e-9)
    rep = verify_tilting(fam, eta, f, h, 50_000, seed=37)
    assert rep.analytic == pytest.approx(hand, rel=1e-9)
    assert abs(rep.z_score) < 4.0


def test_verify_tilting_nontrivial():
    fam = lh.GeneralizedGamma(-0.5, 2.0)
    eta = lh.lebesgue(0.0, 2.0, scale=0.75)
    f = lambda s, y: 0.8 * (1.0 - np.exp(-2.0 * s)) * np.exp(-y)
    h = lambda s, y: 0.2 * np.minimum(s, 1.0)
    rep = verify_tilting(fam, eta, f, h, 100_000, seed=41)
    assert abs(rep.z_score) < 4.0


def test_verify_tilting_requires_finite_activity():
    with pytest.raises(DivergentIntegralError):
        verify_tilting(lh.GeneralizedGamma(0.5, 1.0), lh.lebesgue(0, 1),
                       lambda s, y: s, lambda s, y: s, 100, seed=0)


def test_moment_identity_zero_function():
    fam = lh.GeneralizedGamma(-1.0, 1.0)
    eta = lh.lebesgue(0.0, 1.0)
    g1 = lambda s, y: s / (1.0 + s)
    zero = lambda s, y: np.zeros(np.broadcast(s, y).shape)
    rep = verify_moment_identity(fam, eta, [g1, zero], 5_000, seed=43)
    assert rep.mc_mean == 0.0 and rep.analytic == 0.0
    assert rep.z_score == 0.0


def test_moment_identity_pair():
    fam = lh.GeneralizedGamma(-1.0, 1.0)
    eta = lh.lebesgue(0.0, 1.0)
    g1 = lambda s, y: s / (1.0 + s)
    g2 = lambda s, y: 1.0 - np.exp(-s)
    rep = verify_moment_identity(fam, eta, [g1, g2], 100_000, seed=47)
    assert abs(rep.z_score) < 4.0


def test_moment_identity_triple_five_partition_expansion():
    fam = lh.GeneralizedGamma(-1.5, 1.0)
    eta = lh.lebesgue(0.0, 1.5, scale=0.5)
    g1 = lambda s, y: s / (1.0 + s)
    g2 = lambda s, y: 1.0 - np.exp(-s)
    g3 = lambda s, y: np.exp(-y) * np.minimum(s, 2.0)
    rep = verify_moment_identity(fam, eta, [g1, g2, g3], 100_000, seed=53)
    assert abs(rep.z_score) < 4.0


def test_moment_identity_requires_two_or_three():
    fam = lh.GeneralizedGamma(-1.0, 1.0)
    with pytest.raises(ValueError):
        verify_moment_identity(fam, lh.lebesgue(0, 1), [lambda s, y: s], 100, seed=0)
