import logging
import math

import numpy as np
import pytest
from scipy import integrate, stats

from coalbayes.demography import (
    BottleneckPair,
    ScaledPair,
    Trajectory,
    cum_rate,
    eval_size,
    random_piecewise,
)
from coalbayes.exact import (
    CorrectProb,
    Method,
    WstarConfig,
    hellinger_sq_pair,
    hellinger_upper_bound,
    p_correct_multi_locus,
    p_correct_n3,
    p_correct_scaled_multi,
    p_correct_scaled_single,
    p_correct_single_pair,
    scaled_bound_kim,
    tv_distance_numeric,
    wstar_cdf,
    xi_display,
)
from coalbayes.montecarlo import MCConfig, estimate_p_correct
from coalbayes.simulate import RngSpec

CONST = Trajectory.constant(1.0)

# (T, S, a, b) -> success probability for n = 3, from 2-D quadrature of
# (1/2) * integral of max(f1, f2) over the joint density of the two coalescent
# times (constant base N = 1, N0 = 1), split along every decision boundary; frozen
N3_ORACLE = [
    ((1.0, 0.5, 2.0, 1.0), 0.5473312472163004),
    ((0.3, 3.0, 3.0, 1.0), 0.7063150388824798),
    ((0.5, 0.2, 1.0, 4.0), 0.5728967827951877),
    ((0.0, 5.0, 2.0, 0.5), 0.8235613812262295),
    ((0.2, 1.0, 1.5, 1.0), 0.5788011499406741),
    ((0.4, 10.0, 5.0, 1.0), 0.7561223647565076),
]


def random_pair(rng):
    base = random_piecewise(rng)
    a, b = np.exp(rng.uniform(-1.5, 1.5, 2))
    return BottleneckPair(base, float(rng.uniform(0, 2)), float(rng.uniform(0.05, 3)),
                          float(a), float(b), float(np.exp(rng.uniform(-1, 1))))


def density(traj, x):
    return math.exp(-cum_rate(traj, 0, x)) / eval_size(traj, x)


# -- one pair, one locus ----------------------------------------------------------

def test_single_pair_examples():
    assert p_correct_single_pair(BottleneckPair(CONST, 0.3, 1.0, 1.0, 1.0)).value == 0.5
    pair = BottleneckPair(CONST, 0.0, 10.0, 2.0, 1.0)
    assert p_correct_single_pair(pair).value == pytest.approx(0.625, abs=1e-15)
    base = Trajectory.constant(1.0 / 1.54)
    pair = BottleneckPair(base, 1.0, 10.0, 2.0, 1.0)
    assert pair.lam_T == pytest.approx(1.54)
    assert p_correct_single_pair(pair).value == pytest.approx(0.5 + 0.125 * math.exp(-1.54), rel=1e-14)
    assert p_correct_single_pair(pair).value == pytest.approx(0.5268, abs=1e-4)


def test_single_pair_symmetric_and_monotone():
    rng = np.random.default_rng(1)
    for _ in range(50):
        pair = random_pair(rng)
        v = p_correct_single_pair(pair).value
        assert v == p_correct_single_pair(pair.swapped()).value
        assert 0.5 <= v <= 1.0
    for a in (1.5, 3.0):
        vals = [p_correct_single_pair(BottleneckPair(CONST, 0.2, S, a, 1.0)).value
                for S in np.linspace(0.01, 5, 60)]
        assert all(y >= x for x, y in zip(vals, vals[1:]))
    vals = [p_correct_single_pair(BottleneckPair(CONST, 0.2, 1.0, a, 1.0)).value
            for a in np.exp(np.linspace(0, 3, 60))]
    assert all(y >= x for x, y in zip(vals, vals[1:]))


def test_optimal_classifier_identity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pair = random_pair(rng)
        tv = tv_distance_numeric(pair)
        assert p_correct_single_pair(pair).value == pytest.approx(0.5 * (1 + tv), abs=1e-8)
        c = float(rng.uniform(0.05, 0.95))
        tv = tv_distance_numeric(ScaledPair(random_piecewise(rng), c))
        assert p_correct_scaled_single(c).value == pytest.approx(0.5 * (1 + tv), abs=1e-8)


def test_tv_examples():
    assert tv_distance_numeric(BottleneckPair(CONST, 0.5, 1.0, 1.2, 1.2)) == 0.0
    assert tv_distance_numeric(BottleneckPair(CONST, 0.0, 10.0, 2.0, 1.0)) == pytest.approx(0.25, abs=1e-9)
    assert tv_distance_numeric(ScaledPair(CONST, 0.5)) == pytest.approx(0.25, abs=1e-9)


# -- independent loci and W* --------------------------------------------------------

def test_multi_locus_reduces_to_single():
    cfg = WstarConfig(1_000_000, RngSpec(3))
    for pair in (BottleneckPair(CONST, 0.3, 1.0, 2.0, 1.0), BottleneckPair(CONST, 0.1, 0.4, 0.5, 3.0)):
        exact = p_correct_single_pair(pair).value
        approx = p_correct_multi_locus(pair, 1, cfg).value
        assert abs(approx - exact) < 3 * math.sqrt(0.25 / cfg.replicates)


def test_multi_locus_edge_cases():
    assert p_correct_multi_locus(BottleneckPair(CONST, 0.3, 1.0, 2.0, 2.0), 7).value == 0.5
    tiny = BottleneckPair(CONST, 0.3, 1e-12, 2.0, 1.0)
    assert p_correct_multi_locus(tiny, 5).value == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        p_correct_multi_locus(tiny, 0)
    with pytest.raises(ValueError):
        WstarConfig(replicates=10)


def test_multi_locus_label_symmetry_and_growth():
    cfg = WstarConfig(200_000, RngSpec(4))
    pair = BottleneckPair(CONST, 0.3, 1.0, 2.0, 1.0)
    assert p_correct_multi_locus(pair, 5, cfg).value == p_correct_multi_locus(pair.swapped(), 5, cfg).value
    vals = [p_correct_multi_locus(pair, J, cfg).value for J in (1, 2, 5, 10, 20)]
    assert all(y > x for x, y in zip(vals, vals[1:]))
    res = p_correct_multi_locus(pair, 20, cfg)
    assert res.method is Method.THM2 and res.info["skipped_mass"] < 1e-10


def test_wstar_cdf():
    cfg = WstarConfig(200_000, RngSpec(5))
    assert wstar_cdf(3, 1.0, 1.0, -0.1, cfg) == 0.0
    assert wstar_cdf(3, 1.0, 1.0, 3.0, cfg) == 1.0
    rate, S = 1.7, 0.8
    for t in (0.1, 0.3, 0.6):
        exact = -math.expm1(-rate * t) / -math.expm1(-rate * S)
        se = math.sqrt(exact * (1 - exact) / cfg.replicates)
        assert abs(wstar_cdf(1, rate, S, t, cfg) - exact) < 3 * se
    # with S far beyond the bulk the sum of two is Gamma(2, rate)
    for t in (0.5, 1.0, 2.0):
        exact = stats.gamma.cdf(t, 2, scale=1 / rate)
        se = math.sqrt(exact * (1 - exact) / cfg.replicates)
        assert abs(wstar_cdf(2, rate, 60.0, t, cfg) - exact) < 3 * se


def test_wstar_table_growth_is_order_free():
    a = WstarConfig(5000, RngSpec(6, 1))
    b = WstarConfig(5000, RngSpec(6, 1))
    big_first = [wstar_cdf(5, 2.0, 1.0, 1.5, a), wstar_cdf(2, 2.0, 1.0, 0.7, a)]
    from coalbayes import exact

    exact._TABLES.clear()
    small_first = [wstar_cdf(2, 2.0, 1.0, 0.7, b), wstar_cdf(5, 2.0, 1.0, 1.5, b)]
    assert big_first == small_first[::-1]


# -- three samples ------------------------------------------------------------------

@pytest.mark.parametrize("params,ref", N3_ORACLE)
def test_n3_against_quadrature_oracle(params, ref):
    T, S, a, b = params
    pair = BottleneckPair(CONST, T, S, a, b)
    value = p_correct_n3(pair).value
    assert value == pytest.approx(ref, abs=1e-10)
    assert p_correct_n3(pair.swapped()).value == pytest.approx(value, abs=1e-14)


def test_n3_examples():
    assert p_correct_n3(BottleneckPair(CONST, 1.0, 0.5, 1.0, 1.0)).value == 0.5
    pair = BottleneckPair(CONST, 1.0, 0.5, 2.0, 1.0)
    assert p_correct_n3(pair).value > p_correct_single_pair(pair).value
    growth = BottleneckPair(Trajectory.exponential(1.0, 1.0), 1.0, 0.5, 2.0, 1.0)
    assert p_correct_n3(growth).value > p_correct_single_pair(growth).value


def test_n3_translation_invariance():
    # only Lambda(T) enters: two bases with equal Lambda(T) give the same value
    p1 = BottleneckPair(CONST, 0.6, 1.3, 2.5, 1.0)
    p2 = BottleneckPair(Trajectory.piecewise_constant([0, 0.1], [0.25, 2.0]), 0.5, 1.3, 2.5, 1.0)
    assert p1.lam_T == pytest.approx(p2.lam_T)
    assert p_correct_n3(p1).value == pytest.approx(p_correct_n3(p2).value, abs=1e-14)


def test_n3_displayed_formula_recorded(caplog):
    pair = BottleneckPair(CONST, 0.3, 3.0, 3.0, 1.0)  # 2*delta/3 < S < 2*delta
    res = p_correct_n3(pair)
    assert res.info["displayed"] == pytest.approx(res.value, abs=1e-12)
    with caplog.at_level(logging.DEBUG, logger="coalbayes.exact"):
        far = p_correct_n3(BottleneckPair(CONST, 0.4, 10.0, 5.0, 1.0))  # S > 2*delta
    assert abs(far.info["displayed"] - far.value) > 1e-3
    assert xi_display(BottleneckPair(CONST, 0.4, 10.0, 5.0, 1.0)) is not None


def test_n3_against_monte_carlo():
    pair = BottleneckPair(CONST, 0.2, 1.0, 3.0, 1.0)
    mc = estimate_p_correct(pair, 3, 1, MCConfig(100_000, RngSpec(7)))
    assert abs(mc.value - p_correct_n3(pair).value) < 3 * mc.mc_se


# -- constant-ratio hypotheses ------------------------------------------------------

def test_scaled_single_examples():
    assert p_correct_scaled_single(0.5).value == 0.625
    assert p_correct_scaled_single(1 - 1e-9).value == pytest.approx(0.5, abs=1e-6)
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            p_correct_scaled_single(bad)
        with pytest.raises(ValueError):
            p_correct_scaled_multi(bad, 3)


def test_scaled_multi_reduces_to_single():
    for c in np.arange(0.05, 0.951, 0.05):
        assert abs(p_correct_scaled_multi(float(c), 1).value - p_correct_scaled_single(float(c)).value) <= 1e-12


def test_scaled_multi_gamma_sum_oracle():
    c, J, n = 0.5, 10, 1_000_000
    rng = RngSpec(8).generator()
    t = J * c * math.log(1 / c) / (1 - c)
    z1 = rng.standard_exponential((n, J)).sum(axis=1)
    z2 = c * rng.standard_exponential((n, J)).sum(axis=1)
    oracle = 0.5 * ((z1 > t).mean() + (z2 < t).mean())
    assert p_correct_scaled_multi(c, J).value == pytest.approx(oracle, abs=0.002)
    assert p_correct_scaled_multi(c, J).value == pytest.approx(0.8606638937, abs=1e-9)


@pytest.mark.parametrize("c", [0.6, 0.75, 0.9])
def test_scaled_multi_monotone_in_J(c):
    vals = [p_correct_scaled_multi(c, J).value for J in range(1, 101)]
    assert all(y >= x for x, y in zip(vals, vals[1:]))
    assert all(0.5 <= v <= 1.0 for v in vals)


# -- bounds -------------------------------------------------------------------------

def test_hellinger_examples():
    assert hellinger_sq_pair(BottleneckPair(CONST, 0.3, 1.0, 2.0, 2.0)) == 0.0
    far = BottleneckPair(CONST, 0.0, 200.0, 2.0, 1.0)
    assert hellinger_sq_pair(far) == pytest.approx((math.sqrt(2) - 1) ** 2 / 3, rel=1e-12)
    assert hellinger_sq_pair(far) == pytest.approx(0.057191, abs=1e-6)
    assert hellinger_upper_bound(BottleneckPair(CONST, 0.3, 1.0, 2.0, 2.0)).value == 0.5


def test_hellinger_against_quadrature():
    rng = np.random.default_rng(9)
    for _ in range(10):
        pair = random_pair(rng)
        t1, t2 = pair.trajectory(1), pair.trajectory(2)
        pts = sorted({pair.T, pair.T + pair.S, *[s.start for s in pair.base.segments]})
        g = lambda x: (math.sqrt(density(t1, x)) - math.sqrt(density(t2, x))) ** 2  # noqa: E731
        # the integrand vanishes before T
        edges = [p for p in pts if p >= pair.T] + [pair.T + pair.S + 1.0]
        edges = sorted(set(edges))
        total = sum(integrate.quad(g, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                    for lo, hi in zip(edges, edges[1:]))
        total += integrate.quad(g, edges[-1], math.inf, epsabs=1e-14, limit=200)[0]
        assert hellinger_sq_pair(pair) == pytest.approx(0.5 * total, abs=1e-8)


def test_hellinger_bound_dominates_and_scales():
    for a in np.linspace(0.1, 4.0, 20):
        for S in np.linspace(0.1, 4.0, 20):
            pair = BottleneckPair(CONST, 0.3, float(S), float(a), 1.0)
            assert hellinger_upper_bound(pair).value >= p_correct_single_pair(pair).value
    pair = BottleneckPair(CONST, 0.3, 0.4, 1.3, 1.0)
    one = hellinger_upper_bound(pair).value
    assert hellinger_upper_bound(pair, 4).value == pytest.approx(0.5 + 2 * (one - 0.5), rel=1e-14)
    big = hellinger_upper_bound(BottleneckPair(CONST, 0.0, 5.0, 20.0, 1.0), 50)
    assert big.clipped and big.value == 1.0 and big.info["raw"] > 1.0


def test_kim_bound():
    assert scaled_bound_kim(1.0, 5).value == 0.5
    assert scaled_bound_kim(0.4, 1).value == pytest.approx(0.875)
    assert scaled_bound_kim(0.1, 1).value > 1.0
    for J in (1, 2, 5, 10, 20):
        for c in np.linspace(0.05, 0.95, 19):
            kim = scaled_bound_kim(float(c), J).value
            if kim <= 1.0:
                assert kim >= p_correct_scaled_multi(float(c), J).value


def test_correct_prob_validation():
    with pytest.raises(ValueError):
        CorrectProb(0.4, Method.THM1)
    CorrectProb(1.3, Method.BOUND_SCALED)
    assert float(CorrectProb(0.7, Method.THM4)) == 0.7
