import math

import numpy as np
import pytest

from mfspin import (
    CapExceededError,
    DenseProductMeasure,
    DiscreteMeasure,
    OccupancyVector,
    StateSpace,
    empirical_measure,
    log_mean_exp,
    relative_entropy,
    relative_entropy_dense,
)


@pytest.fixture
def uniform2():
    return StateSpace.uniform(2)


def test_state_space_rejects_bad_weights():
    with pytest.raises(ValueError):
        StateSpace([0.5, 0.0, 0.5])  # dead site
    with pytest.raises(ValueError):
        StateSpace([0.6, 0.6])  # not normalized
    with pytest.raises(ValueError):
        StateSpace([])
    with pytest.raises(ValueError):
        StateSpace([1.0], points=[[0.0], [1.0]])  # coordinate count mismatch


def test_measure_validation(uniform2):
    with pytest.raises(ValueError):
        DiscreteMeasure(uniform2, [0.7, 0.7])
    with pytest.raises(ValueError):
        DiscreteMeasure(uniform2, [1.2, -0.2])
    with pytest.raises(ValueError):
        DiscreteMeasure(uniform2, [1.0])
    mu = DiscreteMeasure.normalized(uniform2, [3.0, 1.0])
    assert np.allclose(mu.weights, [0.75, 0.25])


def test_entropy_reference_and_point_mass(uniform2):
    assert relative_entropy(DiscreteMeasure.a_priori(uniform2)) == 0.0
    assert relative_entropy(DiscreteMeasure.delta(uniform2, 0)) == pytest.approx(
        math.log(0.5), abs=1e-15
    )


def test_entropy_two_term_value(uniform2):
    # direct two-term evaluation of -sum mu_i log(mu_i / alpha_i)
    expected = -(0.75 * math.log(0.75 / 0.5) + 0.25 * math.log(0.25 / 0.5))
    got = relative_entropy(DiscreteMeasure(uniform2, [0.75, 0.25]))
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(-0.130812035941137, abs=1e-12)


def test_entropy_nonpositive_and_strictly_concave(uniform2):
    rng = np.random.default_rng(0)
    for _ in range(50):
        m1 = DiscreteMeasure(uniform2, rng.dirichlet([1.0, 1.0]))
        m2 = DiscreteMeasure(uniform2, rng.dirichlet([1.0, 1.0]))
        assert relative_entropy(m1) <= 0.0
        mid = m1.mix(m2, 0.5)
        gap = relative_entropy(mid) - 0.5 * (relative_entropy(m1) + relative_entropy(m2))
        assert gap >= 0.0
        if np.max(np.abs(m1.weights - m2.weights)) > 1e-3:
            assert gap > 0.0


def test_dense_entropy_reference_and_point_mass(uniform2):
    ref3 = DenseProductMeasure.product(DiscreteMeasure.a_priori(uniform2), 3)
    assert relative_entropy_dense(ref3) == 0.0
    point = np.zeros(4)
    point[2] = 1.0
    rho = DenseProductMeasure(uniform2, 2, point)
    assert relative_entropy_dense(rho) == pytest.approx(math.log(0.25), abs=1e-15)


def test_dense_entropy_product_rule(uniform2):
    mu = DiscreteMeasure(uniform2, [0.75, 0.25])
    rho = DenseProductMeasure.product(mu, 2)
    # cross-check by the direct 4-term sum
    direct = 0.0
    for i, wi in enumerate(mu.weights):
        for j, wj in enumerate(mu.weights):
            w = wi * wj
            ref = 0.25
            direct -= w * math.log(w / ref)
    got = relative_entropy_dense(rho)
    assert got == pytest.approx(direct, abs=1e-13)
    assert got == pytest.approx(2.0 * relative_entropy(mu), abs=1e-13)


def test_dense_entropy_almost_convex(uniform2):
    rng = np.random.default_rng(1)

    def psi(t):
        return 0.0 if t == 0.0 else -t * math.log(t)

    for N in (1, 2):
        for _ in range(10):
            w1 = rng.dirichlet(np.ones(2 ** N))
            w2 = rng.dirichlet(np.ones(2 ** N))
            theta = float(rng.uniform(0.05, 0.95))
            r1 = DenseProductMeasure(uniform2, N, w1)
            r2 = DenseProductMeasure(uniform2, N, w2)
            mix = DenseProductMeasure(uniform2, N, theta * w1 + (1 - theta) * w2)
            lhs = relative_entropy_dense(mix)
            rhs = (theta * relative_entropy_dense(r1)
                   + (1 - theta) * relative_entropy_dense(r2)
                   + psi(theta) + psi(1 - theta))
            assert lhs <= rhs + 1e-12


def test_strong_subadditivity_three_bodies(uniform2):
    rng = np.random.default_rng(2)
    for _ in range(10):
        rho = DenseProductMeasure(uniform2, 3, rng.dirichlet(np.ones(8)))
        lhs = relative_entropy_dense(rho) + relative_entropy_dense(rho.marginal({1}))
        rhs = (relative_entropy_dense(rho.marginal({0, 1}))
               + relative_entropy_dense(rho.marginal({1, 2})))
        assert lhs <= rhs + 1e-12


def test_monotone_entropy_density(uniform2):
    rng = np.random.default_rng(3)
    for _ in range(10):
        rho = DenseProductMeasure(uniform2, 3, rng.dirichlet(np.ones(8))).symmetrized()
        s1 = relative_entropy_dense(rho.marginal({0}))
        s2 = relative_entropy_dense(rho.marginal({0, 1})) / 2.0
        s3 = relative_entropy_dense(rho) / 3.0
        assert s1 >= s2 - 1e-12
        assert s2 >= s3 - 1e-12


def test_marginals_of_products(uniform2):
    alpha = DiscreteMeasure.a_priori(uniform2)
    rho = DenseProductMeasure.product(alpha, 3)
    pair = rho.marginal({0, 1})
    assert np.allclose(pair.weights, DenseProductMeasure.product(alpha, 2).weights)

    mu = DiscreteMeasure(uniform2, [0.75, 0.25])
    rho2 = DenseProductMeasure.product(mu, 2)
    assert np.allclose(rho2.marginal({1}).weights, mu.weights)
    assert np.allclose(rho2.marginal({0, 1}).weights, rho2.weights)  # identity

    with pytest.raises(ValueError):
        rho2.marginal(set())
    with pytest.raises(ValueError):
        rho2.marginal({5})


def test_exchangeable_marginals_match(uniform2):
    rng = np.random.default_rng(4)
    rho = DenseProductMeasure(uniform2, 3, rng.dirichlet(np.ones(8))).symmetrized()
    assert rho.is_exchangeable()
    a = rho.marginal({0, 1}).weights
    b = rho.marginal({1, 2}).weights
    assert np.allclose(a, b, atol=1e-15)


def test_dense_cap():
    space = StateSpace.uniform(10)
    with pytest.raises(CapExceededError):
        DenseProductMeasure(space, 8, np.ones(10 ** 8) / 1e8)  # above default cap


def test_occupancy_and_empirical(uniform2):
    occ = OccupancyVector((2, 0))
    assert occ.N == 2
    assert np.allclose(empirical_measure(uniform2, occ).weights, [1.0, 0.0])
    assert np.allclose(empirical_measure(uniform2, (1, 1)).weights, [0.5, 0.5])
    space3 = StateSpace.uniform(3)
    assert np.allclose(
        empirical_measure(space3, (2, 1, 0)).weights, [2 / 3, 1 / 3, 0.0]
    )
    with pytest.raises(ValueError):
        OccupancyVector((0, 0))
    with pytest.raises(ValueError):
        OccupancyVector((1, -1))
    with pytest.raises(ValueError):
        empirical_measure(uniform2, (1, 1, 1))


def test_log_mean_exp_values():
    assert log_mean_exp([0.0, 0.0], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    c = -3.7
    assert log_mean_exp([c, c], [0.25, 0.75]) == pytest.approx(c, abs=1e-15)
    expected = math.log(0.5 + 0.5 * math.exp(8.0))
    assert log_mean_exp([8.0, 0.0], [0.5, 0.5]) == pytest.approx(expected, rel=1e-15)


def test_log_mean_exp_extended_values():
    assert log_mean_exp([-math.inf, 0.0], [0.5, 0.5]) == pytest.approx(math.log(0.5))
    assert log_mean_exp([-math.inf, -math.inf], [0.5, 0.5]) == -math.inf
    assert log_mean_exp([math.inf, 0.0], [0.5, 0.5]) == math.inf
    # zero-weight entries carry no mass, whatever their value
    assert log_mean_exp([math.inf, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        log_mean_exp([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        log_mean_exp([1.0, 2.0], [-0.5, 1.5])


def test_log_mean_exp_lipschitz():
    rng = np.random.default_rng(5)
    w = np.full(6, 1.0 / 6.0)
    for _ in range(100):
        f = rng.normal(0.0, 3.0, size=6)
        g = rng.normal(0.0, 3.0, size=6)
        lhs = abs(log_mean_exp(f, w) - log_mean_exp(g, w))
        assert lhs <= np.max(np.abs(f - g)) + 1e-12


def test_mix_and_barycenter():
    space = StateSpace.uniform(2, points=[[1.0], [-1.0]])
    mu = DiscreteMeasure(space, [0.75, 0.25])
    assert mu.barycenter() == pytest.approx([0.5])
    mixed = mu.mix(DiscreteMeasure.a_priori(space), 0.5)
    assert np.allclose(mixed.weights, [0.625, 0.375])
