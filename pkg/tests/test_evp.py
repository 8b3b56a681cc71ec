import math

import numpy as np
import pytest

from mfspin import (
    AtomicMetaMeasure,
    DiscreteMeasure,
    Interaction,
    OptimizerError,
    StateSpace,
    cavity_values,
    evp_gradient,
    evp_objective,
    gdfp_objective,
    minimize_evp_capped,
    pressure,
    pushforward_cavity,
    solve_evp,
    solve_gdfp,
)

import oracles
from conftest import random_interior_measure, random_measure


def test_objective_values(ising_af):
    space, phi = ising_af
    alpha = DiscreteMeasure.a_priori(space)
    assert evp_objective(alpha, phi) == pytest.approx(2.0, abs=1e-14)
    want = math.log(0.5 + 0.5 * math.e ** 8)
    assert evp_objective(DiscreteMeasure.delta(space, 0), phi) == pytest.approx(
        want, rel=1e-14
    )


def test_objective_matches_mean_profile(ising_af, ising_f):
    rng = np.random.default_rng(0)
    for (space, phi), sign in ((ising_af, -1), (ising_f, +1)):
        for _ in range(20):
            nu = random_measure(space, rng)
            mean = float(nu.barycenter()[0])
            assert evp_objective(nu, phi) == pytest.approx(
                oracles.ising_evp_profile(mean, sign), rel=1e-12
            )


def test_objective_convex_for_convex_pair_energy(ising_af):
    space, phi = ising_af
    rng = np.random.default_rng(1)
    for _ in range(20):
        n1, n2 = random_measure(space, rng), random_measure(space, rng)
        mid = n1.mix(n2, 0.5)
        assert evp_objective(mid, phi) <= 0.5 * (
            evp_objective(n1, phi) + evp_objective(n2, phi)
        ) + 1e-10


def test_gradient_matches_centered_differences(ising_af, ising_f):
    rng = np.random.default_rng(2)
    for space, phi in (ising_af, ising_f):
        for _ in range(20):
            nu = random_interior_measure(space, rng)
            g = evp_gradient(nu, phi)
            u = rng.standard_normal(space.m)
            u -= u.mean()
            t = 1e-5
            up = evp_objective(DiscreteMeasure.normalized(space, nu.weights + t * u), phi)
            dn = evp_objective(DiscreteMeasure.normalized(space, nu.weights - t * u), phi)
            fd = (up - dn) / (2 * t)
            assert abs(fd - float(g @ u)) <= 1e-6 * (1.0 + abs(fd))
    with pytest.raises(ValueError):
        evp_gradient(DiscreteMeasure.delta(ising_af[0], 0), ising_af[1])


def test_symmetric_point_is_stationary_not_always_optimal(ising_af, ising_f):
    space, phi_af = ising_af
    _, phi_f = ising_f
    alpha = DiscreteMeasure.a_priori(space)
    u = np.array([1.0, -1.0])
    for phi in (phi_af, phi_f):
        g = evp_gradient(alpha, phi)
        assert abs(float(g @ u)) <= 1e-12
    # attractive model: the symmetric point is a 1-d local minimum of the
    # profile (second derivative +12), so not the maximizer
    t = 1e-4
    prof = [oracles.ising_evp_profile(m, +1) for m in (-t, 0.0, t)]
    second = (prof[0] - 2 * prof[1] + prof[2]) / t ** 2
    assert second == pytest.approx(12.0, abs=1e-3)
    assert solve_evp(phi_f).value > evp_objective(alpha, phi_f)


def test_atomic_meta_measure_validation(ising_af):
    space, _ = ising_af
    alpha = DiscreteMeasure.a_priori(space)
    with pytest.raises(ValueError):
        AtomicMetaMeasure([])
    with pytest.raises(ValueError):
        AtomicMetaMeasure([(0.0, alpha)])
    rho = AtomicMetaMeasure([(2.0, alpha)])
    assert rho.total_mass == 2.0
    assert rho.scaled(0.5).total_mass == 1.0


def test_cavity_dirac_collapse(ising_af, ising_f):
    rng = np.random.default_rng(3)
    for space, phi in (ising_af, ising_f):
        probes = [DiscreteMeasure.a_priori(space)] + [
            random_measure(space, rng) for _ in range(5)
        ]
        for nu in probes:
            want = evp_objective(nu, phi)
            for N in range(1, 17):
                got = cavity_values(AtomicMetaMeasure.dirac(nu), N, phi).total
                assert abs(got - want) <= 1e-10


def test_cavity_two_atom_value(ising_af):
    space, phi = ising_af
    alpha = DiscreteMeasure.a_priori(space)
    d0 = DiscreteMeasure.delta(space, 0)
    rho = AtomicMetaMeasure([(0.5, alpha), (0.5, d0)])
    cv = cavity_values(rho, 1, phi)
    # closed form: A(alpha) = e^4, A(delta) = 1/2 + e^8/2
    a_alpha = math.e ** 4
    a_delta = 0.5 + 0.5 * math.e ** 8
    want_g1 = math.log(0.5 * a_alpha + 0.5 * a_delta)
    want_g2 = math.log(0.5 * math.e ** 2 + 0.5)
    assert cv.g1 == pytest.approx(want_g1, rel=1e-13)
    assert cv.g2 == pytest.approx(want_g2, rel=1e-13)
    assert cv.total == pytest.approx(want_g1 - want_g2, rel=1e-13)
    assert cv.total == pytest.approx(5.2162, abs=1e-4)
    assert cv.total >= pressure(1, phi, "evp")


def test_cavity_homogeneity(ising_af):
    space, phi = ising_af
    rng = np.random.default_rng(4)
    rho = AtomicMetaMeasure(
        [(float(w), random_measure(space, rng)) for w in rng.uniform(0.5, 2.0, 4)]
    )
    base = cavity_values(rho, 3, phi).total
    for t in (0.1, 3.0, 100.0):
        assert abs(cavity_values(rho.scaled(t), 3, phi).total - base) <= 1e-12


def test_cavity_bounds_empirical_pressure(ising_af, ising_f):
    rng = np.random.default_rng(5)
    for (space, phi), convex in ((ising_af, True), (ising_f, False)):
        for N in range(1, 7):
            p_t = pressure(N, phi, "evp")
            for _ in range(20):
                k = int(rng.integers(1, 5))
                rho = AtomicMetaMeasure(
                    [(float(w), random_measure(space, rng))
                     for w in rng.uniform(0.2, 2.0, k)]
                )
                val = cavity_values(rho, N, phi).total
                if convex:
                    assert val >= p_t - 1e-9
                else:
                    assert val <= p_t + 1e-9


def test_pushforward_cavity_converges(ising_af):
    _, phi = ising_af
    N = 2
    prev1 = prev2 = math.inf
    for M in (8, 16, 32, 64):
        g1, g2 = pushforward_cavity(M, N, phi)
        t1 = (M + N) / N * pressure(M + N, phi, "evp")
        t2 = M / N * pressure(M, phi, "evp")
        bound = (N / (M + N)) * (1 + phi.n * (phi.n - 1) / 2) * phi.sup_norm
        d1, d2 = abs(g1 - t1), abs(g2 - t2)
        assert d1 <= bound and d2 <= bound
        assert d1 <= prev1 and d2 <= prev2
        prev1, prev2 = d1, d2


def test_solve_repulsive(ising_af):
    space, phi = ising_af
    sol = solve_evp(phi)
    assert sol.shape == "convex"
    assert sol.value == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(sol.minimizer.weights, [0.5, 0.5], atol=1e-8)
    assert sol.failed_restarts == 0
    assert sol.stationarity_norm <= 1e-9
    # weak duality: the minimum dominates the one-body objective everywhere
    rng = np.random.default_rng(6)
    for _ in range(20):
        mu = random_measure(space, rng)
        assert sol.value >= gdfp_objective(mu, phi) - 1e-9
        assert sol.value <= evp_objective(mu, phi) + 1e-9


def test_solve_attractive_reports_both_maximizers(ising_f):
    space, phi = ising_f
    sol = solve_evp(phi)
    assert sol.shape == "concave"
    assert len(sol.optimal_set) == 2
    means = sorted(float(nu.barycenter()[0]) for nu in sol.optimal_set)
    mstar = oracles.tanh_fixed_point()
    assert means[0] == pytest.approx(-mstar, abs=1e-8)
    assert means[1] == pytest.approx(mstar, abs=1e-8)
    assert sol.value == pytest.approx(oracles.ising_evp_optimum(+1), abs=1e-9)
    # the symmetric stationary point is found but not optimal
    assert len(sol.stationary_points) >= 3


def test_solve_zero_interaction(zero_model):
    _, phi = zero_model
    sol = solve_evp(phi)
    assert sol.value == pytest.approx(0.0, abs=1e-12)
    assert sol.stationarity_norm <= 1e-11


def test_mixture_of_optimizers_keeps_cavity_value(ising_f):
    _, phi = ising_f
    sol = solve_evp(phi)
    nu1, nu2 = sol.optimal_set
    for w in (0.2, 0.5, 0.8):
        rho = AtomicMetaMeasure([(w, nu1), (1.0 - w, nu2)])
        for N in (1, 2, 4, 8, 16):
            assert abs(cavity_values(rho, N, phi).total - sol.value) <= 1e-8


def test_capped_minimization(ising_af, hardcore):
    space, phi = ising_af
    res = minimize_evp_capped(phi, 10.0)
    assert res.value == pytest.approx(2.0, abs=1e-9)  # cap inactive at alpha

    values = [minimize_evp_capped(phi, C).value for C in (1.0, 2.0, 4.0)]
    assert values[0] >= values[1] - 1e-10 >= values[2] - 2e-10

    _, phi_hc = hardcore
    target = solve_gdfp(phi_hc).value
    sweep = [minimize_evp_capped(phi_hc, C).value for C in (1.0, 2.0, 4.0, 8.0)]
    assert all(a >= b - 1e-9 for a, b in zip(sweep, sweep[1:]))
    assert sweep[-1] == pytest.approx(target, abs=1e-8)


def test_capped_minimization_respects_active_caps():
    rng = np.random.default_rng(7)
    space = StateSpace(np.array([0.5, 0.3, 0.2]))
    A = rng.standard_normal((3, 3))
    phi = Interaction(space, A.T @ A)
    prev = math.inf
    for C in (0.05, 0.2, 1.0, 5.0):
        res = minimize_evp_capped(phi, C)
        assert res.converged
        density = float(np.max(res.minimizer.weights / space.alpha))
        assert density <= math.exp(C) * (1.0 + 1e-12)
        assert res.value <= prev + 1e-10
        prev = res.value


def test_capped_minimization_guards(ising_af, ising_f):
    _, phi_af = ising_af
    _, phi_f = ising_f
    with pytest.raises(ValueError):
        minimize_evp_capped(phi_af, -1.0)
    with pytest.raises(ValueError):
        minimize_evp_capped(phi_f, 1.0)  # concave energy
    space3 = StateSpace.uniform(2)
    cubic = Interaction(space3, np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        minimize_evp_capped(cubic, 1.0)  # pair interactions only


def test_solve_rejects_unclassified_shape():
    space = StateSpace.uniform(3)
    phi = Interaction(space, np.diag([1.0, -1.0, 0.0]))
    with pytest.raises(ValueError):
        solve_evp(phi)
