"""Exhaustion solver: oracle agreement, toy-end exactness, regime gating."""
import functools

import numpy as np
import pytest

from masskit import elliptic, metrics, oracles, radial
from masskit.errors import ConfigError, RegimeError, SolverError

C_SOB = 3.0        # certified below the flat sharp constant for these metrics


def end_metric():
    return metrics.schwarzschild(0.8, 3)


def bump():
    return radial.gaussian(0.15, 3.0, 0.7)


@functools.lru_cache(maxsize=None)
def oracle_A(n=3):
    sh = oracles.shoot_conformal_factor(metrics.schwarzschild(0.8, n),
                                        bump(), 6.5)
    return sh.A


@functools.lru_cache(maxsize=None)
def solved_gaussian():
    dom = elliptic.DomainModel(
        n=3, truncation_radii=(16.0, 32.0, 64.0, 128.0, 256.0),
        annulus_nodes=1200)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    elliptic.check_smallness(prob, C_SOB)
    return prob, elliptic.solve_conformal_factor(prob)


@functools.lru_cache(maxsize=None)
def solved_window(with_cylinder):
    f = radial.window(1.5, 2.0, 3.5, 4.5) * radial.const(0.2)
    lengths = (2.0, 4.0) if with_cylinder else ()
    dom = elliptic.DomainModel(n=3, truncation_radii=(16.0, 32.0, 64.0),
                               cylinder_lengths=lengths, annulus_nodes=900)
    prob = elliptic.EllipticProblem(end_metric(), f, 4.5, dom)
    elliptic.check_smallness(prob, C_SOB)
    return elliptic.solve_conformal_factor(prob)


def test_domain_schedules_validated():
    with pytest.raises(ConfigError):
        elliptic.DomainModel(n=3, truncation_radii=(0.5,))
    with pytest.raises(ConfigError):
        elliptic.DomainModel(n=3, truncation_radii=(16.0, 16.0))
    with pytest.raises(ConfigError):
        elliptic.DomainModel(n=3, cylinder_lengths=(-1.0,))
    with pytest.raises(ConfigError):
        elliptic.DomainModel(n=3, cylinder_lengths=(4.0, 2.0))


def test_mesh_keeps_first_rung_spacing():
    dom = elliptic.DomainModel(n=3, truncation_radii=(16.0, 32.0, 64.0),
                               annulus_nodes=800)
    m0 = dom.mesh(end_metric(), 16.0)
    m2 = dom.mesh(end_metric(), 64.0)
    d0 = m0.coord[1] - m0.coord[0]
    d2 = m2.coord[1] - m2.coord[0]
    assert abs(d0 - d2) <= 1e-3 * d0


def test_problem_validation():
    dom = elliptic.DomainModel(n=3)
    with pytest.raises(ConfigError):
        elliptic.EllipticProblem(metrics.euclidean(4), bump(), 6.5, dom)
    with pytest.raises(ConfigError):
        elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom,
                                 bc_outer="neumann")
    with pytest.raises(ConfigError):
        # support must end below half the first truncation radius
        elliptic.EllipticProblem(end_metric(), bump(), 9.0, dom)


def test_f_values_cut_beyond_support():
    dom = elliptic.DomainModel(n=3)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    r = np.array([2.0, 6.5, 6.6, 30.0])
    vals = prob.f_values(r)
    assert vals[0] > 0.0 and vals[1] > 0.0
    assert vals[2] == 0.0 and vals[3] == 0.0


def test_solve_requires_smallness_check():
    dom = elliptic.DomainModel(n=3)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    with pytest.raises(RegimeError):
        elliptic.solve_truncated(prob)
    with pytest.raises(RegimeError):
        elliptic.solve_conformal_factor(prob)


def test_smallness_scaling_and_threshold():
    # the size functional is homogeneous of degree one in the amplitude
    dom = elliptic.DomainModel(n=3, annulus_nodes=900)
    p1 = elliptic.EllipticProblem(end_metric(),
                                  radial.gaussian(-0.0345, 3.0, 0.7), 6.5, dom)
    r1 = elliptic.check_smallness(p1, C_SOB)
    assert r1.passed
    assert r1.ratio == pytest.approx(0.9005626794, rel=1e-6)

    p2 = elliptic.EllipticProblem(end_metric(),
                                  radial.gaussian(-0.069, 3.0, 0.7), 6.5, dom)
    r2 = elliptic.check_smallness(p2, C_SOB)
    assert not r2.passed
    assert r2.lhs == pytest.approx(2.0 * r1.lhs, rel=1e-12)
    with pytest.raises(RegimeError):
        elliptic.solve_conformal_factor(p2)

    keys = set(r1.to_json_dict())
    assert keys == {"lhs", "threshold", "ratio", "passed", "c_S"}


def test_smallness_rejects_bad_constant():
    dom = elliptic.DomainModel(n=3)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    with pytest.raises(ConfigError):
        elliptic.check_smallness(prob, 0.0)


def test_positive_potential_passes_trivially():
    dom = elliptic.DomainModel(n=3)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    rep = elliptic.check_smallness(prob, C_SOB)
    assert rep.lhs == 0.0 and rep.passed


def test_truncated_matches_shooting_oracle():
    dom = elliptic.DomainModel(n=3, truncation_radii=(16.0, 32.0, 64.0),
                               annulus_nodes=1600)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    elliptic.check_smallness(prob, C_SOB)
    sol = elliptic.solve_truncated(prob)
    vref = oracles.shoot_truncated(end_metric(), bump(), 6.5, 64.0)
    r = np.geomspace(1.01, 63.0, 400)
    assert np.abs(sol.interp(r) - vref(r)).max() <= 1e-6
    assert sol.residual <= prob.tol
    assert sol.energy > 0.0
    # positive potential pushes the factor down: v <= 0 with v(R) = 0
    assert sol.v.max() <= 1e-14
    assert sol.v[-1] == 0.0


def test_conformal_factor_expansion_against_oracle():
    prob, full = solved_gaussian()
    assert abs(full.A_integral - oracle_A(3)) <= 1e-4
    assert full.A_integral == pytest.approx(-1.83716233585, rel=1e-9)
    # independent tail fit agrees with the integral value of the coefficient
    assert abs(full.A_fit - full.A_integral) <= 1e-2 * abs(full.A_integral)
    assert full.min_u == pytest.approx(0.469258873523, rel=1e-9)
    assert full.min_u > 0.0
    assert full.remainder_bound >= 0.0


def test_dimension_four_expansion_against_oracle():
    met = metrics.schwarzschild(0.8, 4)
    dom = elliptic.DomainModel(n=4, truncation_radii=(16.0, 32.0, 64.0),
                               annulus_nodes=1200)
    prob = elliptic.EllipticProblem(met, bump(), 6.5, dom)
    elliptic.check_smallness(prob, C_SOB)
    full = elliptic.solve_conformal_factor(prob)
    assert abs(full.A_integral - oracle_A(4)) <= 1e-5
    assert full.robin_gap <= 3.0 * max(1.0, abs(full.A_integral)) * 64.0 ** -2


def test_exhaustion_diffs_decay_at_expansion_rate():
    prob, full = solved_gaussian()
    diffs = full.exhaustion_diffs
    assert len(diffs) == 4
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    # doubling R changes the retained region by about |A| R^{2-n}
    A = abs(full.A_integral)
    for d, R_prev in zip(diffs, (16.0, 32.0, 64.0, 128.0)):
        assert d <= 3.0 * max(1.0, A) / R_prev


def test_robin_closure_agrees_on_retained_region():
    prob, full = solved_gaussian()
    bound = 3.0 * max(1.0, abs(full.A_integral)) / 256.0
    assert full.robin_gap <= bound
    assert full.robin_gap == pytest.approx(0.00639053, rel=1e-4)


def test_exhaust_tol_enforced():
    dom = elliptic.DomainModel(n=3, truncation_radii=(16.0, 32.0),
                               annulus_nodes=600)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    elliptic.check_smallness(prob, C_SOB)
    with pytest.raises(SolverError):
        elliptic.solve_conformal_factor(prob, exhaust_tol=1e-12)


def test_homogeneous_problem_is_identically_one():
    dom = elliptic.DomainModel(n=3, truncation_radii=(16.0, 32.0),
                               annulus_nodes=600)
    prob = elliptic.EllipticProblem(end_metric(), radial.const(0.0), 4.0, dom)
    elliptic.check_smallness(prob, C_SOB)
    full = elliptic.solve_conformal_factor(prob)
    assert np.abs(full.v).max() == 0.0
    assert full.A_integral == 0.0
    assert full.min_u == 1.0


def test_toy_end_carries_no_flux():
    sol = solved_window(True)
    cyl = sol.mesh.is_cyl
    assert int(cyl.sum()) == 256
    # nothing is sourced below the support, so the section flux vanishes
    # identically and the factor is constant along the attached cylinder
    assert sol.flux_grad == 0.0
    assert sol.flux_u_grad == 0.0
    assert np.abs(sol.u[cyl] - sol.u[0]).max() == 0.0


def test_toy_end_leaves_expansion_unchanged():
    with_cyl = solved_window(True)
    without = solved_window(False)
    assert abs(with_cyl.A_integral - without.A_integral) <= 1e-12
    assert abs(with_cyl.A_fit - without.A_fit) <= 1e-10


def test_energy_norm_bound_with_valid_constant():
    prob, full = solved_gaussian()
    out = elliptic.energy_norm_bound(prob, full, C_SOB)
    assert out["passed"]
    assert out["lhs"] == pytest.approx(1.512135177, rel=1e-6)
    assert out["rhs"] == pytest.approx(10.76924784, rel=1e-6)
    # the report is an inequality check, not a formality: an overlarge
    # constant shrinks the right side until it fails
    assert not elliptic.energy_norm_bound(prob, full, 30.0)["passed"]


def test_interp_reproduces_annulus_nodes():
    dom = elliptic.DomainModel(n=3, truncation_radii=(16.0,),
                               annulus_nodes=400)
    prob = elliptic.EllipticProblem(end_metric(), bump(), 6.5, dom)
    elliptic.check_smallness(prob, C_SOB)
    sol = elliptic.solve_truncated(prob)
    got = sol.interp(sol.mesh.r)
    assert np.abs(got - sol.v).max() <= 1e-14


def test_solution_json_keys():
    _, full = solved_gaussian()
    d = full.to_json_dict()
    for key in ("A_integral", "A_fit", "B_fit", "remainder_bound",
                "flux_grad", "min_u", "robin_gap", "exhaustion_diffs"):
        assert key in d
