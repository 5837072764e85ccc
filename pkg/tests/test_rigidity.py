"""Negative-mass probe tests: scalar bump device and Ricci perturbation."""
import dataclasses
import json
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, strategies as st

from masskit import metrics, oracles, radial
from masskit.adm import adm_mass
from masskit.density import conformal_constant
from masskit.errors import ConfigError, RegimeError
from masskit.rigidity import (RigidityProbeSpec, ricci_linearity_audit,
                              ricci_perturbed_metric, perturbed_scalar_spline,
                              rigidity_probe_ricci, rigidity_probe_scalar)


def bump_metric():
    w = radial.const(1.0) + radial.bubble(0.4)
    return metrics.conformally_flat(w, 3, family="bubble-device", q=5.0)


def bump_eta():
    return radial.window(1.2, 1.8, 3.0, 3.8)


@lru_cache(maxsize=1)
def scalar_report():
    return rigidity_probe_scalar(bump_metric(), bump_eta(), (1.2, 3.8))


@lru_cache(maxsize=1)
def scalar_oracle_A():
    g = bump_metric()
    eta = bump_eta()
    Rfun = radial.conformal_scalar(g.conformal_u, 3)
    cn = conformal_constant(3)

    def f(r):
        r = np.asarray(r, dtype=float)
        return cn * eta.value(r) * Rfun(r)

    return oracles.shoot_conformal_factor(g, f, 3.8).A


def ricci_spec(**overrides):
    spec = RigidityProbeSpec(eta=radial.window(1.5, 2.0, 3.0, 3.5),
                             bump=(1.5, 3.5),
                             eta_tilde=radial.window(1.2, 1.8, 3.2, 4.0),
                             bump_tilde=(1.2, 4.0))
    return dataclasses.replace(spec, **overrides) if overrides else spec


@lru_cache(maxsize=1)
def ricci_report():
    return rigidity_probe_ricci(metrics.schwarzschild(1.0, 3), ricci_spec())


def test_scalar_probe_certifies_mass_drop():
    rep = scalar_report()
    assert abs(rep.A - -0.137568969669) < 1e-9
    assert abs(rep.A_fit - -0.137000674389) < 1e-9
    assert abs(rep.m_input - 0.798686274909) < 1e-9
    assert abs(rep.m_bar - 0.660816892035) < 1e-9
    assert rep.A < 0.0
    assert rep.m_bar < rep.m_input
    # averaged factor (u+1)/2 halves the doubled coefficient: gap tracks A,
    # not 2A
    assert abs(rep.mass_gap - rep.A) <= 0.01 * abs(rep.A)
    assert rep.min_factor >= 0.5
    assert abs(rep.min_factor - 0.971740842471) < 1e-9


def test_scalar_probe_matches_shooting_reference():
    rep = scalar_report()
    assert abs(rep.A - scalar_oracle_A()) <= 1e-4
    assert abs(rep.A - scalar_oracle_A()) < 5e-6


def test_scalar_probe_report_serializes():
    d = scalar_report().to_json_dict()
    assert sorted(d) == ["A", "A_fit", "m_bar", "m_input", "mass_gap",
                         "min_factor"]
    json.dumps(d)


def test_scalar_probe_flat_input_is_neutral():
    g = metrics.conformally_flat(radial.const(1.0), 3)
    rep = rigidity_probe_scalar(g, bump_eta(), (1.2, 3.8))
    assert rep.A == 0.0
    assert rep.min_factor == 1.0
    assert rep.m_bar == rep.m_input


def test_scalar_probe_rejects_sign_changing_bump():
    w = radial.const(1.0) + radial.gaussian(-0.05, 2.0, 0.5)
    g = metrics.conformally_flat(w, 3)
    with pytest.raises(RegimeError, match="dips"):
        rigidity_probe_scalar(g, bump_eta(), (1.2, 3.8))


def test_scalar_probe_validates_input_shape():
    flat = metrics.from_evaluator(metrics.euclidean(3).evaluator, 3)
    with pytest.raises(ConfigError, match="conformally flat"):
        rigidity_probe_scalar(flat, bump_eta(), (1.2, 3.8))
    with pytest.raises(ConfigError, match="chart cut"):
        rigidity_probe_scalar(bump_metric(), bump_eta(), (0.5, 3.8))


def test_ricci_probe_walks_delta_ladder_to_negative():
    rep = ricci_report()
    assert not rep.failed
    want = (0.0511270795385, 0.00420935155139, -0.000413992624522)
    for got, ref in zip(rep.A_values, want):
        assert abs(got - ref) < 1e-6 * max(1.0, abs(ref))
    assert all(np.diff(rep.A_values) < 0.0)
    assert rep.A == rep.A_values[-1]
    assert rep.A < 0.0


def test_ricci_probe_margins_and_final_metric():
    rep = ricci_report()
    assert abs(rep.eigenvalue_margin - 0.21890633046) < 1e-8
    assert rep.eigenvalue_margin > 0.0
    assert abs(rep.negative_part_norm - 0.629435) < 1e-5
    assert rep.negative_part_norm < rep.negative_part_threshold == 0.75
    assert abs(rep.tau - 0.00192662102) < 1e-9
    # tau is maximal: the curvature floor binds from below
    assert -1.001e-8 <= rep.min_R_tilde <= -1e-9
    assert abs(rep.m_tilde - 0.99991816196) < 1e-9
    assert rep.m_tilde < rep.m_input


def test_ricci_probe_mass_matches_flux_integral():
    rep = ricci_report()
    radii = 64.0 * np.array([0.12109375, 0.2421875, 0.484375, 0.96875])
    measured = adm_mass(rep.metric_tilde, radii=radii).extrapolated
    assert abs(measured - rep.m_tilde) < 5e-6


def test_ricci_probe_matches_shooting_reference():
    rep = ricci_report()
    g = metrics.schwarzschild(1.0, 3)
    spec = ricci_spec()
    gbar = ricci_perturbed_metric(g, spec.eta, spec.bump, spec.epsilon)
    R_fun = perturbed_scalar_spline(gbar, spec.bump, g.r_min)
    cn = conformal_constant(3)

    def f(r):
        r = np.asarray(r, dtype=float)
        return cn * (R_fun(r) - 1e-4 * spec.eta_tilde.value(r))

    sh = oracles.shoot_conformal_factor(gbar, f, 4.0)
    assert abs(rep.A - sh.A) < 1e-5


def test_ricci_probe_report_serializes():
    d = ricci_report().to_json_dict()
    assert d["failed"] is False
    assert len(d["A_values"]) == 3
    json.dumps(d)


def test_ricci_perturbation_is_compact_and_positive():
    g = metrics.schwarzschild(1.0, 3)
    spec = ricci_spec()
    gbar = ricci_perturbed_metric(g, spec.eta, spec.bump, spec.epsilon)
    X_out = np.array([[5.0, 0.0, 0.0], [0.0, 0.0, 1.4], [8.0, 8.0, 8.0]])
    assert np.array_equal(gbar.g(X_out), g.g(X_out))
    X_in = np.array([[2.0, 0.0, 0.0], [0.0, 2.5, 0.0]])
    assert np.abs(gbar.g(X_in) - g.g(X_in)).max() > 1e-3
    gbar.check_pointwise(np.array([[2.0, 0.0, 0.0], [1.1, 1.1, 1.1]]))


@given(eps=st.floats(0.005, 0.1))
def test_ricci_perturbation_stays_definite(eps):
    g = metrics.schwarzschild(1.0, 3)
    spec = ricci_spec()
    gbar = ricci_perturbed_metric(g, spec.eta, spec.bump, eps)
    chk = gbar.check_pointwise(np.array([[1.7, 0.0, 0.0], [2.0, 1.0, 0.5],
                                         [0.0, 3.3, 0.0]]))
    assert chk["min_eigenvalue"] > 0.0


def test_ricci_response_is_first_order():
    g = metrics.schwarzschild(1.0, 3)
    spec = ricci_spec()
    aud = ricci_linearity_audit(g, spec.eta, spec.bump)
    assert aud["eps_ladder"] == [0.01, 0.005]
    assert aud["linear_deviation"] <= 0.1
    assert aud["linear_deviation"] < 0.01
    for ratio in aud["first_order_ratios"]:
        assert abs(ratio - 1.0) < 0.05
    assert abs(aud["probe_values"][0] - 2.75931372e-05) < 1e-10


def test_ricci_probe_failure_report_keeps_margins():
    rep = rigidity_probe_ricci(metrics.schwarzschild(1.0, 3),
                               ricci_spec(delta_ladder=(0.05,)))
    assert rep.failed
    assert rep.A > 0.0
    assert rep.tau is None and rep.m_tilde is None
    assert rep.eigenvalue_margin > 0.0
    json.dumps(rep.to_json_dict())


def test_ricci_probe_preconditions():
    spec = ricci_spec()
    with pytest.raises(RegimeError, match="nothing to perturb"):
        rigidity_probe_ricci(metrics.euclidean(3), spec)
    with pytest.raises(RegimeError, match="scalar-flat"):
        rigidity_probe_ricci(bump_metric(), spec)
    with pytest.raises(RegimeError, match="too large"):
        rigidity_probe_ricci(metrics.schwarzschild(1.0, 3),
                             ricci_spec(epsilon=0.12))


def test_ricci_spec_validation():
    g = metrics.schwarzschild(1.0, 3)
    with pytest.raises(ConfigError, match="positive"):
        ricci_spec(epsilon=0.0).validate(g)
    with pytest.raises(ConfigError, match="decreasing"):
        ricci_spec(delta_ladder=(1e-3, 1e-2)).validate(g)
    with pytest.raises(ConfigError, match="floor"):
        ricci_spec(eta_tilde=radial.window(2.4, 2.6, 2.8, 3.0)).validate(g)
    with pytest.raises(ConfigError, match="\\[0, 1\\]"):
        ricci_spec(eta=radial.window(1.5, 2.0, 3.0, 3.5) * 2.0).validate(g)
    assert 0.5 <= ricci_spec().validate(g) < 0.51
