"""Curvature-driven negative-mass probes.

Two constructions certify that leftover local curvature can be converted to a
strictly negative expansion coefficient.  The scalar probe solves the exterior
problem with a nonnegative curvature bump as potential and passes to the
averaged factor (u+1)/2, which halves the coefficient and drops the measured
mass by A.  The Ricci probe subtracts eps * eta * Ric(g) from a scalar-flat
metric, relaxes the potential by a decreasing delta ladder until the
coefficient turns negative, and blends with tau to keep the final curvature
above the audit floor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import metrics, radial
from .adm import adm_mass
from .curvature import default_step, scalar_curvature_bartnik
from .density import MIN_R_TARGET, conformal_constant
from .elliptic import DomainModel, EllipticProblem, check_smallness, \
    solve_conformal_factor
from .errors import ConfigError, RegimeError
from .grids import radial_kappa_w, sphere_area
from .radial import RProfile

RIC_FLOOR = 1e-10
FLATNESS_TOL = 1e-9

# mass-measurement fractions of the outermost truncation radius, kept inside
# the solved annulus so the bar metric's spline never extrapolates
_MASS_FRACTIONS = np.array([0.12109375, 0.2421875, 0.484375, 0.96875])


def _default_domain(metric, support):
    base = 16.0 * max(1.0, np.ceil(float(support) / 4.0))
    return DomainModel(n=metric.n, r_min=metric.r_min,
                       truncation_radii=(base, 2.0 * base, 4.0 * base),
                       annulus_nodes=1100)


def _mass_radii(domain):
    return domain.truncation_radii[-1] * _MASS_FRACTIONS


def _factor_profile(solution):
    mask = ~solution.mesh.is_cyl
    return radial.from_spline(CubicSpline(solution.mesh.r[mask],
                                          solution.u[mask]))


@dataclass
class ScalarProbeReport:
    """Outcome of the nonnegative-bump probe."""
    A: float
    A_fit: float
    m_input: float
    m_bar: float
    min_factor: float
    solution: object
    metric_bar: object

    @property
    def mass_gap(self):
        return self.m_bar - self.m_input

    def to_json_dict(self):
        return {"A": self.A, "A_fit": self.A_fit, "m_input": self.m_input,
                "m_bar": self.m_bar, "mass_gap": self.mass_gap,
                "min_factor": self.min_factor}


def rigidity_probe_scalar(metric, eta, bump, c_S=3.0, domain=None,
                          mass_radii=None):
    """Certificate that a nonnegative curvature bump forces a mass drop.

    Solves with potential c_n * eta * R(g) (closed-form curvature of the
    conformal input), requires eta * R >= 0, and builds the half-shifted
    metric ((u+1)/2)^{4/(n-2)} g.  The report carries the coefficient A < 0
    next to the measured masses; their gap reproduces A because the averaged
    factor halves the doubled shift.
    """
    n = metric.n
    if metric.conformal_u is None:
        raise ConfigError("scalar probe needs a conformally flat radial "
                          "input with closed-form curvature")
    lo, hi = float(bump[0]), float(bump[1])
    if not metric.r_min <= lo < hi:
        raise ConfigError("bump interval [%.3g, %.3g] must sit beyond the "
                          "chart cut r_min = %.3g" % (lo, hi, metric.r_min))
    Rfun = radial.conformal_scalar(metric.conformal_u, n)
    probe_r = np.linspace(lo, hi, 1601)
    fR = eta.value(probe_r) * Rfun(probe_r)
    if fR.min() < -1e-12:
        raise RegimeError("cutoff-weighted curvature dips to %.3g; the probe "
                          "needs eta * R >= 0" % float(fR.min()))
    cn = conformal_constant(n)

    def f(r):
        r = np.asarray(r, dtype=float)
        return cn * eta.value(r) * Rfun(r)

    dom = domain or _default_domain(metric, hi)
    prob = EllipticProblem(metric, f, support_radius=hi, domain=dom)
    small = check_smallness(prob, c_S)
    if not small.passed:
        raise RegimeError("nonnegative bump failed the size bound "
                          "(ratio %.3g); inconsistent potential" % small.ratio)
    solution = solve_conformal_factor(prob)
    A = solution.A_integral
    if fR.max() > 1e-12 and A >= 0.0:
        raise RegimeError("positive bump produced A = %.3g >= 0 where a "
                          "strictly negative coefficient is forced" % A)
    factor = (_factor_profile(solution) + 1.0) * 0.5
    metric_bar = metrics.conformal_product(metric, factor,
                                           family="scalar-probe")
    radii = _mass_radii(dom) if mass_radii is None \
        else np.asarray(mass_radii, dtype=float)
    m_input = adm_mass(metric, radii=radii).extrapolated
    m_bar = adm_mass(metric_bar, radii=radii).extrapolated
    return ScalarProbeReport(A=A, A_fit=solution.A_fit, m_input=m_input,
                             m_bar=m_bar,
                             min_factor=(solution.min_u + 1.0) / 2.0,
                             solution=solution, metric_bar=metric_bar)


@dataclass
class RigidityProbeSpec:
    """Bump data for the Ricci perturbation probe.

    eta cuts off the perturbation over the interval bump; the wider cutoff
    eta_tilde relaxes the potential over bump_tilde and must keep a positive
    floor on supp eta so the relaxation reaches the whole bump.
    """
    eta: RProfile
    bump: tuple
    eta_tilde: RProfile
    bump_tilde: tuple
    epsilon: float = 0.08
    delta_ladder: tuple = (1e-2, 1e-3, 1e-4)
    c_S: float = 3.0
    domain: Optional[DomainModel] = None

    def validate(self, metric):
        lo, hi = float(self.bump[0]), float(self.bump[1])
        tlo, thi = float(self.bump_tilde[0]), float(self.bump_tilde[1])
        if not metric.r_min <= lo < hi:
            raise ConfigError("bump interval [%.3g, %.3g] must sit beyond "
                              "the chart cut r_min = %.3g"
                              % (lo, hi, metric.r_min))
        if not tlo < thi:
            raise ConfigError("relaxation interval is empty")
        if self.epsilon <= 0.0:
            raise ConfigError("perturbation size must be positive")
        lad = tuple(float(d) for d in self.delta_ladder)
        if not lad or min(lad) <= 0.0 or np.any(np.diff(lad) >= 0.0):
            raise ConfigError("delta ladder must be positive and strictly "
                              "decreasing")
        rr = np.linspace(lo, hi, 1001)
        ev, tv = self.eta.value(rr), self.eta_tilde.value(rr)
        if ev.min() < 0.0 or ev.max() > 1.0 + 1e-12 or tv.min() < 0.0 \
                or tv.max() > 1.0 + 1e-12:
            raise ConfigError("cutoffs must take values in [0, 1]")
        mask = ev > 1e-14
        if not mask.any():
            raise ConfigError("perturbation cutoff vanishes on its bump")
        floor = float(tv[mask].min())
        if floor <= 0.0:
            raise ConfigError("relaxation cutoff must keep a positive floor "
                              "on the bump support (floor %.3g)" % floor)
        return floor


def _windowed(spline, lo, hi):
    """Spline values inside (lo, hi), identically zero outside."""
    d1, d2 = spline.derivative(1), spline.derivative(2)

    def fn(r):
        r = np.asarray(r, dtype=float)
        rc = np.clip(r, lo, hi)
        inside = (r > lo) & (r < hi)
        return (np.where(inside, spline(rc), 0.0),
                np.where(inside, d1(rc), 0.0),
                np.where(inside, d2(rc), 0.0))

    return RProfile(fn)


def ricci_perturbed_metric(metric, eta, bump, epsilon, nodes=1201):
    """g - epsilon * eta * Ric(g) as a two-profile radial metric.

    The correction profiles are splined once over the bump with clamped ends
    and vanish identically outside, so the input metric is reproduced bitwise
    beyond the bump.
    """
    n = metric.n
    if metric.conformal_u is None:
        raise ConfigError("ricci perturbation needs a conformally flat "
                          "radial input")
    lo, hi = float(bump[0]), float(bump[1])
    ab = radial.conformal_ricci_profiles(metric.conformal_u, n)
    grid = np.linspace(lo, hi, nodes)
    al, be = ab(grid)
    ev = eta.value(grid)
    sp_a = CubicSpline(grid, -epsilon * ev * al, bc_type="clamped")
    sp_b = CubicSpline(grid, -epsilon * ev * be, bc_type="clamped")
    a_bar = metric.radial_form.a + _windowed(sp_a, lo, hi)
    b_bar = _windowed(sp_b, lo, hi)
    return metrics.radial_metric(a_bar, b_bar, n, family="ricci-perturbed",
                                 params=dict(metric.params), q=metric.q,
                                 r_min=metric.r_min)


def perturbed_scalar_spline(metric_bar, bump, r_min, nodes=801):
    """Scalar curvature of the perturbed metric as a windowed profile of r.

    Samples along an axis with Richardson-extrapolated central differences
    (two stencils, eliminating the h^2 term) and returns a callable that is
    exactly zero outside the bump, where the metric is untouched and
    scalar-flat.
    """
    lo, hi = float(bump[0]), float(bump[1])
    pad = 0.03 * (hi - lo)
    gl = max(lo - pad, r_min / 0.985)
    gh = hi + pad
    r_grid = np.linspace(gl, gh, nodes)
    X = np.zeros((r_grid.size, metric_bar.n))
    X[:, 0] = r_grid
    h0 = 0.5 * default_step(r_grid)
    R1 = scalar_curvature_bartnik(metric_bar, X, h=h0)
    R2 = scalar_curvature_bartnik(metric_bar, X, h=0.5 * h0)
    sp = CubicSpline(r_grid, (4.0 * R2 - R1) / 3.0)

    def R_fun(r):
        r = np.asarray(r, dtype=float)
        inside = (r > lo) & (r < hi)
        return np.where(inside, sp(np.clip(r, lo, hi)), 0.0)

    return R_fun


def _ricci_magnitude(metric, r):
    """Pointwise metric norm |Ric(g)|_g along the radius for conformal g."""
    n = metric.n
    ab = radial.conformal_ricci_profiles(metric.conformal_u, n)
    al, be = ab(r)
    conf = metric.radial_form.a.value(r)
    return np.sqrt((n - 1) * al ** 2 + (al + be) ** 2) / conf


@dataclass
class RicciProbeReport:
    """Outcome of the Ricci perturbation probe."""
    epsilon: float
    delta_ladder: tuple
    A_values: list
    A: float
    tau: Optional[float]
    min_R_tilde: Optional[float]
    eigenvalue_margin: float
    negative_part_norm: float
    negative_part_threshold: float
    m_input: float
    m_tilde: Optional[float]
    failed: bool
    solution: object = None
    metric_tilde: object = None

    def to_json_dict(self):
        return {"epsilon": self.epsilon,
                "delta_ladder": list(self.delta_ladder),
                "A_values": list(self.A_values), "A": self.A,
                "tau": self.tau, "min_R_tilde": self.min_R_tilde,
                "eigenvalue_margin": self.eigenvalue_margin,
                "negative_part_norm": self.negative_part_norm,
                "negative_part_threshold": self.negative_part_threshold,
                "m_input": self.m_input, "m_tilde": self.m_tilde,
                "failed": self.failed}


def rigidity_probe_ricci(metric, spec: RigidityProbeSpec):
    """Negative-mass certificate from a compact Ricci perturbation.

    Requires a scalar-flat conformal input with nonvanishing Ricci tensor on
    the bump.  Builds g - eps * eta * Ric(g), checks the quadratic-form lower
    bound and the size of the negative curvature part, then walks the delta
    ladder; once the coefficient turns negative it blends with the largest
    tau keeping the closed-form curvature of the final metric above the
    audit floor.  A coefficient that stays nonnegative across the whole
    ladder yields a failure report, not an exception.
    """
    n = metric.n
    if metric.conformal_u is None:
        raise ConfigError("ricci probe needs a conformally flat radial input")
    spec.validate(metric)
    lo, hi = float(spec.bump[0]), float(spec.bump[1])
    tlo, thi = float(spec.bump_tilde[0]), float(spec.bump_tilde[1])
    cn = conformal_constant(n)

    flat_r = np.linspace(metric.r_min * 1.01, thi, 2001)
    Rg = radial.conformal_scalar(metric.conformal_u, n)(flat_r)
    if np.abs(Rg).max() > FLATNESS_TOL:
        raise RegimeError("input is not scalar-flat (max |R| = %.3g); "
                          "deform it to zero scalar curvature first"
                          % float(np.abs(Rg).max()))
    bump_r = np.linspace(lo, hi, 1201)
    ric_mag = _ricci_magnitude(metric, bump_r) * spec.eta.value(bump_r)
    if ric_mag.max() < RIC_FLOOR:
        raise RegimeError("Ricci tensor vanishes on the bump (max %.3g); "
                          "nothing to perturb" % float(ric_mag.max()))

    gbar = ricci_perturbed_metric(metric, spec.eta, spec.bump, spec.epsilon)
    R_fun = perturbed_scalar_spline(gbar, spec.bump, metric.r_min)

    from .rayleigh import eigenvalue_lower_bound
    eig = eigenvalue_lower_bound(gbar, thi, lambda r: cn * R_fun(r))
    if eig.value <= 0.0:
        raise RegimeError("quadratic form not positive over the bump "
                          "(lower bound %.3g)" % eig.value)

    quad_r = np.linspace(lo, hi, 4001)
    w_bar = radial_kappa_w(gbar, quad_r)[1]
    neg = np.minimum(R_fun(quad_r), 0.0)
    neg_norm = float((np.trapezoid(np.abs(neg) ** (n / 2.0) * w_bar, quad_r)
                      * sphere_area(n)) ** (2.0 / n))
    neg_threshold = spec.c_S / 4.0
    if neg_norm > neg_threshold:
        raise RegimeError("negative curvature part too large (%.3g > %.3g); "
                          "shrink the perturbation" % (neg_norm, neg_threshold))

    dom = spec.domain or _default_domain(metric, thi)
    A_values = []
    solution = None
    for delta in spec.delta_ladder:
        def f(r, d=float(delta)):
            r = np.asarray(r, dtype=float)
            return cn * (R_fun(r) - d * spec.eta_tilde.value(r))

        prob = EllipticProblem(gbar, f, support_radius=thi, domain=dom)
        small = check_smallness(prob, spec.c_S)
        if not small.passed:
            raise RegimeError("relaxed potential fails the size bound at "
                              "delta %.3g (ratio %.3g)" % (delta, small.ratio))
        solution = solve_conformal_factor(prob)
        A_values.append(solution.A_integral)

    radii = _mass_radii(dom)
    m_input = adm_mass(metric, radii=radii).extrapolated
    A = A_values[-1]
    base = {"epsilon": spec.epsilon, "delta_ladder": tuple(spec.delta_ladder),
            "A_values": A_values, "A": A, "eigenvalue_margin": eig.value,
            "negative_part_norm": neg_norm,
            "negative_part_threshold": neg_threshold, "m_input": m_input}
    if A >= 0.0:
        return RicciProbeReport(tau=None, min_R_tilde=None, m_tilde=None,
                                failed=True, solution=solution, **base)

    delta_min = float(spec.delta_ladder[-1])
    r_tau = np.geomspace(metric.r_min, 0.999 * dom.truncation_radii[-1], 4001)
    Rv = R_fun(r_tau)
    tv = spec.eta_tilde.value(r_tau)
    uv = solution.u_at(r_tau)
    num0 = delta_min * tv * uv

    def min_R(tau):
        pref = (1.0 + tau) ** (4.0 / (n - 2.0)) \
            * (uv + tau) ** (-(n + 2.0) / (n - 2.0))
        return float((pref * (num0 + tau * Rv)).min())

    if min_R(1.0) >= MIN_R_TARGET:
        tau = 1.0
    else:
        lo_t, hi_t = 1e-6, 1.0
        if min_R(lo_t) < MIN_R_TARGET:
            raise RegimeError("no admissible tau: curvature floor %.3g "
                              "violated even at tau = %.0e"
                              % (min_R(lo_t), lo_t))
        for _ in range(40):
            mid = 0.5 * (lo_t + hi_t)
            if min_R(mid) >= MIN_R_TARGET:
                lo_t = mid
            else:
                hi_t = mid
        tau = lo_t

    u_tau = (_factor_profile(solution) + tau) * (1.0 / (1.0 + tau))
    metric_tilde = metrics.conformal_product(gbar, u_tau, family="ricci-probe")
    m_tilde = m_input + 2.0 * A / (1.0 + tau)
    return RicciProbeReport(tau=tau, min_R_tilde=min_R(tau), m_tilde=m_tilde,
                            failed=False, solution=solution,
                            metric_tilde=metric_tilde, **base)


def ricci_linearity_audit(metric, eta, bump, eps_ladder=(0.01, 0.005),
                          r_probe=None):
    """First-order response audit for the Ricci perturbation.

    For each epsilon the scalar curvature of the perturbed metric is sampled
    at the bump center and integrated against the volume weight; linearity in
    epsilon and agreement of the integral with epsilon times the squared
    Ricci content certify the construction to leading order.
    """
    n = metric.n
    lo, hi = float(bump[0]), float(bump[1])
    if r_probe is None:
        r_probe = 0.5 * (lo + hi)
    quad_r = np.linspace(lo, hi, 4001)
    ab = radial.conformal_ricci_profiles(metric.conformal_u, n)
    al, be = ab(quad_r)
    conf = metric.radial_form.a.value(quad_r)
    ric2 = ((n - 1) * al ** 2 + (al + be) ** 2) / conf ** 2
    w_g = radial_kappa_w(metric, quad_r)[1]
    content = np.trapezoid(eta.value(quad_r) * ric2 * w_g, quad_r)

    probe_values, integrals, first_order = [], [], []
    for eps in eps_ladder:
        gb = ricci_perturbed_metric(metric, eta, bump, float(eps))
        R_fun = perturbed_scalar_spline(gb, bump, metric.r_min)
        probe_values.append(float(R_fun(np.array([r_probe]))[0]))
        w_b = radial_kappa_w(gb, quad_r)[1]
        lhs = float(np.trapezoid(R_fun(quad_r) * w_b, quad_r))
        integrals.append(lhs)
        first_order.append(lhs / (float(eps) * content))

    scaled = np.asarray(probe_values) / np.asarray(eps_ladder, dtype=float)
    linear_deviation = float(np.abs(scaled / scaled[0] - 1.0).max())
    return {"eps_ladder": list(map(float, eps_ladder)),
            "probe_values": probe_values, "integrals": integrals,
            "first_order_ratios": first_order,
            "linear_deviation": linear_deviation}
