"""Deformation of an asymptotically flat end to Schwarzschild-conformal form.

The pipeline splits off the leading conformal profile carrying the mass,
interpolates the remainder away across [2s, 3s] on a growing scale ladder,
audits the curvature bounds the interpolation must satisfy, picks a
relaxation constant delta_s, solves for a conformal correction u_s, and
tunes tau so the deformed metric

    g_bar = ((u_s + tau)/(1 + tau))^{4/(n-2)} ghat_s

keeps nonnegative scalar curvature at audit points while the mass moves by
2 A_s / (1 + tau), which shrinks along the ladder.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from . import metrics, radial
from .adm import adm_mass, residual_flux, trend_slope
from .elliptic import DomainModel, EllipticProblem, check_smallness, \
    solve_conformal_factor
from .errors import ConfigError, RegimeError, SolverError
from .grids import radial_kappa_w, sphere_area
from .radial import RProfile

DELTA_FLOOR = 1e-14
MIN_R_TARGET = -1e-8
DEFAULT_S_LADDER = (8.0, 16.0, 32.0)


def conformal_constant(n):
    """Coefficient (n-2)/(4(n-1)) linking the potential to scalar curvature."""
    return (n - 2.0) / (4.0 * (n - 1.0))


def _blend_profiles(inner: RProfile, outer: RProfile, zeta: RProfile):
    """inner where zeta = 0, outer where zeta = 1, graded mix between.

    The plateau branches return the original profile values bitwise, so the
    interpolated metric equals its defining branches exactly there.
    """

    def fn(r):
        r = np.asarray(r, dtype=float)
        z0, z1, z2 = zeta(r)
        a0, a1, a2 = inner(r)
        b0, b1, b2 = outer(r)
        d0, d1, d2 = b0 - a0, b1 - a1, b2 - a2
        mix0 = a0 + z0 * d0
        mix1 = a1 + z1 * d0 + z0 * d1
        mix2 = a2 + z2 * d0 + 2.0 * z1 * d1 + z0 * d2
        lo = z0 <= 0.0
        hi = z0 >= 1.0
        y0 = np.where(lo, a0, np.where(hi, b0, mix0))
        y1 = np.where(lo, a1, np.where(hi, b1, mix1))
        y2 = np.where(lo, a2, np.where(hi, b2, mix2))
        return y0, y1, y2

    return RProfile(fn)


@dataclass
class SplitState:
    """Input metric written as Schwarzschild-conformal part plus remainder."""

    metric: metrics.MetricSpec
    m: float
    factor: RProfile                      # 1 + m/(2 r^{n-2})
    base: metrics.MetricSpec              # the split-off conformal part
    rem_a: RProfile = None                # remainder profiles when radial
    rem_b: RProfile = None

    @property
    def n(self):
        return self.metric.n

    @property
    def is_radial(self):
        return self.rem_a is not None

    def remainder_field(self):
        """Remainder as a metric-like object for flux and decay probes."""
        n = self.n
        if self.is_radial:
            form = metrics.RadialForm(a=radial.const(1.0) + self.rem_a,
                                      b=self.rem_b)
            return metrics.radial_metric(form.a, form.b, n,
                                         family="split-remainder",
                                         r_min=self.metric.r_min)

        def ev(X):
            return np.eye(n)[None] + self.metric.g(X) - self.base.g(X)

        return metrics.from_evaluator(ev, n, family="split-remainder",
                                      r_min=self.metric.r_min)

    def remainder_sup(self, radii):
        """Componentwise sup of the remainder on spheres (radial exact)."""
        radii = np.asarray(radii, dtype=float)
        if self.is_radial:
            out = np.abs(self.rem_a.value(radii))
            if self.rem_b is not None:
                out = out + np.abs(self.rem_b.value(radii))
            return out
        sup = []
        for rho in radii:
            X = np.eye(self.n) * rho
            sup.append(np.abs(self.metric.g(X) - self.base.g(X)).max())
        return np.asarray(sup)


def split_schwarzschild(metric, m):
    """Write g as (1 + m/(2 r^{n-2}))^{4/(n-2)} delta plus a remainder."""
    n = metric.n
    u_m = metrics.schwarzschild_factor(m, n)
    base = metrics.conformally_flat(u_m, n, family="schwarzschild-part",
                                    params={"m": float(m)},
                                    r_min=metric.r_min)
    rem_a = rem_b = None
    if metric.radial_form is not None:
        rem_a = metric.radial_form.a - base.radial_form.a
        rem_b = metric.radial_form.b
    return SplitState(metric=metric, m=float(m), factor=u_m, base=base,
                      rem_a=rem_a, rem_b=rem_b)


def split_residual_report(split, radii=(8.0, 16.0, 32.0, 64.0)):
    """Flux and sup-decay of the remainder; the flux limit vanishes exactly
    when the split mass matches the input mass."""
    radii = np.asarray(radii, dtype=float)
    fluxes = residual_flux(split.remainder_field(), radii)
    sup = split.remainder_sup(radii)
    norm = 2.0 * (split.n - 1) * sphere_area(split.n)
    return {
        "radii": radii,
        "fluxes": fluxes,
        "flux_mass_limit": float(fluxes[-1] / norm),
        "sup_h": sup,
        "sup_slope": trend_slope(radii, sup),
    }


@dataclass
class InterpolatedEnd:
    """ghat_s: the input form up to 2s, Schwarzschild-conformal beyond 3s."""

    split: SplitState
    s: float
    zeta: RProfile
    metric: metrics.MetricSpec
    u_eff: RProfile = None

    @property
    def n(self):
        return self.split.n

    def scalar_values(self, r):
        """R(ghat_s) on radii; closed form via the conformal factor."""
        if self.u_eff is None:
            raise ConfigError("scalar audit needs the conformal radial form")
        return radial.conformal_scalar(self.u_eff, self.n)(r)


def build_interpolated_metric(split, s):
    if s <= 1.0:
        raise ConfigError("interpolation scale s = %.3g must exceed 1" % s)
    s = float(s)
    n = split.n
    zeta = radial.transition(2.0 * s, 3.0 * s)
    if not split.is_radial:
        raise ConfigError("interpolation needs a radial input on this tier")
    a_hat = _blend_profiles(split.metric.radial_form.a,
                            split.base.radial_form.a, zeta)
    b_in = split.metric.radial_form.b
    b_hat = None
    if b_in is not None:
        b_hat = _blend_profiles(b_in, radial.const(0.0), zeta)
    u_eff = None
    if b_hat is None:
        u_eff = a_hat.powc((n - 2) / 4.0)
    spec = metrics.radial_metric(a_hat, b_hat, n, family="interpolated",
                                 params={"s": s, "m": split.m},
                                 conformal_u=u_eff,
                                 r_min=split.metric.r_min)
    return InterpolatedEnd(split=split, s=s, zeta=zeta, metric=spec,
                           u_eff=u_eff)


def scalar_bounds_audit(interp, num=401):
    """Sampled curvature bounds for one interpolation scale.

    Reports the minimum over the untouched region {r <= 2s}, the transition
    maximum of |R| scaled by s^n, the sup over the exact-conformal tail
    {r >= 3s}, and the L^{2n/(n+2)} norm of R over the transition annulus.
    """
    s, n = interp.s, interp.n
    r_min = interp.metric.r_min
    r_in = np.geomspace(r_min, 2.0 * s, num)
    r_tr = np.linspace(s, 4.0 * s, 4 * num)
    r_out = np.geomspace(3.0 * s, 12.0 * s, num)
    R_in = interp.scalar_values(r_in)
    R_tr = interp.scalar_values(r_tr)
    R_out = interp.scalar_values(r_out)
    q = 2.0 * n / (n + 2.0)
    r_np = np.geomspace(s, 4.0 * s, 2049)
    _, w = radial_kappa_w(interp.metric, r_np)
    Rq = np.abs(interp.scalar_values(r_np)) ** q
    norm = (sphere_area(n) * simpson(Rq * w, x=r_np)) ** (1.0 / q)
    return {
        "s": s,
        "min_inner": float(R_in.min()),
        "transition_sup_scaled": float(np.abs(R_tr).max() * s ** n),
        "outer_sup": float(np.abs(R_out).max()),
        "transition_lp_norm": float(norm),
    }


def scalar_ladder_audit(split, s_ladder=DEFAULT_S_LADDER):
    """Scaling exponents across the s ladder for the interpolation bounds."""
    reports = [scalar_bounds_audit(build_interpolated_metric(split, s))
               for s in s_ladder]
    s_arr = np.asarray(s_ladder, dtype=float)
    norms = np.array([rep["transition_lp_norm"] for rep in reports])
    return {
        "s_ladder": s_arr,
        "norms": norms,
        "norm_exponent": trend_slope(s_arr, norms),
        "scaled_sup": float(max(rep["transition_sup_scaled"]
                                for rep in reports)),
        "reports": reports,
    }


@dataclass
class DeltaReport:
    delta: float
    delta0: float
    lhs: float
    threshold: float
    ceiling: float
    volume: float
    bisections: int

    @property
    def smallness_margin(self):
        return self.threshold - self.lhs

    @property
    def ceiling_margin(self):
        return self.ceiling - self.delta * (1.0 + self.volume)

    def to_json_dict(self):
        return {"delta": self.delta, "delta0": self.delta0, "lhs": self.lhs,
                "threshold": self.threshold, "ceiling": self.ceiling,
                "volume": self.volume, "bisections": self.bisections,
                "smallness_margin": self.smallness_margin,
                "ceiling_margin": self.ceiling_margin}


def choose_delta(interp, c_S, bisections=60):
    """Largest relaxation constant passing the negative-part size bound.

    Starts from the ceiling value delta0 = s^{-1}/(1 + volume) and bisects
    downward until (integral of |(eta (R - delta))_-|^{n/2} d mu)^{2/n}
    drops below c_S / 2; the ceiling margin then holds for free.
    """
    if c_S <= 0.0:
        raise ConfigError("Sobolev constant must be positive")
    s, n = interp.s, interp.n
    eta = radial.window(s, 2.0 * s, 3.0 * s, 4.0 * s)
    r = np.geomspace(s, 4.0 * s, 2049)
    _, w = radial_kappa_w(interp.metric, r)
    area = sphere_area(n)
    volume = float(area * simpson(w, x=r))
    Rv = interp.scalar_values(r)
    ev = eta.value(r)

    def lhs(delta):
        neg = ev * np.maximum(delta - Rv, 0.0)
        return float((area * simpson(neg ** (n / 2.0) * w, x=r)) ** (2.0 / n))

    threshold = 0.5 * c_S
    delta0 = (1.0 / s) / (1.0 + volume)
    if lhs(delta0) <= threshold:
        return DeltaReport(delta=delta0, delta0=delta0, lhs=lhs(delta0),
                           threshold=threshold, ceiling=1.0 / s,
                           volume=volume, bisections=0)
    lo = DELTA_FLOOR
    if lhs(lo) > threshold:
        raise SolverError(
            "no relaxation constant above %.0e satisfies the size bound; "
            "the input curvature is too negative for this regime" % DELTA_FLOOR)
    hi = delta0
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if lhs(mid) <= threshold:
            lo = mid
        else:
            hi = mid
    return DeltaReport(delta=lo, delta0=delta0, lhs=lhs(lo),
                       threshold=threshold, ceiling=1.0 / s, volume=volume,
                       bisections=bisections)


@dataclass
class RungResult:
    """One scale of the deformation ladder with its audit numbers."""

    s: float
    delta_report: DeltaReport
    solution: object
    A_s: float
    tau: float
    m_bar: float
    min_R_bar: float
    min_u_tau: float
    end_norm: float
    metric_bar: metrics.MetricSpec
    u_tau: RProfile
    audit: dict = field(default_factory=dict)

    @property
    def mass_shift(self):
        return 2.0 * self.A_s / (1.0 + self.tau)

    def to_row(self):
        return {"s": self.s, "delta_s": self.delta_report.delta,
                "A_integral": self.A_s, "A_fit": self.solution.A_fit,
                "tau": self.tau, "m_bar": self.m_bar,
                "min_R": self.min_R_bar, "end_norm": self.end_norm}


def _solution_profile(solution):
    """The solved factor u_s = 1 + v as a spline-backed radial profile."""
    mask = ~solution.mesh.is_cyl
    return radial.from_spline(CubicSpline(solution.mesh.r[mask],
                                          solution.u[mask]))


def _pick_tau(interp, eta, delta, solution, R_max):
    """Largest tau in [1e-6, 1] keeping the closed-form curvature of the
    deformed metric above the audit floor; the admissible set is an interval
    containing 0 because the numerator is affine in tau."""
    n = interp.n
    r = np.geomspace(interp.metric.r_min, 0.999 * R_max, 4001)
    Rv = interp.scalar_values(r)
    ev = eta.value(r)
    uv = solution.u_at(r)
    base_num = ((1.0 - ev) * Rv + delta * ev) * uv

    def min_R(tau):
        pref = (1.0 + tau) ** (4.0 / (n - 2.0)) \
            * (uv + tau) ** (-(n + 2.0) / (n - 2.0))
        return float((pref * (base_num + tau * Rv)).min())

    if min_R(1.0) >= MIN_R_TARGET:
        return 1.0, min_R(1.0)
    lo, hi = 1e-6, 1.0
    if min_R(lo) < MIN_R_TARGET:
        raise SolverError("no admissible tau: curvature floor %.3g violated "
                          "even at tau = %.0e" % (min_R(lo), lo))
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if min_R(mid) >= MIN_R_TARGET:
            lo = mid
        else:
            hi = mid
    return lo, min_R(lo)


def deform_rung(split, s, c_S, radii_factors=(8.0, 16.0, 32.0),
                annulus_nodes=1100):
    """Run one ladder scale: interpolate, relax, solve, pick tau, deform."""
    n = split.n
    interp = build_interpolated_metric(split, s)
    audit = scalar_bounds_audit(interp)
    dreport = choose_delta(interp, c_S)
    delta = dreport.delta
    eta = radial.window(s, 2.0 * s, 3.0 * s, 4.0 * s)
    cn = conformal_constant(n)
    Rfun = radial.conformal_scalar(interp.u_eff, n)

    def f(r):
        r = np.asarray(r, dtype=float)
        return cn * eta.value(r) * (Rfun(r) - delta)

    dom = DomainModel(n=n, r_min=split.metric.r_min,
                      truncation_radii=tuple(k * s for k in radii_factors),
                      annulus_nodes=annulus_nodes)
    prob = EllipticProblem(interp.metric, f, support_radius=4.0 * s,
                           domain=dom)
    small = check_smallness(prob, c_S)
    if not small.passed:
        raise SolverError("size bound failed after delta selection "
                          "(ratio %.3g); delta audit inconsistent"
                          % small.ratio)
    solution = solve_conformal_factor(prob)
    A_s = solution.A_integral
    tau, min_R_bar = _pick_tau(interp, eta, delta, solution,
                               dom.truncation_radii[-1])

    u_prof = _solution_profile(solution)
    u_tau = (u_prof + tau) * (1.0 / (1.0 + tau))
    metric_bar = metrics.conformal_product(interp.metric, u_tau,
                                           family="deformed")
    m_bar = split.m + 2.0 * A_s / (1.0 + tau)
    min_u_tau = (solution.min_u + tau) / (1.0 + tau)

    # sup of the pointwise g-norm of (g_bar - g) over the end chart
    r = np.geomspace(split.metric.r_min, dom.truncation_radii[-1] * 0.999,
                     2001)
    a_in = split.metric.radial_form.a.value(r)
    a_bar = metric_bar.radial_form.a.value(r)
    end_norm = float(np.sqrt(n) * np.abs(a_bar / a_in - 1.0).max())
    return RungResult(s=s, delta_report=dreport, solution=solution, A_s=A_s,
                      tau=tau, m_bar=m_bar, min_R_bar=min_R_bar,
                      min_u_tau=min_u_tau, end_norm=end_norm,
                      metric_bar=metric_bar, u_tau=u_tau, audit=audit)


@dataclass
class DeformReport:
    m_input: float
    c_S: float
    eps_target: float
    rungs: list
    achieved: bool

    @property
    def final(self):
        return self.rungs[-1]

    @property
    def m_bar(self):
        return self.final.m_bar

    @property
    def metric_bar(self):
        return self.final.metric_bar

    def trend(self):
        return [abs(r.mass_shift) for r in self.rungs]

    def to_json_dict(self):
        return {
            "m_input": self.m_input, "c_S": self.c_S,
            "eps_target": self.eps_target, "achieved": self.achieved,
            "m_bar": self.m_bar,
            "rungs": [r.to_row() for r in self.rungs],
        }


def audit_nonnegative_scalar(metric, r_max, num=2001, floor=-1e-10):
    """RegimeError unless the radial closed-form curvature stays above floor."""
    if metric.conformal_u is None:
        raise ConfigError("curvature audit needs a conformal radial input")
    r = np.geomspace(metric.r_min, r_max, num)
    Rv = radial.conformal_scalar(metric.conformal_u, metric.n)(r)
    m = float(Rv.min())
    if m < floor:
        raise RegimeError("input scalar curvature dips to %.3g < %.3g; the "
                          "deformation needs R >= 0" % (m, floor))
    return m


def density_deform(metric, eps_target, s_ladder=DEFAULT_S_LADDER, c_S=None,
                   m=None, radii_factors=(8.0, 16.0, 32.0),
                   annulus_nodes=1100):
    """Ladder driver: stop at the first scale whose mass shift is small.

    Raises SolverError when the shift magnitude fails to decrease across
    three consecutive scales (with the trend attached to the message).
    """
    if eps_target <= 0.0:
        raise ConfigError("target mass shift must be positive")
    audit_nonnegative_scalar(metric, r_max=64.0 * float(max(s_ladder)))
    if m is None:
        m = adm_mass(metric).extrapolated
    if c_S is None:
        dom = DomainModel(n=metric.n, r_min=metric.r_min,
                          truncation_radii=(64.0 * metric.r_min,),
                          annulus_nodes=700)
        from .rayleigh import sobolev_estimate
        c_S = sobolev_estimate(dom, metric).c_S
    split = split_schwarzschild(metric, m)
    rungs = []
    achieved = False
    for s in s_ladder:
        rung = deform_rung(split, s, c_S, radii_factors=radii_factors,
                           annulus_nodes=annulus_nodes)
        rungs.append(rung)
        if abs(rung.mass_shift) <= eps_target:
            achieved = True
            break
        shifts = [abs(r.mass_shift) for r in rungs]
        if len(shifts) >= 3 and shifts[-1] >= shifts[-2] >= shifts[-3]:
            raise SolverError("mass shift not decreasing over three scales: "
                              + ", ".join("%.3e" % t for t in shifts))
    return DeformReport(m_input=float(m), c_S=float(c_S),
                        eps_target=float(eps_target), rungs=rungs,
                        achieved=achieved)


def verify_mass_shift(report, rtol=0.01):
    """Independent mass check: adm_mass(g_bar) - m equals the reported shift.

    The radii ladder scales with the final interpolation scale but stays
    inside the solved domain, where the factor profile is tabulated.
    """
    rung = report.final
    s = rung.s
    radii = np.array([3.875, 7.75, 15.5, 31.0]) * s
    m_bar_meas = adm_mass(rung.metric_bar, radii=radii).extrapolated
    expected = report.m_input + rung.mass_shift
    err = abs(m_bar_meas - expected)
    return {
        "measured": float(m_bar_meas),
        "reported": float(expected),
        "error": float(err),
        "passed": bool(err <= rtol * max(1.0, abs(expected))),
    }
