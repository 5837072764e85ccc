"""Metric families on the end chart R^n minus the closed unit ball.

A MetricSpec bundles a batched component evaluator g_ij(x) with structural
metadata: the dimension, a family tag, declared decay orders for the error term
h = g - delta, and (when the family is spherically symmetric) exact radial
profiles that downstream tiers use for closed-form reductions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import radial
from .errors import DegenerateMetricError
from .radial import RProfile


@dataclass
class RadialForm:
    """Radial metric data g = a(r) delta + b(r) xhat xhat^T."""
    a: RProfile
    b: Optional[RProfile] = None

    def ab(self, r):
        a0, a1, _ = self.a(r)
        if self.b is None:
            z = np.zeros_like(a0)
            return a0, a1, z, z
        b0, b1, _ = self.b(r)
        return a0, a1, b0, b1


@dataclass
class MetricSpec:
    """Closed-form end-chart metric with decay metadata.

    decay_orders are the declared powers of r bounding |h|, |dh| and |ddh|
    (componentwise sup over directions); q is the declared scalar-curvature
    decay power, q > n for the families used here.
    """
    n: int
    family: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    decay_orders: tuple = None
    q: float = None
    radial_form: Optional[RadialForm] = None
    conformal_u: Optional[RProfile] = None
    dg_evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    r_min: float = 1.0

    def __post_init__(self):
        if self.decay_orders is None:
            self.decay_orders = (2 - self.n, 1 - self.n, -self.n)
        if self.q is None:
            self.q = self.n + 1

    def g(self, X):
        """Metric components at points X of shape (N, n) -> (N, n, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self.evaluator(X)
        return np.asarray(out, dtype=float)

    def h(self, X):
        """Error term g - delta."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.g(X) - np.eye(self.n)[None]

    def dg(self, X):
        """Analytic first derivatives d_k g_ij when the family provides them,
        else None (callers fall back to central differences)."""
        if self.dg_evaluator is None:
            return None
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.dg_evaluator(X), dtype=float)

    def check_pointwise(self, X, tol=1e-12):
        """Symmetry and positive-definiteness audit at sample points."""
        G = self.g(X)
        asym = np.abs(G - np.swapaxes(G, -1, -2)).max()
        if asym > tol:
            raise DegenerateMetricError("metric asymmetry %.3g exceeds %.3g" % (asym, tol))
        ev = np.linalg.eigvalsh(0.5 * (G + np.swapaxes(G, -1, -2)))
        lam_min = float(ev.min())
        if lam_min <= 0.0:
            raise DegenerateMetricError("metric not positive definite (min eig %.3g)" % lam_min)
        return {"max_asymmetry": float(asym), "min_eigenvalue": lam_min}

    def conformal_rescale(self, phi: RProfile, family=None):
        """Metric phi(r)^{4/(n-2)} g for a positive radial factor phi."""
        return conformal_product(self, phi, family=family or (self.family + "*conformal"))


def _radial_g(form: RadialForm, n):
    def ev(X):
        r = np.sqrt((X ** 2).sum(axis=1))
        a0, _, b0, _ = form.ab(r)
        xh = X / r[:, None]
        g = a0[:, None, None] * np.eye(n)[None]
        g += b0[:, None, None] * xh[:, :, None] * xh[:, None, :]
        return g

    return ev


def _radial_dg(form: RadialForm, n):
    def ev(X):
        r = np.sqrt((X ** 2).sum(axis=1))
        a0, a1, b0, b1 = form.ab(r)
        xh = X / r[:, None]
        eye = np.eye(n)
        # d_k g_ij = a' xh_k delta_ij + b' xh_k xh_i xh_j
        #            + (b/r)(delta_ki xh_j + delta_kj xh_i - 2 xh_k xh_i xh_j)
        dg = a1[:, None, None, None] * xh[:, :, None, None] * eye[None, None]
        xxx = xh[:, :, None, None] * xh[:, None, :, None] * xh[:, None, None, :]
        dg = dg + b1[:, None, None, None] * xxx
        bor = (b0 / r)[:, None, None, None]
        dg = dg + bor * (eye[None, :, :, None] * xh[:, None, None, :]
                         + eye[None, :, None, :] * xh[:, None, :, None]
                         - 2.0 * xxx)
        return dg

    return ev


def euclidean(n):
    eye = np.eye(n)

    def ev(X):
        return np.broadcast_to(eye, (X.shape[0], n, n)).copy()

    form = RadialForm(a=radial.const(1.0))
    return MetricSpec(n=n, family="euclidean", evaluator=ev, params={},
                      decay_orders=(2 - n, 1 - n, -n), q=n + 10.0,
                      radial_form=form, conformal_u=radial.const(1.0),
                      dg_evaluator=lambda X: np.zeros((X.shape[0], n, n, n)))


def conformally_flat(u: RProfile, n, family="conformally_flat", params=None,
                     q=None, decay_orders=None, r_min=1.0):
    """Metric u(r)^{4/(n-2)} delta for a positive radial factor u."""
    a = u.powc(4.0 / (n - 2))
    form = RadialForm(a=a)
    return MetricSpec(n=n, family=family, evaluator=_radial_g(form, n),
                      params=params or {}, decay_orders=decay_orders, q=q,
                      radial_form=form, conformal_u=u,
                      dg_evaluator=_radial_dg(form, n), r_min=r_min)


def schwarzschild(m, n):
    """Spatial Schwarzschild slice (1 + m/(2 r^{n-2}))^{4/(n-2)} delta."""
    u = radial.const(1.0) + radial.power(0.5 * m, 2 - n)
    spec = conformally_flat(u, n, family="schwarzschild", params={"m": float(m)},
                            q=n + 10.0)
    return spec


def schwarzschild_factor(m, n):
    """The radial factor 1 + m/(2 r^{n-2}) as a profile."""
    return radial.const(1.0) + radial.power(0.5 * m, 2 - n)


def radial_metric(a: RProfile, b: Optional[RProfile], n, family="radial",
                  params=None, q=None, decay_orders=None, conformal_u=None,
                  r_min=1.0):
    form = RadialForm(a=a, b=b)
    return MetricSpec(n=n, family=family, evaluator=_radial_g(form, n),
                      params=params or {}, decay_orders=decay_orders, q=q,
                      radial_form=form, conformal_u=conformal_u,
                      dg_evaluator=_radial_dg(form, n), r_min=r_min)


def perturbed(base: MetricSpec, h_evaluator, family="perturbed", params=None,
              dh_evaluator=None, q=None, decay_orders=None):
    """base + h for a batched symmetric perturbation evaluator h(X)."""
    n = base.n

    def ev(X):
        return base.g(X) + np.asarray(h_evaluator(X), dtype=float)

    dg_ev = None
    if base.dg_evaluator is not None and dh_evaluator is not None:
        def dg_ev(X):
            return base.dg(X) + np.asarray(dh_evaluator(X), dtype=float)

    return MetricSpec(n=n, family=family, evaluator=ev, params=params or {},
                      decay_orders=decay_orders or base.decay_orders,
                      q=q if q is not None else base.q, dg_evaluator=dg_ev,
                      r_min=base.r_min)


def from_evaluator(evaluator, n, family="composite", params=None, q=None,
                   decay_orders=None, dg_evaluator=None, radial_form=None,
                   conformal_u=None, r_min=1.0):
    return MetricSpec(n=n, family=family, evaluator=evaluator,
                      params=params or {}, decay_orders=decay_orders, q=q,
                      dg_evaluator=dg_evaluator, radial_form=radial_form,
                      conformal_u=conformal_u, r_min=r_min)


def conformal_product(base: MetricSpec, phi: RProfile, family="conformal"):
    """phi(r)^{4/(n-2)} * base, preserving radial structure when present."""
    n = base.n
    e = 4.0 / (n - 2)
    fac = phi.powc(e)

    if base.radial_form is not None:
        a = fac * base.radial_form.a
        b = None if base.radial_form.b is None else fac * base.radial_form.b
        u = None
        if base.conformal_u is not None:
            u = base.conformal_u * phi
        return radial_metric(a, b, n, family=family, params=dict(base.params),
                             q=base.q, decay_orders=base.decay_orders,
                             conformal_u=u, r_min=base.r_min)

    def ev(X):
        r = np.sqrt((X ** 2).sum(axis=1))
        return fac.value(r)[:, None, None] * base.g(X)

    return MetricSpec(n=n, family=family, evaluator=ev, params=dict(base.params),
                      decay_orders=base.decay_orders, q=base.q, r_min=base.r_min)


def rotate(metric: MetricSpec, Q):
    """Pullback of the metric under the chart rotation x -> Q x.

    (Q* g)_ij(x) = Q_ai g_ab(Qx) Q_bj; scalar invariants satisfy
    R(Q* g)(x) = R(g)(Qx).
    """
    Q = np.asarray(Q, dtype=float)

    def ev(X):
        G = metric.g(X @ Q.T)
        return np.einsum('ai,pab,bj->pij', Q, G, Q)

    return MetricSpec(n=metric.n, family=metric.family + "*rot", evaluator=ev,
                      params=dict(metric.params), decay_orders=metric.decay_orders,
                      q=metric.q, r_min=metric.r_min)
