"""Pointwise curvature of end-chart metrics by central differencing.

Metric components are sampled on a second-order stencil (1 + 2 n^2 evaluations
per point) and fed to the contraction kernels; no symbolic machinery.  The
default step follows h = min(0.01 r, 0.05), balancing truncation against
cancellation across the log-radial range.
"""
from __future__ import annotations

import numpy as np

from .backend import kernels
from .errors import DegenerateMetricError, DomainError


def default_step(r):
    r = np.asarray(r, dtype=float)
    return np.minimum(0.01 * r, 0.05)


def _steps(X, h):
    r = np.sqrt((X ** 2).sum(axis=1))
    if h is None:
        return default_step(r)
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        return np.full(X.shape[0], float(h))
    return h


def _check_margin(X, hv, r_min):
    r = np.sqrt((X ** 2).sum(axis=1))
    bad = r < r_min + 2.0 * hv
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError("stencil margin violated at point %d (r=%.4g, h=%.4g, chart r>=%.4g)"
                          % (i, r[i], hv[i], r_min))


def fd_metric_derivatives(metric, X, h=None):
    """Sampled (g, dg, ddg) arrays at points X by central differences.

    Returns g (N,n,n), dg (N,n,n,n) with dg[p,k] = d_k g, and ddg
    (N,n,n,n,n) with ddg[p,k,l] = d_k d_l g, truncation O(h^2).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, n = X.shape
    hv = _steps(X, h)
    _check_margin(X, hv, metric.r_min)

    # stencil offsets: center; +-e_k; the four corners per pair k<l
    pts = [X]
    for k in range(n):
        for s in (+1.0, -1.0):
            P = X.copy()
            P[:, k] += s * hv
            pts.append(P)
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    for (k, l) in pairs:
        for sk, sl in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            P = X.copy()
            P[:, k] += sk * hv
            P[:, l] += sl * hv
            pts.append(P)
    allpts = np.concatenate(pts, axis=0)
    G = metric.g(allpts)
    if not np.isfinite(G).all():
        raise DegenerateMetricError("metric evaluation returned non-finite values")
    S = len(pts)
    G = G.reshape(S, N, n, n)

    g0 = G[0]
    h1 = hv[:, None, None]
    h2 = (hv ** 2)[:, None, None]
    dg = np.empty((N, n, n, n))
    ddg = np.empty((N, n, n, n, n))
    for k in range(n):
        gp, gm = G[1 + 2 * k], G[2 + 2 * k]
        dg[:, k] = (gp - gm) / (2.0 * h1)
        ddg[:, k, k] = (gp - 2.0 * g0 + gm) / h2
    base = 1 + 2 * n
    for idx, (k, l) in enumerate(pairs):
        gpp, gpm, gmp, gmm = G[base + 4 * idx: base + 4 * idx + 4]
        mixed = (gpp - gpm - gmp + gmm) / (4.0 * h2)
        ddg[:, k, l] = mixed
        ddg[:, l, k] = mixed
    return g0, dg, ddg


def christoffel_first_kind(metric, X, h=None):
    """First-kind Christoffel symbols G1[p,i,j,k] and contractions Gc[p,k]
    from central differences of order h^2."""
    g, dg, _ = fd_metric_derivatives(metric, X, h)
    try:
        return kernels().christoffel_first(g, dg)[0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric not invertible on the stencil") from exc


def scalar_curvature_bartnik(metric, X, h=None):
    """Scalar curvature batch via the divergence-form contraction identity."""
    g, dg, ddg = fd_metric_derivatives(metric, X, h)
    try:
        return kernels().scalar_curvature(g, dg, ddg)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric not invertible on the stencil") from exc


def ricci_tensor_fd(metric, X, h=None):
    """Symmetric Ricci tensor batch; trace is checked against the scalar
    route by the test-suite invariants rather than here."""
    g, dg, ddg = fd_metric_derivatives(metric, X, h)
    try:
        return kernels().ricci_tensor(g, dg, ddg)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric not invertible on the stencil") from exc


def scalar_curvature_conformal(n, R_base, phi, lap_phi):
    """Closed-form scalar curvature of phi^{4/(n-2)} g given R(g) and Delta_g phi.

    No differencing happens here; callers supply the Laplacian.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0.0):
        raise DegenerateMetricError("conformal factor must be positive (min %.3g)"
                                    % float(phi.min()))
    R_base = np.asarray(R_base, dtype=float)
    lap_phi = np.asarray(lap_phi, dtype=float)
    ex = -(n + 2.0) / (n - 2.0)
    cn = 4.0 * (n - 1.0) / (n - 2.0)
    return phi ** ex * (-cn * lap_phi + R_base * phi)


def sample_directions(n, count, rng=None):
    """Deterministic unit directions for audits (seeded Gaussian projection)."""
    rng = np.random.default_rng(0 if rng is None else rng) \
        if not isinstance(rng, np.random.Generator) else rng
    V = rng.standard_normal((count, n))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def decay_audit(metric, radii=None, n_dirs=12, rng=None):
    """Measured decay exponents of |h|, |dh|, |ddh| against the declared budget.

    Fits log(sup |.|) against log r over the radius ladder; a declared order is
    violated when the measured slope exceeds it by more than 0.2 (slower decay
    than declared).  Metrics indistinguishable from flat pass vacuously.
    """
    n = metric.n
    if radii is None:
        radii = np.geomspace(4.0, 256.0, 7)
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise DomainError("decay audit needs a ladder with >= 4 rungs")
    dirs = sample_directions(n, n_dirs, rng)
    sup_h = np.empty(radii.size)
    sup_dh = np.empty(radii.size)
    sup_ddh = np.empty(radii.size)
    eye = np.eye(n)
    for i, rho in enumerate(radii):
        X = rho * dirs
        g, dg, ddg = fd_metric_derivatives(metric, X)
        sup_h[i] = np.abs(g - eye).max()
        sup_dh[i] = np.abs(dg).max()
        sup_ddh[i] = np.abs(ddg).max()
    declared = metric.decay_orders
    report = {"radii": radii.tolist(), "declared_orders": list(declared),
              "measured": {}, "violations": []}
    names = ("h", "dh", "ddh")
    for name, vals, decl in zip(names, (sup_h, sup_dh, sup_ddh), declared):
        if vals.max() < 1e-13:
            report["measured"][name] = {"order": None, "constant": 0.0,
                                        "sup": vals.tolist()}
            continue
        slope, logc = np.polyfit(np.log(radii), np.log(vals), 1)
        report["measured"][name] = {"order": float(slope),
                                    "constant": float(np.exp(logc)),
                                    "sup": vals.tolist()}
        if slope > decl + 0.2:
            report["violations"].append(
                {"component": name, "measured_order": float(slope),
                 "declared_order": float(decl)})
    report["pass"] = not report["violations"]
    return report
