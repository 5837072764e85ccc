"""Discretization carriers.

Two tiers: RADIAL (any dimension, spherically symmetric problems reduced to a
1D conservation-form mesh, optionally with a finite-cylinder toy end attached
at the inner boundary) and FULL3D (n = 3 product grid, log-radius times
pole-offset latitude times uniform longitude).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


@dataclass
class TensorField:
    """Per-node values of a rank 0/1/2 field owned by a grid."""
    grid: object
    rank: int
    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        nn = self.grid.num_nodes
        shape = self.values.shape
        if self.rank == 0:
            ok = shape == (nn,)
        elif self.rank == 1:
            ok = shape == (nn, self.grid.n)
        else:
            ok = shape == (nn, self.grid.n, self.grid.n)
        if not ok:
            raise ConfigError("field shape %s does not match grid (%d nodes, rank %d)"
                              % (shape, nn, self.rank))
        if self.rank == 2 and self.symmetric:
            dev = np.abs(self.values - np.swapaxes(self.values, -1, -2)).max()
            if dev > 1e-12:
                raise ConfigError("rank-2 field flagged symmetric deviates by %.3g" % dev)


@dataclass
class RadialMesh:
    """1D conservation-form mesh for spherically symmetric elliptic problems.

    Node layout: optional toy-end cylinder nodes at mesh coordinate t < 0
    (uniform), then the annulus at sigma = log r in [log r_min, log r_max]
    (uniform).  The junction r = r_min is a single shared node.  kappa/w are
    per-steradian flux and volume coefficients in the local mesh coordinate:

        annulus:  kappa_s = kappa(r)/r,  w_s = w(r) r
        cylinder: kappa_t = w_t = section area a(r_min)^{(n-1)/2} r_min^{n-1}

    with kappa(r) = a^{(n-1)/2} (a+b)^{-1/2} r^{n-1} and
    w(r) = a^{(n-1)/2} (a+b)^{1/2} r^{n-1} for the metric a(r) delta + b xhat xhat.
    """
    n: int
    coord: np.ndarray          # strictly increasing mesh coordinate, (M,)
    r: np.ndarray              # physical radius per node (r_min on the cylinder)
    is_cyl: np.ndarray         # bool mask, (M,)
    kappa_face: np.ndarray     # (M-1,), flux coefficient at faces
    w_half: np.ndarray         # (M, 2), lumped weight of the (left, right) half cells
    r_min: float = 1.0
    r_max: float = 0.0
    tier: str = "RADIAL"

    @property
    def num_nodes(self):
        return self.coord.size

    @property
    def wbar(self):
        return self.w_half.sum(axis=1)

    @property
    def dcoord(self):
        return np.diff(self.coord)

    @property
    def junction_index(self):
        return int(self.is_cyl.sum())

    def annulus_mask(self):
        return ~self.is_cyl


def radial_kappa_w(metric, r):
    """Per-steradian flux/volume coefficients of a radial metric at radii r."""
    r = np.asarray(r, dtype=float)
    form = metric.radial_form
    if form is None:
        raise ConfigError("metric %r carries no radial form" % metric.family)
    a0, _, b0, _ = form.ab(r)
    n = metric.n
    kap = a0 ** ((n - 1) / 2.0) * (a0 + b0) ** -0.5 * r ** (n - 1)
    w = a0 ** ((n - 1) / 2.0) * (a0 + b0) ** 0.5 * r ** (n - 1)
    return kap, w


def radial_mesh(metric, r_max, num, cyl_len=0.0, cyl_num=0, r_min=None):
    """Build the composite 1D mesh for a radial metric.

    num is the annulus node count (log-spaced); cyl_len/cyl_num attach the toy
    end.  Node ordering: deepest cylinder node first, outer sphere last.
    """
    n = metric.n
    r_min = float(metric.r_min if r_min is None else r_min)
    if r_max <= r_min:
        raise ConfigError("r_max %.3g must exceed r_min %.3g" % (r_max, r_min))
    if num < 16:
        raise ConfigError("annulus node count %d too small" % num)
    sig = np.linspace(np.log(r_min), np.log(r_max), int(num))
    r_ann = np.exp(sig)
    if cyl_len > 0.0 and cyl_num > 0:
        t = np.linspace(-float(cyl_len), 0.0, int(cyl_num) + 1)[:-1]
    else:
        t = np.empty(0)
    coord = np.concatenate([t, sig - sig[0]])
    r = np.concatenate([np.full(t.size, r_min), r_ann])
    is_cyl = np.zeros(coord.size, dtype=bool)
    is_cyl[:t.size] = True

    form = metric.radial_form
    a_in = form.ab(np.array([r_min]))[0][0]
    section = a_in ** ((n - 1) / 2.0) * r_min ** (n - 1)

    # faces: a face is in the cylinder iff its midpoint coordinate is < 0
    mid = 0.5 * (coord[:-1] + coord[1:])
    kappa_face = np.empty(coord.size - 1)
    cylf = mid < 0.0
    kappa_face[cylf] = section
    # mid stores sigma offsets from log(r_min); recover the face radius
    r_face = np.exp(np.log(r_min) + mid[~cylf])
    kap_ann, _ = radial_kappa_w(metric, r_face)
    kappa_face[~cylf] = kap_ann / r_face

    # lumped half-cell weights, side-aware at the junction
    d = np.diff(coord)
    w_half = np.zeros((coord.size, 2))
    _, w_ann = radial_kappa_w(metric, r)
    w_sigma = w_ann * r
    for i in range(coord.size):
        if i > 0:
            w_half[i, 0] = 0.5 * d[i - 1] * (section if mid[i - 1] < 0 else w_sigma[i])
        if i < coord.size - 1:
            w_half[i, 1] = 0.5 * d[i] * (section if mid[i] < 0 else w_sigma[i])
    return RadialMesh(n=n, coord=coord, r=r, is_cyl=is_cyl,
                      kappa_face=kappa_face, w_half=w_half,
                      r_min=r_min, r_max=float(r_max))


def mesh_stiffness(mesh):
    """Tridiagonal stiffness bands (lower, diag, upper) of -div(kappa grad)."""
    c = mesh.kappa_face / mesh.dcoord
    M = mesh.num_nodes
    diag = np.zeros(M)
    diag[:-1] += c
    diag[1:] += c
    return -c.copy(), diag, -c.copy()


def apply_stiffness(mesh, v):
    """K v for the Neumann-natural stiffness (energy form v^T K v >= 0)."""
    c = mesh.kappa_face / mesh.dcoord
    dv = np.diff(v)
    out = np.zeros_like(v)
    out[:-1] -= c * dv
    out[1:] += c * dv
    return out


@dataclass
class SphericalGrid:
    """FULL3D n=3 grid: log-radius x pole-offset latitude x uniform longitude."""
    r_min: float
    r_max: float
    shape: tuple                      # (Nr, Nth, Nph)
    sigma: np.ndarray = field(default=None)
    theta: np.ndarray = field(default=None)
    phi: np.ndarray = field(default=None)
    n: int = 3
    tier: str = "FULL3D"

    def __post_init__(self):
        Nr, Nth, Nph = self.shape
        self.sigma = np.linspace(np.log(self.r_min), np.log(self.r_max), Nr)
        self.theta = (np.arange(Nth) + 0.5) * np.pi / Nth
        self.phi = np.arange(Nph) * 2.0 * np.pi / Nph
        if self.theta[0] <= 0.0 or self.theta[-1] >= np.pi:
            raise ConfigError("latitude nodes touch a pole")

    @property
    def num_nodes(self):
        Nr, Nth, Nph = self.shape
        return Nr * Nth * Nph

    @property
    def spacings(self):
        Nr, Nth, Nph = self.shape
        return (self.sigma[1] - self.sigma[0], np.pi / Nth, 2.0 * np.pi / Nph)

    def points(self):
        """Cartesian node coordinates, (num_nodes, 3), C-order (r, theta, phi)."""
        sg, th, ph = np.meshgrid(self.sigma, self.theta, self.phi, indexing="ij")
        r = np.exp(sg)
        X = np.stack([r * np.sin(th) * np.cos(ph),
                      r * np.sin(th) * np.sin(ph),
                      r * np.cos(th)], axis=-1)
        return X.reshape(-1, 3)

    def jacobians(self):
        """d x / d(sigma, theta, phi) at every node, (num_nodes, 3, 3)."""
        sg, th, ph = np.meshgrid(self.sigma, self.theta, self.phi, indexing="ij")
        r = np.exp(sg).ravel()
        st, ct = np.sin(th).ravel(), np.cos(th).ravel()
        sp_, cp = np.sin(ph).ravel(), np.cos(ph).ravel()
        J = np.empty((r.size, 3, 3))
        # columns: d/dsigma = x, d/dtheta, d/dphi
        J[:, 0, 0] = r * st * cp
        J[:, 1, 0] = r * st * sp_
        J[:, 2, 0] = r * ct
        J[:, 0, 1] = r * ct * cp
        J[:, 1, 1] = r * ct * sp_
        J[:, 2, 1] = -r * st
        J[:, 0, 2] = -r * st * sp_
        J[:, 1, 2] = r * st * cp
        J[:, 2, 2] = 0.0
        return J


def _diff_ops(grid):
    """Sparse node-based central difference operators per curvilinear axis.

    Periodic in phi; one-sided (first-order) at the sigma and theta edges.
    Returned per axis, scaled by the inverse spacing.
    """
    Nr, Nth, Nph = grid.shape
    hs, ht, hp = grid.spacings

    def axis_op(N, h, periodic):
        rows, cols, vals = [], [], []
        for i in range(N):
            ip, im = i + 1, i - 1
            if periodic:
                ip %= N
                im %= N
                rows += [i, i]
                cols += [ip, im]
                vals += [0.5 / h, -0.5 / h]
            else:
                if i == 0:
                    rows += [i, i]
                    cols += [1, 0]
                    vals += [1.0 / h, -1.0 / h]
                elif i == N - 1:
                    rows += [i, i]
                    cols += [N - 1, N - 2]
                    vals += [1.0 / h, -1.0 / h]
                else:
                    rows += [i, i]
                    cols += [ip, im]
                    vals += [0.5 / h, -0.5 / h]
        return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    Ds = axis_op(Nr, hs, False)
    Dt = axis_op(Nth, ht, False)
    Dp = axis_op(Nph, hp, True)
    Ir, It, Ip = sp.identity(Nr), sp.identity(Nth), sp.identity(Nph)
    return (sp.kron(sp.kron(Ds, It), Ip).tocsr(),
            sp.kron(sp.kron(Ir, Dt), Ip).tocsr(),
            sp.kron(sp.kron(Ir, It), Dp).tocsr())


def grid_operators(grid, metric):
    """Volume weights and symmetric stiffness for the metric on a FULL3D grid.

    Returns (vol, K): vol[i] = sqrt(det g_curv) h^3 per node, and K sparse with
    zeta^T K zeta approximating the Dirichlet energy of the metric.
    """
    X = grid.points()
    J = grid.jacobians()
    G = metric.g(X)
    g_curv = np.einsum('pki,pkl,plj->pij', J, G, J)
    det = np.linalg.det(g_curv)
    ginv = np.linalg.inv(g_curv)
    hs, ht, hp = grid.spacings
    cell = hs * ht * hp
    vol = np.sqrt(det) * cell
    D = _diff_ops(grid)
    K = None
    for a in range(3):
        for b in range(3):
            w = ginv[:, a, b] * vol
            term = D[a].T @ sp.diags(w) @ D[b]
            K = term if K is None else K + term
    K = 0.5 * (K + K.T)
    return vol, K.tocsr()


def sphere_quadrature(n, order):
    """Product quadrature nodes/weights on the unit sphere S^{n-1}.

    Gauss-Legendre in the polar angles, trapezoid in the periodic longitude;
    supports n = 3 and n = 4.  Returns (U, w) with U of shape (Q, n) unit
    vectors and sum(w) = |S^{n-1}|.
    """
    order = int(order)
    if order < 8:
        raise ConfigError("quadrature order %d below the minimum 8" % order)
    nphi = 2 * order
    phi = np.arange(nphi) * 2.0 * np.pi / nphi
    wphi = np.full(nphi, 2.0 * np.pi / nphi)
    if n == 3:
        x, wx = np.polynomial.legendre.leggauss(order)
        st = np.sqrt(1.0 - x ** 2)
        U = np.empty((order * nphi, 3))
        W = np.empty(order * nphi)
        k = 0
        for i in range(order):
            U[k:k + nphi, 0] = st[i] * np.cos(phi)
            U[k:k + nphi, 1] = st[i] * np.sin(phi)
            U[k:k + nphi, 2] = x[i]
            W[k:k + nphi] = wx[i] * wphi
            k += nphi
        return U, W
    if n == 4:
        xc, wc = np.polynomial.legendre.leggauss(order)   # chi in [0, pi]
        chi = 0.5 * np.pi * (xc + 1.0)
        wchi = 0.5 * np.pi * wc * np.sin(chi) ** 2
        xt, wt = np.polynomial.legendre.leggauss(order)   # cos(theta)
        st = np.sqrt(1.0 - xt ** 2)
        pts, wts = [], []
        for i in range(order):
            for j in range(order):
                u = np.empty((nphi, 4))
                u[:, 0] = np.sin(chi[i]) * st[j] * np.cos(phi)
                u[:, 1] = np.sin(chi[i]) * st[j] * np.sin(phi)
                u[:, 2] = np.sin(chi[i]) * xt[j]
                u[:, 3] = np.cos(chi[i])
                pts.append(u)
                wts.append(np.full(nphi, wchi[i] * wt[j]) * wphi)
        return np.concatenate(pts), np.concatenate(wts)
    raise ConfigError("sphere quadrature implemented for n in {3, 4}, got n=%d" % n)


def sphere_area(n):
    """|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)."""
    from scipy.special import gamma
    return 2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0)
