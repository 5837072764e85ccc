"""Contraction-kernel identities on exact polynomial metric jets.

The two curvature routes (divergence-form scalar and Ricci trace) must agree
to roundoff whenever they see the same exact (g, dg, ddg) triple; quadratic
metrics make that triple exact with no differencing involved.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from masskit.backend import get_kernels

K = get_kernels("python")


def quadratic_jet(A, B, C, X):
    """Exact (g, dg, ddg) of g(x) = A + B.x + x.C.x/2 at points X."""
    N, n = X.shape
    g = (A[None] + np.einsum('kij,pk->pij', B, X)
         + 0.5 * np.einsum('klij,pk,pl->pij', C, X, X))
    dg = B[None] + np.einsum('klij,pl->pkij', C, X)
    ddg = np.broadcast_to(C, (N,) + C.shape).copy()
    return g, dg, ddg


def make_coeffs(n, seed, scale=0.08):
    rng = np.random.default_rng(seed)
    A = np.eye(n) + 0.1 * _sym(rng.standard_normal((n, n)))
    B = scale * _symlast(rng.standard_normal((n, n, n)))
    C = scale * _symlast(rng.standard_normal((n, n, n, n)))
    C = 0.5 * (C + np.swapaxes(C, 0, 1))
    return A, B, C


def _sym(M):
    return 0.5 * (M + M.T)


def _symlast(T):
    return 0.5 * (T + np.swapaxes(T, -1, -2))


def test_constant_metric_is_flat():
    rng = np.random.default_rng(3)
    n = 3
    A = np.eye(n) + 0.3 * _sym(rng.standard_normal((n, n)))
    X = rng.standard_normal((5, n))
    g, dg, ddg = quadratic_jet(A, np.zeros((n, n, n)), np.zeros((n, n, n, n)), X)
    assert np.abs(K.scalar_curvature(g, dg, ddg)).max() < 1e-14
    assert np.abs(K.ricci_tensor(g, dg, ddg)).max() < 1e-14


@pytest.mark.parametrize("n,seed", [(3, 0), (3, 1), (4, 2), (4, 7)])
def test_scalar_equals_ricci_trace(n, seed):
    A, B, C = make_coeffs(n, seed)
    X = np.random.default_rng(seed + 100).standard_normal((6, n))
    g, dg, ddg = quadratic_jet(A, B, C, X)
    R = K.scalar_curvature(g, dg, ddg)
    Ric = K.ricci_tensor(g, dg, ddg)
    tr = np.einsum('pij,pij->p', np.linalg.inv(g), Ric)
    assert np.abs(R - tr).max() < 1e-12 * (1.0 + np.abs(R).max())


def test_ricci_symmetry():
    A, B, C = make_coeffs(3, 5)
    X = np.random.default_rng(9).standard_normal((4, 3))
    g, dg, ddg = quadratic_jet(A, B, C, X)
    Ric = K.ricci_tensor(g, dg, ddg)
    assert np.abs(Ric - np.swapaxes(Ric, -1, -2)).max() < 1e-13


def test_christoffel_recovers_metric_derivative():
    # G1[i,j,k] = (d_i g_jk + d_j g_ik - d_k g_ij)/2, so swapping the outer
    # slot pair and adding cancels everything but one term:
    # G1[i,j,k] + G1[k,j,i] = d_j g_ik
    A, B, C = make_coeffs(3, 11)
    X = np.random.default_rng(13).standard_normal((4, 3))
    g, dg, ddg = quadratic_jet(A, B, C, X)
    G1, _ = K.christoffel_first(g, dg)
    lhs = G1 + np.einsum('pkji->pijk', G1)
    rhs = np.einsum('pjik->pijk', dg)
    assert np.abs(lhs - rhs).max() < 1e-13


def test_round_sphere_exact_jet():
    # stereographic factor phi = sqrt(2)/sqrt(1+r^2), g = phi^4 delta, R = 6
    n = 3
    X = np.array([[0.3, 0.4, -0.2], [1.0, -1.0, 0.5], [0.0, 0.0, 0.1]])
    r2 = (X ** 2).sum(axis=1)
    N = X.shape[0]
    s = 1.0 + r2
    f = 4.0 / s ** 2
    df = -16.0 * X / s[:, None] ** 3
    ddf = (-16.0 * np.eye(n)[None] / s[:, None, None] ** 3
           + 96.0 * X[:, :, None] * X[:, None, :] / s[:, None, None] ** 4)
    eye = np.eye(n)
    g = f[:, None, None] * eye[None]
    dg = df[:, :, None, None] * eye[None, None]
    ddg = ddf[:, :, :, None, None] * eye[None, None, None]
    R = K.scalar_curvature(g, dg, ddg)
    assert np.abs(R - 6.0).max() < 1e-12
    Ric = K.ricci_tensor(g, dg, ddg)
    # Einstein: Ric = 2 g for the unit round sphere in three dimensions
    assert np.abs(Ric - 2.0 * g).max() < 1e-12


@settings(max_examples=25, derandomize=True, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.sampled_from([3, 4]))
def test_trace_identity_property(seed, n):
    A, B, C = make_coeffs(n, seed, scale=0.05)
    X = np.random.default_rng(seed ^ 0xABCD).standard_normal((3, n))
    g, dg, ddg = quadratic_jet(A, B, C, X)
    R = K.scalar_curvature(g, dg, ddg)
    Ric = K.ricci_tensor(g, dg, ddg)
    tr = np.einsum('pij,pij->p', np.linalg.inv(g), Ric)
    scale = 1.0 + np.abs(R).max()
    assert np.abs(R - tr).max() < 1e-10 * scale
