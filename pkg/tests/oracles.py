"""Independent reference computations used by several test modules."""
import numpy as np


def matern_loop(A, B, length_scale=10.0):
    K = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            r = np.sqrt(3.0) * np.sqrt(np.sum((a - b) ** 2)) / length_scale
            K[i, j] = (1.0 + r) * np.exp(-r)
    return K


def dense_gpr(X, Y, x_star, error_scale=0.1, center=True, length_scale=10.0, gamma=None):
    """Predictive mean/covariance by assembling the full Kronecker system."""
    mu_x = X.mean(axis=0)
    sd_x = X.std(axis=0, ddof=1)
    Z = (X - mu_x) / sd_x
    z = (np.atleast_2d(x_star) - mu_x) / sd_x
    n_t, n_y = Y.shape
    G = np.cov(Y.T) if gamma is None else gamma
    D = np.diag(np.diag(G))
    K = np.kron(G, matern_loop(Z, Z, length_scale))
    E = np.kron(error_scale * D, np.eye(n_t))
    Ks = np.kron(G, matern_loop(z, Z, length_scale))
    offset = Y.mean(axis=0) if center else np.zeros(n_y)
    y = (Y - offset).T.reshape(-1)  # attribute-major
    mean = offset + Ks @ np.linalg.solve(K + E, y)
    cov = G + error_scale * D - Ks @ np.linalg.solve(K + E, Ks.T)
    return mean, cov


def grid_argmin(P, mu, n=401, rounds=3):
    """Brute-force minimum of (y-mu)^T P (y-mu) over y >= 0 in 2-D, refined grids."""
    sd = np.sqrt(np.linalg.eigvalsh(np.linalg.inv(P)).max())
    span = np.abs(mu).max() + 10.0 * sd + 1.0
    lo = np.zeros(2)
    hi = np.full(2, span)
    for _ in range(rounds):
        g0 = np.linspace(lo[0], hi[0], n)
        g1 = np.linspace(lo[1], hi[1], n)
        A, B = np.meshgrid(g0, g1, indexing="ij")
        d0, d1 = A - mu[0], B - mu[1]
        obj = P[0, 0] * d0 ** 2 + 2 * P[0, 1] * d0 * d1 + P[1, 1] * d1 ** 2
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        best = np.array([g0[i], g1[j]])
        step = (hi - lo) / (n - 1)
        lo = np.maximum(best - 3 * step, 0.0)
        hi = best + 3 * step
    return best
