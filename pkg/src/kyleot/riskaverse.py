"""Backward recursion for phi(t,y) (log dealer-pricing density tilt).

e^phi is propagated with the one-step multiplicative first-order factor
(1 + alpha dt tr(Sigma Lambda)) in log-stabilized form; its gradient is the
vector of prices of risk driving the physical order-flow dynamics
dY = Sigma grad_phi dt + dY_hat.
"""

from dataclasses import dataclass

import numpy as np

from kyleot import grids
from kyleot.heatfield import _interp_vec


@dataclass
class PhiField:
    grid: grids.TensorGrid
    times: np.ndarray
    phi: np.ndarray  # (K+1, *shape)
    grad_phi: np.ndarray  # (K+1, *shape, n)
    alpha: float
    beta: np.ndarray

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def interp_grad(self, t, y):
        k = int(round(t / self.dt))
        return _interp_vec(self.grad_phi[k], self.grid, np.atleast_2d(y))


def solve_phi(fieldst, kernel, alpha, beta):
    """Backward e^phi recursion on the completed pricing field.

    Terminal condition phi(T,z) = -alpha (z-beta)' dGamma(z) + alpha Gamma(z)
    exactly at nodes; each step multiplies by (1 + alpha dt tr(Sigma Lambda))
    at the current slice and applies the transition kernel, with a per-slice
    log offset to keep e^phi in range.
    """
    grid = fieldst.grid
    n = grid.ndim
    if not grid.same_as(kernel.grid):
        raise ValueError("kernel and field grids differ")
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,)).astype(float)
    K = len(fieldst.times) - 1
    dt = fieldst.dt
    pts = grid.points().reshape(grid.shape + (n,))
    g_term = fieldst.H[K]
    phi = np.empty_like(fieldst.gamma)
    phi[K] = (-alpha * np.einsum("...i,...i->...", pts - beta, g_term)
              + alpha * fieldst.gamma[K])
    lam_tr = fieldst.lam_trace_sigma()
    work = np.empty(grid.shape)
    for k in range(K - 1, -1, -1):
        off = phi[k + 1].max()
        np.exp(phi[k + 1] - off, out=work)
        kernel.apply(work, out=work)
        factor = 1.0 + alpha * dt * lam_tr[k]
        if factor.min() <= 0.0:
            raise FloatingPointError(
                f"first-order factor nonpositive at t={fieldst.times[k]:.4f}; "
                "alpha too large for this dt")
        np.multiply(work, factor, out=work)
        if not np.all(np.isfinite(work)) or work.min() <= 0.0:
            raise FloatingPointError(f"e^phi propagation degenerate at slice {k}")
        phi[k] = np.log(work) + off
    grad = np.empty(phi.shape + (n,))
    for k in range(K + 1):
        grad[k] = grids.gradient(phi[k], grid)
    return PhiField(grid=grid, times=fieldst.times.copy(), phi=phi,
                    grad_phi=grad, alpha=alpha, beta=beta)


def pde_residual(phif, fieldst, sigma=None, interior_frac=0.8, t_frac=(0.1, 0.9)):
    """Finite-difference residual of
    phi_t + 0.5 tr(Sigma grad^2 phi) + 0.5 grad_phi' Sigma grad_phi
    + alpha tr(Sigma grad^2 Gamma) over interior nodes/times."""
    sigma = fieldst.sigma if sigma is None else np.atleast_2d(sigma)
    grid = phif.grid
    dt = phif.dt
    K = len(phif.times) - 1
    kmin = max(1, int(np.ceil(t_frac[0] * K)))
    kmax = min(K - 1, int(np.floor(t_frac[1] * K)))
    mask = grid.interior_mask(interior_frac)
    lam_tr = fieldst.lam_trace_sigma()
    sup_res = 0.0
    sup_terms = 0.0
    means = []
    for k in range(kmin, kmax + 1):
        pt = (phif.phi[k + 1] - phif.phi[k - 1]) / (2.0 * dt)
        hess = grids.hessian_from_gradient(grids.gradient(phif.phi[k], grid), grid)
        lap = 0.5 * grids.trace_sigma_dot(hess, sigma)
        gp = phif.grad_phi[k]
        quad = 0.5 * np.einsum("...i,ij,...j->...", gp, sigma, gp)
        src = phif.alpha * lam_tr[k]
        res = pt + lap + quad + src
        sup_res = max(sup_res, np.abs(res[mask]).max())
        sup_terms = max(sup_terms,
                        (np.abs(pt) + np.abs(lap) + np.abs(quad) + np.abs(src))[mask].max())
        means.append(np.abs(res[mask]).mean())
    rel = sup_res / sup_terms if sup_terms > 1e-300 else 0.0
    return {"sup": sup_res, "mean": float(np.mean(means)), "relative": rel,
            "term_scale": sup_terms}


def risk_premium(phif, fieldst, sigma, t, y):
    """Lambda(t,y) Sigma grad_phi(t,y): instantaneous price drifts under P.

    Divide each element by its price for expected rates of return. Off-grid
    points are clamped (flag returned alongside).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    lam = fieldst.interp_lam(t, y)
    gp = phif.interp_grad(t, y)
    out = np.einsum("pij,jk,pk->pi", lam, np.atleast_2d(sigma), gp)
    clamped = np.array([not phif.grid.contains(row) for row in y])
    if y.shape[0] == 1:
        return out[0], bool(clamped[0])
    return out, clamped


def sdf_realization(wealth, mean_exp_neg_alpha_wealth, alpha):
    """Realized stochastic discount factor e^{-alpha w} / E[e^{-alpha w}]."""
    if mean_exp_neg_alpha_wealth <= 0:
        raise ValueError("mean term must be positive")
    return np.exp(-alpha * np.asarray(wealth, dtype=float)) / mean_exp_neg_alpha_wealth


def physical_drift_field(phif, sigma):
    """Sigma grad_phi on all slices: the Euler drift of Y under P."""
    return np.einsum("ij,t...j->t...i", np.atleast_2d(sigma), phif.grad_phi)
