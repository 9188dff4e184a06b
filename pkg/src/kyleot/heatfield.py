"""Backward Gaussian-kernel dynamic programming on the space-time grid.

One truncated, moment-matched transition patch is built per (grid, dt) and
reused at every backward step; boundary rows are renormalized by the in-grid
mass. The propagated quantities are the potential slice, the pricing rule
(its gradient) and, by symmetric differencing, the price-impact matrix field.
"""

from dataclasses import dataclass, field

import numpy as np

from kyleot import grids
from kyleot.backend import get_kernels


@dataclass
class TransitionKernel:
    """One-step transition operator for increments N(0, dt * Sigma)."""

    dt: float
    sigma: np.ndarray
    grid: grids.TensorGrid
    patch: np.ndarray  # (2c+1,) or (2c1+1, 2c2+1) weights, sum = 1
    den: np.ndarray  # grid-shaped in-grid mass for boundary renormalization
    truncation: float

    def apply(self, f, out=None):
        """E[f(y + Z_dt)] on the grid, boundary rows renormalized."""
        ker = get_kernels()
        if out is None:
            out = np.empty_like(f)
        if self.grid.ndim == 1:
            ker.apply_patch_1d(f, self.patch, out)
        else:
            ker.apply_patch_2d(f, self.patch, out)
        out /= self.den
        return out

    def row(self, multi_index):
        """Materialize one row: (neighbor flat indices, probabilities)."""
        shape = self.grid.shape
        if self.grid.ndim == 1:
            (i,) = multi_index if np.ndim(multi_index) else (multi_index,)
            c = (self.patch.size - 1) // 2
            offs = np.arange(-c, c + 1)
            nb = i + offs
            ok = (nb >= 0) & (nb < shape[0])
            probs = self.patch[ok] / self.patch[ok].sum()
            return nb[ok], probs
        i, j = multi_index
        c1 = (self.patch.shape[0] - 1) // 2
        c2 = (self.patch.shape[1] - 1) // 2
        o1 = np.arange(-c1, c1 + 1)[:, None]
        o2 = np.arange(-c2, c2 + 1)[None, :]
        ii = i + o1 + 0 * o2
        jj = j + 0 * o1 + o2
        ok = (ii >= 0) & (ii < shape[0]) & (jj >= 0) & (jj < shape[1])
        probs = self.patch[ok] / self.patch[ok].sum()
        return (ii[ok] * shape[1] + jj[ok]), probs

    def moment_errors(self):
        """(|mean|, max rel cov error) of the interior stencil."""
        nd = self.grid.ndim
        if nd == 1:
            c = (self.patch.size - 1) // 2
            d = np.arange(-c, c + 1) * self.grid.spacings[0]
            m1 = self.patch @ d
            m2 = self.patch @ d**2
            tgt = self.dt * self.sigma[0, 0]
            return abs(m1) / np.sqrt(tgt), abs(m2 - tgt) / tgt
        c1 = (self.patch.shape[0] - 1) // 2
        c2 = (self.patch.shape[1] - 1) // 2
        d1 = (np.arange(-c1, c1 + 1) * self.grid.spacings[0])[:, None]
        d2 = (np.arange(-c2, c2 + 1) * self.grid.spacings[1])[None, :]
        m1 = np.array([np.sum(self.patch * d1), np.sum(self.patch * d2)])
        cov = np.array([[np.sum(self.patch * d1 * d1), np.sum(self.patch * d1 * d2)],
                        [np.sum(self.patch * d1 * d2), np.sum(self.patch * d2 * d2)]])
        tgt = self.dt * self.sigma
        return (np.abs(m1).max() / np.sqrt(np.diag(tgt)).min(),
                np.abs(cov - tgt).max() / np.abs(tgt).max())


def build_kernel(sigma, dt, grid, truncation=6.0, min_nodes_per_std=1.8):
    """Truncated-Gaussian transition patch for increments N(0, dt*Sigma).

    Requires the grid to resolve the one-step standard deviation with at
    least `min_nodes_per_std` nodes per axis (nominally 2; 10% slack admits
    the N=151 / dt=1/100 defaults).
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = grid.ndim
    if sigma.shape != (n, n):
        raise ValueError("Sigma shape does not match grid dimension")
    step_std = np.sqrt(np.diag(sigma) * dt)
    for a in range(n):
        required = step_std[a] / min_nodes_per_std
        if grid.spacings[a] > required:
            raise ValueError(
                f"grid too coarse for dt={dt}: axis {a} spacing "
                f"{grid.spacings[a]:.4g} > required {required:.4g} "
                f"({min_nodes_per_std} nodes per one-step std)")
    half = [int(np.ceil(truncation * step_std[a] / grid.spacings[a])) for a in range(n)]
    if n == 1:
        d = np.arange(-half[0], half[0] + 1) * grid.spacings[0]
        w = np.exp(-0.5 * d * d / (dt * sigma[0, 0]))
        patch = w / w.sum()
    else:
        prec = np.linalg.inv(dt * sigma)
        d1 = (np.arange(-half[0], half[0] + 1) * grid.spacings[0])[:, None]
        d2 = (np.arange(-half[1], half[1] + 1) * grid.spacings[1])[None, :]
        q = prec[0, 0] * d1 * d1 + 2.0 * prec[0, 1] * d1 * d2 + prec[1, 1] * d2 * d2
        w = np.exp(-0.5 * q)
        patch = w / w.sum()
    ker = TransitionKernel(dt=dt, sigma=sigma, grid=grid, patch=patch,
                           den=np.ones(grid.shape), truncation=truncation)
    mean_err, cov_err = ker.moment_errors()
    if mean_err > 1e-6 or cov_err > 1e-6:
        raise ValueError(f"stencil moments off: mean {mean_err:.2e}, cov {cov_err:.2e}")
    den = ker.apply(np.ones(grid.shape))
    ker.den = den
    return ker


@dataclass
class SpaceTimeField:
    """Time-indexed grids of Gamma(t,.), H(t,.) and Lambda(t,.) = Hessian."""

    grid: grids.TensorGrid
    sigma: np.ndarray
    times: np.ndarray  # (K+1,), t_k = k dt, last = T
    gamma: np.ndarray  # (K+1, *shape)
    H: np.ndarray  # (K+1, *shape, n)
    lam: np.ndarray  # (K+1, *shape, n, n)
    consistency: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self):
        return float(self.times[-1])

    def time_index(self, t):
        k = int(round(t / self.dt))
        if not (0 <= k < len(self.times)) or abs(self.times[k] - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"t={t} is not on the time grid")
        return k

    def lam_trace_sigma(self):
        """tr(Sigma Lambda(t,y)) for all slices, shape (K+1, *grid shape)."""
        return grids.trace_sigma_dot(self.lam, self.sigma)

    def interp_H(self, t, y):
        k = self.time_index(t)
        return _interp_vec(self.H[k], self.grid, y)

    def interp_lam(self, t, y):
        k = self.time_index(t)
        n = self.grid.ndim
        flat = self.lam[k].reshape(self.grid.shape + (n * n,))
        return _interp_vec(flat, self.grid, y).reshape(y.shape[0], n, n)


def _interp_vec(F, grid, y):
    """Multilinear interpolation of a field with trailing component axes."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    idx = []
    frs = []
    for a in range(grid.ndim):
        ax = grid.axes[a]
        t = (y[:, a] - ax[0]) / grid.spacings[a]
        i = np.floor(t).astype(np.int64)
        fr = t - i
        fr[i < 0] = 0.0
        fr[i >= ax.size - 1] = 1.0
        i = np.clip(i, 0, ax.size - 2)
        idx.append(i)
        frs.append(fr)
    if grid.ndim == 1:
        i, fr = idx[0], frs[0][:, None]
        return F[i] * (1 - fr) + F[i + 1] * fr
    i, j = idx
    fa = frs[0][..., None]
    fb = frs[1][..., None]
    return ((1 - fa) * ((1 - fb) * F[i, j] + fb * F[i, j + 1])
            + fa * ((1 - fb) * F[i + 1, j] + fb * F[i + 1, j + 1]))


def propagate(pot, kernel, n_steps, check_consistency=True):
    """Fill all slices backward from the terminal potential data.

    H is propagated directly (component-wise); at each slice it is compared
    with the central difference of the propagated Gamma (the smoothed-map
    identity of the pricing rule). Disagreement beyond 10x the expected
    discretization bound raises a diagnostic failure.
    """
    grid = pot.grid
    n = grid.ndim
    dt = kernel.dt
    K = int(n_steps)
    times = np.arange(K + 1) * dt
    shape = grid.shape
    gamma = np.empty((K + 1,) + shape)
    H = np.empty((K + 1,) + shape + (n,))
    lam = np.empty((K + 1,) + shape + (n, n))
    gamma[K] = pot.values
    H[K] = pot.gradient
    lam[K] = grids.hessian_from_gradient(H[K], grid)

    interior = grid.interior_mask(0.8)
    step_std = np.sqrt(np.diag(kernel.sigma) * dt)
    worst_rel = 0.0
    worst_bound = 0.0
    for k in range(K - 1, -1, -1):
        kernel.apply(gamma[k + 1], out=gamma[k])
        for a in range(n):
            kernel.apply(H[k + 1, ..., a], out=H[k, ..., a])
        lam[k] = grids.hessian_from_gradient(H[k], grid)
        if check_consistency:
            hdiff = grids.gradient(gamma[k], grid)
            err = np.abs(H[k] - hdiff)[interior].max()
            hscale = max(np.abs(H[k][interior]).max(), 1e-30)
            rel = err / hscale
            # central-difference bound: (h / smoothing width)^2 / 6 per axis
            width = np.sqrt(kernel.sigma.diagonal() * (times[K] - times[k]))
            bound = max(((grid.spacings / width) ** 2).max() / 6.0, 1e-12)
            if rel > 10.0 * bound:
                raise RuntimeError(
                    f"H-propagation vs dGamma mismatch at t={times[k]:.4f}: "
                    f"rel {rel:.3e} > 10 x expected {bound:.3e}")
            if rel / bound > worst_rel / max(worst_bound, 1e-300):
                worst_rel, worst_bound = rel, bound
    cons = {"worst_rel": worst_rel, "bound_at_worst": worst_bound}
    return SpaceTimeField(grid=grid, sigma=kernel.sigma, times=times,
                          gamma=gamma, H=H, lam=lam, consistency=cons)


def heat_residual(fieldst, sigma=None, interior_frac=0.8, t_frac=(0.1, 0.9)):
    """Finite-difference heat-equation residual of the pricing rule.

    Reports, per asset, sup and mean of |dH_i/dt + 0.5 tr(Sigma grad^2 H_i)|
    over interior nodes and times, and the same normalized by the sup of the
    individual term magnitudes over that region ("relative").
    """
    sigma = fieldst.sigma if sigma is None else np.atleast_2d(sigma)
    grid = fieldst.grid
    n = grid.ndim
    dt = fieldst.dt
    K = len(fieldst.times) - 1
    kmin = max(1, int(np.ceil(t_frac[0] * K)))
    kmax = min(K - 1, int(np.floor(t_frac[1] * K)))
    mask = grid.interior_mask(interior_frac)
    sup_res = 0.0
    sup_terms = 0.0
    acc = []
    for k in range(kmin, kmax + 1):
        ht = (fieldst.H[k + 1] - fieldst.H[k - 1]) / (2.0 * dt)
        for i in range(n):
            hess = grids.hessian_from_gradient(
                grids.gradient(fieldst.H[k, ..., i], grid), grid)
            lap = 0.5 * grids.trace_sigma_dot(hess, sigma)
            res = ht[..., i] + lap
            sup_res = max(sup_res, np.abs(res[mask]).max())
            sup_terms = max(sup_terms, (np.abs(ht[..., i]) + np.abs(lap))[mask].max())
            acc.append(np.abs(res[mask]).mean())
    rel = sup_res / sup_terms if sup_terms > 1e-300 else 0.0
    return {"sup": sup_res, "mean": float(np.mean(acc)), "relative": rel,
            "term_scale": sup_terms}


def bidask_rate(fieldst, sigma, t, y):
    """tr(Sigma Lambda(t,y)) by multilinear interpolation; clamps off-grid."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    lam = fieldst.interp_lam(t, y)
    val = np.einsum("ij,pji->p", np.atleast_2d(sigma), lam)
    clamped = ~np.array([fieldst.grid.contains(row) for row in y])
    return (val[0], bool(clamped[0])) if val.size == 1 else (val, clamped)
