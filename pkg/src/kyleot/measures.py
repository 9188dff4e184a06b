"""Discrete marginals and exact quadratic-cost optimal transport.

The solver is an exact transportation network simplex (see _kernels_numba);
couplings come back as basic solutions with at most n+m-1 atoms together with
exact dual potentials, so strong duality can be checked to solver precision.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from kyleot import grids
from kyleot.backend import get_kernels


class SolverError(RuntimeError):
    """Raised when the LP solver fails; carries iteration diagnostics."""

    def __init__(self, message, n_pivots=None, min_reduced_cost=None):
        super().__init__(message)
        self.n_pivots = n_pivots
        self.min_reduced_cost = min_reduced_cost


@dataclass
class DiscreteMeasure:
    """Weighted point cloud in R^n representing a marginal distribution."""

    points: np.ndarray  # (P, n)
    weights: np.ndarray  # (P,)
    grid: grids.TensorGrid | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.atleast_2d(self.points), dtype=np.float64)
        if self.points.shape[0] == 1 and self.points.shape[1] > 1 and self.weights.size > 1:
            self.points = self.points.T
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64).ravel()
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        s = self.weights.sum()
        if s <= 0:
            raise ValueError("weights must not be all zero")
        if abs(s - 1.0) > 1e-12:
            self.weights = self.weights / s

    @property
    def dim(self):
        return self.points.shape[1]

    def mean(self):
        return self.weights @ self.points

    def second_moment(self):
        """E||x||^2."""
        return float(self.weights @ np.einsum("ij,ij->i", self.points, self.points))

    def cov(self):
        mu = self.mean()
        c = (self.points - mu).T * self.weights @ (self.points - mu)
        return np.atleast_2d(c)

    def sample(self, rng, size):
        idx = rng.choice(self.points.shape[0], size=size, p=self.weights)
        return self.points[idx]


def build_gaussian_marginal(mean, cov, nodes, half_width_std=4.0):
    """Tensor-product grid discretization of N(mean, cov).

    `nodes` is the per-axis node count (int or sequence); the grid spans
    mean +/- half_width_std marginal standard deviations per axis. Weights are
    the joint density at the nodes, renormalized.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.size
    if cov.shape != (n, n):
        raise ValueError("cov shape does not match mean")
    if not np.allclose(cov, cov.T, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be symmetric")
    evals = np.linalg.eigvalsh(cov)
    if evals.min() <= 0:
        raise ValueError(f"covariance not positive definite (min eigenvalue {evals.min():.3e})")
    if np.isscalar(nodes) or np.ndim(nodes) == 0:
        nodes = [int(nodes)] * n
    if any(nn < 3 for nn in nodes):
        raise ValueError("node counts must be >= 3")
    hw = np.broadcast_to(np.asarray(half_width_std, dtype=float), (n,))
    stds = np.sqrt(np.diag(cov))
    axes = [grids.centered_axis(mean[a], hw[a] * stds[a], nodes[a]) for a in range(n)]
    grid = grids.TensorGrid(axes)
    pts = grid.points()
    prec = np.linalg.inv(cov)
    dx = pts - mean
    q = np.einsum("ij,jk,ik->i", dx, prec, dx)
    w = np.exp(-0.5 * (q - q.min()))
    return DiscreteMeasure(pts, w / w.sum(), grid=grid)


def build_value_marginal(values, weights):
    """Normalized measure on the given support (degenerate targets allowed)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    weights = np.asarray(weights, dtype=float).ravel()
    if values.shape[0] == 0:
        raise ValueError("empty support")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if weights.sum() <= 0:
        raise ValueError("weights must not be all zero")
    return DiscreteMeasure(values, weights / weights.sum())


@dataclass
class Coupling:
    """Optimal transport plan between two discrete measures."""

    plan: sp.coo_matrix
    source: DiscreteMeasure
    target: DiscreteMeasure
    cost: float  # transported quadratic cost
    dual_source: np.ndarray = field(repr=False, default=None)
    dual_target: np.ndarray = field(repr=False, default=None)
    lp_gap: float = 0.0
    min_reduced_cost: float = 0.0
    n_pivots: int = 0

    def marginal_errors(self):
        row = np.asarray(self.plan.sum(axis=1)).ravel() - self.source.weights
        col = np.asarray(self.plan.sum(axis=0)).ravel() - self.target.weights
        return np.abs(row).max(), np.abs(col).max()

    def inner_product(self):
        """E_pi[x . y], the coupling value of the correlation objective."""
        xs = self.source.points[self.plan.row]
        ys = self.target.points[self.plan.col]
        return float(np.sum(self.plan.data * np.einsum("ij,ij->i", xs, ys)))


@dataclass
class TransportMap:
    """Barycentric projection of a coupling: one image point per source node."""

    grid_points: np.ndarray
    images: np.ndarray
    grid: grids.TensorGrid | None = None
    undefined: np.ndarray = None  # mask of zero-weight source rows

    def monotonicity_defect(self, rng=None, n_pairs=2000):
        """Worst sampled violation of (img(a)-img(b)).(a-b) >= 0, scaled."""
        rng = rng or np.random.default_rng(0)
        ok = ~self.undefined if self.undefined is not None else np.ones(len(self.images), bool)
        idx = np.flatnonzero(ok)
        ii = rng.choice(idx, size=n_pairs)
        jj = rng.choice(idx, size=n_pairs)
        dp = np.einsum("ij,ij->i", self.images[ii] - self.images[jj],
                       self.grid_points[ii] - self.grid_points[jj])
        scale = (np.abs(self.images[idx]).max() + 1.0) * (np.abs(self.grid_points[idx]).max() + 1.0)
        return float(-min(dp.min(), 0.0) / scale)


def solve_quadratic_ot(source, target, eps_rel=1e-12, pivot_cap=None):
    """Exact optimizer of min sum pi_jk |x_j - y_k|^2 with given marginals."""
    if source.dim != target.dim:
        raise ValueError(f"dimension mismatch: source {source.dim} vs target {target.dim}")
    a = source.weights.copy()
    b = target.weights.copy()
    b *= a.sum() / b.sum()  # balance to machine precision
    n, m = a.size, b.size
    if pivot_cap is None:
        pivot_cap = 200 * (n + m) + 100_000
    ker = get_kernels()
    status, npiv, pj, pk, pf, u, v, min_rc, art_max = ker.network_simplex(
        source.points, target.points, a, b, eps_rel, pivot_cap)
    if status != 0:
        raise SolverError(
            f"network simplex did not converge within {pivot_cap} pivots "
            f"(min reduced cost {min_rc:.3e})", n_pivots=npiv, min_reduced_cost=min_rc)
    mass = a.sum()
    if art_max > 1e-9 * mass:
        raise SolverError(f"artificial residual {art_max:.3e} (infeasible marginals?)",
                          n_pivots=npiv)
    plan = sp.coo_matrix((pf, (pj, pk)), shape=(n, m))
    diff = source.points[pj] - target.points[pk]
    cost = float(np.sum(pf * np.einsum("ij,ij->i", diff, diff)))
    dual_val = float(a @ u + b @ v)
    return Coupling(plan=plan, source=source, target=target, cost=cost,
                    dual_source=u, dual_target=v,
                    lp_gap=abs(cost - dual_val), min_reduced_cost=float(min_rc),
                    n_pivots=int(npiv))


def extract_map(coupling):
    """Barycentric projection: image = row-weighted average of target points."""
    plan = coupling.plan.tocsr()
    row_mass = np.asarray(plan.sum(axis=1)).ravel()
    images = plan @ coupling.target.points
    undefined = row_mass <= 0
    safe = np.where(undefined, 1.0, row_mass)
    images = images / safe[:, None]
    images[undefined] = np.nan
    return TransportMap(grid_points=coupling.source.points, images=images,
                        grid=coupling.source.grid, undefined=undefined)


def wasserstein2(source, target, **kw):
    """W2 distance: sqrt of the optimal quadratic transport cost."""
    if source is target:
        return 0.0
    return float(np.sqrt(max(solve_quadratic_ot(source, target, **kw).cost, 0.0)))


def duality_report(coupling, potential=None, conjugate_table=None):
    """Primal/dual diagnostics for a solved coupling.

    Always reports the LP-side certificate (transport cost vs LP dual value).
    With a recovered potential and its conjugate table, also reports the
    Monge-Kantorovich pair: primal E_pi[v.y] against E_G[Gamma] + E_F[Gamma*],
    plus the Wasserstein-2 profit identity value
    (E||v||^2 + E||Z_T||^2 - W2^2) / 2.
    """
    src, tgt = coupling.source, coupling.target
    primal = coupling.inner_product()
    w2sq = coupling.cost
    identity_value = 0.5 * (src.second_moment() + tgt.second_moment() - w2sq)
    out = {
        "primal": primal,
        "lp_cost": coupling.cost,
        "lp_dual": coupling.cost - coupling.lp_gap,
        "lp_gap": coupling.lp_gap,
        "w2_identity_value": identity_value,
    }
    if potential is not None and conjugate_table is not None:
        e_gamma = float(src.weights @ potential.values.ravel())
        e_conj = float(tgt.weights @ conjugate_table.values)
        out["conjugate_sum"] = e_gamma + e_conj
        out["dual"] = e_conj
        out["gap"] = out["conjugate_sum"] - primal
    return out


# -- serialization -----------------------------------------------------------


def measure_to_csv(measure, path, config_hash=None):
    n = measure.dim
    header = ",".join([f"x{i}" for i in range(n)] + ["weight"])
    rows = np.column_stack([measure.points, measure.weights])
    _write_csv(path, header, rows, config_hash)


def coupling_to_csv(coupling, path, config_hash=None):
    plan = coupling.plan.tocoo()
    rows = np.column_stack([plan.row, plan.col, plan.data])
    _write_csv(path, "source_index,target_index,mass", rows, config_hash)


def _write_csv(path, header, rows, config_hash=None, fmt="%.17g"):
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write(header + "\n")
        np.savetxt(fh, rows, delimiter=",", fmt=fmt)
