"""Brenier potential recovery and its discrete convex conjugate.

The potential is reconstructed from the transport map by a linear
least-squares fit of grid values to the observed gradient field (a discrete
Poisson-style integration), normalized so the reference-weighted mean is zero,
then checked for discrete convexity. The conjugate is an exhaustive grid max.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import isotonic_regression

from kyleot import grids


class IntegrabilityError(RuntimeError):
    """Gradient field is too far from integrable (bad OT solve)."""


@dataclass
class BrenierPotential:
    grid: grids.TensorGrid
    values: np.ndarray  # grid-shaped
    gradient: np.ndarray  # grid shape + (n,), the transport map
    normalization_offset: float = 0.0
    curl_rel: float = 0.0
    fit_rms: float = 0.0
    convexity_fix: float = 0.0

    @property
    def ndim(self):
        return self.grid.ndim

    def min_second_difference(self):
        """Most negative axis-aligned second difference of the values."""
        worst = np.inf
        for a in range(self.grid.ndim):
            h = self.grid.spacings[a]
            d2 = grids.second_diff_axis(self.values, h, axis=a)
            worst = min(worst, float(d2.min()) * h * h)
        return worst

    def value_at_origin(self):
        return float(self.values[self.grid.origin_index()])


@dataclass
class ConjugateTable:
    value_points: np.ndarray  # (M, n)
    values: np.ndarray  # (M,)
    argmax_flat: np.ndarray  # (M,) flat grid index of the maximizer
    boundary_flag: np.ndarray  # (M,) maximizer on the grid boundary


def _diff_operator(grid):
    """Sparse first-derivative operators (central interior, one-sided ends)."""
    ops = []
    eyes = [sp.identity(nsz, format="csr") for nsz in grid.shape]
    for a in range(grid.ndim):
        nsz = grid.shape[a]
        h = grid.spacings[a]
        d = sp.lil_matrix((nsz, nsz))
        for i in range(1, nsz - 1):
            d[i, i - 1] = -0.5 / h
            d[i, i + 1] = 0.5 / h
        d[0, 0] = -1.0 / h
        d[0, 1] = 1.0 / h
        d[nsz - 1, nsz - 2] = -1.0 / h
        d[nsz - 1, nsz - 1] = 1.0 / h
        d = d.tocsr()
        if grid.ndim == 1:
            ops.append(d)
        else:
            ops.append(sp.kron(d, eyes[1], format="csr") if a == 0
                       else sp.kron(eyes[0], d, format="csr"))
    return ops


def _pava_convexify(values, grid):
    """One isotonic pass per axis on the first differences; returns max |change|."""
    vals = values
    worst = 0.0
    for a in range(grid.ndim):
        moved = np.moveaxis(vals, a, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        for row in flat:
            d = np.diff(row)
            res = isotonic_regression(d)
            newrow = row[0] + np.concatenate([[0.0], np.cumsum(res.x)])
            newrow += row.mean() - newrow.mean()
            worst = max(worst, float(np.abs(newrow - row).max()))
            row[:] = newrow
        vals = np.moveaxis(flat.reshape(moved.shape), -1, a)
    return vals, worst


def recover_potential(tmap, reference, curl_tol=0.5, convexity_tol=None):
    """Least-squares integration of the map into a normalized potential.

    The reference measure fixes the additive constant via a zero weighted
    mean. A large relative curl (antisymmetric part of the map Jacobian)
    signals a non-integrable field and raises IntegrabilityError.
    """
    grid = tmap.grid
    if grid is None:
        raise ValueError("transport map must carry a tensor grid")
    n = grid.ndim
    g = tmap.images.reshape(grid.shape + (n,))
    if tmap.undefined is not None and tmap.undefined.any():
        raise ValueError(f"{tmap.undefined.sum()} zero-weight source rows have no image")

    if n == 2:
        d_gx_dy = grids.grad_axis(g[..., 0], grid.spacings[1], axis=1)
        d_gy_dx = grids.grad_axis(g[..., 1], grid.spacings[0], axis=0)
        curl = d_gx_dy - d_gy_dx
        sym = 0.5 * (np.abs(d_gx_dy) + np.abs(d_gy_dx))
        curl_rel = float(np.median(np.abs(curl)) / (np.median(sym) + 1e-300))
        if curl_rel > curl_tol:
            raise IntegrabilityError(
                f"median relative curl {curl_rel:.3f} exceeds {curl_tol}; "
                "the coupling does not look like the graph of a gradient")
    else:
        curl_rel = 0.0

    ops = _diff_operator(grid)
    D = sp.vstack(ops, format="csr")
    rhs = np.concatenate([g[..., a].ravel() for a in range(n)])
    # normal equations with one pinned node to remove the constant nullspace
    A = (D.T @ D).tolil()
    b = D.T @ rhs
    A[0, :] = 0.0
    A[0, 0] = 1.0
    b[0] = 0.0
    vals = spla.spsolve(A.tocsr(), b).reshape(grid.shape)
    fit_rms = float(np.sqrt(np.mean((D @ vals.ravel() - rhs) ** 2)))

    scale = float(np.abs(vals).max()) + 1.0
    if convexity_tol is None:
        convexity_tol = 1e-8 * scale
    fix = 0.0
    worst = _min_second_diff(vals, grid)
    if worst < -convexity_tol:
        vals, fix = _pava_convexify(vals, grid)

    w = reference.weights
    if w.size != vals.size:
        raise ValueError("reference measure does not live on the map's grid")
    offset = float(w @ vals.ravel())
    vals = vals - offset
    return BrenierPotential(grid=grid, values=vals, gradient=g,
                            normalization_offset=offset, curl_rel=curl_rel,
                            fit_rms=fit_rms, convexity_fix=fix)


def _min_second_diff(vals, grid):
    worst = np.inf
    for a in range(grid.ndim):
        h = grid.spacings[a]
        d2 = grids.second_diff_axis(vals, h, axis=a)
        worst = min(worst, float(d2.min()) * h * h)
    return worst


def potential_from_values(grid, values, gradient, reference=None):
    """Wrap closed-form values/map (already on the grid) as a potential."""
    vals = np.asarray(values, dtype=float).reshape(grid.shape)
    g = np.asarray(gradient, dtype=float).reshape(grid.shape + (grid.ndim,))
    offset = 0.0
    if reference is not None:
        offset = float(reference.weights @ vals.ravel())
        vals = vals - offset
    return BrenierPotential(grid=grid, values=vals, gradient=g,
                            normalization_offset=offset)


def conjugate(potential, value_points, chunk=4096):
    """Gamma*(v) = max over grid nodes of v.y - Gamma(y), per value point."""
    grid = potential.grid
    pts = grid.points()
    gam = potential.values.ravel()
    vp = np.atleast_2d(np.asarray(value_points, dtype=float))
    if vp.shape[1] != grid.ndim:
        vp = vp.reshape(-1, grid.ndim)
    m = vp.shape[0]
    vals = np.empty(m)
    argm = np.empty(m, dtype=np.int64)
    for s in range(0, m, chunk):
        e = min(s + chunk, m)
        scores = vp[s:e] @ pts.T - gam
        idx = np.argmax(scores, axis=1)
        vals[s:e] = scores[np.arange(e - s), idx]
        argm[s:e] = idx
    bflag = np.zeros(m, dtype=bool)
    multi = np.unravel_index(argm, grid.shape)
    for a in range(grid.ndim):
        bflag |= (multi[a] == 0) | (multi[a] == grid.shape[a] - 1)
    return ConjugateTable(value_points=vp, values=vals, argmax_flat=argm,
                          boundary_flag=bflag)


def expected_informed_profit(conj, value_measure):
    """E_F[Gamma*(v)], the unconditional informed-trader profit."""
    return float(value_measure.weights @ conj.values)
