"""Uniform tensor-product grids and finite-difference helpers."""

import numpy as np


class TensorGrid:
    """Uniform tensor-product grid in 1 or 2 dimensions.

    Axes are strictly increasing, uniformly spaced 1D arrays. Fields on the
    grid are arrays of shape `grid.shape` (C order, axis 0 first).
    """

    def __init__(self, axes):
        self.axes = tuple(np.ascontiguousarray(ax, dtype=np.float64) for ax in axes)
        for ax in self.axes:
            if ax.ndim != 1 or ax.size < 3:
                raise ValueError("each grid axis needs >= 3 nodes")
            d = np.diff(ax)
            if d.min() <= 0 or not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
                raise ValueError("grid axes must be uniform and increasing")
        self.ndim = len(self.axes)
        if self.ndim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        self.shape = tuple(ax.size for ax in self.axes)
        self.spacings = np.array([ax[1] - ax[0] for ax in self.axes])
        self.size = int(np.prod(self.shape))

    def points(self):
        """All nodes as a (size, ndim) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def origin_index(self):
        """Multi-index of the node closest to the origin."""
        return tuple(int(np.argmin(np.abs(ax))) for ax in self.axes)

    def contains(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return all(self.axes[a][0] <= y[a] <= self.axes[a][-1]
                   for a in range(self.ndim))

    def interior_mask(self, frac=0.8):
        """Boolean mask keeping the central `frac` of nodes per axis."""
        masks = []
        for nsz in self.shape:
            cut = int(np.floor(nsz * (1.0 - frac) / 2.0))
            m = np.zeros(nsz, dtype=bool)
            m[cut:nsz - cut] = True
            masks.append(m)
        if self.ndim == 1:
            return masks[0]
        return np.outer(masks[0], masks[1])

    def same_as(self, other):
        return (self.ndim == other.ndim and self.shape == other.shape
                and all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes)))


def centered_axis(center, half_width, n):
    return np.linspace(center - half_width, center + half_width, n)


def grad_axis(f, h, axis=0):
    """First derivative along one axis: central interior, one-sided edges."""
    g = np.empty_like(f)
    sl = [slice(None)] * f.ndim

    def ix(s):
        sl2 = list(sl)
        sl2[axis] = s
        return tuple(sl2)

    g[ix(slice(1, -1))] = (f[ix(slice(2, None))] - f[ix(slice(0, -2))]) / (2.0 * h)
    g[ix(0)] = (f[ix(1)] - f[ix(0)]) / h
    g[ix(-1)] = (f[ix(-1)] - f[ix(-2)]) / h
    return g


def gradient(f, grid):
    """Gradient field, shape f.shape + (ndim,)."""
    out = np.empty(f.shape + (grid.ndim,))
    for a in range(grid.ndim):
        out[..., a] = grad_axis(f, grid.spacings[a], axis=a)
    return out


def second_diff_axis(f, h, axis=0):
    """Second derivative along one axis (central; edges copied inward)."""
    g = np.empty_like(f)
    sl = [slice(None)] * f.ndim

    def ix(s):
        sl2 = list(sl)
        sl2[axis] = s
        return tuple(sl2)

    g[ix(slice(1, -1))] = (f[ix(slice(2, None))] - 2.0 * f[ix(slice(1, -1))]
                           + f[ix(slice(0, -2))]) / (h * h)
    g[ix(0)] = g[ix(1)]
    g[ix(-1)] = g[ix(-2)]
    return g


def hessian_from_gradient(gfield, grid):
    """Symmetrized Jacobian of a gradient field; shape + (ndim, ndim)."""
    n = grid.ndim
    out = np.empty(gfield.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(n):
            out[..., i, j] = grad_axis(gfield[..., i], grid.spacings[j], axis=j)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def trace_sigma_dot(mat_field, sigma):
    """tr(Sigma @ M) over a field of matrices M (last two axes)."""
    return np.einsum("ij,...ji->...", sigma, mat_field)
