"""Path simulation engines and profit/wealth accounting.

Three modes share one kernel per dimension: risk-neutral Brownian order flow,
the informed trader's exact Brownian bridge (Y_T hits the target by
construction), and physical-measure Euler dynamics with nearest-grid-node
drift lookup. Prices are always the field lookup P_k = H(t_k, Y_k); the
bid-ask bracket accumulates tr(Sigma Lambda(t,Y_t)) dt from the field, with
the realized sum of dP'dY kept alongside for cross-checks.

Randomness: one counter-based Philox generator per batch; all increments are
pre-drawn, so results are reproducible bit-for-bit per (seed, config).
"""

from dataclasses import dataclass, field as dfield

import numpy as np

from kyleot.backend import get_kernels

RISK_NEUTRAL, PHYSICAL, BRIDGE = 0, 1, 2
_MODE_NAMES = {"risk_neutral": RISK_NEUTRAL, "physical": PHYSICAL, "bridge": BRIDGE}


@dataclass
class SimConfig:
    n_paths: int = 10_000
    seed: int = 2024
    beta: np.ndarray | float = 0.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")


@dataclass
class SimBatch:
    """One batch of simulated paths plus running accounting sums."""

    mode: int
    times: np.ndarray
    Y: np.ndarray  # (paths, K+1, n)
    P: np.ndarray  # (paths, K+1, n)
    bracket: np.ndarray  # model bracket: sum tr(Sigma Lam) dt
    bracket_real: np.ndarray  # realized sum dP'dY
    sum_pdy: np.ndarray  # sum P_k' dY_k
    informed: np.ndarray  # bridge mode: sum (v - P_k)' dX_k
    exited: np.ndarray
    v: np.ndarray  # (paths, n) realized asset values
    beta: np.ndarray
    zeta: np.ndarray | None = None

    @property
    def n_paths(self):
        return self.Y.shape[0]

    @property
    def y_terminal(self):
        return self.Y[:, -1, :]

    @property
    def p_terminal(self):
        return self.P[:, -1, :]

    def trader_profit_total(self):
        """Combined informed + noise profit: sum (v-P)'dY - <P,Y>."""
        return np.einsum("pi,pi->p", self.v, self.y_terminal) - self.sum_pdy - self.bracket

    def dealer_wealth_path(self):
        """Path-consistent dealer wealth: beta'v minus the traders' total."""
        return self.v @ self.beta - self.trader_profit_total()

    def noise_profit(self):
        return self.trader_profit_total() - self.informed

    def accounting_gap(self):
        """informed + noise + dealer - beta'v; identically 0 by construction."""
        return (self.informed + self.noise_profit() + self.dealer_wealth_path()
                - self.v @ self.beta)

    def quadratic_variation(self):
        """Realized terminal QV matrix of P, averaged across paths."""
        dp = np.diff(self.P, axis=1)
        return np.einsum("pki,pkj->ij", dp, dp) / self.n_paths


def _draw_normals(seed, n_paths, steps, n):
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.standard_normal((n_paths, steps, n)), rng


def _run(mode, fieldst, sigma, cfg, zeta=None, v=None, drift=None):
    grid = fieldst.grid
    n = grid.ndim
    steps = len(fieldst.times) - 1
    dt = fieldst.dt
    dZ, _ = _draw_normals(cfg.seed, cfg.n_paths, steps, n)
    chol = np.linalg.cholesky(np.atleast_2d(sigma))
    lam_tr = np.ascontiguousarray(fieldst.lam_trace_sigma())
    H = np.ascontiguousarray(fieldst.H)
    npaths = cfg.n_paths
    Y = np.empty((npaths, steps + 1, n))
    P = np.empty((npaths, steps + 1, n))
    bracket = np.empty(npaths)
    bracket_real = np.empty(npaths)
    sum_pdy = np.empty(npaths)
    informed = np.zeros(npaths)
    exited = np.zeros(npaths, dtype=bool)
    if zeta is None:
        zeta = np.zeros((npaths, n))
    if v is None:
        v = np.zeros((npaths, n))
    if drift is None:
        drift = np.zeros((1,) + grid.shape + (n,))
    drift = np.ascontiguousarray(drift)
    ker = get_kernels()
    if n == 1:
        ker.sim_paths_1d(mode, steps, dt, chol, dZ, drift, H, lam_tr,
                         grid.axes[0][0], grid.spacings[0], grid.shape[0],
                         np.ascontiguousarray(zeta), np.ascontiguousarray(v),
                         Y, P, bracket, bracket_real, sum_pdy, informed, exited)
    else:
        ker.sim_paths_2d(mode, steps, dt, chol, dZ, drift, H, lam_tr,
                         grid.axes[0][0], grid.spacings[0], grid.shape[0],
                         grid.axes[1][0], grid.spacings[1], grid.shape[1],
                         np.ascontiguousarray(zeta), np.ascontiguousarray(v),
                         Y, P, bracket, bracket_real, sum_pdy, informed, exited)
    beta = np.broadcast_to(np.asarray(cfg.beta, dtype=float), (n,)).astype(float)
    if mode != BRIDGE:
        v = P[:, -1, :].copy()  # realized values: v = H(T, Y_T)
    return SimBatch(mode=mode, times=fieldst.times.copy(), Y=Y, P=P,
                    bracket=bracket, bracket_real=bracket_real,
                    sum_pdy=sum_pdy, informed=informed, exited=exited,
                    v=v, beta=beta, zeta=zeta if mode == BRIDGE else None)


def simulate_risk_neutral(fieldst, sigma, cfg):
    """Y as an exact (0, Sigma)-BM; prices from the field."""
    return _run(RISK_NEUTRAL, fieldst, sigma, cfg)


def simulate_bridge(fieldst, sigma, cfg, v, zeta=None, pot=None, equilibrium=None):
    """Exact Brownian-bridge informed play ending at zeta with dGamma(zeta)=v.

    zeta may be supplied directly, derived from a Gaussian equilibrium
    (zeta = Lam^-1 (v-m)), or inverted on the grid through the conjugate
    argmax of the recovered potential. Values whose maximizer sits on the
    grid boundary are outside the attainable range and are rejected with the
    nearest attainable value reported.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[0] == 1 and cfg.n_paths > 1:
        v = np.repeat(v, cfg.n_paths, axis=0)
    if v.shape[0] != cfg.n_paths:
        raise ValueError("v must have one row per path")
    if zeta is None:
        if equilibrium is not None:
            zeta = equilibrium.zeta_of_v(v)
        elif pot is not None:
            from kyleot.potential import conjugate

            tab = conjugate(pot, v)
            if tab.boundary_flag.any():
                i = int(np.flatnonzero(tab.boundary_flag)[0])
                nearest = pot.gradient.reshape(-1, pot.grid.ndim)[tab.argmax_flat[i]]
                raise ValueError(
                    f"{tab.boundary_flag.sum()} values outside the map range; "
                    f"e.g. v={v[i]} (nearest attainable {nearest})")
            zeta = pot.grid.points()[tab.argmax_flat]
        else:
            raise ValueError("need zeta, a potential, or a Gaussian equilibrium")
    return _run(BRIDGE, fieldst, sigma, cfg, zeta=zeta, v=v)


def simulate_physical(fieldst, phif, sigma, cfg):
    """Euler scheme dY = Sigma grad_phi(t, nearest node) dt + dZ under P."""
    from kyleot.riskaverse import physical_drift_field

    if len(phif.times) != len(fieldst.times):
        raise ValueError("phi field and pricing field time grids differ")
    drift = physical_drift_field(phif, sigma)
    return _run(PHYSICAL, fieldst, sigma, cfg, drift=drift)


def simulate_gaussian_physical(eq, cfg, steps):
    """Closed-form Gaussian physical dynamics (corY): exact A_t drift, Euler."""
    n = eq.n
    dt = eq.horizon / steps
    dZ, _ = _draw_normals(cfg.seed, cfg.n_paths, steps, n)
    chol = np.linalg.cholesky(eq.sigma)
    Y = np.empty((cfg.n_paths, steps + 1, n))
    Y[:, 0, :] = 0.0
    y = np.zeros((cfg.n_paths, n))
    sqdt = np.sqrt(dt)
    for k in range(steps):
        mat = eq.sigma_half @ eq.a_matrix(k * dt) @ eq.sigma_half_inv
        dy = -(y - eq.beta) @ mat.T * dt + (dZ[:, k, :] @ chol.T) * sqdt
        y = y + dy
        Y[:, k + 1, :] = y
    P = eq.m + Y @ eq.lam
    return Y, P


def dealer_accounting(batch, gamma_star):
    """Wealth records per Eq-style accounting.

    wealth = beta'v - Gamma*(v) + <P,Y>; bid-ask revenue is the bracket and
    Gamma*(v) the transfer to the informed trader. `wealth_path` is the
    path-consistent version (beta'v minus realized trader profits), which
    satisfies the zero-sum identity exactly; the two agree in expectation.
    """
    gs = np.asarray(gamma_star(batch.v), dtype=float).ravel()
    wealth = batch.v @ batch.beta - gs + batch.bracket
    return {
        "wealth": wealth,
        "bidask_revenue": batch.bracket.copy(),
        "informed_transfer": gs,
        "wealth_path": batch.dealer_wealth_path(),
        "gap_vs_path": wealth - batch.dealer_wealth_path(),
    }
