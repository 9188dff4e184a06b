"""Closed-form multi-asset Gaussian equilibrium with dealer risk aversion.

Calibrated from the physical moments (m_hat, S_hat), noise covariance rate
Sigma, risk aversion alpha, dealer endowment beta and horizon T. All derived
matrices come from one symmetric eigendecomposition; this module is the
analytic oracle for the numerical transport pipeline.
"""

from dataclasses import dataclass, field

import numpy as np


def _sym_sqrt(mat):
    w, q = np.linalg.eigh(mat)
    if w.min() <= 0:
        raise ValueError(f"matrix not positive definite (min eig {w.min():.3e})")
    return q @ np.diag(np.sqrt(w)) @ q.T


def _check_spd(mat, name):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if not np.allclose(mat, mat.T, atol=1e-12 * max(1.0, np.abs(mat).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return mat


@dataclass
class GaussianEquilibrium:
    m_hat: np.ndarray
    s_hat: np.ndarray
    sigma: np.ndarray
    alpha: float
    beta: np.ndarray
    horizon: float
    # derived
    m: np.ndarray = field(init=False)
    vmat: np.ndarray = field(init=False)  # rows = eigenvectors (paper's V)
    d_hat: np.ndarray = field(init=False)
    sqrt_d: np.ndarray = field(init=False)
    d: np.ndarray = field(init=False)
    s: np.ndarray = field(init=False)
    lam: np.ndarray = field(init=False)
    lam_inv: np.ndarray = field(init=False)
    sigma_half: np.ndarray = field(init=False)
    sigma_half_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        self.m_hat = np.atleast_1d(np.asarray(self.m_hat, dtype=float))
        self.s_hat = _check_spd(self.s_hat, "S_hat")
        self.sigma = _check_spd(self.sigma, "Sigma")
        self.beta = np.broadcast_to(np.asarray(self.beta, dtype=float),
                                    self.m_hat.shape).astype(float)
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.horizon <= 0:
            raise ValueError("T must be positive")
        T = self.horizon
        self.m = self.m_hat - self.alpha * self.s_hat @ self.beta
        self.sigma_half = _sym_sqrt(self.sigma)
        self.sigma_half_inv = np.linalg.inv(self.sigma_half)
        core = T * self.sigma_half @ self.s_hat @ self.sigma_half
        w, q = np.linalg.eigh(0.5 * (core + core.T))
        self.vmat = q.T
        self.d_hat = w
        a = self.alpha
        # stable form: sqrt(d_i) = (a/2) dhat_i + sqrt(a^2 dhat_i^2/4 + dhat_i)
        self.sqrt_d = 0.5 * a * w + np.sqrt(0.25 * (a * w) ** 2 + w)
        self.d = self.sqrt_d**2
        shi = self.sigma_half_inv
        self.s = shi @ q @ np.diag(self.d / T) @ q.T @ shi
        self.lam = shi @ q @ np.diag(self.sqrt_d / T) @ q.T @ shi
        self.lam_inv = np.linalg.inv(self.lam)
        self.s = 0.5 * (self.s + self.s.T)
        self.lam = 0.5 * (self.lam + self.lam.T)

    # -- matrices ------------------------------------------------------------

    @property
    def n(self):
        return self.m_hat.size

    def lambda_matrix(self):
        return self.lam

    def s_matrix(self):
        return self.s

    def a_matrix(self, t):
        """Mean-reversion matrix A_t = T^-1 V' D_t V."""
        T = self.horizon
        if not (0.0 <= t <= T + 1e-12):
            raise ValueError(f"t={t} outside [0, {T}]")
        a = self.alpha
        dt_diag = a * T * self.sqrt_d / (T + (T - t) * a * self.sqrt_d)
        q = self.vmat.T
        return q @ np.diag(dt_diag / T) @ q.T

    def c_matrix(self, t):
        """C_t with A_t = alpha Sigma^{1/2} C_t Sigma^{1/2} (zero when alpha=0)."""
        if self.alpha == 0.0:
            return np.zeros_like(self.sigma)
        return self.sigma_half_inv @ self.a_matrix(t) @ self.sigma_half_inv / self.alpha

    def tr_tsl(self):
        """tr(T Sigma Lambda) = sum sqrt(d_i), the noise traders' loss."""
        return float(np.sum(self.sqrt_d))

    # -- potential / conjugate -----------------------------------------------

    def potential_value(self, y):
        """Gamma(y) = 0.5 y'Lam y + m'y - 0.5 tr(D^{1/2})."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        quad = 0.5 * np.einsum("pi,ij,pj->p", y, self.lam, y)
        out = quad + y @ self.m - 0.5 * self.tr_tsl()
        return out if out.size > 1 else float(out[0])

    def transport_map(self, y):
        """grad Gamma(y) = m + Lam y."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self.m + y @ self.lam

    def conjugate_value(self, v):
        """Gamma*(v) = 0.5 (v-m)'Lam^-1 (v-m) + 0.5 tr(T Sigma Lam)."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        dv = v - self.m
        out = 0.5 * np.einsum("pi,ij,pj->p", dv, self.lam_inv, dv) + 0.5 * self.tr_tsl()
        return out if out.size > 1 else float(out[0])

    def zeta_of_v(self, v):
        """Bridge target: zeta = Lam^-1 (v - m)."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return (v - self.m) @ self.lam_inv

    # -- dynamics ------------------------------------------------------------

    def physical_drift(self, t, y):
        """-Sigma^{1/2} A_t Sigma^{-1/2} (y - beta), the drift of Y under P."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        mat = self.sigma_half @ self.a_matrix(t) @ self.sigma_half_inv
        out = -(y - self.beta) @ mat.T
        return out if out.shape[0] > 1 else out[0]

    def price(self, y):
        return self.transport_map(y)

    def phi_value(self, t, z):
        """Closed-form phi(t,z) = -a/2 z'C_t z + a beta'C_t z + a E_t."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        a = self.alpha
        if a == 0.0:
            out = np.zeros(z.shape[0])
            return out if out.size > 1 else 0.0
        ct = self.c_matrix(t)
        et = self._e_t(t)
        out = (-0.5 * a * np.einsum("pi,ij,pj->p", z, ct, z)
               + a * (z @ ct @ self.beta) + a * et)
        return out if out.size > 1 else float(out[0])

    def grad_phi(self, t, z):
        """grad phi(t,z) = -alpha C_t (z - beta)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        ct = self.c_matrix(t)
        out = -self.alpha * (z - self.beta) @ ct.T
        return out if out.shape[0] > 1 else out[0]

    def _e_t(self, t):
        """E_t from the Gaussian phi closed form (exact time integrals)."""
        T = self.horizon
        a = self.alpha
        q = self.vmat.T
        sd = self.sqrt_d
        # int_t^T d_is ds = T log((T + (T-t) a sd) / T)
        int_d = T * np.log((T + (T - t) * a * sd) / T)
        # int_t^T d_is^2 ds = a T^2 sd (1/T - 1/(T + (T-t) a sd))
        int_d2 = a * T**2 * sd * (1.0 / T - 1.0 / (T + (T - t) * a * sd))
        tr_sl = self.tr_tsl() / T  # tr(Sigma Lam)
        # beta' C_s' Sigma C_s beta = (1/(aT))^2 sum_i d_is^2 b2_i,
        # tr(Sigma C_s) = (1/(aT)) sum_i d_is
        b2 = (q.T @ self.sigma_half_inv @ self.beta) ** 2
        term_int = 0.5 * a * float(b2 @ int_d2) / (a * T) ** 2
        tr_term = 0.5 * float(np.sum(int_d)) / (a * T)
        return (self.beta @ self.m + (T / 2.0 - t) * tr_sl + term_int - tr_term)

    # -- profits ---------------------------------------------------------------

    def profits(self, v=None):
        """Conditional/unconditional informed profit, noise loss, dealer wealth."""
        T = self.horizon
        a = self.alpha
        tr_tsl = self.tr_tsl()
        tr_tss = T * float(np.trace(self.sigma @ self.s_hat))
        bq = float(self.beta @ self.s_hat @ self.lam_inv @ self.s_hat @ self.beta)
        out = {
            "informed_unconditional": tr_tsl - 0.5 * a * tr_tss + 0.5 * a**2 * bq,
            "noise_loss": tr_tsl,
            "mm_expected_wealth": float(self.beta @ self.m_hat) + 0.5 * a * tr_tss
                                  - 0.5 * a**2 * bq,
        }
        if v is not None:
            out["informed_conditional"] = self.conjugate_value(v)
        return out

    def psi(self, t, a_pt):
        """psi(t,z,a): alpha beta' dG(a) - alpha G*(dG(a)) + alpha (T-t) tr(Sigma Lam).

        z-independent, which is why the informed strategy reduces to the plain
        Brownian-bridge drift in the Gaussian model.
        """
        al = self.alpha
        gval = self.transport_map(a_pt)[0]
        return float(al * (self.beta @ gval) - al * self.conjugate_value(gval)
                     + al * (self.horizon - t) * self.tr_tsl() / self.horizon)


def calibrate(m_hat, s_hat, sigma, alpha, beta, horizon):
    """Build the closed-form equilibrium from physical moments."""
    return GaussianEquilibrium(m_hat=m_hat, s_hat=s_hat, sigma=sigma,
                               alpha=alpha, beta=beta, horizon=horizon)


def univariate_lambda(alpha, sigma_v_hat, sigma_z, horizon=1.0):
    """lambda = (a/2) sv^2 + sqrt(a^2 sv^4 / 4 + sv^2 / (T sz^2))."""
    sv2 = sigma_v_hat**2
    return 0.5 * alpha * sv2 + np.sqrt(0.25 * (alpha * sv2) ** 2
                                       + sv2 / (horizon * sigma_z**2))


def equilibrium_to_dict(eq):
    """JSON-ready dump of the calibration and derived quantities."""
    prof = eq.profits(v=eq.m_hat)
    return {
        "inputs": {
            "m_hat": eq.m_hat.tolist(), "s_hat": eq.s_hat.tolist(),
            "sigma": eq.sigma.tolist(), "alpha": eq.alpha,
            "beta": eq.beta.tolist(), "T": eq.horizon,
        },
        "m": eq.m.tolist(),
        "d_hat": eq.d_hat.tolist(),
        "d": eq.d.tolist(),
        "S": eq.s.tolist(),
        "Lambda": eq.lam.tolist(),
        "A_0": eq.a_matrix(0.0).tolist(),
        "A_T": eq.a_matrix(eq.horizon).tolist(),
        "tr_TSL": eq.tr_tsl(),
        "profits": {k: (float(v) if np.isscalar(v) else float(v)) for k, v in prof.items()},
        "initial_risk_premium": (eq.alpha * eq.s_hat @ eq.beta).tolist(),
    }
