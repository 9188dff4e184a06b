"""Black-Scholes utilities and the closed-form (winsorized) lognormal model.

Zero-rate conventions throughout. The winsorized one-asset model has explicit
transport map, potential, propagated potential, price and price-impact fields;
the non-truncated lognormal variant is included as well (note: the paper's
equilibrium hypotheses are unverified for the non-truncated case, so its
risk-averse use is best treated as exploratory).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc


def norm_cdf(x):
    """Standard normal CDF via erfc (rational approximation, absolute error
    below 1e-15 for |x| <= 8, monotone and saturating in the tails)."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def norm_pdf(x):
    return np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / math.sqrt(2.0 * math.pi)


_cdf = norm_cdf


def bs_call(s, k, sigma, tau):
    """Black-Scholes call price at zero rate; tau=0 returns intrinsic value."""
    s, k = np.asarray(s, dtype=float), np.asarray(k, dtype=float)
    if np.any(s <= 0) or np.any(k <= 0):
        raise ValueError("S and K must be positive")
    if sigma < 0 or np.any(np.asarray(tau) < 0):
        raise ValueError("sigma and tau must be nonnegative")
    if np.all(np.asarray(tau) == 0) or sigma == 0:
        return np.maximum(s - k, 0.0)
    st = sigma * np.sqrt(tau)
    d1 = (np.log(s / k) + 0.5 * st**2) / st
    d2 = d1 - st
    return s * _cdf(d1) - k * _cdf(d2)


def bs_delta(s, k, sigma, tau):
    """Call delta; step function at tau=0."""
    s, k = np.asarray(s, dtype=float), np.asarray(k, dtype=float)
    if np.all(np.asarray(tau) == 0) or sigma == 0:
        return np.where(s > k, 1.0, np.where(s < k, 0.0, 0.5))
    st = sigma * np.sqrt(tau)
    d1 = (np.log(s / k) + 0.5 * st**2) / st
    return _cdf(d1)


def bs_gamma(s, k, sigma, tau):
    """Call gamma; 0 at tau=0 by convention."""
    s, k = np.asarray(s, dtype=float), np.asarray(k, dtype=float)
    if np.all(np.asarray(tau) == 0) or sigma == 0:
        return np.zeros_like(s * 1.0)
    st = sigma * np.sqrt(tau)
    d1 = (np.log(s / k) + 0.5 * st**2) / st
    return norm_pdf(d1) / (s * st)


def implied_vol(price, s, k, tau, lo=1e-6, hi=5.0, price_tol=1e-10):
    """Implied vol by bracketed bisection on [lo, hi], tolerance in price."""
    intrinsic = max(s - k, 0.0)
    if price < intrinsic:
        raise ValueError(f"price {price} below intrinsic bound {intrinsic}")
    if price >= s:
        raise ValueError(f"price {price} at or above the upper bound S={s}")
    f_lo = bs_call(s, k, lo, tau) - price
    f_hi = bs_call(s, k, hi, tau) - price
    if f_lo > 0:
        return lo
    if f_hi < 0:
        raise ValueError(f"price {price} not attainable with vol <= {hi}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = bs_call(s, k, mid, tau) - price
        if abs(f_mid) <= price_tol:
            return mid
        if f_mid > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class LognormalSpec:
    """Single-asset lognormal risk-neutral value, optionally winsorized at v*.

    log v = m + sigma_v * (x ^ x*) with x standard normal,
    x* = (log v* - m)/sigma_v; no winsorization when v_star is None.
    """

    m: float
    sigma_v: float
    sigma_z: float
    horizon: float = 1.0
    v_star: float | None = None

    def __post_init__(self):
        if self.sigma_v <= 0 or self.sigma_z <= 0 or self.horizon <= 0:
            raise ValueError("sigma_v, sigma_z and T must be positive")

    @property
    def lam(self):
        return self.sigma_v / (math.sqrt(self.horizon) * self.sigma_z)

    @property
    def x_star(self):
        if self.v_star is None:
            return None
        return (math.log(self.v_star) - self.m) / self.sigma_v

    @property
    def y_star(self):
        if self.v_star is None:
            return None
        return math.sqrt(self.horizon) * self.sigma_z * self.x_star

    @classmethod
    def from_moments(cls, mean, std, sigma_z, horizon=1.0, v_star=None):
        """Match the (pre-winsorization) lognormal mean and std."""
        s2 = math.log(1.0 + (std / mean) ** 2)
        return cls(m=math.log(mean) - 0.5 * s2, sigma_v=math.sqrt(s2),
                   sigma_z=sigma_z, horizon=horizon, v_star=v_star)

    # -- closed forms ----------------------------------------------------------

    def transport_map(self, y):
        y = np.asarray(y, dtype=float)
        if self.v_star is None:
            return np.exp(self.m + self.lam * y)
        return np.exp(self.m + self.lam * np.minimum(y, self.y_star))

    def _normalization(self, n_quad=201):
        """A such that E[Gamma(Z_T)] = 0, via Gauss-Hermite quadrature."""
        nodes, wts = np.polynomial.hermite.hermgauss(n_quad)
        z = math.sqrt(2.0) * math.sqrt(self.horizon) * self.sigma_z * nodes
        raw = self._potential_raw(z)
        return -float((wts / math.sqrt(math.pi)) @ raw)

    def _potential_raw(self, y):
        y = np.asarray(y, dtype=float)
        lam = self.lam
        em = math.exp(self.m)
        if self.v_star is None:
            return np.exp(self.m + lam * y) / lam - math.exp(self.m + self.sigma_v**2 / 2.0) / lam
        ys = self.y_star
        ey = np.exp(lam * np.minimum(y, ys))
        return em / lam * ey + math.exp(self.m + lam * ys) * np.maximum(y - ys, 0.0)

    def potential(self, y):
        """Normalized Brenier potential Gamma(y)."""
        if self.v_star is None:
            return self._potential_raw(y)
        return self._potential_raw(y) + self._normalization()

    def fields(self, t, y):
        """Closed-form record {gamma, gamma_t, price, lam} at (t, y).

        gamma is the terminal potential, gamma_t the propagated potential
        Gamma(t,y), price the pricing rule and lam the price impact, all for
        0 <= t < T.
        """
        y = np.asarray(y, dtype=float)
        T, sz, sv, lam = self.horizon, self.sigma_z, self.sigma_v, self.lam
        if not 0 <= t < T:
            raise ValueError("t must be in [0, T)")
        tau = T - t
        em = math.exp(self.m)
        drift = tau * sv**2 / (2.0 * T)
        s_eff = np.exp(lam * y + drift)
        if self.v_star is None:
            gamma_t = em / lam * s_eff - math.exp(self.m + sv**2 / 2.0) / lam
            price = em * s_eff
            impact = lam * em * s_eff
            return {"gamma": self.potential(y), "gamma_t": gamma_t,
                    "price": price, "lam": impact}
        ys = self.y_star
        k_eff = math.exp(lam * ys)
        vol = sv / math.sqrt(T)
        cbs = bs_call(s_eff, k_eff, vol, tau)
        delta = bs_delta(s_eff, k_eff, vol, tau)
        gamma_bs = bs_gamma(s_eff, k_eff, vol, tau)
        d = (y - ys) / (sz * math.sqrt(tau))
        a_const = self._normalization()
        gamma_t = (a_const + em / lam * (s_eff - cbs)
                   + math.exp(self.m + lam * ys)
                   * ((y - ys) * _cdf(d) + sz * math.sqrt(tau) * norm_pdf(d)))
        price = em * s_eff * (1.0 - delta) + math.exp(self.m + lam * ys) * _cdf(d)
        impact = (lam * em * s_eff * (1.0 - delta)
                  - lam * em * np.exp(2.0 * lam * y + tau * sv**2 / T) * gamma_bs
                  + math.exp(self.m + lam * ys) / (sz * math.sqrt(tau)) * norm_pdf(d))
        return {"gamma": self.potential(y), "gamma_t": gamma_t,
                "price": price, "lam": impact}


def lognormal_fields(spec, t, y):
    """Module-level convenience wrapper around LognormalSpec.fields."""
    return spec.fields(t, y)
