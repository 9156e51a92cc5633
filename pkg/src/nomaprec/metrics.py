"""Closed-form link-quality quantities for the clustered NOMA downlink.

Conventions: all rates and augmented weighted MSEs are in nats. Tuple indices
are 0-based (k, i, l) = (cluster, decoding user, message), valid for i >= l
because user i only decodes messages of weaker-or-equal users (SIC order).
Batched arrays are shaped (K, L, L) on axes (k, i, l); entries with i < l are
NaN in reports and masked out of reductions.
"""

from dataclasses import dataclass
import numpy as np


def _require_sic_order(i, l):
    if i < l:
        raise ValueError(f"SIC order violation: decoder i={i} < message l={l}")


def _alpha_array(alpha):
    return alpha.alpha if hasattr(alpha, "alpha") else np.asarray(alpha, dtype=float)


def cross_gain(channels, P):
    """Complex cross gains h_{k,i} p_t for all users and columns, (K, L, K)."""
    K, L, M = channels.h.shape
    return (channels.h.reshape(K * L, M) @ P).reshape(K, L, -1)


def _tuple_terms(channels, P, alpha, k, i, l, sigma2):
    """Scalar building blocks for one (k, i, l): own gain, r and T terms."""
    a = _alpha_array(alpha)
    g = channels.h[k, i] @ P
    own = np.abs(g[k]) ** 2
    inter = np.sum(np.abs(g) ** 2) - own
    r = own * np.sum(a[k, l + 1:]) + inter + sigma2
    T = own * a[k, l] + r
    return a, g[k], own, r, T


def effective_noise(channels, P, alpha, k, i, l, sigma2=1.0):
    """Effective noise r_{k,i->l}: residual intra-cluster superposition power
    of the not-yet-decoded messages, plus inter-cluster interference and noise.
    """
    _require_sic_order(i, l)
    _, _, _, r, _ = _tuple_terms(channels, P, alpha, k, i, l, sigma2)
    return float(r)


@dataclass
class LinkStats:
    """All per-tuple quantities for one (channels, P, alpha) triple.

    Arrays are (K, L, L) on (k, i, l); invalid tuples (i < l) hold NaN except
    where noted. gamma/eps/V are the MMSE-receiver quantities.
    """

    G: np.ndarray          # (K, L, K) complex cross gains h_{k,i} p_t
    r: np.ndarray          # effective noise
    T: np.ndarray          # total received power term of the MSE quadratic
    gamma: np.ndarray      # SINR
    V: np.ndarray          # complex MMSE receivers
    eps: np.ndarray        # MMSE error variances
    b: np.ndarray          # MSE weights 1/eps
    r_pair: np.ndarray     # log(1 + gamma), nats
    mask: np.ndarray       # (L, L) bool, True where i >= l


def link_stats(channels, P, alpha, sigma2=1.0):
    """Vectorized evaluation of r, gamma, V^mmse, eps^mmse, b and rates."""
    a = _alpha_array(alpha)
    K, L, _ = channels.h.shape
    G = cross_gain(channels, P)
    g2 = np.abs(G) ** 2
    S = np.take_along_axis(g2, np.arange(K)[:, None, None], axis=2)[..., 0]  # (K, L)
    inter = g2.sum(axis=2) - S                                                # (K, L)

    # suffix sums of alpha: residual power of messages j > l, and j >= l
    a_rev = a[:, ::-1]
    suffix_incl = np.cumsum(a_rev, axis=1)[:, ::-1]            # sum_{j>=l} alpha
    suffix_excl = suffix_incl - a                              # sum_{j>l} alpha

    # (k, i, l) broadcasting: S, inter vary over (k, i); alpha over (k, l)
    Si = S[:, :, None]
    r = Si * suffix_excl[:, None, :] + inter[:, :, None] + sigma2
    al = a[:, None, :]
    T = Si * al + r
    gamma = al * Si / r
    eps = al / (1.0 + gamma)
    own_gain = np.take_along_axis(G, np.arange(K)[:, None, None], axis=2)[..., 0]
    V = al * np.conj(own_gain)[:, :, None] / T
    with np.errstate(divide="ignore"):
        b = 1.0 / eps
    r_pair = np.log1p(gamma)

    mask = np.tril(np.ones((L, L), dtype=bool))   # [i, l] valid iff i >= l
    for arr in (r, T, gamma, eps, V, r_pair):
        arr[:, ~mask] = np.nan
    b[:, ~mask] = np.nan
    return LinkStats(G=G, r=r, T=T, gamma=gamma, V=V, eps=eps, b=b,
                     r_pair=r_pair, mask=mask)


def sinr(channels, P, alpha, k, i, l, sigma2=1.0):
    """SINR for user i of cluster k decoding message l."""
    _require_sic_order(i, l)
    a, _, own, r, _ = _tuple_terms(channels, P, alpha, k, i, l, sigma2)
    return float(a[k, l] * own / r)


def mmse_receiver(channels, P, alpha, k, i, l, sigma2=1.0):
    """Optimal scalar receiver V = alpha p_k^H h^H / T."""
    _require_sic_order(i, l)
    a, g_own, _, _, T = _tuple_terms(channels, P, alpha, k, i, l, sigma2)
    return complex(a[k, l] * np.conj(g_own) / T)


def mse(channels, P, alpha, V, k, i, l, sigma2=1.0):
    """Estimation error variance for an arbitrary receiver V (not only MMSE):
    eps = |V|^2 T + alpha - 2 Re{alpha V h p}.
    """
    _require_sic_order(i, l)
    a, g_own, _, _, T = _tuple_terms(channels, P, alpha, k, i, l, sigma2)
    return float(np.abs(V) ** 2 * T + a[k, l] - 2.0 * np.real(a[k, l] * V * g_own))


def mmse_error(channels, P, alpha, k, i, l, sigma2=1.0):
    """Error variance with the MMSE receiver: (1/alpha + |h p|^2 / r)^-1."""
    _require_sic_order(i, l)
    a, _, own, r, _ = _tuple_terms(channels, P, alpha, k, i, l, sigma2)
    return float(1.0 / (1.0 / a[k, l] + own / r))


def weights_from_mmse(eps_pair):
    """MSE weights b = 1/eps elementwise; NaN entries pass through."""
    eps_pair = np.asarray(eps_pair, dtype=float)
    if np.any(eps_pair[~np.isnan(eps_pair)] <= 0):
        raise ValueError("MMSE error variances must be positive")
    with np.errstate(invalid="ignore"):
        return 1.0 / eps_pair


def augmented_wmse(channels, P, alpha, V, b, k, i, l, sigma2=1.0):
    """Augmented weighted MSE xi = b*eps(V) - log(alpha*b) for weight b > 0."""
    if not b > 0:
        raise ValueError("weight b must be positive")
    a = _alpha_array(alpha)
    e = mse(channels, P, alpha, V, k, i, l, sigma2=sigma2)
    return float(b * e - np.log(a[k, l] * b))


@dataclass
class RateReport:
    """Per-tuple, per-user and per-cluster achievable rates in nats."""

    r_pair: np.ndarray       # (K, L, L), NaN where i < l
    r_user: np.ndarray       # (K, L): min over decoders i >= l
    r_cluster: np.ndarray    # (K,)
    mmf: float               # min over clusters
    argmin_cluster: int


def rate_report(channels, P, alpha, sigma2=1.0, stats=None):
    """Achievable-rate summary; min ties are broken by the lowest decoder i."""
    if stats is None:
        stats = link_stats(channels, P, alpha, sigma2=sigma2)
    r_pair = stats.r_pair
    masked = np.where(stats.mask[None, :, :], r_pair, np.inf)
    r_user = masked.min(axis=1)
    r_cluster = r_user.sum(axis=1)
    argmin = int(np.argmin(r_cluster))
    return RateReport(r_pair=r_pair, r_user=r_user, r_cluster=r_cluster,
                      mmf=float(r_cluster[argmin]), argmin_cluster=argmin)


def xi_arrays(stats):
    """Augmented weighted MSEs at the MMSE weights: xi = 1 - R (identity).

    Returns (xi_pair, xi_user) with xi_user[k, l] = max over decoders i.
    """
    xi_pair = 1.0 - stats.r_pair
    masked = np.where(stats.mask[None, :, :], xi_pair, -np.inf)
    return xi_pair, masked.max(axis=1)
