"""MMF OMA and MMF MULP reference schemes.

Both baselines decompose into per-slot max-min problems over single-stream,
no-SIC users, which are exactly K-cluster, L=1 instances of the NOMA
optimizer; each sub-problem reuses that machinery with its own power budget
e_tx. Reported rates are always recomputed from the returned precoders
through the scheme's own SINR formula, never taken from solver bookkeeping.
"""

from dataclasses import dataclass, replace
import numpy as np

from . import optimizer
from .model import ChannelSet, SystemConfig


def oma_sinr(channels, P_slot, k, l, sigma2=1.0):
    """SINR of the cluster-k user served in time slot l, single stream.

    The corresponding rate carries the 1/L time-sharing factor.
    """
    g = channels.h[k, l] @ P_slot
    own = np.abs(g[k]) ** 2
    return float(own / (np.sum(np.abs(g) ** 2) - own + sigma2))


def mulp_sinr(channels, P_full, k, l, sigma2=1.0):
    """SINR of user (k, l) under full multiuser linear precoding.

    P_full has one column per user, ordered k-major (column k*L + l). All
    other columns interfere, weighted by the victim's own channel h_{k,l}.
    """
    L = channels.L
    g = channels.h[k, l] @ P_full
    own = np.abs(g[k * L + l]) ** 2
    return float(own / (np.sum(np.abs(g) ** 2) - own + sigma2))


def _slot_channels(channels, l):
    return ChannelSet.from_raw(channels.h_raw[:, l:l + 1, :],
                               channels.d[:, l:l + 1], channels.rho)


def _slot_config(cfg, r_th_slot):
    return SystemConfig(M=cfg.M, K=cfg.K, L=1, e_tx=cfg.e_tx, sigma2=cfg.sigma2,
                        rho=cfg.rho, r_th=r_th_slot.reshape(cfg.K, 1),
                        eps_opt=cfg.eps_opt, upsilon=cfg.upsilon,
                        delta=cfg.delta, max_iters=cfg.max_iters)


@dataclass
class OmaResult:
    p_slots: np.ndarray          # (L, M, K) precoder per time slot
    rates: np.ndarray            # (K, L) per-user rates in nats, incl. 1/L
    mmf: float                   # min over clusters of summed user rates
    slot_reports: list
    qos_satisfied: bool
    infeasible_slots: list


@dataclass
class MulpResult:
    p_full: np.ndarray           # (M, K*L), column k*L + l serves user (k, l)
    rates: np.ndarray            # (K, L) per-user rates in nats
    mmf: float
    slot_reports: list
    qos_satisfied: bool
    infeasible_slots: list


def solve_oma(channels, cfg, strategy="svd", backend=None):
    """Per-slot max-min optimization over the K users of each time slot.

    The slot problem maximizes min_k log(1+gamma) with thresholds scaled by
    L, equivalent to max-min over the time-shared rates (1/L)log(1+gamma).
    """
    K, L = cfg.K, cfg.L
    p_slots = np.empty((L, cfg.M, K), dtype=complex)
    reports = []
    infeasible = []
    for l in range(L):
        ch_l = _slot_channels(channels, l)
        cfg_l = _slot_config(cfg, L * cfg.r_th[:, l])
        rep = optimizer.run(ch_l, cfg_l, strategy=strategy, backend=backend)
        p_slots[l] = rep.P
        reports.append(rep)
        if not rep.qos_satisfied:
            infeasible.append(l)

    rates = np.empty((K, L))
    for l in range(L):
        for k in range(K):
            rates[k, l] = np.log1p(oma_sinr(channels, p_slots[l], k, l,
                                            sigma2=cfg.sigma2)) / L
    mmf = float(rates.sum(axis=1).min())
    return OmaResult(p_slots=p_slots, rates=rates, mmf=mmf, slot_reports=reports,
                     qos_satisfied=not infeasible, infeasible_slots=infeasible)


def solve_mulp(channels, cfg, strategy="svd", backend=None):
    """Per-slot max-min design of dedicated user columns, no SIC anywhere.

    Each slot's K columns are optimized against slot-internal interference
    only (the paper's per-slot decomposition); the reported rates then count
    the full cross-slot interference of the assembled M x KL precoder, which
    is what limits MULP at high SNR.
    """
    K, L = cfg.K, cfg.L
    p_full = np.empty((cfg.M, K * L), dtype=complex)
    reports = []
    infeasible = []
    for l in range(L):
        ch_l = _slot_channels(channels, l)
        cfg_l = _slot_config(cfg, cfg.r_th[:, l])
        rep = optimizer.run(ch_l, cfg_l, strategy=strategy, backend=backend)
        p_full[:, l::L] = rep.P
        reports.append(rep)
        if not rep.qos_satisfied:
            infeasible.append(l)

    rates = np.empty((K, L))
    for k in range(K):
        for l in range(L):
            rates[k, l] = np.log1p(mulp_sinr(channels, p_full, k, l,
                                             sigma2=cfg.sigma2))
    mmf = float(rates.sum(axis=1).min())
    qos = not infeasible and bool(np.all(rates >= cfg.r_th - 1e-12))
    return MulpResult(p_full=p_full, rates=rates, mmf=mmf, slot_reports=reports,
                      qos_satisfied=qos, infeasible_slots=infeasible)
