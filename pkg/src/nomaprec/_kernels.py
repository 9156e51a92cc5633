"""Pure-numpy backend for the hot per-iteration precoder update.

`_core.pyx` is the compiled twin of `step`; both must produce the same
numbers (see tests/test_backend_parity.py). The individual update functions
here are also the public building blocks re-exported by `optimizer`.

One `step` performs receivers -> MSEs -> weights -> multipliers -> beta ->
KKT precoder solve, then backtracks along the segment toward the solve until
the penalized max-min objective decreases. The raw solve is an unboundedly
aggressive move (it minimizes a weighted surrogate whose weights go stale
immediately), so undamped iteration oscillates and starves clusters; the
backtracking turns it into a monotone descent on the objective while leaving
the fixed points (the KKT conditions) untouched.
"""

from dataclasses import dataclass
import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

GAMMA_EXP_CLAMP = 50.0   # cap on nu*(xi - xi_th); exp(50) only sharpens further
RIDGE = 1e-10
QOS_PENALTY_WEIGHT = 16.0   # exact-penalty weight on QoS violations, per unit xi
MAX_BACKTRACKS = 30


def update_multipliers(xi_user, softmax_pair, xi_th, nu, mask=None):
    """Exponential-penalty multipliers (theta, Gamma, eta).

    theta: softmax over clusters of nu * (cluster weighted-MSE sum), i.e. the
    emphasis lands on the worst cluster. Gamma: QoS violation penalty
    exp(nu * (xi_user - xi_th)), exponent clamped. eta: per (k, l), softmax
    over the decoders i >= l of nu * softmax_pair, scaled by theta + Gamma.
    All exponentials are stabilized by max subtraction.
    """
    xi_user = np.asarray(xi_user, dtype=float)
    K, L = xi_user.shape
    if mask is None:
        mask = np.tril(np.ones((L, L), dtype=bool))

    z = nu * xi_user.sum(axis=1)
    z -= z.max()
    e = np.exp(z)
    theta = e / e.sum()

    g_exp = nu * (xi_user - xi_th)
    clamped = bool(np.any(g_exp > GAMMA_EXP_CLAMP))
    Gamma = np.exp(np.minimum(g_exp, GAMMA_EXP_CLAMP))

    arg = np.where(mask[None, :, :], nu * np.asarray(softmax_pair, dtype=float), -np.inf)
    arg = arg - arg.max(axis=1, keepdims=True)
    w = np.exp(arg)
    eta = (theta[:, None] + Gamma)[:, None, :] * w / w.sum(axis=1, keepdims=True)
    return theta, Gamma, eta, clamped


def compute_beta(eta, b, V, e_tx, sigma2=1.0, mask=None):
    """Power-constraint multiplier beta = (sigma2/E_tx) * sum eta*b*|V|^2.

    At the paper's unit noise variance this is exactly the printed closed
    form; the sigma2 factor keeps the KKT trace balance exact for general
    noise levels.
    """
    eta = np.asarray(eta, dtype=float)
    if mask is None:
        L = eta.shape[1]
        mask = np.tril(np.ones((L, L), dtype=bool))
    w = np.where(mask[None, :, :], eta * np.asarray(b) * np.abs(V) ** 2, 0.0)
    return float(sigma2 / e_tx * w.sum())


def update_precoder(h, alpha, eta, b, V, beta, mask=None):
    """Solve the per-cluster Hermitian systems of the KKT precoder update.

    Column k solves (beta*I + intra_k + inter_k) p_k = rhs_k where the
    quadratic terms are weighted outer products h^H h of the user channels.
    Uses a Cholesky factorization per column; on failure a small ridge is
    added and the call is flagged.

    Returns (P_raw, ridge_used) with P_raw of shape (M, K), unscaled.
    """
    h = np.asarray(h)
    K, L, M = h.shape
    a = np.asarray(alpha, dtype=float)
    if mask is None:
        mask = np.tril(np.ones((L, L), dtype=bool))
    valid = mask[None, :, :]

    w_point = np.where(valid, np.asarray(eta) * np.asarray(b) * np.abs(V) ** 2, 0.0)
    suffix_incl = np.cumsum(a[:, ::-1], axis=1)[:, ::-1]          # sum_{j>=l} alpha
    w_inter = w_point.sum(axis=2)                                  # (K, L) per user
    w_intra = (w_point * suffix_incl[:, None, :]).sum(axis=2)      # (K, L)
    rhs_coeff = np.where(valid, np.asarray(eta) * np.asarray(b) * a[:, None, :]
                         * np.conj(np.where(valid, V, 0.0)), 0.0).sum(axis=2)

    H = h.reshape(K * L, M)
    S_all = (H.conj().T * w_inter.reshape(-1)) @ H                 # (M, M)

    P = np.zeros((M, K), dtype=complex)
    ridge_used = False
    eye = np.eye(M)
    for k in range(K):
        Hk = h[k]
        Dk = (Hk.conj().T * (w_intra[k] - w_inter[k])) @ Hk
        A = beta * eye + S_all + Dk
        rhs = Hk.conj().T @ rhs_coeff[k]
        if not np.any(rhs):
            continue
        try:
            P[:, k] = cho_solve(cho_factor(A, lower=True), rhs)
        except LinAlgError:
            ridge_used = True
            P[:, k] = cho_solve(cho_factor(A + RIDGE * eye, lower=True), rhs)
    return P, ridge_used


def scale_to_power(P, e_tx):
    """Rescale so trace(P P^H) = e_tx exactly; an all-zero P stays zero."""
    tr = float(np.sum(np.abs(P) ** 2))
    if tr == 0.0:
        return P, 0.0
    s = np.sqrt(e_tx / tr)
    P = s * P
    return P, float(np.sum(np.abs(P) ** 2))


def _xi_user_of(h, a, P, sigma2, mask, nu_unused=None):
    """Per-user augmented weighted MSE at MMSE receivers: 1 - R_user."""
    K, L, M = h.shape
    G = (h.reshape(K * L, M) @ P).reshape(K, L, K)
    g2 = np.abs(G) ** 2
    S = np.take_along_axis(g2, np.arange(K)[:, None, None], axis=2)[..., 0]
    inter = g2.sum(axis=2) - S
    suffix_excl = np.cumsum(a[:, ::-1], axis=1)[:, ::-1] - a
    r = S[:, :, None] * suffix_excl[:, None, :] + inter[:, :, None] + sigma2
    gamma = a[:, None, :] * S[:, :, None] / r
    xi_pair = 1.0 - np.log1p(gamma)
    return np.where(mask[None, :, :], xi_pair, -np.inf).max(axis=1)


def penalized_objective(xi_user, xi_th):
    """Exact-penalty min-max objective: worst cluster's weighted-MSE sum plus
    a hinge penalty on QoS violations. Monotone decrease of this value is the
    step-acceptance test; with slack QoS it is exactly (L - min cluster rate).
    """
    cluster = xi_user.sum(axis=1)
    viol = np.maximum(0.0, xi_user - xi_th).sum()
    return float(cluster.max() + QOS_PENALTY_WEIGHT * viol)


@dataclass
class StepResult:
    """One damped alternating-update pass: new precoder plus diagnostics.

    All `*_prev` statistics describe the precoder the step started from.
    """

    P: np.ndarray            # new scaled precoder (M, K)
    delta: float             # trace((P - P_prev)(P - P_prev)^H)
    delta_raw: float         # same for the undamped KKT solve; the Algorithm
                             # step-14 quantity, used for the convergence test
    accepted: bool           # False if no backtracking step decreased G
    step_size: float         # accepted fraction of the raw KKT move
    mmf_prev: float          # min cluster rate of P_prev, nats
    xi_user_prev: np.ndarray  # (K, L) augmented weighted MSE per user at P_prev
    objective_prev: float    # penalized objective at P_prev
    beta: float
    ridge_used: bool
    gamma_clamped: bool
    power: float             # trace(P P^H) after scaling
    mult_sum_err: float      # |sum theta - 1| + rel |sum_i eta - theta - Gamma|
    mult_min: float          # smallest multiplier seen (must be >= 0)


def step(h, alpha, P_prev, xi_th, nu, sigma2, e_tx, eta_uses_xi=False):
    """One full pass: receivers -> MSEs -> weights -> multipliers -> beta ->
    precoder solve -> power scaling, then backtrack until the penalized
    objective decreases.
    """
    h = np.asarray(h)
    K, L, M = h.shape
    a = np.asarray(alpha, dtype=float)
    mask = np.tril(np.ones((L, L), dtype=bool))
    valid = mask[None, :, :]

    G = (h.reshape(K * L, M) @ P_prev).reshape(K, L, K)
    g2 = np.abs(G) ** 2
    S = np.take_along_axis(g2, np.arange(K)[:, None, None], axis=2)[..., 0]
    inter = g2.sum(axis=2) - S
    own_gain = np.take_along_axis(G, np.arange(K)[:, None, None], axis=2)[..., 0]

    suffix_incl = np.cumsum(a[:, ::-1], axis=1)[:, ::-1]
    suffix_excl = suffix_incl - a

    Si = S[:, :, None]
    al = a[:, None, :]
    r = Si * suffix_excl[:, None, :] + inter[:, :, None] + sigma2
    T = Si * al + r
    gamma = al * Si / r
    eps = al / (1.0 + gamma)
    V = al * np.conj(own_gain)[:, :, None] / T
    b = 1.0 / eps
    r_pair = np.log1p(gamma)

    xi_pair = 1.0 - r_pair
    xi_user = np.where(valid, xi_pair, -np.inf).max(axis=1)
    mmf_prev = float((1.0 - xi_user).sum(axis=1).min())
    g_prev = penalized_objective(xi_user, xi_th)

    softmax_pair = xi_pair if eta_uses_xi else eps
    theta, Gamma, eta, clamped = update_multipliers(xi_user, softmax_pair, xi_th, nu, mask)
    beta = compute_beta(eta, b, V, e_tx, sigma2, mask)
    P_raw, ridge_used = update_precoder(h, a, eta, b, V, beta, mask)
    P_solve, _ = scale_to_power(P_raw, e_tx)
    delta_raw = float(np.sum(np.abs(P_solve - P_prev) ** 2))

    # backtracking line search on the penalized objective
    accepted = False
    sig = 1.0
    P_new = P_prev
    for _ in range(MAX_BACKTRACKS):
        cand = (1.0 - sig) * P_prev + sig * P_solve
        cand, power = scale_to_power(cand, e_tx)
        xi_c = _xi_user_of(h, a, cand, sigma2, mask)
        if penalized_objective(xi_c, xi_th) < g_prev:
            accepted = True
            P_new = cand
            break
        sig *= 0.5
    if not accepted:
        sig = 0.0
        power = float(np.sum(np.abs(P_prev) ** 2))

    delta = float(np.sum(np.abs(P_new - P_prev) ** 2))
    eta_sum = eta.sum(axis=1)
    coeff = theta[:, None] + Gamma
    eta_rel_err = float(np.max(np.abs(eta_sum - coeff) / (1.0 + coeff)))
    mult_sum_err = abs(float(theta.sum()) - 1.0) + eta_rel_err
    mult_min = float(min(theta.min(), Gamma.min(), eta.min()))

    return StepResult(P=P_new, delta=delta, delta_raw=delta_raw,
                      accepted=accepted, step_size=sig,
                      mmf_prev=mmf_prev, xi_user_prev=xi_user,
                      objective_prev=g_prev, beta=beta, ridge_used=ridge_used,
                      gamma_clamped=clamped, power=power,
                      mult_sum_err=mult_sum_err, mult_min=mult_min)
