"""System setup: configuration, random channels, user clustering, power allocation.

Everything upstream of the precoder optimizer lives here. Users are single
antenna, the base station has M antennas and serves K clusters of L users
each. Within a cluster, index 0 is always the weakest user (smallest
effective channel gain magnitude squared).
"""

from dataclasses import dataclass, field
import numpy as np

# Cell geometry: normalized outer radius, with a minimum user distance so the
# path loss d^-rho stays bounded (d >= 0.1 caps the gain at 10^rho/10).
OUTER_RADIUS = 1.0
MIN_DISTANCE = 0.1

LN2 = float(np.log(2.0))


def bits_to_nats(x):
    return np.asarray(x, dtype=float) * LN2


def nats_to_bits(x):
    return np.asarray(x, dtype=float) / LN2


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Immutable simulation parameters.

    Power and noise are linear quantities; rate thresholds are stored in nats
    (use `bits_to_nats` at the ingestion boundary). `r_th` broadcasts from a
    scalar to a (K, L) array at construction.
    """

    M: int                      # BS transmit antennas
    K: int                      # clusters
    L: int                      # users per cluster
    e_tx: float                 # total transmit power budget (linear)
    sigma2: float = 1.0         # noise variance (linear)
    rho: float = 4.0            # path loss exponent
    r_th: object = 0.0          # per-user rate thresholds, nats, shape (K, L)
    eps_opt: float = 1e-3       # epsilon-optimality target of the penalty method
    upsilon: float = 1e-3       # precoder-change convergence tolerance
    delta: float = 3.0          # penalty sharpness increment
    max_iters: int = 200        # iteration cap

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.L < 1:
            raise ValueError("M, K, L must be positive integers")
        if self.M < self.K:
            raise ValueError(f"need M >= K (got M={self.M}, K={self.K})")
        if not self.e_tx > 0:
            raise ValueError("e_tx must be > 0")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be > 0")
        if not (self.eps_opt > 0 and self.upsilon > 0):
            raise ValueError("eps_opt and upsilon must be > 0")
        r = np.broadcast_to(np.asarray(self.r_th, dtype=float), (self.K, self.L)).copy()
        if np.any(r < 0):
            raise ValueError("rate thresholds must be >= 0")
        object.__setattr__(self, "r_th", r)

    @classmethod
    def from_snr_db(cls, M, K, L, snr_db, sigma2=1.0, **kwargs):
        """Build a config from transmit SNR in dB: e_tx = sigma2 * 10^(snr/10)."""
        return cls(M=M, K=K, L=L, e_tx=sigma2 * 10.0 ** (snr_db / 10.0),
                   sigma2=sigma2, **kwargs)

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.e_tx / self.sigma2)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Effective channels of all K*L users, already clustered.

    h[k, l] = h_raw[k, l] / sqrt(d[k, l]^rho), with gain2 nondecreasing in l
    within each cluster (index 0 = weakest user).
    """

    h: np.ndarray       # (K, L, M) complex effective channel row-vectors
    h_raw: np.ndarray   # (K, L, M) raw unit-variance draws
    d: np.ndarray       # (K, L) distances in (0, 1]
    rho: float

    def __post_init__(self):
        g2 = self.gain2
        if np.any(np.diff(g2, axis=1) < 0):
            raise ValueError("cluster members must be ordered weakest-first")

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def L(self):
        return self.h.shape[1]

    @property
    def M(self):
        return self.h.shape[2]

    @property
    def gain2(self):
        """Squared Euclidean norm of each effective channel, shape (K, L)."""
        return np.sum(np.abs(self.h) ** 2, axis=2)

    @classmethod
    def from_raw(cls, h_raw, d, rho):
        """Apply path loss to raw draws: h = h_raw / sqrt(d^rho)."""
        h_raw = np.asarray(h_raw, dtype=complex)
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0) or np.any(d > OUTER_RADIUS):
            raise ValueError("distances must lie in (0, 1]")
        h = h_raw / np.sqrt(d**rho)[..., None]
        return cls(h=h, h_raw=h_raw, d=d, rho=float(rho))

    def digest(self):
        """Short hex digest of the effective channels, for pairing checks."""
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.h).tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Fraction of cluster power per user; each row sums to one."""

    alpha: np.ndarray   # (K, L)


def _sample_radius(rng, n, r_min, r_max):
    # Area-uniform radius on the annulus [r_min, r_max].
    u = rng.random(n)
    return np.sqrt(r_min**2 + u * (r_max**2 - r_min**2))


def radius_cdf(r, r_min, r_max):
    """CDF of the area-uniform radius on [r_min, r_max] (test oracle helper)."""
    r = np.clip(np.asarray(r, dtype=float), r_min, r_max)
    return (r**2 - r_min**2) / (r_max**2 - r_min**2)


def generate_channels(cfg, seed, geometry="uniform_disk", d_inner=None):
    """Draw K*L users, apply path loss, cluster them, return a ChannelSet.

    Raw entries are i.i.d. circularly-symmetric complex Gaussian with zero
    mean and unit variance. Geometries:

    - "uniform_disk": all users area-uniform on the disk [MIN_DISTANCE, 1].
    - "annulus_split": half the users (the "near" half, rounded up) are
      area-uniform on the inner disk [MIN_DISTANCE, d_inner], the rest on the
      annulus [d_inner, 1]. Requires MIN_DISTANCE < d_inner < 1.

    Deterministic for a fixed (cfg, seed, geometry, d_inner).
    """
    rng = np.random.default_rng(seed)
    n = cfg.K * cfg.L
    h_raw = (rng.standard_normal((n, cfg.M)) + 1j * rng.standard_normal((n, cfg.M))) / np.sqrt(2.0)

    if geometry == "uniform_disk":
        d = _sample_radius(rng, n, MIN_DISTANCE, OUTER_RADIUS)
    elif geometry == "annulus_split":
        if d_inner is None or not (0.0 < d_inner < 1.0):
            raise ValueError("annulus_split requires d_inner in (0, 1)")
        if d_inner <= MIN_DISTANCE:
            raise ValueError(f"annulus_split requires d_inner > {MIN_DISTANCE}")
        n_near = n - n // 2
        d = np.empty(n)
        d[:n_near] = _sample_radius(rng, n_near, MIN_DISTANCE, d_inner)
        d[n_near:] = _sample_radius(rng, n - n_near, d_inner, OUTER_RADIUS)
    else:
        raise ValueError(f"unknown geometry {geometry!r}")

    h = h_raw / np.sqrt(d**cfg.rho)[:, None]
    gains = np.sum(np.abs(h) ** 2, axis=1)

    if cfg.L == 1:
        assignment = np.arange(n).reshape(cfg.K, 1)
    else:
        assignment = cluster_users(gains, cfg.K, cfg.L)

    return ChannelSet.from_raw(h_raw[assignment], d[assignment], cfg.rho)


def cluster_users(gains, K, L):
    """Group K*L users into K clusters of strongly unequal gains.

    L = 2: sort descending, pair the i-th best with the i-th worst.
    L = 3: split the descending order into terciles of K users each; cluster i
    takes the rank-i user from every tercile.

    Returns a (K, L) index array into the original user order, weakest user
    first within each cluster. Gain ties are broken by original index.
    """
    gains = np.asarray(gains, dtype=float)
    if L not in (2, 3):
        raise ValueError(f"clustering is defined for L in {{2, 3}}, got L={L}")
    if gains.shape != (K * L,):
        raise ValueError(f"expected {K * L} users, got {gains.shape}")

    order = np.argsort(-gains, kind="stable")   # best first
    if L == 2:
        clusters = np.stack([order[:K], order[2 * K - 1:K - 1:-1]], axis=1)
    else:
        g1, g2, g3 = order[:K], order[K:2 * K], order[2 * K:]
        clusters = np.stack([g1, g2, g3], axis=1)

    # reindex weakest-first inside each cluster
    out = np.empty((K, L), dtype=int)
    for k in range(K):
        members = clusters[k]
        out[k] = members[np.argsort(gains[members], kind="stable")]
    return out


def allocate_power(channels):
    """Within each cluster, allocate power inversely to gain2, normalized."""
    g2 = channels.gain2
    if np.any(g2 <= 0):
        raise ValueError("degenerate channel: zero gain")
    inv = 1.0 / g2
    return PowerAllocation(alpha=inv / inv.sum(axis=1, keepdims=True))


# --- flat config-file ingestion -------------------------------------------
#
# One `key = value` pair per line, `#` starts a comment. The recognized keys
# are fixed; `r_th` is in bits (converted to nats internally).

CONFIG_KEYS = {
    "M": int, "K": int, "L": int,
    "snr_db": float, "sigma2": float, "rho": float, "r_th": float,
    "eps_opt": float, "upsilon": float, "delta": float, "max_iters": int,
    "seed": int, "trials": int, "geometry": str, "d_inner": float,
}

CONFIG_DEFAULTS = {
    "sigma2": 1.0, "rho": 4.0, "r_th": 0.0,
    "eps_opt": 1e-3, "upsilon": 1e-3, "delta": 3.0, "max_iters": 200,
    "seed": 0, "trials": 30, "geometry": "uniform_disk", "d_inner": None,
}


@dataclass(frozen=True)
class SimSettings:
    """A parsed config file: system parameters plus simulation bookkeeping."""

    cfg: SystemConfig
    seed: int
    trials: int
    geometry: str
    d_inner: float | None


def read_kv_file(path):
    """Parse a flat `key = value` file into a string->string dict."""
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in pairs:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            pairs[key] = value
    return pairs


def settings_from_dict(pairs):
    """Build SimSettings from a key->string dict (unknown keys are rejected)."""
    unknown = set(pairs) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for required in ("M", "K", "L", "snr_db"):
        if required not in pairs:
            raise ValueError(f"missing required config key {required!r}")

    values = dict(CONFIG_DEFAULTS)
    for key, raw in pairs.items():
        values[key] = CONFIG_KEYS[key](raw)

    cfg = SystemConfig.from_snr_db(
        M=values["M"], K=values["K"], L=values["L"], snr_db=values["snr_db"],
        sigma2=values["sigma2"], rho=values["rho"],
        r_th=bits_to_nats(values["r_th"]),
        eps_opt=values["eps_opt"], upsilon=values["upsilon"],
        delta=values["delta"], max_iters=values["max_iters"],
    )
    return SimSettings(cfg=cfg, seed=values["seed"], trials=values["trials"],
                       geometry=values["geometry"], d_inner=values["d_inner"])


def load_settings(path):
    return settings_from_dict(read_kv_file(path))
