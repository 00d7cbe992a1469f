"""Reference detectors: discrete-phase BCJR and a single-Tikhonov tracker.

The discrete-phase (DP) detector quantizes the phase to ``L = Q*M`` uniform
levels and runs the forward/backward recursions as a BCJR on that trellis. Each
step forms the branch matrix p_d(theta_l) * T[l, l'] explicitly before the
vector product, which is what the per-symbol operation counts assume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelRealization, Constellation, FrameConfig
from .mixture import LUT, MULS, new_counter
from .spa import MessageSet, barb_config

# K * L entries stored per direction before oracle mode refuses to run
ORACLE_MAX_CELLS = 1 << 24


@dataclass(frozen=True)
class PhaseGrid:
    """Log-probabilities over ``L_total`` uniform phase levels."""

    logp: np.ndarray

    def __post_init__(self):
        if abs(logsumexp(self.logp)) > 1e-9:
            raise ValueError("grid log-probabilities must sum to one")

    @property
    def L_total(self):
        return self.logp.size

    @property
    def theta(self):
        return 2.0 * np.pi * np.arange(self.L_total) / self.L_total

    @property
    def probs(self):
        return np.exp(self.logp)

    def moment(self):
        return complex(np.sum(self.probs * np.exp(1j * self.theta)))


def transition_kernel(L, sigma_delta, terms=3):
    """Row-stochastic L x L wrapped-Gaussian kernel, truncated to |l| <= terms.

    Rows are normalized after sampling so each level's mass is preserved.
    ``sigma_delta=0`` gives the identity.
    """
    if sigma_delta == 0:
        return np.eye(L)
    d = 2.0 * np.pi * np.arange(L) / L
    d = np.mod(d + np.pi, 2.0 * np.pi) - np.pi
    row = np.zeros(L)
    for l in range(-terms, terms + 1):
        row += np.exp(-0.5 * ((d - 2.0 * np.pi * l) / sigma_delta) ** 2)
    row /= row.sum()
    idx = (np.arange(L)[None, :] - np.arange(L)[:, None]) % L
    return row[idx]


@dataclass(frozen=True)
class DpConfig:
    """Discrete-phase baseline; ``Q`` levels between neighbouring constellation points."""

    Q: int = 16
    terms: int = 3
    name: str = "dp"

    def __post_init__(self):
        if self.Q < 2:
            raise ValueError("Q must be >= 2")

    def L_total(self, M):
        return self.Q * M

    def detect(self, realization, log_beliefs, frame, constellation, counts=None):
        res = dp_forward_backward(realization, log_beliefs, frame, self, constellation, counts)
        L = self.L_total(constellation.M)
        stats = {"mean_order": float("nan"), "max_order": L, "min_phi": 1.0, "messages": res}
        return res.log_pu, stats


@dataclass
class DpResult:
    log_pf: np.ndarray  # K x L, each row sums to one in probability
    log_pb: np.ndarray
    log_pu: np.ndarray  # K x M

    def forward(self, k):
        return PhaseGrid(self.log_pf[k])

    def backward(self, k):
        return PhaseGrid(self.log_pb[k])


def _log_obs(r, sigma2, L, M, counts):
    """log e(x, theta_l) up to a per-symbol constant, shape M x L.

    For MPSK e(x, theta_l) = e(0, theta_{l + Q x}), so only L values are computed.
    """
    theta = 2.0 * np.pi * np.arange(L) / L
    base = np.real(r * np.exp(-1j * theta)) / sigma2
    counts[MULS] += 3 * L
    Q = L // M
    idx = (np.arange(L)[None, :] + Q * np.arange(M)[:, None]) % L
    return base[idx]


def _directional(r, logpd, sigma2, T, L, M, counts):
    K = r.size
    out = np.empty((K, L))
    out[0] = -math.log(L)
    for k in range(1, K):
        le = _log_obs(r[k - 1], sigma2, L, M, counts)
        lpd = logsumexp(logpd[k - 1][:, None] + le, axis=0)
        counts[MULS] += M * L
        counts[LUT] += L
        a = out[k - 1] + lpd
        shift = a.max()
        w = np.exp(a - shift)
        branch = w[:, None] * T
        nxt = branch.sum(axis=0)
        counts[MULS] += 2 * L * L
        total = nxt.sum()
        counts[MULS] += L
        with np.errstate(divide="ignore"):
            out[k] = np.log(nxt / total)
    return out


def dp_forward_backward(realization: ChannelRealization, log_beliefs, frame: FrameConfig,
                        dp: DpConfig, constellation: Constellation = None, counts=None,
                        oracle_check=False) -> DpResult:
    """Forward/backward grid messages and symbol likelihoods of the DP detector.

    ``log_beliefs`` is K x M. With ``oracle_check`` the call refuses grids whose
    K * L storage exceeds ``ORACLE_MAX_CELLS``.
    """
    lb = np.asarray(log_beliefs, dtype=float)
    K, M = lb.shape
    constellation = constellation or Constellation(M)
    L = dp.L_total(M)
    if L < 8:
        raise ValueError("Q * M must be at least 8")
    if oracle_check and K * L > ORACLE_MAX_CELLS:
        raise MemoryError(f"oracle grid K*L = {K * L} exceeds {ORACLE_MAX_CELLS}")
    counts = new_counter() if counts is None else counts
    r = np.asarray(realization.r)
    sigma2 = realization.sigma2
    T = transition_kernel(L, realization.sigma_delta, dp.terms)
    log_pf = _directional(r, lb, sigma2, T, L, M, counts)
    log_pb = _directional(r[::-1], lb[::-1], sigma2, T.T, L, M, counts)[::-1].copy()
    xn2 = np.abs(constellation.points) ** 2
    log_pu = np.empty((K, M))
    for k in range(K):
        le = _log_obs(r[k], sigma2, L, M, counts)
        ab = log_pf[k] + log_pb[k]
        counts[MULS] += L
        log_pu[k] = logsumexp(ab[None, :] + le, axis=1) - 0.5 * xn2 / sigma2
        counts[MULS] += M * L
        log_pu[k] -= logsumexp(log_pu[k])
        counts[MULS] += M
    return DpResult(log_pf, log_pb, log_pu)


def dp_path_sum(realization: ChannelRealization, log_beliefs, L, *, dps=30):
    """High-precision oracle: Pu by summing over every quantized phase path.

    Paths are enumerated level by level with shared prefixes merged, using
    mpmath arithmetic and the unnormalized likelihood, so no rescaling or
    log-domain shortcut of :func:`dp_forward_backward` is reused.
    """
    import mpmath as mp

    mp.mp.dps = dps
    lb = np.asarray(log_beliefs, dtype=float)
    K, M = lb.shape
    pts = [mp.exp(2j * mp.pi * x / M) for x in range(M)]
    sd = realization.sigma_delta
    sig2 = mp.mpf(realization.sigma2)
    thetas = [2 * mp.pi * l / L for l in range(L)]

    # unnormalized kernel rows, normalized the same way as the fast path
    if sd == 0:
        row = [mp.mpf(1)] + [mp.mpf(0)] * (L - 1)
    else:
        row = []
        for d in range(L):
            ang = 2 * mp.pi * d / L
            ang = ang - 2 * mp.pi if ang >= mp.pi else ang
            row.append(sum(mp.exp(-(ang - 2 * mp.pi * j) ** 2 / (2 * mp.mpf(sd) ** 2))
                           for j in range(-3, 4)))
        tot = sum(row)
        row = [v / tot for v in row]

    def e(k, x, l):
        r = mp.mpc(complex(realization.r[k]))
        return mp.exp(-abs(r - pts[x] * mp.exp(1j * thetas[l])) ** 2 / (2 * sig2))

    pd = [[sum(mp.exp(lb[k, x]) * e(k, x, l) for x in range(M) if np.isfinite(lb[k, x]))
           for l in range(L)] for k in range(K)]
    out = np.empty((K, M))
    for k in range(K):
        # joint weight of (theta_k = l) summed over all paths, excluding p_d at k
        fwd = [mp.mpf(1) / L] * L
        for i in range(k):
            fwd = [sum(fwd[a] * pd[i][a] * row[(b - a) % L] for a in range(L)) for b in range(L)]
        bwd = [mp.mpf(1)] * L
        for i in range(K - 1, k, -1):
            bwd = [sum(bwd[b] * pd[i][b] * row[(b - a) % L] for b in range(L)) for a in range(L)]
        vals = [sum(fwd[l] * bwd[l] * e(k, x, l) for l in range(L)) for x in range(M)]
        tot = sum(vals)
        out[k] = [float(mp.log(v / tot)) for v in vals]
    return out


def barb_pass(realization: ChannelRealization, log_beliefs, frame: FrameConfig,
              constellation: Constellation = None, counts=None):
    """Single-Tikhonov stand-in: order-1 mixture engine without slip recovery.

    Returns ``(messages, log_pu)``.
    """
    lb = np.asarray(log_beliefs, dtype=float)
    constellation = constellation or Constellation(lb.shape[1])
    cfg = barb_config()
    log_pu, stats = cfg.detect(realization, lb, frame, constellation, counts=counts)
    msgs: MessageSet = stats["messages"]
    return msgs, log_pu


__all__ = [
    "ORACLE_MAX_CELLS",
    "PhaseGrid",
    "DpConfig",
    "DpResult",
    "transition_kernel",
    "dp_forward_backward",
    "dp_path_sum",
    "barb_pass",
]
