"""Tikhonov-mixture forward/backward phase messages and symbol likelihoods.

One recursion step takes the message at k-1, multiplies it by the observation
message of symbol k-1 (``expand``), pushes every component through the Wiener
step in closed form (``predict``), and reduces the result. When slip recovery is
on, a pilot mixes the tracked message with the uniform density according to the
slip confidence before the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .channel import ChannelRealization, Constellation, FrameConfig
from .circular import (
    TikhonovMixture,
    _log_i0,
    _log_i0_fast,
    _logsumexp,
    _require_normalized,
)
from .mixture import ReductionConfig, _reduce, new_counter

LLR_MODES = ("none", "half_log", "linear")


@dataclass(frozen=True)
class SpaConfig:
    """Engine settings.

    ``approx_bessel`` switches the expansion weights to the large-kappa log I0
    form. ``max_store`` bounds the stored order of uncapped messages.
    """

    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    slip_recovery: bool = False
    llr_log_approx: str = "none"
    approx_bessel: bool = False
    max_store: int = 256
    name: str = "mixture"

    def __post_init__(self):
        if self.llr_log_approx not in LLR_MODES:
            raise ValueError(f"unknown llr_log_approx {self.llr_log_approx!r}")

    @property
    def capacity(self):
        L = self.reduction.max_order
        return self.max_store if L is None else L

    def detect(self, realization, log_beliefs, frame, constellation, counts=None):
        fwd = forward_pass(realization, log_beliefs, frame, self, counts=counts)
        bwd = backward_pass(realization, log_beliefs, frame, self, counts=counts)
        msgs = MessageSet.join(fwd, bwd)
        log_pu = compute_pu_all(msgs, realization, constellation, self, counts=counts)
        stats = {
            "mean_order": float(np.mean(0.5 * (msgs.f_n + msgs.b_n))),
            "max_order": int(max(msgs.f_n.max(), msgs.b_n.max())),
            "min_phi": float(min(msgs.f_phi.min(), msgs.b_phi.min())),
            "messages": msgs,
        }
        return log_pu, stats


# presets --------------------------------------------------------------------

PRUNE_WEIGHT = 1e-8


def unlimited_config(epsilon=4.0, kl_mode="exact", min_weight=PRUNE_WEIGHT, **kw):
    red = ReductionConfig(epsilon=epsilon, kl_mode=kl_mode, min_weight=min_weight)
    return SpaConfig(reduction=red, name="unlimited", **kw)


def limited_config(max_order, epsilon=4.0, slip_recovery=True, min_weight=PRUNE_WEIGHT, **kw):
    red = ReductionConfig(epsilon=epsilon, max_order=max_order, min_weight=min_weight)
    return SpaConfig(reduction=red, slip_recovery=slip_recovery, name=f"limited{max_order}", **kw)


def select_config(max_order=3, epsilon=1.0, min_weight=PRUNE_WEIGHT):
    """Reduced-complexity variant: lead selection, coarse KL, max arithmetic."""
    red = ReductionConfig(epsilon=epsilon, max_order=max_order, kl_mode="coarse",
                          strategy="select", weight_arith="max", cmvm_mode="approx",
                          min_weight=min_weight)
    return SpaConfig(reduction=red, slip_recovery=True, llr_log_approx="linear",
                     approx_bessel=True, name=f"select{max_order}")


def barb_config():
    """Single-Tikhonov stand-in: every step collapses to one CMVM component."""
    red = ReductionConfig(epsilon=np.inf, max_order=1)
    return SpaConfig(reduction=red, slip_recovery=False, name="barb")


# compiled steps ---------------------------------------------------------------

@njit(cache=True)
def _expand(logw, z, n, s, logpd, xnorm2, sigma2, approx, out_logw, out_z, counts):
    """Multiply an n-component mixture by the observation terms s[x] = r x*/sigma2."""
    M = s.size
    m = 0
    for i in range(n):
        if logw[i] == -np.inf:
            continue
        k0 = abs(z[i])
        base = _log_i0_fast(k0) if approx else _log_i0(k0)
        counts[0] += 2
        counts[1] += 1
        for x in range(M):
            if logpd[x] == -np.inf:
                continue
            Z = z[i] + s[x]
            kz = abs(Z)
            # |Z|^2, I0 lookup, weight product alpha * P_d * ratio
            counts[0] += 4
            counts[1] += 1
            if approx:
                li = _log_i0_fast(kz)
            else:
                li = _log_i0(kz)
            out_logw[m] = logw[i] + logpd[x] + li - base - 0.5 * xnorm2[x] / sigma2
            out_z[m] = Z
            m += 1
    norm = _logsumexp(out_logw, m)
    counts[0] += m
    for t in range(m):
        out_logw[t] -= norm
    return m


@njit(cache=True)
def _predict(z, n, sd2, counts):
    if sd2 == 0.0:
        return
    for i in range(n):
        z[i] = z[i] / (1.0 + abs(z[i]) * sd2)
    counts[0] += 4 * n
    counts[1] += n


@njit(cache=True)
def _obs_terms(r, points, sigma2, logpd, counts):
    M = points.size
    s = np.empty(M, dtype=np.complex128)
    rs = r / sigma2
    counts[0] += 2
    for x in range(M):
        if logpd[x] == -np.inf:
            s[x] = 0j
            continue
        s[x] = rs * points[x].conjugate()
        counts[0] += 4
    return s


@njit(cache=True)
def _pass_kernel(r, logpd, points, is_pilot, sigma2, sd2,
                 eps, lmax, kl_mode, select, use_max, cmvm_mode, simplified, kappa_max,
                 min_logw, slip, approx, counts, out_logw, out_z, out_n, out_phi):
    K = r.size
    M = points.size
    cap = out_z.shape[1]
    xnorm2 = np.empty(M)
    for x in range(M):
        xnorm2[x] = abs(points[x]) ** 2
    out_logw[0, 0] = 0.0
    out_z[0, 0] = 0j
    out_n[0] = 1
    out_phi[0] = 1.0
    qw = np.empty(cap + 1)
    qz = np.empty(cap + 1, dtype=np.complex128)
    for k in range(1, K):
        n = out_n[k - 1]
        phi = out_phi[k - 1]
        t = 1.0
        if slip and is_pilot[k - 1] and phi < 1.0:
            lp = math.log(phi)
            counts[0] += n + 1
            for i in range(n):
                qw[i] = out_logw[k - 1, i] + lp
                qz[i] = out_z[k - 1, i]
            qw[n] = math.log1p(-phi)
            qz[n] = 0j
            n += 1
        else:
            for i in range(n):
                qw[i] = out_logw[k - 1, i]
                qz[i] = out_z[k - 1, i]
            if slip and not is_pilot[k - 1]:
                t = phi
        s = _obs_terms(r[k - 1], points, sigma2, logpd[k - 1], counts)
        big = n * M
        ew = np.empty(big)
        ez = np.empty(big, dtype=np.complex128)
        m = _expand(qw, qz, n, s, logpd[k - 1], xnorm2, sigma2, approx, ew, ez, counts)
        _predict(ez, m, sd2, counts)
        rw = np.empty(m)
        rz = np.empty(m, dtype=np.complex128)
        assign = np.empty(m, dtype=np.int64)
        j, log_kept = _reduce(ew, ez, m, eps, lmax, kl_mode, select, use_max, cmvm_mode,
                              simplified, kappa_max, min_logw, rw, rz, assign, counts)
        if j > cap:
            raise ValueError("message order exceeded storage capacity")
        for i in range(j):
            out_logw[k, i] = rw[i]
            out_z[k, i] = rz[i]
        out_n[k] = j
        if slip:
            counts[0] += 1
            out_phi[k] = min(1.0, t * math.exp(log_kept))
        else:
            out_phi[k] = 1.0


@njit(cache=True)
def _pu_kernel(r, points, sigma2, f_logw, f_z, f_n, f_phi, b_logw, b_z, b_n, b_phi,
               slip, llr_mode, counts, out):
    K = r.size
    M = points.size
    cap_f = f_z.shape[1]
    cap_b = b_z.shape[1]
    fw = np.empty(cap_f + 1)
    fz = np.empty(cap_f + 1, dtype=np.complex128)
    fl = np.empty(cap_f + 1)
    bw = np.empty(cap_b + 1)
    bz = np.empty(cap_b + 1, dtype=np.complex128)
    bl = np.empty(cap_b + 1)
    terms = np.empty((cap_f + 1) * (cap_b + 1))
    for k in range(K):
        nf = _q_side(f_logw[k], f_z[k], f_n[k], f_phi[k], slip, llr_mode, fw, fz, fl, counts)
        nb = _q_side(b_logw[k], b_z[k], b_n[k], b_phi[k], slip, llr_mode, bw, bz, bl, counts)
        rs = r[k] / sigma2
        for x in range(M):
            s = rs * points[x].conjugate()
            c = -0.5 * abs(points[x]) ** 2 / sigma2
            counts[0] += 4
            t = 0
            for i in range(nf):
                for jj in range(nb):
                    kz = abs(fz[i] + bz[jj] + s)
                    # |Z|^2, one lookup, times the per-pair weight
                    counts[0] += 3
                    counts[1] += 1
                    if llr_mode == 0:
                        li = _log_i0(kz)
                    elif llr_mode == 1:
                        li = _log_i0_fast(kz)
                    else:
                        li = kz
                    terms[t] = fw[i] + bw[jj] + li - fl[i] - bl[jj]
                    t += 1
            out[k, x] = _logsumexp(terms, t) + c
        # per-pair weights alpha_i beta_j / (I0_i I0_j), then normalization
        counts[0] += 2 * nf * nb + M + 2
        norm = _logsumexp(out[k], M)
        for x in range(M):
            out[k, x] -= norm


@njit(cache=True)
def _q_side(logw, z, n, phi, slip, llr_mode, ow, oz, ol, counts):
    # message as seen by the likelihood: phi * p + (1 - phi) * uniform
    lp = 0.0
    if slip and phi < 1.0:
        lp = math.log(phi)
    for i in range(n):
        ow[i] = logw[i] + lp
        oz[i] = z[i]
        k = abs(z[i])
        if llr_mode == 0:
            ol[i] = _log_i0(k)
        elif llr_mode == 1:
            ol[i] = _log_i0_fast(k)
        else:
            ol[i] = k
        counts[0] += 2
        counts[1] += 1
    m = n
    if slip and phi < 1.0:
        counts[0] += n + 1
        ow[m] = math.log1p(-phi)
        oz[m] = 0j
        ol[m] = 0.0
        m += 1
    return m


# public API -------------------------------------------------------------------

def predict(mix: TikhonovMixture, sigma_delta: float, counts=None):
    """Wiener step in closed form: z -> z / (1 + |z| sigma_delta^2); weights unchanged."""
    _require_normalized(mix)
    z = mix.z.copy()
    _predict(z, z.size, float(sigma_delta) ** 2, new_counter() if counts is None else counts)
    return TikhonovMixture(mix.logw.copy(), z)


def expand(mix: TikhonovMixture, log_belief, r, sigma2, constellation: Constellation,
           approx_bessel=False, counts=None):
    """Product of ``mix`` with the observation message of one symbol, as an N*M mixture."""
    _require_normalized(mix)
    lb = np.asarray(log_belief, dtype=float)
    counts = new_counter() if counts is None else counts
    s = _obs_terms(complex(r), constellation.points, float(sigma2), lb, counts)
    xnorm2 = np.abs(constellation.points) ** 2
    big = mix.order * constellation.M
    ow = np.empty(big)
    oz = np.empty(big, dtype=complex)
    m = _expand(mix.logw, mix.z, mix.order, s, lb, xnorm2, float(sigma2), approx_bessel,
                ow, oz, counts)
    return TikhonovMixture(ow[:m].copy(), oz[:m].copy())


@dataclass
class MessageSet:
    """Forward and/or backward messages for every symbol of a block.

    Row k of ``*_logw``/``*_z`` holds the first ``*_n[k]`` components of the
    message at symbol k.
    """

    f_logw: Optional[np.ndarray] = None
    f_z: Optional[np.ndarray] = None
    f_n: Optional[np.ndarray] = None
    f_phi: Optional[np.ndarray] = None
    b_logw: Optional[np.ndarray] = None
    b_z: Optional[np.ndarray] = None
    b_n: Optional[np.ndarray] = None
    b_phi: Optional[np.ndarray] = None

    @classmethod
    def join(cls, fwd: "MessageSet", bwd: "MessageSet"):
        return cls(fwd.f_logw, fwd.f_z, fwd.f_n, fwd.f_phi,
                   bwd.b_logw, bwd.b_z, bwd.b_n, bwd.b_phi)

    @property
    def K(self):
        return (self.f_n if self.f_n is not None else self.b_n).size

    def forward(self, k) -> TikhonovMixture:
        n = self.f_n[k]
        return TikhonovMixture(self.f_logw[k, :n].copy(), self.f_z[k, :n].copy())

    def backward(self, k) -> TikhonovMixture:
        n = self.b_n[k]
        return TikhonovMixture(self.b_logw[k, :n].copy(), self.b_z[k, :n].copy())


def _as_log_beliefs(beliefs):
    b = np.asarray(beliefs, dtype=float)
    if b.ndim != 2:
        raise ValueError("beliefs must be a K x M array of log-probabilities")
    return b


def _run_pass(r, log_beliefs, pilot_mask, sigma2, sigma_delta, cfg: SpaConfig, counts):
    K, M = log_beliefs.shape
    if r.size != K or pilot_mask.size != K:
        raise ValueError("realization, beliefs and frame disagree on K")
    cap = cfg.capacity
    out_logw = np.full((K, cap), -np.inf)
    out_z = np.zeros((K, cap), dtype=complex)
    out_n = np.zeros(K, dtype=np.int64)
    out_phi = np.ones(K)
    points = Constellation(M).points
    _pass_kernel(np.ascontiguousarray(r), np.ascontiguousarray(log_beliefs), points,
                 np.ascontiguousarray(pilot_mask), float(sigma2), float(sigma_delta) ** 2,
                 *cfg.reduction.kernel_args(), cfg.slip_recovery, cfg.approx_bessel,
                 new_counter() if counts is None else counts,
                 out_logw, out_z, out_n, out_phi)
    return out_logw, out_z, out_n, out_phi


def forward_pass(realization: ChannelRealization, log_beliefs, frame: FrameConfig,
                 cfg: SpaConfig, counts=None) -> MessageSet:
    """Causal messages p_f(theta_k), k = 0..K-1, starting from the uniform density.

    ``log_beliefs`` is a K x M array of log P_d(c_k = x) (pilots as indicators).
    """
    lb = _as_log_beliefs(log_beliefs)
    w, z, n, phi = _run_pass(realization.r, lb, frame.pilot_mask, realization.sigma2,
                             realization.sigma_delta, cfg, counts)
    return MessageSet(f_logw=w, f_z=z, f_n=n, f_phi=phi)


def backward_pass(realization: ChannelRealization, log_beliefs, frame: FrameConfig,
                  cfg: SpaConfig, counts=None) -> MessageSet:
    """Anti-causal messages p_b(theta_k): the forward recursion run on the reversed block."""
    lb = _as_log_beliefs(log_beliefs)
    w, z, n, phi = _run_pass(realization.r[::-1], lb[::-1], frame.pilot_mask[::-1],
                             realization.sigma2, realization.sigma_delta, cfg, counts)
    return MessageSet(b_logw=w[::-1].copy(), b_z=z[::-1].copy(), b_n=n[::-1].copy(),
                      b_phi=phi[::-1].copy())


def compute_pu_all(msgs: MessageSet, realization: ChannelRealization,
                   constellation: Constellation, cfg: SpaConfig, counts=None):
    """Normalized log P_u(c_k = x) for every symbol, shape K x M."""
    K = msgs.K
    out = np.empty((K, constellation.M))
    _pu_kernel(np.ascontiguousarray(realization.r), constellation.points, float(realization.sigma2),
               msgs.f_logw, msgs.f_z, msgs.f_n, msgs.f_phi,
               msgs.b_logw, msgs.b_z, msgs.b_n, msgs.b_phi,
               cfg.slip_recovery, LLR_MODES.index(cfg.llr_log_approx),
               new_counter() if counts is None else counts, out)
    return out


def compute_pu(msgs: MessageSet, r_k, sigma2, constellation: Constellation, k,
               cfg: Optional[SpaConfig] = None):
    """Symbol likelihood P_u(c_k) (probabilities, summing to one) at a single index.

    Combines the forward and backward messages, each mixed with the uniform
    density by its slip confidence when slip recovery is enabled.
    """
    cfg = cfg or SpaConfig()
    sl = slice(k, k + 1)
    sub = MessageSet(msgs.f_logw[sl], msgs.f_z[sl], msgs.f_n[sl], msgs.f_phi[sl],
                     msgs.b_logw[sl], msgs.b_z[sl], msgs.b_n[sl], msgs.b_phi[sl])
    real = ChannelRealization(np.zeros(1), np.array([r_k], dtype=complex), sigma2, 0.0)
    return np.exp(compute_pu_all(sub, real, constellation, cfg)[0])


# turbo loop -------------------------------------------------------------------

@dataclass
class IterationStats:
    iteration: int
    mean_order: float
    min_phi: float
    converged: bool
    bp_iterations: int
    bit_errors: Optional[int] = None
    muls: int = 0
    luts: int = 0


@dataclass
class TurboResult:
    info_bits: np.ndarray
    codeword: np.ndarray
    converged: bool
    iterations: list
    log_pu: np.ndarray = field(default=None, repr=False)


def initial_log_beliefs(frame: FrameConfig, M: int):
    lb = np.full((frame.K, M), -math.log(M))
    pil = frame.pilot_mask
    lb[pil] = -np.inf
    lb[pil, frame.pilot_symbol] = 0.0
    return lb


def run_turbo(realization: ChannelRealization, frame: FrameConfig, code, n_outer: int,
              cfg, constellation: Constellation, *, bp_iters=50, early_stop=True,
              extrinsic=True, llr_method="exact", true_codeword=None, instrument=False):
    """Alternate phase-message detection and LDPC decoding.

    ``cfg`` is any detector configuration with a ``detect`` method (mixture
    engine or the discrete-phase baseline). ``code`` may be ``None`` for an
    uncoded (or all-pilot) block, in which case a single detection pass runs.
    """
    from .ldpc import LLR_CLAMP, bits_to_symbol_beliefs, decode_bp, symbol_pu_to_bit_llrs

    if n_outer < 1:
        raise ValueError("n_outer must be >= 1")
    M = constellation.M
    lb = initial_log_beliefs(frame, M)
    data = ~frame.pilot_mask
    iters = []
    hard = np.zeros(0, dtype=np.uint8)
    converged = False
    log_pu = None
    for it in range(n_outer):
        counts = new_counter()
        log_pu, stats = cfg.detect(realization, lb, frame, constellation,
                                   counts=counts if instrument else None)
        if code is None or frame.n_data == 0:
            hard = constellation.indices_to_bits(np.argmax(log_pu[data], axis=1)) if frame.n_data else hard
            iters.append(IterationStats(it + 1, stats["mean_order"], stats["min_phi"], True, 0,
                                        muls=int(counts[0]), luts=int(counts[1])))
            converged = True
            break
        # clamp here so the extrinsic subtraction matches what the decoder saw
        llr_ch = np.clip(symbol_pu_to_bit_llrs(log_pu[data], constellation, method=llr_method),
                         -LLR_CLAMP, LLR_CLAMP)
        hard, post, ok, used = decode_bp(code, llr_ch, bp_iters)
        errs = None if true_codeword is None else int(np.count_nonzero(hard != true_codeword))
        iters.append(IterationStats(it + 1, stats["mean_order"], stats["min_phi"], bool(ok), used,
                                    errs, int(counts[0]), int(counts[1])))
        converged = bool(ok)
        if ok and early_stop:
            break
        feedback = post - llr_ch if extrinsic else post
        lb[data] = bits_to_symbol_beliefs(feedback, constellation)
    info = code.extract_info(hard) if code is not None else hard
    return TurboResult(info, hard, converged, iters, log_pu)
