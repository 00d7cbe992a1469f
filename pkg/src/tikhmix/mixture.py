"""KL-threshold reduction of Tikhonov mixtures.

Both reducers share one compiled kernel. It repeatedly takes the heaviest
remaining component as a lead, gathers every component whose KL divergence to
the lead is at most ``epsilon``, and replaces the group by its CMVM collapse (or
by the lead itself under the ``select`` strategy). Without an order cap every
component ends up in some cluster and KL(input || output) <= epsilon. With a cap
the leftover mass is dropped and the slip confidence is scaled by the mass
that was kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .circular import (
    KAPPA_MAX,
    KL_MODES,
    TikhonovMixture,
    _cmvm,
    _kl,
    _require_normalized,
)

# Counter slots shared by every instrumented kernel. Sites are charged what a
# linear-domain implementation would spend: real multiplies (divisions
# included) and single-argument table lookups, with functions of |z| tabulated
# on |z|^2. Log-domain bookkeeping (logsumexp, bisection) is not charged.
MULS = 0
LUT = 1


def new_counter():
    return np.zeros(2, dtype=np.int64)


@dataclass(frozen=True)
class ReductionConfig:
    """Settings for :func:`reduce_unbounded` / :func:`reduce_limited`.

    ``max_order=None`` means no cap. ``min_weight`` drops components whose
    normalized weight is below it before clustering; 0 disables that, which
    keeps the KL guarantee exact.
    """

    epsilon: float = 4.0
    max_order: Optional[int] = None
    kl_mode: str = "exact"
    strategy: str = "cmvm"
    # "max" approximates each cluster weight by its largest member; totals and
    # output normalization stay exact
    weight_arith: str = "logsumexp"
    cmvm_mode: str = "exact"
    cmvm_simplified: bool = False
    min_weight: float = 0.0
    kappa_max: float = KAPPA_MAX

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_order is not None and self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if self.kl_mode not in KL_MODES:
            raise ValueError(f"unknown kl_mode {self.kl_mode!r}")
        if self.strategy not in ("cmvm", "select"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.weight_arith not in ("logsumexp", "max"):
            raise ValueError(f"unknown weight_arith {self.weight_arith!r}")
        if self.cmvm_mode not in ("exact", "approx"):
            raise ValueError(f"unknown cmvm_mode {self.cmvm_mode!r}")
        if not 0.0 <= self.min_weight < 1.0:
            raise ValueError("min_weight must lie in [0, 1)")

    def kernel_args(self):
        """Positional scalars consumed by the compiled kernels."""
        eps = float(self.epsilon) if np.isfinite(self.epsilon) else 1e300
        return (
            eps,
            -1 if self.max_order is None else int(self.max_order),
            KL_MODES.index(self.kl_mode),
            self.strategy == "select",
            self.weight_arith == "max",
            0 if self.cmvm_mode == "exact" else 1,
            bool(self.cmvm_simplified),
            float(self.kappa_max),
            math.log(self.min_weight) if self.min_weight > 0 else -np.inf,
        )


@njit(cache=True)
def _combine(logw, idx, m, use_max):
    # log of sum_i exp(logw[idx[i]]); ``max`` replaces the sum by its largest term
    best = -np.inf
    for t in range(m):
        if logw[idx[t]] > best:
            best = logw[idx[t]]
    if use_max or m == 1 or best == -np.inf:
        return best
    s = 0.0
    for t in range(m):
        s += math.exp(logw[idx[t]] - best)
    return best + math.log(s)


@njit(cache=True)
def _kl_cost(kl_mode, counts):
    # per pair, with log I0 and A(kappa) of each component looked up once upstream
    if kl_mode == 2:
        counts[0] += 3
    elif kl_mode == 1:
        counts[0] += 5
        counts[1] += 1
    else:
        counts[0] += 4
        counts[1] += 1


@njit(cache=True)
def _reduce(logw, z, n, eps, lmax, kl_mode, select, use_max, cmvm_mode,
            simplified, kappa_max, min_logw, out_logw, out_z, assign, counts):
    """Cluster ``n`` components into ``out_*``.

    Returns ``(n_out, log_kept)`` where ``log_kept`` is the log of the kept mass
    in the input's own normalization. ``assign[i]`` receives the output cluster
    of component ``i`` or -1 when it was dropped.
    """
    all_idx = np.arange(n)
    norm = _combine(logw, all_idx, n, False)
    alive = np.zeros(n, dtype=np.bool_)
    n_alive = 0
    for i in range(n):
        assign[i] = -1
        if logw[i] - norm >= min_logw and logw[i] > -np.inf:
            alive[i] = True
            n_alive += 1
    cap = n if lmax < 0 else lmax
    idx = np.empty(n, dtype=np.int64)
    sub_w = np.empty(n)
    sub_z = np.empty(n, dtype=np.complex128)
    j = 0
    while j < cap and n_alive > 0:
        lead = -1
        for i in range(n):
            if alive[i] and (lead < 0 or logw[i] > logw[lead]):
                lead = i
        m = 0
        for i in range(n):
            if not alive[i]:
                continue
            if i == lead:
                idx[m] = i
                m += 1
                continue
            if eps >= 1e300:
                # infinite threshold admits everything without evaluating KL
                idx[m] = i
                m += 1
                continue
            _kl_cost(kl_mode, counts)
            if _kl(z[i], z[lead], kl_mode) <= eps:
                idx[m] = i
                m += 1
        beta = _combine(logw, idx, m, use_max)
        if select or m == 1:
            comp = z[lead]
        else:
            for t in range(m):
                sub_w[t] = logw[idx[t]]
                sub_z[t] = z[idx[t]]
            comp, _ = _cmvm(sub_w, sub_z, m, cmvm_mode, simplified, kappa_max)
            # weighted unit vectors scaled by A(kappa), then |m| and one inverse lookup
            if cmvm_mode == 0:
                counts[0] += 4 * m + 5
                counts[1] += m + 2
            else:
                counts[0] += 5 * m + 5
                counts[1] += 2
        out_logw[j] = beta - norm
        out_z[j] = comp
        for t in range(m):
            alive[idx[t]] = False
            assign[idx[t]] = j
        n_alive -= m
        j += 1
    jidx = np.arange(j)
    log_kept = _combine(out_logw, jidx, j, False)
    counts[0] += j + 1
    for t in range(j):
        out_logw[t] -= log_kept
    return j, log_kept


def _run(f: TikhonovMixture, cfg: ReductionConfig, counts=None):
    _require_normalized(f)
    n = f.order
    out_logw = np.empty(n)
    out_z = np.empty(n, dtype=complex)
    assign = np.empty(n, dtype=np.int64)
    if counts is None:
        counts = new_counter()
    j, log_kept = _reduce(f.logw, f.z, n, *cfg.kernel_args(), out_logw, out_z, assign, counts)
    return TikhonovMixture(out_logw[:j].copy(), out_z[:j].copy()), float(log_kept), assign


def reduce_unbounded(f: TikhonovMixture, cfg: ReductionConfig, full_output=False, counts=None):
    """Reduce ``f`` so that KL(f || output) <= cfg.epsilon, with no order cap.

    With ``full_output`` also returns the cluster index of every input component.
    """
    if cfg.max_order is not None:
        raise ValueError("reduce_unbounded needs max_order=None")
    g, _, assign = _run(f, cfg, counts)
    return (g, assign) if full_output else g


def reduce_limited(f: TikhonovMixture, cfg: ReductionConfig, phi_prev: float,
                   full_output=False, counts=None):
    """Reduce ``f`` to at most ``cfg.max_order`` clusters and update the slip confidence.

    Returns ``(g, phi_new)`` with ``phi_new = phi_prev * (kept mass)``.
    """
    if not 0.0 < phi_prev <= 1.0:
        raise ValueError("slip confidence must lie in (0, 1]")
    g, log_kept, assign = _run(f, cfg, counts)
    phi = min(1.0, phi_prev * math.exp(log_kept))
    if full_output:
        return g, phi, assign
    return g, phi


def pll_loop_gain(z_prev, r, soft_symbol, sigma2):
    """Adaptive gain |r||c| / (G sigma^2), G = |z + r c*/sigma^2|."""
    g = abs(z_prev + r * np.conj(soft_symbol) / sigma2)
    return abs(r) * abs(soft_symbol) / (g * sigma2)


def pll_step_diagnostic(z_prev, r, soft_symbol, sigma2, sigma_delta2=0.0):
    """High-SNR single-trajectory view of one tracking step.

    Returns the next circular-mean estimate in [0, 2*pi) from a first-order
    soft-decision PLL update. ``sigma_delta2`` only shrinks the concentration,
    not the mean, so it does not enter the result.
    """
    theta_prev = np.angle(z_prev)
    err = np.angle(r) - np.angle(soft_symbol) - theta_prev
    err = (err + np.pi) % (2 * np.pi) - np.pi
    theta = theta_prev + pll_loop_gain(z_prev, r, soft_symbol, sigma2) * err
    return float(np.mod(theta, 2 * np.pi))
