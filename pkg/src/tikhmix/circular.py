"""Tikhonov (von Mises) primitives: Bessel helpers, circular moments, KL and CMVM.

A Tikhonov density is carried as a single complex number ``z = kappa * exp(1j*mu)``::

    t(theta) = exp(Re[z exp(-1j*theta)]) / (2*pi*I0(|z|))

``kappa == 0`` is the uniform density on the circle. Mixtures store log-weights
next to their complex parameters (see :class:`TikhonovMixture`).

The scalar kernels (prefixed ``_``) are numba-compiled so the message-passing
recursions in :mod:`tikhmix.spa` can call them from compiled loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
LOG_TWO_PI = math.log(TWO_PI)
KAPPA_MAX = 1.0e6

# below this concentration the large-kappa approximations are not used
APPROX_MIN_KAPPA = 2.0
# exact minus approx log I0 at APPROX_MIN_KAPPA; the gap decreases with kappa,
# so this is the worst case over [2, inf)
APPROX_LOG_I0_GAP = 0.0895056649676016
_SERIES_LIMIT = 20.0

MODES = ("exact", "approx")
KL_MODES = ("exact", "approx", "coarse")


# ---------------------------------------------------------------------------
# compiled scalar kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _i0_i1_scaled(x):
    """Return (I0(x) e^-x, I1(x) e^-x) for x >= 0."""
    if x <= _SERIES_LIMIT:
        q = 0.25 * x * x
        t0 = 1.0
        s0 = 1.0
        t1 = 0.5 * x
        s1 = t1
        k = 1
        while True:
            t0 *= q / (k * k)
            t1 *= q / (k * (k + 1))
            s0 += t0
            s1 += t1
            if t0 < 1e-17 * s0 and t1 < 1e-17 * s1 + 1e-300:
                break
            k += 1
            if k > 500:
                break
        e = math.exp(-x)
        return s0 * e, s1 * e
    # asymptotic expansion; terms shrink while k < 2x, x > 20 keeps them tiny
    inv8x = 1.0 / (8.0 * x)
    t0 = 1.0
    s0 = 1.0
    t1 = 1.0
    s1 = 1.0
    for k in range(1, 40):
        odd = 2.0 * k - 1.0
        t0 *= odd * odd * inv8x / k
        t1 *= (odd * odd - 4.0) * inv8x / k
        s0 += t0
        s1 += t1
        if abs(t0) < 1e-17 * s0 and abs(t1) < 1e-17 * abs(s1):
            break
    c = 1.0 / math.sqrt(TWO_PI * x)
    return c * s0, c * s1


@njit(cache=True)
def _log_i0(x):
    if x <= _SERIES_LIMIT:
        # log1p of the series tail keeps relative accuracy as x -> 0
        q = 0.25 * x * x
        t = 1.0
        tail = 0.0
        for k in range(1, 500):
            t *= q / (k * k)
            tail += t
            if t < 1e-17 * (1.0 + tail):
                break
        return math.log1p(tail)
    s0, _ = _i0_i1_scaled(x)
    return x + math.log(s0)


@njit(cache=True)
def _log_i0_approx(x):
    return x - 0.5 * math.log(x) - 0.5 * LOG_TWO_PI


@njit(cache=True)
def _log_i0_fast(x):
    # approximation where valid, exact near the origin
    if x > APPROX_MIN_KAPPA:
        return _log_i0_approx(x)
    return _log_i0(x)


@njit(cache=True)
def _ratio(x):
    if x <= 0.0:
        return 0.0
    s0, s1 = _i0_i1_scaled(x)
    return s1 / s0


@njit(cache=True)
def _ratio_approx(x):
    if x <= 0.0:
        return 0.0
    return max(0.0, 1.0 - 0.5 / x)


@njit(cache=True)
def _ratio_fast(x):
    if x > APPROX_MIN_KAPPA:
        return 1.0 - 0.5 / x
    return _ratio(x)


@njit(cache=True)
def _invert_ratio(rho, kappa_max):
    """Solve I1(k)/I0(k) = rho by bisection. Returns (kappa, clamped)."""
    if rho <= 0.0:
        return 0.0, False
    if rho >= _ratio(kappa_max):
        return kappa_max, True
    lo = 0.0
    hi = kappa_max
    # A(k) < 1 - 1/(2k) gives a lower bound for the root
    if rho > 0.5:
        lo = 0.5 / (1.0 - rho)
        if lo > hi:
            lo = 0.0
    while hi - lo > 1e-10 * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if _ratio(mid) < rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


@njit(cache=True)
def _wrap(a):
    a = a % TWO_PI
    if a < 0.0:
        a += TWO_PI
    return a


@njit(cache=True)
def _kl(za, zb, mode):
    """KL(t_a || t_b). mode: 0 exact, 1 approx, 2 coarse."""
    ka = abs(za)
    kb = abs(zb)
    if ka > 0.0 and kb > 0.0:
        c = math.cos(math.atan2(za.imag, za.real) - math.atan2(zb.imag, zb.real))
    else:
        c = 0.0
    if mode == 2:
        return kb * (1.0 - c)
    if mode == 1:
        d = _log_i0_fast(kb) - _log_i0_fast(ka) + _ratio_fast(ka) * (ka - kb * c)
    else:
        d = _log_i0(kb) - _log_i0(ka) + _ratio(ka) * (ka - kb * c)
    return max(d, 0.0)


@njit(cache=True)
def _logsumexp(a, n):
    m = -np.inf
    for i in range(n):
        if a[i] > m:
            m = a[i]
    if m == -np.inf:
        return m
    s = 0.0
    for i in range(n):
        s += math.exp(a[i] - m)
    return m + math.log(s)


@njit(cache=True)
def _cmvm(logw, z, n, mode, simplified, kappa_max):
    """Collapse an n-component mixture (log-weights need not be normalized).

    mode 0 exact, 1 approx. Returns (z_hat, clamped).
    """
    norm = _logsumexp(logw, n)
    m = 0j
    for i in range(n):
        k = abs(z[i])
        if k == 0.0:
            continue
        a = math.exp(logw[i] - norm)
        r = _ratio(k) if mode == 0 else _ratio_fast(k)
        m += a * r * (z[i] / k)
    rho = abs(m)
    if rho == 0.0:
        return 0j, False
    mu = math.atan2(m.imag, m.real)
    if mode == 0:
        kappa, clamped = _invert_ratio(rho, kappa_max)
    elif simplified:
        s = 0.0
        for i in range(n):
            k = abs(z[i])
            a = math.exp(logw[i] - norm)
            if k == 0.0:
                s = np.inf
                break
            s += a / k
        kappa = 1.0 / s
        clamped = False
    else:
        s = 0.0
        for i in range(n):
            k = abs(z[i])
            if k == 0.0:
                continue
            a = math.exp(logw[i] - norm)
            s += a * _ratio_fast(k) * math.cos(mu - math.atan2(z[i].imag, z[i].real))
        half_inv = 1.0 - s
        kappa = 0.5 / half_inv if half_inv > 0.0 else kappa_max
        clamped = False
    if kappa > kappa_max:
        kappa = kappa_max
        clamped = True
    return kappa * complex(math.cos(mu), math.sin(mu)), clamped


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _check_kappa(kappa):
    k = np.asarray(kappa, dtype=float)
    if not np.all(np.isfinite(k)) or np.any(k < 0):
        raise ValueError("kappa must be finite and nonnegative")
    return k


def log_bessel_i0(kappa, mode="exact"):
    """log I0(kappa).

    ``exact`` uses the power series below kappa=20 and the asymptotic expansion
    above it (relative error below 1e-13 everywhere). ``approx`` is
    ``kappa - log(kappa)/2 - log(2 pi)/2``, meaningful only for kappa > 2.
    """
    k = _check_kappa(kappa)
    if mode == "exact":
        out = np.vectorize(_log_i0, otypes=[float])(k)
    elif mode == "approx":
        with np.errstate(divide="ignore"):
            out = k - 0.5 * np.log(k) - 0.5 * LOG_TWO_PI
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out[()] if out.ndim == 0 else out


def bessel_ratio(kappa, mode="exact"):
    """I1(kappa)/I0(kappa); ``approx`` is max(0, 1 - 1/(2 kappa))."""
    k = _check_kappa(kappa)
    if mode == "exact":
        out = np.vectorize(_ratio, otypes=[float])(k)
    elif mode == "approx":
        out = np.vectorize(_ratio_approx, otypes=[float])(k)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out[()] if out.ndim == 0 else out


def tikhonov(kappa, mu):
    """Build the complex parameter of a Tikhonov density."""
    return complex(kappa * np.exp(1j * mu))


def wrap_angle(a):
    """Reduce angles to [0, 2*pi)."""
    return np.mod(a, TWO_PI)


def tikhonov_logpdf(z, theta):
    z = complex(z)
    k = abs(z)
    return np.real(z * np.exp(-1j * np.asarray(theta))) - LOG_TWO_PI - _log_i0(k)


@dataclass
class TikhonovMixture:
    """Tikhonov mixture with log-domain weights.

    ``logw`` and ``z`` are parallel 1-D arrays. Weights are not forced to sum to
    one on construction; call :meth:`normalized`.
    """

    logw: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.logw = np.atleast_1d(np.asarray(self.logw, dtype=float))
        self.z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        if self.logw.shape != self.z.shape or self.logw.ndim != 1:
            raise ValueError("logw and z must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("Tikhonov parameters must be finite")

    @classmethod
    def from_weights(cls, weights, z):
        w = np.asarray(weights, dtype=float)
        with np.errstate(divide="ignore"):
            return cls(np.log(w), z)

    @classmethod
    def single(cls, z):
        return cls(np.zeros(1), np.array([z], dtype=complex))

    @classmethod
    def uniform(cls):
        return cls.single(0j)

    @property
    def order(self):
        return self.z.size

    @property
    def weights(self):
        return np.exp(self.logw)

    @property
    def kappa(self):
        return np.abs(self.z)

    @property
    def mu(self):
        return wrap_angle(np.angle(self.z))

    def log_norm(self):
        if self.order == 0:
            return -np.inf
        m = np.max(self.logw)
        if not np.isfinite(m):
            return m
        return m + np.log(np.sum(np.exp(self.logw - m)))

    def is_normalized(self, tol=1e-9):
        return abs(self.log_norm()) <= tol

    def normalized(self):
        if self.order == 0:
            raise ValueError("empty mixture")
        return TikhonovMixture(self.logw - self.log_norm(), self.z.copy())

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        lw = self.logw - self.log_norm()
        out = np.zeros_like(theta)
        for a, z in zip(lw, self.z):
            out += np.exp(a + tikhonov_logpdf(z, theta))
        return out


def _require_normalized(mix):
    if mix.order == 0:
        raise ValueError("mixture has no components")
    if not mix.is_normalized():
        raise ValueError("mixture weights are not normalized")


def circular_moment(mix, mode="exact"):
    """E[exp(1j*theta)] under the mixture: sum_l a_l A(|z_l|) exp(1j*arg z_l)."""
    _require_normalized(mix)
    k = mix.kappa
    r = bessel_ratio(k, mode)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(k > 0, mix.z / np.where(k > 0, k, 1.0), 0.0)
    return complex(np.sum(mix.weights * r * unit))


def cmvm(mix, mode="exact", simplified=False, kappa_max=KAPPA_MAX, full_output=False):
    """Circular mean and variance matching: the KL-closest single Tikhonov.

    In ``exact`` mode the concentration solves I1(k)/I0(k) = |E[e^{j theta}]| by
    bisection. ``approx`` uses the large-kappa forms; with ``simplified`` the
    concentration is the harmonic mean 1/k = sum a_l/|z_l|.

    With ``full_output`` returns ``(z, clamped)`` where ``clamped`` flags that the
    concentration hit ``kappa_max``.
    """
    _require_normalized(mix)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    z, clamped = _cmvm(mix.logw, mix.z, mix.order, 0 if mode == "exact" else 1,
                       simplified, kappa_max)
    return (z, clamped) if full_output else z


def kl_tikhonov(a, b, mode="exact"):
    """KL(t_a || t_b) in nats for complex Tikhonov parameters (broadcasts).

    ``exact``: log(I0|b|/I0|a|) + A(|a|)(|a| - |b| cos(arg a - arg b)).
    ``approx``: the same with the large-kappa Bessel forms substituted.
    ``coarse``: |b| (1 - cos(arg a - arg b)).
    """
    try:
        code = KL_MODES.index(mode)
    except ValueError:
        raise ValueError(f"unknown mode {mode!r}") from None
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("Tikhonov parameters must be finite")
    out = np.vectorize(lambda x, y: _kl(x, y, code), otypes=[float])(a, b)
    return out[()] if out.ndim == 0 else out
