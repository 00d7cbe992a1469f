"""Wiener phase-noise AWGN channel, Gray-labelled MPSK and pilot framing.

Noise convention: ``sigma2`` is the per-dimension (real or imaginary) noise
variance, so the complex noise power is ``2*sigma2`` and the per-symbol
likelihood is exp(-|r - x e^{j theta}|^2 / (2 sigma2)) literally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circular import LOG_TWO_PI, TikhonovMixture, _log_i0


class Constellation:
    """Unit-energy MPSK with Gray labels; point ``i`` sits at angle 2*pi*i/M."""

    def __init__(self, M: int):
        if M < 2 or M & (M - 1):
            raise ValueError("M must be a power of two >= 2")
        self.M = M
        self.bits_per_symbol = int(np.log2(M))
        self.points = np.exp(2j * np.pi * np.arange(M) / M)
        idx = np.arange(M)
        self.labels = idx ^ (idx >> 1)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        # bit_table[i, b] is bit b (MSB first) of the label of point i
        self.bit_table = ((self.labels[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
        self._by_label = np.argsort(self.labels)

    def __repr__(self):
        return f"Constellation(M={self.M})"

    def map_bits(self, bits):
        """Map a bit array (length multiple of log2 M) to point indices."""
        b = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_symbol)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return self._by_label[b @ weights]

    def indices_to_bits(self, idx):
        return self.bit_table[np.asarray(idx)].reshape(-1)


@dataclass(frozen=True)
class FrameConfig:
    """Pilot layout of a block of ``K`` symbols.

    Position ``k`` carries a pilot if ``k < preamble_len`` or, with a nonzero
    ``pilot_period``, if ``(k - preamble_len + 1) % pilot_period == 0``. With a
    one-symbol preamble and period P that is one pilot every P symbols starting
    at 0.
    """

    K: int
    pilot_period: int = 20
    preamble_len: int = 1
    pilot_symbol: int = 0

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.pilot_period < 0 or self.preamble_len < 0:
            raise ValueError("pilot_period and preamble_len must be >= 0")

    @classmethod
    def for_data(cls, n_data, pilot_period=20, preamble_len=1, pilot_symbol=0):
        """Shortest frame with exactly ``n_data`` data positions."""
        K = n_data + preamble_len
        while True:
            f = cls(K, pilot_period, preamble_len, pilot_symbol)
            nd = int(np.count_nonzero(~f.pilot_mask))
            if nd == n_data:
                return f
            K += n_data - nd

    @property
    def pilot_mask(self):
        k = np.arange(self.K)
        mask = k < self.preamble_len
        if self.pilot_period > 0:
            mask |= (k >= self.preamble_len) & ((k - self.preamble_len + 1) % self.pilot_period == 0)
        return mask

    @property
    def n_pilots(self):
        return int(np.count_nonzero(self.pilot_mask))

    @property
    def n_data(self):
        return self.K - self.n_pilots

    def assemble(self, data_idx):
        """Interleave data point indices with pilots."""
        data_idx = np.asarray(data_idx)
        if data_idx.size != self.n_data:
            raise ValueError(f"expected {self.n_data} data symbols, got {data_idx.size}")
        out = np.full(self.K, self.pilot_symbol, dtype=np.int64)
        out[~self.pilot_mask] = data_idx
        return out


@dataclass
class ChannelRealization:
    theta: np.ndarray
    r: np.ndarray
    sigma2: float
    sigma_delta: float
    seed: object = None
    symbols: np.ndarray = field(default=None, repr=False)

    @property
    def K(self):
        return self.r.size


def ebn0_to_sigma2(ebn0_db, bits_per_symbol, code_rate=1.0, n_data=1, K=1):
    """Per-dimension noise variance for unit-energy symbols.

    Every transmitted symbol (pilots included) spends unit energy, all of it
    charged to the information bits: Eb = K / (code_rate * n_data * bits_per_symbol).
    """
    eb = K / (code_rate * n_data * bits_per_symbol)
    n0 = eb / 10.0 ** (ebn0_db / 10.0)
    return n0 / 2.0


def generate_realization(symbols, ebn0_db=None, sigma_delta=0.0, seed=None, *,
                         sigma2=None, bits_per_symbol=1, code_rate=1.0, n_data=None):
    """Pass complex ``symbols`` through the Wiener phase-noise AWGN channel.

    Give either ``ebn0_db`` (with the framing numbers needed for the Eb
    convention) or ``sigma2`` directly. ``sigma2=0`` is a noiseless channel.
    """
    symbols = np.asarray(symbols, dtype=complex)
    K = symbols.size
    if sigma_delta < 0:
        raise ValueError("sigma_delta must be >= 0")
    if sigma2 is None:
        if ebn0_db is None:
            raise ValueError("need ebn0_db or sigma2")
        sigma2 = ebn0_to_sigma2(ebn0_db, bits_per_symbol, code_rate,
                                K if n_data is None else n_data, K)
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0.0, 2.0 * np.pi)
    steps = rng.normal(0.0, sigma_delta, K - 1) if sigma_delta > 0 else np.zeros(K - 1)
    theta = np.mod(theta0 + np.concatenate([[0.0], np.cumsum(steps)]), 2.0 * np.pi)
    noise = np.sqrt(sigma2) * (rng.standard_normal(K) + 1j * rng.standard_normal(K))
    r = symbols * np.exp(1j * theta) + noise
    return ChannelRealization(theta, r, float(sigma2), float(sigma_delta), seed, symbols)


def likelihood_tikhonov(r_k, x, sigma2):
    """Write exp(-|r - x e^{j theta}|^2 / (2 sigma2)) as coeff * Tikhonov kernel.

    Returns ``(log_coeff, z)`` with z = r x* / sigma2 and
    log_coeff = -(|r|^2 + |x|^2) / (2 sigma2).
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    log_coeff = -(abs(r_k) ** 2 + abs(x) ** 2) / (2.0 * sigma2)
    return float(log_coeff), complex(r_k * np.conj(x) / sigma2)


def pd_message(log_belief, r_k, sigma2, constellation: Constellation):
    """Observation message p_d(theta) = sum_x P_d(x) e(x, theta) as a mixture.

    The returned weights are the unnormalized lambda_x = P_d(x) * coeff_x * 2 pi I0(|z_x|),
    i.e. the mass each term contributes, so ``pdf`` of the normalized mixture is
    the normalized p_d. Symbols with zero belief are omitted.
    """
    lb = np.asarray(log_belief, dtype=float)
    keep = np.isfinite(lb)
    if not np.any(keep):
        raise ValueError("belief has no support")
    logw, zs = [], []
    for i in np.flatnonzero(keep):
        lc, z = likelihood_tikhonov(r_k, constellation.points[i], sigma2)
        logw.append(lb[i] + lc + LOG_TWO_PI + _log_i0(abs(z)))
        zs.append(z)
    return TikhonovMixture(np.array(logw), np.array(zs))
