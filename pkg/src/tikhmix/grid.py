"""Uniform-grid densities on the circle, used as a numerical oracle.

Periodic integrands make the rectangle rule spectrally accurate, so plain sums
over a uniform grid are used for every integral here.
"""

import numpy as np
from scipy.special import logsumexp

from .circular import LOG_TWO_PI, TikhonovMixture, _log_i0

DEFAULT_POINTS = 2 ** 14


def theta_grid(n=DEFAULT_POINTS):
    return np.arange(n) * (2.0 * np.pi / n)


def tikhonov_logpdf_grid(z, theta):
    z = complex(z)
    return np.real(z * np.exp(-1j * theta)) - LOG_TWO_PI - _log_i0(abs(z))


class GridPdf:
    """Log-density sampled on ``n`` equispaced points of [0, 2*pi)."""

    def __init__(self, logp, normalize=True):
        self.logp = np.asarray(logp, dtype=float)
        self.n = self.logp.size
        self.theta = theta_grid(self.n)
        self.dtheta = 2.0 * np.pi / self.n
        if normalize:
            self.logp = self.logp - (logsumexp(self.logp) + np.log(self.dtheta))

    @classmethod
    def from_mixture(cls, mix: TikhonovMixture, n=DEFAULT_POINTS, normalize=True):
        theta = theta_grid(n)
        lw = mix.logw - mix.log_norm()
        comps = [a + tikhonov_logpdf_grid(z, theta) for a, z in zip(lw, mix.z) if np.isfinite(a)]
        return cls(logsumexp(np.vstack(comps), axis=0), normalize=normalize)

    @classmethod
    def from_values(cls, values):
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(values, dtype=float)))

    @property
    def values(self):
        return np.exp(self.logp)

    def integral(self):
        return float(np.sum(self.values) * self.dtheta)

    def moment(self):
        return complex(np.sum(self.values * np.exp(1j * self.theta)) * self.dtheta)

    def kl(self, other: "GridPdf"):
        """KL(self || other) by grid summation."""
        p = self.values
        mask = p > 0
        return float(np.sum(p[mask] * (self.logp[mask] - other.logp[mask])) * self.dtheta)

    def multiply(self, other: "GridPdf", normalize=True):
        return GridPdf(self.logp + other.logp, normalize=normalize)

    def convolve(self, kernel_values):
        """Circular convolution with a kernel sampled on the same grid."""
        f = np.fft.rfft(self.values)
        g = np.fft.rfft(kernel_values)
        out = np.fft.irfft(f * g, n=self.n) * self.dtheta
        return GridPdf.from_values(np.maximum(out, 0.0))


def grid_kl(f: TikhonovMixture, g: TikhonovMixture, n=DEFAULT_POINTS):
    return GridPdf.from_mixture(f, n).kl(GridPdf.from_mixture(g, n))


def wrapped_gaussian(theta, sigma, terms=3):
    """Wrapped normal density truncated to |l| <= terms."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = np.zeros_like(theta, dtype=float)
    t = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    for l in range(-terms, terms + 1):
        d = t - 2.0 * np.pi * l
        out += np.exp(-0.5 * (d / sigma) ** 2)
    return out / (np.sqrt(2.0 * np.pi) * sigma)
