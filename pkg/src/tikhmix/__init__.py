"""Tikhonov-mixture sum-product phase tracking with LDPC turbo decoding."""

from .channel import Constellation, FrameConfig, generate_realization
from .circular import TikhonovMixture, cmvm, kl_tikhonov
from .mixture import ReductionConfig, reduce_limited, reduce_unbounded

__all__ = [
    "Constellation",
    "FrameConfig",
    "generate_realization",
    "TikhonovMixture",
    "cmvm",
    "kl_tikhonov",
    "ReductionConfig",
    "reduce_limited",
    "reduce_unbounded",
]
