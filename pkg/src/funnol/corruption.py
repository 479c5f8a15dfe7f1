"""Stochastic input corruption: random discarding plus additive Gaussian noise."""

from dataclasses import dataclass

import numpy as np

from funnol.dataset import FunctionalSample
from funnol.seeding import derive_rng


@dataclass(frozen=True)
class CorruptionConfig:
    miss_prob: float = 0.1
    noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.miss_prob < 1.0:
            raise ValueError("miss_prob must lie in [0, 1)")
        if not np.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise ValueError("noise_sd must be finite and non-negative")


def corruption_draws(cfg, draw_index, sample_index, shape):
    """The (discard, noise) arrays for one sample; independent of call order."""
    rng = derive_rng(cfg.seed, "corrupt", draw_index, sample_index)
    discard = rng.random(shape) < cfg.miss_prob
    noise = rng.standard_normal(shape) * cfg.noise_sd
    return discard, noise


def corrupt_arrays(values, mask, cfg, draw_index, sample_index):
    discard, noise = corruption_draws(cfg, draw_index, sample_index, values.shape)
    new_mask = mask & ~discard
    new_values = np.where(new_mask, values + noise, 0.0)
    return new_values, new_mask


def corrupt(sample, cfg, draw_index, sample_index=0):
    """Corrupt one curve.

    Each observed cell is independently discarded with probability
    ``miss_prob``; surviving cells get N(0, noise_sd^2) added. Every channel
    goes through the same rule. Cells missing on input stay missing.
    """
    if cfg.miss_prob == 0.0 and cfg.noise_sd == 0.0:
        return sample
    v, m = corrupt_arrays(sample.values, sample.mask, cfg, draw_index, sample_index)
    return FunctionalSample(v, m, sample.label)


def corrupt_batch(values, mask, indices, cfg, draw_index):
    """Vectorised helper for training: corrupt (B, J, D) arrays row by row."""
    out_v = np.empty_like(values)
    out_m = np.empty_like(mask)
    for b, idx in enumerate(indices):
        out_v[b], out_m[b] = corrupt_arrays(values[b], mask[b], cfg, draw_index, int(idx))
    return out_v, out_m
