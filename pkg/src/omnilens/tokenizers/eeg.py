from __future__ import annotations

import numpy as np

from omnilens.errors import ConfigurationError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Linear, Module, Parameter, trunc_normal
from omnilens.tokenizers.common import add_positional


def eeg_groups(eeg, t_group):
    """(..., C, T) -> (..., T / t_group, C * t_group): each token sees all channels over t_group steps."""
    eeg = np.asarray(eeg)
    c, t = eeg.shape[-2:]
    if t_group < 1 or t % t_group:
        raise ConfigurationError(f"{t} time steps are not divisible into groups of {t_group}")
    lead = eeg.shape[:-2]
    x = eeg.reshape(*lead, c, t // t_group, t_group)
    x = np.moveaxis(x, -3, -2)
    return x.reshape(*lead, t // t_group, c * t_group)


def bandpass(eeg, sample_rate, low=5.0, high=95.0):
    """Zero DFT bins outside [low, high] Hz along the time axis. Preprocessing only."""
    eeg = np.asarray(eeg, dtype=np.float64)
    spectrum = np.fft.rfft(eeg, axis=-1)
    freqs = np.fft.rfftfreq(eeg.shape[-1], d=1.0 / sample_rate)
    spectrum[..., (freqs < low) | (freqs > high)] = 0.0
    return np.fft.irfft(spectrum, n=eeg.shape[-1], axis=-1)


class EEGEmbed(Module):
    """Kernel-size-t, stride-t temporal convolution written as a per-group linear map."""

    def __init__(self, d, channels, steps, t_group, rng):
        if t_group < 1 or steps % t_group:
            raise ConfigurationError(f"{steps} time steps are not divisible into groups of {t_group}")
        self.channels = channels
        self.t_group = t_group
        self.num_tokens = steps // t_group
        self.proj = Linear(channels * t_group, d, rng)
        self.pos = Parameter(trunc_normal(rng, (self.num_tokens, d)))

    def __call__(self, eeg):
        groups = eeg_groups(np.asarray(eeg, dtype=T.get_dtype()), self.t_group)
        return add_positional(self.proj(T.Tensor(np.ascontiguousarray(groups))), self.pos)
