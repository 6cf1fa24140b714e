"""Log-mel filterbank frontend and spectrogram patch tokens."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from omnilens.errors import DegenerateInputError
from omnilens.numerics import tensor as T
from omnilens.numerics.module import Linear, Module, Parameter, trunc_normal
from omnilens.tokenizers.common import add_positional

LOG_FLOOR = 1e-10


@dataclass
class Spectrogram:
    values: np.ndarray  # (n_mels, frames)
    sample_rate: int
    hop_ms: float
    win_ms: float

    @property
    def frames(self):
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels, sample_rate):
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    return edges[1:-1]


def mel_filterbank(n_mels, n_fft, sample_rate):
    """Triangular HTK-mel filters over rfft bins, spanning 0 Hz to Nyquist. Shape (n_mels, n_fft//2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples, sample_rate=16000, win_ms=25.0, hop_ms=10.0):
    win = int(round(sample_rate * win_ms / 1000.0))
    hop = int(round(sample_rate * hop_ms / 1000.0))
    pad = (win - hop) // 2
    return (n_samples + 2 * pad - win) // hop + 1


def log_mel_spectrogram(waveform, sample_rate=16000, n_mels=128, win_ms=25.0, hop_ms=10.0, n_fft=None):
    """Hamming-windowed power spectrum -> mel filterbank -> natural log.

    The signal is reflect-padded by (win - hop) / 2 samples per side, so a
    clip of ``t`` seconds yields exactly ``100 t`` frames at a 10 ms hop.
    """
    x = np.asarray(waveform, dtype=np.float64).reshape(-1)
    win = int(round(sample_rate * win_ms / 1000.0))
    hop = int(round(sample_rate * hop_ms / 1000.0))
    if sample_rate <= 0 or win <= 0 or hop <= 0:
        raise DegenerateInputError("sample rate, window and hop must be positive")
    if x.size < win:
        raise DegenerateInputError(f"waveform of {x.size} samples is shorter than one {win}-sample window")
    if n_fft is None:
        n_fft = 1 << (win - 1).bit_length()
    pad = (win - hop) // 2
    if pad:
        x = np.pad(x, pad, mode="reflect")
    n_frames = (x.size - win) // hop + 1
    starts = np.arange(n_frames) * hop
    frames = x[starts[:, None] + np.arange(win)[None, :]]
    frames = frames * np.hamming(win)[None, :]
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    mel = power @ mel_filterbank(n_mels, n_fft, sample_rate).T
    values = np.log(np.maximum(mel, LOG_FLOOR)).T
    return Spectrogram(values=values, sample_rate=sample_rate, hop_ms=hop_ms, win_ms=win_ms)


def patch_grid_shape(n_rows, n_cols, patch, stride):
    if n_rows < patch or n_cols < patch:
        raise DegenerateInputError(f"{n_rows}x{n_cols} input is smaller than one {patch}x{patch} patch")
    return (n_rows - patch) // stride + 1, (n_cols - patch) // stride + 1


def spectrogram_patches(values, patch, stride):
    """Flattened PxP windows at ``stride`` in both axes, frequency-major order.

    ``values`` is (..., n_mels, frames); result is (..., nf * nt, patch * patch).
    """
    values = np.asarray(values)
    nf, nt = patch_grid_shape(values.shape[-2], values.shape[-1], patch, stride)
    windows = np.lib.stride_tricks.sliding_window_view(values, (patch, patch), axis=(-2, -1))
    windows = windows[..., ::stride, ::stride, :, :][..., :nf, :nt, :, :]
    lead = values.shape[:-2]
    return windows.reshape(*lead, nf * nt, patch * patch)


class AudioEmbed(Module):
    """Spectrogram patches -> linear projection -> learned positional table."""

    def __init__(self, d, n_mels, frames, patch, stride, rng, mean=0.0, std=1.0):
        self.patch = patch
        self.stride = stride
        self.n_mels = n_mels
        self.frames = frames
        self.norm_mean = float(mean)
        self.norm_std = float(std)
        nf, nt = patch_grid_shape(n_mels, frames, patch, stride)
        self.num_tokens = nf * nt
        self.proj = Linear(patch * patch, d, rng)
        self.pos = Parameter(trunc_normal(rng, (self.num_tokens, d)))

    def prepare(self, waveform, sample_rate=16000):
        spec = log_mel_spectrogram(waveform, sample_rate, n_mels=self.n_mels)
        return self.normalize(spec.values)

    def normalize(self, values):
        return (values - self.norm_mean) / self.norm_std

    def __call__(self, specs):
        patches = spectrogram_patches(np.asarray(specs, dtype=T.get_dtype()), self.patch, self.stride)
        tokens = self.proj(T.Tensor(np.ascontiguousarray(patches)))
        return add_positional(tokens, self.pos)

