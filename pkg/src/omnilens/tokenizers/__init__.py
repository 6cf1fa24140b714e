"""Modality embedding: raw signals to token sequences of shape (B, m, d)."""
from omnilens.tokenizers.audio import (
    AudioEmbed,
    Spectrogram,
    frame_count,
    log_mel_spectrogram,
    mel_filterbank,
    spectrogram_patches,
)
from omnilens.tokenizers.augment import AugmentPolicy, augment, mixup, mixup_batch
from omnilens.tokenizers.common import add_positional
from omnilens.tokenizers.eeg import EEGEmbed, bandpass, eeg_groups
from omnilens.tokenizers.grid import GridEmbed, depth_to_disparity, grid_patches
from omnilens.tokenizers.points import GroupedPointPatches, MiniPointNet, PointEmbed, fps, group_points, knn_group
