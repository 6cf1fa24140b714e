"""On-disk formats for raw modality samples."""
from __future__ import annotations

import json
import struct
import wave
from pathlib import Path

import numpy as np

from omnilens.errors import ConfigurationError, FormatError

POINT_MAGIC = b"OLPC"
POINT_VERSION = 1


def write_point_cloud(path, points):
    points = np.asarray(points, dtype="<f4").reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(POINT_MAGIC)
        fh.write(struct.pack("<II", POINT_VERSION, len(points)))
        fh.write(points.tobytes())


def read_point_cloud(path):
    buf = Path(path).read_bytes()
    if buf[:4] != POINT_MAGIC:
        raise FormatError("bad point-cloud magic", 0)
    if len(buf) < 12:
        raise FormatError("truncated point-cloud header", len(buf))
    version, count = struct.unpack_from("<II", buf, 4)
    if version != POINT_VERSION:
        raise FormatError(f"unsupported point-cloud version {version}", 4)
    if len(buf) != 12 + 12 * count:
        raise FormatError(f"expected {count} points, payload is {len(buf) - 12} bytes", 12)
    return np.frombuffer(buf, dtype="<f4", offset=12).reshape(count, 3).astype(np.float64)


def write_wav(path, samples, sample_rate=16000):
    """Mono 16-bit PCM; ``samples`` in [-1, 1]."""
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path, expected_rate=16000):
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise FormatError("expected mono 16-bit PCM")
        rate = fh.getframerate()
        if rate != expected_rate:
            raise ConfigurationError(f"sample rate {rate} Hz, expected {expected_rate} Hz (no resampling)")
        data = fh.readframes(fh.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32767.0


def write_grid(path, values, modality):
    """Raw little-endian f32 payload plus a ``.json`` sidecar with shape and modality."""
    path = Path(path)
    values = np.asarray(values, dtype="<f4")
    path.write_bytes(values.tobytes())
    sidecar = {"shape": list(values.shape), "modality": modality, "dtype": "f32"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def read_grid(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    buf = path.read_bytes()
    shape = tuple(meta["shape"])
    if len(buf) != 4 * int(np.prod(shape)):
        raise FormatError(f"payload of {len(buf)} bytes does not match shape {shape}", 0)
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float64), meta["modality"]
