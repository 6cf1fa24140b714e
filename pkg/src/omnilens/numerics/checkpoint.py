"""Flat binary checkpoint container.

Layout (all integers little-endian u32)::

    b"OLNS" | version | records...
    record := name_len | name (utf-8) | rank | extents[rank] | f32 payload
"""
from __future__ import annotations

import struct

import numpy as np

from omnilens.errors import FormatError

MAGIC = b"OLNS"
VERSION = 1


def encode_checkpoint(named_arrays):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, array in named_arrays.items():
        raw = name.encode("utf-8")
        array = np.asarray(array)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf):
    if buf[:4] != MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    if len(buf) < 8:
        raise FormatError("truncated header", len(buf))
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    out = {}
    pos = 8
    while pos < len(buf):
        start = pos
        try:
            (name_len,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            raw = bytes(buf[pos : pos + name_len])
            if len(raw) != name_len:
                raise FormatError("truncated name", start)
            name = raw.decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
        except struct.error:
            raise FormatError("truncated record header", start) from None
        except UnicodeDecodeError:
            raise FormatError("parameter name is not utf-8", start) from None
        count = int(np.prod(shape)) if rank else 1
        nbytes = 4 * count
        if pos + nbytes > len(buf):
            raise FormatError(f"truncated payload for {name!r}", pos)
        out[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
        pos += nbytes
    return out


def save_checkpoint(path, named_arrays):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(named_arrays))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
