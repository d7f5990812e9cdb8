"""Portable binary checkpoints.

Layout: an 8-byte magic string, a little-endian uint32 format version, a
uint32 section count, then sections of

    uint32 name length | name (UTF-8) | uint32 rank | uint64 dims[rank]
    | float64 values (little-endian, row-major)

Everything a run needs rides in named float sections: parameters, optimizer
moments, model configuration echo, RNG state words, the labeled-label pool
for condition sampling, and the vocabulary (UTF-8 bytes stored one per
value).  Save -> load -> save is byte-identical because section order is
preserved.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"GANREGCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or structurally invalid checkpoint file."""


def save_sections(path, sections: "OrderedDict[str, np.ndarray]") -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(sections)))
        for name, arr in sections.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            if arr.ndim == 0:
                arr = arr.reshape(1)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_sections(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic (not a checkpoint)")
    if len(blob) < 16:
        raise CheckpointError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    sections: OrderedDict[str, np.ndarray] = OrderedDict()
    off = 16
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, off)
            off += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
            off += 8 * n
            sections[name] = arr.reshape(dims)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt section data ({exc})") from None
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return sections


# -- helpers for non-float payloads ---------------------------------------------


def encode_text(text: str) -> np.ndarray:
    """UTF-8 bytes as float64 values (0..255 each), losslessly reversible."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def decode_text(values: np.ndarray) -> str:
    return values.astype(np.uint8).tobytes().decode("utf-8")


def encode_rng_state(rng: np.random.Generator) -> np.ndarray:
    """PCG64 state as exact 32-bit words in float64 slots."""
    st = rng.bit_generator.state
    words = _int_words(st["state"]["state"], 4) + _int_words(st["state"]["inc"], 4)
    words += [int(st["has_uint32"]), int(st["uinteger"])]
    return np.asarray(words, dtype=np.float64)


def decode_rng_state(values: np.ndarray) -> np.random.Generator:
    ints = [int(v) for v in values]
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": _words_int(ints[0:4]), "inc": _words_int(ints[4:8])},
        "has_uint32": ints[8],
        "uinteger": ints[9],
    }
    return rng


def _int_words(value: int, count: int) -> list[int]:
    return [(value >> (32 * i)) & 0xFFFFFFFF for i in range(count)]


def _words_int(words: list[int]) -> int:
    return sum(w << (32 * i) for i, w in enumerate(words))
