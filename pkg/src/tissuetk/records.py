"""TFRecord-framed patch files.

Each record on disk is::

    uint64 length (little-endian)
    uint32 masked_crc32c(length bytes)
    byte   payload[length]
    uint32 masked_crc32c(payload)

The payload is a serialized ``tf.train.Example`` with these features,
written in sorted key order so files are byte-deterministic:

    image_raw   bytes   patch pixels, row-major RGB, patch_size**2 * 3 bytes
    mpp         bytes   ASCII ``repr`` of the patch resolution (exact float64)
    patch_size  int64
    slide_id    bytes   UTF-8
    x, y        int64   patch origin in unpadded slide pixels (may be negative)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import crc32c
import numpy as np

from .errors import RecordCorrupted

MASK_DELTA = 0xA282EAD8


def masked_crc(data: bytes) -> int:
    crc = crc32c.crc32c(data)
    return ((((crc >> 15) | (crc << 17)) & 0xFFFFFFFF) + MASK_DELTA) & 0xFFFFFFFF


def frame(payload: bytes) -> bytes:
    header = struct.pack("<Q", len(payload))
    return (header + struct.pack("<I", masked_crc(header)) + payload
            + struct.pack("<I", masked_crc(payload)))


def iter_frames(data: bytes):
    """Yield payloads from framed bytes, validating both checksums."""
    pos = 0
    n = len(data)
    while pos < n:
        if pos + 12 > n:
            raise RecordCorrupted(f"truncated header at byte {pos}")
        header = data[pos:pos + 8]
        (length,) = struct.unpack("<Q", header)
        (hcrc,) = struct.unpack("<I", data[pos + 8:pos + 12])
        if hcrc != masked_crc(header):
            raise RecordCorrupted(f"length checksum mismatch at byte {pos}")
        start = pos + 12
        end = start + length
        if end + 4 > n:
            raise RecordCorrupted(f"truncated payload at byte {start}")
        payload = data[start:end]
        (pcrc,) = struct.unpack("<I", data[end:end + 4])
        if pcrc != masked_crc(payload):
            raise RecordCorrupted(f"payload checksum mismatch at byte {start}")
        yield payload
        pos = end + 4


# --- minimal protobuf wire format for tf.train.Example -----------------------

def _varint(value: int) -> bytes:
    value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _len_field(number: int, body: bytes) -> bytes:
    return _varint((number << 3) | 2) + _varint(len(body)) + body


def _feature(value) -> bytes:
    if isinstance(value, (bytes, str)):
        raw = value.encode() if isinstance(value, str) else value
        return _len_field(1, _len_field(1, raw))
    if isinstance(value, (int, np.integer)):
        return _len_field(3, _len_field(1, _varint(int(value))))
    raise TypeError(f"unsupported feature value {type(value)}")


def encode_example(features: dict) -> bytes:
    entries = b"".join(
        _len_field(1, _len_field(1, key.encode()) + _len_field(2, _feature(features[key])))
        for key in sorted(features)
    )
    return _len_field(1, entries)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = shift = 0
    while True:
        if pos >= len(buf):
            raise RecordCorrupted("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7


def _fields(buf: bytes):
    pos = 0
    while pos < len(buf):
        tag, pos = _read_varint(buf, pos)
        number, wire = tag >> 3, tag & 7
        if wire == 2:
            length, pos = _read_varint(buf, pos)
            yield number, buf[pos:pos + length]
            pos += length
        elif wire == 0:
            value, pos = _read_varint(buf, pos)
            yield number, value
        elif wire == 5:
            yield number, buf[pos:pos + 4]
            pos += 4
        elif wire == 1:
            yield number, buf[pos:pos + 8]
            pos += 8
        else:
            raise RecordCorrupted(f"unsupported wire type {wire}")


def _signed(v: int) -> int:
    return v - (1 << 64) if v >= 1 << 63 else v


def decode_example(payload: bytes) -> dict:
    """Decode bytes/int64 features; lists of length one are unwrapped."""
    out = {}
    for num, features in _fields(payload):
        if num != 1:
            continue
        for num2, entry in _fields(features):
            if num2 != 1:
                continue
            key, feat = None, b""
            for n3, v in _fields(entry):
                if n3 == 1:
                    key = v.decode()
                elif n3 == 2:
                    feat = v
            values = []
            for kind, lst in _fields(feat):
                for n4, v in _fields(lst):
                    if n4 != 1:
                        continue
                    if kind == 1:
                        values.append(bytes(v))
                    elif kind == 3 and isinstance(v, int):
                        values.append(_signed(v))
                    elif kind == 3:
                        p = 0
                        while p < len(v):
                            iv, p = _read_varint(v, p)
                            values.append(_signed(iv))
                    elif kind == 2:
                        values.extend(struct.unpack(f"<{len(v) // 4}f", v))
            out[key] = values[0] if len(values) == 1 else values
    return out


@dataclass
class PatchRecord:
    slide_id: str
    x: int
    y: int
    patch_size: int
    mpp: float
    pixels: np.ndarray

    def to_payload(self) -> bytes:
        pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if pixels.shape != (self.patch_size, self.patch_size, 3):
            raise ValueError(f"pixels shape {pixels.shape} does not match patch_size")
        return encode_example({
            "image_raw": pixels.tobytes(),
            "mpp": repr(float(self.mpp)).encode(),
            "patch_size": int(self.patch_size),
            "slide_id": self.slide_id.encode(),
            "x": int(self.x),
            "y": int(self.y),
        })

    @classmethod
    def from_payload(cls, payload: bytes) -> "PatchRecord":
        f = decode_example(payload)
        try:
            size = int(f["patch_size"])
            pixels = np.frombuffer(f["image_raw"], dtype=np.uint8).reshape(size, size, 3)
            return cls(
                slide_id=f["slide_id"].decode(),
                x=int(f["x"]),
                y=int(f["y"]),
                patch_size=size,
                mpp=float(f["mpp"].decode()),
                pixels=pixels,
            )
        except (KeyError, ValueError, AttributeError) as exc:
            raise RecordCorrupted(f"malformed patch payload: {exc}") from exc


def write_records(path, records) -> int:
    """Write records in the given order; returns the count written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("wb") as fh:
        for rec in records:
            fh.write(frame(rec.to_payload()))
            n += 1
    return n


def read_records(path) -> list[PatchRecord]:
    data = Path(path).read_bytes()
    return [PatchRecord.from_payload(p) for p in iter_frames(data)]
