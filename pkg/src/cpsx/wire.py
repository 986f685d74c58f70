"""Big-endian length-prefixed byte framing shared by the codecs."""

from __future__ import annotations

import struct

_U32 = struct.Struct(">I")

MAX_FIELD = 1 << 30  # refuse absurd prefixes before allocating


def pack_prefixed(data: bytes) -> bytes:
    if len(data) > MAX_FIELD:
        raise ValueError("field too large to frame")
    return _U32.pack(len(data)) + data


class ByteReader:
    """Cursor over immutable bytes; every underrun raises ValueError."""

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise ValueError("truncated input")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def take_prefixed(self) -> bytes:
        n = self.u32()
        if n > MAX_FIELD:
            raise ValueError("field length out of range")
        return self.take(n)

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def rest(self) -> bytes:
        return self.take(self.remaining())

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise ValueError("trailing bytes after structure")
