"""Minimal DEX reader: header, string_ids and type_ids only.

Layout reference: https://source.android.com/docs/core/runtime/dex-format
"""

import struct

from mhaudit.domains.common.exceptions import MalformedDexError

DEX_MAGIC_PREFIX = b"dex\n"
HEADER_SIZE = 0x70

_PRIMITIVES = frozenset("VZBSCIJFD")


def _u32(buffer: bytes, offset: int) -> int:
    if offset < 0 or offset + 4 > len(buffer):
        raise MalformedDexError(f"truncated DEX: u32 at {offset:#x} beyond {len(buffer)} bytes")
    return struct.unpack_from("<I", buffer, offset)[0]


def _uleb128(buffer: bytes, offset: int) -> tuple[int, int]:
    result = 0
    shift = 0
    for i in range(5):
        if offset + i >= len(buffer):
            raise MalformedDexError(f"truncated DEX: uleb128 at {offset:#x}")
        byte = buffer[offset + i]
        result |= (byte & 0x7F) << shift
        if byte < 0x80:
            return result, offset + i + 1
        shift += 7
    raise MalformedDexError(f"uleb128 at {offset:#x} longer than 5 bytes")


def decode_mutf8(data: bytes) -> str:
    """Decode Modified UTF-8 as used by DEX string_data items.

    ASCII fast path; otherwise code units are rebuilt as UTF-16 so surrogate
    pairs combine, and undecodable sequences become U+FFFD.
    """
    if data.isascii():
        return data.decode("ascii")

    units: list[int] = []
    i = 0
    n = len(data)
    while i < n:
        b = data[i]
        if b < 0x80:
            units.append(b)
            i += 1
        elif b & 0xE0 == 0xC0 and i + 1 < n and data[i + 1] & 0xC0 == 0x80:
            units.append(((b & 0x1F) << 6) | (data[i + 1] & 0x3F))
            i += 2
        elif (
            b & 0xF0 == 0xE0
            and i + 2 < n
            and data[i + 1] & 0xC0 == 0x80
            and data[i + 2] & 0xC0 == 0x80
        ):
            units.append(((b & 0x0F) << 12) | ((data[i + 1] & 0x3F) << 6) | (data[i + 2] & 0x3F))
            i += 3
        else:
            units.append(0xFFFD)
            i += 1
    raw = struct.pack(f"<{len(units)}H", *units)
    return raw.decode("utf-16-le", errors="replace")


def descriptor_to_class_name(descriptor: str) -> str | None:
    """'Lcom/example/Foo;' -> 'com.example.Foo'; arrays and primitives -> None."""
    if len(descriptor) < 3 or descriptor[0] != "L" or descriptor[-1] != ";":
        return None
    return descriptor[1:-1].replace("/", ".")


class DexFile:
    """Read-only view over one DEX image."""

    def __init__(self, buffer: bytes):
        self._buffer = buffer
        if len(buffer) < HEADER_SIZE:
            raise MalformedDexError(f"DEX shorter than header ({len(buffer)} bytes)")
        magic = buffer[:8]
        if not magic.startswith(DEX_MAGIC_PREFIX) or magic[7] != 0 or not magic[4:7].isdigit():
            raise MalformedDexError(f"bad DEX magic {magic!r}")
        self.version = magic[4:7].decode("ascii")
        self.string_ids_size = _u32(buffer, 0x38)
        self.string_ids_off = _u32(buffer, 0x3C)
        self.type_ids_size = _u32(buffer, 0x40)
        self.type_ids_off = _u32(buffer, 0x44)
        if self.string_ids_off + 4 * self.string_ids_size > len(buffer):
            raise MalformedDexError("string_ids table extends past end of file")
        if self.type_ids_off + 4 * self.type_ids_size > len(buffer):
            raise MalformedDexError("type_ids table extends past end of file")

    def string(self, index: int) -> str:
        if not 0 <= index < self.string_ids_size:
            raise MalformedDexError(f"string index {index} out of range")
        data_off = _u32(self._buffer, self.string_ids_off + 4 * index)
        _, start = _uleb128(self._buffer, data_off)
        end = self._buffer.find(b"\x00", start)
        if end < 0:
            raise MalformedDexError(f"unterminated string_data at {data_off:#x}")
        return decode_mutf8(self._buffer[start:end])

    def strings(self) -> list[str]:
        return [self.string(i) for i in range(self.string_ids_size)]

    def type_descriptors(self) -> list[str]:
        descriptors = []
        for i in range(self.type_ids_size):
            descriptor_idx = _u32(self._buffer, self.type_ids_off + 4 * i)
            descriptors.append(self.string(descriptor_idx))
        return descriptors

    def class_names(self) -> set[str]:
        """Dotted names of every reference type in the type_ids table."""
        names = set()
        for descriptor in self.type_descriptors():
            if descriptor in _PRIMITIVES or descriptor.startswith("["):
                continue
            name = descriptor_to_class_name(descriptor)
            if name:
                names.add(name)
        return names
