"""Message replication, majority-vote aggregation and bit packing.

Bit strings are plain ``numpy.uint8`` arrays of zeros and ones. Bytes are
always expanded most-significant bit first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_bits
from .exceptions import CapacityError


@dataclass(frozen=True)
class WatermarkMessage:
    payload: np.ndarray = field(repr=False)
    origin_text: str | None = None

    def __post_init__(self):
        bits = check_bits(self.payload, name="payload")
        if bits.size < 1:
            raise ValueError("message payload must hold at least one bit")
        bits.setflags(write=False)
        object.__setattr__(self, "payload", bits)
        if self.origin_text is not None:
            if not np.array_equal(_text_bits(self.origin_text), bits):
                raise ValueError("payload does not match the UTF-8 expansion of origin_text")

    @property
    def m_bits(self) -> int:
        return int(self.payload.size)

    def __len__(self):
        return self.m_bits

    def __eq__(self, other):
        if not isinstance(other, WatermarkMessage):
            return NotImplemented
        return np.array_equal(self.payload, other.payload) and self.origin_text == other.origin_text

    def __hash__(self):
        return hash((self.payload.tobytes(), self.origin_text))

    def to_text(self) -> str | None:
        """Decode the payload as UTF-8, or None when it is not valid text."""
        if self.m_bits % 8:
            return None
        try:
            return pack_bits(self.payload).decode("utf-8")
        except UnicodeDecodeError:
            return None

    @classmethod
    def from_bits(cls, bits) -> "WatermarkMessage":
        return cls(np.array(bits, dtype=np.uint8))

    @classmethod
    def from_hex(cls, text: str) -> "WatermarkMessage":
        data = bytes.fromhex(text)
        if not data:
            raise ValueError("hex message is empty")
        return cls(unpack_bits(data, 8 * len(data)))


@dataclass(frozen=True)
class CapacityLayout:
    n_bits: int
    m_bits: int

    def __post_init__(self):
        if self.m_bits < 1:
            raise ValueError("m_bits must be >= 1")
        if self.n_bits < self.m_bits:
            raise CapacityError(
                f"capacity of {self.n_bits} bits cannot hold a {self.m_bits}-bit message"
            )

    @property
    def replicas(self) -> int:
        return self.n_bits // self.m_bits

    @property
    def pad_bits(self) -> int:
        return self.n_bits % self.m_bits


def _as_bits(message) -> np.ndarray:
    if isinstance(message, WatermarkMessage):
        return message.payload
    return check_bits(message, name="message")


def expand(message, n_bits: int) -> np.ndarray:
    """Tile the message to fill ``n_bits``, padding the remainder with zeros.

    >>> expand(WatermarkMessage.from_bits([1, 0, 1]), 7).tolist()
    [1, 0, 1, 1, 0, 1, 0]
    """
    bits = _as_bits(message)
    layout = CapacityLayout(int(n_bits), bits.size)
    out = np.zeros(layout.n_bits, dtype=np.uint8)
    out[: layout.replicas * layout.m_bits] = np.tile(bits, layout.replicas)
    return out


def aggregate(plain, m_bits: int) -> np.ndarray:
    """Recover an ``m_bits`` message from its replicated form by majority vote.

    A bit is 1 only when strictly more than half its replicas are 1; an exact
    tie resolves to 0. Trailing pad bits take no part in the vote.
    """
    plain = check_bits(plain, name="plain")
    layout = CapacityLayout(plain.size, int(m_bits))
    votes = plain[: layout.replicas * layout.m_bits].reshape(layout.replicas, layout.m_bits)
    ones = votes.sum(axis=0, dtype=np.int64)
    return (2 * ones > layout.replicas).astype(np.uint8)


def pack_bits(bits) -> bytes:
    """Pack bits MSB-first; the last byte is zero-filled on the right."""
    return np.packbits(check_bits(bits), bitorder="big").tobytes()


def unpack_bits(data: bytes, n_bits: int) -> np.ndarray:
    data = bytes(data)
    if n_bits < 0 or len(data) < -(-n_bits // 8):
        raise ValueError(f"{len(data)} bytes cannot supply {n_bits} bits")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n_bits, bitorder="big")


def _text_bits(text: str) -> np.ndarray:
    data = text.encode("utf-8")
    return unpack_bits(data, 8 * len(data))


def message_from_text(text: str) -> WatermarkMessage:
    if not text:
        raise ValueError("watermark text must be non-empty")
    return WatermarkMessage(_text_bits(text), origin_text=text)
