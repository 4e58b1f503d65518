"""ChaCha20 (RFC 8439, 96-bit nonce) keystream and bit-level XOR encryption."""
from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_bits
from .codec import unpack_bits

KEY_BYTES = 32
NONCE_BYTES = 12
BLOCK_BYTES = 64

_CONSTANTS = (0x61707865, 0x3320646E, 0x79622D32, 0x6B206574)
_MASK = 0xFFFFFFFF


@dataclass(frozen=True)
class KeyMaterial:
    key: bytes
    nonce: bytes
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "key", bytes(self.key))
        object.__setattr__(self, "nonce", bytes(self.nonce))
        if len(self.key) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes, got {len(self.key)}")
        if len(self.nonce) != NONCE_BYTES:
            raise ValueError(f"nonce must be {NONCE_BYTES} bytes, got {len(self.nonce)}")

    def with_nonce(self, nonce: bytes) -> "KeyMaterial":
        return KeyMaterial(self.key, nonce, self.label)

    def to_dict(self) -> dict:
        out = {"key": self.key.hex(), "nonce": self.nonce.hex()}
        if self.label is not None:
            out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "KeyMaterial":
        key, nonce = data["key"], data["nonce"]
        if len(key) != 2 * KEY_BYTES or len(nonce) != 2 * NONCE_BYTES:
            raise ValueError("key must be 64 hex chars and nonce 24 hex chars")
        return cls(bytes.fromhex(key), bytes.fromhex(nonce), data.get("label"))


def keygen(seed: int | None = None) -> KeyMaterial:
    """Fresh key and nonce; a seed makes the draw reproducible (not secret)."""
    if seed is None:
        return KeyMaterial(secrets.token_bytes(KEY_BYTES), secrets.token_bytes(NONCE_BYTES))
    raw = np.random.default_rng(seed).bytes(KEY_BYTES + NONCE_BYTES)
    return KeyMaterial(raw[:KEY_BYTES], raw[KEY_BYTES:])


def _rotl(v: int, c: int) -> int:
    return ((v << c) & _MASK) | (v >> (32 - c))


def _quarter_round(s: list, a: int, b: int, c: int, d: int) -> None:
    s[a] = (s[a] + s[b]) & _MASK
    s[d] = _rotl(s[d] ^ s[a], 16)
    s[c] = (s[c] + s[d]) & _MASK
    s[b] = _rotl(s[b] ^ s[c], 12)
    s[a] = (s[a] + s[b]) & _MASK
    s[d] = _rotl(s[d] ^ s[a], 8)
    s[c] = (s[c] + s[d]) & _MASK
    s[b] = _rotl(s[b] ^ s[c], 7)


def chacha20_block(key: bytes, counter: int, nonce: bytes) -> bytes:
    """One 64-byte ChaCha20 block for a 32-bit block counter."""
    if not 0 <= counter <= _MASK:
        raise OverflowError("ChaCha20 block counter exhausted")
    init = [*_CONSTANTS, *struct.unpack("<8I", key), counter, *struct.unpack("<3I", nonce)]
    s = list(init)
    for _ in range(10):
        _quarter_round(s, 0, 4, 8, 12)
        _quarter_round(s, 1, 5, 9, 13)
        _quarter_round(s, 2, 6, 10, 14)
        _quarter_round(s, 3, 7, 11, 15)
        _quarter_round(s, 0, 5, 10, 15)
        _quarter_round(s, 1, 6, 11, 12)
        _quarter_round(s, 2, 7, 8, 13)
        _quarter_round(s, 3, 4, 9, 14)
    return struct.pack("<16I", *((x + y) & _MASK for x, y in zip(s, init)))


def keystream(key: bytes, nonce: bytes, n_bytes: int, counter: int = 0) -> bytes:
    n_blocks = -(-n_bytes // BLOCK_BYTES)
    out = b"".join(chacha20_block(key, counter + i, nonce) for i in range(n_blocks))
    return out[:n_bytes]


def keystream_bits(key: KeyMaterial, n_bits: int) -> np.ndarray:
    """First ``n_bits`` of the keystream (initial counter 0), MSB-first per byte."""
    data = keystream(key.key, key.nonce, -(-n_bits // 8))
    return unpack_bits(data, n_bits)


def encrypt_bits(plain, key: KeyMaterial) -> np.ndarray:
    plain = check_bits(plain, name="plain")
    if plain.size < 1:
        raise ValueError("cannot encrypt an empty bit string")
    return plain ^ keystream_bits(key, plain.size)


def decrypt_bits(cipher, key: KeyMaterial) -> np.ndarray:
    # XOR stream cipher: decryption is the same operation.
    return encrypt_bits(cipher, key)
