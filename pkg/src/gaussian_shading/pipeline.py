"""End-to-end embedding: message -> replicated bits -> ciphertext -> latent."""
from __future__ import annotations

import numpy as np

from ._validation import check_window
from .cipher import KeyMaterial, encrypt_bits
from .codec import CapacityLayout, WatermarkMessage, expand, message_from_text
from .sampler import UniformSource, sample_latent


def as_message(message) -> WatermarkMessage:
    if isinstance(message, WatermarkMessage):
        return message
    if isinstance(message, str):
        return message_from_text(message)
    return WatermarkMessage.from_bits(message)


def embed(message, key: KeyMaterial, n_dims: int = 500, window: int = 1,
          u_source: UniformSource | int | None = None) -> np.ndarray:
    """Watermarked initial noise of ``n_dims`` coordinates carrying ``message``.

    ``message`` may be text (UTF-8), a bit sequence or a WatermarkMessage.
    Capacity is ``n_dims * window`` bits.
    """
    message = as_message(message)
    window = check_window(window)
    n_bits = int(n_dims) * window
    CapacityLayout(n_bits, message.m_bits)
    cipher = encrypt_bits(expand(message, n_bits), key)
    return sample_latent(cipher, window, u_source)
