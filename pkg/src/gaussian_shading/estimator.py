"""scikit-learn style front end.

``GaussianShadingWatermarker`` holds one (message, key) pair. ``sample``
generates watermarked noise; ``predict``/``decision_function`` score latents
so the detector drops into sklearn metrics and model-selection tools::

    wm = GaussianShadingWatermarker(message="watermark", random_state=0).fit()
    Z = wm.sample(100)
    wm.predict(Z)                            # all ones
    roc_auc_score(y, wm.decision_function(np.vstack([Z, noise])))
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, check_random_state

from ._validation import check_latent_batch, check_open_probability, check_window
from .cipher import KeyMaterial, decrypt_bits, keygen
from .codec import CapacityLayout, aggregate
from .detector import p_value, reference_ciphertext, threshold_for_tfpr
from .pipeline import as_message
from .sampler import UniformSource, reverse_sample, sample_latent


class GaussianShadingWatermarker(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Embed and detect one watermark message in Gaussian latent noise.

    Parameters
    ----------
    message : str or sequence of {0, 1}
        Watermark payload; text is UTF-8 encoded.
    key : KeyMaterial, dict or None
        Cipher key and nonce. ``None`` draws one from ``random_state``.
    n_dims : int
        Latent dimensionality.
    window : int
        Ciphertext bits per latent dimension.
    tfpr : float
        Theoretical false-positive rate used by ``predict``.
    random_state : int, Generator or None
        Seeds key generation (when ``key`` is None) and sampling.
    """

    def __init__(self, message="watermark", key=None, n_dims=500, window=1,
                 tfpr=0.01, random_state=None):
        self.message = message
        self.key = key
        self.n_dims = n_dims
        self.window = window
        self.tfpr = tfpr
        self.random_state = random_state

    def fit(self, X=None, y=None):
        """Derive key material, threshold and reference ciphertext. ``X``/``y`` are ignored."""
        window = check_window(self.window)
        check_open_probability(self.tfpr, "tfpr")
        msg = as_message(self.message)
        self.n_bits_ = int(self.n_dims) * window
        self.layout_ = CapacityLayout(self.n_bits_, msg.m_bits)
        self.message_ = msg
        rng = check_random_state(self.random_state)
        if self.key is None:
            self.key_ = keygen(seed=int(rng.randint(0, 2**31 - 1)))
        elif isinstance(self.key, KeyMaterial):
            self.key_ = self.key
        else:
            self.key_ = KeyMaterial.from_dict(self.key)
        self.reference_ = reference_ciphertext(msg, self.key_, self.n_bits_)
        self.threshold_ = threshold_for_tfpr(self.n_bits_, float(self.tfpr))
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(self.n_dims)
        return self

    def sample(self, n_samples=1, random_state=None):
        """Watermarked latents, shape ``(n_samples, n_dims)``."""
        check_is_fitted(self, "reference_")
        source = UniformSource(self.random_state if random_state is None else random_state)
        return np.vstack([sample_latent(self.reference_, self.window, source)
                          for _ in range(n_samples)])

    def transform(self, X):
        """Ciphertext bits recovered from each latent, shape ``(n_samples, n_bits)``."""
        check_is_fitted(self, "reference_")
        X = check_latent_batch(X, self.n_features_in_)
        return np.vstack([reverse_sample(z, self.window, self.n_bits_) for z in X])

    def hamming_distances(self, X):
        bits = self.transform(X)
        return np.count_nonzero(bits != self.reference_, axis=1)

    def decision_function(self, X):
        """Higher means more strongly watermarked (negated Hamming distance)."""
        return -self.hamming_distances(X).astype(np.float64)

    def p_values(self, X):
        return np.array([p_value(int(h), self.n_bits_) for h in self.hamming_distances(X)])

    def predict(self, X):
        return (self.hamming_distances(X) <= self.threshold_).astype(np.int64)

    def extract(self, X, m_bits=None):
        """Majority-vote message bits from each latent, shape ``(n_samples, m_bits)``."""
        m_bits = self.message_.m_bits if m_bits is None else int(m_bits)
        CapacityLayout(self.n_bits_, m_bits)
        return np.vstack([aggregate(decrypt_bits(c, self.key_), m_bits) for c in self.transform(X)])
