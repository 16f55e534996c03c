"""Random Fourier features for Gaussian kernels."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

_HEADER = struct.Struct("<qqd")


@dataclass(frozen=True)
class GaussianKernelSpec:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"kernel bandwidth must be positive, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Frozen set of ``D`` random frequencies in ``R^d`` for one kernel.

    The embedding is ``D**-0.5 * [sin(Vx), cos(Vx)]`` which has unit norm
    for every input.
    """

    frequencies: np.ndarray
    sigma: float

    def __post_init__(self):
        V = np.array(self.frequencies, dtype=float)
        if V.ndim != 2:
            raise ValueError("frequencies must be a (D, d) array")
        V.setflags(write=False)
        object.__setattr__(self, "frequencies", V)

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.sigma == other.sigma and np.array_equal(self.frequencies, other.frequencies)

    __hash__ = None

    @property
    def n_components(self) -> int:
        return self.frequencies.shape[0]

    @property
    def n_features_in(self) -> int:
        return self.frequencies.shape[1]

    @property
    def n_features_out(self) -> int:
        return 2 * self.n_components

    def __call__(self, X) -> np.ndarray:
        return features(self, X)

    def save(self, path) -> None:
        """Write ``d, D`` (int64), ``sigma`` (float64), then row-major frequencies."""
        D, d = self.frequencies.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(d, D, float(self.sigma)))
            fh.write(self.frequencies.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "FeatureMap":
        buf = Path(path).read_bytes()
        if len(buf) < _HEADER.size:
            raise ValueError(f"{path}: truncated feature map header")
        d, D, sigma = _HEADER.unpack_from(buf)
        body = buf[_HEADER.size:]
        if d < 1 or D < 1 or len(body) != 8 * d * D:
            raise ValueError(f"{path}: feature map body does not match header (d={d}, D={D})")
        V = np.frombuffer(body, dtype="<f8").reshape(D, d).astype(float)
        return cls(V, sigma)


def sample_feature_map(spec, n_components: int, n_features: int, rng) -> FeatureMap:
    """Draw ``n_components`` frequencies from the Gaussian kernel's spectral density.

    For ``k(x, x') = exp(-||x - x'||^2 / (2 sigma^2))`` the density is a
    zero-mean Gaussian with covariance ``sigma^-2 I``.
    """
    if isinstance(spec, (int, float)):
        spec = GaussianKernelSpec(float(spec))
    if n_components < 1 or n_features < 1:
        raise ValueError("n_components and n_features must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    V = rng.standard_normal((n_components, n_features)) / spec.sigma
    return FeatureMap(V, spec.sigma)


def features(feature_map: FeatureMap, X) -> np.ndarray:
    """Embed one sample (1-D) or a batch of samples (2-D) into ``R^{2D}``."""
    X = np.asarray(X, dtype=float)
    d = feature_map.n_features_in
    if X.shape[-1] != d or X.ndim > 2:
        raise ValueError(f"expected inputs with {d} features, got shape {X.shape}")
    proj = X @ feature_map.frequencies.T
    scale = 1.0 / np.sqrt(feature_map.n_components)
    return scale * np.concatenate([np.sin(proj), np.cos(proj)], axis=-1)


def kernel_exact(spec, x, x_prime) -> float:
    if isinstance(spec, (int, float)):
        spec = GaussianKernelSpec(float(spec))
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_prime.shape}")
    sq = np.sum((x - x_prime) ** 2, axis=-1)
    return np.exp(-sq / (2.0 * spec.sigma**2))


class RandomFourierFeatures(TransformerMixin, BaseEstimator):
    """Gaussian-kernel random Fourier feature transformer.

    Parameters
    ----------
    sigma : float, default=1.0
        Kernel bandwidth.
    n_components : int, default=20
        Number of frequencies ``D``; the output has ``2 * D`` columns.
    random_state : int, Generator or None
    """

    def __init__(self, sigma=1.0, n_components=20, random_state=None):
        self.sigma = sigma
        self.n_components = n_components
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.feature_map_ = sample_feature_map(
            GaussianKernelSpec(self.sigma), self.n_components, X.shape[1], self.random_state
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_map_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return features(self.feature_map_, X)
