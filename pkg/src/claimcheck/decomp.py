"""PCA with energy-based component selection.

Fitting runs an SVD of the mean-centered data (sample covariance, N-1
denominator). Requesting 100% energy keeps the original axes: the transform
is then pure centering, which keeps the "no reduction" grid cell exactly
equivalent to the raw features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PcaModel", "PcaError", "fit_pca", "transform_pca", "inverse_transform_pca"]


class PcaError(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray            # (D,)
    components: np.ndarray      # (K, D), orthonormal rows
    explained_ratio: np.ndarray  # (K,)
    energy_retained: float       # requested energy as a fraction in (0, 1]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def fit_pca(X: np.ndarray, energy: int) -> PcaModel:
    """Fit PCA keeping the smallest K whose cumulative explained variance
    ratio reaches energy/100. energy must be an integer in 95..100."""
    if energy not in range(95, 101):
        raise PcaError(f"energy must be in 95..100, got {energy}")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise PcaError("need a 2-D matrix with at least 2 rows")
    if not np.isfinite(X).all():
        raise PcaError("non-finite values in input")
    n, d = X.shape
    mean = X.mean(axis=0)
    if energy == 100:
        var = X.var(axis=0, ddof=1)
        total = var.sum()
        ratios = var / total if total > 0 else np.zeros(d)
        return PcaModel(mean=mean, components=np.eye(d),
                        explained_ratio=ratios, energy_retained=1.0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    eigvals = s ** 2 / (n - 1)
    total = eigvals.sum()
    if total <= 0:
        # Degenerate (constant) data: keep one axis, it explains everything.
        comp = np.zeros((1, d))
        comp[0, 0] = 1.0
        return PcaModel(mean=mean, components=comp,
                        explained_ratio=np.array([1.0]),
                        energy_retained=energy / 100.0)
    ratios = eigvals / total
    cum = np.cumsum(ratios)
    k = int(np.searchsorted(cum, energy / 100.0 - 1e-12)) + 1
    k = min(k, len(ratios))
    components = vt[:k].copy()
    # Sign convention: largest-magnitude entry of each component is positive.
    for row in components:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1
    return PcaModel(mean=mean, components=components,
                    explained_ratio=ratios[:k].copy(),
                    energy_retained=energy / 100.0)


def transform_pca(model: PcaModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.mean.shape[0]:
        raise PcaError(f"dimension mismatch: data {X.shape[1]}, model {model.mean.shape[0]}")
    Z = (X - model.mean) @ model.components.T
    return Z[0] if single else Z


def inverse_transform_pca(model: PcaModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    if Z.shape[1] != model.n_components:
        raise PcaError("dimension mismatch on inverse transform")
    X = Z @ model.components + model.mean
    return X[0] if single else X
