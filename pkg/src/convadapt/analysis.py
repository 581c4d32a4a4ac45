"""Weight-similarity (linear CKA over reshaped filters) and domain distance (Gaussian MMD)."""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core import checkpoint as ckpt
from .errors import CheckpointError, ConfigurationError, DimensionError, ParseError


@dataclass
class FilterMatrix:
    matrix: np.ndarray
    layer: str = ""
    k: int = 1
    c1: int = 0
    c2: int = 0


def reshape_filter_weights(weight, layer: str = "") -> FilterMatrix:
    """Conv weight (c2, c1, k, k) to the matrix CKA compares.

    k == 1 gives a c1 × c2 matrix. k > 1 gives k² × (c1·c2) with row index
    kh·k + kw and column index c1_index·c2 + c2_index.
    """
    w = np.asarray(getattr(weight, "data", weight))
    if w.ndim != 4:
        raise DimensionError(f"filter weight must be 4-D (c2, c1, k, k); got shape {w.shape}")
    c2, c1, kh, kw = w.shape
    if kh != kw:
        raise ConfigurationError(f"non-square kernel {kh}x{kw} is not supported")
    if kh == 1:
        mat = w[:, :, 0, 0].T
    else:
        mat = w.transpose(2, 3, 1, 0).reshape(kh * kw, c1 * c2)
    return FilterMatrix(np.ascontiguousarray(mat), layer, kh, c1, c2)


def unreshape_filter_weights(fm: FilterMatrix) -> np.ndarray:
    """Inverse of :func:`reshape_filter_weights`."""
    if fm.k == 1:
        return np.ascontiguousarray(fm.matrix.T[:, :, None, None])
    return np.ascontiguousarray(fm.matrix.reshape(fm.k, fm.k, fm.c1, fm.c2).transpose(3, 2, 0, 1))


def hsic(K: np.ndarray, L: np.ndarray) -> float:
    """Biased empirical HSIC, tr(K H L H) / (n − 1)²."""
    K = np.asarray(K, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != L.shape:
        raise DimensionError(f"HSIC needs two square Gram matrices of equal size; got {K.shape} and {L.shape}")
    n = K.shape[0]
    if n < 2:
        raise ConfigurationError("HSIC is undefined for fewer than 2 samples")
    # tr(KHLH) = <HKH, L>; double centring avoids forming H explicitly.
    Kc = K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()
    return float(np.sum(Kc * L) / (n - 1) ** 2)


def cka(X, Y) -> Optional[float]:
    """Linear CKA between row-aligned matrices; ``None`` when either side is constant."""
    X = np.asarray(getattr(X, "matrix", X), dtype=np.float64)
    Y = np.asarray(getattr(Y, "matrix", Y), dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(f"CKA needs matrices with the same row count; got {X.shape} and {Y.shape}")
    K, L = X @ X.T, Y @ Y.T
    kl, kk, ll = hsic(K, L), hsic(K, K), hsic(L, L)
    scale = max(np.abs(K).max(initial=0.0), np.abs(L).max(initial=0.0), 1e-300)
    if kk <= 1e-24 * scale**2 or ll <= 1e-24 * scale**2:
        return None
    return float(kl / math.sqrt(kk * ll))


@dataclass
class SimilarityReport:
    per_layer: Dict[str, Optional[float]] = field(default_factory=dict)
    mean_cka: Optional[float] = None
    mmd: Optional[float] = None
    bandwidth: Optional[float] = None

    def to_dict(self) -> dict:
        def fmt(v):
            return None if v is None else float(f"{v:.6g}")

        return {
            "mean_cka": fmt(self.mean_cka),
            "mmd": fmt(self.mmd),
            "bandwidth": fmt(self.bandwidth),
            "per_layer": {k: fmt(v) for k, v in self.per_layer.items()},
        }

    def write(self, out_dir: Union[str, os.PathLike]) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")
        if self.per_layer:
            with open(os.path.join(out_dir, "cka_layers.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["layer", "cka"])
                for k, v in self.per_layer.items():
                    w.writerow([k, "" if v is None else f"{v:.6g}"])


Records = Mapping[str, ckpt.CheckpointRecord]


def _as_records(obj) -> Records:
    if isinstance(obj, (str, os.PathLike)):
        return ckpt.load(obj)
    if hasattr(obj, "state_records"):
        return {r.name: r for r in obj.state_records()}
    return obj


def average_cka(checkpoint_a, checkpoint_b, include_adapters: bool = False) -> SimilarityReport:
    """CKA per convolution weight between two checkpoints, plus the unweighted mean.

    Accepts checkpoint paths, decoded record maps, or models.
    """
    a, b = _as_records(checkpoint_a), _as_records(checkpoint_b)
    names = [n for n, r in a.items() if r.data.ndim == 4 and (include_adapters or not n.startswith("adapter."))]
    for n in names:
        if n not in b:
            raise CheckpointError(f"layer {n!r} missing from second checkpoint")
        if b[n].data.shape != a[n].data.shape:
            raise CheckpointError(f"layer {n!r} has shape {a[n].data.shape} vs {b[n].data.shape}")
    report = SimilarityReport()
    for n in names:
        report.per_layer[n] = cka(reshape_filter_weights(a[n].data, n), reshape_filter_weights(b[n].data, n))
    defined = [v for v in report.per_layer.values() if v is not None]
    report.mean_cka = float(np.mean(defined)) if defined else None
    return report


def median_bandwidth(pooled: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the pooled sample."""
    d = pdist(np.asarray(pooled, dtype=np.float64))
    med = float(np.median(d)) if d.size else 0.0
    if med <= 0.0:
        raise ConfigurationError("median bandwidth is undefined: pooled points are (mostly) identical")
    return med


def gaussian_mmd(features_p, features_q, bandwidth: Union[float, str] = "median", unbiased: bool = False) -> float:
    """Squared MMD between two samples under exp(−‖x−y‖² / 2σ²).

    The default biased V-statistic is non-negative. The unbiased U-statistic
    drops diagonal terms and can come out below zero for similar samples.
    """
    p = np.asarray(features_p, dtype=np.float64)
    q = np.asarray(features_q, dtype=np.float64)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1]:
        raise DimensionError(f"MMD needs two (n, d) matrices with equal d; got {p.shape} and {q.shape}")
    if len(p) < 2 or len(q) < 2:
        raise ConfigurationError("MMD needs at least two samples on each side")
    sigma = median_bandwidth(np.vstack([p, q])) if bandwidth == "median" else float(bandwidth)
    if sigma <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {sigma}")
    gamma = 1.0 / (2.0 * sigma * sigma)
    kpp = np.exp(-gamma * cdist(p, p, "sqeuclidean"))
    kqq = np.exp(-gamma * cdist(q, q, "sqeuclidean"))
    kpq = np.exp(-gamma * cdist(p, q, "sqeuclidean"))
    m, n = len(p), len(q)
    if unbiased:
        return float((kpp.sum() - np.trace(kpp)) / (m * (m - 1)) + (kqq.sum() - np.trace(kqq)) / (n * (n - 1)) - 2.0 * kpq.mean())
    return float(kpp.mean() + kqq.mean() - 2.0 * kpq.mean())


def write_features(path: Union[str, os.PathLike], features: np.ndarray) -> None:
    """Feature dump: n:u32, d:u32, then n·d float32 little-endian, row-major."""
    f = np.ascontiguousarray(features, dtype="<f4")
    if f.ndim != 2:
        raise DimensionError(f"feature matrix must be 2-D; got shape {f.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *f.shape))
        fh.write(f.tobytes())


def read_features(path: Union[str, os.PathLike]) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ParseError("feature dump header truncated", len(blob))
    n, d = struct.unpack_from("<II", blob, 0)
    need = 8 + 4 * n * d
    if len(blob) != need:
        raise ParseError(f"feature dump declares {n}x{d} values but holds {(len(blob) - 8) // 4}", min(len(blob), need))
    return np.frombuffer(blob, dtype="<f4", offset=8).reshape(n, d).astype(np.float32)
