"""One-call feature extraction from a grayscale hand image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contour import ChainCode, Landmarks, find_landmarks, trace_contour
from .features import RawFeatures, measure, select
from .imaging import (
    DEFAULT_KERNEL_RADIUS,
    DEFAULT_SIGMA,
    DEFAULT_THRESHOLD,
    BinaryImage,
    GrayImage,
    binarize,
    detect_edges_log,
    lowpass_filter,
)


@dataclass(frozen=True)
class ExtractionSettings:
    threshold: float = DEFAULT_THRESHOLD
    kernel_radius: int = DEFAULT_KERNEL_RADIUS
    sigma: float = DEFAULT_SIGMA


@dataclass
class Extraction:
    """Everything the pipeline derives from one image."""

    raw: RawFeatures
    vector: np.ndarray  # the 9 selected features, unscaled
    landmarks: Landmarks
    chain: ChainCode
    silhouette: BinaryImage


def extract(img: GrayImage, settings: ExtractionSettings | None = None) -> Extraction:
    """Smooth, threshold, find edges, trace, locate landmarks, measure."""
    s = settings or ExtractionSettings()
    smoothed = lowpass_filter(img, s.kernel_radius)
    silhouette = binarize(smoothed, s.threshold)
    edges = detect_edges_log(silhouette, s.sigma)
    chain = trace_contour(edges)
    landmarks = find_landmarks(chain)
    raw = measure(landmarks, chain, silhouette)
    return Extraction(
        raw=raw,
        vector=select(raw),
        landmarks=landmarks,
        chain=chain,
        silhouette=silhouette,
    )
