"""Spectrally matched background selection and clutter estimation.

Scene-driven clutter is the residual enhancement variability over plume-free
pixels whose continuum spectra look like the surface under the plume; it is
estimated robustly and combined with propagated instrument noise into the
total per-pixel uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from .errors import DomainError
from .scene_io import EnhancementField, RadianceCube
from .segmentation import disk, radius_to_pixels, robust_sigma
from .signature import BandAbsorption

DEFAULT_MIN_SAMPLE = 100
DEFAULT_BUFFER_M = 90.0


@dataclass(frozen=True)
class BackgroundSelection:
    """Plume-free pixels spectrally matched to the plume footprint."""

    pixel_indices: np.ndarray  # (n, 2) of (line, sample)
    similarity_scores: np.ndarray  # spectral angle, radians
    continuum_band_indices: np.ndarray
    insufficient: bool

    @property
    def count(self) -> int:
        return int(self.pixel_indices.shape[0])

    def values_from(self, field: EnhancementField) -> np.ndarray:
        return field.delta_x[self.pixel_indices[:, 0], self.pixel_indices[:, 1]]


def continuum_bands(absorption: BandAbsorption) -> np.ndarray:
    """Window bands weakly affected by the gas: k <= 10% of the window maximum.

    Falls back to all window bands if none qualifies (flat absorption).
    """
    k = absorption.k_band
    keep = k <= 0.1 * float(np.max(k))
    if not np.any(keep):
        return absorption.band_indices.copy()
    return absorption.band_indices[keep]


def _unit_mean(spectra: np.ndarray) -> np.ndarray:
    means = spectra.mean(axis=-1, keepdims=True)
    safe = np.where(means != 0.0, means, 1.0)
    return spectra / safe


def spectral_angle(spectra: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Angle between each row and the reference; zero-norm rows score pi.

    Uses the chord half-angle form 2*arcsin(|u - v|/2), which is exactly 0
    for identical spectra and stays well-conditioned at small angles where
    arccos loses precision.
    """
    ref_norm = float(np.linalg.norm(reference))
    norms = np.linalg.norm(spectra, axis=-1)
    out = np.full(spectra.shape[0], np.pi)
    ok = (norms > 0) & (ref_norm > 0)
    unit = spectra[ok] / norms[ok, None]
    chord = np.linalg.norm(unit - reference / ref_norm, axis=-1)
    out[ok] = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return out


def match_background(
    cube: RadianceCube,
    absorption: BandAbsorption,
    plume_mask: np.ndarray,
    n_select: int | None = None,
    buffer_m: float = DEFAULT_BUFFER_M,
    min_sample: int = DEFAULT_MIN_SAMPLE,
) -> BackgroundSelection:
    """Pick the plume-free pixels most similar to the plume-footprint continuum.

    Candidates outside the plume mask dilated by buffer_m are scored by
    spectral angle between unit-mean continuum spectra and the unit-mean mean
    continuum spectrum under the plume; the lowest angles win, ties broken by
    (line, sample) order.
    """
    plume_mask = np.asarray(plume_mask, dtype=bool)
    if not np.any(plume_mask):
        raise DomainError("plume mask is empty")
    if n_select is None:
        n_select = max(500, 5 * int(plume_mask.sum()))

    bands = continuum_bands(absorption)
    spectra = cube.data[bands]  # (nb, lines, samples)
    valid = ~cube.nodata_mask

    r = radius_to_pixels(buffer_m, cube.gsd)
    excluded = scipy.ndimage.binary_dilation(plume_mask, structure=disk(r))
    candidates = valid & ~excluded
    if not np.any(candidates):
        raise DomainError("no candidate background pixels outside the plume buffer")

    reference = _unit_mean(spectra[:, plume_mask & valid].mean(axis=1))
    cand_lines, cand_samples = np.nonzero(candidates)
    cand_spectra = _unit_mean(spectra[:, cand_lines, cand_samples].T)
    angles = spectral_angle(cand_spectra, reference)

    order = np.lexsort((cand_samples, cand_lines, angles))
    take = order[: min(n_select, order.size)]
    indices = np.column_stack([cand_lines[take], cand_samples[take]])
    selection = BackgroundSelection(
        pixel_indices=indices,
        similarity_scores=angles[take],
        continuum_band_indices=bands,
        insufficient=bool(take.size < n_select or take.size < min_sample),
    )
    return selection


def clutter_sigma(field: EnhancementField, selection: BackgroundSelection) -> float:
    """Robust spread (1.4826 * MAD, std fallback) of background enhancements."""
    if selection.count == 0:
        raise DomainError("background selection is empty")
    return robust_sigma(selection.values_from(field))


def total_sigma(field: EnhancementField) -> EnhancementField:
    """Assemble sigma_total = sqrt(sigma_noise^2 + sigma_clutter^2) per pixel."""
    clutter = field.sigma_clutter
    if field.sigma_noise is None and clutter is None:
        raise DomainError("field carries neither sigma_noise nor sigma_clutter")
    if clutter is None:
        clutter_sq = 0.0
    elif np.ndim(clutter) == 0:
        clutter_sq = float(clutter) ** 2
    else:
        clutter_sq = np.asarray(clutter) ** 2
    if field.sigma_noise is None:
        total = np.sqrt(np.broadcast_to(clutter_sq, field.shape).astype(np.float64))
    else:
        total = np.sqrt(field.sigma_noise**2 + clutter_sq)
    return field.replace(sigma_total=total)
