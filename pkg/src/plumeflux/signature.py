"""Band-space gas signature built from a high-resolution absorption table.

The per-band absorption coefficient is the table convolved with a Gaussian
spectral response of the given FWHM; the target radiance perturbation is the
first-order Beer-Lambert derivative t = -k * mu, which keeps matched-filter
outputs in physical concentration-path-length units (ppm*m).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataError
from .scene_io import SensorDescriptor

# FWHM of a Gaussian = 2*sqrt(2*ln 2) * sigma
_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class AbsorptionTable:
    """High-resolution absorption coefficients kappa(lambda), (ppm*m)^-1."""

    wavelengths: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64)
        ka = np.asarray(self.kappa, dtype=np.float64)
        if wl.ndim != 1 or wl.size < 2 or ka.shape != wl.shape:
            raise DataError("absorption table needs two equal-length columns of >= 2 rows")
        if np.any(np.diff(wl) <= 0):
            raise DataError("absorption table wavelengths must be strictly increasing")
        if np.any(ka < 0):
            raise DataError("absorption coefficients must be non-negative")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "kappa", ka)


@dataclass(frozen=True)
class BandAbsorption:
    """SRF-averaged absorption per band inside the retrieval window."""

    k_band: np.ndarray
    band_indices: np.ndarray
    window: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "k_band", np.asarray(self.k_band, dtype=np.float64))
        object.__setattr__(self, "band_indices", np.asarray(self.band_indices, dtype=np.int64))

    def full_band_k(self, n_bands: int) -> np.ndarray:
        """k per instrument band, zero outside the retrieval window."""
        k = np.zeros(n_bands)
        k[self.band_indices] = self.k_band
        return k


@dataclass(frozen=True)
class TargetSpectrum:
    """Unit-enhancement radiance perturbation t = -k * mu per window band.

    ``mu`` is the background mean the spectrum was built from, kept for
    provenance: the target adapts to whichever background partition is in
    effect.
    """

    k_band: np.ndarray
    t: np.ndarray
    mu: np.ndarray
    band_indices: np.ndarray | None = None


def read_absorption_table(path: Union[str, Path]) -> AbsorptionTable:
    """Read a two-column (wavelength_nm, kappa) text table; '#' comments."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"absorption table not found: {path}")
    rows = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"absorption table line is not two columns: {raw!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 2:
        raise DataError(f"absorption table {path} has fewer than 2 rows")
    arr = np.array(rows)
    return AbsorptionTable(wavelengths=arr[:, 0], kappa=arr[:, 1])


def load_bundled_table() -> AbsorptionTable:
    """Synthetic smooth absorption table shipped with the package."""
    ref = resources.files("plumeflux").joinpath("data/ch4_synthetic_absorption.txt")
    with resources.as_file(ref) as path:
        return read_absorption_table(path)


def window_band_indices(
    descriptor: SensorDescriptor, window: tuple[float, float]
) -> np.ndarray:
    """Indices of bands whose centers fall inside [window_low, window_high]."""
    low, high = float(window[0]), float(window[1])
    centers = descriptor.band_centers
    return np.flatnonzero((centers >= low) & (centers <= high))


def band_absorption(
    table: AbsorptionTable,
    descriptor: SensorDescriptor,
    window: tuple[float, float],
) -> BandAbsorption:
    """SRF-average the absorption table onto the sensor bands in the window.

    Each band uses a Gaussian response of standard deviation FWHM / 2.3548
    centered on the band, integrated by trapezoid on the table grid.
    """
    low, high = float(window[0]), float(window[1])
    indices = window_band_indices(descriptor, (low, high))
    if indices.size == 0:
        raise DataError(f"no bands inside retrieval window [{low}, {high}] nm")

    max_fwhm = float(np.max(descriptor.band_fwhm[indices]))
    need_lo = low - 3.0 * max_fwhm
    need_hi = high + 3.0 * max_fwhm
    wl = table.wavelengths
    if wl[0] > need_lo or wl[-1] < need_hi:
        raise DataError(
            "absorption table covers [{:.2f}, {:.2f}] nm but [{:.2f}, {:.2f}] nm is required".format(
                wl[0], wl[-1], need_lo, need_hi
            )
        )

    k_band = np.empty(indices.size)
    for i, b in enumerate(indices):
        center = descriptor.band_centers[b]
        sigma = descriptor.band_fwhm[b] * _FWHM_TO_SIGMA
        g = np.exp(-0.5 * ((wl - center) / sigma) ** 2)
        norm = np.trapezoid(g, wl)
        if norm <= 0:
            raise DataError(f"spectral response of band {b} integrates to zero on the table grid")
        k_band[i] = np.trapezoid(g * table.kappa, wl) / norm
    return BandAbsorption(k_band=k_band, band_indices=indices, window=(low, high))


def target_spectrum(k_band: np.ndarray, mu: np.ndarray, band_indices=None) -> TargetSpectrum:
    """First-order radiance perturbation per unit enhancement: t = -k * mu."""
    k_band = np.asarray(k_band, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if k_band.shape != mu.shape:
        raise DataError(f"k_band shape {k_band.shape} does not match mu shape {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise DataError("background mean must be finite")
    return TargetSpectrum(k_band=k_band, t=-k_band * mu, mu=mu, band_indices=band_indices)


def transmittance(k_band: np.ndarray, delta_x) -> np.ndarray:
    """Beer-Lambert transmittance exp(-k * delta_x); the simulator's forward model."""
    k_band = np.asarray(k_band, dtype=np.float64)
    delta_x = np.asarray(delta_x, dtype=np.float64)
    if np.any(delta_x < 0):
        raise DataError("delta_x must be non-negative")
    return np.exp(-np.multiply.outer(k_band, delta_x))
