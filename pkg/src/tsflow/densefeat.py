"""Per-pixel dense SIFT descriptors at fixed scale and orientation.

Every pixel receives a ``grid_cells**2 * orientation_bins`` vector (128 by
default) built from orientation histograms of the gradients in a
``grid_cells x grid_cells`` arrangement of square cells centered on the
pixel.  There is no keypoint detection and no dominant-orientation
assignment, so descriptors of translated images are translated descriptors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

ZERO_ENERGY = 1e-12
CHUNK_ROWS = 64


@dataclass(frozen=True)
class SiftParams:
    cell_size: int = 4
    grid_cells: int = 4
    orientation_bins: int = 8
    clamp: float = 0.2

    @property
    def dim(self) -> int:
        return self.grid_cells ** 2 * self.orientation_bins

    @property
    def footprint(self) -> int:
        return self.cell_size * self.grid_cells


def gradients(img):
    """Centered differences with border replication; returns ``(g_y, g_z)``."""
    p = np.pad(np.asarray(img, dtype=np.float64), 1, mode="edge")
    gy = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gz = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gy, gz


def orientation_channels(img, nbins: int) -> np.ndarray:
    """Gradient magnitude split between the two nearest orientation bins.

    Bin ``k`` is centered at angle ``2*pi*k/nbins`` measured from the +y
    (rightward) axis toward +z (downward).
    """
    gy, gz = gradients(img)
    mag = np.hypot(gy, gz)
    theta = np.mod(np.arctan2(gz, gy), 2.0 * np.pi)
    pos = theta * (nbins / (2.0 * np.pi))
    k0 = np.floor(pos).astype(np.intp) % nbins
    frac = pos - np.floor(pos)
    k1 = (k0 + 1) % nbins
    lo = mag * (1.0 - frac)
    hi = mag * frac
    chans = np.empty((nbins,) + mag.shape)
    for k in range(nbins):
        chans[k] = np.where(k0 == k, lo, 0.0) + np.where(k1 == k, hi, 0.0)
    return chans


def _triangle(cell_size: int) -> np.ndarray:
    d = np.arange(-cell_size + 1, cell_size)
    return (cell_size - np.abs(d)) / cell_size


def cell_offsets(params: SiftParams) -> np.ndarray:
    """Integer cell-center offsets relative to the descriptor pixel."""
    g = params.grid_cells
    off = (np.arange(g) - (g - 1) / 2.0) * params.cell_size
    if not np.allclose(off, np.round(off)):
        raise ValueError("cell_size * (grid_cells - 1) must be even")
    return np.round(off).astype(int)


def dense_sift(img, params: SiftParams = SiftParams()) -> np.ndarray:
    """Dense SIFT feature image of shape ``(height, width, params.dim)``, float32.

    Each orientation channel is pooled per cell with a separable triangular
    (bilinear) weight of half-width ``cell_size``; the ``grid_cells**2`` cell
    responses around each pixel are stacked, L2-normalized, clamped at
    ``params.clamp`` and renormalized.  Pixels whose footprint carries
    gradient energy below ``1e-12`` get the zero vector.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("dense_sift expects a 2D image")
    fp = params.footprint
    if img.shape[0] < fp or img.shape[1] < fp:
        raise ValueError(f"image {img.shape} smaller than the {fp}px descriptor footprint")

    chans = orientation_channels(img, params.orientation_bins)
    tri = _triangle(params.cell_size)
    pooled = ndimage.correlate1d(chans, tri, axis=1, mode="constant")
    pooled = ndimage.correlate1d(pooled, tri, axis=2, mode="constant")

    offs = cell_offsets(params)
    pad = int(np.abs(offs).max())
    padded = np.pad(pooled, ((0, 0), (pad, pad), (pad, pad)))
    h, w = img.shape
    nb = params.orientation_bins

    # gradient energy over the full support of the weighted cells
    reach = pad + params.cell_size - 1
    box = np.ones(2 * reach + 1)
    gy, gz = gradients(img)
    energy = ndimage.correlate1d(gy * gy + gz * gz, box, axis=0, mode="constant")
    energy = ndimage.correlate1d(energy, box, axis=1, mode="constant")

    out = np.empty((h, w, params.dim), dtype=np.float32)
    for r0 in range(0, h, CHUNK_ROWS):
        r1 = min(r0 + CHUNK_ROWS, h)
        desc = np.empty((r1 - r0, w, params.dim))
        k = 0
        for dz in offs:
            for dy in offs:
                block = padded[:, pad + dz + r0:pad + dz + r1, pad + dy:pad + dy + w]
                desc[:, :, k * nb:(k + 1) * nb] = np.moveaxis(block, 0, -1)
                k += 1
        flat = energy[r0:r1] < ZERO_ENERGY
        norm = np.sqrt(np.einsum("ijk,ijk->ij", desc, desc))
        flat |= norm <= 0.0
        desc /= np.where(flat, 1.0, norm)[..., None]
        np.minimum(desc, params.clamp, out=desc)
        norm = np.sqrt(np.einsum("ijk,ijk->ij", desc, desc))
        desc /= np.where(flat, 1.0, norm)[..., None]
        desc[flat] = 0.0
        out[r0:r1] = desc
    return out
