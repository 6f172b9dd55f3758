"""Synthetic multi-floor fingerprint data drawn from a known LMC model.

Used as the bundled end-to-end fixture: a single building whose RSSI field
is a sample of ``mu_m + sum_r alpha[m, r] g_r(x, y, z)`` with Matérn 5/2
latents in metres, observed on a reference-point lattice with one floor
only sparsely surveyed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dataset import from_arrays
from .kernels import Matern52, gram_matrix


@dataclass(frozen=True)
class Scenario:
    width: float = 48.0
    depth: float = 32.0
    n_floors: int = 3
    floor_height: float = 4.0
    rp_spacing: float = 4.0
    n_aps: int = 6
    n_latent: int = 3
    length_scale: float = 15.0
    mean_dbm: float = -62.0
    signal_std: float = 8.0
    noise_std: float = 1.0
    sparse_floor: int | None = 1
    sparse_keep: float = 0.1
    # "thin": keep a random sparse_keep fraction of that floor's reference
    # points; "cut": survey only x <= sparse_keep * width
    sparse_layout: str = "thin"
    n_test_per_floor: int = 100
    building: int = 0
    seed: int = 0
    # latent correlation between points one floor apart at the same (x, y);
    # None keeps the physical floor height in the field
    floor_correlation: float | None = 0.9

    def field_floor_gap(self):
        """Vertical distance between floors as seen by the latent field."""
        if self.floor_correlation is None:
            return self.floor_height
        rho = self.floor_correlation
        if not 0.0 < rho < 1.0:
            raise ValueError("floor_correlation must lie in (0, 1)")
        k = Matern52(self.length_scale)
        return brentq(lambda d: k.value(d) - rho, 0.0, 50.0 * self.length_scale)


def _lattice(sc):
    xs = np.arange(0.0, sc.width + 1e-9, sc.rp_spacing)
    ys = np.arange(0.0, sc.depth + 1e-9, sc.rp_spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def sample_field(sc, points_xyz, rng):
    """Joint draw of the ground-truth outputs at ``points_xyz`` (metres)."""
    n = points_xyz.shape[0]
    K = gram_matrix(Matern52(sc.length_scale), points_xyz)
    K[np.diag_indices(n)] += 1e-8
    chol = np.linalg.cholesky(K)
    latents = chol @ rng.normal(size=(n, sc.n_latent))
    alpha = rng.normal(size=(sc.n_aps, sc.n_latent))
    alpha *= sc.signal_std / np.sqrt((alpha**2).sum(axis=1, keepdims=True))
    mu = sc.mean_dbm + rng.uniform(-8.0, 8.0, size=sc.n_aps)
    return mu + latents @ alpha.T


def _to_records(sc, xy, floors, values, rng):
    noisy = values + sc.noise_std * rng.normal(size=values.shape)
    rssi = np.clip(np.rint(noisy), -104, 0)
    rssi[rssi < -100] = np.nan
    n = xy.shape[0]
    return from_arrays(rssi, xy[:, 0], xy[:, 1], floors, np.full(n, sc.building))


def generate(sc: Scenario):
    """Return ``(train, test, truth)`` for a scenario.

    ``truth`` holds the noise-free field on the full lattice of every floor
    (keys ``xyz``, ``floor``, ``values``, ``surveyed``), so callers can score
    generated fingerprints against it.
    """
    rng = np.random.default_rng(sc.seed)
    grid = _lattice(sc)
    floors = np.repeat(np.arange(sc.n_floors), grid.shape[0])
    grid_xy = np.tile(grid, (sc.n_floors, 1))
    test_xy = rng.uniform([0.0, 0.0], [sc.width, sc.depth],
                          size=(sc.n_test_per_floor * sc.n_floors, 2))
    test_floor = np.repeat(np.arange(sc.n_floors), sc.n_test_per_floor)

    gap = sc.field_floor_gap()
    xyz = np.vstack([
        np.column_stack([grid_xy, floors * gap]),
        np.column_stack([test_xy, test_floor * gap]),
    ])
    values = sample_field(sc, xyz, rng)
    n_grid = grid_xy.shape[0]

    surveyed = np.ones(n_grid, dtype=bool)
    if sc.sparse_floor is not None:
        on = floors == sc.sparse_floor
        if sc.sparse_layout == "cut":
            surveyed &= ~(on & (grid_xy[:, 0] > sc.sparse_keep * sc.width + 1e-9))
        elif sc.sparse_layout == "thin":
            surveyed &= ~on | (rng.random(n_grid) < sc.sparse_keep)
        else:
            raise ValueError(f"unknown sparse_layout {sc.sparse_layout!r}")

    train = _to_records(sc, grid_xy[surveyed], floors[surveyed], values[:n_grid][surveyed], rng)
    test = _to_records(sc, test_xy, test_floor, values[n_grid:], rng)
    truth = {
        "xyz": np.column_stack([grid_xy, floors * sc.floor_height]),
        "floor": floors,
        "values": values[:n_grid],
        "surveyed": surveyed,
    }
    return train, test, truth
