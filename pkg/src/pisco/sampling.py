"""Kernel geometries, target/patch generation and subset partitioning.

A kernel of shape [a x b] places a points along its primary axis (including
the target position, which is never emitted as a neighbor) and b points
along its secondary axis straddling the target (b/2 on each side), so the
neighbor count is N_n = a*b. For the Cartesian kind with y-major
orientation, the primary axis is x and the secondary axis is y; x-major
swaps them. Radial kinds interpret the primary axis as the radial direction
of the target's own spoke and the secondary axis as an angular offset.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import InsufficientDataError

_CARTESIAN = "cartesian"
_RADIAL = "radial"
_RADIAL_EQ = "radial-equidistant"


@dataclasses.dataclass(frozen=True)
class KernelGeometry:
    kind: str = _CARTESIAN
    shape: tuple = (3, 2)
    delta: float = 2.0 / 448.0  # base neighbor distance, normalized units
    orientation: str = "y-major"  # cartesian only

    def __post_init__(self):
        if self.kind not in (_CARTESIAN, _RADIAL, _RADIAL_EQ):
            raise ValueError(f"unknown kernel kind: {self.kind!r}")
        a, b = self.shape
        if a < 1 or a % 2 == 0:
            raise ValueError("kernel shape[0] must be odd (target-centered axis)")
        if b < 2 or b % 2 == 1:
            raise ValueError("kernel shape[1] must be even (target-straddling axis)")
        if self.orientation not in ("x-major", "y-major"):
            raise ValueError(f"unknown orientation: {self.orientation!r}")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")

    @property
    def n_neighbors(self):
        return self.shape[0] * self.shape[1]

    @property
    def max_offset(self):
        """Largest per-axis offset magnitude, for in-grid margin checks."""
        a, b = self.shape
        return self.delta * max(a // 2, b // 2)


def _axis_offsets(geometry):
    a, b = geometry.shape
    along = (np.arange(a) - a // 2) * geometry.delta
    half = b // 2
    across = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)]) * geometry.delta
    return along, across


def kernel_offsets_batch(geometry: KernelGeometry, targets):
    """Neighbor offsets for each target row, shape (n_targets, N_n, 3)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n = targets.shape[0]
    along, across = _axis_offsets(geometry)
    if geometry.kind == _CARTESIAN:
        if geometry.orientation == "y-major":
            dx, dy = np.meshgrid(along, across, indexing="ij")
        else:
            dy, dx = np.meshgrid(along, across, indexing="ij")
        flat = np.stack([dx.ravel(), dy.ravel(), np.zeros(dx.size)], axis=1)
        return np.broadcast_to(flat[None], (n, flat.shape[0], 3)).copy()

    # radial kinds: offsets in polar coordinates around each target
    kx, ky = targets[:, 0], targets[:, 1]
    rho = np.hypot(kx, ky)
    if np.any(rho < 1e-12):
        raise ValueError("radial kernels are undefined for a target at the k-space origin")
    phi = np.arctan2(ky, kx)
    if geometry.kind == _RADIAL:
        # delta read as a fraction of the full turn
        dphi_half = 2.0 * np.pi * geometry.delta * np.ones(n)
    else:
        # arc length between angular neighbors equals delta at every radius
        dphi_half = geometry.delta / rho
    half = geometry.shape[1] // 2
    steps = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
    dr = along[None, :, None]                                  # (1, a, 1)
    dphi = dphi_half[:, None, None] * steps[None, None, :]     # (n, 1, b)
    r_new = rho[:, None, None] + dr                            # (n, a, b)
    phi_new = phi[:, None, None] + dphi
    nx = r_new * np.cos(phi_new) - kx[:, None, None]
    ny = r_new * np.sin(phi_new) - ky[:, None, None]
    n_n = geometry.n_neighbors
    out = np.zeros((n, n_n, 3))
    out[:, :, 0] = nx.reshape(n, n_n)
    out[:, :, 1] = ny.reshape(n, n_n)
    return out


def kernel_offsets(geometry: KernelGeometry, target):
    """Neighbor offsets (N_n, 3) around a single target coordinate."""
    return kernel_offsets_batch(geometry, np.asarray(target)[None, :])[0]


@dataclasses.dataclass
class PatchSet:
    """A batch of target/patch pairs sharing one kernel geometry.

    targets:   (n, 3) coordinates
    neighbors: (n, N_n, 3) coordinates, neighbors[i] belongs to targets[i]
    """

    targets: np.ndarray
    neighbors: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.neighbors = np.asarray(self.neighbors, dtype=np.float64)
        if self.targets.ndim != 2 or self.targets.shape[1] != 3:
            raise ValueError("targets must have shape (n, 3)")
        if self.neighbors.shape[0] != self.targets.shape[0] or self.neighbors.shape[2] != 3:
            raise ValueError("neighbors must have shape (n, N_n, 3)")

    def __len__(self):
        return self.targets.shape[0]

    @property
    def n_neighbors(self):
        return self.neighbors.shape[1]


def build_patch_pairs(targets, geometry: KernelGeometry) -> PatchSet:
    """Attach kernel neighbors (sharing the target's t) to each target."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    offsets = kernel_offsets_batch(geometry, targets)
    neighbors = targets[:, None, :] + offsets
    neighbors[:, :, 2] = targets[:, None, 2]
    return PatchSet(targets=targets, neighbors=neighbors)


def sample_targets(grid_shape, count, t_values, rng, exclusion_radius, margin=0.0):
    """Uniformly random Cartesian grid nodes outside a central exclusion disc.

    Eligible nodes satisfy ||(k_x, k_y)|| >= exclusion_radius and keep a
    `margin` (normalized units) to the domain boundary so kernel neighbors
    stay inside [-0.5, 0.5). Each target gets one t drawn from t_values.
    Sampling is with replacement.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if exclusion_radius < 0:
        raise ValueError("exclusion_radius must be >= 0")
    n_x, n_y = grid_shape
    kx = np.arange(n_x) / n_x - 0.5
    ky = np.arange(n_y) / n_y - 0.5
    ok_x = (kx >= -0.5 + margin) & (kx <= 0.5 - 1.0 / n_x - margin + 1e-12)
    ok_y = (ky >= -0.5 + margin) & (ky <= 0.5 - 1.0 / n_y - margin + 1e-12)
    GX, GY = np.meshgrid(kx[ok_x], ky[ok_y], indexing="ij")
    radius = np.hypot(GX.ravel(), GY.ravel())
    nodes = np.stack([GX.ravel(), GY.ravel()], axis=1)[radius >= exclusion_radius - 1e-12]
    if nodes.shape[0] == 0:
        raise ValueError("exclusion radius leaves no valid grid nodes")
    t_values = np.atleast_1d(np.asarray(t_values, dtype=np.float64))
    picks = rng.integers(0, nodes.shape[0], size=count)
    ts = t_values[rng.integers(0, t_values.shape[0], size=count)]
    return np.column_stack([nodes[picks], ts])


def subset_size(n_neighbors, n_c, f_od):
    """Pairs per subset: N_m = ceil(f_od * N_n * N_c^2)."""
    if f_od <= 1.0:
        raise ValueError("overdetermination factor f_od must be > 1")
    n_w = n_neighbors * n_c * n_c
    return int(math.ceil(f_od * n_w))


@dataclasses.dataclass
class SubsetPartition:
    """Frequency-sorted subsets of patch pairs, each of exactly n_m pairs."""

    subsets: list        # list of PatchSet
    n_m: int
    pool_indices: list   # per subset: indices into the original pair pool

    @property
    def n_subsets(self):
        return len(self.subsets)


def sort_and_partition(pairs: PatchSet, n_c, f_od, n_s_min) -> SubsetPartition:
    """Group pairs by t, sort by target radius, chunk into full subsets.

    Within each time group, pairs are sorted ascending by the target's
    distance to the k-space center and chunked into consecutive subsets of
    N_m pairs; trailing remainders are discarded to keep every system
    equally overdetermined.
    """
    n_m = subset_size(pairs.n_neighbors, n_c, f_od)
    t_vals, inverse = np.unique(pairs.targets[:, 2], return_inverse=True)
    subsets, pool_indices = [], []
    for g in range(t_vals.shape[0]):
        sel = np.flatnonzero(inverse == g)
        radius = np.hypot(pairs.targets[sel, 0], pairs.targets[sel, 1])
        order = sel[np.argsort(radius, kind="stable")]
        for s in range(order.shape[0] // n_m):
            idx = order[s * n_m : (s + 1) * n_m]
            subsets.append(PatchSet(pairs.targets[idx], pairs.neighbors[idx]))
            pool_indices.append(idx)
    if len(subsets) < n_s_min:
        raise InsufficientDataError(
            f"got {len(pairs)} pairs yielding {len(subsets)} subsets; "
            f"need at least {n_s_min} subsets of {n_m} pairs "
            f"({n_s_min * n_m} pairs per shared time point)"
        )
    return SubsetPartition(subsets=subsets, n_m=n_m, pool_indices=pool_indices)


def sample_partition(grid_shape, geometry, n_c, f_od, n_subsets, t_values, rng,
                     exclusion_radius, margin=None):
    """Sample exactly n_subsets full subsets, each at a single time point.

    Draws one t per subset from t_values and N_m targets at that t, then
    runs the shared sort-and-chunk path, so every subset is full and the
    partition size is deterministic.
    """
    if margin is None:
        margin = geometry.max_offset
    n_m = subset_size(geometry.n_neighbors, n_c, f_od)
    t_values = np.atleast_1d(np.asarray(t_values, dtype=np.float64))
    ts = t_values[rng.integers(0, t_values.shape[0], size=n_subsets)]
    all_targets = []
    for t in ts:
        all_targets.append(
            sample_targets(grid_shape, n_m, [t], rng, exclusion_radius, margin)
        )
    pairs = build_patch_pairs(np.concatenate(all_targets, axis=0), geometry)
    return sort_and_partition(pairs, n_c, f_od, n_s_min=n_subsets)
