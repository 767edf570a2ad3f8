"""Simulated multi-coil k-space: phantoms, trajectories, transforms, noise.

Conventions used throughout the package:

* k-space coordinates are normalized to [-0.5, 0.5) per axis, so a Cartesian
  grid of size N has spacing exactly 1/N with nodes at m/N - 0.5.
* a coordinate is a row (k_x, k_y, t) with t in [0, 1] (0 for static data).
* images are complex arrays indexed [ix, iy]; pixel ix sits at spatial
  position (ix - nx//2)/nx in field-of-view units.
* grid-ordered sample lists run x-fastest: sample s = iy*n_x + ix.
"""

from __future__ import annotations

import dataclasses

import numpy as np

GOLDEN_ANGLE_RAD = np.pi * (np.sqrt(5.0) - 1.0) / 2.0  # ~111.246 degrees


# ---------------------------------------------------------------------------
# containers


@dataclasses.dataclass
class MultiCoilKSpace:
    """Complex k-space samples at explicit coordinates for n_coils coils.

    coords: (n_samples, 3) float64 rows (k_x, k_y, t)
    values: (n_samples, n_coils) complex128
    n_fe:   readout length / grid resolution the coordinates refer to
    """

    coords: np.ndarray
    values: np.ndarray
    n_coils: int
    n_fe: int

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValueError("coords must have shape (n_samples, 3)")
        if self.n_coils < 1:
            raise ValueError("n_coils must be >= 1")
        if self.values.shape != (self.coords.shape[0], self.n_coils):
            raise ValueError("values must have shape (n_samples, n_coils)")
        if not np.all(np.isfinite(self.values.view(np.float64))):
            raise ValueError("k-space values must be finite")

    @property
    def n_samples(self):
        return self.coords.shape[0]


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Parametric sampling pattern description.

    kind: 'cartesian-grid', 'radial-golden-angle' or 'radial-uniform'
    angle_increment: radians between consecutive spokes (radial kinds)
    """

    kind: str
    n_spokes: int
    n_fe: int
    angle_increment: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cartesian-grid", "radial-golden-angle", "radial-uniform"):
            raise ValueError(f"unknown trajectory kind: {self.kind!r}")


def golden_angle_trajectory(n_spokes, n_fe):
    return Trajectory("radial-golden-angle", n_spokes, n_fe, GOLDEN_ANGLE_RAD)


def uniform_radial_trajectory(n_spokes, n_fe):
    return Trajectory("radial-uniform", n_spokes, n_fe, np.pi / n_spokes)


@dataclasses.dataclass
class CoilSensitivities:
    """Complex coil sensitivity maps, shape (n_x, n_y, n_coils).

    Normalized so that sum_c |S_c(r)|^2 == 1 at every pixel.
    """

    maps: np.ndarray

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=np.complex128)
        if self.maps.ndim != 3:
            raise ValueError("sensitivity maps must have shape (n_x, n_y, n_coils)")

    @property
    def n_coils(self):
        return self.maps.shape[2]


@dataclasses.dataclass(frozen=True)
class PhantomComponent:
    """One ellipse with affine-in-t geometry: param(t) = param + rate*t.

    Intensities are additive where components overlap. center/axes are in
    field-of-view units (the FOV spans [-0.5, 0.5) per axis).
    """

    intensity: complex
    center: tuple = (0.0, 0.0)
    axes: tuple = (0.2, 0.2)
    center_rate: tuple = (0.0, 0.0)
    axes_rate: tuple = (0.0, 0.0)
    angle: float = 0.0
    angle_rate: float = 0.0

    def at(self, t):
        cx = self.center[0] + self.center_rate[0] * t
        cy = self.center[1] + self.center_rate[1] * t
        ax = self.axes[0] + self.axes_rate[0] * t
        ay = self.axes[1] + self.axes_rate[1] * t
        return cx, cy, ax, ay, self.angle + self.angle_rate * t


@dataclasses.dataclass(frozen=True)
class PhantomSpec:
    """Grid size, component list and coil count of a synthetic object."""

    n_x: int
    n_y: int
    components: tuple
    n_coils: int = 1

    def __post_init__(self):
        # support must stay strictly inside the FOV at both motion extremes
        for comp in self.components:
            for t in (0.0, 1.0):
                cx, cy, ax, ay, _ = comp.at(t)
                if max(abs(cx), abs(cy)) + max(abs(ax), abs(ay)) >= 0.5:
                    raise ValueError(
                        "phantom component leaves the field of view "
                        f"(center=({cx:.3f},{cy:.3f}), axes=({ax:.3f},{ay:.3f}) at t={t})"
                    )


@dataclasses.dataclass
class SamplingMask:
    """Line-undersampling mask on an n_x x n_y grid (lines indexed by k_y)."""

    grid: np.ndarray  # (n_x, n_y) bool
    lines: np.ndarray  # (n_y,) bool
    R: float
    center_fraction: float


# ---------------------------------------------------------------------------
# coordinate generation


def make_cartesian_grid(n_x, n_y, t=0.0):
    """Full Cartesian grid as coordinate rows, x-fastest order.

    Nodes are (m/n_x - 0.5, n/n_y - 0.5, t) for m in 0..n_x-1, n in 0..n_y-1.
    """
    if n_x < 2 or n_y < 2:
        raise ValueError("grid dimensions must be >= 2")
    kx = np.arange(n_x) / n_x - 0.5
    ky = np.arange(n_y) / n_y - 0.5
    gx, gy = np.meshgrid(kx, ky, indexing="xy")  # shape (n_y, n_x)
    n = n_x * n_y
    return np.stack([gx.ravel(), gy.ravel(), np.full(n, float(t))], axis=1)


def make_radial_trajectory(spec: Trajectory, n_frames=1):
    """Radial spokes through the k-space center, round-robin over frames.

    Spoke j has angle j*angle_increment and n_fe equispaced samples with
    radius m/n_fe - 0.5 (m = 0..n_fe-1). Spoke j belongs to frame j mod
    n_frames, at time t = frame / max(n_frames - 1, 1). Rows are ordered
    spoke-major, readout-minor.
    """
    if spec.n_spokes < 1:
        raise ValueError("n_spokes must be >= 1")
    if spec.n_fe < 2:
        raise ValueError("n_fe must be >= 2")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    radii = np.arange(spec.n_fe) / spec.n_fe - 0.5
    coords = np.empty((spec.n_spokes * spec.n_fe, 3))
    for j in range(spec.n_spokes):
        theta = j * spec.angle_increment
        t = (j % n_frames) / max(n_frames - 1, 1)
        rows = slice(j * spec.n_fe, (j + 1) * spec.n_fe)
        coords[rows, 0] = radii * np.cos(theta)
        coords[rows, 1] = radii * np.sin(theta)
        coords[rows, 2] = t
    return coords


def frame_times(n_frames):
    """Times of the round-robin frame assignment: f / max(n_frames-1, 1)."""
    return np.arange(n_frames) / max(n_frames - 1, 1)


# ---------------------------------------------------------------------------
# simulation


def simulate_sensitivities(n_x, n_y, n_c, lobe_width=0.5, phase_cycles=0.5):
    """Smooth analytic coil maps: Gaussian lobes on the FOV perimeter.

    Coil c sits at angle 2*pi*c/n_c on a circle of radius 0.5, with a broad
    Gaussian magnitude (std lobe_width in FOV units) and a gentle linear
    phase ramp of `phase_cycles` cycles across the FOV pointing at the coil.
    Maps are normalized pointwise so sum_c |S_c|^2 == 1. A single coil
    yields a constant unit map with zero phase.
    """
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    if n_c == 1:
        return CoilSensitivities(np.ones((n_x, n_y, 1), dtype=np.complex128))
    x = (np.arange(n_x) - n_x // 2) / n_x
    y = (np.arange(n_y) - n_y // 2) / n_y
    X, Y = np.meshgrid(x, y, indexing="ij")
    maps = np.empty((n_x, n_y, n_c), dtype=np.complex128)
    for c in range(n_c):
        ang = 2.0 * np.pi * c / n_c
        cx, cy = 0.5 * np.cos(ang), 0.5 * np.sin(ang)
        mag = np.exp(-(((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * lobe_width**2)))
        phase = 2.0 * np.pi * phase_cycles * (np.cos(ang) * X + np.sin(ang) * Y) + ang
        maps[:, :, c] = mag * np.exp(1j * phase)
    norm = np.sqrt(np.sum(np.abs(maps) ** 2, axis=2))
    maps /= norm[:, :, None]
    return CoilSensitivities(maps)


def render_phantom(spec: PhantomSpec, t):
    """Rasterize the phantom at time t onto its (n_x, n_y) pixel grid."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x = (np.arange(spec.n_x) - spec.n_x // 2) / spec.n_x
    y = (np.arange(spec.n_y) - spec.n_y // 2) / spec.n_y
    X, Y = np.meshgrid(x, y, indexing="ij")
    img = np.zeros((spec.n_x, spec.n_y), dtype=np.complex128)
    for comp in spec.components:
        cx, cy, ax, ay, ang = comp.at(t)
        ca, sa = np.cos(ang), np.sin(ang)
        u = (X - cx) * ca + (Y - cy) * sa
        v = -(X - cx) * sa + (Y - cy) * ca
        inside = (u / ax) ** 2 + (v / ay) ** 2 <= 1.0
        img[inside] += comp.intensity
    return img


# ---------------------------------------------------------------------------
# transforms


def _pixel_offsets(n):
    return np.arange(n) - n // 2


def nudft_forward(image, sens: CoilSensitivities, coords, chunk=2048):
    """Exact nonuniform DFT of a coil-weighted image at arbitrary coordinates.

    y_c(k) = sum_r S_c(r) x(r) exp(-2*pi*i k.r), with r the integer pixel
    index offset by -N//2. No gridding approximation. Coil values are
    produced in ascending coil order by one matrix product per chunk.
    """
    image = np.asarray(image, dtype=np.complex128)
    nx, ny = image.shape
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    weighted = (sens.maps * image[:, :, None]).reshape(nx * ny, sens.n_coils)
    rx, ry = _pixel_offsets(nx), _pixel_offsets(ny)
    RX, RY = np.meshgrid(rx, ry, indexing="ij")
    rx_flat, ry_flat = RX.ravel().astype(float), RY.ravel().astype(float)
    out = np.empty((coords.shape[0], sens.n_coils), dtype=np.complex128)
    for start in range(0, coords.shape[0], chunk):
        sl = slice(start, min(start + chunk, coords.shape[0]))
        phase = coords[sl, 0:1] * rx_flat[None, :] + coords[sl, 1:2] * ry_flat[None, :]
        out[sl] = np.exp(-2j * np.pi * phase) @ weighted
    return MultiCoilKSpace(coords, out, sens.n_coils, n_fe=nx)


def centered_fft2(arr):
    """Centered 2-D DFT over the first two axes (even sizes only).

    Matches nudft_forward on grid nodes m/N - 0.5 with pixel offsets
    r = i - N//2; equals fftshift(fft2(ifftshift(x))).
    """
    if arr.shape[0] % 2 or arr.shape[1] % 2:
        raise ValueError("centered FFT requires even grid sizes")
    shifted = np.fft.ifftshift(arr, axes=(0, 1))
    return np.fft.fftshift(np.fft.fft2(shifted, axes=(0, 1)), axes=(0, 1))


def centered_ifft2(arr):
    """Inverse of centered_fft2 (includes the 1/(n_x*n_y) factor)."""
    if arr.shape[0] % 2 or arr.shape[1] % 2:
        raise ValueError("centered FFT requires even grid sizes")
    shifted = np.fft.ifftshift(arr, axes=(0, 1))
    return np.fft.fftshift(np.fft.ifft2(shifted, axes=(0, 1)), axes=(0, 1))


def values_to_grid(values, n_x, n_y):
    """Reshape x-fastest sample-ordered values to a grid array [ix, iy, ...]."""
    values = np.asarray(values)
    trailing = values.shape[1:]
    return values.reshape((n_y, n_x) + trailing).swapaxes(0, 1)


def grid_to_values(grid):
    """Flatten a grid array [ix, iy, ...] back to x-fastest sample order."""
    grid = np.asarray(grid)
    trailing = grid.shape[2:]
    return grid.swapaxes(0, 1).reshape((grid.shape[0] * grid.shape[1],) + trailing)


def _check_full_grid(coords, n_x, n_y):
    expected = make_cartesian_grid(n_x, n_y, t=0.0)
    if coords.shape[0] != expected.shape[0]:
        return False
    return bool(np.max(np.abs(coords[:, :2] - expected[:, :2])) < 1e-9)


def ifft_recon(grid_kspace: MultiCoilKSpace, sens: CoilSensitivities):
    """Per-coil inverse DFT of full-grid k-space plus coil combination.

    x = sum_c conj(S_c) * x_c, accumulated in ascending coil order. The
    coordinates must form the complete Cartesian grid of the sensitivity
    map resolution, in x-fastest order.
    """
    nx, ny, nc = sens.maps.shape
    if grid_kspace.n_coils != nc:
        raise ValueError("coil count mismatch between k-space and sensitivities")
    if not _check_full_grid(grid_kspace.coords, nx, ny):
        raise ValueError("k-space coordinates do not form the complete Cartesian grid")
    grid = values_to_grid(grid_kspace.values, nx, ny)  # (nx, ny, nc)
    coil_images = centered_ifft2(grid)
    out = np.zeros((nx, ny), dtype=np.complex128)
    for c in range(nc):
        out += np.conj(sens.maps[:, :, c]) * coil_images[:, :, c]
    return out


# ---------------------------------------------------------------------------
# noise and undersampling


def add_noise(data, sigma, domain, seed):
    """Add zero-centered complex Gaussian noise (real/imag each N(0, sigma^2)).

    domain 'kspace' expects a MultiCoilKSpace, 'image' a complex array; the
    same (inputs, seed) always produce the same output. Image-domain noise
    is meant to be applied before the forward DFT.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    if domain == "kspace":
        if not isinstance(data, MultiCoilKSpace):
            raise ValueError("domain 'kspace' requires a MultiCoilKSpace input")
        shape = data.values.shape
        noise = rng.normal(0.0, sigma, shape) + 1j * rng.normal(0.0, sigma, shape)
        return MultiCoilKSpace(data.coords.copy(), data.values + noise, data.n_coils, data.n_fe)
    if domain == "image":
        if isinstance(data, MultiCoilKSpace):
            raise ValueError("domain 'image' requires an image array input")
        arr = np.asarray(data, dtype=np.complex128)
        noise = rng.normal(0.0, sigma, arr.shape) + 1j * rng.normal(0.0, sigma, arr.shape)
        return arr + noise
    raise ValueError(f"unknown noise domain: {domain!r}")


def make_mask(n_x, n_y, R, center_fraction, seed):
    """Random line-undersampling mask with a fully kept central band.

    Keeps ceil(center_fraction*n_y) central k_y lines plus uniformly random
    additional lines up to round(n_y/R) total.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if not 0.0 <= center_fraction <= 1.0:
        raise ValueError("center_fraction must lie in [0, 1]")
    n_keep = int(round(n_y / R))
    n_center = int(np.ceil(center_fraction * n_y))
    if n_center > n_keep:
        raise ValueError(
            f"center_fraction keeps {n_center} lines but R={R} allows only {n_keep}"
        )
    lines = np.zeros(n_y, dtype=bool)
    start = (n_y - n_center) // 2
    lines[start : start + n_center] = True
    remaining = np.flatnonzero(~lines)
    rng = np.random.default_rng(seed)
    extra = rng.choice(remaining, size=n_keep - n_center, replace=False)
    lines[np.sort(extra)] = True
    grid = np.broadcast_to(lines[None, :], (n_x, n_y)).copy()
    return SamplingMask(grid=grid, lines=lines, R=float(R), center_fraction=float(center_fraction))


# ---------------------------------------------------------------------------
# k-space evaluators (coordinate -> complex coil vector)


class GridKSpaceEvaluator:
    """Exact lookup of values stored on a Cartesian lattice.

    Coordinates must coincide with grid nodes m/N - 0.5 (any t is accepted;
    the grid represents a single time point).
    """

    def __init__(self, grid_values):
        grid_values = np.asarray(grid_values, dtype=np.complex128)
        if grid_values.ndim != 3:
            raise ValueError("grid_values must have shape (n_x, n_y, n_coils)")
        self.grid = grid_values
        self.n_x, self.n_y = grid_values.shape[:2]

    def indices_for(self, coords):
        coords = np.atleast_2d(coords)
        fx = (coords[:, 0] + 0.5) * self.n_x
        fy = (coords[:, 1] + 0.5) * self.n_y
        ix = np.rint(fx).astype(int)
        iy = np.rint(fy).astype(int)
        if np.max(np.abs(fx - ix), initial=0.0) > 1e-6 or np.max(np.abs(fy - iy), initial=0.0) > 1e-6:
            raise ValueError("coordinate does not lie on the grid")
        if np.any(ix < 0) or np.any(ix >= self.n_x) or np.any(iy < 0) or np.any(iy >= self.n_y):
            raise ValueError("coordinate outside the grid")
        return ix, iy

    def __call__(self, coords):
        ix, iy = self.indices_for(coords)
        return self.grid[ix, iy]


class NudftKSpaceEvaluator:
    """Evaluate ideal phantom k-space at arbitrary coordinates (exact DFT)."""

    def __init__(self, image, sens: CoilSensitivities):
        self.image = np.asarray(image, dtype=np.complex128)
        self.sens = sens

    def __call__(self, coords):
        return nudft_forward(self.image, self.sens, coords).values


# ---------------------------------------------------------------------------
# phantom presets


def cardiac_like_phantom(n=64, n_coils=4):
    """Body ellipse, contracting ventricle disc and two small features."""
    comps = (
        PhantomComponent(intensity=1.0, center=(0.0, 0.0), axes=(0.42, 0.36)),
        PhantomComponent(
            intensity=0.85 * np.exp(0.35j),
            center=(0.07, -0.02),
            axes=(0.16, 0.16),
            axes_rate=(-0.06, -0.06),
        ),
        PhantomComponent(
            intensity=0.55,
            center=(-0.17, 0.10),
            axes=(0.05, 0.05),
            center_rate=(0.05, -0.04),
        ),
        PhantomComponent(intensity=0.4, center=(-0.12, -0.18), axes=(0.07, 0.05), angle=0.6),
    )
    return PhantomSpec(n_x=n, n_y=n, components=comps, n_coils=n_coils)


def static_disc_phantom(n=64, n_coils=4, radius=0.3, intensity=1.0):
    comps = (PhantomComponent(intensity=intensity, center=(0.0, 0.0), axes=(radius, radius)),)
    return PhantomSpec(n_x=n, n_y=n, components=comps, n_coils=n_coils)
