"""Per-subset linear systems and Tikhonov-regularized weight solving.

Each subset of target/patch pairs yields an overdetermined complex system
T = P W with T of shape (N_m, N_c), P of shape (N_m, N_n*N_c) and the
weight matrix W of shape (N_n*N_c, N_c). P flattens neighbor values in
neighbor-major, coil-minor order: neighbor j, coil c lands at column
j*N_c + c. The solve uses the normal equations with a Cholesky
factorization of P^H P + alpha I (the normal matrix is small) and falls
back to a rank-revealing SVD solve of the damped tall system if the
factorization fails.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

from .errors import IllConditionedError, InsufficientDataError
from .kcore import GridKSpaceEvaluator, MultiCoilKSpace
from .sampling import KernelGeometry, PatchSet, build_patch_pairs


@dataclasses.dataclass
class SubsetSystem:
    T: np.ndarray          # (N_m, N_c)
    P: np.ndarray          # (N_m, N_n*N_c)
    t: float = 0.0

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=np.complex128)
        self.P = np.asarray(self.P, dtype=np.complex128)
        if self.T.shape[0] != self.P.shape[0]:
            raise ValueError("T and P must have matching row counts")
        if not (np.all(np.isfinite(self.T.view(np.float64))) and
                np.all(np.isfinite(self.P.view(np.float64)))):
            raise ValueError("system entries must be finite")


@dataclasses.dataclass
class WeightSet:
    W: np.ndarray          # (N_n*N_c, N_c)
    alpha: float
    residual_fro: float


def flatten_patches(values):
    """(n, N_n, N_c) neighbor values -> (n, N_n*N_c), neighbor-major."""
    n, n_n, n_c = values.shape
    return values.reshape(n, n_n * n_c)


def assemble_system(subset: PatchSet, values_at) -> SubsetSystem:
    """Evaluate targets and neighbors through a coordinate evaluator."""
    T = np.asarray(values_at(subset.targets), dtype=np.complex128)
    n, n_n = len(subset), subset.n_neighbors
    nb_values = np.asarray(values_at(subset.neighbors.reshape(-1, 3)), dtype=np.complex128)
    P = flatten_patches(nb_values.reshape(n, n_n, -1))
    t = float(subset.targets[0, 2]) if n else 0.0
    return SubsetSystem(T=T, P=P, t=t)


def solve_weights(system: SubsetSystem, alpha) -> WeightSet:
    """W = (P^H P + alpha I)^-1 P^H T via Cholesky, SVD fallback."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    P, T = system.P, system.T
    if P.shape[0] < P.shape[1]:
        raise InsufficientDataError(
            f"system is underdetermined: {P.shape[0]} rows < {P.shape[1]} unknowns per coil"
        )
    n_w = P.shape[1]
    normal = P.conj().T @ P
    normal[np.diag_indices(n_w)] += alpha
    rhs = P.conj().T @ T
    try:
        factor = scipy.linalg.cho_factor(normal, lower=True, check_finite=False)
        W = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        if alpha == 0:
            raise IllConditionedError(
                "normal matrix is singular at alpha=0; raise alpha to regularize"
            ) from None
        damped = np.vstack([P, np.sqrt(alpha) * np.eye(n_w, dtype=np.complex128)])
        padded = np.vstack([T, np.zeros((n_w, T.shape[1]), dtype=np.complex128)])
        W = np.linalg.lstsq(damped, padded, rcond=None)[0]
    residual = float(np.linalg.norm(P @ W - T))
    return WeightSet(W=W, alpha=float(alpha), residual_fro=residual)


def predict_targets(weights: WeightSet, P):
    """Estimate targets from neighbor values: T_hat = P W."""
    return np.asarray(P, dtype=np.complex128) @ weights.W


def _grid_pairs_inside(acs: MultiCoilKSpace, geometry: KernelGeometry, exclusion_radius):
    """All target/patch pairs whose target and neighbors are ACS samples."""
    n = acs.n_fe
    idx = np.rint((acs.coords[:, :2] + 0.5) * n).astype(int)
    err = np.max(np.abs((acs.coords[:, :2] + 0.5) * n - idx), initial=0.0)
    if err > 1e-6:
        raise ValueError("ACS coordinates must lie on the Cartesian grid")
    present = {}
    for row, (ix, iy) in enumerate(idx):
        present[(int(ix), int(iy))] = row

    radius = np.hypot(acs.coords[:, 0], acs.coords[:, 1])
    candidates = np.flatnonzero(radius >= exclusion_radius - 1e-12)
    pairs_t, pairs_nb = [], []
    from .sampling import kernel_offsets_batch

    offsets = kernel_offsets_batch(geometry, acs.coords[candidates])
    steps = np.rint(offsets[:, :, :2] * n).astype(int)
    if geometry.kind == "cartesian":
        if np.max(np.abs(offsets[:, :, :2] * n - steps)) > 1e-6:
            raise ValueError("kernel offsets must be grid-aligned for calibration")
    for c_pos, row in enumerate(candidates):
        ix, iy = idx[row]
        nb_rows = []
        for dx, dy in steps[c_pos]:
            key = (int(ix + dx), int(iy + dy))
            if key not in present:
                break
            nb_rows.append(present[key])
        else:
            pairs_t.append(row)
            pairs_nb.append(nb_rows)
    return np.asarray(pairs_t, dtype=int), np.asarray(pairs_nb, dtype=int)


def calibrate_grappa(acs: MultiCoilKSpace, geometry: KernelGeometry, alpha,
                     exclusion_radius=0.0) -> WeightSet:
    """One weight set from every pair extractable inside a gridded ACS.

    The ACS must be a fully sampled Cartesian region large enough to yield
    at least N_w = N_n*N_c^2 pairs. The returned weights predict missing
    targets from their neighbor values as T_hat = P W.
    """
    t_rows, nb_rows = _grid_pairs_inside(acs, geometry, exclusion_radius)
    n_w = geometry.n_neighbors * acs.n_coils * acs.n_coils
    if t_rows.shape[0] < n_w:
        raise InsufficientDataError(
            f"ACS yields {t_rows.shape[0]} pairs; need at least {n_w} "
            f"(one per weight) to calibrate"
        )
    T = acs.values[t_rows]
    P = flatten_patches(acs.values[nb_rows])
    return solve_weights(SubsetSystem(T=T, P=P), alpha)
