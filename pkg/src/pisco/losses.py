"""Self-consistency measures over k-space subsets and their gradients.

Residual measure: mean over subsets of the Frobenius norm of P_s W_s - T_s,
where W_s solves the Tikhonov-regularized least squares problem of subset s.
Distance measure: mean complex L1 distance between all ordered pairs of
subset weight sets.

Gradients use the real/imaginary cotangent convention g = dL/d(Re z)
+ i*dL/d(Im z) per referenced complex value, so a plain step z -= lr*g
descends. Two modes are provided: 'fixed-weights' treats each W_s as a
constant of the current values; 'through-solve' adds the implicit
dependence of W_s on the values via the normal equations.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

from .kcore import MultiCoilKSpace, GridKSpaceEvaluator, add_noise, nudft_forward
from .sampling import KernelGeometry, SubsetPartition, sample_partition
from .solver import SubsetSystem, WeightSet, assemble_system, solve_weights

GRADIENT_MODES = ("fixed-weights", "through-solve")


@dataclasses.dataclass
class PiscoConfig:
    """All knobs of the consistency measure and its use as a loss term."""

    geometry: KernelGeometry
    alpha: float = 1e-4
    f_od: float = 1.1
    n_s_min: int = 20
    exclusion_radius: float = 10.0 / 448.0
    loss_weight: float = 0.05
    measure: str = "residual"
    gradient_mode: str = "fixed-weights"
    normalize_by_entries: bool = False

    def __post_init__(self):
        if self.loss_weight < 0:
            raise ValueError("loss_weight must be >= 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.f_od <= 1:
            raise ValueError("f_od must be > 1")
        if self.measure not in ("residual", "distance"):
            raise ValueError(f"unknown measure: {self.measure!r}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient_mode: {self.gradient_mode!r}")


def _solve_system(T, P, alpha):
    return solve_weights(SubsetSystem(T=T, P=P), alpha)


def subset_residual_grads(T, P, alpha, mode="fixed-weights", scale=1.0):
    """Residual norm and cotangents of one subset, at array level.

    T: (N_m, N_c) targets, P: (N_m, N_n*N_c) flattened neighbors.
    Returns (residual_fro, G_T, G_P, weights) where the cotangents are
    scaled by `scale` (the subset's share of the total loss).
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient_mode: {mode!r}")
    ws = _solve_system(T, P, alpha)
    W = ws.W
    R = P @ W - T
    res = ws.residual_fro
    # the norm (not squared) has a unit-magnitude gradient direction, so an
    # exactly solvable system would get pure float/regularization noise as
    # a direction; treat near-machine-level residuals as converged
    if res <= 1e-8 * max(float(np.linalg.norm(T)), 1e-300):
        zero_t = np.zeros_like(T)
        zero_p = np.zeros_like(P)
        return res, zero_t, zero_p, ws
    G_R = (scale / res) * R
    G_T = -G_R
    G_P = G_R @ W.conj().T
    if mode == "through-solve":
        n_w = P.shape[1]
        M = P.conj().T @ P
        M[np.diag_indices(n_w)] += alpha
        G_W = P.conj().T @ G_R
        try:
            factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
            G_N = scipy.linalg.cho_solve(factor, G_W, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            G_N = np.linalg.lstsq(M, G_W, rcond=None)[0]
        G_M = -G_N @ W.conj().T
        G_T = G_T + P @ G_N
        G_P = G_P + T @ G_N.conj().T + P @ (G_M + G_M.conj().T)
    return res, G_T, G_P, ws


def subset_weight_sets(partition: SubsetPartition, values_at, alpha):
    """Solve every subset system; returned in subset-index order."""
    weight_sets = []
    for s, subset in enumerate(partition.subsets):
        system = assemble_system(subset, values_at)
        try:
            weight_sets.append(solve_weights(system, alpha))
        except Exception as exc:
            raise type(exc)(f"subset {s}: {exc}") from exc
    return weight_sets


def residual_loss(partition: SubsetPartition, values_at, alpha,
                  normalize_by_entries=False):
    """(1/N_s) * sum_s ||P_s W_s - T_s||_F with per-subset Tikhonov solves."""
    n_s = partition.n_subsets
    total = 0.0
    for s, subset in enumerate(partition.subsets):
        system = assemble_system(subset, values_at)
        try:
            ws = solve_weights(system, alpha)
        except Exception as exc:
            raise type(exc)(f"subset {s}: {exc}") from exc
        r = ws.residual_fro
        if normalize_by_entries:
            r /= np.sqrt(system.T.size)
        total += r
    return total / n_s


def distance_loss(weight_sets):
    """(1/N_s^2) * sum over ordered pairs of ||Re dW||_1 + ||Im dW||_1."""
    if len(weight_sets) < 2:
        raise ValueError("need at least 2 weight sets")
    mats = [ws.W for ws in weight_sets]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("weight sets must share one shape")
    n_s = len(mats)
    total = 0.0
    for i in range(n_s):
        for j in range(n_s):
            if i == j:
                continue
            d = mats[i] - mats[j]
            total += np.sum(np.abs(d.real)) + np.sum(np.abs(d.imag))
    return total / n_s**2


@dataclasses.dataclass
class PiscoGradients:
    """Residual-loss value and cotangents aligned with a partition's slots."""

    loss: float
    target_grads: list      # per subset: (N_m, N_c) complex
    neighbor_grads: list    # per subset: (N_m, N_n, N_c) complex
    weight_sets: list


def pisco_gradient(partition: SubsetPartition, values_at, alpha,
                   mode="fixed-weights", normalize_by_entries=False) -> PiscoGradients:
    """Gradient of the residual loss w.r.t. every referenced k-space value.

    Cotangents are aligned with the partition's target/neighbor slots; a
    coordinate referenced multiple times receives one cotangent per slot
    (consumers scatter-add them, see accumulate_grid_gradient).
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient_mode: {mode!r}")
    n_s = partition.n_subsets
    loss = 0.0
    target_grads, neighbor_grads, weight_sets = [], [], []
    for s, subset in enumerate(partition.subsets):
        system = assemble_system(subset, values_at)
        n_m = system.T.shape[0]
        n_c = system.T.shape[1]
        n_n = subset.n_neighbors
        scale = 1.0 / n_s
        if normalize_by_entries:
            scale /= np.sqrt(system.T.size)
        try:
            res, G_T, G_P, ws = subset_residual_grads(
                system.T, system.P, alpha, mode=mode, scale=scale
            )
        except Exception as exc:
            raise type(exc)(f"subset {s}: {exc}") from exc
        r = res / np.sqrt(system.T.size) if normalize_by_entries else res
        loss += r / n_s
        target_grads.append(G_T)
        neighbor_grads.append(G_P.reshape(n_m, n_n, n_c))
        weight_sets.append(ws)
    return PiscoGradients(loss=loss, target_grads=target_grads,
                          neighbor_grads=neighbor_grads, weight_sets=weight_sets)


def accumulate_grid_gradient(partition: SubsetPartition, grads: PiscoGradients,
                             n_x, n_y, n_c):
    """Scatter slot cotangents onto a Cartesian grid, subset-index order."""
    out = np.zeros((n_x, n_y, n_c), dtype=np.complex128)

    def node_indices(coords):
        fx = (coords[:, 0] + 0.5) * n_x
        fy = (coords[:, 1] + 0.5) * n_y
        ix, iy = np.rint(fx).astype(int), np.rint(fy).astype(int)
        if np.max(np.abs(fx - ix), initial=0.0) > 1e-6 or np.max(np.abs(fy - iy), initial=0.0) > 1e-6:
            raise ValueError("coordinate does not lie on the grid")
        return ix, iy

    for subset, g_t, g_nb in zip(partition.subsets, grads.target_grads,
                                 grads.neighbor_grads):
        ix, iy = node_indices(subset.targets)
        np.add.at(out, (ix, iy), g_t)
        nb = subset.neighbors.reshape(-1, 3)
        ix, iy = node_indices(nb)
        np.add.at(out, (ix, iy), g_nb.reshape(nb.shape[0], -1))
    return out


def combined_objective(dc_loss, pisco_loss, loss_weight):
    """Total reconstruction objective: data consistency plus weighted PISCO."""
    if loss_weight < 0:
        raise ValueError("loss_weight must be >= 0")
    return dc_loss + loss_weight * pisco_loss


# ---------------------------------------------------------------------------
# consistency sweeps over noise level


@dataclasses.dataclass
class SweepResult:
    sigmas: np.ndarray
    seeds: list
    raw: np.ndarray          # (n_seeds, n_sigmas) raw loss values
    mean_raw: np.ndarray     # (n_sigmas,)
    normalized: np.ndarray   # mean curve divided by its maximum
    measure: str
    domain: str

    def csv_rows(self):
        """Rows (sigma, seed, raw_loss, normalized_loss, measure, domain).

        The normalized column divides each raw value by the maximum of the
        seed-mean curve, matching the normalization of `normalized`.
        """
        denom = self.mean_raw.max()
        rows = []
        for i_s, seed in enumerate(self.seeds):
            for i_g, sigma in enumerate(self.sigmas):
                raw = self.raw[i_s, i_g]
                norm = raw / denom if denom > 0 else 0.0
                rows.append((float(sigma), int(seed), float(raw), float(norm),
                             self.measure, self.domain))
        return rows


def consistency_sweep(base: MultiCoilKSpace, sigmas, domain, measure, seeds,
                      config: PiscoConfig, image=None, sens=None, n_subsets=None):
    """Normalized consistency measure versus noise level.

    For every (sigma, seed) the base data is corrupted with fresh noise and
    the measure is evaluated on freshly sampled subsets. domain 'kspace'
    perturbs the grid values directly; domain 'image' perturbs the source
    image (pass image= and sens=) and re-runs the forward transform. The
    output curve is the seed-mean divided by its maximum.
    """
    sigmas = np.asarray(list(sigmas), dtype=float)
    if sigmas.size < 1:
        raise ValueError("need at least one sigma")
    if np.any(np.diff(sigmas) < 0):
        raise ValueError("sigmas must be sorted ascending")
    if domain not in ("kspace", "image"):
        raise ValueError(f"unknown noise domain: {domain!r}")
    if domain == "image" and (image is None or sens is None):
        raise ValueError("image-domain sweeps need image= and sens=")
    if measure not in ("residual", "distance"):
        raise ValueError(f"unknown measure: {measure!r}")
    n_subsets = n_subsets if n_subsets is not None else config.n_s_min
    n = base.n_fe
    t0 = float(base.coords[0, 2])
    raw = np.zeros((len(seeds), sigmas.size))
    for i_s, seed in enumerate(seeds):
        for i_g, sigma in enumerate(sigmas):
            if domain == "kspace":
                noisy = add_noise(base, sigma, "kspace", seed=[seed, i_g, 17])
            else:
                noisy_img = add_noise(image, sigma, "image", seed=[seed, i_g, 17])
                noisy = nudft_forward(noisy_img, sens, base.coords)
            from .kcore import values_to_grid

            evaluator = GridKSpaceEvaluator(values_to_grid(noisy.values, n, n))
            rng = np.random.default_rng([seed, i_g, 101])
            partition = sample_partition(
                (n, n), config.geometry, base.n_coils, config.f_od,
                n_subsets, [t0], rng, config.exclusion_radius,
            )
            if measure == "residual":
                raw[i_s, i_g] = residual_loss(
                    partition, evaluator, config.alpha,
                    normalize_by_entries=config.normalize_by_entries,
                )
            else:
                raw[i_s, i_g] = distance_loss(
                    subset_weight_sets(partition, evaluator, config.alpha)
                )
    mean_raw = raw.mean(axis=0)
    peak = mean_raw.max()
    normalized = mean_raw / peak if peak > 0 else np.zeros_like(mean_raw)
    return SweepResult(sigmas=sigmas, seeds=list(seeds), raw=raw,
                       mean_raw=mean_raw, normalized=normalized,
                       measure=measure, domain=domain)
