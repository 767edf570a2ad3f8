"""Neural implicit k-space representation at desk scale.

A Gaussian Fourier-feature encoding followed by a sinusoidal MLP maps
(k_x, k_y, t) to N_c complex coil values (as 2*N_c reals; outputs 2c and
2c+1 form coil c's real and imaginary part). Forward, backward and the
optimizer are plain numpy; training couples a magnitude-relative complex L1
data-consistency term with the subset-consistency loss evaluated through
the network on Cartesian-grid coordinate batches.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .errors import DivergedError
from .kcore import CoilSensitivities, MultiCoilKSpace, ifft_recon, make_cartesian_grid
from .losses import PiscoConfig, subset_residual_grads
from .optim import make_optimizer
from .sampling import sample_partition
from .solver import WeightSet


@dataclasses.dataclass
class FeatureEncoding:
    """Fixed random frequency matrix; encode(c) = [sin(2pi Bc), cos(2pi Bc)]."""

    frequencies: np.ndarray  # (n_features, n_dims)

    @classmethod
    def gaussian(cls, n_features, sigma, seed, n_dims=3):
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, sigma, size=(n_features, n_dims)))

    @property
    def n_features(self):
        return self.frequencies.shape[0]

    @property
    def output_dim(self):
        return 2 * self.n_features

    def encode(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        proj = 2.0 * np.pi * coords @ self.frequencies.T
        return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)


class NikModel:
    """Sinusoidal MLP over encoded coordinates.

    n_layers fully connected layers; sine activations with frequency factor
    omega after all but the last. Weight layout for checkpoints and flat
    parameter vectors: W1, b1, ..., W_L, b_L (the encoding matrix is fixed).
    """

    def __init__(self, encoding, weights, biases, omega, n_coils):
        self.encoding = encoding
        self.weights = weights
        self.biases = biases
        self.omega = float(omega)
        self.n_coils = int(n_coils)

    @classmethod
    def initialize(cls, n_coils, n_features=256, sigma=6.0, hidden=512,
                   n_layers=4, omega=20.0, seed=0):
        if n_layers < 2:
            raise ValueError("need at least 2 layers (one hidden, one output)")
        encoding = FeatureEncoding.gaussian(n_features, sigma, seed=[seed, 2])
        rng = np.random.default_rng([seed, 1])
        dims = [encoding.output_dim] + [hidden] * (n_layers - 1) + [2 * n_coils]
        weights, biases = [], []
        for i in range(n_layers):
            fan_in = dims[i]
            if i < n_layers - 1:
                bound = np.sqrt(6.0 / fan_in) / omega
            else:
                bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, dims[i + 1])))
            biases.append(np.zeros(dims[i + 1]))
        return cls(encoding, weights, biases, omega, n_coils)

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def hidden(self):
        return self.weights[0].shape[1] if self.n_layers > 1 else 0

    # ----- forward / backward -------------------------------------------

    def forward_with_cache(self, coords):
        a = self.encoding.encode(coords)
        pre, post = [], [a]
        for i in range(self.n_layers - 1):
            z = a @ self.weights[i] + self.biases[i]
            a = np.sin(self.omega * z)
            pre.append(z)
            post.append(a)
        out = a @ self.weights[-1] + self.biases[-1]
        values = out[:, 0::2] + 1j * out[:, 1::2]
        return values, (pre, post)

    def forward(self, coords):
        """Complex coil values, one row per input coordinate."""
        return self.forward_with_cache(coords)[0]

    def backward(self, cache, value_cotangent):
        """Parameter gradients for a complex output cotangent.

        value_cotangent follows the re/im convention: its real part is
        dL/d(Re out), its imaginary part dL/d(Im out).
        """
        pre, post = cache
        n = value_cotangent.shape[0]
        d_out = np.empty((n, 2 * self.n_coils))
        d_out[:, 0::2] = value_cotangent.real
        d_out[:, 1::2] = value_cotangent.imag
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        grads_w[-1] = post[-1].T @ d_out
        grads_b[-1] = d_out.sum(axis=0)
        da = d_out @ self.weights[-1].T
        for i in range(self.n_layers - 2, -1, -1):
            dz = da * (self.omega * np.cos(self.omega * pre[i]))
            grads_w[i] = post[i].T @ dz
            grads_b[i] = dz.sum(axis=0)
            if i > 0:
                da = dz @ self.weights[i].T
        return grads_w, grads_b

    # ----- flat parameter access ----------------------------------------

    def parameter_arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def get_flat_parameters(self):
        return np.concatenate([p.ravel() for p in self.parameter_arrays()])

    def set_flat_parameters(self, flat):
        offset = 0
        for p in self.parameter_arrays():
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise ValueError("flat parameter size mismatch")


# ---------------------------------------------------------------------------
# losses


def dc_loss(pred, target, epsilon):
    """Mean over samples/coils of |pred - target| / (|target| + epsilon)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return float(np.mean(np.abs(pred - target) / (np.abs(target) + epsilon)))


def dc_loss_grad(pred, target, epsilon):
    """Loss value and the complex cotangent w.r.t. pred."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    diff = pred - target
    mag = np.abs(diff)
    denom = (np.abs(target) + epsilon) * pred.size
    loss = float(np.sum(mag / denom))
    safe = np.where(mag > 0, mag, 1.0)
    grad = np.where(mag > 0, diff / (safe * denom), 0.0)
    return loss, grad


# ---------------------------------------------------------------------------
# training


@dataclasses.dataclass
class AcquiredSet:
    """Acquired coordinate/value pairs from a simulated acquisition."""

    coords: np.ndarray   # (n, 3)
    values: np.ndarray   # (n, n_coils)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.coords.shape[0] != self.values.shape[0]:
            raise ValueError("one value row per coordinate required")
        if self.coords.shape[0] == 0:
            raise ValueError("acquired set must be nonempty")

    @property
    def n_coils(self):
        return self.values.shape[1]

    @property
    def frame_times(self):
        return np.unique(self.coords[:, 2])


@dataclasses.dataclass
class TrainConfig:
    pisco: PiscoConfig
    n_fe: int                      # Cartesian grid resolution for consistency targets
    epochs: int = 5000
    batch_size: int = 10000
    learning_rate: float = 1e-5
    optimizer: str = "adam-amsgrad"
    e_pre: int = 1000
    dc_epsilon: float | None = None  # None: 1e-3 * median |acquired|
    hidden: int = 512
    n_layers: int = 4
    n_features: int = 256
    encoding_sigma: float = 6.0
    omega: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.e_pre > self.epochs:
            raise ValueError("e_pre must not exceed epochs")


def pisco_partition_grads(model: NikModel, partition, alpha,
                          mode="fixed-weights"):
    """Consistency loss of a partition evaluated through the network,
    with parameter gradients via the chain rule."""
    targets = np.concatenate([s.targets for s in partition.subsets], axis=0)
    neighbors = np.concatenate([s.neighbors for s in partition.subsets], axis=0)
    n_pairs, n_n = neighbors.shape[0], neighbors.shape[1]
    t_values_pred, t_cache = model.forward_with_cache(targets)
    nb_values, nb_cache = model.forward_with_cache(neighbors.reshape(-1, 3))
    nb_values = nb_values.reshape(n_pairs, n_n, model.n_coils)

    n_s = partition.n_subsets
    n_m = partition.n_m
    loss = 0.0
    d_targets = np.zeros_like(t_values_pred)
    d_neighbors = np.zeros_like(nb_values)
    for s in range(n_s):
        rows = slice(s * n_m, (s + 1) * n_m)
        T = t_values_pred[rows]
        P = nb_values[rows].reshape(n_m, n_n * model.n_coils)
        res, G_T, G_P, _ = subset_residual_grads(
            T, P, alpha, mode=mode, scale=1.0 / n_s,
        )
        loss += res / n_s
        d_targets[rows] = G_T
        d_neighbors[rows] = G_P.reshape(n_m, n_n, model.n_coils)

    gw_t, gb_t = model.backward(t_cache, d_targets)
    gw_n, gb_n = model.backward(nb_cache, d_neighbors.reshape(-1, model.n_coils))
    grads_w = [a + b for a, b in zip(gw_t, gw_n)]
    grads_b = [a + b for a, b in zip(gb_t, gb_n)]
    return loss, grads_w, grads_b


def _pisco_batch_grads(model, config: TrainConfig, epoch, t_values):
    """Fresh grid-coordinate batches for one epoch, orientation alternating."""
    geometry = config.pisco.geometry
    if geometry.kind == "cartesian":
        orientation = "y-major" if epoch % 2 == 0 else "x-major"
        geometry = dataclasses.replace(geometry, orientation=orientation)
    rng = np.random.default_rng([config.seed, epoch, 47])
    partition = sample_partition(
        (config.n_fe, config.n_fe), geometry, model.n_coils,
        config.pisco.f_od, config.pisco.n_s_min, t_values, rng,
        config.pisco.exclusion_radius,
    )
    return pisco_partition_grads(model, partition, config.pisco.alpha,
                                 config.pisco.gradient_mode)


def train(acquired: AcquiredSet, config: TrainConfig):
    """Fit the implicit representation; returns (model, history).

    History rows are (epoch, dc, pisco) with 1-based epochs; the
    consistency term joins the objective only for epochs > e_pre (the
    pisco column is 0 while inactive).
    """
    model = NikModel.initialize(
        acquired.n_coils, n_features=config.n_features,
        sigma=config.encoding_sigma, hidden=config.hidden,
        n_layers=config.n_layers, omega=config.omega, seed=config.seed,
    )
    epsilon = config.dc_epsilon
    if epsilon is None:
        epsilon = 1e-3 * float(np.median(np.abs(acquired.values)))
    if epsilon <= 0:
        epsilon = 1e-12

    params = model.parameter_arrays()
    opt = make_optimizer(config.optimizer, [p.shape for p in params],
                         config.learning_rate)
    n_acq = acquired.coords.shape[0]
    batch = min(config.batch_size, n_acq)
    t_values = acquired.frame_times
    lam = config.pisco.loss_weight
    history = np.zeros((config.epochs, 3))

    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch, 13])
        idx = rng.choice(n_acq, size=batch, replace=False) if batch < n_acq else np.arange(n_acq)
        pred, cache = model.forward_with_cache(acquired.coords[idx])
        dc, d_pred = dc_loss_grad(pred, acquired.values[idx], epsilon)
        grads_w, grads_b = model.backward(cache, d_pred)

        pisco_value = 0.0
        if epoch > config.e_pre and lam > 0:
            pisco_value, pw, pb = _pisco_batch_grads(model, config, epoch, t_values)
            for i in range(model.n_layers):
                grads_w[i] += lam * pw[i]
                grads_b[i] += lam * pb[i]

        total = dc + (lam * pisco_value if epoch > config.e_pre else 0.0)
        if not np.isfinite(total):
            raise DivergedError(f"loss became non-finite at epoch {epoch}", epoch=epoch)
        history[epoch - 1] = (epoch, dc, pisco_value)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend([gw, gb])
        opt.step(params, grads)
    return model, history


def infer_frame(model: NikModel, t, n_x, n_y, sens: CoilSensitivities):
    """Full-grid forward pass at any time t followed by the coil-combined
    inverse transform (no temporal binning involved)."""
    coords = make_cartesian_grid(n_x, n_y, t=t)
    values = model.forward(coords)
    ksp = MultiCoilKSpace(coords, values, model.n_coils, n_x)
    return ifft_recon(ksp, sens)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: NikModel, extra=None):
    """JSON header line plus little-endian float32 parameter blob.

    Blob order: encoding frequencies, then W1, b1, ..., W_L, b_L.
    """
    header = {
        "format": "nik-checkpoint",
        "version": 1,
        "n_coils": model.n_coils,
        "n_features": model.encoding.n_features,
        "hidden": model.hidden,
        "n_layers": model.n_layers,
        "omega": model.omega,
        "layer_dims": [list(w.shape) for w in model.weights],
        "extra": extra or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(model.encoding.frequencies.astype("<f4").tobytes())
        for w, b in zip(model.weights, model.biases):
            f.write(w.astype("<f4").tobytes())
            f.write(b.astype("<f4").tobytes())


def load_checkpoint(path) -> NikModel:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != "nik-checkpoint":
            raise ValueError("not a model checkpoint file")

        def read(shape):
            count = int(np.prod(shape))
            return np.frombuffer(f.read(count * 4), dtype="<f4").astype(np.float64).reshape(shape)

        freqs = read((header["n_features"], 3))
        weights, biases = [], []
        for shape in header["layer_dims"]:
            weights.append(read(tuple(shape)))
            biases.append(read((shape[1],)))
    return NikModel(FeatureEncoding(freqs), weights, biases,
                    header["omega"], header["n_coils"])
