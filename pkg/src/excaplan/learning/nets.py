"""From-scratch success-prediction networks (numpy only, manual gradients).

Two variants share one parameter/forward/backward machinery:

* voxel net: the scene occupancy grid plus the six trajectory parameters
  tiled as constant channels (7 input channels), a small stack of
  3D-conv + batch-norm + ReLU blocks, global average pooling, then
  batch-normed fully-connected layers and a scalar head.
* trajectory-only net: the six normalized parameters straight into the
  same fully-connected stack (4 FC layers total including the head).

Heads: sigmoid classifier trained with cross entropy, or a linear
regressor trained with smooth-L1 on volume normalized by the bucket
volume. All tensors live in flat name->array dicts so the optimizer,
serializer, and finite-difference checker can stay generic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ConfigError, DataError, NumericError
from ..geometry import VoxelGrid
from ..kinematics import TaskTrajectory

VARIANT_VOXEL = "voxel_net"
VARIANT_TRAJ = "traj_net"
HEAD_CLASSIFIER = "sigmoid_classifier"
HEAD_REGRESSOR = "linear_regressor"

MODEL_MAGIC = b"EXVM"
MODEL_VERSION = 1

DEFAULT_NORM_RANGES = (
    (-0.19, 0.19),  # x
    (-0.20, 0.20),  # y
    (-2.0943951023931953, -1.0471975511965976),  # alpha: [-120, -60] deg
    (0.05, 0.2),  # d
    (0.05, 0.4),  # l
    (-3.141592653589793, -2.0943951023931953),  # beta: [-180, -120] deg
)


@dataclass(frozen=True)
class NetworkSpec:
    variant: str = VARIANT_VOXEL
    head: str = HEAD_CLASSIFIER
    input_dims: tuple[int, int, int, int] = (32, 32, 16, 7)  # post-pool (nx, ny, nz, channels)
    conv_blocks: tuple[tuple[int, int, int], ...] = (
        (16, 3, 2), (32, 3, 2), (64, 3, 2), (128, 3, 2),
    )  # (out_channels, kernel, stride)
    fc_widths: tuple[int, ...] = (512, 256, 128)
    traj_norm_ranges: tuple[tuple[float, float], ...] = DEFAULT_NORM_RANGES
    volume_scale: float = 450.0  # cm^3 full bucket, regression target normalizer
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.variant not in (VARIANT_VOXEL, VARIANT_TRAJ):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.head not in (HEAD_CLASSIFIER, HEAD_REGRESSOR):
            raise ConfigError(f"unknown head {self.head!r}")
        object.__setattr__(self, "input_dims", tuple(int(v) for v in self.input_dims))
        object.__setattr__(
            self, "conv_blocks", tuple(tuple(int(v) for v in b) for b in self.conv_blocks)
        )
        object.__setattr__(self, "fc_widths", tuple(int(v) for v in self.fc_widths))
        object.__setattr__(
            self, "traj_norm_ranges", tuple((float(a), float(b)) for a, b in self.traj_norm_ranges)
        )
        if len(self.traj_norm_ranges) != 6:
            raise ConfigError("traj_norm_ranges must cover all 6 parameters")
        if any(lo >= hi for lo, hi in self.traj_norm_ranges):
            raise ConfigError("traj_norm_ranges must be ordered")
        if self.variant == VARIANT_VOXEL:
            if self.input_dims[3] != 7:
                raise ConfigError("voxel net input must have 1 occupancy + 6 tiled channels")
            if not self.conv_blocks:
                raise ConfigError("voxel net needs at least one conv block")
        else:
            if self.conv_blocks:
                raise ConfigError("trajectory-only net takes no conv blocks")

    def feature_width(self) -> int:
        """Width entering the first fully-connected layer."""
        if self.variant == VARIANT_TRAJ:
            return 6
        return self.conv_blocks[-1][0]

    def conv_shapes(self) -> list[tuple[int, int, int, int]]:
        """(channels, nx, ny, nz) entering each conv block, plus the final one."""
        nx, ny, nz, c = self.input_dims
        shapes = [(c, nx, ny, nz)]
        for oc, k, s in self.conv_blocks:
            pad = (k - 1) // 2
            nx = (nx + 2 * pad - k) // s + 1
            ny = (ny + 2 * pad - k) // s + 1
            nz = (nz + 2 * pad - k) // s + 1
            if min(nx, ny, nz) < 1:
                raise ConfigError("conv stack shrinks the grid below one cell")
            shapes.append((oc, nx, ny, nz))
        return shapes


class Model:
    """Named parameter tensors plus batch-norm running statistics."""

    def __init__(self, spec: NetworkSpec, params: dict, stats: dict, mode: str = "train"):
        self.spec = spec
        self.params = params
        self.stats = stats
        self.mode = mode

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def train_mode(self) -> "Model":
        self.mode = "train"
        return self

    def eval_mode(self) -> "Model":
        self.mode = "eval"
        return self

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


def _fan_in_uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_model(spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32) -> Model:
    """Fan-in scaled uniform weights, zero biases, unit batch-norm scales."""
    params: dict[str, np.ndarray] = {}
    stats: dict[str, np.ndarray] = {}

    def add_bn(prefix, width):
        params[f"{prefix}.bn.gamma"] = np.ones(width, dtype=dtype)
        params[f"{prefix}.bn.beta"] = np.zeros(width, dtype=dtype)
        stats[f"{prefix}.bn.mean"] = np.zeros(width, dtype=dtype)
        stats[f"{prefix}.bn.var"] = np.ones(width, dtype=dtype)

    if spec.variant == VARIANT_VOXEL:
        in_c = spec.input_dims[3]
        for bi, (oc, k, _s) in enumerate(spec.conv_blocks):
            params[f"conv{bi}.w"] = _fan_in_uniform(rng, (oc, in_c, k, k, k), in_c * k ** 3, dtype)
            params[f"conv{bi}.b"] = np.zeros(oc, dtype=dtype)
            add_bn(f"conv{bi}", oc)
            in_c = oc
    width = spec.feature_width()
    for fi, out_w in enumerate(spec.fc_widths):
        params[f"fc{fi}.w"] = _fan_in_uniform(rng, (out_w, width), width, dtype)
        params[f"fc{fi}.b"] = np.zeros(out_w, dtype=dtype)
        add_bn(f"fc{fi}", out_w)
        width = out_w
    params["out.w"] = _fan_in_uniform(rng, (1, width), width, dtype)
    params["out.b"] = np.zeros(1, dtype=dtype)
    return Model(spec, params, stats, mode="train")


# -- trajectory normalization and input assembly ---------------------------

def normalize_trajectory(traj: TaskTrajectory, ranges) -> np.ndarray:
    """Map each parameter to [-1, 1] over its declared range."""
    vals = traj.as_array()
    out = np.empty(6)
    for i, (lo, hi) in enumerate(ranges):
        out[i] = (vals[i] - lo) / (hi - lo) * 2.0 - 1.0
    return out


def denormalize_trajectory(vec, ranges) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    out = np.empty(6)
    for i, (lo, hi) in enumerate(ranges):
        out[i] = (vec[i] + 1.0) / 2.0 * (hi - lo) + lo
    return out


def average_pool(grid: np.ndarray, out_dims: tuple[int, int, int]) -> np.ndarray:
    """Integer-factor average pooling of a 3D array."""
    nx, ny, nz = grid.shape
    ox, oy, oz = out_dims
    if nx % ox or ny % oy or nz % oz:
        raise ConfigError(f"grid {grid.shape} not divisible by pooled dims {out_dims}")
    fx, fy, fz = nx // ox, ny // oy, nz // oz
    return grid.reshape(ox, fx, oy, fy, oz, fz).mean(axis=(1, 3, 5))


def pooled_occupancy(voxels: VoxelGrid, spec: NetworkSpec, dtype=np.float32) -> np.ndarray:
    occ = voxels.occupancy.astype(np.float64)
    return average_pool(occ, spec.input_dims[:3]).astype(dtype)


def assemble_input(voxels: VoxelGrid, traj: TaskTrajectory, spec: NetworkSpec,
                   dtype=np.float32) -> np.ndarray:
    """7-channel voxel input: occupancy plus six constant tiled parameter channels.

    Average-pool downsampling to the spec's input dims is applied to all
    channels identically (a constant channel pools to itself).
    """
    if spec.variant != VARIANT_VOXEL:
        raise ConfigError("assemble_input only applies to the voxel variant")
    nx, ny, nz, _ = spec.input_dims
    out = np.empty((7, nx, ny, nz), dtype=dtype)
    out[0] = pooled_occupancy(voxels, spec, dtype)
    out[1:] = normalize_trajectory(traj, spec.traj_norm_ranges).astype(dtype)[:, None, None, None]
    return out


def batch_from_pooled(pooled_occ: np.ndarray, norm_params: np.ndarray, dtype=np.float32):
    """Stack pooled occupancy (B, nx, ny, nz) with tiled params (B, 6)."""
    b, nx, ny, nz = pooled_occ.shape
    out = np.empty((b, 7, nx, ny, nz), dtype=dtype)
    out[:, 0] = pooled_occ
    out[:, 1:] = norm_params.astype(dtype)[:, :, None, None, None]
    return out


# -- conv plumbing ----------------------------------------------------------

_CONV_IDX_CACHE: dict = {}


def _conv_indices(in_shape, k, stride):
    """Gather indices into the zero-padded flat input for im2col.

    Returns (idx (positions, C*k^3), padded shape, out spatial dims).
    """
    key = (in_shape, k, stride)
    hit = _CONV_IDX_CACHE.get(key)
    if hit is not None:
        return hit
    c, x, y, z = in_shape
    pad = (k - 1) // 2
    xp, yp, zp = x + 2 * pad, y + 2 * pad, z + 2 * pad
    ox = (xp - k) // stride + 1
    oy = (yp - k) // stride + 1
    oz = (zp - k) // stride + 1
    ci = np.arange(c)
    kx = np.arange(k)
    sx = stride * np.arange(ox)
    sy = stride * np.arange(oy)
    sz = stride * np.arange(oz)
    # flat index ((c*xp + ix)*yp + iy)*zp + iz, positions-major then channel/kernel
    ix = (sx[:, None, None, None, None, None, None] + kx[None, None, None, None, :, None, None])
    iy = (sy[None, :, None, None, None, None, None] + kx[None, None, None, None, None, :, None])
    iz = (sz[None, None, :, None, None, None, None] + kx[None, None, None, None, None, None, :])
    cc = ci[None, None, None, :, None, None, None]
    flat = ((cc * xp + ix) * yp + iy) * zp + iz
    idx = flat.reshape(ox * oy * oz, c * k ** 3)
    out = (idx, (c, xp, yp, zp), (ox, oy, oz))
    _CONV_IDX_CACHE[key] = out
    return out


def _pad_input(x, padded_shape, pad):
    n = x.shape[0]
    c, xp, yp, zp = padded_shape
    if pad == 0:
        return x
    out = np.zeros((n, c, xp, yp, zp), dtype=x.dtype)
    out[:, :, pad:xp - pad, pad:yp - pad, pad:zp - pad] = x
    return out


def conv3d_forward(x, w, b, stride):
    """x (N, C, X, Y, Z), w (OC, C, k, k, k) -> y (N, OC, OX, OY, OZ)."""
    n = x.shape[0]
    oc, c, k = w.shape[0], w.shape[1], w.shape[2]
    idx, padded_shape, out_dims = _conv_indices(x.shape[1:], k, stride)
    pad = (k - 1) // 2
    xp = _pad_input(x, padded_shape, pad)
    cols = xp.reshape(n, -1)[:, idx.ravel()].reshape(n, idx.shape[0], idx.shape[1])
    w2 = w.reshape(oc, -1)
    y = cols @ w2.T + b
    y = y.transpose(0, 2, 1).reshape(n, oc, *out_dims)
    cache = (cols, w2, w.shape, x.shape, idx, padded_shape, pad)
    return y, cache


def conv3d_backward(dy, cache):
    cols, w2, w_shape, x_shape, idx, padded_shape, pad = cache
    n, oc = dy.shape[0], dy.shape[1]
    dy2 = np.ascontiguousarray(dy.reshape(n, oc, -1).transpose(0, 2, 1))  # (N, P, OC)
    dyf = dy2.reshape(-1, oc)
    colsf = cols.reshape(-1, cols.shape[2])
    dw = (dyf.T @ colsf).reshape(w_shape)
    db = dyf.sum(axis=0)
    dcols = dy2 @ w2  # (N, P, CK)
    size = int(np.prod(padded_shape))
    idxr = idx.ravel()
    dxp = np.empty((n, size), dtype=dy.dtype)
    for i in range(n):
        dxp[i] = np.bincount(idxr, weights=dcols[i].ravel(), minlength=size)
    c, xp, yp, zp = padded_shape
    dxp = dxp.reshape(n, c, xp, yp, zp)
    if pad:
        dxp = dxp[:, :, pad:xp - pad, pad:yp - pad, pad:zp - pad]
    return np.ascontiguousarray(dxp).reshape(x_shape), dw.astype(dy.dtype), db.astype(dy.dtype)


# -- batch norm / relu / pooling / linear -----------------------------------

def bn_forward(x2, gamma, beta, run_mean, run_var, momentum, eps, train):
    """Batch norm over axis 0 of a 2D view (rows, features).

    Returns (y, cache, new_run_mean, new_run_var); biased batch variance is
    used both for normalization and for the running estimate.
    """
    if train:
        mu = x2.mean(axis=0)
        var = x2.var(axis=0)
        new_mean = (1.0 - momentum) * run_mean + momentum * mu
        new_var = (1.0 - momentum) * run_var + momentum * var
    else:
        mu, var = run_mean, run_var
        new_mean, new_var = run_mean, run_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x2 - mu) * inv
    y = gamma * xhat + beta
    return y, (xhat, inv, gamma, train), new_mean.astype(x2.dtype), new_var.astype(x2.dtype)


def bn_backward(dy, cache):
    xhat, inv, gamma, train = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if not train:
        return dxhat * inv, dgamma, dbeta
    n = dy.shape[0]
    dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def _to_channel_rows(x):
    """(N, C, X, Y, Z) -> (N*X*Y*Z, C) view for per-channel batch norm."""
    n, c = x.shape[0], x.shape[1]
    return np.ascontiguousarray(x.transpose(0, 2, 3, 4, 1)).reshape(-1, c)


def _from_channel_rows(rows, shape):
    n, c, x, y, z = shape
    return np.ascontiguousarray(rows.reshape(n, x, y, z, c).transpose(0, 4, 1, 2, 3))


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def gap_forward(x):
    """Global average pool (N, C, X, Y, Z) -> (N, C)."""
    return x.mean(axis=(2, 3, 4)), x.shape


def gap_backward(dy, shape):
    n, c, x, y, z = shape
    scale = 1.0 / (x * y * z)
    return np.broadcast_to((dy * scale)[:, :, None, None, None], shape).astype(dy.dtype).copy()


def linear_forward(x, w, b):
    return x @ w.T + b, x


def linear_backward(dy, x, w):
    return dy @ w, dy.T @ x, dy.sum(axis=0)


# -- full forward / backward -------------------------------------------------

def _check_input(spec: NetworkSpec, x: np.ndarray):
    if spec.variant == VARIANT_TRAJ:
        if x.ndim != 2 or x.shape[1] != 6:
            raise ConfigError(f"trajectory net expects (N, 6) inputs, got {x.shape}")
    else:
        nx, ny, nz, c = spec.input_dims
        if x.ndim != 5 or x.shape[1:] != (c, nx, ny, nz):
            raise ConfigError(
                f"voxel net expects (N, {c}, {nx}, {ny}, {nz}) inputs, got {x.shape}"
            )


def forward_raw(model: Model, x: np.ndarray, collect_caches: bool = False):
    """Raw scalar head output (N,) plus layer caches for backward."""
    spec = model.spec
    _check_input(spec, x)
    train = model.mode == "train"
    p, s = model.params, model.stats
    caches = []
    h = x
    if spec.variant == VARIANT_VOXEL:
        for bi, (_oc, _k, stride) in enumerate(spec.conv_blocks):
            name = f"conv{bi}"
            h, ccache = conv3d_forward(h, p[f"{name}.w"], p[f"{name}.b"], stride)
            shape = h.shape
            rows = _to_channel_rows(h)
            rows, bcache, nm, nv = bn_forward(
                rows, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
                s[f"{name}.bn.mean"], s[f"{name}.bn.var"],
                spec.bn_momentum, spec.bn_eps, train,
            )
            if train:
                s[f"{name}.bn.mean"], s[f"{name}.bn.var"] = nm, nv
            h = _from_channel_rows(rows, shape)
            h, mask = relu_forward(h)
            caches.append(("conv", name, ccache, shape, bcache, mask))
        h, gshape = gap_forward(h)
        caches.append(("gap", gshape))
    for fi in range(len(spec.fc_widths)):
        name = f"fc{fi}"
        h, xin = linear_forward(h, p[f"{name}.w"], p[f"{name}.b"])
        h, bcache, nm, nv = bn_forward(
            h, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
            s[f"{name}.bn.mean"], s[f"{name}.bn.var"],
            spec.bn_momentum, spec.bn_eps, train,
        )
        if train:
            s[f"{name}.bn.mean"], s[f"{name}.bn.var"] = nm, nv
        h, mask = relu_forward(h)
        caches.append(("fc", name, xin, bcache, mask))
    z, xin = linear_forward(h, p["out.w"], p["out.b"])
    caches.append(("out", xin))
    return z[:, 0], (caches if collect_caches else None)


def backward_raw(model: Model, caches, dz: np.ndarray) -> dict:
    """Gradients for every trainable tensor given dL/d(raw output)."""
    p = model.params
    grads: dict[str, np.ndarray] = {}
    dh = dz[:, None].astype(model.dtype)
    for entry in reversed(caches):
        kind = entry[0]
        if kind == "out":
            _, xin = entry
            dh, grads["out.w"], grads["out.b"] = linear_backward(dh, xin, p["out.w"])
        elif kind == "fc":
            _, name, xin, bcache, mask = entry
            dh = dh * mask
            dh, grads[f"{name}.bn.gamma"], grads[f"{name}.bn.beta"] = bn_backward(dh, bcache)
            dh, grads[f"{name}.w"], grads[f"{name}.b"] = linear_backward(dh, xin, p[f"{name}.w"])
        elif kind == "gap":
            _, gshape = entry
            dh = gap_backward(dh, gshape)
        else:  # conv
            _, name, ccache, shape, bcache, mask = entry
            dh = dh * mask
            rows = _to_channel_rows(dh)
            rows, grads[f"{name}.bn.gamma"], grads[f"{name}.bn.beta"] = bn_backward(rows, bcache)
            dh = _from_channel_rows(rows, shape)
            dh, grads[f"{name}.w"], grads[f"{name}.b"] = conv3d_backward(dh, ccache)
    return grads


PROB_EPS = 1e-7


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Success probabilities in (0, 1) for the classifier head, predicted
    captured volume in cm^3 for the regressor head."""
    z, _ = forward_raw(model, x)
    if model.spec.head == HEAD_CLASSIFIER:
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))
        return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return z * model.spec.volume_scale


def loss_and_grad(model: Model, x: np.ndarray, targets: np.ndarray):
    """Mean loss over the batch plus gradients for every trainable tensor.

    Classifier: cross entropy against boolean labels (computed on logits).
    Regressor: smooth L1 with unit transition on volume / volume_scale.
    """
    if len(x) == 0:
        raise ValueError("empty batch")
    z, caches = forward_raw(model, x, collect_caches=True)
    n = len(z)
    if model.spec.head == HEAD_CLASSIFIER:
        y = np.asarray(targets, dtype=z.dtype)
        per_sample = np.logaddexp(0.0, z) - y * z
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))
        dz = (p - y) / n
    else:
        t = np.asarray(targets, dtype=z.dtype) / model.spec.volume_scale
        r = z - t
        a = np.abs(r)
        per_sample = np.where(a <= 1.0, 0.5 * r * r, a - 0.5)
        dz = np.clip(r, -1.0, 1.0) / n
    bad = ~np.isfinite(per_sample)
    if bad.any():
        raise NumericError(f"non-finite loss at sample index {int(np.argmax(bad))}")
    loss = float(per_sample.mean())
    grads = backward_raw(model, caches, dz)
    return loss, grads


def batch_loss(model: Model, x: np.ndarray, targets: np.ndarray) -> float:
    """Loss only (no gradients); used by the finite-difference checker."""
    z, _ = forward_raw(model, x)
    if model.spec.head == HEAD_CLASSIFIER:
        y = np.asarray(targets, dtype=z.dtype)
        per_sample = np.logaddexp(0.0, z) - y * z
    else:
        t = np.asarray(targets, dtype=z.dtype) / model.spec.volume_scale
        r = z - t
        a = np.abs(r)
        per_sample = np.where(a <= 1.0, 0.5 * r * r, a - 0.5)
    return float(per_sample.mean())


# -- serialization ------------------------------------------------------------

def save_model(model: Model, path) -> None:
    """EXVM container: magic, version u16, JSON spec blob (u32 length), then
    named tensors (u16 name length + name, rank u8, dims u32 each, f32 data),
    little-endian throughout."""
    spec_blob = json.dumps(asdict(model.spec), sort_keys=True).encode("utf-8")
    tensors = {**model.params, **model.stats}
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<H", MODEL_VERSION))
        f.write(struct.pack("<I", len(spec_blob)))
        f.write(spec_blob)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            t = np.asarray(tensors[name], dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(t.tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MODEL_MAGIC:
        raise DataError(f"bad model magic in {path}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    (spec_len,) = struct.unpack_from("<I", data, 6)
    off = 10
    spec_dict = json.loads(data[off:off + spec_len].decode("utf-8"))
    off += spec_len
    spec = NetworkSpec(**spec_dict)
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + name_len].decode("utf-8")
        off += name_len
        rank = data[off]
        off += 1
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(dims).copy()
        off += 4 * size
        tensors[name] = arr
    params = {k: v for k, v in tensors.items() if not k.endswith((".bn.mean", ".bn.var"))}
    stats = {k: v for k, v in tensors.items() if k.endswith((".bn.mean", ".bn.var"))}
    return Model(spec, params, stats, mode="eval")
