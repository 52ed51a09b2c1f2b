"""Network architectures.

Families:

* ``encoder_mlp`` -- the recovery model: a lightweight NAFNet-style encoder
  projecting the hallucinated image to a k-channel latent map, plus a small
  per-pixel ReLU MLP that predicts the residual, so x_hat = y - mlp(...).
  The encoder deliberately has no long input-to-output skip.
* ``siren`` -- sine-activated coordinate MLP.
* ``nerf_pe`` -- frequency-encoded coordinates into a ReLU MLP.
* ``hashgrid`` -- multiresolution hashed feature tables, bilinearly
  interpolated, into a ReLU MLP.

The three comparison families predict the recovered image directly from
their per-pixel inputs. Weight tensors are created in a fixed construction
order which is also the canonical serialization order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops, rng
from .arch import ArchDescriptor
from .errors import ConfigError, ShapeError
from .tensor import Tensor, no_grad

MIN_IMAGE_SIZE = 8
PIXEL_CHUNK = 1 << 18

# Comparison models must roughly match the full container budget
# (180 KB +/- 15%, serialized float32).
BASELINE_SIZE_TARGET = 180_000
BASELINE_SIZE_TOL = 0.15

HASH_PRIME = 2654435761


# -- initialization ------------------------------------------------------


class _Init:
    """Hands each new weight tensor its own deterministic stream.

    Stream index = tensor construction order, so re-running with the same
    seed reproduces every weight bit-exactly.
    """

    def __init__(self, seed: int, dtype):
        self.seed = seed
        self.dtype = dtype
        self.counter = 0

    def uniform(self, shape, bound: float) -> Tensor:
        gen = rng.stream(self.seed, "init", self.counter)
        self.counter += 1
        data = gen.uniform(-bound, bound, size=shape).astype(self.dtype)
        return Tensor(data, requires_grad=True)

    def constant(self, shape, value: float,
                 requires_grad: bool = True) -> Tensor:
        data = np.full(shape, value, dtype=self.dtype)
        return Tensor(data, requires_grad=requires_grad)


def default_bound(fan_in: int) -> float:
    return 1.0 / math.sqrt(fan_in)


def siren_first_bound(fan_in: int) -> float:
    return 1.0 / fan_in


def siren_hidden_bound(fan_in: int, omega0: float) -> float:
    return math.sqrt(6.0 / fan_in) / omega0


# -- layers --------------------------------------------------------------


class Linear:
    def __init__(self, d_in: int, d_out: int, init: _Init,
                 w_bound: float | None = None,
                 b_bound: float | None = None):
        wb = default_bound(d_in) if w_bound is None else w_bound
        bb = default_bound(d_in) if b_bound is None else b_bound
        self.w = init.uniform((d_in, d_out), wb)
        self.b = init.uniform((d_out,), bb)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)

    def named(self, prefix: str):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


class Conv:
    def __init__(self, c_in: int, c_out: int, ksize: int, init: _Init,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        fan = c_in * ksize * ksize
        bound = default_bound(fan)
        self.w = init.uniform((c_out, c_in, ksize, ksize), bound)
        self.b = init.uniform((c_out,), bound) if bias else None
        self._zero_b = None if bias else Tensor(
            np.zeros(c_out, dtype=init.dtype))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        b = self.b if self.b is not None else self._zero_b
        return ops.conv2d(x, self.w, b, stride=self.stride,
                          padding=self.padding)

    def named(self, prefix: str):
        out = [(f"{prefix}.w", self.w)]
        if self.b is not None:
            out.append((f"{prefix}.b", self.b))
        return out


class DepthwiseConv:
    def __init__(self, channels: int, ksize: int, init: _Init,
                 padding: int = 1):
        bound = default_bound(ksize * ksize)
        self.w = init.uniform((channels, ksize, ksize), bound)
        self.b = init.uniform((channels,), bound)
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.w, self.b, padding=self.padding)

    def named(self, prefix: str):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


class LayerNormChannels:
    def __init__(self, channels: int, init: _Init):
        self.gamma = init.constant((channels,), 1.0)
        self.beta = init.constant((channels,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm_channels(x, self.gamma, self.beta)

    def named(self, prefix: str):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta",
                                                  self.beta)]


class BatchNorm2d:
    """Batch norm with running statistics kept as non-trainable tensors so
    they serialize with the model."""

    def __init__(self, channels: int, init: _Init):
        self.gamma = init.constant((channels,), 1.0)
        self.beta = init.constant((channels,), 0.0)
        self.running_mean = init.constant((channels,), 0.0,
                                          requires_grad=False)
        self.running_var = init.constant((channels,), 1.0,
                                         requires_grad=False)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm2d(x, self.gamma, self.beta,
                                self.running_mean.data,
                                self.running_var.data, training=training)

    def named(self, prefix: str):
        return [(f"{prefix}.gamma", self.gamma),
                (f"{prefix}.beta", self.beta),
                (f"{prefix}.running_mean", self.running_mean),
                (f"{prefix}.running_var", self.running_var)]


class NafBlock:
    def __init__(self, channels: int, init: _Init):
        c = channels
        self.ln1 = LayerNormChannels(c, init)
        self.conv1 = Conv(c, 2 * c, 1, init)
        self.dw = DepthwiseConv(2 * c, 3, init, padding=1)
        self.sca = Conv(c, c, 1, init)
        self.conv3 = Conv(c, c, 1, init)
        self.res1 = init.constant((c, 1, 1), 0.0)
        self.ln2 = LayerNormChannels(c, init)
        self.conv4 = Conv(c, 2 * c, 1, init)
        self.conv5 = Conv(c, c, 1, init)
        self.res2 = init.constant((c, 1, 1), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        z = self.ln1(x)
        z = self.conv1(z)
        z = self.dw(z)
        z = ops.simple_gate(z)
        z = ops.mul(z, self.sca(ops.global_avg_pool(z)))
        z = self.conv3(z)
        y = ops.add(x, ops.mul(z, self.res1))
        w = self.ln2(y)
        w = self.conv4(w)
        w = ops.simple_gate(w)
        w = self.conv5(w)
        return ops.add(y, ops.mul(w, self.res2))

    def named(self, prefix: str):
        out = []
        out += self.ln1.named(f"{prefix}.ln1")
        out += self.conv1.named(f"{prefix}.conv1")
        out += self.dw.named(f"{prefix}.dw")
        out += self.sca.named(f"{prefix}.sca")
        out += self.conv3.named(f"{prefix}.conv3")
        out.append((f"{prefix}.res1", self.res1))
        out += self.ln2.named(f"{prefix}.ln2")
        out += self.conv4.named(f"{prefix}.conv4")
        out += self.conv5.named(f"{prefix}.conv5")
        out.append((f"{prefix}.res2", self.res2))
        return out


# -- encoders ------------------------------------------------------------


class NafEncoder:
    """One encode / middle / decode stage of NAF blocks around a single
    2x down/upsample, without the long input-to-output skip."""

    def __init__(self, arch: ArchDescriptor, init: _Init):
        w, k, n = arch.encoder_width, arch.k, arch.encoder_blocks
        self.intro = Conv(3, w, 3, init, padding=1)
        self.enc = [NafBlock(w, init) for _ in range(n)]
        self.down = Conv(w, 2 * w, 2, init, stride=2)
        self.mid = [NafBlock(2 * w, init) for _ in range(n)]
        self.up = Conv(2 * w, 4 * w, 1, init, bias=False)
        self.dec = [NafBlock(w, init) for _ in range(n)]
        self.final = Conv(w, k, 3, init, padding=1)

    def __call__(self, y: Tensor) -> Tensor:
        B, C, H, W = y.shape
        t = y
        pb, pr = H % 2, W % 2
        if pb or pr:
            t = ops.pad2d(t, pb, pr)
        t = self.intro(t)
        for blk in self.enc:
            t = blk(t)
        t = self.down(t)
        for blk in self.mid:
            t = blk(t)
        t = ops.pixel_shuffle(self.up(t), 2)
        for blk in self.dec:
            t = blk(t)
        t = self.final(t)
        if pb or pr:
            t = ops.crop2d(t, H, W)
        return t

    def named(self, prefix: str = "encoder"):
        out = self.intro.named(f"{prefix}.intro")
        for i, blk in enumerate(self.enc):
            out += blk.named(f"{prefix}.enc{i}")
        out += self.down.named(f"{prefix}.down")
        for i, blk in enumerate(self.mid):
            out += blk.named(f"{prefix}.mid{i}")
        out += self.up.named(f"{prefix}.up")
        for i, blk in enumerate(self.dec):
            out += blk.named(f"{prefix}.dec{i}")
        out += self.final.named(f"{prefix}.final")
        return out


class BaseEncoder:
    """Plain conv-BN-ReLU cascade ablation at a matched parameter budget."""

    def __init__(self, arch: ArchDescriptor, init: _Init):
        w, k = arch.encoder_width, arch.k
        self.convs = [Conv(3, w, 3, init, padding=1),
                      Conv(w, w, 3, init, padding=1),
                      Conv(w, w, 3, init, padding=1)]
        self.norms = [BatchNorm2d(w, init) for _ in range(3)]
        self.final = Conv(w, k, 3, init, padding=1)
        self.training = False

    def __call__(self, y: Tensor) -> Tensor:
        t = y
        for conv, norm in zip(self.convs, self.norms):
            t = ops.relu(norm(conv(t), training=self.training))
        return self.final(t)

    def named(self, prefix: str = "encoder"):
        out = []
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms)):
            out += conv.named(f"{prefix}.conv{i}")
            out += norm.named(f"{prefix}.bn{i}")
        out += self.final.named(f"{prefix}.final")
        return out


class ReluMlp:
    def __init__(self, dims, init: _Init):
        self.layers = [Linear(a, b, init) for a, b in zip(dims, dims[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = ops.relu(layer(x))
        return self.layers[-1](x)

    def named(self, prefix: str = "mlp"):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named(f"{prefix}.fc{i}")
        return out


class SirenNet:
    """First sine layer + hidden sine layers + linear head, all scaled by
    omega0 inside the sine, with the matching uniform init bounds."""

    def __init__(self, d_in: int, hidden: int, n_hidden: int, d_out: int,
                 omega0: float, init: _Init):
        self.omega0 = omega0
        self._omega = Tensor(np.asarray(omega0, dtype=init.dtype))
        self.layers = [Linear(d_in, hidden, init,
                              w_bound=siren_first_bound(d_in))]
        for _ in range(n_hidden):
            self.layers.append(Linear(
                hidden, hidden, init,
                w_bound=siren_hidden_bound(hidden, omega0)))
        self.head = Linear(hidden, d_out, init,
                           w_bound=siren_hidden_bound(hidden, omega0))

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = ops.sine(ops.mul(layer(x), self._omega))
        return self.head(x)

    def named(self, prefix: str = "net"):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named(f"{prefix}.sine{i}")
        out += self.head.named(f"{prefix}.head")
        return out


def nerf_positional_encode(coords: np.ndarray, freqs: int) -> np.ndarray:
    """Frequency-encode each scalar c as [sin(2^j pi c), cos(2^j pi c)]
    for j = 0..freqs-1, interleaved, scalars in input order."""
    if freqs < 1:
        raise ConfigError(f"pe_frequencies must be >= 1, got {freqs}")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise ShapeError(f"positional encode expects (n, d) coords, got "
                         f"{coords.shape}")
    n, d = coords.shape
    ang = coords[:, :, None] * (np.pi * (2.0 ** np.arange(freqs)))
    out = np.empty((n, d, freqs, 2), dtype=np.float64)
    out[..., 0] = np.sin(ang)
    out[..., 1] = np.cos(ang)
    return out.reshape(n, d * freqs * 2)


class HashGridEncoder:
    """Multiresolution feature tables addressed by spatial hashing.

    Level l has resolution floor(base * growth^l). Levels whose dense
    vertex grid fits in the table are indexed directly; larger levels hash
    the corner as (ix XOR iy * 2654435761) mod T. Features are bilinearly
    interpolated from the 4 surrounding corners.
    """

    def __init__(self, arch: ArchDescriptor, init: _Init):
        self.levels = arch.hashgrid_levels
        self.features = arch.hashgrid_features
        self.table_size = arch.hashgrid_table_size
        self.resolutions = [
            int(math.floor(arch.hashgrid_base_resolution *
                           arch.hashgrid_growth ** lvl))
            for lvl in range(self.levels)]
        self.tables = [init.uniform((self.table_size, self.features), 1e-4)
                       for _ in range(self.levels)]

    def _corner_index(self, ix: np.ndarray, iy: np.ndarray,
                      res: int) -> np.ndarray:
        if (res + 1) ** 2 <= self.table_size:
            return iy * (res + 1) + ix
        return (ix ^ (iy * HASH_PRIME)) % self.table_size

    def _level_lookup(self, coords01: np.ndarray, res: int):
        """Corner indices (n,4) and bilinear weights (n,4) for one level."""
        s = coords01 * res
        i0 = np.clip(np.floor(s).astype(np.int64), 0, res - 1)
        f = s - i0
        fx, fy = f[:, 0], f[:, 1]
        idx = np.empty((coords01.shape[0], 4), dtype=np.int64)
        wts = np.empty((coords01.shape[0], 4), dtype=np.float64)
        for ci, (dx, dy) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            idx[:, ci] = self._corner_index(i0[:, 0] + dx, i0[:, 1] + dy,
                                            res)
            wx = fx if dx else 1.0 - fx
            wy = fy if dy else 1.0 - fy
            wts[:, ci] = wx * wy
        return idx, wts

    def _check_coords(self, coords01: np.ndarray) -> np.ndarray:
        coords01 = np.asarray(coords01, dtype=np.float64)
        if coords01.ndim != 2 or coords01.shape[1] != 2:
            raise ShapeError(f"hashgrid encode expects (n,2) coords, got "
                             f"{coords01.shape}")
        if coords01.size and (coords01.min() < 0.0 or coords01.max() > 1.0):
            raise ShapeError("hashgrid encode expects coords in [0,1]^2")
        return coords01

    def encode_np(self, coords01: np.ndarray) -> np.ndarray:
        coords01 = self._check_coords(coords01)
        feats = []
        for table, res in zip(self.tables, self.resolutions):
            idx, wts = self._level_lookup(coords01, res)
            gathered = table.data[idx.reshape(-1)].reshape(
                coords01.shape[0], 4, self.features)
            feats.append((gathered *
                          wts[:, :, None].astype(table.data.dtype)).sum(1))
        return np.concatenate(feats, axis=1)

    def encode_graph(self, coords01: np.ndarray) -> Tensor:
        coords01 = self._check_coords(coords01)
        feats = []
        for table, res in zip(self.tables, self.resolutions):
            idx, wts = self._level_lookup(coords01, res)
            level = None
            for ci in range(4):
                term = ops.mul(
                    ops.gather_rows(table, idx[:, ci]),
                    Tensor(wts[:, ci:ci + 1].astype(table.data.dtype)))
                level = term if level is None else ops.add(level, term)
            feats.append(level)
        return ops.concat(feats, axis=1)

    def named(self, prefix: str = "grid"):
        return [(f"{prefix}.level{i}", t)
                for i, t in enumerate(self.tables)]


# -- coordinate helpers ---------------------------------------------------


def normalized_coords(h: int, w: int, coords_xy: np.ndarray) -> np.ndarray:
    """Pixel-center normalization: x -> (x+0.5)/W, y -> (y+0.5)/H."""
    coords_xy = np.asarray(coords_xy)
    out = np.empty((coords_xy.shape[0], 2), dtype=np.float64)
    out[:, 0] = (coords_xy[:, 0] + 0.5) / w
    out[:, 1] = (coords_xy[:, 1] + 0.5) / h
    return out


def full_grid_coords(h: int, w: int) -> np.ndarray:
    """All pixel (x, y) coordinates in row-major (y outer) order."""
    ys, xs = np.divmod(np.arange(h * w, dtype=np.int64), w)
    return np.stack([xs, ys], axis=1)


def _check_image(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 3 or y.shape[2] != 3:
        raise ShapeError(f"expected an (H,W,3) image, got {y.shape}")
    if y.shape[0] < MIN_IMAGE_SIZE or y.shape[1] < MIN_IMAGE_SIZE:
        raise ShapeError(
            f"image {y.shape[0]}x{y.shape[1]} below minimum size "
            f"{MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    return y


# -- recovery models -------------------------------------------------------


@dataclass
class ImageContext:
    h: int
    w: int
    y_flat: np.ndarray                 # (H*W, 3)
    latents_flat: np.ndarray | None    # (H*W, k) for encoder_mlp


class RecoveryModel:
    """Common surface shared by all families.

    ``predict_pixels`` returns the predicted recovered values x_hat at the
    requested pixels as a graph Tensor (differentiable w.r.t. the capture
    parameters); ``predict_image`` is the full-image inference path.
    """

    def __init__(self, descriptor: ArchDescriptor, dtype):
        self.descriptor = descriptor
        self.dtype = dtype

    @property
    def family(self) -> str:
        return self.descriptor.family

    def named_parameters(self):
        raise NotImplementedError

    def parameters(self):
        return [t for _, t in self.named_parameters() if t.requires_grad]

    def capture_parameters(self):
        raise NotImplementedError

    def frozen_parameters(self):
        capture = {id(t) for t in self.capture_parameters()}
        return [t for _, t in self.named_parameters()
                if id(t) not in capture]

    def weight_arrays(self):
        return [t.data for _, t in self.named_parameters()]

    def load_weights(self, arrays) -> None:
        named = self.named_parameters()
        arrays = list(arrays)
        if len(arrays) != len(named):
            raise ShapeError(f"expected {len(named)} weight tensors, got "
                             f"{len(arrays)}")
        for (name, t), arr in zip(named, arrays):
            arr = np.asarray(arr)
            if arr.size != t.size:
                raise ShapeError(
                    f"weight {name!r} expects {t.size} values, got "
                    f"{arr.size}")
            t.data = np.ascontiguousarray(arr.reshape(t.shape),
                                          dtype=self.dtype)

    def image_context(self, y: np.ndarray) -> ImageContext:
        raise NotImplementedError

    def predict_pixels(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> Tensor:
        raise NotImplementedError

    def predict_image(self, y: np.ndarray,
                      chunk: int = PIXEL_CHUNK) -> np.ndarray:
        y = _check_image(y)
        h, w = y.shape[:2]
        with no_grad():
            ctx = self.image_context(y)
            coords = full_grid_coords(h, w)
            parts = [self.predict_pixels(ctx, coords[i:i + chunk]).data
                     for i in range(0, coords.shape[0], chunk)]
        return np.concatenate(parts, axis=0).reshape(h, w, 3)

    def _validate_coords(self, ctx: ImageContext,
                         coords_xy: np.ndarray) -> np.ndarray:
        coords_xy = np.asarray(coords_xy)
        if coords_xy.ndim != 2 or coords_xy.shape[1] != 2:
            raise ShapeError(f"expected (n,2) pixel coords, got "
                             f"{coords_xy.shape}")
        if coords_xy.size and (
                coords_xy[:, 0].min() < 0 or coords_xy[:, 0].max() >= ctx.w
                or coords_xy[:, 1].min() < 0
                or coords_xy[:, 1].max() >= ctx.h):
            raise ValueError(
                f"pixel coordinate out of bounds for {ctx.h}x{ctx.w} image")
        return coords_xy.astype(np.int64)


class EncoderMlpModel(RecoveryModel):
    def __init__(self, descriptor: ArchDescriptor, seed: int = 0,
                 dtype=np.float32):
        super().__init__(descriptor, dtype)
        init = _Init(seed, dtype)
        if descriptor.k > 0:
            cls = NafEncoder if descriptor.encoder_arch == "nafnet" \
                else BaseEncoder
            self.encoder = cls(descriptor, init)
        else:
            self.encoder = None
        dims = [descriptor.mlp_input_dim()] + \
            [descriptor.mlp_hidden] * descriptor.mlp_layers + [3]
        self.mlp = ReluMlp(dims, init)

    def named_parameters(self):
        out = []
        if self.encoder is not None:
            out += self.encoder.named("encoder")
        out += self.mlp.named("mlp")
        return out

    def capture_parameters(self):
        return [t for _, t in self.mlp.named("mlp") if t.requires_grad]

    def encode_image(self, y: np.ndarray) -> np.ndarray:
        """Latents for one (H,W,3) image in [0,1]; returns (H,W,k)."""
        y = _check_image(y)
        if y.min() < -1e-6 or y.max() > 1.0 + 1e-6:
            raise ValueError("encoder input must lie in [0,1]")
        if self.encoder is None:
            raise ConfigError("this configuration has no encoder (k=0)")
        if isinstance(self.encoder, BaseEncoder):
            self.encoder.training = False
        batch = np.ascontiguousarray(
            y.transpose(2, 0, 1)[None], dtype=self.dtype)
        with no_grad():
            lat = self.encoder(Tensor(batch))
        return lat.data[0].transpose(1, 2, 0)

    def image_context(self, y: np.ndarray) -> ImageContext:
        y = _check_image(y)
        h, w = y.shape[:2]
        lat = None
        if self.encoder is not None:
            lat = self.encode_image(y).reshape(h * w, -1)
        return ImageContext(h=h, w=w,
                            y_flat=np.ascontiguousarray(
                                y.reshape(h * w, 3), dtype=self.dtype),
                            latents_flat=lat)

    def pixel_features(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> np.ndarray:
        coords_xy = self._validate_coords(ctx, coords_xy)
        mode = self.descriptor.input_mode
        norm = normalized_coords(ctx.h, ctx.w, coords_xy)
        if mode == "xy":
            return norm.astype(self.dtype)
        flat = coords_xy[:, 1] * ctx.w + coords_xy[:, 0]
        lat = ctx.latents_flat[flat]
        if mode == "latent_only":
            return np.ascontiguousarray(lat, dtype=self.dtype)
        return np.concatenate([norm.astype(self.dtype),
                               lat.astype(self.dtype)], axis=1)

    def predict_pixels(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> Tensor:
        coords_xy = self._validate_coords(ctx, coords_xy)
        feats = Tensor(self.pixel_features(ctx, coords_xy))
        residual = self.mlp(feats)
        flat = coords_xy[:, 1] * ctx.w + coords_xy[:, 0]
        y_rows = Tensor(ctx.y_flat[flat])
        return ops.sub(y_rows, residual)


class SirenModel(RecoveryModel):
    def __init__(self, descriptor: ArchDescriptor, seed: int = 0,
                 dtype=np.float32):
        super().__init__(descriptor, dtype)
        init = _Init(seed, dtype)
        self.net = SirenNet(descriptor.mlp_input_dim(),
                            descriptor.mlp_hidden, descriptor.mlp_layers,
                            3, descriptor.siren_omega0, init)

    def named_parameters(self):
        return self.net.named("net")

    def capture_parameters(self):
        return self.parameters()

    def image_context(self, y: np.ndarray) -> ImageContext:
        y = _check_image(y)
        h, w = y.shape[:2]
        return ImageContext(h=h, w=w,
                            y_flat=np.ascontiguousarray(
                                y.reshape(h * w, 3), dtype=self.dtype),
                            latents_flat=None)

    def input_features(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> np.ndarray:
        norm = normalized_coords(ctx.h, ctx.w, coords_xy)
        if self.descriptor.input_mode == "xy":
            return norm.astype(self.dtype)
        flat = coords_xy[:, 1] * ctx.w + coords_xy[:, 0]
        return np.concatenate(
            [norm.astype(self.dtype), ctx.y_flat[flat]], axis=1)

    def predict_pixels(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> Tensor:
        coords_xy = self._validate_coords(ctx, coords_xy)
        return self.net(Tensor(self.input_features(ctx, coords_xy)))


class NerfPeModel(RecoveryModel):
    def __init__(self, descriptor: ArchDescriptor, seed: int = 0,
                 dtype=np.float32):
        super().__init__(descriptor, dtype)
        init = _Init(seed, dtype)
        dims = [descriptor.mlp_input_dim()] + \
            [descriptor.mlp_hidden] * descriptor.mlp_layers + [3]
        self.net = ReluMlp(dims, init)

    def named_parameters(self):
        return self.net.named("net")

    def capture_parameters(self):
        return self.parameters()

    def image_context(self, y: np.ndarray) -> ImageContext:
        y = _check_image(y)
        h, w = y.shape[:2]
        return ImageContext(h=h, w=w,
                            y_flat=np.ascontiguousarray(
                                y.reshape(h * w, 3), dtype=self.dtype),
                            latents_flat=None)

    def input_features(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> np.ndarray:
        norm = normalized_coords(ctx.h, ctx.w, coords_xy)
        enc = nerf_positional_encode(
            norm, self.descriptor.pe_frequencies).astype(self.dtype)
        if self.descriptor.input_mode == "xy":
            return enc
        flat = coords_xy[:, 1] * ctx.w + coords_xy[:, 0]
        return np.concatenate([enc, ctx.y_flat[flat]], axis=1)

    def predict_pixels(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> Tensor:
        coords_xy = self._validate_coords(ctx, coords_xy)
        return self.net(Tensor(self.input_features(ctx, coords_xy)))


class HashGridModel(RecoveryModel):
    def __init__(self, descriptor: ArchDescriptor, seed: int = 0,
                 dtype=np.float32):
        super().__init__(descriptor, dtype)
        init = _Init(seed, dtype)
        self.grid = HashGridEncoder(descriptor, init)
        dims = [descriptor.mlp_input_dim()] + \
            [descriptor.mlp_hidden] * descriptor.mlp_layers + [3]
        self.mlp = ReluMlp(dims, init)

    def named_parameters(self):
        return self.grid.named("grid") + self.mlp.named("mlp")

    def capture_parameters(self):
        # capture-time finetuning optimizes only the MLP; tables stay fixed
        return [t for _, t in self.mlp.named("mlp")]

    def image_context(self, y: np.ndarray) -> ImageContext:
        y = _check_image(y)
        h, w = y.shape[:2]
        return ImageContext(h=h, w=w,
                            y_flat=np.ascontiguousarray(
                                y.reshape(h * w, 3), dtype=self.dtype),
                            latents_flat=None)

    def input_features(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> np.ndarray:
        norm = normalized_coords(ctx.h, ctx.w, coords_xy)
        enc = self.grid.encode_np(norm).astype(self.dtype)
        if self.descriptor.input_mode == "xy":
            return enc
        flat = coords_xy[:, 1] * ctx.w + coords_xy[:, 0]
        return np.concatenate([enc, ctx.y_flat[flat]], axis=1)

    def predict_pixels(self, ctx: ImageContext,
                       coords_xy: np.ndarray) -> Tensor:
        coords_xy = self._validate_coords(ctx, coords_xy)
        return self.mlp(Tensor(self.input_features(ctx, coords_xy)))

    def encode_pixels_graph(self, ctx: ImageContext,
                            coords_xy: np.ndarray) -> Tensor:
        coords_xy = self._validate_coords(ctx, coords_xy)
        return self.grid.encode_graph(
            normalized_coords(ctx.h, ctx.w, coords_xy))


_FAMILY_CLASSES = {
    "encoder_mlp": EncoderMlpModel,
    "siren": SirenModel,
    "nerf_pe": NerfPeModel,
    "hashgrid": HashGridModel,
}


def parameter_count(model: RecoveryModel, trainable_only: bool = True) -> int:
    return sum(t.size for _, t in model.named_parameters()
               if t.requires_grad or not trainable_only)


def build_model(arch: ArchDescriptor, seed: int = 0,
                dtype=np.float32) -> RecoveryModel:
    """Construct a model of the requested family.

    Comparison families are size-checked at construction: their serialized
    float32 container must land within +/-15% of the 180 KB budget of the
    default encoder+MLP metadata.
    """
    model = _FAMILY_CLASSES[arch.family](arch, seed=seed, dtype=dtype)
    if arch.family != "encoder_mlp":
        from .container import predicted_container_size
        size = predicted_container_size(
            arch, [t.size for _, t in model.named_parameters()])
        lo = BASELINE_SIZE_TARGET * (1.0 - BASELINE_SIZE_TOL)
        hi = BASELINE_SIZE_TARGET * (1.0 + BASELINE_SIZE_TOL)
        if not lo <= size <= hi:
            raise ConfigError(
                f"{arch.family} configuration serializes to {size} bytes, "
                f"outside the comparison budget [{lo:.0f}, {hi:.0f}]")
    return model
