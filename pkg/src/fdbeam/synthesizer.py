"""Beam-synthesis network, end-to-end training, and checkpoints.

The network maps probing measurements and DL/UL channel knowledge to a
serving beam pair. Complex vectors enter and leave the network interleaved
as (re_0, im_0, re_1, im_1, ...).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from fdbeam import autodiff as ad
from fdbeam.autodiff import Adam, LrSchedule, Tensor
from fdbeam.channel import ChannelBatch, Scenario, db_to_linear, draw_batch
from fdbeam.metrics import BeamPair, LinkBudget
from fdbeam.probing import NOISELESS, ProbingCodebooks, init_codebooks, project_unit_disk

log = logging.getLogger(__name__)

HIDDEN_MULTIPLIERS = (16, 16, 8, 8)

CHECKPOINT_MAGIC = b"FDCK"
CHECKPOINT_VERSION = 1

# stream tags keep init / noise draws apart from channel draws
_INIT_TAG = 0x1A17
_NOISE_TAG = 0x7015E


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoint files."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class DataExhaustedError(RuntimeError):
    """Raised when a finite dataset cannot supply a full batch."""


class SynthesizerNet:
    """Fully connected relu network with a linear output layer.

    Args:
        layers: (weight, bias) tensor pairs; weight is (fan_in, fan_out).
        nt, nr, m: Transmit antennas, receive antennas, probing measurements.
    """

    def __init__(self, layers: list[tuple[Tensor, Tensor]], nt: int, nr: int, m: int):
        self.layers = layers
        self.nt, self.nr, self.m = nt, nr, m
        dims = [self.in_dim] + [w.shape[1] for w, _ in layers]
        for (w, b), fan_in, fan_out in zip(layers, dims[:-1], dims[1:]):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError(f"inconsistent layer shapes {w.shape}, {b.shape}")
        if dims[-1] != self.out_dim:
            raise ValueError(f"output width {dims[-1]} != {self.out_dim}")

    @property
    def in_dim(self) -> int:
        return 2 * (self.m + self.nt + self.nr)

    @property
    def out_dim(self) -> int:
        return 2 * (self.nt + self.nr)

    @classmethod
    def create(cls, nt: int, nr: int, m: int, rng: np.random.Generator, multipliers=HIDDEN_MULTIPLIERS):
        """Glorot-uniform weights, zero biases; hidden widths are ``multipliers * (nt + nr)``."""
        widths = [2 * (m + nt + nr)] + [k * (nt + nr) for k in multipliers] + [2 * (nt + nr)]
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True, name=f"layer{k}.weight")
            b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"layer{k}.bias")
            layers.append((w, b))
        return cls(layers, nt, nr, m)

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            x = ad.matmul(x, w) + b
            if k < last:
                x = ad.relu(x)
        return x

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward pass on a plain array."""
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            x = x @ w.data + b.data
            if k < last:
                x = np.maximum(x, 0.0)
        return x


@dataclass
class TrainConfig:
    batch_size: int = 4096
    lr_net: float = 0.001
    lr_cb_base: float = 0.0015
    lr_cb_min: float = 0.0005
    lr_cb_period: int = 5000
    max_batches: int = 100_000
    conv_window: int = 500
    conv_tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_net < 0 or self.lr_cb_base < 0 or self.lr_cb_min < 0:
            raise ValueError("learning rates must be >= 0")
        if self.conv_window < 1:
            raise ValueError("conv_window must be >= 1")

    def cb_schedule(self) -> LrSchedule:
        if self.lr_cb_base == self.lr_cb_min:
            return LrSchedule(self.lr_cb_base)
        return LrSchedule(self.lr_cb_base, self.lr_cb_min, self.lr_cb_period, "cosine")


# ---------------------------------------------------------------------------
# forward model


def _pair(z) -> np.ndarray:
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


def measurement_scale(budget: LinkBudget) -> float:
    """Factor bringing raw measurements to order one before the network."""
    return 1.0 / np.sqrt(budget.p_dl * db_to_linear(budget.target_max_inr))


def features(z, y_dl, y_ul, budget: LinkBudget) -> np.ndarray:
    """Network input for complex arrays z (..., M), y_dl (..., Nt), y_ul (..., Nr)."""
    parts = [_pair(z) * measurement_scale(budget), _pair(y_dl), _pair(y_ul)]
    return np.concatenate([p.reshape(p.shape[:-2] + (-1,)) for p in parts], axis=-1)


def _split_output(out: np.ndarray, nt: int):
    pairs = out.reshape(out.shape[:-1] + (-1, 2))
    beams = project_unit_disk(pairs[..., 0], pairs[..., 1])
    return beams[..., :nt], beams[..., nt:]


def synthesize_batch(net: SynthesizerNet, z, y_dl, y_ul, budget: LinkBudget):
    """Serving beams (f, w) for stacked inputs; both satisfy |entry| <= 1."""
    x = features(z, y_dl, y_ul, budget)
    if x.shape[-1] != net.in_dim:
        raise ValueError(f"input width {x.shape[-1]} does not match network ({net.in_dim})")
    return _split_output(net.predict(x), net.nt)


def synthesize(net: SynthesizerNet, z, y_dl, y_ul, budget: LinkBudget) -> BeamPair:
    f, w = synthesize_batch(net, np.asarray(z)[None], np.asarray(y_dl)[None], np.asarray(y_ul)[None], budget)
    return BeamPair(f[0], w[0])


@dataclass
class CodebookTensors:
    """Leaf tensors viewing the raw codebook arrays (updates write through)."""

    f_re: Tensor
    f_im: Tensor
    w_re: Tensor
    w_im: Tensor

    @classmethod
    def wrap(cls, cb: ProbingCodebooks) -> "CodebookTensors":
        t = cls(*(Tensor(a, requires_grad=True) for a in (cb.f_re, cb.f_im, cb.w_re, cb.w_im)))
        for name, tensor in zip(("F_re", "F_im", "W_re", "W_im"), t.parameters()):
            tensor.name = name
            if tensor.data is not getattr(cb, name.lower()):
                raise RuntimeError("codebook arrays must be float64 to be shared")
        return t

    def parameters(self) -> list[Tensor]:
        return [self.f_re, self.f_im, self.w_re, self.w_im]


def _columns_as_pairs(re: Tensor, im: Tensor) -> Tensor:
    """(N, M) real/imag parts -> (M, N, 2) complex pair of column vectors."""
    n, m = re.shape
    stacked = ad.concat([ad.reshape(re, (n, m, 1)), ad.reshape(im, (n, m, 1))], axis=-1)
    return ad.transpose(stacked, (1, 0, 2))


def measure_graph(H: np.ndarray, cb: CodebookTensors, budget: LinkBudget, rng) -> Tensor:
    """Differentiable counterpart of :func:`fdbeam.probing.measure`; (B, M, 2)."""
    F = _columns_as_pairs(cb.f_re, cb.f_im)
    W = _columns_as_pairs(cb.w_re, cb.w_im)
    nt = H.shape[-1]
    Hp = Tensor(_pair(H)[:, None])
    z = ad.cbilinear(W, Hp, F) * np.sqrt(budget.p_dl / nt)
    if rng is not NOISELESS:
        m, nr = W.shape[0], W.shape[1]
        shape = (H.shape[0], m, nr, 2)
        noise = Tensor(np.sqrt(budget.noise_ul / 2) * rng.standard_normal(shape))
        z = z + ad.cinner(W, noise)
    return z


def sse_graph(f: Tensor, w: Tensor, batch: ChannelBatch, budget: LinkBudget):
    """Differentiable (R_dl, R_ul) per sample for beam pairs f (B, Nt, 2), w (B, Nr, 2)."""
    nt = batch.nt
    snr_dl = ad.cabs2(ad.cinner(Tensor(_pair(batch.h_dl)), f)) * (budget.p_dl / (nt * budget.noise_dl))
    inr_dl = budget.p_ul * np.abs(batch.crosslink) ** 2 / budget.noise_dl
    w_norm = ad.sum_(ad.cabs2(w), axis=-1)
    signal_ul = ad.cabs2(ad.cinner(w, Tensor(_pair(batch.h_ul)))) * (budget.p_ul / budget.noise_ul)
    snr_ul = signal_ul / w_norm
    coupled = ad.cabs2(ad.cbilinear(w, Tensor(_pair(batch.H)), f))
    inr_ul = coupled * (budget.p_dl / (nt * budget.noise_ul)) / w_norm
    r_dl = ad.log2_1p(snr_dl / (1.0 + inr_dl))
    r_ul = ad.log2_1p(snr_ul / (inr_ul + 1.0))
    return r_dl, r_ul


def loss_graph(net: SynthesizerNet, cb: CodebookTensors, batch: ChannelBatch, budget: LinkBudget, rng) -> Tensor:
    """Negative mean sum spectral efficiency over ``batch``, as a graph."""
    b = len(batch)
    z = measure_graph(batch.H, cb, budget, rng)
    x = ad.concat(
        [
            ad.reshape(z * measurement_scale(budget), (b, -1)),
            Tensor(_pair(batch.y_dl).reshape(b, -1)),
            Tensor(_pair(batch.y_ul).reshape(b, -1)),
        ],
        axis=-1,
    )
    out = ad.reshape(net.forward(x), (b, net.nt + net.nr, 2))
    f = ad.project_disk(out[:, : net.nt])
    w = ad.project_disk(out[:, net.nt :])
    r_dl, r_ul = sse_graph(f, w, batch, budget)
    return -ad.mean(r_dl + r_ul)


def loss(net: SynthesizerNet, codebooks: ProbingCodebooks, batch: ChannelBatch, budget: LinkBudget, rng):
    """Training loss and its gradients.

    Returns ``(value, grads)`` where ``grads`` maps checkpoint tensor names
    ("F_re", ..., "layer{k}.weight", "layer{k}.bias") to arrays.
    """
    cb = CodebookTensors.wrap(codebooks)
    value = loss_graph(net, cb, batch, budget, rng)
    ad.backward(value)
    params = cb.parameters() + net.parameters()
    return value.item(), {p.name: np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params}


# ---------------------------------------------------------------------------
# training


class DataSource(Protocol):
    nt: int
    nr: int

    def batch(self, t: int) -> ChannelBatch: ...


@dataclass
class StreamSource:
    """Fresh calibrated channels for every batch, keyed by (seed, sample index)."""

    scenario: Scenario
    seed: int
    batch_size: int

    @property
    def nt(self) -> int:
        return self.scenario.nt

    @property
    def nr(self) -> int:
        return self.scenario.nr

    def batch(self, t: int) -> ChannelBatch:
        return draw_batch(self.scenario, self.seed, t * self.batch_size, self.batch_size)


@dataclass
class DatasetSource:
    """Consecutive batches from a finite dataset, wrapping around at the end."""

    data: ChannelBatch
    batch_size: int

    def __post_init__(self):
        if len(self.data) < self.batch_size:
            raise DataExhaustedError(
                f"dataset holds {len(self.data)} realizations, fewer than one batch of {self.batch_size}"
            )

    @property
    def nt(self) -> int:
        return self.data.nt

    @property
    def nr(self) -> int:
        return self.data.nr

    def batch(self, t: int) -> ChannelBatch:
        per_epoch = len(self.data) // self.batch_size
        start = (t % per_epoch) * self.batch_size
        return self.data[start : start + self.batch_size]


@dataclass
class TrainResult:
    net: SynthesizerNet
    codebooks: ProbingCodebooks
    history: list[float] = field(default_factory=list)
    converged: bool = False


def train(
    cfg: TrainConfig,
    source: DataSource,
    budget: LinkBudget,
    m: int,
    callback: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Jointly train probing codebooks and the synthesizer.

    Each batch: forward with fresh measurement noise, backward, Adam on the
    network (constant lr) and on the raw codebook weights (cosine lr), then
    re-project the codebooks onto the unit disk. Stops after
    ``cfg.max_batches`` or when the mean loss over the last
    ``cfg.conv_window`` batches improves on the window before it by less
    than ``cfg.conv_tol``.

    Raises:
        TrainingDivergedError: if the loss turns NaN or infinite.
    """
    init_rng = np.random.default_rng([cfg.seed, _INIT_TAG])
    codebooks = init_codebooks(source.nt, source.nr, m, init_rng)
    net = SynthesizerNet.create(source.nt, source.nr, m, init_rng)
    cb = CodebookTensors.wrap(codebooks)
    opt_net = Adam(net.parameters(), LrSchedule(cfg.lr_net))
    opt_cb = Adam(cb.parameters(), cfg.cb_schedule())

    result = TrainResult(net, codebooks)
    history = result.history
    win = cfg.conv_window
    for t in range(cfg.max_batches):
        batch = source.batch(t)
        noise_rng = np.random.default_rng([cfg.seed, t, _NOISE_TAG])
        value = loss_graph(net, cb, batch, budget, noise_rng)
        current = value.item()
        if not np.isfinite(current):
            raise TrainingDivergedError(f"loss became {current} at batch {t}")
        ad.backward(value)
        opt_net.step()
        opt_cb.step()
        codebooks.project_()
        history.append(current)
        if callback is not None:
            callback(t, current)
        if len(history) >= 2 * win:
            previous = np.mean(history[-2 * win : -win])
            recent = np.mean(history[-win:])
            if previous - recent < cfg.conv_tol:
                log.info("converged after %d batches (loss %.4f)", t + 1, recent)
                result.converged = True
                break
    return result


# ---------------------------------------------------------------------------
# checkpoints

_U32 = struct.Struct("<I")


def save_checkpoint(path, net: SynthesizerNet, codebooks: ProbingCodebooks) -> None:
    """Write all trainable tensors in the FDCK little-endian format."""
    tensors = [("F_re", codebooks.f_re), ("F_im", codebooks.f_im), ("W_re", codebooks.w_re), ("W_im", codebooks.w_im)]
    for k, (w, b) in enumerate(net.layers):
        tensors += [(f"layer{k}.weight", w.data), (f"layer{k}.bias", b.data)]
    chunks = [CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), _U32.pack(len(tensors))]
    for name, arr in tensors:
        encoded = name.encode("utf-8")
        chunks += [_U32.pack(len(encoded)), encoded, _U32.pack(arr.ndim)]
        chunks += [_U32.pack(d) for d in arr.shape]
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def _read_tensors(raw: bytes, path) -> dict[str, np.ndarray]:
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {raw[:4]!r})")
    pos = 4

    def u32():
        nonlocal pos
        if pos + 4 > len(raw):
            raise CheckpointError(f"{path}: truncated file")
        (v,) = _U32.unpack_from(raw, pos)
        pos += 4
        return v

    version = u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    tensors = {}
    for _ in range(u32()):
        n = u32()
        name = raw[pos : pos + n].decode("utf-8")
        pos += n
        dims = tuple(u32() for _ in range(u32()))
        size = 8 * int(np.prod(dims))
        if pos + size > len(raw):
            raise CheckpointError(f"{path}: truncated file")
        tensors[name] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=pos).reshape(dims).astype(np.float64)
        pos += size
    if pos != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return tensors


def load_checkpoint(path) -> tuple[SynthesizerNet, ProbingCodebooks]:
    """Inverse of :func:`save_checkpoint`; array sizes come from tensor shapes."""
    tensors = _read_tensors(Path(path).read_bytes(), path)
    try:
        codebooks = ProbingCodebooks(tensors["F_re"], tensors["F_im"], tensors["W_re"], tensors["W_im"])
        layers = []
        k = 0
        while f"layer{k}.weight" in tensors:
            w = Tensor(tensors[f"layer{k}.weight"], requires_grad=True, name=f"layer{k}.weight")
            b = Tensor(tensors[f"layer{k}.bias"], requires_grad=True, name=f"layer{k}.bias")
            layers.append((w, b))
            k += 1
        net = SynthesizerNet(layers, codebooks.nt, codebooks.nr, codebooks.m)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint contents ({exc})") from exc
    return net, codebooks
