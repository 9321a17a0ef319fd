"""Small image classifiers, cross-entropy and SGD with momentum."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, FormatError

ARCHS = ("mlp", "cnn-small")
POOLS = ("avg", "max")


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "cnn-small"
    channels: int = 1
    n: int = 16
    classes: int = 4
    widths: tuple[int, ...] = (8, 16, 16)
    seed: int = 0
    pool: str = "avg"
    dtype: str = "float64"
    input_shift: float = 0.5  # subtracted from pixels; a constant shift leaves input-gradients unchanged

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        if self.pool not in POOLS:
            raise ConfigError(f"unknown pool {self.pool!r}; expected one of {POOLS}")
        if self.classes < 2:
            raise ConfigError("need at least two classes")
        if self.channels < 1 or self.n < 1 or not self.widths:
            raise ConfigError("channels, n and widths must be positive/non-empty")
        if self.arch == "cnn-small":
            if len(self.widths) != 3:
                raise ConfigError("cnn-small takes exactly three conv widths")
            if self.n % 8:
                raise DimensionError(f"cnn-small pools three times; n={self.n} is not divisible by 8")


def _kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _bias(rng, size, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=size).astype(dtype)


class Model:
    """Parameter leaves plus a forward recipe mapping (B, C, N, N) to logits."""

    def __init__(self, cfg: ModelConfig, arrays: list[np.ndarray] | None = None):
        self.cfg = cfg
        shapes = param_shapes(cfg)
        if arrays is None:
            arrays = _init_params(cfg, shapes)
        if [tuple(a.shape) for a in arrays] != [s for _, s in shapes]:
            raise DimensionError("parameter arrays do not match the architecture")
        self.names = [name for name, _ in shapes]
        self.params = [ad.parameter(np.array(a, dtype=cfg.dtype), name=name) for (name, _), a in zip(shapes, arrays)]

    # -- forward ---------------------------------------------------------
    def __call__(self, x) -> Tensor:
        return self.forward(x)

    def forward(self, x) -> Tensor:
        x = ad.as_tensor(x)
        c, n = self.cfg.channels, self.cfg.n
        if x.ndim != 4 or x.shape[1:] != (c, n, n):
            raise DimensionError(f"expected input (batch, {c}, {n}, {n}), got {x.shape}")
        if self.cfg.input_shift:
            x = x - self.cfg.input_shift
        p = iter(self.params)
        if self.cfg.arch == "mlp":
            h = x.reshape(x.shape[0], -1)
            layers = len(self.cfg.widths) + 1
            for i in range(layers):
                w, b = next(p), next(p)
                h = h @ w + b
                if i < layers - 1:
                    h = h.relu()
            return h
        pool = ad.avgpool2d if self.cfg.pool == "avg" else ad.maxpool2d
        h = x
        for _ in range(3):
            w, b = next(p), next(p)
            h = ad.conv2d(h, w, stride=1, padding=1) + b
            h = pool(h.relu(), 2)
        h = h.reshape(h.shape[0], -1)
        w, b = next(p), next(p)
        return h @ w + b

    # -- utilities -------------------------------------------------------
    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = []
        with ad.no_grad():
            for i in range(0, len(images), batch_size):
                logits = self.forward(Tensor(np.asarray(images[i : i + batch_size], dtype=self.cfg.dtype)))
                out.append(np.argmax(logits.data, axis=1))
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(out)

    def accuracy(self, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
        if len(labels) == 0:
            return float("nan")
        return float(np.mean(self.predict(images, batch_size) == np.asarray(labels)))

    def arrays(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def clone(self) -> "Model":
        return Model(self.cfg, self.arrays())

    @property
    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.params:
            h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    if cfg.arch == "mlp":
        dims = [cfg.channels * cfg.n * cfg.n, *cfg.widths, cfg.classes]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            shapes += [(f"fc{i}.w", (a, b)), (f"fc{i}.b", (b,))]
        return shapes
    cin = cfg.channels
    for i, cout in enumerate(cfg.widths):
        shapes += [(f"conv{i}.w", (cout, cin, 3, 3)), (f"conv{i}.b", (1, cout, 1, 1))]
        cin = cout
    side = cfg.n // 8
    shapes += [("head.w", (cin * side * side, cfg.classes)), ("head.b", (cfg.classes,))]
    return shapes


def _init_params(cfg: ModelConfig, shapes) -> list[np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    arrays = []
    fan_in = None
    for name, shape in shapes:
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            arrays.append(_kaiming_uniform(rng, shape, fan_in, cfg.dtype))
        else:
            arrays.append(_bias(rng, shape, fan_in, cfg.dtype))
    return arrays


def build_model(cfg: ModelConfig) -> Model:
    return Model(cfg)


def ce_loss(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax at the true class."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"labels must lie in [0, {logits.shape[1]})")
    return ad.softmax_cross_entropy(logits, labels)


@dataclass
class OptimState:
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity: list[np.ndarray] = field(default_factory=list)


def sgd_step(params: list[Tensor], grads: list[np.ndarray], state: OptimState) -> None:
    """v <- mu*v + (g + wd*p); p <- p - lr*v, in place."""
    if not state.velocity:
        state.velocity = [np.zeros_like(p.data) for p in params]
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g)
        if g.shape != p.shape:
            raise DimensionError(f"gradient {g.shape} does not match parameter {p.shape}")
        v = state.momentum * state.velocity[i] + (g + state.weight_decay * p.data)
        state.velocity[i] = v
        p.data = (p.data - state.lr * v).astype(p.data.dtype, copy=False)


# -- checkpoints -------------------------------------------------------------

MAGIC = b"FLNS"
VERSION = 1
_HEADER = struct.Struct("<4sHBBHHHHf")  # magic, version, arch, pool, channels, n, classes, n_params, input shift


def save_checkpoint(model: Model, path) -> None:
    """Header + shape table + little-endian f32 payload in declaration order."""
    cfg = model.cfg
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, ARCHS.index(cfg.arch), POOLS.index(cfg.pool),
            cfg.channels, cfg.n, cfg.classes, len(model.params), cfg.input_shift,
        )
    ]
    for p in model.params:
        parts.append(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
    for p in model.params:
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, dtype: str = "float64") -> Model:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError("checkpoint shorter than its header")
    magic, version, arch, pool, channels, n, classes, count, shift = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if arch >= len(ARCHS) or pool >= len(POOLS):
        raise FormatError(f"unknown arch/pool codes ({arch}, {pool})")
    off = _HEADER.size
    shapes = []
    try:
        for _ in range(count):
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shapes.append(struct.unpack_from(f"<{ndim}I", blob, off))
            off += 4 * ndim
    except struct.error as exc:
        raise FormatError(f"shape table truncated at byte {off}") from exc
    arrays = []
    for shape in shapes:
        size = int(np.prod(shape))
        if off + 4 * size > len(blob):
            raise FormatError(f"payload truncated at byte {off}")
        arrays.append(np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(shape).astype(dtype))
        off += 4 * size
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes after payload")
    if ARCHS[arch] == "mlp":
        widths = tuple(s[1] for s in shapes[0:-2:2])
    else:
        widths = tuple(s[0] for s in shapes[0:6:2])
    try:
        cfg = ModelConfig(
            arch=ARCHS[arch], channels=channels, n=n, classes=classes,
            widths=widths, pool=POOLS[pool], dtype=dtype, input_shift=float(shift),
        )
        return Model(cfg, arrays)
    except (ConfigError, DimensionError) as exc:
        raise FormatError(f"checkpoint header disagrees with its shape table: {exc}") from exc
