"""Encoder-decoder completion network with a hand-written backward pass.

Layers compute ``y = x @ W.T + b`` with ``W`` of shape (fan_out, fan_in),
so a row of ``W`` is one output filter.  Hidden layers use ReLU; the last
layer of each stack is linear.

* encoder: shared per-point MLP, then a coordinatewise max over points
* coarse decoder: fully connected stack producing ``n_coarse`` points
* folding decoder: for every coarse point and every offset of a small 2D
  grid, an MLP maps [embedding, coarse point, offset] to a displacement
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .cloud import CloudLike, PointCloud, as_points
from .errors import DimsMismatch, EmptyCloud, InputError, NumericError, StaleCache
from .losses import completion_loss

MAGIC = b"OCWT"
VERSION = 1
KIND_ENCODER, KIND_MODEL, KIND_TRAINING = 0, 1, 2


@dataclass(frozen=True)
class ModelDims:
    point_mlp_widths: tuple[int, ...] = (64, 128, 256)
    embed_dim: int = 128
    coarse_widths: tuple[int, ...] = (256, 256)
    n_coarse: int = 64
    grid_side: int = 4
    fold_mlp_widths: tuple[int, ...] = (64, 64)
    grid_span: float = 0.05

    def __post_init__(self):
        for name in ("point_mlp_widths", "coarse_widths", "fold_mlp_widths"):
            widths = tuple(int(w) for w in getattr(self, name))
            if any(w < 1 for w in widths):
                raise InputError(f"{name} entries must be >= 1")
            object.__setattr__(self, name, widths)
        if self.embed_dim < 1 or self.n_coarse < 1 or self.grid_side < 1:
            raise InputError("embed_dim, n_coarse and grid_side must be >= 1")

    @property
    def n_fine(self) -> int:
        return self.n_coarse * self.grid_side ** 2

    @classmethod
    def full_scale(cls) -> "ModelDims":
        return cls(embed_dim=1024, n_coarse=1024, grid_side=4)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown ModelDims keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        """(prefix, fan_in, fan_out) for every layer in declaration order."""
        out = []
        widths = (3,) + self.point_mlp_widths + (self.embed_dim,)
        for k in range(len(widths) - 1):
            out.append((f"enc.{k}", widths[k], widths[k + 1]))
        widths = (self.embed_dim,) + self.coarse_widths + (3 * self.n_coarse,)
        for k in range(len(widths) - 1):
            out.append((f"coarse.{k}", widths[k], widths[k + 1]))
        widths = (self.embed_dim + 5,) + self.fold_mlp_widths + (3,)
        for k in range(len(widths) - 1):
            out.append((f"fold.{k}", widths[k], widths[k + 1]))
        return out

    def encoder_compatible(self, other: "ModelDims") -> bool:
        return (self.point_mlp_widths == other.point_mlp_widths
                and self.embed_dim == other.embed_dim)


@dataclass
class ModelParams:
    dims: ModelDims
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.tensors.items())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.dims, {k: np.zeros_like(v) for k, v in self.tensors.items()})

    def encoder(self) -> "ModelParams":
        return ModelParams(self.dims, {k: v for k, v in self.tensors.items() if k.startswith("enc.")})

    def n_layers(self, prefix: str) -> int:
        return sum(1 for k in self.tensors if k.startswith(prefix + ".") and k.endswith(".W"))

    def num_values(self) -> int:
        return sum(v.size for v in self.tensors.values())


def _param_names(dims: ModelDims, encoder_only: bool = False) -> list[str]:
    names = []
    for prefix, _, _ in dims.layer_shapes():
        if encoder_only and not prefix.startswith("enc."):
            continue
        names += [prefix + ".W", prefix + ".b"]
    return names


def init_params(dims: ModelDims, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    tensors = {}
    for prefix, fan_in, fan_out in dims.layer_shapes():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[prefix + ".W"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        tensors[prefix + ".b"] = np.zeros(fan_out)
    return ModelParams(dims, tensors)


# --------------------------------------------------------------------------
# forward
# --------------------------------------------------------------------------


@dataclass
class Embedding:
    vector: np.ndarray
    object_id: int | None = None


@dataclass
class ForwardCache:
    """Activations kept for the backward pass and for dissection.

    ``enc_inputs[k]`` is the input of encoder layer k, ``enc_pre[k]`` its
    pre-activation; ``features[k]`` the post-ReLU output of hidden layer k.
    """

    n_points: int
    enc_inputs: list[np.ndarray]
    enc_pre: list[np.ndarray]
    argmax: np.ndarray
    embedding: np.ndarray | None = None
    coarse_inputs: list[np.ndarray] = field(default_factory=list)
    coarse_pre: list[np.ndarray] = field(default_factory=list)
    fold_inputs: list[np.ndarray] = field(default_factory=list)
    fold_pre: list[np.ndarray] = field(default_factory=list)
    coarse: np.ndarray | None = None
    fine: np.ndarray | None = None

    @property
    def features(self) -> list[np.ndarray]:
        """Per-point feature maps of the hidden encoder layers (Feat1, Feat2, ...)."""
        return self.enc_inputs[1:]


def _mlp_forward(x, params, prefix, n_layers, inputs, pres):
    h = x
    for k in range(n_layers):
        W = params[f"{prefix}.{k}.W"]
        b = params[f"{prefix}.{k}.b"]
        inputs.append(h)
        z = h @ W.T + b
        pres.append(z)
        h = np.maximum(z, 0.0) if k < n_layers - 1 else z
    return h


def encoder_forward(cloud: CloudLike, params: ModelParams) -> tuple[Embedding, ForwardCache]:
    pts = as_points(cloud)
    if len(pts) == 0:
        raise EmptyCloud("encoder needs at least one point")
    cache = ForwardCache(len(pts), [], [], np.zeros(0, dtype=np.int64))
    z = _mlp_forward(pts, params, "enc", params.n_layers("enc"), cache.enc_inputs, cache.enc_pre)
    cache.argmax = z.argmax(axis=0)
    emb = z[cache.argmax, np.arange(z.shape[1])]
    cache.embedding = emb
    obj = cloud.label if isinstance(cloud, PointCloud) else None
    return Embedding(emb, obj), cache


def grid_offsets(dims: ModelDims) -> np.ndarray:
    s = np.linspace(-dims.grid_span, dims.grid_span, dims.grid_side)
    gx, gy = np.meshgrid(s, s, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def decode(embedding: Embedding | np.ndarray, params: ModelParams,
           cache: ForwardCache | None = None) -> tuple[PointCloud, PointCloud]:
    """Coarse and fine point clouds from an embedding."""
    dims = params.dims
    emb = embedding.vector if isinstance(embedding, Embedding) else np.asarray(embedding, dtype=np.float64)
    if emb.shape != (dims.embed_dim,):
        raise DimsMismatch(f"embedding has shape {emb.shape}, expected ({dims.embed_dim},)")
    cin = [] if cache is None else cache.coarse_inputs
    cpre = [] if cache is None else cache.coarse_pre
    coarse = _mlp_forward(emb[None, :], params, "coarse", params.n_layers("coarse"), cin, cpre)
    coarse = coarse.reshape(dims.n_coarse, 3)

    g = grid_offsets(dims)
    s2 = len(g)
    feats = np.concatenate([
        np.broadcast_to(emb, (dims.n_fine, dims.embed_dim)),
        np.repeat(coarse, s2, axis=0),
        np.tile(g, (dims.n_coarse, 1)),
    ], axis=1)
    fin = [] if cache is None else cache.fold_inputs
    fpre = [] if cache is None else cache.fold_pre
    disp = _mlp_forward(feats, params, "fold", params.n_layers("fold"), fin, fpre)
    fine = np.repeat(coarse, s2, axis=0) + disp
    if not (np.isfinite(coarse).all() and np.isfinite(fine).all()):
        raise NumericError("decoder produced non-finite points")
    if cache is not None:
        cache.coarse = coarse
        cache.fine = fine
    return PointCloud(coarse), PointCloud(fine)


def forward(cloud: CloudLike, params: ModelParams) -> tuple[PointCloud, PointCloud, ForwardCache]:
    emb, cache = encoder_forward(cloud, params)
    coarse, fine = decode(emb, params, cache)
    return coarse, fine, cache


# --------------------------------------------------------------------------
# backward
# --------------------------------------------------------------------------


def _mlp_backward(dout, params, prefix, inputs, pres, grads):
    n_layers = len(inputs)
    d = dout
    for k in range(n_layers - 1, -1, -1):
        if k < n_layers - 1:
            d = d * (pres[k] > 0)
        grads[f"{prefix}.{k}.W"] += d.T @ inputs[k]
        grads[f"{prefix}.{k}.b"] += d.sum(axis=0)
        d = d @ params[f"{prefix}.{k}.W"]
    return d


def backward_from_outputs(d_coarse: np.ndarray, d_fine: np.ndarray,
                          params: ModelParams, cache: ForwardCache) -> ModelParams:
    """Parameter gradients given loss gradients w.r.t. the two outputs."""
    dims = params.dims
    if (cache.coarse is None or cache.coarse.shape != (dims.n_coarse, 3)
            or cache.fine is None or cache.fine.shape != (dims.n_fine, 3)
            or d_coarse.shape != cache.coarse.shape or d_fine.shape != cache.fine.shape
            or len(cache.fold_inputs) != params.n_layers("fold")
            or cache.enc_inputs[0].shape[1] != 3):
        raise StaleCache("forward cache does not match these parameters")
    grads = params.zeros_like()
    E = dims.embed_dim
    s2 = dims.grid_side ** 2

    d_feats = _mlp_backward(d_fine, params, "fold", cache.fold_inputs, cache.fold_pre, grads.tensors)
    d_emb = d_feats[:, :E].sum(axis=0)
    dc = d_coarse + d_fine.reshape(dims.n_coarse, s2, 3).sum(axis=1)
    dc = dc + d_feats[:, E:E + 3].reshape(dims.n_coarse, s2, 3).sum(axis=1)

    d_emb = d_emb + _mlp_backward(dc.reshape(1, -1), params, "coarse", cache.coarse_inputs,
                                  cache.coarse_pre, grads.tensors)[0]

    dz = np.zeros((cache.n_points, E))
    dz[cache.argmax, np.arange(E)] = d_emb
    _mlp_backward(dz, params, "enc", cache.enc_inputs, cache.enc_pre, grads.tensors)
    return grads


@dataclass
class CompletionSample:
    partial: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    object_id: int = 0
    view_id: int = 0


def backward(sample: CompletionSample, params: ModelParams, cache: ForwardCache, step: int,
             alpha: float | None = None):
    """Completion loss and its exact gradient for every parameter.

    Returns ``(loss, grads, loss_detail)``.
    """
    if cache.coarse is None or cache.n_points != len(sample.partial):
        raise StaleCache("cache was not produced from this sample")
    lv = completion_loss(cache.coarse, cache.fine, sample.coarse, sample.fine, step, alpha=alpha)
    grads = backward_from_outputs(lv.grad_coarse, lv.grad_fine, params, cache)
    return lv.value, grads, lv


def sample_loss(sample: CompletionSample, params: ModelParams, step: int,
                alpha: float | None = None) -> float:
    _, _, cache = forward(sample.partial, params)
    return completion_loss(cache.coarse, cache.fine, sample.coarse, sample.fine, step,
                           alpha=alpha).value


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def _write_tensors(buf: io.BytesIO, tensors: list[tuple[str, np.ndarray]]):
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise DimsMismatch("checkpoint is truncated")
    return data


def _read_tensors(buf: io.BytesIO) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, ln).decode()
        (ndim,) = struct.unpack("<B", _read_exact(buf, 1))
        shape = struct.unpack(f"<{ndim}I", _read_exact(buf, 4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(_read_exact(buf, 8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    return out


def dump_checkpoint(params: ModelParams, kind: int = KIND_MODEL,
                    adam: tuple[int, ModelParams, ModelParams] | None = None,
                    meta: dict | None = None) -> bytes:
    """Serialize weights (and optionally Adam state and metadata) as OCWT bytes."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HB", VERSION, kind))
    dims_raw = json.dumps(params.dims.to_dict(), sort_keys=True).encode()
    buf.write(struct.pack("<I", len(dims_raw)))
    buf.write(dims_raw)
    names = _param_names(params.dims, encoder_only=(kind == KIND_ENCODER))
    _write_tensors(buf, [(n, params.tensors[n]) for n in names])
    if kind == KIND_TRAINING:
        if adam is None:
            raise ValueError("training checkpoints need Adam state")
        step, m, v = adam
        buf.write(struct.pack("<Q", step))
        _write_tensors(buf, [(n, m.tensors[n]) for n in names])
        _write_tensors(buf, [(n, v.tensors[n]) for n in names])
        meta_raw = json.dumps(meta or {}, sort_keys=True).encode()
        buf.write(struct.pack("<I", len(meta_raw)))
        buf.write(meta_raw)
    return buf.getvalue()


@dataclass
class Checkpoint:
    kind: int
    params: ModelParams
    adam_step: int = 0
    adam_m: ModelParams | None = None
    adam_v: ModelParams | None = None
    meta: dict = field(default_factory=dict)


def parse_checkpoint(data: bytes) -> Checkpoint:
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise DimsMismatch("not an OCWT checkpoint (bad magic)")
    version, kind = struct.unpack("<HB", _read_exact(buf, 3))
    if version != VERSION:
        raise DimsMismatch(f"unsupported checkpoint version {version}")
    (ln,) = struct.unpack("<I", _read_exact(buf, 4))
    try:
        dims = ModelDims.from_dict(json.loads(_read_exact(buf, ln)))
    except (ValueError, TypeError, InputError) as exc:
        raise DimsMismatch(f"unreadable dims block: {exc}") from exc
    tensors = _read_tensors(buf)
    expected = _param_names(dims, encoder_only=(kind == KIND_ENCODER))
    shapes = {p + ".W": (o, i) for p, i, o in dims.layer_shapes()}
    shapes.update({p + ".b": (o,) for p, i, o in dims.layer_shapes()})
    if list(tensors) != expected or any(tensors[n].shape != shapes[n] for n in expected):
        raise DimsMismatch("tensor layout does not match the dims block")
    ck = Checkpoint(kind, ModelParams(dims, tensors))
    if kind == KIND_TRAINING:
        (ck.adam_step,) = struct.unpack("<Q", _read_exact(buf, 8))
        ck.adam_m = ModelParams(dims, _read_tensors(buf))
        ck.adam_v = ModelParams(dims, _read_tensors(buf))
        (ln,) = struct.unpack("<I", _read_exact(buf, 4))
        ck.meta = json.loads(_read_exact(buf, ln))
    return ck


def read_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        raise DimsMismatch(f"checkpoint not found: {path}") from exc
    return parse_checkpoint(data)


def save_encoder(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_checkpoint(params, KIND_ENCODER))


def load_encoder(path, expected: ModelDims | None = None) -> ModelParams:
    """Encoder weights from any OCWT file; checks them against ``expected``."""
    ck = read_checkpoint(path)
    enc = ck.params.encoder()
    if expected is not None and not expected.encoder_compatible(ck.params.dims):
        raise DimsMismatch(
            f"checkpoint encoder {ck.params.dims.point_mlp_widths}->{ck.params.dims.embed_dim} "
            f"does not fit {expected.point_mlp_widths}->{expected.embed_dim}")
    return enc


def with_encoder(params: ModelParams, encoder: ModelParams) -> ModelParams:
    """Copy of ``params`` whose encoder tensors come from ``encoder``."""
    if not params.dims.encoder_compatible(encoder.dims):
        raise DimsMismatch("encoder dims do not match the model")
    out = params.copy()
    for name, arr in encoder.tensors.items():
        out.tensors[name] = arr.copy()
    return out
