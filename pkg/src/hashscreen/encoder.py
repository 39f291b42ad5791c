"""Feed-forward encoders mapping feature vectors to real-valued embeddings.

One encoder per modality (protein pocket features, molecule features), no
weight sharing. The default shape is input -> hidden -> code_length with a
tanh hidden layer and a linear output head; embeddings are NOT normalized
here, the contrastive loss normalizes and the quantization loss wants raw
coordinates.

Everything runs in float64 with hand-written forward/backward passes, so
gradients are exact (finite-difference checked) and runs are bit-for-bit
reproducible from a seed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptCheckpointError, InvalidInputError, ShapeError

# layer = (weight (out, in), bias (out,)); params = list of layers
Layer = tuple[np.ndarray, np.ndarray]

_ACTIVATION_TAGS = {"tanh": 1}
_TAG_ACTIVATIONS = {v: k for k, v in _ACTIVATION_TAGS.items()}


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dim: int
    code_length: int
    activation: str = "tanh"

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "code_length"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.activation not in _ACTIVATION_TAGS:
            raise InvalidInputError(
                f"unknown activation {self.activation!r}; supported: "
                f"{sorted(_ACTIVATION_TAGS)}"
            )

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, self.hidden_dim, self.code_length)


def init_params(config: EncoderConfig, seed) -> list[Layer]:
    """Fresh parameters, weights uniform in [-s, s] with
    s = sqrt(6 / (fan_in + fan_out)), biases zero. Pure function of
    (config, seed)."""
    rng = np.random.default_rng(seed)
    sizes = config.layer_sizes
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = math.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-s, s, size=(fan_out, fan_in))
        params.append((weight, np.zeros(fan_out)))
    return params


def _check_input(params: list[Layer], x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    fan_in = params[0][0].shape[1]
    if x.shape[0] != fan_in:
        raise ShapeError(f"feature vector has {x.shape[0]} dims, encoder wants {fan_in}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("feature vector contains non-finite entries")
    return x


def _forward(params: list[Layer], x: np.ndarray):
    """Returns (output, per-layer inputs a, per-layer activated flags)."""
    inputs = []
    a = x
    last = len(params) - 1
    for i, (weight, bias) in enumerate(params):
        inputs.append(a)
        z = weight @ a + bias
        a = z if i == last else np.tanh(z)
    return a, inputs


def encode(params: list[Layer], x) -> np.ndarray:
    """Embed one feature vector; deterministic, finite in -> finite out."""
    y, _ = _forward(params, _check_input(params, x))
    return y


def encode_batch(params: list[Layer], xs) -> np.ndarray:
    """Embed many feature vectors, one row per input.

    Runs item by item in input order, so the result is exactly
    ``[encode(params, x) for x in xs]`` no matter how callers batch.
    """
    rows = [np.asarray(x, dtype=np.float64).ravel() for x in xs]
    out = np.empty((len(rows), params[-1][0].shape[0]), dtype=np.float64)
    for i, x in enumerate(rows):
        try:
            out[i] = encode(params, x)
        except InvalidInputError as exc:
            raise type(exc)(f"item {i}: {exc}") from exc
    return out


def backward(params: list[Layer], x, upstream) -> tuple[list[Layer], np.ndarray]:
    """Gradient of dot(encode(params, x), upstream) w.r.t. params and x.

    Returns (per-layer (dW, db) in layer order, dx).
    """
    x = _check_input(params, x)
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if upstream.shape[0] != params[-1][0].shape[0]:
        raise ShapeError(
            f"upstream gradient has {upstream.shape[0]} dims, "
            f"encoder emits {params[-1][0].shape[0]}"
        )
    # forward pass keeping activated outputs; tanh' = 1 - tanh^2 so the
    # activated value is all the backward pass needs
    last = len(params) - 1
    inputs, activated = [], []
    a = x
    for i, (weight, bias) in enumerate(params):
        inputs.append(a)
        z = weight @ a + bias
        a = z if i == last else np.tanh(z)
        activated.append(a)

    grads: list[Layer] = [None] * len(params)  # type: ignore[list-item]
    delta = upstream
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * (1.0 - activated[i] * activated[i])
        grads[i] = (np.outer(delta, inputs[i]), delta.copy())
        delta = params[i][0].T @ delta
    return grads, delta


def zeros_like_params(params: list[Layer]) -> list[Layer]:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]


@dataclass
class Model:
    """Both modality encoders plus their shapes; the unit checkpoints store."""

    protein_config: EncoderConfig
    molecule_config: EncoderConfig
    protein: list[Layer] = field(repr=False)
    molecule: list[Layer] = field(repr=False)

    def __post_init__(self):
        if self.protein_config.code_length != self.molecule_config.code_length:
            raise ShapeError(
                "both encoders must emit the same code length, got "
                f"{self.protein_config.code_length} and "
                f"{self.molecule_config.code_length}"
            )

    @property
    def code_length(self) -> int:
        return self.protein_config.code_length

    def side(self, modality: str) -> tuple[EncoderConfig, list[Layer]]:
        if modality == "protein":
            return self.protein_config, self.protein
        if modality == "molecule":
            return self.molecule_config, self.molecule
        raise InvalidInputError(f"modality must be protein or molecule, got {modality!r}")


def init_model(protein_config: EncoderConfig, molecule_config: EncoderConfig, seed: int) -> Model:
    p_seed, m_seed = np.random.SeedSequence(seed).spawn(2)
    return Model(
        protein_config,
        molecule_config,
        init_params(protein_config, p_seed),
        init_params(molecule_config, m_seed),
    )


# Checkpoint container: fixed little-endian layout, documented in
# docs/formats.md.
#   magic "HSCK", version u16, activation u16, p_layers u16, m_layers u16,
#   (p_layers+1) u32 sizes, (m_layers+1) u32 sizes,
#   then float64 arrays: protein layer 0 W row-major, b, layer 1 W, b, ...,
#   then molecule likewise. File size is fully determined by the header.
CHECKPOINT_MAGIC = b"HSCK"
CHECKPOINT_VERSION = 1
_CKPT_HEAD = struct.Struct("<4sHHHH")


def _config_from_sizes(sizes: tuple[int, ...], activation: str) -> EncoderConfig:
    if len(sizes) != 3:
        raise CorruptCheckpointError(
            f"only 2-layer encoders are supported, got {len(sizes) - 1} layers"
        )
    return EncoderConfig(sizes[0], sizes[1], sizes[2], activation)


def save_checkpoint(model: Model, path: str) -> None:
    """Write ``model`` to ``path``; byte-identical for identical params."""
    p_sizes = model.protein_config.layer_sizes
    m_sizes = model.molecule_config.layer_sizes
    act = _ACTIVATION_TAGS[model.protein_config.activation]
    blob = bytearray()
    blob += _CKPT_HEAD.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION, act, len(p_sizes) - 1, len(m_sizes) - 1
    )
    blob += struct.pack(f"<{len(p_sizes)}I", *p_sizes)
    blob += struct.pack(f"<{len(m_sizes)}I", *m_sizes)
    for side in (model.protein, model.molecule):
        for weight, bias in side:
            blob += np.ascontiguousarray(weight, dtype="<f8").tobytes()
            blob += np.ascontiguousarray(bias, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path: str) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEAD.size:
        raise CorruptCheckpointError(f"{path}: shorter than the fixed header")
    magic, version, act_tag, p_layers, m_layers = _CKPT_HEAD.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpointError(f"{path}: unsupported checkpoint version {version}")
    if act_tag not in _TAG_ACTIVATIONS:
        raise CorruptCheckpointError(f"{path}: unknown activation tag {act_tag}")
    offset = _CKPT_HEAD.size
    dims_bytes = 4 * (p_layers + 1 + m_layers + 1)
    if len(raw) < offset + dims_bytes:
        raise CorruptCheckpointError(f"{path}: truncated size table")
    p_sizes = struct.unpack_from(f"<{p_layers + 1}I", raw, offset)
    offset += 4 * (p_layers + 1)
    m_sizes = struct.unpack_from(f"<{m_layers + 1}I", raw, offset)
    offset += 4 * (m_layers + 1)
    n_params = sum(
        sizes[i + 1] * sizes[i] + sizes[i + 1]
        for sizes in (p_sizes, m_sizes)
        for i in range(len(sizes) - 1)
    )
    if len(raw) != offset + 8 * n_params:
        raise CorruptCheckpointError(
            f"{path}: file is {len(raw)} bytes, header implies {offset + 8 * n_params}"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=offset).astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise CorruptCheckpointError(f"{path}: non-finite parameter values")
    activation = _TAG_ACTIVATIONS[act_tag]
    cursor = 0

    def take(sizes):
        nonlocal cursor
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weight = flat[cursor : cursor + fan_out * fan_in].reshape(fan_out, fan_in)
            cursor += fan_out * fan_in
            bias = flat[cursor : cursor + fan_out].copy()
            cursor += fan_out
            layers.append((weight.copy(), bias))
        return layers

    protein = take(p_sizes)
    molecule = take(m_sizes)
    return Model(
        _config_from_sizes(tuple(p_sizes), activation),
        _config_from_sizes(tuple(m_sizes), activation),
        protein,
        molecule,
    )
