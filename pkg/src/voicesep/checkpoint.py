"""Checkpoint persistence.

Binary layout (all integers little-endian):

    magic "MSS1" | u32 version | u32 tensor_count
    per tensor: u16 name_len | name utf-8 | u8 rank | rank * u32 dims
                | float32 payload (row-major)
    trailer: u32 blob_len | utf-8 key=value config blob

Tensors are stored in float32; loading reproduces them bitwise at that
precision. The config blob carries the run configuration plus the epoch
index and rng state needed to resume training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter
from .config import RunConfig, parse_key_values
from .model import DenoiserParams, MaskerParams, ModelParams
from .nn import GruParams

MAGIC = b"MSS1"
VERSION = 1

_GRU_SUFFIXES = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")


class CheckpointFormatError(Exception):
    """Raised when a checkpoint file does not match the expected layout."""


@dataclass
class Checkpoint:
    """Parsed checkpoint: float32 tensors by name plus the config mapping."""

    tensors: dict[str, np.ndarray]
    config: dict[str, str]

    @property
    def epoch(self) -> int:
        return int(self.config.get("epoch", "0"))

    def run_config(self) -> RunConfig:
        keys = {k: v for k, v in self.config.items()
                if not k.startswith("rng.") and k != "epoch"}
        return RunConfig.from_mapping(keys)


def save_checkpoint(path, params: ModelParams, config_text: str) -> None:
    """Serialize the model tensors and a config blob to ``path``."""
    named = params.named_parameters()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name, p in named:
        encoded = name.encode("utf-8")
        values = p.values.astype("<f4")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.tobytes())
    blob = config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(blob)))
    chunks.append(blob)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise CheckpointFormatError(
                f"truncated checkpoint: needed {count} bytes for {what} at "
                f"offset {self.offset}, file has {len(self.data)}")
        piece = self.data[self.offset:self.offset + count]
        self.offset += count
        return piece

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointFormatError(
            f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        (rank,) = r.unpack("<B", f"tensor {name} rank")
        dims = r.unpack(f"<{rank}I", f"tensor {name} dims") if rank else ()
        n_values = int(np.prod(dims)) if rank else 1
        payload = r.take(4 * n_values, f"tensor {name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    (blob_len,) = r.unpack("<I", "config blob length")
    blob = r.take(blob_len, "config blob").decode("utf-8")
    if r.offset != len(data):
        raise CheckpointFormatError(
            f"{len(data) - r.offset} trailing bytes at offset {r.offset}")
    return Checkpoint(tensors=tensors, config=parse_key_values(blob))


def _gru_from_tensors(tensors: dict[str, np.ndarray], prefix: str,
                      input_dim: int, hidden_dim: int) -> GruParams:
    kwargs = {}
    expected = {"w": (input_dim, hidden_dim), "u": (hidden_dim, hidden_dim),
                "b": (1, hidden_dim)}
    for suffix in _GRU_SUFFIXES:
        name = f"{prefix}.{suffix}"
        if name not in tensors:
            raise CheckpointFormatError(f"checkpoint is missing tensor {name}")
        values = tensors[name]
        want = expected[suffix[0]]
        if tuple(values.shape) != want:
            raise CheckpointFormatError(
                f"tensor {name} has shape {tuple(values.shape)}, expected {want}")
        kwargs[suffix] = Parameter(values.astype(np.float64), name=name)
    return GruParams(**kwargs)


def model_from_checkpoint(ckpt: Checkpoint, cfg: RunConfig) -> ModelParams:
    """Rebuild ModelParams, validating every tensor shape against ``cfg``."""
    f = cfg.low_bands
    n = cfg.n_bins
    half = n // 2

    def dense(name: str, shape: tuple[int, int]) -> Parameter:
        if name not in ckpt.tensors:
            raise CheckpointFormatError(f"checkpoint is missing tensor {name}")
        values = ckpt.tensors[name]
        if tuple(values.shape) != shape:
            raise CheckpointFormatError(
                f"tensor {name} has shape {tuple(values.shape)}, expected {shape}")
        return Parameter(values.astype(np.float64), name=name)

    masker = MaskerParams(
        enc_fwd=_gru_from_tensors(ckpt.tensors, "masker.enc_fwd", f, f),
        enc_bwd=_gru_from_tensors(ckpt.tensors, "masker.enc_bwd", f, f),
        dec=_gru_from_tensors(ckpt.tensors, "masker.dec", 2 * f, 2 * f),
        w_mask=dense("masker.w_mask", (2 * f, n)),
        b_mask=dense("masker.b_mask", (1, n)),
    )
    denoiser = DenoiserParams(
        w_enc=dense("denoiser.w_enc", (n, half)),
        b_enc=dense("denoiser.b_enc", (1, half)),
        w_dec=dense("denoiser.w_dec", (half, n)),
        b_dec=dense("denoiser.b_dec", (1, n)),
    )
    return ModelParams(masker=masker, denoiser=denoiser)
