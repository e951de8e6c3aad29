"""Binary checkpoint format:

    b"SAPL" | version u32 | count u32 | count x (name_length u32, name utf-8, rank u32, dims u32 x rank,
    float64 payload)

All integers and floats are little-endian. Tensors named ``architecture.*`` record the layout the parameters were
trained for; they are split off from the parameters on load.
"""
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Optional, Union

import numpy as np

from sa_reid.exceptions import CheckpointError
from sa_reid.model.model_config import ModelConfig
from sa_reid.model.params import Params

CHECKPOINT_MAGIC = b"SAPL"
CHECKPOINT_VERSION = 1
ARCHITECTURE_PREFIX = "architecture."


def architecture_tensors(cfg: ModelConfig) -> Params:
    """The configuration fields that shape the network, except the class count, as float64 tensors."""
    stages = [
        [stage.out_channels, stage.kernel, stage.stride, stage.pad, float(stage.downsample)] for stage in cfg.stages
    ]
    fields = OrderedDict(
        stages=stages,
        input_shape=list(cfg.input_shape),
        m=cfg.m,
        reduced_dim=cfg.reduced_dim,
        sa_on_ds=float(cfg.sa_on_ds),
        sa_on_backbone=float(cfg.sa_on_backbone),
    )
    return OrderedDict(
        (ARCHITECTURE_PREFIX + name, np.asarray(value, dtype=np.float64)) for name, value in fields.items()
    )


def check_architecture(architecture: Params, cfg: ModelConfig, file_path: Union[str, Path]) -> None:
    mismatched = []
    for name, expected in architecture_tensors(cfg).items():
        stored = architecture.get(name)
        if stored is None or stored.shape != expected.shape or not np.array_equal(stored, expected):
            mismatched.append(name[len(ARCHITECTURE_PREFIX) :])
    if mismatched:
        raise CheckpointError(
            f"Checkpoint '{file_path}' was written for a different architecture: "
            f"{', '.join(mismatched)} disagree with the model configuration."
        )


def save_checkpoint(params: Params, file_path: Union[str, Path], cfg: Optional[ModelConfig] = None) -> Path:
    """Write ``params``; when ``cfg`` is given its architecture tensors are stored after them."""
    file_path = Path(file_path)
    tensors = OrderedDict(params)
    if cfg is not None:
        tensors.update(architecture_tensors(cfg))
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(tensors))]
    for name, tensor in tensors.items():
        encoded_name = name.encode("utf-8")
        tensor = np.asarray(tensor, dtype="<f8")
        chunks.append(struct.pack("<I", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack(f"<I{tensor.ndim}I", tensor.ndim, *tensor.shape))
        chunks.append(tensor.tobytes(order="C"))
    with open(file_path, "wb") as file:
        file.write(b"".join(chunks))
    return file_path


class _Reader:
    def __init__(self, content: bytes, file_path: Path):
        self.content = content
        self.file_path = file_path
        self.offset = 0

    def take(self, num_bytes: int) -> bytes:
        if self.offset + num_bytes > len(self.content):
            raise CheckpointError(f"Checkpoint '{self.file_path}' is truncated.")
        chunk = self.content[self.offset : self.offset + num_bytes]
        self.offset += num_bytes
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(file_path: Union[str, Path], cfg: Optional[ModelConfig] = None) -> Params:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Parameters
    ----------
    file_path : str or Path
        Path to the checkpoint file.
    cfg : ModelConfig, optional
        When given and the checkpoint records an architecture, the two must agree (the class count aside).

    Returns
    -------
    Params
        The stored parameters without the architecture tensors.
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise CheckpointError(f"Checkpoint '{file_path}' does not exist.")
    reader = _Reader(content=file_path.read_bytes(), file_path=file_path)

    magic = reader.take(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"Checkpoint '{file_path}' has bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}.")
    version, count = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Checkpoint '{file_path}' has unsupported format version {version}.")

    params = OrderedDict()
    architecture = OrderedDict()
    for _ in range(count):
        (name_length,) = reader.unpack("<I")
        name = reader.take(name_length).decode("utf-8")
        (rank,) = reader.unpack("<I")
        shape = reader.unpack(f"<{rank}I")
        num_values = int(np.prod(shape)) if rank else 1
        payload = reader.take(8 * num_values)
        tensor = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
        if name.startswith(ARCHITECTURE_PREFIX):
            architecture[name] = tensor
        else:
            params[name] = tensor
    if reader.offset != len(reader.content):
        raise CheckpointError(f"Checkpoint '{file_path}' has trailing bytes after {count} tensors.")
    if cfg is not None and architecture:
        check_architecture(architecture, cfg, file_path)
    return params
