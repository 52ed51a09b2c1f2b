"""Bit-exact serialization of model weights into a metadata container.

Layout (all integers little-endian):

    offset  size  field
    0       4     magic "UHAL"
    4       2     version, u16 (currently 1)
    6       1     modality id, u8 (0 natural-SR, 1 text-SR, 2 low-light,
                  255 custom)
    7       1     include_encoder flag, u8 (1 when the frozen encoder /
                  feature tables travel with the image)
    8       4     architecture JSON length, u32
    12      L     architecture JSON (ArchDescriptor, sorted keys)
    12+L    ...   weight blob: per tensor, u32 element count followed by
                  that many float32 values, tensors in canonical
                  construction order
    end-4   4     crc32 over all preceding bytes

A container is rejected, never partially applied, on any checksum or
structure mismatch. Serialized size is a pure function of the architecture,
never of the image resolution.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .arch import ArchDescriptor
from .errors import BadContainer, ConfigError, CrcMismatch, ShapeError

MAGIC = b"UHAL"
VERSION = 1

MODALITY_IDS = {"natural_sr": 0, "text_sr": 1, "lowlight": 2, "custom": 255}
MODALITY_NAMES = {v: k for k, v in MODALITY_IDS.items()}

# Default full container (tuned encoder + MLP at k=64) must stay under this.
CONTAINER_BUDGET_BYTES = 190_000


@dataclass
class Container:
    arch: ArchDescriptor
    weights: list
    modality: int = MODALITY_IDS["custom"]
    include_encoder: bool = True

    def mlp_weight_count(self) -> int:
        """Tensors belonging to the finetuned MLP (always serialized last)."""
        return 2 * (self.arch.mlp_layers + 1)


def _modality_id(modality) -> int:
    if isinstance(modality, str):
        if modality not in MODALITY_IDS:
            raise ConfigError(f"unknown modality {modality!r}; expected one "
                              f"of {sorted(MODALITY_IDS)}")
        return MODALITY_IDS[modality]
    modality = int(modality)
    if modality not in MODALITY_NAMES:
        raise ConfigError(f"unknown modality id {modality}")
    return modality


def predicted_container_size(arch: ArchDescriptor, tensor_sizes) -> int:
    """Serialized byte count for an architecture + tensor element counts."""
    blob = sum(4 + 4 * int(n) for n in tensor_sizes)
    return 12 + len(arch.to_json().encode("utf-8")) + blob + 4


def serialize_container(arch: ArchDescriptor, weights,
                        modality="custom",
                        include_encoder: bool = True) -> bytes:
    """Pack weight arrays (canonical order) into container bytes."""
    mod_id = _modality_id(modality)
    parts = [MAGIC, struct.pack("<HBB", VERSION, mod_id,
                                1 if include_encoder else 0)]
    arch_json = arch.to_json().encode("utf-8")
    parts.append(struct.pack("<I", len(arch_json)))
    parts.append(arch_json)
    for arr in weights:
        arr = np.asarray(arr)
        flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        parts.append(struct.pack("<I", flat.size))
        parts.append(flat.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_container(data: bytes) -> Container:
    """Parse and fully validate container bytes.

    Checks, in order: length, magic, crc, version, architecture JSON, and
    that the weight blob splits into exactly the tensor shapes the declared
    architecture expects.
    """
    if len(data) < 16:
        raise BadContainer(f"container truncated: {len(data)} bytes")
    if data[:4] != MAGIC:
        raise BadContainer(f"bad magic {data[:4]!r}; not a weight container")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise CrcMismatch(
            f"container checksum mismatch: stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x}")
    version, mod_id, include_flag = struct.unpack("<HBB", data[4:8])
    if version != VERSION:
        raise BadContainer(f"unsupported container version {version}")
    if mod_id not in MODALITY_NAMES:
        raise BadContainer(f"unknown modality id {mod_id}")
    (arch_len,) = struct.unpack("<I", data[8:12])
    if 12 + arch_len + 4 > len(data):
        raise BadContainer("architecture record overruns container")
    try:
        arch = ArchDescriptor.from_json(
            data[12:12 + arch_len].decode("utf-8"))
    except (ConfigError, UnicodeDecodeError) as e:
        raise BadContainer(f"invalid architecture record: {e}") from None

    weights = []
    pos = 12 + arch_len
    end = len(data) - 4
    while pos < end:
        if pos + 4 > end:
            raise BadContainer("weight blob truncated at tensor header")
        (count,) = struct.unpack("<I", data[pos:pos + 4])
        pos += 4
        nbytes = 4 * count
        if pos + nbytes > end:
            raise BadContainer(
                f"weight blob truncated: tensor of {count} values does not "
                "fit")
        weights.append(np.frombuffer(data[pos:pos + nbytes],
                                     dtype="<f4").copy())
        pos += nbytes

    container = Container(arch=arch, weights=weights, modality=mod_id,
                          include_encoder=bool(include_flag))
    _validate_weight_shapes(container)
    return container


def _validate_weight_shapes(container: Container) -> None:
    from .models import build_model

    model = build_model(container.arch, seed=0)
    expected = container_weight_sizes(model, container.include_encoder)
    got = [w.size for w in container.weights]
    if got != expected:
        raise BadContainer(
            f"weight blob does not match architecture "
            f"{container.arch.family!r}: tensor sizes {got[:6]}... "
            f"expected {expected[:6]}...")


def container_weight_sizes(model, include_encoder: bool) -> list:
    names = model.named_parameters()
    if not include_encoder:
        names = names[-2 * (model.descriptor.mlp_layers + 1):]
    return [t.size for _, t in names]


def serialize_model(model, modality="custom",
                    include_encoder: bool = True) -> bytes:
    """Serialize a RecoveryModel, optionally dropping the frozen encoder
    (MLP-only metadata requires the modality encoder at recovery time)."""
    arrays = model.weight_arrays()
    if not include_encoder:
        arrays = arrays[-2 * (model.descriptor.mlp_layers + 1):]
    return serialize_container(model.descriptor, arrays, modality=modality,
                               include_encoder=include_encoder)


def model_from_container(container: Container, encoder_source=None,
                         dtype=np.float32):
    """Rebuild the model a container describes.

    ``encoder_source`` supplies frozen encoder weights for MLP-only
    containers; pass another Container (same architecture) or a list of
    arrays.
    """
    from .models import build_model

    model = build_model(container.arch, seed=0, dtype=dtype)
    if container.include_encoder:
        model.load_weights(container.weights)
        return model

    n_mlp = container.mlp_weight_count()
    n_total = len(model.named_parameters())
    if n_total == n_mlp:
        model.load_weights(container.weights)
        return model
    if encoder_source is None:
        raise BadContainer(
            "container omits the encoder weights; supply the modality "
            "encoder to recover")
    if isinstance(encoder_source, Container):
        if encoder_source.arch != container.arch:
            raise BadContainer("encoder source architecture differs from "
                               "the container architecture")
        enc_weights = encoder_source.weights[:n_total - n_mlp]
    else:
        enc_weights = list(encoder_source)
    if len(enc_weights) != n_total - n_mlp:
        raise ShapeError(
            f"encoder source supplies {len(enc_weights)} tensors, expected "
            f"{n_total - n_mlp}")
    model.load_weights(list(enc_weights) + list(container.weights))
    return model
