"""Single-file checkpoint format.

Layout: an 8-byte magic, a little-endian uint32 manifest length, a JSON
manifest (sorted keys), then a raw little-endian tensor blob addressed by
the manifest's per-tensor offset table. The same model state always
serializes to the same bytes, so determinism can be asserted on files.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import LabelMaps, Vocab
from .model import JointModel, ModelConfig

MAGIC = b"SLOTLENS"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """Not a checkpoint file, or manifest/blob structure is inconsistent."""


class CheckpointCorruptError(ValueError):
    """Checkpoint recognized but truncated or internally out of bounds."""


class CheckpointVersionError(ValueError):
    """Format version differs from what this code writes."""


@dataclass
class Checkpoint:
    config: ModelConfig
    label_maps: LabelMaps
    vocab: Vocab
    params: dict[str, np.ndarray]
    optimizer: dict | None
    metadata: dict


def _le(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))


def save_checkpoint(
    path: str | Path,
    model: JointModel,
    maps: LabelMaps,
    vocab: Vocab,
    metadata: dict | None = None,
    include_optimizer: bool = False,
) -> Path:
    """Write the model, its label inventories, and vocab to one file."""
    tensors: dict[str, np.ndarray] = dict(model.params.state_dict())
    optim_entry = None
    if include_optimizer:
        state = model.params.optimizer_state()
        optim_entry = {"step_count": state["step_count"], "m": [], "v": []}
        for kind in ("m", "v"):
            for name, arr in sorted(state[kind].items()):
                blob_name = f"adam.{kind}.{name}"
                tensors[blob_name] = arr
                optim_entry[kind].append(name)

    table = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = _le(tensors[name])
        raw = arr.tobytes()
        table.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": str(np.dtype(arr.dtype.str.lstrip("<>="))),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "label_maps": {
            "intents": maps.intents,
            "slot_types": maps.slot_types,
            "bio_labels": maps.bio_labels,
        },
        "vocab": vocab.id_to_token,
        "params": table,
        "optimizer": optim_entry,
        "metadata": metadata or {},
    }
    encoded = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array(len(encoded), dtype="<u4").tobytes())
        f.write(encoded)
        for raw in blobs:
            f.write(raw)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and validate a checkpoint; every tensor round-trips bit-exactly."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    header_end = len(MAGIC) + 4
    (manifest_len,) = np.frombuffer(data[len(MAGIC) : header_end], dtype="<u4")
    manifest_end = header_end + int(manifest_len)
    if manifest_end > len(data):
        raise CheckpointCorruptError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(data[header_end:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{path}: unreadable manifest: {e}") from e

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: file format version {version}, this reader expects {FORMAT_VERSION}"
        )

    blob = data[manifest_end:]
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise CheckpointCorruptError(
                f"{path}: tensor {entry['name']!r} extends past end of file"
            )
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        arr = np.frombuffer(blob[start : start + nbytes], dtype=dtype)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointFormatError(
                f"{path}: tensor {entry['name']!r} has {arr.size} values "
                f"but shape {shape}"
            )
        tensors[entry["name"]] = arr.reshape(shape).astype(dtype.newbyteorder("="))

    config_fields = {f.name for f in fields(ModelConfig)}
    raw_config = manifest["config"]
    unknown = set(raw_config) - config_fields
    if unknown:
        raise CheckpointFormatError(f"{path}: unknown config keys {sorted(unknown)}")
    config = ModelConfig(**raw_config)

    lm = manifest["label_maps"]
    maps = LabelMaps(
        intents=lm["intents"], slot_types=lm["slot_types"], bio_labels=lm["bio_labels"]
    )
    vocab = Vocab(manifest["vocab"][2:])  # constructor re-adds pad/unk

    optimizer = None
    if manifest.get("optimizer"):
        o = manifest["optimizer"]
        optimizer = {
            "step_count": o["step_count"],
            "m": {n: tensors.pop(f"adam.m.{n}") for n in o["m"]},
            "v": {n: tensors.pop(f"adam.v.{n}") for n in o["v"]},
        }

    return Checkpoint(
        config=config,
        label_maps=maps,
        vocab=vocab,
        params=tensors,
        optimizer=optimizer,
        metadata=manifest.get("metadata", {}),
    )


def model_from_checkpoint(ckpt: Checkpoint) -> JointModel:
    """Rebuild a model and overwrite its parameters with the saved values."""
    model = JointModel(ckpt.config, rng=np.random.default_rng(0))
    saved = set(ckpt.params)
    expected = set(model.params.names())
    if saved != expected:
        missing = sorted(expected - saved)
        extra = sorted(saved - expected)
        raise CheckpointFormatError(
            f"parameter names disagree with config: missing {missing}, extra {extra}"
        )
    model.params.load_state(ckpt.params)
    if ckpt.optimizer is not None:
        model.params.load_optimizer_state(ckpt.optimizer)
    return model
