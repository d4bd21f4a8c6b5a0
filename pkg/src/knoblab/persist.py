"""Bit-exact on-disk formats.

Checkpoint layout (little-endian throughout):

    bytes 0-3   magic b"KNOB"
    bytes 4-7   format version, uint32
    bytes 8-11  descriptor length L, uint32
    L bytes     UTF-8 JSON descriptor: resolution, label range, layer list
    8*P bytes   float64 parameters, layer order as in the descriptor
    4 bytes     CRC32 (polynomial 0xEDB88320, via zlib) of all preceding bytes

Manifests and explanation reports are versioned JSON.  Images export as
binary PGM (P5) or PNG, 8-bit grayscale, quantized round(intensity * 255).
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .regressor import ARCHITECTURE, RegressorModel
from .synthgen import AttributeVector
from .worldmodel import SCHEMA_VERSION, DatasetManifest, LotSpec, SampleRecord

MAGIC = b"KNOB"
CHECKPOINT_VERSION = 1


class PersistError(Exception):
    """Base class for serialization failures."""


class BadMagicError(PersistError):
    pass


class UnknownVersionError(PersistError):
    pass


class ChecksumError(PersistError):
    pass


class TruncatedFileError(PersistError):
    pass


class ManifestFieldError(PersistError):
    def __init__(self, field_name: str):
        super().__init__(f"manifest is missing required field {field_name!r}")
        self.field_name = field_name


def save_model(model: RegressorModel, path) -> None:
    descriptor = {
        "resolution": model.resolution,
        "label_min": model.label_min,
        "label_max": model.label_max,
        "layers": [{"name": name, "shape": list(shape)} for name, shape, _ in ARCHITECTURE],
    }
    desc_bytes = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", CHECKPOINT_VERSION)
    body += struct.pack("<I", len(desc_bytes))
    body += desc_bytes
    for name, _, _ in ARCHITECTURE:
        body += model.params[name].values.astype("<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


def load_model(path) -> RegressorModel:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise TruncatedFileError(f"checkpoint {path} is too short ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"checkpoint {path} does not start with {MAGIC!r}")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise ChecksumError(f"checkpoint {path} failed its CRC32 check")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise UnknownVersionError(f"checkpoint version {version} is not supported")
    (desc_len,) = struct.unpack("<I", raw[8:12])
    desc_end = 12 + desc_len
    try:
        descriptor = json.loads(raw[12:desc_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PersistError(f"checkpoint descriptor is malformed: {exc}") from exc

    expected = [(name, tuple(shape)) for name, shape, _ in ARCHITECTURE]
    declared = [(layer["name"], tuple(layer["shape"])) for layer in descriptor["layers"]]
    if declared != expected:
        raise PersistError("checkpoint layer list does not match the fixed architecture")

    params: dict[str, Tensor] = {}
    offset = desc_end
    for name, shape in expected:
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(raw) - 4:
            raise TruncatedFileError(f"checkpoint ends inside parameter block {name!r}")
        values = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        params[name] = Tensor(values, requires_grad=True)
        offset = end
    if offset != len(raw) - 4:
        raise PersistError("checkpoint has trailing bytes after the parameter block")
    return RegressorModel(
        resolution=int(descriptor["resolution"]),
        params=params,
        label_min=float(descriptor["label_min"]),
        label_max=float(descriptor["label_max"]),
    )


def _attrs_dict(attrs: AttributeVector) -> dict:
    return {
        "size": attrs.size,
        "porosity": attrs.porosity,
        "dispersity": attrs.dispersity,
        "facetness": attrs.facetness,
    }


def _attrs_from_dict(d: dict) -> AttributeVector:
    return AttributeVector(d["size"], d["porosity"], d["dispersity"], d["facetness"])


def write_manifest(manifest: DatasetManifest, path) -> None:
    payload = {
        "schema_version": manifest.schema_version,
        "master_seed": manifest.master_seed,
        "lots": [
            {
                "lot_id": lot.lot_id,
                "attrs": _attrs_dict(lot.attrs),
                "true_stress": lot.true_stress,
                "tiles": lot.tiles,
            }
            for lot in manifest.lots
        ],
        "samples": [
            {
                "sample_seed": s.sample_seed,
                "lot_id": s.lot_id,
                "attrs": _attrs_dict(s.attrs),
                "label": s.label,
                "split": s.split,
            }
            for s in manifest.samples
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PersistError(f"manifest {path} is not valid JSON: {exc}") from exc
    for field_name in ("schema_version", "master_seed", "lots", "samples"):
        if field_name not in payload:
            raise ManifestFieldError(field_name)
    if payload["schema_version"] != SCHEMA_VERSION:
        raise UnknownVersionError(
            f"manifest schema version {payload['schema_version']} is not supported"
        )
    try:
        lots = [
            LotSpec(l["lot_id"], _attrs_from_dict(l["attrs"]), l["true_stress"], l["tiles"])
            for l in payload["lots"]
        ]
        samples = [
            SampleRecord(
                s["sample_seed"], s["lot_id"], _attrs_from_dict(s["attrs"]), s["label"], s["split"]
            )
            for s in payload["samples"]
        ]
    except KeyError as exc:
        raise ManifestFieldError(str(exc.args[0])) from exc
    return DatasetManifest(payload["schema_version"], payload["master_seed"], lots, samples)


def quantize(values: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(values) * 255.0).astype(np.uint8)


def export_image(image, path, fmt: str = "pgm") -> None:
    """8-bit grayscale export; quantization is round(intensity * 255)."""
    values = image.values if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if values.ndim != 2:
        raise PersistError(f"expected a 2-d grayscale image, got shape {values.shape}")
    if values.min() < 0.0 or values.max() > 1.0:
        raise PersistError("image intensities must lie in [0, 1]")
    data = quantize(values)
    if fmt == "pgm":
        h, w = data.shape
        header = f"P5 {w} {h} 255\n".encode("ascii")
        Path(path).write_bytes(header + data.tobytes())
    elif fmt == "png":
        from PIL import Image

        Image.fromarray(data, mode="L").save(str(path), format="PNG")
    else:
        raise PersistError(f"unsupported image format {fmt!r}")


def png_bytes(image) -> bytes:
    """In-memory 8-bit grayscale PNG (used by the HTTP service)."""
    import io

    from PIL import Image

    values = image.values if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    buf = io.BytesIO()
    Image.fromarray(quantize(values), mode="L").save(buf, format="PNG")
    return buf.getvalue()
