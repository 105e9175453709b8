"""Versioned JSON model files: descriptor, scaler and bit-exact float64 parameters."""
from __future__ import annotations

import base64
import json

import numpy as np

from .data import ScalerStats
from .errors import ConfigurationError, FormatError, ScalingError
from .models import Model, ModelDescriptor, build_model

FORMAT = "pvqml-model"
VERSION = 1


def encode_params(flat: np.ndarray) -> str:
    return base64.b64encode(np.asarray(flat, dtype="<f8").tobytes()).decode("ascii")


def decode_params(text: str, count: int) -> np.ndarray:
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (ValueError, UnicodeEncodeError) as exc:
        raise FormatError(f"parameter payload is not valid base64: {exc}") from None
    if len(raw) != 8 * count:
        raise FormatError(f"parameter payload holds {len(raw) // 8} values, descriptor says {count}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def model_document(model: Model, scaler: ScalerStats | None = None, meta: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "descriptor": model.descriptor.to_dict(),
        "scaler": None if scaler is None else scaler.to_dict(),
        "params": {"dtype": "<f8", "count": model.registry.size, "data": encode_params(model.registry.flat)},
        "meta": meta or {},
    }


def save_model(path, model: Model, scaler: ScalerStats | None = None, meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(model_document(model, scaler, meta), fh, indent=2)


def model_from_document(doc) -> tuple[Model, ScalerStats | None, dict]:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise FormatError("not a model file (missing format marker)")
    version = doc.get("version")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version!r}; this build reads version {VERSION}")
    try:
        desc = ModelDescriptor.from_dict(doc["descriptor"])
        params = doc["params"]
        if params.get("dtype") != "<f8":
            raise FormatError(f"unsupported parameter dtype {params.get('dtype')!r}")
        flat = decode_params(params["data"], int(params["count"]))
        model = build_model(desc.kind, seed=None, **desc.dims)
        scaler = None if doc.get("scaler") is None else ScalerStats.from_dict(doc["scaler"])
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, ConfigurationError, ScalingError) as exc:
        raise FormatError(f"malformed model file: {type(exc).__name__}: {exc}") from None
    if model.registry.size != desc.total_params or flat.size != desc.total_params:
        raise FormatError(f"descriptor declares {desc.total_params} parameters, rebuilt model has {model.registry.size}")
    model.registry.flat[:] = flat
    return model, scaler, dict(doc.get("meta") or {})


def load_model(path) -> tuple[Model, ScalerStats | None, dict]:
    """Inverse of :func:`save_model`. Raises ``FormatError`` on corrupt or foreign files, ``OSError`` on I/O."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from None
    return model_from_document(doc)
