"""Versioned JSON persistence for models, with bit-exact round trips.

Every model file carries `format_version`, `model_type`, the exact run
config, and (for the neural models) the vocabulary and all parameter
tensors as nested float arrays.  Floats serialize via `repr`, the
shortest round-tripping representation, so loading restores values bit
for bit; keys are sorted, so identical models produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import baselines
from .config import RunConfig
from .cqr import CqrHeadParams, CqrModel
from .ctw import CtwHeadParams, CtwModel
from .encoder import EncoderParams, GruLayerParams
from .text import Vocabulary

MODEL_FORMAT_VERSION = 1

BASELINE_TYPES = {
    "ftw": baselines.FtwModel,
    "fqr": baselines.FqrModel,
    "tfidf": baselines.TfidfModel,
    "vpcg": baselines.VpcgModel,
}


class ModelFormatError(ValueError):
    """Raised on version or schema mismatches in model files."""


def _tensors_to_json(tensors):
    return {name: arr.tolist() for name, arr in tensors.items()}


def _encoder_from_tensors(tensors, layers, dropout):
    def layer(prefix):
        return GruLayerParams(**{
            f: np.array(tensors[f"{prefix}.{f}"])
            for f in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")
        })

    return EncoderParams(
        embedding=np.array(tensors["embedding"]),
        fwd=[layer(f"fwd{k}") for k in range(layers)],
        bwd=[layer(f"bwd{k}") for k in range(layers)],
        dropout=dropout,
    )


def model_to_dict(model_type, model):
    doc = {"format_version": MODEL_FORMAT_VERSION, "model_type": model_type}
    if model_type in ("ctw", "cqr"):
        doc["config"] = model.config.to_dict()
        doc["vocabulary"] = model.vocab.to_dict()
        doc["tensors"] = _tensors_to_json(model.tensors())
        doc["loss_trace"] = model.loss_trace or []
        doc["val_trace"] = model.val_trace or []
        doc["best_epoch"] = model.best_epoch
    elif model_type in BASELINE_TYPES:
        doc["config"] = {}
        doc["data"] = model.to_dict()
    else:
        raise ModelFormatError(f"unknown model type {model_type!r}")
    return doc


def model_from_dict(doc):
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"model format_version {version!r} unsupported "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    model_type = doc.get("model_type")
    if model_type in ("ctw", "cqr"):
        config = RunConfig.from_dict(doc["config"])
        vocab = Vocabulary.from_dict(doc["vocabulary"])
        tensors = doc["tensors"]
        encoder = _encoder_from_tensors(tensors, config.layers, config.dropout)
        if model_type == "ctw":
            head = CtwHeadParams(
                w1=np.array(tensors["head.w1"]), b1=np.array(tensors["head.b1"]),
                w2=np.array(tensors["head.w2"]), b2=np.array(tensors["head.b2"]),
                dropout=config.dropout,
            )
            model = CtwModel(config=config, vocab=vocab, encoder=encoder, head=head)
        else:
            head = CqrHeadParams(
                w1=np.array(tensors["head.w1"]), b1=np.array(tensors["head.b1"]),
                w2=np.array(tensors["head.w2"]), b2=np.array(tensors["head.b2"]),
                dropout=config.dropout,
            )
            model = CqrModel(config=config, vocab=vocab, encoder=encoder, head=head)
        model.loss_trace = doc.get("loss_trace", [])
        model.val_trace = doc.get("val_trace", [])
        model.best_epoch = doc.get("best_epoch", -1)
        return model_type, model
    if model_type in BASELINE_TYPES:
        return model_type, BASELINE_TYPES[model_type].from_dict(doc["data"])
    raise ModelFormatError(f"unknown model type {model_type!r}")


def save_model(model_type, model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model_type, model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path, expect_type=None):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    model_type, model = model_from_dict(doc)
    if expect_type is not None and model_type != expect_type:
        raise ModelFormatError(
            f"{path}: expected a {expect_type!r} model, found {model_type!r}"
        )
    return model_type, model


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
