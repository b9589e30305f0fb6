"""Saved model files: a Cox model plus the preprocessing and split it was fitted with."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .core import SurvivalDataset
from .cox import CoxModel
from .errors import DataError

SCHEMA_VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class Standardizer:
    """Per-column ``(x - mean) / scale``; binary columns pass through unchanged."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(np.zeros(p), np.ones(p))

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        binary = np.all((X == 0) | (X == 1), axis=0)
        mean = np.where(binary, 0.0, X.mean(axis=0))
        scale = np.where(binary, 1.0, X.std(axis=0, ddof=1))
        if np.any(scale == 0) or not np.all(np.isfinite(scale)):
            raise DataError("constant feature in the training split; cannot standardise")
        return cls(mean, scale)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.size:
            raise DataError(f"row dimension mismatch: got {X.shape[-1]} values, "
                            f"model expects {self.mean.size}")
        return (X - self.mean) / self.scale

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


@dataclass(frozen=True)
class ModelBundle:
    model: CoxModel
    standardizer: Standardizer
    train_rows: tuple = ()
    test_rows: tuple = ()
    data_sha256: str | None = None
    split: dict | None = None

    def training_set(self, dataset: SurvivalDataset, data_sha256: str | None) -> SurvivalDataset:
        """Training rows of ``dataset`` in model space.

        Falls back to every row when the file is not the one the model was fitted on.
        """
        if self.train_rows and data_sha256 == self.data_sha256:
            dataset = dataset.subset(np.asarray(self.train_rows))
        return dataset.with_features(self.standardizer.transform(dataset.features))

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "cox-model",
                "model": self.model.to_json(),
                "preprocessing": self.standardizer.to_json(),
                "split": dict(self.split or {}, train_rows=list(self.train_rows),
                              test_rows=list(self.test_rows)),
                "data_sha256": self.data_sha256}

    @classmethod
    def from_json(cls, doc: dict) -> "ModelBundle":
        try:
            if "model" not in doc:
                model = CoxModel.from_json(doc)
                return cls(model, Standardizer.identity(model.p))
            model = CoxModel.from_json(doc["model"])
            pre = doc.get("preprocessing") or {}
            std = (Standardizer(np.asarray(pre["mean"], dtype=np.float64),
                                np.asarray(pre["scale"], dtype=np.float64))
                   if pre else Standardizer.identity(model.p))
            split = dict(doc.get("split") or {})
            train = tuple(int(i) for i in split.pop("train_rows", ()))
            test = tuple(int(i) for i in split.pop("test_rows", ()))
            return cls(model, std, train, test, doc.get("data_sha256"), split)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed model file: {exc!r}") from None


def load_bundle(path) -> ModelBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from None
    return ModelBundle.from_json(doc)
