"""Subprocess bridge to external survival models.

Protocol: the explainer writes the neighbours to a CSV (header = feature
names) and runs ``<command> --input <csv> --output <csv> --kind
{cumulative|survival}``. The command must write a prediction CSV whose first
row holds its output times and whose remaining rows hold one curve per input
row, in input order.

Running this module serves a saved Cox model through the same protocol,
applying the model file's preprocessing to the raw input features::

    python -m survlime.adapter --model model.json --input in.csv --output out.csv --kind survival
"""

from __future__ import annotations

import argparse
import os
import shlex
import subprocess
import sys
import tempfile

import numpy as np

from .core import (DEFAULT_GAMMA, Kind, PredictionMatrix, TimeGrid, read_features_csv,
                   read_prediction_csv, write_features_csv, write_prediction_csv)
from .errors import AdapterError, DataError

WIRE_KIND = {Kind.CUMULATIVE_HAZARD: "cumulative", Kind.SURVIVAL: "survival"}


class SubprocessModel:
    """Callable black box backed by an external command."""

    def __init__(self, command, feature_names, kind="cumulative", timeout: float = 300.0,
                 gamma: float = DEFAULT_GAMMA):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise AdapterError("empty model command")
        self.feature_names = list(feature_names)
        self.kind = Kind.parse(kind)
        self.timeout = timeout
        self.gamma = gamma

    def __call__(self, X) -> PredictionMatrix:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        with tempfile.TemporaryDirectory(prefix="survlime-") as tmp:
            src = os.path.join(tmp, "neighbors.csv")
            dst = os.path.join(tmp, "predictions.csv")
            with open(src, "w", newline="", encoding="utf-8") as fh:
                write_features_csv(X, self.feature_names, fh)
            argv = [*self.argv, "--input", src, "--output", dst, "--kind", WIRE_KIND[self.kind]]
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
            except subprocess.TimeoutExpired as exc:
                stderr = exc.stderr or ""
                if isinstance(stderr, bytes):
                    stderr = stderr.decode(errors="replace")
                raise AdapterError(f"model command timed out after {self.timeout}s",
                                   stderr) from None
            except OSError as exc:
                raise AdapterError(f"cannot run model command {self.argv[0]!r}: {exc}") from None
            if proc.returncode != 0:
                raise AdapterError(f"model command exited with status {proc.returncode}",
                                   proc.stderr)
            if not os.path.exists(dst):
                raise AdapterError("model command wrote no prediction file", proc.stderr)
            try:
                pred = read_prediction_csv(dst, self.kind, self.gamma)
            except (DataError, ValueError) as exc:
                raise AdapterError(f"ill-formed prediction file: {exc}", proc.stderr) from None
        if pred.rows.shape[0] != X.shape[0]:
            raise AdapterError(f"prediction file has {pred.rows.shape[0]} rows for "
                               f"{X.shape[0]} inputs", proc.stderr)
        return pred


def serve_cox(argv=None) -> int:
    """Answer one protocol request with a saved Cox model."""
    from .bundle import load_bundle
    from .cox import predict_chf

    parser = argparse.ArgumentParser(prog="python -m survlime.adapter")
    parser.add_argument("--model", required=True)
    parser.add_argument("--input", required=True)
    parser.add_argument("--output", required=True)
    parser.add_argument("--kind", choices=["cumulative", "survival"], default="cumulative")
    parser.add_argument("--quantiles", type=int, default=0,
                        help="report only this many evenly spaced output times")
    args = parser.parse_args(argv)
    bundle = load_bundle(args.model)
    X, _ = read_features_csv(args.input)
    pred = predict_chf(bundle.model, bundle.standardizer.transform(X))
    if args.quantiles:
        keep = np.unique(np.linspace(0, len(pred.grid) - 1, args.quantiles).round().astype(int))
        pred = PredictionMatrix(TimeGrid(pred.grid.times[keep], pred.grid.gamma),
                                pred.rows[:, keep])
    if args.kind == "survival":
        pred = PredictionMatrix(pred.grid, np.exp(-pred.rows), Kind.SURVIVAL)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        write_prediction_csv(pred, fh)
    return 0


if __name__ == "__main__":
    sys.exit(serve_cox())
