"""``survlime`` command line: simulate, fit-cox, explain, montecarlo, plot.

Every command writes ``<out>.manifest.json`` next to its main output. The
manifest records the command, every effective parameter (seeds included), the
SHA-256 of each input file and the tool version; each JSON output embeds the
manifest's own hash. Exit codes: 0 ok, 2 usage, 3 data or model, 4 solver,
5 external model adapter.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
from importlib import metadata

import numpy as np

from . import plots
from .adapter import SubprocessModel
from .bundle import SCHEMA_VERSION, ModelBundle, Standardizer, load_bundle, sha256_file
from .core import Kind, c_index, read_dataset_csv, write_dataset_csv
from .cox import fit_cox
from .errors import DataError, SurvLimeError, UsageError
from .explainer import ExplainerConfig, MonteCarloExplanation, SurvLimeExplainer
from .simulate import RandomSurvivalConfig, random_survival_data


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


# --- output plumbing --------------------------------------------------------

def dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_text(path, text: str) -> None:
    plots.write_atomic(path, text)


def write_manifest(out_path, command: str, config: dict, inputs: dict) -> str:
    """Write ``<out_path>.manifest.json`` and return its SHA-256."""
    manifest = {"command": command,
                "config_snapshot": config,
                "input_hashes": {k: sha256_file(v) for k, v in sorted(inputs.items())},
                "tool_version": tool_version(),
                "schema_version": SCHEMA_VERSION}
    text = dump_json(manifest)
    write_text(f"{out_path}.manifest.json", text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def stamped(doc: dict, kind: str, manifest_hash: str) -> dict:
    return dict(doc, schema_version=SCHEMA_VERSION, kind=kind, manifest_sha256=manifest_hash)


def sibling(path, suffix: str) -> str:
    root, _ = os.path.splitext(path)
    return root + suffix


# --- flag parsing -------------------------------------------------------------

def parse_vector(text: str, flag: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated decimals, got {text!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise UsageError(f"{flag}: values must be finite")
    return values


def parse_rows(text: str, n: int) -> list[int]:
    try:
        rows = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--rows: expected 'all-test' or comma-separated indices, "
                         f"got {text!r}") from None
    for r in rows:
        if not 0 <= r < n:
            raise UsageError(f"row index {r} out of range for {n} rows")
    return rows


def resolve_seed(seed):
    """Draw and record a seed when none is given, so the run can be repeated."""
    return int(np.random.SeedSequence().entropy % (2**63)) if seed is None else seed


def canonical_split(dataset, fraction: float, seed: int):
    """Train/test indices that depend on row contents, not on row order."""
    n = dataset.n
    n_train = int(round(fraction * n))
    if n_train >= n:
        raise UsageError("empty test split: --split leaves no rows for testing")
    if n_train < 2:
        raise UsageError("training split needs at least 2 rows")
    keys = np.column_stack([dataset.features, dataset.times, dataset.events])
    canonical = np.lexsort(keys.T[::-1])
    perm = np.random.default_rng(seed).permutation(n)
    train = np.sort(canonical[perm[:n_train]])
    test = np.sort(canonical[perm[n_train:]])
    return train, test


def safe_c_index(risks, times, events):
    try:
        return c_index(risks, times, events)
    except DataError:
        return None


# --- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.n < 2:
        raise UsageError(f"--n must be >= 2, got {args.n}")
    center = parse_vector(args.center, "--center")
    coefs = parse_vector(args.coefficients, "--coefficients")
    if len(center) != len(coefs):
        raise UsageError(f"--center has {len(center)} values but --coefficients has "
                         f"{len(coefs)}; vector flags must have equal length")
    config = RandomSurvivalConfig(center, args.radius, coefs, args.prob_event, args.lam,
                                  args.v, args.time_cap, resolve_seed(args.seed))
    snapshot = dict(json.loads(config.to_json()), n=args.n)
    digest = write_manifest(args.out, "simulate", snapshot, {})
    dataset = random_survival_data(config, args.n)
    sidecar = stamped({"config": json.loads(config.to_json()), "n": args.n},
                      "simulation-config", digest)
    write_text(sibling(args.out, ".config.json"), dump_json(sidecar))
    buf = io.StringIO()
    write_dataset_csv(dataset, buf)
    write_text(args.out, buf.getvalue())
    return 0


def cmd_fit_cox(args) -> int:
    if not 0 < args.split <= 1:
        raise UsageError(f"--split must lie in (0, 1], got {args.split}")
    dataset = read_dataset_csv(args.data)
    seed = resolve_seed(args.seed)
    train, test = canonical_split(dataset, args.split, seed)
    std = Standardizer.fit(dataset.features[train])
    scaled = dataset.with_features(std.transform(dataset.features))
    train_set = scaled.subset(train)
    try:
        model = fit_cox(train_set, max_iter=args.max_iter)
    except DataError as exc:
        events = int(train_set.events.sum())
        raise type(exc)(f"{exc} [training rows {train_set.n}, events {events}, "
                        f"features {train_set.p}]") from None
    data_hash = sha256_file(args.data)
    snapshot = {"data": args.data, "split": args.split, "seed": seed, "max_iter": args.max_iter,
                "standardize": "non-binary columns, training mean and std (ddof=1)"}
    digest = write_manifest(args.out, "fit-cox", snapshot, {"data": args.data})
    bundle = ModelBundle(model, std, tuple(train.tolist()), tuple(test.tolist()), data_hash,
                         {"fraction": args.split, "seed": seed})
    write_text(args.out, dump_json(stamped(bundle.to_json(), "cox-model", digest)))

    test_set = scaled.subset(test)
    metrics = {
        "c_index_train": safe_c_index(model.risk_score(train_set.features), train_set.times,
                                      train_set.events),
        "c_index_test": safe_c_index(model.risk_score(test_set.features), test_set.times,
                                     test_set.events),
        "n_train": int(train.size), "n_test": int(test.size),
        "coefficients": model.coefficients.tolist(),
        "feature_names": list(model.feature_names),
        "iterations": model.convergence.iterations,
    }
    write_text(sibling(args.out, ".metrics.json"), dump_json(stamped(metrics, "cox-metrics",
                                                                     digest)))
    return 0


class _Context:
    """Training data, black box and explainer shared by explain and montecarlo."""

    def __init__(self, args):
        self.args = args
        self.dataset = read_dataset_csv(args.data)
        self.data_hash = sha256_file(args.data)
        self.inputs = {"data": args.data}
        self.kind = Kind.parse(args.type_fn)
        if args.model:
            self.bundle = load_bundle(args.model)
            self.inputs["model"] = args.model
            if self.bundle.model.p != self.dataset.p:
                raise DataError(f"row dimension mismatch: data has {self.dataset.p} features, "
                                f"model expects {self.bundle.model.p}")
            self.transform = self.bundle.standardizer.transform
            self.train = self.bundle.training_set(self.dataset, self.data_hash)
            self.predict = self.bundle.model
            self.kind = Kind.CUMULATIVE_HAZARD
            self.space = "model"
        else:
            self.bundle = None
            self.transform = lambda X: np.asarray(X, dtype=np.float64)
            self.train = self.dataset
            self.predict = SubprocessModel(args.model_cmd, self.dataset.feature_names,
                                           self.kind, args.timeout)
            self.space = "raw"
        self.seed = resolve_seed(args.seed)
        self.config = ExplainerConfig(num_neighbors=args.num_samples, bandwidth=args.bandwidth,
                                      norm=args.norm, seed=self.seed)
        self.explainer = SurvLimeExplainer(self.train, self.config)

    def row(self, index=None, values=None) -> dict:
        if values is not None:
            raw = np.asarray(parse_vector(values, "--row-values"))
            if raw.size != self.dataset.p:
                raise DataError(f"row dimension mismatch: --row-values has {raw.size} values, "
                                f"data has {self.dataset.p} features")
        else:
            if not 0 <= index < self.dataset.n:
                raise UsageError(f"--row-index {index} out of range for {self.dataset.n} rows")
            raw = self.dataset.features[index]
        return {"index": index, "values": raw.tolist(),
                "explained_values": self.transform(raw).tolist()}

    def snapshot(self) -> dict:
        a = self.args
        return {"data": a.data, "model": a.model, "model_cmd": a.model_cmd,
                "type_fn": self.kind.value, "timeout": a.timeout, "space": self.space,
                "training_rows": self.train.n,
                "explainer": dict(self.config.to_json(), effective_bandwidth=self.explainer.bandwidth)}


def _figure_spec(args, kind, out_path):
    path = args.figure_path or sibling(out_path, ".svg")
    return plots.PlotSpec(kind, with_colour=not args.no_colour, output_path=path,
                          title=args.title)


def cmd_explain(args) -> int:
    if (args.row_index is None) == (args.row_values is None):
        raise UsageError("give exactly one of --row-index or --row-values")
    ctx = _Context(args)
    row = ctx.row(args.row_index, args.row_values)
    snapshot = dict(ctx.snapshot(), row=row)
    digest = write_manifest(args.out, "explain", snapshot, ctx.inputs)
    explanation = ctx.explainer.explain_instance(row["explained_values"], ctx.predict, ctx.kind)
    doc = dict(explanation.to_json(), row=row, space=ctx.space)
    write_text(args.out, dump_json(stamped(doc, "explanation", digest)))
    if args.plot:
        plots.plot_weights(explanation, _figure_spec(args, "bar", args.out))
    return 0


def cmd_montecarlo(args) -> int:
    if args.num_repetitions < 1:
        raise UsageError("--num-repetitions must be >= 1")
    ctx = _Context(args)
    if args.rows == "all-test":
        if ctx.bundle is None or not ctx.bundle.test_rows:
            raise UsageError("--rows all-test needs --model with a recorded test split")
        if ctx.bundle.data_sha256 != ctx.data_hash:
            raise DataError("--rows all-test: data file differs from the one the model was "
                            "fitted on")
        rows = list(ctx.bundle.test_rows)
    else:
        rows = parse_rows(args.rows, ctx.dataset.n)
    X = ctx.transform(ctx.dataset.features[rows])
    snapshot = dict(ctx.snapshot(), rows=rows, num_repetitions=args.num_repetitions,
                    jobs=args.jobs)
    digest = write_manifest(args.out, "montecarlo", snapshot, ctx.inputs)
    results = ctx.explainer.montecarlo_explanation(X, ctx.predict, args.num_repetitions,
                                                   ctx.kind, args.jobs)
    names = list(ctx.train.feature_names)
    doc = {"feature_names": names, "rows": rows, "space": ctx.space,
           "num_repetitions": args.num_repetitions,
           "mean": [r.mean.tolist() for r in results],
           "per_repetition": [r.per_repetition.tolist() for r in results]}
    write_text(args.out, dump_json(stamped(doc, "montecarlo", digest)))
    if args.plot:
        plots.plot_montecarlo_weights(_figure_payload(doc),
                                      _figure_spec(args, "distribution", args.out))
    return 0


def _figure_payload(doc) -> MonteCarloExplanation:
    """One row: its repetitions. Several rows: the distribution of their means."""
    if len(doc["mean"]) == 1:
        values = np.asarray(doc["per_repetition"][0])
    else:
        values = np.asarray(doc["mean"])
    return MonteCarloExplanation(values, tuple(doc["feature_names"]))


class _Loaded:
    def __init__(self, doc):
        self.coefficients = np.asarray(doc["coefficients"], dtype=np.float64)
        self.feature_names = tuple(doc["feature_names"])


def cmd_plot(args) -> int:
    try:
        with open(args.input, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from None
    kind = doc.get("kind")
    path = args.figure_path or sibling(args.input, ".svg")
    spec_args = dict(with_colour=not args.no_colour, output_path=path, title=args.title)
    try:
        if kind == "explanation":
            plots.plot_weights(_Loaded(doc), plots.PlotSpec("bar", **spec_args))
        elif kind == "montecarlo":
            plots.plot_montecarlo_weights(_figure_payload(doc),
                                          plots.PlotSpec("distribution", **spec_args))
        else:
            raise DataError(f"{args.input}: not an explanation or montecarlo result "
                            f"(kind={kind!r})")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SurvLimeError):
            raise
        raise DataError(f"{args.input}: malformed result file: {exc!r}") from None
    return 0


# --- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def _add_explainer_flags(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="Cox model JSON written by fit-cox")
    src.add_argument("--model-cmd", help="external model command speaking the CSV protocol")
    p.add_argument("--data", required=True, help="dataset CSV (features..., time, event)")
    p.add_argument("--num-samples", type=int, default=1000, help="neighbours per explanation")
    p.add_argument("--norm", default="2", help="objective norm: a real k >= 1 or 'inf'")
    p.add_argument("--type-fn", default="cumulative", choices=["cumulative", "survival"],
                   help="what --model-cmd returns")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--timeout", type=float, default=300.0, help="seconds per --model-cmd call")
    p.add_argument("--out", required=True)
    _add_figure_flags(p, with_plot=True)


def _add_figure_flags(p, with_plot=False):
    if with_plot:
        p.add_argument("--plot", action="store_true", help="also write an SVG figure")
    p.add_argument("--figure-path", default=None)
    p.add_argument("--no-colour", action="store_true")
    p.add_argument("--title", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survlime", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic survival dataset")
    p.add_argument("--center", required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--coefficients", required=True)
    p.add_argument("--prob-event", type=float, default=0.9)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--v", type=float, default=2.0)
    p.add_argument("--time-cap", type=float, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-cox", help="fit a Cox model on a train split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", type=float, default=0.9, help="training fraction")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_cox)

    p = sub.add_parser("explain", help="explain one individual")
    _add_explainer_flags(p)
    p.add_argument("--row-index", type=int, default=None)
    p.add_argument("--row-values", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("montecarlo", help="repeated explanations for several individuals")
    _add_explainer_flags(p)
    p.add_argument("--rows", required=True, help="'all-test' or comma-separated row indices")
    p.add_argument("--num-repetitions", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("plot", help="draw the figure for a saved result JSON")
    p.add_argument("--input", required=True)
    _add_figure_flags(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SurvLimeError as exc:
        print(f"survlime {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"survlime {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
