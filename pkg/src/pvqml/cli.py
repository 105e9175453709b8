"""Command-line interface: ``pvqml {preprocess,train,forecast,evaluate,analyze,synth}``.

Exit codes: 0 success, 1 runtime failure, 2 I/O or usage error, 3 format/version error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (circuit_family, fim_eigenspectrum, fim_estimate, fourier_spectrum, write_eigenvalues_csv,
                       write_rank_curve_csv, write_spectrum_csv)
from .data import (TimeSeriesFrame, clean, fit_scaler, kfold_plan, load_csv, synth_generate, window)
from .errors import (CleaningError, ConfigurationError, ContractError, FormatError, ParseError, PVQMLError,
                     SchemaError, ShapeError, TrainingError)
from .layers import QDIConfig, VVRQConfig
from .metrics import compute_metrics
from .models import KINDS
from .plots import bar_svg, line_svg
from .serialize import load_model, save_model
from .train import TrainConfig, cross_validate, persistence_forecast, predict, prepare_split, reduced_data_experiment, train_model

log = logging.getLogger("pvqml")

EXIT_OK, EXIT_RUNTIME, EXIT_IO, EXIT_FORMAT = 0, 1, 2, 3


class UsageError(PVQMLError):
    pass


# --------------------------------------------------------------------------- run configuration

@dataclass
class RunConfig:
    """Flat ``key = value`` run configuration; unset keys take the model's best-known values."""

    model: str = "hqlstm"
    learning_rate: float | None = None
    epochs: int | None = None
    batch_size: int = 32
    patience: int | None = None
    folds: int = 5
    buffer: int = 24
    seed: int = 0
    fraction: float = 1.0
    window: int | None = None
    horizon: int | None = None
    stride: int = 1
    clip_norm: float | None = 10.0
    workers: int = 1
    data: str | None = None
    out: str | None = None
    # architecture (Table 1 names)
    neurons_first_layer: int | None = None
    neurons_second_layer: int | None = None
    neurons_third_layer: int | None = None
    dropout: float | None = None
    qubits: int | None = None
    variational_layers: int | None = None
    quantum_layers: int | None = None
    embedding: str | None = None
    measurement: str | None = None
    variational_part: str | None = None

    @classmethod
    def parse(cls, text: str, source="<config>") -> "RunConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = (s.strip() for s in line.partition("="))
            if not sep or not key:
                raise ParseError(f"{source}: expected 'key = value'", lineno)
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigurationError(f"{source} line {lineno}: unknown key {key!r}")
            values[key] = _coerce(val, types[key], key, lineno, source)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.parse(fh.read(), str(path))

    def dump(self) -> str:
        return "".join(f"{f.name} = {'none' if getattr(self, f.name) is None else getattr(self, f.name)}\n"
                       for f in dataclasses.fields(self))

    def model_dims(self) -> dict:
        m, dims = self.model, {}
        if m == "mlp":
            hidden = [self.neurons_first_layer, self.neurons_second_layer, self.neurons_third_layer]
            if any(h is not None for h in hidden):
                dims["hidden"] = [d if h is None else h for h, d in zip(hidden, (32, 3, 3))]
        elif m == "hqnn":
            _put(dims, hidden=self.neurons_second_layer, qubits=self.qubits, depth=self.variational_layers,
                 embedding=_axis(self.embedding), measurement=_axis(self.measurement),
                 entanglement={"strongly": "strong"}.get(self.variational_part, self.variational_part))
        elif m in ("lstm", "hqlstm"):
            _put(dims, hidden=self.neurons_second_layer, dropout=self.dropout)
            if m == "hqlstm":
                if self.variational_layers not in (None, 1):
                    raise ConfigurationError("HQLSTM supports one variational layer per QDI block")
                _put(dims, qubits=self.qubits, qdi_depth=self.quantum_layers)
        else:
            _put(dims, hidden=self.neurons_second_layer)
            if m == "hqseq2seq":
                _put(dims, qubits=self.qubits)
        return dims

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.model, lr=self.learning_rate, epochs=self.epochs, batch_size=self.batch_size,
                           patience=self.patience, folds=self.folds, buffer=self.buffer, seed=self.seed,
                           fraction=self.fraction, window=self.window, horizon=self.horizon, stride=self.stride,
                           clip_norm=self.clip_norm, model_dims=self.model_dims())


def _put(d, **kw):
    d.update({k: v for k, v in kw.items() if v is not None})


def _axis(v):
    return None if v is None else v.upper().removeprefix("R")


def _coerce(val, typ, key, lineno, source):
    if val.lower() in ("none", "null", ""):
        if "None" not in str(typ):
            raise ConfigurationError(f"{source} line {lineno}: {key} cannot be empty")
        return None
    base = str(typ).split("|")[0].strip()
    try:
        return {"int": int, "float": float}.get(base, str)(val)
    except ValueError:
        raise ConfigurationError(f"{source} line {lineno}: {key} expects {base}, got {val!r}") from None


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k, None) for k in ("model", "folds", "fraction", "workers", "epochs", "data", "out")}
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if os.environ.get("PVQML_SEED"):
        cfg.seed = int(os.environ["PVQML_SEED"])
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_clip", False):
        cfg.clip_norm = None
    return cfg


# --------------------------------------------------------------------------- commands

def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _nan_to_null(d):
    if isinstance(d, dict):
        return {k: _nan_to_null(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_nan_to_null(v) for v in d]
    if isinstance(d, float) and d != d:
        return None
    return d


def cmd_preprocess(args):
    raw = load_csv(args.input)
    try:
        frame, report = clean(raw, with_report=True)
    except CleaningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for ts in exc.timestamps:
            print(ts, file=sys.stderr)
        return EXIT_RUNTIME
    frame.to_csv(args.output)
    summary = report.to_dict()
    if args.report:
        _write_json(args.report, summary)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _load_clean(path) -> TimeSeriesFrame:
    frame = load_csv(path)
    return frame if frame.is_hourly() and not np.isnan(frame.values).any() else clean(frame)


def cmd_train(args):
    rc = resolve_config(args)
    if not rc.data:
        raise UsageError("--data is required (or set 'data' in the config)")
    out = Path(rc.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(rc.dump())
    cfg = rc.train_config()
    frame = _load_clean(rc.data)
    if rc.fraction < 1.0 or rc.folds < 2:
        return _train_split(cfg, rc, frame, out, args.plots)
    raw = window(frame, cfg.window, cfg.horizon, cfg.stride)
    kfold_plan(len(raw), cfg.folds, cfg.buffer).write_json(out / "folds.json")
    cv = cross_validate(cfg, raw, workers=rc.workers)
    folds = []
    for f in cv.folds:
        entry = {"fold": f.fold, "error": f.error}
        if f.result is not None:
            save_model(out / f"fold{f.fold}.model.json", f.result.model, f.scaler,
                       {"fold": f.fold, "best_epoch": f.result.best_epoch, "seed": cfg.seed + f.fold})
            f.result.history_csv(out / f"fold{f.fold}.history.csv")
            if args.plots:
                _history_svg(f.result.history, out / f"fold{f.fold}.history.svg", f"{cfg.model} fold {f.fold}")
            entry.update(best_epoch=f.result.best_epoch, test=f.test_report.to_dict(), train=f.train_report.to_dict())
        folds.append(entry)
    first = next((f.result.model for f in cv.folds if f.result is not None), None) or cfg.build()
    doc = {"model": cfg.model, "total_params": first.registry.size, "descriptor": first.descriptor.to_dict(),
           "folds": folds, "aggregate": cv.aggregate, "partial": cv.partial}
    _write_json(out / "metrics.json", _nan_to_null(doc))
    print(json.dumps(_nan_to_null({"model": cfg.model, "total_params": first.registry.size,
                                   "aggregate": cv.aggregate, "partial": cv.partial}), indent=2))
    if cv.partial:
        print("error: some folds failed; partial results kept", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _train_split(cfg, rc, frame, out, plots):
    train_ds, test_ds, stats = prepare_split(frame, cfg)
    if rc.fraction < 1.0:
        rows = reduced_data_experiment([cfg], train_ds, test_ds, [rc.fraction])
        n = rows[0]["n_train"]
        train_ds = train_ds.subset(np.arange(len(train_ds) - n, len(train_ds)))
    res = train_model(cfg, train_ds, test_ds)
    save_model(out / "model.json", res.model, stats, {"fraction": rc.fraction, "best_epoch": res.best_epoch})
    res.history_csv(out / "history.csv")
    if plots:
        _history_svg(res.history, out / "history.svg", cfg.model)
    test = compute_metrics(predict(res.model, test_ds), test_ds.targets)
    doc = {"model": cfg.model, "total_params": res.model.registry.size, "fraction": rc.fraction,
           "n_train": len(train_ds), "n_test": len(test_ds), "best_epoch": res.best_epoch, "test": test.to_dict()}
    if cfg.horizon == 1 and cfg.window >= 24:
        doc["persistence"] = compute_metrics(persistence_forecast(test_ds), test_ds.targets).to_dict()
    _write_json(out / "metrics.json", _nan_to_null(doc))
    with open(out / "reduced.csv", "w") as fh:
        fh.write("model,fraction,n_train,test_mse,test_rmse,test_mae\n")
        fh.write(f"{cfg.model},{rc.fraction},{len(train_ds)},{test.mse!r},{test.rmse!r},{test.mae!r}\n")
    print(json.dumps(_nan_to_null(doc), indent=2))
    return EXIT_OK


def _history_svg(history, path, title):
    epochs = [h[0] for h in history]
    line_svg(path, epochs, {"train": [h[1] for h in history], "test": [h[2] for h in history]},
             "epoch", "MSE", title)


def cmd_forecast(args):
    model, scaler, _ = load_model(args.model_file)
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    if not model.is_sequence and args.horizon > 1:
        raise UsageError(f"{model.kind} is an hour-ahead model; horizon > 1 needs seq2seq or hqseq2seq")
    hist = load_csv(args.history)
    values = hist.values if scaler is None else scaler.apply(hist.values)
    if np.isnan(values).any():
        raise ContractError("history contains missing values; run preprocess first")
    if model.is_sequence:
        scaled = model.predict(values[None], horizon=args.horizon)[0]
    else:
        W = model.dims["window"]
        if len(values) < W:
            raise ContractError(f"history has {len(values)} rows, model needs {W}")
        scaled = model.predict(values[None, -W:])[0]
    power = scaled if scaler is None else scaler.invert_power(scaled)
    if args.clamp:
        power = np.maximum(power, 0.0)
    stamps = hist.timestamps[-1] + np.arange(1, args.horizon + 1) * np.timedelta64(1, "h")
    with open(args.out, "w") as fh:
        fh.write("timestamp,P\n")
        for t, p in zip(stamps, power):
            fh.write(f"{np.datetime_as_string(t, unit='m')},{float(p)!r}\n")
    print(f"wrote {len(power)} rows to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    model, scaler, _ = load_model(args.model_file)
    frame = _load_clean(args.data)
    stats = scaler or fit_scaler(frame)
    horizon = args.horizon or (1 if not model.is_sequence else 96)
    W = model.dims.get("window", args.window)
    ds = window(stats.apply(frame.values), W, horizon)
    pred = predict(model, ds)
    doc = {"model": model.kind, "n": len(ds), "metrics": compute_metrics(pred, ds.targets).to_dict()}
    if not model.is_sequence and W >= 24:
        doc["persistence"] = compute_metrics(persistence_forecast(ds), ds.targets).to_dict()
    doc = _nan_to_null(doc)
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _parse_depths(text):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_analyze(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "fim":
        default = "1..7" if args.circuit == "vvrq" else "1..3"
        depths = _parse_depths(args.depths or default)
        overrides = {"q": args.qubits} if args.qubits else {}
        family = circuit_family(args.circuit, **overrides)
        curve, spectra = [], {}
        for d in depths:
            res = fim_estimate(family(d), args.theta_draws, args.x_draws, args.seed)
            curve.append((d, res.rank))
            write_eigenvalues_csv(res, out / f"eigenvalues_d{d}.csv")
            np.savetxt(out / f"mean_fim_d{d}.csv", res.matrix, delimiter=",")
            hist = fim_eigenspectrum(res)
            spectra[d] = {"near_zero_fraction": hist.near_zero_fraction, "mass": hist.mass.tolist()}
        write_rank_curve_csv(curve, out / "rank_curve.csv")
        if args.plots:
            line_svg(out / "rank_curve.svg", depths, {"rank": [r for _, r in curve]}, "depth", "FIM rank", args.circuit)
        summary = {"circuit": args.circuit, "rank_curve": curve, "eigenspectra": spectra}
    else:
        if args.circuit == "qdi":
            cfg = QDIConfig(args.qubits or 4, args.depth or 4, readout="scalar")
            dims = _parse_depths(args.dims) if args.dims else list(range(cfg.q))
        else:
            cfg = VVRQConfig(args.qubits or 4, args.depth or 2)
            dims = _parse_depths(args.dims) if args.dims else list(range(cfg.q))
        spec = fourier_spectrum(cfg.circuit(), cfg.observables()[0], dims, args.theta_draws, args.threshold, args.seed)
        write_spectrum_csv(spec, out / "spectrum.csv")
        summary = {"circuit": args.circuit, "dims": list(spec.dims), "degrees": list(spec.degrees),
                   "grid_size": spec.grid_size, "n_components": spec.n_components,
                   "nonzero": spec.nonzero_count, "nonzero_fraction": spec.nonzero_fraction}
        if args.plots:
            bar_svg(out / "spectrum_std.svg", range(spec.grid_size), spec.std_real.ravel(), "std Re c", args.circuit)
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2, default=_jsonable))
    return EXIT_OK


def cmd_synth(args):
    frame = synth_generate(args.days, args.seed)
    frame.to_csv(args.out)
    print(f"wrote {len(frame)} hourly rows to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvqml", description="Hybrid quantum-classical PV power forecasting")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", help="clean a raw CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--report", help="also write the cleaning report as JSON")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="cross-validated or reduced-data training")
    s.add_argument("--model", choices=KINDS)
    s.add_argument("--config")
    s.add_argument("--data")
    s.add_argument("--folds", type=int, help="k >= 2 for purged k-fold, 1 for one chronological 80/20 split")
    s.add_argument("--out")
    s.add_argument("--fraction", type=float, help="train on the most recent fraction of the training split")
    s.add_argument("--workers", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--no-clip", action="store_true", help="disable gradient clipping")
    s.add_argument("--plots", action="store_true", help="also write SVG loss curves")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("forecast", help="forecast from a history CSV")
    s.add_argument("--model-file", required=True)
    s.add_argument("--history", required=True)
    s.add_argument("--horizon", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--clamp", action="store_true", help="clip negative power to zero")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("evaluate", help="six-metric report of a model on a dataset")
    s.add_argument("--model-file", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--horizon", type=int)
    s.add_argument("--window", type=int, default=96, help="history length for sequence models")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("analyze", help="Fisher information or Fourier diagnostics of a circuit")
    s.add_argument("what", choices=("fim", "fourier"))
    s.add_argument("--circuit", required=True, choices=("vvrq", "qdi"))
    s.add_argument("--depths", help="e.g. 1..7 or 1,2,3 (fim)")
    s.add_argument("--depth", type=int, help="circuit depth (fourier)")
    s.add_argument("--qubits", type=int)
    s.add_argument("--dims", help="feature slots to scan (fourier), e.g. 0..3")
    s.add_argument("--theta-draws", type=int, default=20)
    s.add_argument("--x-draws", type=int, default=50)
    s.add_argument("--threshold", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="analysis")
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="write a synthetic PV-like series")
    s.add_argument("--days", type=int, default=60)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FormatError, ParseError, SchemaError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (OSError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, ContractError, ShapeError, PVQMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
