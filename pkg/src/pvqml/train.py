"""Loss, Adam, training loop with best-checkpoint selection, and experiment drivers."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import POWER, ScalerStats, TimeSeriesFrame, WindowedDataset, chronological_split, fit_scaler, kfold_plan, window
from .errors import ConfigurationError, ContractError, ShapeError, TrainingError
from .metrics import MetricsReport, aggregate, compute_metrics
from .models import KINDS, SEQUENCE_KINDS, Model, build_model

log = logging.getLogger(__name__)

# Best values from the hyperparameter search; sequence models use lr 1e-3 / 15 epochs / 96-hour windows.
MODEL_DEFAULTS = {
    "mlp": {"lr": 1e-2, "epochs": 20, "window": 24, "horizon": 1},
    "hqnn": {"lr": 3e-2, "epochs": 20, "window": 24, "horizon": 1},
    "lstm": {"lr": 0.5e-2, "epochs": 60, "window": 24, "horizon": 1},
    "hqlstm": {"lr": 0.52e-2, "epochs": 60, "window": 24, "horizon": 1},
    "seq2seq": {"lr": 1e-3, "epochs": 15, "window": 96, "horizon": 96},
    "hqseq2seq": {"lr": 1e-3, "epochs": 15, "window": 96, "horizon": 96},
}
RECURRENT = ("lstm", "hqlstm", "seq2seq", "hqseq2seq")


@dataclass(frozen=True)
class TrainConfig:
    model: str
    lr: float | None = None
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
    model_dims: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in KINDS:
            raise ConfigurationError(f"unknown model {self.model!r}")
        d = MODEL_DEFAULTS[self.model]
        for key in ("lr", "epochs", "window", "horizon"):
            if getattr(self, key) is None:
                object.__setattr__(self, key, d[key])
        if not self.lr > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigurationError("data fraction must lie in (0, 1]")
        if self.model not in SEQUENCE_KINDS and self.horizon != 1:
            raise ConfigurationError(f"{self.model} forecasts one hour ahead; horizon must be 1")

    @property
    def effective_clip(self):
        return self.clip_norm if self.model in RECURRENT else None

    def build(self, seed=None) -> Model:
        dims = dict(self.model_dims)
        if self.model not in SEQUENCE_KINDS:
            dims.setdefault("window", self.window)
        return build_model(self.model, self.seed if seed is None else seed, **dims)


def mse_loss(pred, target) -> float:
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("empty prediction")
    return float(np.mean((pred - target) ** 2))


def mse_loss_grad(pred, target) -> np.ndarray:
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} vs target {target.shape}")
    return 2.0 * (pred - target) / pred.size


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update, in place on ``params`` (also returned)."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError("Adam: parameter, gradient and moment lengths differ")
    if not np.all(np.isfinite(grads)):
        raise TrainingError(f"non-finite gradient at Adam step {state.t + 1}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def predict(model: Model, ds: WindowedDataset, batch_size=256) -> np.ndarray:
    out = [model.predict(ds.inputs[i:i + batch_size], horizon=ds.horizon) for i in range(0, len(ds), batch_size)]
    return np.concatenate(out, axis=0)


def loss_and_grad(model: Model, inputs, targets, training=False, rng=None):
    """Batch MSE and its gradient w.r.t. the flat parameter vector."""
    with ad.Tape() as tape:
        p = model.registry.tensors()
        out = model.forward(p, inputs, horizon=targets.shape[1], training=training, rng=rng)
        loss = ad.mean_squared_error(out, targets)
    tape.backward(loss)
    return float(loss.values), model.registry.gather_grads(p)


@dataclass
class TrainResult:
    model: Model
    history: list  # (epoch, train_loss, test_loss)
    best_epoch: int
    best_test_loss: float
    stopped_early: bool = False

    def history_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,test_loss\n")
            for e, tr, te in self.history:
                fh.write(f"{e},{tr!r},{te!r}\n")


def train_model(cfg: TrainConfig, train_ds: WindowedDataset, test_ds: WindowedDataset, model: Model | None = None,
                seed: int | None = None) -> TrainResult:
    """Minimise MSE with Adam; return the parameters with the lowest test loss.

    Test loss is monitored directly (no separate validation carve-out).
    """
    seed = cfg.seed if seed is None else seed
    model = model or cfg.build(seed)
    if len(train_ds) < 1 or len(test_ds) < 1:
        raise ContractError("training and test sets must be non-empty")
    rng = np.random.default_rng(seed + 7919)
    flat = model.registry.flat
    state = AdamState.zeros(flat.size)
    best = (math.inf, 0, flat.copy())
    history = []
    since_best = 0
    stopped = False
    clip = cfg.effective_clip
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_ds))
        losses, weights = [], []
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss, grad = loss_and_grad(model, train_ds.inputs[idx], train_ds.targets[idx], training=True, rng=rng)
            if not math.isfinite(loss):
                flat[:] = best[2]
                raise TrainingError(f"loss diverged at epoch {epoch}", checkpoint=best[2].copy())
            if clip:
                norm = float(np.linalg.norm(grad))
                if norm > clip:
                    grad *= clip / norm
            try:
                adam_step(flat, grad, state, cfg.lr)
            except TrainingError as exc:
                flat[:] = best[2]
                raise TrainingError(str(exc), checkpoint=best[2].copy()) from None
            losses.append(loss)
            weights.append(len(idx))
        train_loss = float(np.average(losses, weights=weights))
        test_loss = mse_loss(predict(model, test_ds), test_ds.targets)
        history.append((epoch, train_loss, test_loss))
        log.info("%s epoch %d train %.6f test %.6f", cfg.model, epoch, train_loss, test_loss)
        if test_loss < best[0]:
            best = (test_loss, epoch, flat.copy())
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                stopped = True
                break
    flat[:] = best[2]
    return TrainResult(model, history, best[1], best[0], stopped)


def persistence_forecast(ds: WindowedDataset, lag: int = 24) -> np.ndarray:
    """Repeat the power observed ``lag`` hours before each target hour."""
    if ds.window < lag:
        raise ContractError(f"window {ds.window} shorter than persistence lag {lag}")
    cols = [ds.inputs[:, ds.window - lag + h, POWER] if ds.window - lag + h < ds.window else
            np.full(len(ds), np.nan) for h in range(ds.horizon)]
    return np.column_stack(cols)


# --------------------------------------------------------------------------- experiment drivers

def prepare_split(frame: TimeSeriesFrame, cfg: TrainConfig, boundary=0.8):
    """Chronological split, scaler fit on the training part, then windowing of both parts."""
    train_f, test_f = chronological_split(frame, boundary)
    stats = fit_scaler(train_f)
    train_ds = window(stats.apply(train_f.values), cfg.window, cfg.horizon, cfg.stride)
    test_ds = window(stats.apply(test_f.values), cfg.window, cfg.horizon, cfg.stride)
    return train_ds, test_ds, stats


@dataclass
class FoldResult:
    fold: int
    test_report: MetricsReport | None
    train_report: MetricsReport | None
    result: TrainResult | None
    scaler: ScalerStats | None
    error: str | None = None


@dataclass
class CVResult:
    folds: list
    aggregate: dict
    partial: bool

    @property
    def reports(self):
        return [f.test_report for f in self.folds if f.test_report is not None]


def _run_fold(args):
    cfg, raw_ds, fold = args
    try:
        stats = _fold_scaler(raw_ds, fold.train)
        train = raw_ds.subset(fold.train).scaled(stats)
        test = raw_ds.subset(fold.test).scaled(stats)
        res = train_model(cfg, train, test, seed=cfg.seed + fold.index)
        test_rep = compute_metrics(predict(res.model, test), test.targets)
        train_rep = compute_metrics(predict(res.model, train), train.targets)
        return FoldResult(fold.index, test_rep, train_rep, res, stats)
    except Exception as exc:  # noqa: BLE001 - recorded per fold, remaining folds continue
        log.exception("fold %d failed", fold.index)
        return FoldResult(fold.index, None, None, None, None, f"{type(exc).__name__}: {exc}")


def _fold_scaler(raw_ds: WindowedDataset, train_idx) -> ScalerStats:
    # statistics over every input row touched by the fold's training windows
    x = raw_ds.inputs[np.asarray(train_idx)].reshape(-1, raw_ds.inputs.shape[-1])
    stats = fit_scaler(x)
    t = raw_ds.targets[np.asarray(train_idx)].ravel()
    mins, maxs = stats.mins.copy(), stats.maxs.copy()
    mins[POWER] = min(mins[POWER], t.min())
    maxs[POWER] = max(maxs[POWER], t.max())
    return ScalerStats(mins, maxs)


def cross_validate(cfg: TrainConfig, data, workers: int = 1) -> CVResult:
    """Purged k-fold CV over windows of ``data`` (a cleaned frame or raw windowed dataset)."""
    raw = data if isinstance(data, WindowedDataset) else window(data, cfg.window, cfg.horizon, cfg.stride)
    plan = kfold_plan(len(raw), cfg.folds, cfg.buffer)
    jobs = [(cfg, raw, fold) for fold in plan]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    ok = [r.test_report for r in results if r.test_report is not None]
    agg = aggregate(ok) if ok else {}
    return CVResult(results, agg, partial=len(ok) < len(results))


def reduced_data_experiment(cfgs, train_ds: WindowedDataset, test_ds: WindowedDataset, fractions) -> list[dict]:
    """Train each config on the most recent ``fraction`` of training windows; test set fixed."""
    rows = []
    for cfg in cfgs:
        for frac in fractions:
            if not 0.0 < frac <= 1.0:
                raise ContractError(f"fraction {frac} outside (0, 1]")
            n = int(math.ceil(frac * len(train_ds)))
            if n < min(cfg.batch_size, len(train_ds)):
                raise ContractError(f"fraction {frac} leaves {n} samples, fewer than one batch of {cfg.batch_size}")
            sub = train_ds.subset(np.arange(len(train_ds) - n, len(train_ds)))
            res = train_model(replace(cfg, fraction=frac), sub, test_ds)
            rep = compute_metrics(predict(res.model, test_ds), test_ds.targets)
            rows.append({"model": cfg.model, "fraction": frac, "n_train": n, "best_epoch": res.best_epoch,
                         **{f"test_{k}": v for k, v in rep.to_dict().items() if k in ("mae", "mse", "rmse")}})
    return rows
