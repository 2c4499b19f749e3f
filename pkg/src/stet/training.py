"""Training loops (pretrain, fine-tune), evaluation, noise benchmark, export.

Every random choice derives from the run seed through named RngState
branches keyed by (purpose, epoch, batch, ...), so a run is reproducible
end to end and resuming from a saved state rejoins the exact trajectory.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import RunConfig, build_model_config
from .datasets import (
    generate_synthetic_angle_dataset,
    generate_synthetic_dataset,
    load_dataset,
)
from .exceptions import ConfigurationError, NumericError
from .losses import (
    AsymmetricLossConfig,
    asymmetric_loss,
    cross_entropy_loss,
    masked_mse_loss,
    mse_regression_loss,
    one_hot,
)
from .masking import apply_mask, generate_mask_matrix
from .metrics import MetricsReport, accuracy, avg_curvature, drop_rate, nrmse, pcc, rmse
from .model import (
    ENCODER_PREFIXES,
    ParameterStore,
    encode,
    forward_classify,
    forward_pretrain,
    forward_regress,
    load_checkpoint,
    long_term_decode,
    pool_streams,
    save_checkpoint,
    short_term_decode,
)
from .optim import OPTIMIZER_TAG, AdamW
from .signal import NoiseSpec, fit_normalizers, inject_noise, normalize_recordings, segment_windows
from .tensor import RngState

__all__ = [
    "TrainLogRecord",
    "write_train_log",
    "DataBundle",
    "prepare_data",
    "default_category_map",
    "pretrain_arrays",
    "train_supervised_arrays",
    "predict_probs",
    "predict_classes",
    "predict_angles",
    "run_pretrain",
    "run_finetune",
    "run_noise_bench",
    "export_embeddings",
    "grad_check_suite",
]

CATEGORY_GROUPS = ("single-finger", "multi-finger", "wrist", "rest")


@dataclass
class TrainLogRecord:
    epoch: int
    split: str
    loss: float
    metric: float | None
    seconds: float


def write_train_log(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss", "metric", "seconds"])
        for r in records:
            writer.writerow([r.epoch, r.split, f"{r.loss:.10g}",
                             "" if r.metric is None else f"{r.metric:.10g}", f"{r.seconds:.3f}"])
    return path


def default_category_map(n_classes):
    return {k: CATEGORY_GROUPS[k % len(CATEGORY_GROUPS)] for k in range(n_classes)}


@dataclass
class DataBundle:
    """Windowed, normalized train/test arrays plus bookkeeping."""

    task: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    sensors: int
    steps: int
    n_classes: int | None = None
    n_joints: int | None = None
    category_map: dict | None = None
    normalizers: list = field(default_factory=list)
    split_seed: int = 0


def _load_recordings(cfg):
    data = cfg.data
    if data.source == "file":
        return load_dataset(data.path, data.format)
    syn = data.synthetic
    if syn.kind == "gestures":
        return generate_synthetic_dataset(
            syn.n_classes,
            syn.n_channels,
            syn.steps,
            syn.samples_per_class,
            seed=cfg.seed,
            sample_rate_hz=syn.sample_rate_hz,
            twin_pair=syn.twin_pair,
        )
    return generate_synthetic_angle_dataset(
        syn.n_recordings,
        syn.n_channels,
        syn.n_joints,
        syn.recording_samples,
        seed=cfg.seed,
        sample_rate_hz=syn.sample_rate_hz,
    )


def stratified_split_recordings(recordings, ratio, rng):
    """Per-class recording split at train:test = ratio (plain split for regression)."""
    train_frac = ratio[0] / (ratio[0] + ratio[1])
    if recordings and recordings[0].is_regression:
        order = rng.permutation(len(recordings))
        cut = max(1, min(len(order) - 1, round(len(order) * train_frac)))
        train_idx, test_idx = order[:cut], order[cut:]
        return [recordings[i] for i in train_idx], [recordings[i] for i in test_idx]
    by_class = {}
    for i, rec in enumerate(recordings):
        by_class.setdefault(rec.label, []).append(i)
    train_idx, test_idx = [], []
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        idx = idx[rng.derive("class", int(label)).permutation(len(idx))]
        cut = max(1, min(len(idx) - 1, round(len(idx) * train_frac)))
        train_idx.extend(idx[:cut])
        test_idx.extend(idx[cut:])
    return [recordings[i] for i in sorted(train_idx)], [recordings[i] for i in sorted(test_idx)]


def _window_recordings(recordings, cfg, whole_recordings=False):
    data = cfg.data
    windows = []
    for i, rec in enumerate(recordings):
        if whole_recordings:
            # pre-windowed corpus: every recording is exactly one model input
            window_ms = rec.n_samples / rec.sample_rate_hz * 1000.0
            overlap_ms = 0.0
        else:
            window_ms = data.window_ms
            overlap_ms = (
                window_ms - data.overlap_ms if data.stride_mode == "step" else data.overlap_ms
            )
        windows.extend(segment_windows(rec, window_ms, overlap_ms, source_index=i))
    return windows


def _windows_to_arrays(windows, task):
    X = np.stack([w.values for w in windows])
    if task == "classify":
        y = np.array([int(w.label) for w in windows])
    else:
        y = np.stack([np.asarray(w.label).mean(axis=0) for w in windows])
    return X, y


def prepare_data(cfg):
    """Load or generate recordings, split, normalize on train stats, window."""
    recordings = _load_recordings(cfg)
    split_rng = RngState(cfg.seed).derive("split")
    train_recs, test_recs = stratified_split_recordings(recordings, cfg.data.split, split_rng)

    normalizers = fit_normalizers(
        cfg.normalization.chain, train_recs, mu=cfg.normalization.mu
    )
    train_recs = normalize_recordings(normalizers, train_recs)
    test_recs = normalize_recordings(normalizers, test_recs)

    whole = cfg.data.source == "synthetic" and cfg.data.synthetic.kind == "gestures"
    train_windows = _window_recordings(train_recs, cfg, whole_recordings=whole)
    test_windows = _window_recordings(test_recs, cfg, whole_recordings=whole)
    X_train, y_train = _windows_to_arrays(train_windows, cfg.task)
    X_test, y_test = _windows_to_arrays(test_windows, cfg.task)

    bundle = DataBundle(
        task=cfg.task,
        X_train=X_train,
        y_train=y_train,
        X_test=X_test,
        y_test=y_test,
        sensors=X_train.shape[2],
        steps=X_train.shape[1],
        split_seed=cfg.seed,
    )
    if cfg.task == "classify":
        labels = {int(r.label) for r in recordings}
        bundle.n_classes = max(labels) + 1
        bundle.category_map = (
            {int(k): v for k, v in cfg.data.category_map.items()}
            if cfg.data.category_map
            else default_category_map(bundle.n_classes)
        )
    else:
        bundle.n_joints = y_train.shape[1]
    return bundle


def _minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _abort_diagnostic(params, epoch, batch_index):
    norms = sorted(
        ((float(np.abs(p.data).max()), name) for name, p in params.items()), reverse=True
    )[:3]
    detail = ", ".join(f"{name}={value:.3g}" for value, name in norms)
    return f"non-finite loss at epoch {epoch}, batch {batch_index}; largest |param|: {detail}"


def pretrain_arrays(
    X,
    mcfg,
    mask_ratio,
    mask_mean_length,
    opt_cfg,
    epochs,
    batch_size,
    seed,
    params=None,
    optimizer=None,
    start_epoch=0,
):
    """Masked-reconstruction pretraining over a (n, t, c) window stack.

    A fresh MaskMatrix is drawn per sample per step. Only backbone and
    reconstruction parameters are optimized. Passing ``params``/``optimizer``
    with ``start_epoch`` resumes an interrupted run on the same trajectory.
    """
    rng = RngState(seed).derive("pretrain")
    if params is None:
        params = ParameterStore(mcfg, rng.derive("init"))
    if optimizer is None:
        subset = {
            name: p
            for name, p in params.items()
            if name.startswith(ENCODER_PREFIXES) or name.startswith("recon.")
        }
        optimizer = AdamW(subset, opt_cfg)
    n, t, c = X.shape
    records = []
    for epoch in range(start_epoch, epochs):
        started = time.perf_counter()
        losses = []
        for b, idx in enumerate(_minibatches(n, batch_size, rng.derive("shuffle", epoch))):
            T.tape().reset()
            optimizer.zero_grad()
            masks = np.stack(
                [
                    generate_mask_matrix(
                        t, c, mask_mean_length, mask_ratio, rng.derive("mask", epoch, b, j)
                    ).values
                    for j in range(len(idx))
                ]
            )
            x_masked = X[idx] * masks
            rec = forward_pretrain(
                x_masked, params, mcfg, training=True, rng=rng.derive("dropout", epoch, b)
            )
            loss = masked_mse_loss(X[idx], rec, masks)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(_abort_diagnostic(params, epoch, b))
            T.backward(loss)
            optimizer.step()
            losses.append(value)
        params.check_finite()
        records.append(
            TrainLogRecord(epoch, "pretrain", float(np.mean(losses)), None, time.perf_counter() - started)
        )
    T.tape().reset()
    return params, optimizer, records


def predict_probs(params, mcfg, X, batch_size=64):
    out = []
    with T.no_grad():
        for i in range(0, len(X), batch_size):
            out.append(forward_classify(X[i : i + batch_size], params, mcfg, training=False).data)
    return np.concatenate(out) if out else np.zeros((0, mcfg.n_classes))


def predict_classes(params, mcfg, X, batch_size=64):
    return predict_probs(params, mcfg, X, batch_size).argmax(axis=1)


def predict_angles(params, mcfg, X, target_mean=0.0, target_std=1.0, batch_size=64):
    out = []
    with T.no_grad():
        for i in range(0, len(X), batch_size):
            out.append(forward_regress(X[i : i + batch_size], params, mcfg, training=False).data)
    raw = np.concatenate(out) if out else np.zeros((0, mcfg.n_joints))
    return raw * target_std + target_mean


def train_supervised_arrays(
    task,
    X_train,
    y_train,
    mcfg,
    loss_cfg,
    opt_cfg,
    epochs,
    batch_size,
    seed,
    X_val=None,
    y_val=None,
    init_store=None,
    eval_batch_size=64,
):
    """Fine-tune the full network; returns best-by-validation parameters.

    ``init_store`` supplies a pretrained backbone to transfer. Regression
    targets are standardized internally; the scaler rides along in extras.
    """
    rng = RngState(seed).derive("finetune")
    params = ParameterStore(mcfg, rng.derive("init"))
    if init_store is not None:
        params.transfer_encoder_from(init_store)
    optimizer = AdamW(params, opt_cfg)

    extras = {}
    if task == "regress":
        target_mean = y_train.mean(axis=0)
        target_std = y_train.std(axis=0)
        target_std[target_std == 0] = 1.0
        extras = {"target_mean": target_mean, "target_std": target_std}
        y_fit = (y_train - target_mean) / target_std
        asl_cfg = None
    else:
        y_fit = y_train
        asl_cfg = AsymmetricLossConfig(
            gamma_plus=loss_cfg.gamma_plus,
            gamma_minus=loss_cfg.gamma_minus,
            margin=loss_cfg.margin,
        )

    n = len(X_train)
    records = []
    best = {"metric": -np.inf, "state": params.state(), "epoch": -1}
    for epoch in range(epochs):
        started = time.perf_counter()
        losses = []
        for b, idx in enumerate(_minibatches(n, batch_size, rng.derive("shuffle", epoch))):
            T.tape().reset()
            optimizer.zero_grad()
            drop_rng = rng.derive("dropout", epoch, b)
            if task == "classify":
                if loss_cfg.kind == "cross-entropy":
                    logits = forward_classify(
                        X_train[idx], params, mcfg, training=True, rng=drop_rng, return_probs=False
                    )
                    loss = cross_entropy_loss(y_fit[idx], logits)
                else:
                    probs = forward_classify(X_train[idx], params, mcfg, training=True, rng=drop_rng)
                    loss = asymmetric_loss(one_hot(y_fit[idx], mcfg.n_classes), probs, asl_cfg)
            else:
                out = forward_regress(X_train[idx], params, mcfg, training=True, rng=drop_rng)
                loss = mse_regression_loss(y_fit[idx], out)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(_abort_diagnostic(params, epoch, b))
            T.backward(loss)
            optimizer.step()
            losses.append(value)
        params.check_finite()
        seconds = time.perf_counter() - started
        records.append(TrainLogRecord(epoch, "train", float(np.mean(losses)), None, seconds))

        if X_val is not None and len(X_val):
            started = time.perf_counter()
            if task == "classify":
                preds = predict_classes(params, mcfg, X_val, eval_batch_size)
                metric = float((preds == y_val).mean())
            else:
                preds = predict_angles(
                    params, mcfg, X_val, extras["target_mean"], extras["target_std"], eval_batch_size
                )
                metric = -float(((preds - y_val) ** 2).mean())
            records.append(
                TrainLogRecord(epoch, "val", float("nan"), metric, time.perf_counter() - started)
            )
            if metric > best["metric"]:
                best = {"metric": metric, "state": params.state(), "epoch": epoch}

    if X_val is not None and len(X_val) and best["epoch"] >= 0:
        params.load_state(best["state"])
    T.tape().reset()
    return params, extras, records


def _provenance(cfg, init, extra=None):
    out = {
        "seed": cfg.seed,
        "split": list(cfg.data.split),
        "split_seed": cfg.seed,
        "optimizer": OPTIMIZER_TAG,
        "loss": cfg.loss.kind,
        "streams": cfg.model.streams,
        "init": init,
    }
    if extra:
        out.update(extra)
    return out


def run_pretrain(cfg, bundle=None, out_dir=None, resume_from=None):
    """Masked pretraining per config; writes checkpoint + loss curve."""
    bundle = bundle or prepare_data(cfg)
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mcfg = build_model_config(cfg, bundle.sensors, bundle.steps)

    params = optimizer = None
    start_epoch = 0
    if resume_from is not None:
        params, _, extras = load_checkpoint(resume_from, expected_config=mcfg)
        subset = {
            name: p
            for name, p in params.items()
            if name.startswith(ENCODER_PREFIXES) or name.startswith("recon.")
        }
        optimizer = AdamW(subset, cfg.optimizer)
        optimizer.load_state(
            {k[len("opt."):]: v for k, v in extras.items() if k.startswith("opt.")}
        )
        start_epoch = int(extras["epoch"][0])

    params, optimizer, records = pretrain_arrays(
        bundle.X_train,
        mcfg,
        cfg.mask.ratio,
        cfg.mask.mean_length,
        cfg.optimizer,
        cfg.training.pretrain_epochs,
        cfg.training.batch_size,
        cfg.seed,
        params=params,
        optimizer=optimizer,
        start_epoch=start_epoch,
    )
    extras = {"epoch": np.array([float(cfg.training.pretrain_epochs)])}
    for key, value in optimizer.state().items():
        extras[f"opt.{key}"] = value
    ckpt = save_checkpoint(out_dir / "pretrain.ckpt", params, extras=extras)
    write_train_log(records, out_dir / "pretrain_log.csv")
    return ckpt


def run_finetune(cfg, bundle=None, out_dir=None, init="scratch", pretrain_checkpoint=None):
    """Supervised training with per-epoch held-out evaluation; returns
    (checkpoint path, MetricsReport)."""
    bundle = bundle or prepare_data(cfg)
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mcfg = build_model_config(
        cfg, bundle.sensors, bundle.steps, n_classes=bundle.n_classes, n_joints=bundle.n_joints
    )

    init_store = None
    if init == "pretrained":
        if pretrain_checkpoint is None:
            raise ConfigurationError("init='pretrained' requires a pretrain checkpoint")
        init_store, _, _ = load_checkpoint(pretrain_checkpoint)

    params, extras, records = train_supervised_arrays(
        cfg.task,
        bundle.X_train,
        bundle.y_train,
        mcfg,
        cfg.loss,
        cfg.optimizer,
        cfg.training.finetune_epochs,
        cfg.training.batch_size,
        cfg.seed,
        X_val=bundle.X_test,
        y_val=bundle.y_test,
        init_store=init_store,
        eval_batch_size=cfg.training.eval_batch_size,
    )

    if cfg.task == "classify":
        preds = predict_classes(params, mcfg, bundle.X_test, cfg.training.eval_batch_size)
        acc = accuracy(preds, bundle.y_test, bundle.category_map)
        report = MetricsReport(
            task="classify",
            overall_accuracy=acc["overall"],
            category_accuracy={k: v for k, v in acc.items() if k != "overall"},
            std_axis="seeds",
            provenance=_provenance(cfg, init),
        )
    else:
        preds = predict_angles(
            params,
            mcfg,
            bundle.X_test,
            extras["target_mean"],
            extras["target_std"],
            cfg.training.eval_batch_size,
        )
        report = MetricsReport(
            task="regress",
            pcc=pcc(bundle.y_test, preds),
            rmse=rmse(bundle.y_test, preds),
            nrmse=nrmse(bundle.y_test, preds),
            kappa=avg_curvature(preds),
            kappa_reference=avg_curvature(bundle.y_test),
            provenance=_provenance(cfg, init),
        )
    report.validate()
    ckpt = save_checkpoint(out_dir / "model.ckpt", params, extras=extras)
    write_train_log(records, out_dir / "train_log.csv")
    report.save(out_dir / "report.json")
    return ckpt, report


def _noise_grid(cfg):
    grid = []
    for mode in ("additive-gaussian", "multiplicative-gaussian"):
        for sigma in (0.0, *cfg.noise.sigmas):
            grid.append((mode, float(sigma)))
    for p in (0.0, *cfg.noise.drop_probs):
        grid.append(("signal-loss", float(p)))
    return grid


def run_noise_bench(cfg, checkpoint, bundle=None, out_dir=None):
    """Clean vs. perturbed test accuracy per (mode, intensity); never retrains."""
    bundle = bundle or prepare_data(cfg)
    if bundle.task != "classify":
        raise ConfigurationError("the noise benchmark is defined for classification runs")
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mcfg = build_model_config(
        cfg, bundle.sensors, bundle.steps, n_classes=bundle.n_classes, n_joints=bundle.n_joints
    )
    params, _, _ = load_checkpoint(checkpoint, expected_config=mcfg)

    preds = predict_classes(params, mcfg, bundle.X_test, cfg.training.eval_batch_size)
    acc_clean = float((preds == bundle.y_test).mean())
    rng = RngState(cfg.seed).derive("noise-bench")
    table = []
    for mode, intensity in _noise_grid(cfg):
        if intensity == 0.0:
            acc_noise = acc_clean
        else:
            cell_rng = rng.derive(mode, f"{intensity:.6g}")
            seeds = cell_rng.integers(0, 2**62, size=len(bundle.X_test))
            noisy = np.stack(
                [
                    inject_noise(x, NoiseSpec(mode=mode, intensity=intensity, seed=int(s)))
                    for x, s in zip(bundle.X_test, seeds)
                ]
            )
            noisy_preds = predict_classes(params, mcfg, noisy, cfg.training.eval_batch_size)
            acc_noise = float((noisy_preds == bundle.y_test).mean())
        table.append(
            {
                "mode": mode,
                "intensity": intensity,
                "accuracy": acc_noise,
                "drop_rate": drop_rate(acc_clean, acc_noise) if acc_clean else 0.0,
            }
        )

    report = MetricsReport(
        task="classify",
        overall_accuracy=acc_clean,
        noise_table=table,
        provenance=_provenance(cfg, "checkpoint", {"checkpoint": str(checkpoint)}),
    )
    report.validate()
    report.save(out_dir / "noise_report.json")
    report.save_noise_csv(out_dir / "noise_table.csv")
    return report


def export_embeddings(cfg, checkpoint, bundle=None, split="test", out_dir=None, batch_size=64):
    """Write long/short/fused embedding matrices with labels as CSV files.

    Long and short embeddings are flattened (N, t*h); the fused embedding is
    exported after temporal pooling, before the task head (N, 2h).
    """
    bundle = bundle or prepare_data(cfg)
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mcfg = build_model_config(
        cfg, bundle.sensors, bundle.steps, n_classes=bundle.n_classes, n_joints=bundle.n_joints
    )
    if mcfg.streams != "fused":
        raise ConfigurationError("embedding export requires a fused-stream model")
    params, _, _ = load_checkpoint(checkpoint, expected_config=mcfg)

    X = bundle.X_train if split == "train" else bundle.X_test
    y = bundle.y_train if split == "train" else bundle.y_test
    longs, shorts, fused = [], [], []
    with T.no_grad():
        for i in range(0, len(X), batch_size):
            h_enc = encode(X[i : i + batch_size], params, mcfg, training=False)
            h_long = long_term_decode(h_enc, params, mcfg, training=False)
            h_short = short_term_decode(h_enc, params, mcfg, training=False)
            pooled = pool_streams([h_long, h_short], params)
            longs.append(h_long.data.reshape(len(h_long.data), -1))
            shorts.append(h_short.data.reshape(len(h_short.data), -1))
            fused.append(pooled.data)

    paths = {}
    for name, blocks in (("long", longs), ("short", shorts), ("fused", fused)):
        matrix = np.concatenate(blocks) if blocks else np.zeros((0, 0))
        path = out_dir / f"embeddings_{name}_{split}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label"] + [f"dim_{j}" for j in range(matrix.shape[1])])
            for label, row in zip(y, matrix):
                writer.writerow([label] + [f"{v:.12g}" for v in row])
        paths[name] = path
    return paths


def grad_check_suite(seed=0, rel_tol=1e-3, max_entries_per_param=6):
    """Finite-difference checks over every layer type plus the full network.

    Returns {check name: GradCheckReport}; the full-model entry differentiates
    the asymmetric classification loss of a one-sample forward pass through
    encoder, both decoders, fusion, and head (t=16, c=4, h=8, d=2, windows
    5 and 3).
    """
    from .model import ModelConfig, attention_block
    from .tensor import Tensor, finite_diff_check

    rng = RngState(seed)
    reports = {}

    a = Tensor(rng.derive("a").normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.derive("b").normal(size=(4, 2)), requires_grad=True)
    reports["matmul"] = finite_diff_check(
        lambda: T.tsum(T.matmul(a, b)), {"a": a, "b": b}, rel_tol
    )

    x = Tensor(rng.derive("softmax").normal(size=(4, 6)), requires_grad=True)
    w = rng.derive("softmax-w").normal(size=(4, 6))
    reports["softmax"] = finite_diff_check(
        lambda: T.tsum(T.mul(T.softmax_lastdim(x), w)), {"x": x}, rel_tol
    )

    xn = Tensor(rng.derive("ln").normal(size=(5, 8)), requires_grad=True)
    gamma = Tensor(np.ones(8), requires_grad=True)
    beta = Tensor(np.zeros(8), requires_grad=True)
    reports["layer_norm"] = finite_diff_check(
        lambda: T.tsum(T.mul(T.layer_norm(xn, gamma, beta), T.layer_norm(xn, gamma, beta))),
        {"x": xn, "gamma": gamma, "beta": beta},
        rel_tol,
    )

    xu = Tensor(rng.derive("unfold").normal(size=(7, 3)), requires_grad=True)
    wu = rng.derive("unfold-w").normal(size=(7, 5, 3))
    reports["unfold_time"] = finite_diff_check(
        lambda: T.tsum(T.mul(T.unfold_time(xu, 5)[0], wu)), {"x": xu}, rel_tol
    )

    mcfg = ModelConfig(
        sensors=4,
        steps=16,
        hidden=8,
        encoder_layers=2,
        heads=2,
        long_layers=2,
        short_layers=2,
        short_windows=(5, 3),
        n_classes=3,
        dropout=0.0,
    )
    params = ParameterStore(mcfg, rng.derive("model-init"))
    xa = Tensor(rng.derive("attn-x").normal(size=(1, 16, 8)))
    for name, window in (("attention_full", None), ("attention_windowed", 5)):
        prefix = "long.0" if window is None else "short.0"
        layer_params = {n: params[n] for n in params.names() if n.startswith(prefix + ".")}

        def f(window=window, prefix=prefix):
            out = attention_block(xa, params, prefix, mcfg, window=window)
            return T.tsum(T.mul(out, out))

        reports[name] = finite_diff_check(f, layer_params, rel_tol, max_entries_per_param=max_entries_per_param)

    probs = Tensor(rng.derive("asl").uniform(0.15, 0.9, size=(4, 3)), requires_grad=True)
    y_cls = one_hot(rng.derive("asl-y").integers(0, 3, size=4), 3)
    asl = AsymmetricLossConfig(gamma_plus=1.0, gamma_minus=2.0, margin=0.05)
    reports["asymmetric_loss"] = finite_diff_check(
        lambda: asymmetric_loss(y_cls, probs, asl), {"probs": probs}, rel_tol
    )

    logits = Tensor(rng.derive("ce").normal(size=(4, 3)), requires_grad=True)
    labels = rng.derive("ce-y").integers(0, 3, size=4)
    reports["cross_entropy"] = finite_diff_check(
        lambda: cross_entropy_loss(labels, logits), {"logits": logits}, rel_tol
    )

    x_true = rng.derive("mse-x").normal(size=(6, 4))
    x_rec = Tensor(rng.derive("mse-r").normal(size=(6, 4)), requires_grad=True)
    mask = rng.derive("mse-m").uniform(size=(6, 4)) > 0.4
    mask[0, 0] = False
    reports["masked_mse"] = finite_diff_check(
        lambda: masked_mse_loss(x_true, x_rec, mask), {"x_rec": x_rec}, rel_tol
    )

    x_in = rng.derive("full-x").normal(size=(1, 16, 4))
    y_full = one_hot(np.array([1]), 3)

    def full_model_loss():
        p = forward_classify(x_in, params, mcfg, training=False)
        return asymmetric_loss(y_full, p, asl)

    reports["full_model"] = finite_diff_check(
        full_model_loss,
        dict(params.items()),
        rel_tol,
        max_entries_per_param=max_entries_per_param,
        rng=rng.derive("full-sample"),
    )
    return reports
