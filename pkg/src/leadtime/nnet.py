"""The trainable lead-time predictor and its gradients.

Architecture: per-frame audio features feed a stacked LSTM; when word
embeddings are configured they are concatenated with the top LSTM state
before a linear head. The head emits either Gaussian-mixture parameters
(mean / scale / weight per component) or a histogram over lead-time buckets.
Everything is plain numpy with hand-written reverse-mode gradients through
time, which keeps training bit-reproducible for a fixed seed.

Feature letters: W = acoustic embeddings, G = word embeddings, R = RMS
energy, A = pitch + fundamental frequency. Audio streams are concatenated in
the fixed order W, R, A. For word-only models (G alone) the word stream
doubles as the LSTM input so the model keeps temporal context.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError

FEATURE_LETTERS = ("W", "G", "R", "A")
AUDIO_ORDER = ("W", "R", "A")
SIGMA_FLOOR = 1e-3

CKPT_MAGIC = b"ILCK"
CKPT_VERSION = 1


def normalize_feature_set(letters) -> tuple[str, ...]:
    """Canonicalize a feature-set spec ("RGA", ["A","R"]...) to W,G,R,A order."""
    if isinstance(letters, str):
        letters = list(letters)
    seen = set()
    for l in letters:
        if l not in FEATURE_LETTERS:
            raise ConfigError(f"unknown feature letter '{l}' "
                              f"(expected subset of {''.join(FEATURE_LETTERS)})")
        seen.add(l)
    if not seen:
        raise ConfigError("feature set must be non-empty")
    return tuple(l for l in FEATURE_LETTERS if l in seen)


@dataclass(frozen=True)
class ModelConfig:
    feature_set: tuple[str, ...]
    hidden: int = 128
    lstm_layers: int = 2
    n_components: int = 15  # mixture size T
    head: str = "gmm"  # "gmm" | "heatmap"
    dropout: float = 0.1
    delta_max: float = 2.0
    r: int = 16  # buckets per second (heatmap resolution)
    point_estimate: str = "mixture_mean"  # or "top_component"

    def __post_init__(self):
        object.__setattr__(self, "feature_set",
                           normalize_feature_set(self.feature_set))
        if self.hidden < 1 or self.lstm_layers < 1 or self.n_components < 1:
            raise ConfigError("hidden, lstm_layers and n_components must be >= 1")
        if self.head not in ("gmm", "heatmap"):
            raise ConfigError(f"unknown head '{self.head}'")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.delta_max <= 0:
            raise ConfigError("delta_max must be > 0")
        if self.point_estimate not in ("mixture_mean", "top_component"):
            raise ConfigError(f"unknown point_estimate '{self.point_estimate}'")

    @property
    def uses_word(self) -> bool:
        return "G" in self.feature_set

    @property
    def audio_letters(self) -> tuple[str, ...]:
        return tuple(l for l in AUDIO_ORDER if l in self.feature_set)

    @property
    def n_buckets(self) -> int:
        return int(round(2 * self.delta_max * self.r))

    def head_dim(self) -> int:
        if self.head == "gmm":
            return 3 * self.n_components
        return self.n_buckets


@dataclass
class GmmParams:
    """Per-frame mixture parameters; trailing axis indexes components."""
    mu: np.ndarray
    sigma: np.ndarray
    h: np.ndarray


@dataclass
class HeatmapParams:
    """Per-frame probabilities over lead-time buckets (bucket i at i/r s)."""
    probs: np.ndarray


Params = dict[str, np.ndarray]


def init_params(config: ModelConfig, input_dim: int, word_dim: int,
                rng: np.random.Generator) -> Params:
    """Uniform(-1/sqrt(hidden)) init, forget-gate bias 1."""
    if config.uses_word and word_dim <= 0:
        raise ConfigError("feature set includes G but word_dim is 0")
    h = config.hidden
    k = 1.0 / np.sqrt(h)
    params: Params = {}
    in_dim = input_dim
    for l in range(config.lstm_layers):
        params[f"lstm{l}.W"] = rng.uniform(-k, k, (in_dim, 4 * h))
        params[f"lstm{l}.U"] = rng.uniform(-k, k, (h, 4 * h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        params[f"lstm{l}.b"] = b
        in_dim = h
    head_in = h + (word_dim if config.uses_word else 0)
    params["head.W"] = rng.uniform(-k, k, (head_in, config.head_dim()))
    params["head.b"] = np.zeros(config.head_dim())
    return params


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _lstm_forward(x: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray):
    """x: (B, n, d) -> outputs (B, n, H) plus the cache for backward."""
    B, n, _ = x.shape
    H = U.shape[0]
    gates = np.empty((B, n, 4 * H))
    cells = np.empty((B, n, H))
    outs = np.empty((B, n, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    xw = x @ W  # hoist the input projection out of the time loop
    for t in range(n):
        z = xw[:, t] + h @ U + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :H] = i
        gates[:, t, H:2 * H] = f
        gates[:, t, 2 * H:3 * H] = g
        gates[:, t, 3 * H:] = o
        cells[:, t] = c
        outs[:, t] = h
    return outs, {"x": x, "gates": gates, "cells": cells, "outs": outs}


def _lstm_backward(cache: dict, d_out: np.ndarray, W: np.ndarray, U: np.ndarray):
    """d_out: gradient w.r.t. the layer outputs (post-dropout already applied)."""
    x, gates, cells, outs = (cache["x"], cache["gates"], cache["cells"],
                             cache["outs"])
    B, n, H = outs.shape
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dx = np.empty_like(x)
    dz_all = np.empty((B, n, 4 * H))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(n - 1, -1, -1):
        dh = dh + d_out[:, t]
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        c = cells[:, t]
        c_prev = cells[:, t - 1] if t > 0 else np.zeros((B, H))
        tc = np.tanh(c)
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.empty((B, 4 * H))
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dz_all[:, t] = dz
        h_prev = outs[:, t - 1] if t > 0 else np.zeros((B, H))
        dU += h_prev.T @ dz
        dh = dz @ U.T
        dc = dc * f
    flat_x = x.reshape(B * n, -1)
    flat_dz = dz_all.reshape(B * n, 4 * H)
    dW += flat_x.T @ flat_dz
    db += flat_dz.sum(axis=0)
    dx[:] = (flat_dz @ W.T).reshape(x.shape)
    return dx, dW, dU, db


def _softplus(z):
    return np.logaddexp(0.0, z)


def _log_softmax(z):
    m = np.max(z, axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.sum(np.exp(s), axis=-1, keepdims=True))


def assemble_lstm_input(config: ModelConfig, x_audio: np.ndarray | None,
                        x_word: np.ndarray | None) -> np.ndarray:
    if config.audio_letters:
        if x_audio is None:
            raise ValidationError("model expects audio features")
        return x_audio
    if x_word is None:
        raise ValidationError("word-only model expects word embeddings")
    return x_word


def forward(params: Params, config: ModelConfig, x_audio: np.ndarray | None,
            x_word: np.ndarray | None = None, train: bool = False,
            dropout_rng: np.random.Generator | None = None):
    """Run the network over (B, n, d) feature arrays.

    Returns (head params, cache). Causal by construction: the output at frame
    t never reads inputs after t. Dropout only applies when train=True.
    """
    x = assemble_lstm_input(config, x_audio, x_word)
    if config.uses_word:
        if x_word is None:
            raise ValidationError("model expects word embeddings")
        if x_word.shape[:2] != x.shape[:2]:
            raise ValidationError("word/audio streams disagree on grid shape")
    if train and config.dropout > 0.0 and dropout_rng is None:
        raise ValidationError("training with dropout requires dropout_rng")

    caches = []
    cur = x
    for l in range(config.lstm_layers):
        outs, cache = _lstm_forward(cur, params[f"lstm{l}.W"],
                                    params[f"lstm{l}.U"], params[f"lstm{l}.b"])
        if train and config.dropout > 0.0:
            keep = 1.0 - config.dropout
            mask = (dropout_rng.random(outs.shape) < keep) / keep
        else:
            mask = None
        cache["mask"] = mask
        caches.append(cache)
        cur = outs if mask is None else outs * mask

    head_in = np.concatenate([cur, x_word], axis=-1) if config.uses_word else cur
    raw = head_in @ params["head.W"] + params["head.b"]

    if config.head == "gmm":
        T = config.n_components
        mu = raw[..., :T]
        s_raw = raw[..., T:2 * T]
        w_raw = raw[..., 2 * T:]
        sp = _softplus(s_raw)
        sigma = np.minimum(sp + SIGMA_FLOOR, config.delta_max)
        logh = _log_softmax(w_raw)
        out = GmmParams(mu=mu, sigma=sigma, h=np.exp(logh))
        head_cache = {"raw": raw, "s_raw": s_raw, "logh": logh,
                      "clamped": sp + SIGMA_FLOOR >= config.delta_max}
    else:
        logp = _log_softmax(raw)
        out = HeatmapParams(probs=np.exp(logp))
        head_cache = {"raw": raw, "logp": logp}

    cache = {"layers": caches, "head_in": head_in, "head": head_cache,
             "x_word": x_word}
    return out, cache


def gmm_loglik(params: GmmParams, tau) -> np.ndarray:
    """log sum_i h_i N(tau; mu_i, sigma_i), stabilized with log-sum-exp."""
    tau = np.asarray(tau, dtype=np.float64)[..., None]
    z = (tau - params.mu) / params.sigma
    log_norm = -0.5 * np.log(2 * np.pi) - np.log(params.sigma) - 0.5 * z * z
    with np.errstate(divide="ignore"):
        logw = np.where(params.h > 0, np.log(np.maximum(params.h, 1e-300)),
                        -np.inf)
    comp = logw + log_norm
    m = np.max(comp, axis=-1)
    return m + np.log(np.sum(np.exp(comp - m[..., None]), axis=-1))


def heatmap_target(tau, config: ModelConfig) -> np.ndarray:
    """Discretized Gaussian (sigma = 2 buckets) centered at tau, renormalized."""
    tau = np.asarray(tau, dtype=np.float64)[..., None]
    centers = np.arange(config.n_buckets) / config.r
    sigma = 2.0 / config.r
    logq = -0.5 * ((centers - tau) / sigma) ** 2
    logq -= logq.max(axis=-1, keepdims=True)
    q = np.exp(logq)
    return q / q.sum(axis=-1, keepdims=True)


def heatmap_loss(params: HeatmapParams, tau, config: ModelConfig) -> np.ndarray:
    """Per-frame cross-entropy against the discretized Gaussian target."""
    q = heatmap_target(tau, config)
    logp = np.log(np.maximum(params.probs, 1e-300))
    return -np.sum(q * logp, axis=-1)


def point_estimate(out, config: ModelConfig) -> np.ndarray:
    """Collapse head parameters to a per-frame scalar lead-time estimate."""
    if isinstance(out, GmmParams):
        if config.point_estimate == "mixture_mean":
            est = np.sum(out.h * out.mu, axis=-1)
        else:
            top = np.argmax(out.h, axis=-1)
            est = np.take_along_axis(out.mu, top[..., None], axis=-1)[..., 0]
    elif isinstance(out, HeatmapParams):
        est = np.argmax(out.probs, axis=-1) / config.r
    else:
        raise ValidationError(f"unknown head output {type(out)!r}")
    return np.clip(est, 0.0, config.delta_max)


def _gmm_nll_and_grad(head_cache: dict, out: GmmParams, tau: np.ndarray):
    mu, sigma, logh = out.mu, out.sigma, head_cache["logh"]
    tau_e = tau[..., None]
    z = (tau_e - mu) / sigma
    log_norm = -0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5 * z * z
    comp = logh + log_norm
    m = np.max(comp, axis=-1, keepdims=True)
    total = m[..., 0] + np.log(np.sum(np.exp(comp - m), axis=-1))
    nll = -total

    resp = np.exp(comp - total[..., None])  # posterior responsibilities
    d_mu = -resp * z / sigma
    d_sigma = resp * (1.0 / sigma - z * z / sigma)
    d_sraw = d_sigma * _sigmoid(head_cache["s_raw"]) * ~head_cache["clamped"]
    d_wraw = np.exp(logh) - resp
    d_raw = np.concatenate([d_mu, d_sraw, d_wraw], axis=-1)
    return nll, d_raw


def _heatmap_nll_and_grad(head_cache: dict, tau: np.ndarray,
                          config: ModelConfig):
    q = heatmap_target(tau, config)
    logp = head_cache["logp"]
    nll = -np.sum(q * logp, axis=-1)
    d_raw = np.exp(logp) - q
    return nll, d_raw


def loss_and_grads(params: Params, config: ModelConfig,
                   x_audio: np.ndarray | None, x_word: np.ndarray | None,
                   tau: np.ndarray, mask: np.ndarray,
                   train: bool = False,
                   dropout_rng: np.random.Generator | None = None,
                   reduction: str = "mean"):
    """Masked loss plus gradients for every parameter.

    The loss is the per-frame negative log-likelihood (gmm head) or
    cross-entropy (heatmap head), summed over masked-in frames and, for
    reduction="mean", divided by the masked frame count. All frames masked
    out yields loss 0 and zero gradients.
    """
    out, cache = forward(params, config, x_audio, x_word, train=train,
                         dropout_rng=dropout_rng)
    if config.head == "gmm":
        nll, d_raw = _gmm_nll_and_grad(cache["head"], out, tau)
    else:
        nll, d_raw = _heatmap_nll_and_grad(cache["head"], tau, config)

    mask = np.asarray(mask, dtype=bool)
    n_masked = int(np.count_nonzero(mask))
    if reduction == "mean":
        scale = 0.0 if n_masked == 0 else 1.0 / n_masked
    elif reduction == "sum":
        scale = 1.0
    else:
        raise ValidationError(f"unknown reduction '{reduction}'")
    loss = float(np.sum(nll[mask]) * scale) if n_masked else 0.0

    d_raw = d_raw * (mask[..., None] * scale)
    grads: Params = {}
    head_in = cache["head_in"]
    B, n, _ = head_in.shape
    flat_in = head_in.reshape(B * n, -1)
    flat_d = d_raw.reshape(B * n, -1)
    grads["head.W"] = flat_in.T @ flat_d
    grads["head.b"] = flat_d.sum(axis=0)
    d_head_in = (flat_d @ params["head.W"].T).reshape(B, n, -1)
    d_top = d_head_in[..., :config.hidden]

    d_cur = d_top
    for l in range(config.lstm_layers - 1, -1, -1):
        layer_cache = cache["layers"][l]
        if layer_cache["mask"] is not None:
            d_cur = d_cur * layer_cache["mask"]
        dx, dW, dU, db = _lstm_backward(layer_cache, d_cur,
                                        params[f"lstm{l}.W"],
                                        params[f"lstm{l}.U"])
        grads[f"lstm{l}.W"] = dW
        grads[f"lstm{l}.U"] = dU
        grads[f"lstm{l}.b"] = db
        d_cur = dx
    return loss, grads, {"out": out, "n_masked": n_masked}


def masked_loss(params: Params, config: ModelConfig,
                x_audio: np.ndarray | None, x_word: np.ndarray | None,
                tau: np.ndarray, mask: np.ndarray) -> tuple[float, int]:
    """Inference-mode masked mean loss; returns (loss, masked frame count)."""
    out, _ = forward(params, config, x_audio, x_word, train=False)
    if config.head == "gmm":
        nll = -gmm_loglik(out, tau)
    else:
        nll = heatmap_loss(out, tau, config)
    mask = np.asarray(mask, dtype=bool)
    n = int(np.count_nonzero(mask))
    return (float(np.sum(nll[mask]) / n) if n else 0.0), n


@dataclass
class Checkpoint:
    config: ModelConfig
    params: Params
    input_dim: int
    word_dim: int
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Versioned binary: magic, config JSON block, named float32 sections."""
    cfg = {
        "feature_set": "".join(ckpt.config.feature_set),
        "hidden": ckpt.config.hidden,
        "lstm_layers": ckpt.config.lstm_layers,
        "n_components": ckpt.config.n_components,
        "head": ckpt.config.head,
        "dropout": ckpt.config.dropout,
        "delta_max": ckpt.config.delta_max,
        "r": ckpt.config.r,
        "point_estimate": ckpt.config.point_estimate,
        "input_dim": ckpt.input_dim,
        "word_dim": ckpt.word_dim,
        "meta": ckpt.meta,
    }
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(ckpt.params)))
        for name in sorted(ckpt.params):
            arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise ValidationError(f"{path}: truncated checkpoint")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4) != CKPT_MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != CKPT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack("<I", take(4))
    cfg = json.loads(take(blob_len).decode("utf-8"))
    config = ModelConfig(
        feature_set=cfg["feature_set"], hidden=cfg["hidden"],
        lstm_layers=cfg["lstm_layers"], n_components=cfg["n_components"],
        head=cfg["head"], dropout=cfg["dropout"], delta_max=cfg["delta_max"],
        r=cfg["r"], point_estimate=cfg["point_estimate"])
    (n_sections,) = struct.unpack("<I", take(4))
    params: Params = {}
    for _ in range(n_sections):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(take(count * 4), dtype="<f4").astype(
            np.float64).reshape(shape)
    if off != len(raw):
        raise ValidationError(f"{path}: trailing bytes after sections")
    _validate_shapes(params, config, cfg["input_dim"], cfg["word_dim"], path)
    return Checkpoint(config, params, cfg["input_dim"], cfg["word_dim"],
                      cfg.get("meta", {}))


def _validate_shapes(params: Params, config: ModelConfig, input_dim: int,
                     word_dim: int, path) -> None:
    h = config.hidden
    want = {}
    in_dim = input_dim
    for l in range(config.lstm_layers):
        want[f"lstm{l}.W"] = (in_dim, 4 * h)
        want[f"lstm{l}.U"] = (h, 4 * h)
        want[f"lstm{l}.b"] = (4 * h,)
        in_dim = h
    head_in = h + (word_dim if config.uses_word else 0)
    want["head.W"] = (head_in, config.head_dim())
    want["head.b"] = (config.head_dim(),)
    if set(want) != set(params):
        raise ValidationError(
            f"{path}: checkpoint sections {sorted(params)} do not match "
            f"config sections {sorted(want)}")
    for name, shape in want.items():
        if tuple(params[name].shape) != shape:
            raise ValidationError(
                f"{path}: section {name} has shape {params[name].shape}, "
                f"expected {shape}")
