"""Gaussian VAE with tanh MLPs, trained by single-sample AEVB and adagrad.

Encoder ``q(z|x) = N(mu_z, diag exp(lv_z))`` and decoder
``p(x|z) = N(mu_x, diag exp(lv_x))`` are MLPs with tanh hidden layers; the
encoder mean and both log-variance heads are linear, the decoder mean goes
through a sigmoid. Gradients are derived by hand (no autodiff).

Arrays are stored with shape ``(out, in)`` and every batched routine takes
rows as samples.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

log = logging.getLogger(__name__)

LOGVAR_CLAMP = 10.0
LOG_2PI = math.log(2.0 * math.pi)
PARAMS_FORMAT = "woevae-params"
PARAMS_VERSION = 1

# id -> (latent dim, hidden layers, hidden units, learning rate, epochs)
PRESETS: dict[str, tuple[int, int, int, float, int]] = {
    "arch1": (2, 1, 5, 0.01, 50),
    "arch2": (2, 1, 10, 0.01, 50),
    "arch3": (2, 1, 20, 0.01, 50),
    "arch4": (2, 1, 30, 0.01, 50),
    "arch5": (2, 1, 40, 0.01, 50),
    "arch6": (2, 1, 50, 0.01, 50),
    "arch7": (2, 1, 60, 0.01, 50),
    "arch8": (2, 1, 70, 0.01, 50),
    "arch9": (2, 1, 30, 0.007, 50),
    "arch10": (2, 1, 30, 0.008, 50),
    "arch11": (2, 1, 30, 0.009, 50),
    "arch12": (2, 1, 30, 0.011, 50),
    "arch13": (2, 1, 30, 0.012, 50),
    "arch14": (2, 1, 30, 0.013, 50),
    "arch15": (5, 1, 30, 0.01, 50),
    "arch16": (10, 1, 30, 0.01, 50),
    "arch17": (15, 1, 30, 0.01, 50),
    "arch18": (2, 2, 30, 0.01, 50),
    "arch19": (2, 3, 30, 0.01, 50),
    "arch20": (2, 4, 30, 0.01, 50),
    "arch21": (2, 5, 30, 0.01, 50),
}


class TrainingError(RuntimeError):
    pass


class ParamsFileError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    latent_dim: int = 2
    hidden_layers: int = 1
    hidden_units: int = 30
    learning_rate: float = 0.01
    epochs: int = 50
    preset_id: str = "custom"

    def __post_init__(self):
        for name in ("input_dim", "latent_dim", "hidden_layers", "hidden_units"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.epochs < 0 or not self.learning_rate > 0:
            raise ValueError("epochs must be >= 0 and learning_rate > 0")

    @classmethod
    def preset(cls, preset_id: str, input_dim: int, **overrides) -> "Architecture":
        try:
            dz, layers, units, lr, epochs = PRESETS[preset_id]
        except KeyError:
            raise ValueError(f"unknown architecture preset {preset_id!r}") from None
        kw = dict(input_dim=input_dim, latent_dim=dz, hidden_layers=layers, hidden_units=units,
                  learning_rate=lr, epochs=epochs, preset_id=preset_id)
        kw.update(overrides)
        return cls(**kw)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter name -> shape, in canonical order."""
        h, dx, dz = self.hidden_units, self.input_dim, self.latent_dim
        out: dict[str, tuple[int, ...]] = {}
        fan_in = dx
        for i in range(self.hidden_layers):
            out[f"enc_W{i}"] = (h, fan_in)
            out[f"enc_b{i}"] = (h,)
            fan_in = h
        out["mu_z_W"], out["mu_z_b"] = (dz, h), (dz,)
        out["lv_z_W"], out["lv_z_b"] = (dz, h), (dz,)
        fan_in = dz
        for i in range(self.hidden_layers):
            out[f"dec_W{i}"] = (h, fan_in)
            out[f"dec_b{i}"] = (h,)
            fan_in = h
        out["mu_x_W"], out["mu_x_b"] = (dx, h), (dx,)
        out["lv_x_W"], out["lv_x_b"] = (dx, h), (dx,)
        return out


# single-hidden-layer names used in the literature
_ALIASES = {"W1": "enc_W0", "b1": "enc_b0", "W2": "mu_z_W", "b2": "mu_z_b",
            "W3": "lv_z_W", "b3": "lv_z_b", "W4": "dec_W0", "b4": "dec_b0",
            "W5": "mu_x_W", "b5": "mu_x_b", "W6": "lv_x_W", "b6": "lv_x_b"}


@dataclass
class VaeParams:
    arch: Architecture
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        expected = self.arch.shapes()
        if list(self.arrays) != list(expected):
            raise ValueError(f"parameter names {list(self.arrays)} do not match architecture")
        for name, shape in expected.items():
            a = self.arrays[name]
            if a.shape != shape:
                raise ValueError(f"{name}: shape {a.shape}, architecture requires {shape}")

    def __getattr__(self, name):
        if name in _ALIASES and self.arch.hidden_layers == 1:
            return self.arrays[_ALIASES[name]]
        raise AttributeError(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "VaeParams":
        return VaeParams(self.arch, {k: v.copy() for k, v in self.arrays.items()})

    def layers(self, prefix: str) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for i in range(self.arch.hidden_layers):
            yield self.arrays[f"{prefix}_W{i}"], self.arrays[f"{prefix}_b{i}"]

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays.values())


def zero_params(arch: Architecture) -> VaeParams:
    return VaeParams(arch, {k: np.zeros(s) for k, s in arch.shapes().items()})


def init_params(arch: Architecture, seed: int = 0) -> VaeParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in arch.shapes().items():
        if len(shape) == 2:
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-a, a, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return VaeParams(arch, arrays)


# -- forward ----------------------------------------------------------------

def sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a, dtype=np.float64)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    # keep the mean strictly inside (0, 1)
    return np.clip(out, np.finfo(np.float64).tiny, 1.0 - 2.0 ** -53)


@dataclass
class EncodedMoments:
    mu: np.ndarray
    log_var: np.ndarray


@dataclass
class DecodedMoments:
    mu: np.ndarray
    log_var: np.ndarray


def _check_dim(x: np.ndarray, dim: int, what: str) -> None:
    if x.shape[-1] != dim:
        raise ValueError(f"{what} has dimension {x.shape[-1]}, network expects {dim}")


def _mlp(params: VaeParams, prefix: str, x: np.ndarray) -> list[np.ndarray]:
    hs = [x]
    for W, b in params.layers(prefix):
        hs.append(np.tanh(hs[-1] @ W.T + b))
    return hs


def encode(p: VaeParams, x: np.ndarray) -> EncodedMoments:
    """Encoder moments for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, p.arch.input_dim, "input")
    h = _mlp(p, "enc", x)[-1]
    mu = h @ p["mu_z_W"].T + p["mu_z_b"]
    lv = np.clip(h @ p["lv_z_W"].T + p["lv_z_b"], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return EncodedMoments(mu, lv)


def decode(p: VaeParams, z: np.ndarray) -> DecodedMoments:
    z = np.asarray(z, dtype=np.float64)
    _check_dim(z, p.arch.latent_dim, "latent code")
    h = _mlp(p, "dec", z)[-1]
    mu = sigmoid(h @ p["mu_x_W"].T + p["mu_x_b"])
    lv = np.clip(h @ p["lv_x_W"].T + p["lv_x_b"], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return DecodedMoments(mu, lv)


def reparametrize(m: EncodedMoments, eps: np.ndarray) -> np.ndarray:
    return m.mu + np.exp(0.5 * m.log_var) * eps


def kl_to_prior(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    """Closed-form KL(N(mu, diag exp(log_var)) || N(0, I)), summed over the last axis."""
    return 0.5 * np.sum(mu * mu + np.exp(log_var) - 1.0 - log_var, axis=-1)


def gaussian_loglik(x: np.ndarray, mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    r = x - mu
    return -0.5 * np.sum(LOG_2PI + log_var + r * r * np.exp(-log_var), axis=-1)


def elbo_terms(p: VaeParams, x: np.ndarray, eps: np.ndarray):
    """Single-sample reconstruction log-likelihood and closed-form KL.

    Scalars for a single input vector, arrays for a batch.
    """
    enc = encode(p, x)
    dec = decode(p, reparametrize(enc, eps))
    return gaussian_loglik(np.asarray(x, dtype=np.float64), dec.mu, dec.log_var), \
        kl_to_prior(enc.mu, enc.log_var)


# -- backward ---------------------------------------------------------------

def forward_backward(p: VaeParams, X: np.ndarray, E: np.ndarray):
    """Per-row ``(recon, kl)`` and the gradient of the batch-mean negative ELBO.

    ``X`` is (B, d_x), ``E`` is (B, d_z). Clamped log-variances pass no
    gradient outside the clamp range.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    _check_dim(X, p.arch.input_dim, "input")
    _check_dim(E, p.arch.latent_dim, "noise")
    scale = 1.0 / X.shape[0]

    enc_h = _mlp(p, "enc", X)
    h = enc_h[-1]
    mu_z = h @ p["mu_z_W"].T + p["mu_z_b"]
    lvz_raw = h @ p["lv_z_W"].T + p["lv_z_b"]
    lv_z = np.clip(lvz_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    s_z = np.exp(0.5 * lv_z)
    Z = mu_z + s_z * E

    dec_h = _mlp(p, "dec", Z)
    hd = dec_h[-1]
    mu_x = sigmoid(hd @ p["mu_x_W"].T + p["mu_x_b"])
    lvx_raw = hd @ p["lv_x_W"].T + p["lv_x_b"]
    lv_x = np.clip(lvx_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)

    r = X - mu_x
    inv_vx = np.exp(-lv_x)
    recon = -0.5 * np.sum(LOG_2PI + lv_x + r * r * inv_vx, axis=1)
    exp_lvz = np.exp(lv_z)
    kl = 0.5 * np.sum(mu_z * mu_z + exp_lvz - 1.0 - lv_z, axis=1)

    g: dict[str, np.ndarray] = {}
    d_a = (-r * inv_vx * scale) * mu_x * (1.0 - mu_x)
    d_lvx = 0.5 * (1.0 - r * r * inv_vx) * scale * (np.abs(lvx_raw) <= LOGVAR_CLAMP)
    g["mu_x_W"], g["mu_x_b"] = d_a.T @ hd, d_a.sum(axis=0)
    g["lv_x_W"], g["lv_x_b"] = d_lvx.T @ hd, d_lvx.sum(axis=0)
    d_h = d_a @ p["mu_x_W"] + d_lvx @ p["lv_x_W"]
    dec_grads = {}
    for i in reversed(range(p.arch.hidden_layers)):
        d_pre = d_h * (1.0 - dec_h[i + 1] ** 2)
        dec_grads[f"dec_W{i}"] = d_pre.T @ dec_h[i]
        dec_grads[f"dec_b{i}"] = d_pre.sum(axis=0)
        d_h = d_pre @ p[f"dec_W{i}"]
    d_Z = d_h

    d_muz = d_Z + mu_z * scale
    d_lvz = (d_Z * E * 0.5 * s_z + 0.5 * (exp_lvz - 1.0) * scale) * (np.abs(lvz_raw) <= LOGVAR_CLAMP)
    g["mu_z_W"], g["mu_z_b"] = d_muz.T @ h, d_muz.sum(axis=0)
    g["lv_z_W"], g["lv_z_b"] = d_lvz.T @ h, d_lvz.sum(axis=0)
    d_h = d_muz @ p["mu_z_W"] + d_lvz @ p["lv_z_W"]
    for i in reversed(range(p.arch.hidden_layers)):
        d_pre = d_h * (1.0 - enc_h[i + 1] ** 2)
        g[f"enc_W{i}"] = d_pre.T @ enc_h[i]
        g[f"enc_b{i}"] = d_pre.sum(axis=0)
        d_h = d_pre @ p[f"enc_W{i}"]
    g.update(dec_grads)
    return recon, kl, {k: g[k] for k in p.arrays}


def backward(p: VaeParams, x: np.ndarray, eps: np.ndarray) -> dict[str, np.ndarray]:
    """Gradient of ``-(recon - kl)`` for fixed noise (batch mean for 2-D input)."""
    return forward_backward(p, x, eps)[2]


# -- optimisation -----------------------------------------------------------

@dataclass
class TrainConfig:
    architecture: Architecture
    batch_size: int = 100
    seed: int = 0
    adagrad_epsilon: float = 1e-8
    momentum: float = 0.001
    log_every: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.adagrad_epsilon > 0:
            raise ValueError("adagrad_epsilon must be positive")


@dataclass
class AdagradState:
    accum: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, p: VaeParams) -> "AdagradState":
        return cls({k: np.zeros_like(v) for k, v in p.arrays.items()},
                   {k: np.zeros_like(v) for k, v in p.arrays.items()})


def adagrad_step(p: VaeParams, grads: dict[str, np.ndarray], state: AdagradState,
                 cfg: TrainConfig) -> tuple[VaeParams, AdagradState]:
    """In-place adagrad update with heavy-ball velocity on the adagrad step:
    ``G += g**2; v = momentum*v + lr*g/(sqrt(G)+eps); p -= v``."""
    lr = cfg.architecture.learning_rate
    for k, gk in grads.items():
        G = state.accum[k]
        G += gk * gk
        v = state.velocity[k]
        v *= cfg.momentum
        v += lr * gk / (np.sqrt(G) + cfg.adagrad_epsilon)
        p.arrays[k] -= v
    return p, state


@dataclass
class TrainHistory:
    neg_elbo: list[float] = field(default_factory=list)
    recon: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.neg_elbo)

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "neg_elbo", "recon", "kl"])
            for e, (a, b, c) in enumerate(zip(self.neg_elbo, self.recon, self.kl), start=1):
                w.writerow([e, repr(a), repr(b), repr(c)])


def train(X: np.ndarray, cfg: TrainConfig, init: VaeParams | None = None):
    """Minibatch AEVB. Returns ``(params, history)``; deterministic per seed."""
    X = np.asarray(X, dtype=np.float64)
    arch = cfg.architecture
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ValueError(f"training matrix must be (n, {arch.input_dim}), got {X.shape}")
    n = X.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} rows, got {n}")
    params = (init if init is not None else init_params(arch, cfg.seed)).copy()
    state = AdagradState.zeros_like(params)
    rng = np.random.default_rng([cfg.seed, 1])
    hist = TrainHistory()
    for epoch in range(1, arch.epochs + 1):
        order = rng.permutation(n)
        tot_recon = tot_kl = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            E = rng.standard_normal((len(idx), arch.latent_dim))
            recon, kl, grads = forward_backward(params, X[idx], E)
            s_recon, s_kl = float(recon.sum()), float(kl.sum())
            if not (math.isfinite(s_recon) and math.isfinite(s_kl)):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            if kl.min() < -1e-12:
                raise TrainingError(f"negative KL term at epoch {epoch}, batch {b}")
            tot_recon += s_recon
            tot_kl += s_kl
            adagrad_step(params, grads, state, cfg)
        hist.recon.append(tot_recon / n)
        hist.kl.append(tot_kl / n)
        hist.neg_elbo.append((tot_kl - tot_recon) / n)
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("epoch %d: -ELBO %.5f (recon %.5f, kl %.5f)", epoch,
                     hist.neg_elbo[-1], hist.recon[-1], hist.kl[-1])
    if not params.all_finite():
        raise TrainingError("training produced non-finite parameters")
    return params, hist


# -- persistence ------------------------------------------------------------

def params_to_json(p: VaeParams) -> dict:
    return {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "architecture": asdict(p.arch),
        "arrays": {k: {"shape": list(v.shape), "data": [repr(float(x)) for x in v.ravel()]}
                   for k, v in p.arrays.items()},
    }


def params_from_json(doc: dict) -> VaeParams:
    if not isinstance(doc, dict) or doc.get("format") != PARAMS_FORMAT:
        raise ParamsFileError("not a VAE parameter file")
    if doc.get("version") != PARAMS_VERSION:
        raise ParamsFileError(f"unsupported parameter file version {doc.get('version')!r}")
    try:
        arch = Architecture(**doc["architecture"])
        arrays = {}
        for k, a in doc["arrays"].items():
            data = np.array([float(x) for x in a["data"]], dtype=np.float64)
            arrays[k] = data.reshape(a["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParamsFileError(f"corrupt parameter file: {exc}") from exc
    try:
        return VaeParams(arch, arrays)
    except ValueError as exc:
        raise ParamsFileError(f"parameter shapes disagree with the declared architecture: {exc}") from exc


def save_params(path, p: VaeParams, extra: dict | None = None) -> None:
    doc = params_to_json(p)
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params(path) -> VaeParams:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParamsFileError(f"{path}: unreadable parameter file ({exc})") from exc
    return params_from_json(doc)
