"""Two-layer graph convolution with hierarchy-aware noise injection.

Forward pass (symmetric normalization with self loops, relu between the
layers, linear output):

    A_hat  = D^-1/2 (A + I) D^-1/2
    H1     = relu(A_hat X W1)
    H_hat  = H1 + eta_r + eta_alpha        (noise-mode dependent)
    logits = A_hat H_hat W2

Noise lives in the tangent space at the origin, so the addition to the
hidden matrix is well typed; each node row receives an independent draw.
The budget split beta = logistic(beta_logit) is learned through the
reparameterized noise eta = (sigma(beta) / lambda_0) * zeta with the raw
draws zeta held in the forward cache. Gradients are exact and checked
against central finite differences in the suite.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.metrics import f1_score

from .privacy import (
    PrivacyBudget,
    SensitivityPair,
    calibrate_sigma,
    inter_hierarchy_sensitivity,
    intra_hierarchy_sensitivity,
)

NOISE_MODES = (
    "poindp",
    "no_inter",
    "no_intra",
    "no_allocate",
    "euclidean_gauss",
    "euclidean_laplace",
    "none",
)

# display names used in ablation summaries
ARM_LABELS = {
    "no_inter": "w/o inter",
    "no_intra": "w/o intra",
    "no_allocate": "w/o allocate",
}

LAMBDA0 = 2.0


@dataclass
class TrainConfig:
    hidden_dim: int = 16
    epochs: int = 200
    lr: float = 0.01
    seed: int = 0
    budget: PrivacyBudget = field(
        default_factory=lambda: PrivacyBudget(1.0, 1e-3, 0.5)
    )
    noise_mode: str = "poindp"
    clip_bound: float = 1.0
    clip_tau: float = 1e-3
    init_beta_logit: float = 0.0
    beta_lr: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(
                f"unknown noise_mode {self.noise_mode!r}; expected one of {NOISE_MODES}"
            )


@dataclass
class ModelParams:
    W: list
    beta_logit: float = 0.0

    def copy(self):
        return ModelParams([w.copy() for w in self.W], self.beta_logit)

    def save(self, path):
        """Text checkpoint: shape headers plus row-major values."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"layers {len(self.W)}\n")
            for i, w in enumerate(self.W):
                fh.write(f"layer {i} {w.shape[0]} {w.shape[1]}\n")
                for row in w:
                    fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"beta_logit {self.beta_logit!r}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = fh.readline().split()
            n_layers = int(tokens[1])
            ws = []
            for _ in range(n_layers):
                head = fh.readline().split()
                rows, cols = int(head[2]), int(head[3])
                w = np.empty((rows, cols))
                for r in range(rows):
                    w[r] = [float(v) for v in fh.readline().split()]
                ws.append(w)
            beta = float(fh.readline().split()[1])
        return cls(ws, beta)


@dataclass
class NoiseContext:
    """Per-epoch noise inputs: raw draws plus calibration parameters."""

    mode: str
    sens: SensitivityPair | None = None
    budget: PrivacyBudget | None = None
    zeta_r: np.ndarray | None = None
    zeta_alpha: np.ndarray | None = None
    euclid_draw: np.ndarray | None = None
    clip_bound: float = 1.0

    def learnable_beta(self) -> bool:
        return self.mode in ("poindp", "no_inter", "no_intra")


@dataclass
class ForwardCache:
    M0: np.ndarray
    Z1: np.ndarray
    H1: np.ndarray
    H_hat: np.ndarray
    M1: np.ndarray
    logits: np.ndarray
    noise: NoiseContext | None
    beta: float | None
    sigma_r: float
    sigma_alpha: float
    clip_scale: np.ndarray | None


def normalize_adjacency(dataset) -> sp.csr_matrix:
    """Symmetric normalization with self loops: D^-1/2 (A+I) D^-1/2."""
    n = dataset.num_nodes
    a = dataset.adj + sp.identity(n, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    return sp.diags(dinv) @ a @ sp.diags(dinv)


def glorot(rng, shape):
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_params(rng, in_dim, hidden_dim, out_dim, beta_logit=0.0) -> ModelParams:
    return ModelParams(
        [glorot(rng, (in_dim, hidden_dim)), glorot(rng, (hidden_dim, out_dim))],
        beta_logit,
    )


def split_budget(beta_logit, epsilon):
    """(beta * eps, eps - beta * eps); the pair sums to eps exactly."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    beta = 1.0 / (1.0 + math.exp(-beta_logit))
    eps_r = beta * epsilon
    return eps_r, epsilon - eps_r


def perturb_hidden(h, eta_r, eta_alpha, noise_mode="poindp"):
    """h + eta_r + eta_alpha with arm-dependent terms zeroed."""
    if noise_mode in ("poindp", "no_allocate"):
        terms = eta_r + eta_alpha
    elif noise_mode == "no_inter":
        terms = eta_alpha
    elif noise_mode == "no_intra":
        terms = eta_r
    elif noise_mode == "none":
        return h.copy()
    else:
        raise ValueError(f"perturb_hidden does not handle mode {noise_mode!r}")
    if terms.shape[-1] != h.shape[-1]:
        raise ValueError(
            f"noise dimension {terms.shape[-1]} != hidden dimension {h.shape[-1]}"
        )
    return h + terms


def _clip_rows(h, bound):
    """Row-wise L2 clip; returns clipped matrix and per-row scale."""
    norms = np.linalg.norm(h, axis=1)
    scale = np.minimum(1.0, bound / np.maximum(norms, 1e-12))
    return h * scale[:, None], scale


def euclidean_sigma(mode, clip_bound, epsilon, delta):
    """Noise scale of the flat-space baseline arms at the given budget."""
    if mode == "euclidean_gauss":
        return math.sqrt(2.0 * math.log(1.25 / delta)) * clip_bound / epsilon
    if mode == "euclidean_laplace":
        return clip_bound / epsilon
    raise ValueError(f"not a euclidean mode: {mode!r}")


BETA_LOGIT_BOUND = 8.0


def _noise_terms(noise: NoiseContext, params: ModelParams):
    """Effective beta and the calibrated scales this arm actually uses."""
    if noise.mode == "no_allocate":
        beta = noise.budget.beta
    else:
        logit = min(BETA_LOGIT_BOUND, max(-BETA_LOGIT_BOUND, params.beta_logit))
        beta = 1.0 / (1.0 + math.exp(-logit))
    eps = noise.budget.epsilon
    eps_r = beta * eps
    eps_alpha = eps - eps_r
    sigma_r = 0.0
    sigma_alpha = 0.0
    if noise.mode != "no_inter":
        sigma_r = calibrate_sigma(noise.sens.delta_r, eps_r, noise.budget.delta)
    if noise.mode != "no_intra":
        sigma_alpha = calibrate_sigma(
            noise.sens.delta_alpha, eps_alpha, noise.budget.delta
        )
    return beta, sigma_r, sigma_alpha


def gcn_forward(adj_norm, features, params: ModelParams, noise: NoiseContext | None = None):
    """Two-layer forward pass; returns (logits, cache for backward)."""
    if features.shape[0] != adj_norm.shape[0]:
        raise ValueError("feature rows must match node count")
    M0 = adj_norm @ features
    Z1 = M0 @ params.W[0]
    H1 = np.maximum(Z1, 0.0)

    beta = None
    sigma_r = 0.0
    sigma_alpha = 0.0
    clip_scale = None
    mode = noise.mode if noise is not None else "none"
    if mode in ("poindp", "no_inter", "no_intra", "no_allocate"):
        beta, sigma_r, sigma_alpha = _noise_terms(noise, params)
        eta_r = (sigma_r / LAMBDA0) * noise.zeta_r
        eta_alpha = (sigma_alpha / LAMBDA0) * noise.zeta_alpha
        H_hat = perturb_hidden(H1, eta_r, eta_alpha, mode)
    elif mode in ("euclidean_gauss", "euclidean_laplace"):
        clipped, clip_scale = _clip_rows(H1, noise.clip_bound)
        sig = euclidean_sigma(mode, noise.clip_bound, noise.budget.epsilon,
                              noise.budget.delta)
        H_hat = clipped + sig * noise.euclid_draw
    else:
        H_hat = H1

    M1 = adj_norm @ H_hat
    logits = M1 @ params.W[1]
    return logits, ForwardCache(
        M0=M0, Z1=Z1, H1=H1, H_hat=H_hat, M1=M1, logits=logits,
        noise=noise, beta=beta, sigma_r=sigma_r, sigma_alpha=sigma_alpha,
        clip_scale=clip_scale,
    )


def softmax(logits):
    mx = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - mx)
    return e / e.sum(axis=1, keepdims=True)


def task_loss(logits, labels, mask):
    """Mean cross entropy over the masked nodes."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty mask")
    sub = logits[idx]
    mx = sub.max(axis=1, keepdims=True)
    lse = mx.ravel() + np.log(np.exp(sub - mx).sum(axis=1))
    return float(np.mean(lse - sub[np.arange(idx.size), labels[idx]]))


def backward(adj_norm, cache: ForwardCache, params: ModelParams, labels, mask):
    """Exact gradients of the masked cross entropy for W1, W2, beta_logit."""
    idx = np.flatnonzero(mask)
    probs = softmax(cache.logits[idx])
    dZ2 = np.zeros_like(cache.logits)
    probs[np.arange(idx.size), labels[idx]] -= 1.0
    dZ2[idx] = probs / idx.size

    dW2 = cache.M1.T @ dZ2
    dM1 = dZ2 @ params.W[1].T
    dH_hat = adj_norm.T @ dM1

    dbeta_logit = 0.0
    noise = cache.noise
    mode = noise.mode if noise is not None else "none"
    if mode in ("poindp", "no_inter", "no_intra") and noise.learnable_beta():
        beta = cache.beta
        eps = noise.budget.epsilon
        dL_dbeta = 0.0
        if mode in ("poindp", "no_intra") and cache.sigma_r > 0:
            dsr = -cache.sigma_r / beta  # d sigma_r / d beta
            dL_dbeta += float(np.sum(dH_hat * noise.zeta_r)) * dsr / LAMBDA0
        if mode in ("poindp", "no_inter") and cache.sigma_alpha > 0:
            dsa = cache.sigma_alpha / (1.0 - beta)
            dL_dbeta += float(np.sum(dH_hat * noise.zeta_alpha)) * dsa / LAMBDA0
        dbeta_logit = dL_dbeta * beta * (1.0 - beta)

    if mode in ("euclidean_gauss", "euclidean_laplace"):
        # through the row clip: rows at the bound follow the sphere tangent
        scale = cache.clip_scale
        dH1 = dH_hat * scale[:, None]
        clipped_rows = scale < 1.0
        if np.any(clipped_rows):
            h = cache.H1[clipped_rows]
            hn = np.linalg.norm(h, axis=1, keepdims=True)
            unit = h / np.maximum(hn, 1e-12)
            g = dH_hat[clipped_rows] * scale[clipped_rows, None]
            proj = np.sum(g * unit, axis=1, keepdims=True) * unit
            dH1[clipped_rows] = g - proj
    else:
        dH1 = dH_hat

    dZ1 = dH1 * (cache.Z1 > 0)
    dW1 = cache.M0.T @ dZ1
    return {"W": [dW1, dW2], "beta_logit": dbeta_logit}


class AdamState:
    """Per-parameter Adam moments; step sizes stay O(lr) regardless of the
    raw gradient scale, which keeps heavily noised runs from blowing up."""

    def __init__(self, shapes, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0

    def step(self, tensors, grads):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for i, (x, g) in enumerate(zip(tensors, grads)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            x -= self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)


@dataclass
class TrainResult:
    params: ModelParams
    metrics: dict
    final_weighted_f1: float
    final_micro_f1: float
    node_noise_norm: np.ndarray
    noise_mode: str
    clean_weighted_f1: float = 0.0
    clean_micro_f1: float = 0.0


def _f1_scores(logits, labels, mask):
    idx = np.flatnonzero(mask)
    pred = logits[idx].argmax(axis=1)
    true = labels[idx]
    return (
        f1_score(true, pred, average="weighted", zero_division=0),
        f1_score(true, pred, average="micro", zero_division=0),
    )


def train_poindp(dataset, embed_table, config: TrainConfig):
    """Full training loop: per-epoch sensitivities, noise, forward,
    perturbation, loss and update. Deterministic per seed; returns the
    trained parameters and the per-epoch metric trajectories.
    """
    if not dataset.train_mask.any():
        raise ValueError("empty training mask")
    mode = config.noise_mode
    needs_table = mode in ("poindp", "no_inter", "no_intra", "no_allocate")
    if needs_table and embed_table is None:
        raise ValueError(f"noise_mode {mode!r} requires an embedding table")
    if needs_table and embed_table.num_nodes < dataset.num_nodes:
        raise ValueError("embedding table does not cover all nodes")

    ss = np.random.SeedSequence(config.seed)
    init_ss, noise_ss = ss.spawn(2)
    rng_init = np.random.default_rng(init_ss)
    rng_noise = np.random.default_rng(noise_ss)

    adj_norm = normalize_adjacency(dataset)
    X = dataset.features.astype(np.float64)
    y = dataset.labels
    n = dataset.num_nodes
    params = init_params(
        rng_init, X.shape[1], config.hidden_dim, dataset.num_classes,
        config.init_beta_logit,
    )
    beta_lr = config.lr if config.beta_lr is None else config.beta_lr
    opt = AdamState([w.shape for w in params.W], config.lr)
    beta_opt = AdamState([()], beta_lr)
    all_nodes = np.arange(n)

    hist = {k: [] for k in (
        "epoch", "loss", "weighted_f1", "micro_f1",
        "epsilon_r", "epsilon_alpha", "sigma_r", "sigma_alpha",
        "mean_noise_norm",
    )}
    node_noise = np.zeros(n)

    for epoch in range(config.epochs):
        noise_ctx = None
        if needs_table:
            sens = SensitivityPair(
                inter_hierarchy_sensitivity(embed_table, all_nodes),
                intra_hierarchy_sensitivity(embed_table, all_nodes, config.clip_tau),
            )
            noise_ctx = NoiseContext(
                mode=mode, sens=sens, budget=config.budget,
                zeta_r=rng_noise.standard_normal((n, config.hidden_dim)),
                zeta_alpha=rng_noise.standard_normal((n, config.hidden_dim)),
            )
        elif mode == "euclidean_gauss":
            noise_ctx = NoiseContext(
                mode=mode, budget=config.budget, clip_bound=config.clip_bound,
                euclid_draw=rng_noise.standard_normal((n, config.hidden_dim)),
            )
        elif mode == "euclidean_laplace":
            noise_ctx = NoiseContext(
                mode=mode, budget=config.budget, clip_bound=config.clip_bound,
                euclid_draw=rng_noise.laplace(0.0, 1.0, size=(n, config.hidden_dim)),
            )

        logits, cache = gcn_forward(adj_norm, X, params, noise_ctx)
        loss = task_loss(logits, y, dataset.train_mask)
        grads = backward(adj_norm, cache, params, y, dataset.train_mask)

        opt.step(params.W, grads["W"])
        if noise_ctx is not None and noise_ctx.learnable_beta():
            logit = np.array(params.beta_logit)
            beta_opt.step([logit], [np.array(grads["beta_logit"])])
            params.beta_logit = min(
                BETA_LOGIT_BOUND, max(-BETA_LOGIT_BOUND, float(logit))
            )

        wf1, mf1 = _f1_scores(logits, y, dataset.test_mask)
        noise_delta = cache.H_hat - cache.H1
        node_noise = np.linalg.norm(noise_delta, axis=1)
        eps_r, eps_alpha = (0.0, 0.0)
        if cache.beta is not None:
            eps_r, eps_alpha = split_budget_value(cache.beta, config.budget.epsilon)
        elif mode in ("euclidean_gauss", "euclidean_laplace"):
            eps_r, eps_alpha = config.budget.epsilon, 0.0

        hist["epoch"].append(epoch)
        hist["loss"].append(loss)
        hist["weighted_f1"].append(wf1)
        hist["micro_f1"].append(mf1)
        hist["epsilon_r"].append(eps_r)
        hist["epsilon_alpha"].append(eps_alpha)
        hist["sigma_r"].append(cache.sigma_r)
        hist["sigma_alpha"].append(cache.sigma_alpha)
        hist["mean_noise_norm"].append(float(node_noise.mean()))

    metrics = {k: np.asarray(v) for k, v in hist.items()}
    clean_logits, _ = gcn_forward(adj_norm, X, params, None)
    clean_wf1, clean_mf1 = _f1_scores(clean_logits, y, dataset.test_mask)
    return TrainResult(
        params=params,
        metrics=metrics,
        final_weighted_f1=float(metrics["weighted_f1"][-1]),
        final_micro_f1=float(metrics["micro_f1"][-1]),
        node_noise_norm=node_noise,
        noise_mode=mode,
        clean_weighted_f1=float(clean_wf1),
        clean_micro_f1=float(clean_mf1),
    )


def split_budget_value(beta, epsilon):
    eps_r = beta * epsilon
    return eps_r, epsilon - eps_r


def predict_posteriors(dataset, params, noise_ctx=None):
    """Softmax outputs of the released model (noise applied when given)."""
    adj_norm = normalize_adjacency(dataset)
    logits, _ = gcn_forward(adj_norm, dataset.features.astype(np.float64),
                            params, noise_ctx)
    return softmax(logits)
