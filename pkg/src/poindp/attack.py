"""Membership-inference attack harness and graph hyperbolicity.

The attack follows the shadow-model recipe: a shadow GCN is trained on a
split disjoint from the target's evaluation data, its sorted posterior
vectors (optionally extended with the node's ball norm as a hierarchy
feature) form the attack training set, and a small MLP scores membership.
AUC and precision are reported against the target model's own train /
held-out nodes.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path
from sklearn.metrics import roc_auc_score

from . import gnn
from .kernels import gromov_scan


@dataclass
class ShadowSplit:
    members: np.ndarray
    non_members: np.ndarray
    train_mask: np.ndarray

    def validate(self):
        if np.intersect1d(self.members, self.non_members).size:
            raise ValueError("shadow member and non-member pools overlap")
        return self


@dataclass
class AttackMetrics:
    auc: float
    precision: float


def build_shadow_splits(dataset, seed, size=None):
    """Equal-size member/non-member pools, disjoint from the target's
    evaluation data (its test mask), deterministic per seed."""
    eval_nodes = np.flatnonzero(dataset.test_mask)
    pool = np.setdiff1d(np.arange(dataset.num_nodes), eval_nodes)
    if size is None:
        size = pool.size // 4
    if 2 * size > pool.size or size < 1:
        raise ValueError(
            f"dataset too small for shadow split of size {size} "
            f"(pool of {pool.size} nodes)"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(pool)[: 2 * size]
    members = np.sort(chosen[:size])
    non_members = np.sort(chosen[size:])
    mask = np.zeros(dataset.num_nodes, dtype=bool)
    mask[members] = True
    return ShadowSplit(members, non_members, mask).validate()


def _attack_records(posteriors, nodes, label, embed_table=None):
    """Sorted posterior vectors, optionally with the hierarchy feature."""
    feats = np.sort(posteriors[nodes], axis=1)[:, ::-1]
    if embed_table is not None:
        h = embed_table.norms()[nodes][:, None]
        feats = np.concatenate([feats, h], axis=1)
    labels = np.full(nodes.shape[0], label, dtype=np.int64)
    return feats, labels


def _mlp_init(rng, dims):
    ws, bs = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        ws.append(gnn.glorot(rng, (a, b)))
        bs.append(np.zeros(b))
    return ws, bs


def _mlp_forward(x, ws, bs):
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        h = h @ w + b
        if i < len(ws) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h.ravel(), acts


def train_attack_mlp(x, y, rng, hidden=32, epochs=400, lr=0.05):
    """Two-hidden-layer MLP with a sigmoid head, plain gradient descent.

    Same manual-gradient style as the GCN; returns a scoring closure.
    """
    mu = x.mean(axis=0)
    sd = x.std(axis=0) + 1e-9
    xn = (x - mu) / sd
    ws, bs = _mlp_init(rng, [x.shape[1], hidden, hidden, 1])
    n = x.shape[0]
    for _ in range(epochs):
        z, acts = _mlp_forward(xn, ws, bs)
        p = 1.0 / (1.0 + np.exp(-z))
        dz = ((p - y) / n)[:, None]
        for i in reversed(range(len(ws))):
            a_in = acts[i]
            dw = a_in.T @ dz
            db = dz.sum(axis=0)
            if i > 0:
                dz = (dz @ ws[i].T) * (acts[i] > 0)
            ws[i] -= lr * dw
            bs[i] -= lr * db

    def score(feats):
        z, _ = _mlp_forward((feats - mu) / sd, ws, bs)
        return 1.0 / (1.0 + np.exp(-z))

    return score


def attack_metrics(scores, labels, threshold=0.5) -> AttackMetrics:
    auc = float(roc_auc_score(labels, scores))
    pred = scores >= threshold
    tp = float(np.sum(pred & (labels == 1)))
    fp = float(np.sum(pred & (labels == 0)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    return AttackMetrics(auc=auc, precision=precision)


def run_mia(target_posteriors, dataset, shadow_config, seed,
            with_hierarchy=False, embed_table=None,
            attack_epochs=400) -> AttackMetrics:
    """Shadow-train, fit the attack MLP, score the target's membership.

    ``target_posteriors`` are the target model's released softmax outputs
    (noisy for protected targets). Member records come from the target's
    training nodes, non-member records from an equal number of its test
    nodes.
    """
    if with_hierarchy and embed_table is None:
        raise ValueError("with_hierarchy requires an embedding table")
    table = embed_table if with_hierarchy else None

    split = build_shadow_splits(dataset, seed)
    shadow_ds = _with_train_mask(dataset, split.train_mask)
    shadow_cfg = _as_mode(shadow_config, "none")
    shadow = gnn.train_poindp(shadow_ds, None, shadow_cfg)
    shadow_post = gnn.predict_posteriors(shadow_ds, shadow.params)

    fx_in, y_in = _attack_records(shadow_post, split.members, 1, table)
    fx_out, y_out = _attack_records(shadow_post, split.non_members, 0, table)
    x = np.concatenate([fx_in, fx_out])
    y = np.concatenate([y_in, y_out]).astype(np.float64)
    rng = np.random.default_rng(seed + 1)
    score = train_attack_mlp(x, y, rng, epochs=attack_epochs)

    members = np.flatnonzero(dataset.train_mask)
    held_out = np.flatnonzero(dataset.test_mask)
    rng_eval = np.random.default_rng(seed + 2)
    k = min(members.size, held_out.size)
    members = rng_eval.permutation(members)[:k]
    held_out = rng_eval.permutation(held_out)[:k]
    fe_in, ye_in = _attack_records(target_posteriors, members, 1, table)
    fe_out, ye_out = _attack_records(target_posteriors, held_out, 0, table)
    feats = np.concatenate([fe_in, fe_out])
    labels = np.concatenate([ye_in, ye_out])
    return attack_metrics(score(feats), labels)


def target_posteriors(dataset, result, config, embed_table=None, seed=0):
    """Released softmax outputs of a trained target model.

    Protected arms release a noisy forward pass (fresh draw, deterministic
    per seed); the unprotected target releases clean posteriors.
    """
    mode = result.noise_mode
    if mode == "none":
        return gnn.predict_posteriors(dataset, result.params)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 9151]))
    n, h = dataset.num_nodes, config.hidden_dim
    if mode in ("poindp", "no_inter", "no_intra", "no_allocate"):
        from .privacy import (
            SensitivityPair,
            inter_hierarchy_sensitivity,
            intra_hierarchy_sensitivity,
        )

        nodes = np.arange(n)
        sens = SensitivityPair(
            inter_hierarchy_sensitivity(embed_table, nodes),
            intra_hierarchy_sensitivity(embed_table, nodes, config.clip_tau),
        )
        ctx = gnn.NoiseContext(
            mode=mode, sens=sens, budget=config.budget,
            zeta_r=rng.standard_normal((n, h)),
            zeta_alpha=rng.standard_normal((n, h)),
        )
    else:
        draw = (rng.standard_normal((n, h)) if mode == "euclidean_gauss"
                else rng.laplace(0.0, 1.0, size=(n, h)))
        ctx = gnn.NoiseContext(mode=mode, budget=config.budget,
                               clip_bound=config.clip_bound, euclid_draw=draw)
    return gnn.predict_posteriors(dataset, result.params, ctx)


def _with_train_mask(dataset, mask):
    from dataclasses import replace

    other = ~mask & ~dataset.test_mask
    return replace(dataset, train_mask=mask, val_mask=other,
                   test_mask=dataset.test_mask)


def _as_mode(config: gnn.TrainConfig, mode):
    from dataclasses import replace

    return replace(config, noise_mode=mode)


def hop_distance_matrix(dataset, nodes=None):
    adj = dataset.adj if nodes is None else dataset.adj[nodes][:, nodes]
    return shortest_path(adj, method="D", unweighted=True)


def largest_component_nodes(dataset):
    _, labels = connected_components(dataset.adj, directed=False)
    counts = np.bincount(labels)
    return np.flatnonzero(labels == np.argmax(counts))


def gromov_delta(dataset, mode="exact", samples=100000, seed=0,
                 use_largest_component=True):
    """Four-point hyperbolicity over BFS hop distances.

    'exact' scans every quadruple (feasible up to a few hundred nodes);
    'sampled' takes random quadruples and therefore never exceeds the
    exact value.
    """
    n_comp, _ = connected_components(dataset.adj, directed=False)
    if n_comp > 1:
        if not use_largest_component:
            raise ValueError(
                "graph is disconnected; enable use_largest_component"
            )
        nodes = largest_component_nodes(dataset)
    else:
        nodes = None
    D = hop_distance_matrix(dataset, nodes)
    n = D.shape[0]
    if n < 4:
        return 0.0
    if mode == "exact":
        return float(gromov_scan(np.ascontiguousarray(D)))
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    quad = np.empty((samples, 4), dtype=np.int64)
    for i in range(4):
        quad[:, i] = rng.integers(0, n, size=samples)
    s1 = D[quad[:, 0], quad[:, 1]] + D[quad[:, 2], quad[:, 3]]
    s2 = D[quad[:, 0], quad[:, 2]] + D[quad[:, 1], quad[:, 3]]
    s3 = D[quad[:, 0], quad[:, 3]] + D[quad[:, 1], quad[:, 2]]
    stacked = np.stack([s1, s2, s3])
    stacked.sort(axis=0)
    return float(np.max(stacked[2] - stacked[1]) / 2.0)
