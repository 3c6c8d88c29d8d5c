"""Shallow hierarchy-aware node embeddings in the Poincare ball.

Nodes are placed by Riemannian SGD on a distance softmax with negative
sampling: for a directed edge (u, v) and negatives v',

    loss = -log( exp(-d(u, v)) / sum_{v' in {v} + negatives} exp(-d(u, v')) )

Training is sequential and deterministic for a fixed seed; the finished
table is immutable in practice and safe to share.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .kernels import embed_epoch


@dataclass
class EmbedConfig:
    dim: int = 2
    lr: float = 0.3
    epochs: int = 500
    neg_samples: int = 20
    burn_in_epochs: int = 20
    seed: int = 0
    curvature: float = 1.0
    init_radius: float = 1e-3
    margin: float = geo.BALL_MARGIN

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.neg_samples < 1:
            raise ValueError("need at least one negative sample")
        if self.dim < 1 or self.epochs < 1 or self.burn_in_epochs < 0:
            raise ValueError("invalid embedding configuration")


class EmbeddingTable:
    """Per-node ball points with radius/angle accessors."""

    def __init__(self, points, curvature=1.0):
        self.points = np.asarray(points, dtype=np.float64)
        self.curvature = float(curvature)
        if self.points.ndim != 2:
            raise ValueError("points must be a (nodes, dim) array")

    @property
    def num_nodes(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def _check(self, u):
        if not 0 <= u < self.num_nodes:
            raise KeyError(f"unknown node id {u}")

    def node_radius(self, u):
        self._check(u)
        return float(geo.poincare_norm(self.points[u], c=self.curvature))

    def node_angle(self, u, v):
        self._check(u)
        self._check(v)
        return float(geo.angle(self.points[u], self.points[v]))

    def norms(self):
        return geo.poincare_norm(self.points, c=self.curvature)

    def save(self, path):
        """Text serialization: '# dim=D curvature=C' then 'id v1 ... vD'."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# dim={self.dim} curvature={self.curvature!r}\n")
            for i, row in enumerate(self.points):
                vals = " ".join(repr(float(v)) for v in row)
                fh.write(f"{i} {vals}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("#"):
                raise ValueError(f"{path}: missing embedding header line")
            fields = dict(
                tok.split("=") for tok in header.lstrip("#").split() if "=" in tok
            )
            dim = int(fields["dim"])
            curvature = float(fields["curvature"])
            rows = {}
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                cols = line.split()
                if len(cols) != dim + 1:
                    raise ValueError(f"{path}: row has {len(cols) - 1} values, expected {dim}")
                rows[int(cols[0])] = [float(v) for v in cols[1:]]
        points = np.zeros((len(rows), dim))
        for nid, vals in rows.items():
            points[nid] = vals
        return cls(points, curvature=curvature)


def embedding_loss(table, edge, negatives, c=None):
    """Distance-softmax loss of one positive edge against its negatives."""
    if len(negatives) == 0:
        raise ValueError("negatives must be nonempty")
    c = table.curvature if c is None else c
    u, v = edge
    anchor = table.points[u]
    targets = table.points[np.concatenate([[v], np.asarray(negatives)])]
    d = geo.poincare_distance(anchor[None, :], targets, c=c)
    mx = np.max(-d)
    return float(d[0] + mx + np.log(np.sum(np.exp(-d - mx))))


def riemannian_step(table, grads, lr):
    """theta <- project(theta - lr * ((1 - c||theta||^2)^2 / 4) * grad)."""
    grads = np.asarray(grads, dtype=np.float64)
    bad = ~np.isfinite(grads).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite gradient for node {int(np.flatnonzero(bad)[0])}")
    c = table.curvature
    sq = np.sum(table.points**2, axis=1)
    rescale = (1.0 - c * sq) ** 2 / 4.0
    new_pts = table.points - lr * rescale[:, None] * grads
    return EmbeddingTable(geo.project_to_ball(new_pts, c=c), curvature=c)


def _draw_negatives(rng, num, k, exclude_a, exclude_b, n):
    """k uniform draws per row from [0, n) \\ {a, b}; a != b elementwise."""
    raw = rng.integers(0, n - 2, size=(num, k))
    lo = np.minimum(exclude_a, exclude_b)[:, None]
    hi = np.maximum(exclude_a, exclude_b)[:, None]
    raw = raw + (raw >= lo)
    raw = raw + (raw >= hi)
    return raw.astype(np.int64)


def train_poincare_embedding(graph, config: EmbedConfig):
    """Train the table; returns (EmbeddingTable, per-epoch mean losses)."""
    edges = graph.edges
    if edges.shape[0] == 0:
        raise ValueError("graph has no edges")
    n = graph.num_nodes
    rng = np.random.default_rng(config.seed)
    c = config.curvature

    pts = rng.uniform(-1.0, 1.0, size=(n, config.dim))
    pts *= config.init_radius / np.maximum(
        np.linalg.norm(pts, axis=1, keepdims=True), 1e-12
    )
    pts = np.ascontiguousarray(pts)

    # train on both directions of every undirected edge
    eu = np.concatenate([edges[:, 0], edges[:, 1]]).astype(np.int64)
    ev = np.concatenate([edges[:, 1], edges[:, 0]]).astype(np.int64)
    m = eu.shape[0]

    losses = np.empty(config.epochs)
    for epoch in range(config.epochs):
        lr = config.lr / 10.0 if epoch < config.burn_in_epochs else config.lr
        order = rng.permutation(m)
        negs = _draw_negatives(
            rng, m, config.neg_samples, eu[order], ev[order], n
        )
        total = embed_epoch(
            pts, eu[order], ev[order], negs, lr, c, config.margin
        )
        losses[epoch] = total / m

    return EmbeddingTable(pts, curvature=c), losses
