"""Dataset loading, synthetic hierarchical graphs, splits and statistics.

File formats (UTF-8, newline delimited, lines starting with '#' skipped):
  edges     two whitespace-separated integer columns per line
  features  CSV: node_id, value_1, ..., value_d
  labels    CSV: node_id, class_id

Edges are deduplicated and symmetrised on load; self loops are dropped and
re-added only at model time.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class DataError(ValueError):
    """Raised for malformed or inconsistent dataset inputs."""


@dataclass
class GraphDataset:
    """Undirected graph with node features, labels and split masks.

    ``edges`` holds each undirected edge once with u < v; ``adj`` is the
    symmetric CSR adjacency without self loops. ``raw_edge_count`` is the
    number of edge lines seen before deduplication (public dumps often
    count directed lines, so both totals are kept).
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    adj: sp.csr_matrix = field(repr=False)
    raw_edge_count: int = 0

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def validate(self):
        n = self.num_nodes
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise DataError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise DataError("self loop stored in edge list")
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise DataError("feature/label row count does not match node count")
        if (self.adj != self.adj.T).nnz != 0:
            raise DataError("adjacency is not symmetric")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise DataError("masks are not pairwise disjoint")
        return self


@dataclass
class SplitSpec:
    """Semi-supervised split: per-class train quota plus val/test pools."""

    train_per_class: int = 20
    num_val: int = 500
    num_test: int = 1000
    seed: int = 0


@dataclass
class SyntheticSpec:
    """Parameters for the synthetic graph families.

    kind 'balanced_tree' uses branching/depth; 'two_block' and
    'hierarchical_blocks' use block_size (and for the latter a block tree of
    given branching/depth whose vertices are node communities). Features are
    class means plus Gaussian noise of scale ``noise_scale``; for
    hierarchical blocks the noise additionally grows with block depth by
    ``depth_noise_factor``, so deeper communities are intrinsically harder.
    """

    kind: str = "balanced_tree"
    branching: int = 3
    depth: int = 4
    block_size: int = 30
    feature_dim: int = 16
    class_sep: float = 1.0
    noise_scale: float = 1.0
    intra_p: float = 0.3
    inter_p: float = 0.02
    depth_noise_factor: float = 0.0
    train_frac: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("balanced_tree", "hierarchical_blocks", "two_block"):
            raise DataError(f"unknown synthetic kind {self.kind!r}")
        if self.branching <= 0 or self.depth < 0 or self.block_size <= 0:
            raise DataError("synthetic size parameters must be positive")


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _dedupe_edges(pairs):
    """Drop self loops, orient u < v, deduplicate. Keeps raw count."""
    raw = len(pairs)
    if raw == 0:
        raise DataError("empty edge list")
    arr = np.asarray(pairs, dtype=np.int64)
    arr = arr[arr[:, 0] != arr[:, 1]]
    lo = arr.min(axis=1)
    hi = arr.max(axis=1)
    und = np.unique(np.stack([lo, hi], axis=1), axis=0)
    if und.shape[0] == 0:
        raise DataError("edge list contains only self loops")
    return und, raw


def _build_adj(n, edges):
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    vals = np.ones(rows.shape[0])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def make_split_masks(labels, spec: SplitSpec):
    """Public-style split: ``train_per_class`` per class, then val, then test.

    Selection is a seeded permutation of node ids, so identical inputs give
    identical masks.
    """
    n = labels.shape[0]
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)
    train = np.zeros(n, dtype=bool)
    taken = np.zeros(len(np.unique(labels)), dtype=np.int64)
    for idx in order:
        cls = labels[idx]
        if taken[cls] < spec.train_per_class:
            train[idx] = True
            taken[cls] += 1
    rest = order[~train[order]]
    n_val = min(spec.num_val, max(0, rest.size - 1))
    n_test = min(spec.num_test, rest.size - n_val)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[:n_val]] = True
    test[rest[n_val:n_val + n_test]] = True
    return train, val, test


def load_dataset(edge_file, feature_file, label_file, split_spec=None) -> GraphDataset:
    """Load and validate a dataset from the three text files."""
    raw_pairs = []
    for lineno, line in _read_lines(edge_file):
        cols = line.split()
        if len(cols) != 2:
            raise DataError(f"{edge_file}:{lineno}: expected two columns")
        raw_pairs.append((int(cols[0]), int(cols[1])))
    if not raw_pairs:
        raise DataError(f"{edge_file}: empty edge list")

    feats = {}
    for lineno, line in _read_lines(feature_file):
        cols = line.split(",")
        nid = int(cols[0])
        if nid in feats:
            raise DataError(f"{feature_file}:{lineno}: duplicate node id {nid}")
        feats[nid] = np.asarray([float(v) for v in cols[1:]], dtype=np.float64)

    labels = {}
    for lineno, line in _read_lines(label_file):
        cols = line.split(",")
        if len(cols) != 2:
            raise DataError(f"{label_file}:{lineno}: expected node_id,class")
        labels[int(cols[0])] = int(cols[1])

    if set(feats) != set(labels):
        raise DataError("feature and label files cover different node ids")
    ids = sorted(feats)
    remap = {nid: i for i, nid in enumerate(ids)}
    dims = {f.size for f in feats.values()}
    if len(dims) != 1:
        raise DataError("inconsistent feature dimension across rows")

    try:
        mapped = [(remap[u], remap[v]) for u, v in raw_pairs]
    except KeyError as exc:
        raise DataError(f"edge endpoint {exc} has no feature/label row") from exc
    edges, raw = _dedupe_edges(mapped)

    features = np.stack([feats[nid] for nid in ids])
    y = np.asarray([labels[nid] for nid in ids], dtype=np.int64)
    classes = np.unique(y)
    y = np.searchsorted(classes, y)
    n = len(ids)

    spec = split_spec or SplitSpec()
    train, val, test = make_split_masks(y, spec)
    ds = GraphDataset(
        num_nodes=n,
        edges=edges,
        features=features,
        labels=y,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        adj=_build_adj(n, edges),
        raw_edge_count=raw,
    )
    return ds.validate()


def _tree_edges_and_depths(branching, depth):
    """Balanced tree, root 0, children appended level by level."""
    edges = []
    depths = [0]
    nxt = 1
    frontier = [0]
    for level in range(depth):
        new_frontier = []
        for parent in frontier:
            for _ in range(branching):
                edges.append((parent, nxt))
                depths.append(level + 1)
                new_frontier.append(nxt)
                nxt += 1
        frontier = new_frontier
    return np.asarray(edges, dtype=np.int64), np.asarray(depths, dtype=np.int64)


def _block_tree_depths(branching, depth):
    _, depths = _tree_edges_and_depths(branching, depth)
    return depths


def gen_synthetic(spec: SyntheticSpec) -> GraphDataset:
    """Deterministic synthetic graph for the given spec and seed."""
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "balanced_tree":
        edges, depths = _tree_edges_and_depths(spec.branching, spec.depth)
        n = depths.shape[0]
        labels = depths.copy()
    elif spec.kind == "two_block":
        g = spec.block_size
        n = 2 * g
        labels = np.repeat(np.arange(2), g)
        pairs = []
        for blk in range(2):
            base = blk * g
            for i in range(g):
                for j in range(i + 1, g):
                    if rng.random() < spec.intra_p:
                        pairs.append((base + i, base + j))
        for i in range(g):
            for j in range(g, n):
                if rng.random() < spec.inter_p:
                    pairs.append((i, j))
        # keep every block connected regardless of the draw
        for blk in range(2):
            base = blk * g
            for i in range(1, g):
                pairs.append((base + i - 1, base + i))
        pairs.append((0, g))
        edges, _ = _dedupe_edges(pairs)
    else:  # hierarchical_blocks
        tree_edges, block_depths = _tree_edges_and_depths(spec.branching, spec.depth)
        n_blocks = block_depths.shape[0]
        g = spec.block_size
        n = n_blocks * g
        labels = np.repeat(np.arange(n_blocks), g)
        pairs = []
        for blk in range(n_blocks):
            base = blk * g
            for i in range(g):
                for j in range(i + 1, g):
                    if rng.random() < spec.intra_p:
                        pairs.append((base + i, base + j))
            for i in range(1, g):
                pairs.append((base + i - 1, base + i))
        for bu, bv in tree_edges:
            linked = False
            for i in range(g):
                for j in range(g):
                    if rng.random() < spec.inter_p:
                        pairs.append((bu * g + i, bv * g + j))
                        linked = True
            if not linked and spec.inter_p > 0:
                pairs.append((bu * g, bv * g))
        edges, _ = _dedupe_edges(pairs)

    n_classes = int(labels.max()) + 1
    means = rng.normal(0.0, 1.0, size=(n_classes, spec.feature_dim))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    means = spec.class_sep * means / np.maximum(norms, 1e-12)
    noise = rng.normal(0.0, spec.noise_scale, size=(n, spec.feature_dim))
    if spec.kind == "hierarchical_blocks" and spec.depth_noise_factor > 0:
        block_depths = _block_tree_depths(spec.branching, spec.depth)
        per_node_depth = block_depths[labels]
        amp = 1.0 + spec.depth_noise_factor * per_node_depth / max(1, spec.depth)
        noise = noise * amp[:, None]
    features = means[labels] + noise

    order = rng.permutation(n)
    n_train = int(round(spec.train_frac * n))
    n_rest = n - n_train
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    val[order[n_train:n_train + n_rest // 2]] = True
    test[order[n_train + n_rest // 2:]] = True

    ds = GraphDataset(
        num_nodes=n,
        edges=edges,
        features=features,
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        adj=_build_adj(n, edges),
        raw_edge_count=int(edges.shape[0]),
    )
    return ds.validate()


def make_hierarchy_splits(dataset, embed_table, mode, frac, seed=0):
    """Train masks from the hierarchy: 'top_level' picks the ``frac`` of
    nodes with the smallest ball norm, 'bottom_level' the largest,
    'random' samples uniformly. Remaining nodes split evenly into val/test.
    """
    if not 0.0 < frac < 1.0:
        raise DataError(f"frac must lie in (0, 1), got {frac}")
    n = dataset.num_nodes
    n_train = int(round(frac * n))
    if mode == "random":
        rng = np.random.default_rng(seed)
        chosen = rng.permutation(n)[:n_train]
    elif mode in ("top_level", "bottom_level"):
        if embed_table is None:
            raise DataError(f"mode {mode!r} requires an embedding table")
        norms = embed_table.norms()
        order = np.argsort(norms, kind="stable")
        chosen = order[:n_train] if mode == "top_level" else order[-n_train:]
    else:
        raise DataError(f"unknown split mode {mode!r}")

    train = np.zeros(n, dtype=bool)
    train[chosen] = True
    rest = np.flatnonzero(~train)
    rng = np.random.default_rng(seed + 1)
    rest = rng.permutation(rest)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[: rest.size // 2]] = True
    test[rest[rest.size // 2:]] = True
    return train, val, test


def dataset_stats(dataset: GraphDataset):
    """(nodes, undirected edges, classes, average degree 2E/N)."""
    n = dataset.num_nodes
    e = int(dataset.edges.shape[0])
    k = dataset.num_classes
    avg_deg = 2.0 * e / n
    return {"nodes": n, "edges": e, "labels": k, "avg_degree": avg_deg}
