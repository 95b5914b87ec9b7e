"""Representation probes: clustering + AMI, linear probe, dissection, landscape."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .cloud import CloudLike, TransformSpec, apply_transforms
from .errors import LengthMismatch, MaskLengthMismatch, SingleClass, TooFewItems, InputError
from .losses import alpha_schedule
from .model import ModelParams, encoder_forward, sample_loss

# --------------------------------------------------------------------------
# clustering
# --------------------------------------------------------------------------


@dataclass
class Clustering:
    labels: np.ndarray
    k: int
    centroids: np.ndarray | None = None
    inertia: float = 0.0
    history: list[float] = field(default_factory=list)
    restart: int = 0


def _sqdist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = _sqdist(X, X[centers]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(rest)) if len(rest) else int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, _sqdist(X, X[[nxt]])[:, 0])
    return X[centers].copy()


def _lloyd(X, C, max_iter):
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sqdist(X, C)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(C)):
            members = X[labels == j]
            if len(members):
                C[j] = members.mean(axis=0)
    d = _sqdist(X, C)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(X)), labels].sum())
    return labels, C, inertia, history


def kmeans(X, k: int, rng: np.random.Generator | int = 0, restarts: int = 10,
           max_iter: int = 300, init: np.ndarray | None = None, threads: int = 1) -> Clustering:
    """Lloyd's algorithm from k-means++ seeds; the best of ``restarts`` runs.

    Restart r draws from its own generator derived from one base seed, so
    the result does not depend on ``threads``.  Ties in inertia go to the
    lowest restart index.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1 or len(X) < k:
        raise TooFewItems(f"need at least k={k} items, got {len(X)}")
    if init is not None:
        labels, C, inertia, hist = _lloyd(X, np.array(init, dtype=np.float64), max_iter)
        return Clustering(labels, k, C, inertia, hist, 0)
    base = int(rng.integers(2 ** 63)) if isinstance(rng, np.random.Generator) else int(rng)

    def run(r):
        g = np.random.default_rng(np.random.SeedSequence([base, r]))
        return _lloyd(X, _kmeanspp(X, k, g), max_iter)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(r) for r in range(restarts)]
    best = min(range(restarts), key=lambda r: (results[r][2], r))
    labels, C, inertia, hist = results[best]
    return Clustering(labels, k, C, inertia, hist, best)


def _labels(c) -> np.ndarray:
    return np.asarray(c.labels if isinstance(c, Clustering) else c)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _expected_mi(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """E[MI] under the hypergeometric model of random labelings with fixed marginals."""
    emi = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            term = (nij / n) * (np.log(n * nij) - np.log(ai * bj))
            logp = (gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                    - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                    - gammaln(n - ai - bj + nij + 1))
            emi += float((term * np.exp(logp)).sum())
    return emi


def ami(a, b) -> float:
    """Adjusted mutual information, arithmetic-mean normalization; 0 when 0/0."""
    la, lb = _labels(a), _labels(b)
    if len(la) != len(lb):
        raise LengthMismatch(f"clusterings label {len(la)} and {len(lb)} items")
    n = len(la)
    if n == 0:
        return 0.0
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    ra, rb = table.sum(1), table.sum(0)
    ha, hb = _entropy(ra, n), _entropy(rb, n)
    nz = table > 0
    nij = table[nz].astype(np.float64)
    outer = np.outer(ra, rb)[nz].astype(np.float64)
    mi = float((nij / n * (np.log(n * nij) - np.log(outer))).sum())
    emi = _expected_mi(ra, rb, n)
    # identical partitions score 1 even when the chance-corrected ratio is 0/0
    if (nz.sum(0) == 1).all() and (nz.sum(1) == 1).all():
        return 1.0
    denom = 0.5 * (ha + hb) - emi
    if abs(denom) < 1e-15:
        return 0.0
    return float(np.clip((mi - emi) / denom, -1.0, 1.0))


# --------------------------------------------------------------------------
# embeddings and the transformation-robustness table
# --------------------------------------------------------------------------


def embed(clouds, params: ModelParams, threads: int = 1) -> np.ndarray:
    """Stack of max-pooled embeddings, one row per cloud."""
    def one(c):
        return encoder_forward(c, params)[0].vector

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, clouds)))
    return np.array([one(c) for c in clouds])


ROBUSTNESS_ROWS = (
    ("none", ()),
    ("J", (TransformSpec("jitter"),)),
    ("J+T", (TransformSpec("jitter"), TransformSpec("translate"))),
    ("J+T+R", (TransformSpec("jitter"), TransformSpec("translate"), TransformSpec("rotate"))),
)


@dataclass
class ProbeRow:
    transform: str
    mean: float
    stderr: float
    values: list[float]


def robustness_probe(params: ModelParams, clouds: list[CloudLike], labels, seed: int = 0,
                     n_seeds: int = 10, rows=ROBUSTNESS_ROWS, threads: int = 1,
                     k: int | None = None) -> list[ProbeRow]:
    """AMI of k-means on embeddings against true labels, per cumulative transform row.

    Seed s of every row uses the same derived generator, so rows differ only
    by their transforms.
    """
    labels = np.asarray(labels)
    k = len(np.unique(labels)) if k is None else k
    out = []
    for name, specs in rows:
        vals = []
        for s in range(n_seeds):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7, s]))
            moved = [apply_transforms(c, specs, rng) for c in clouds]
            Z = embed(moved, params, threads)
            cl = kmeans(Z, k, int(rng.integers(2 ** 63)), threads=threads)
            vals.append(ami(cl, labels))
        v = np.array(vals)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append(ProbeRow(name, float(v.mean()), se, vals))
    return out


# --------------------------------------------------------------------------
# linear probe
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeConfig:
    iterations: int = 500
    lr: float = 0.1
    l2: float = 1e-3


@dataclass
class ProbeModel:
    classes: np.ndarray
    W: np.ndarray        # (n_classes, d)
    b: np.ndarray        # (n_classes,)
    mean: np.ndarray
    scale: np.ndarray

    def decision(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
        return Z @ self.W.T + self.b

    def predict(self, X) -> np.ndarray:
        return self.classes[self.decision(X).argmax(axis=1)]


def fit_linear_probe(X, y, config: ProbeConfig = ProbeConfig()) -> ProbeModel:
    """One-vs-rest hinge-loss classifiers, full-batch subgradient descent from zero."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass("linear probe needs at least two classes in the training set")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    T = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
    n, d = Z.shape
    W = np.zeros((len(classes), d))
    b = np.zeros(len(classes))
    for _ in range(config.iterations):
        margin = T * (Z @ W.T + b)
        active = (margin < 1.0) * -T
        W -= config.lr * (active.T @ Z / n + config.l2 * W)
        b -= config.lr * active.mean(axis=0)
    return ProbeModel(classes, W, b, mean, scale)


def linear_probe(X_train, y_train, X_test, y_test, config: ProbeConfig = ProbeConfig()) -> float:
    """Test accuracy of a linear probe fit on the training embeddings."""
    model = fit_linear_probe(X_train, y_train, config)
    return float((model.predict(X_test) == np.asarray(y_test)).mean())


# --------------------------------------------------------------------------
# dissection
# --------------------------------------------------------------------------


def activation_mask(activations, fraction: float = 0.2) -> np.ndarray:
    """Mark the ceil(fraction * n) largest activations; ties go to lower indices."""
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
        squeeze = True
    else:
        squeeze = False
    n = a.shape[0]
    if n < 1:
        raise InputError("activation_mask needs at least one point")
    top = min(n, math.ceil(fraction * n - 1e-9))
    order = np.argsort(-a, axis=0, kind="stable")[:top]
    mask = np.zeros(a.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=0)
    return mask[:, 0] if squeeze else mask


def concept_masks(part_labels, n_concepts: int | None = None) -> np.ndarray:
    """One boolean column per part id."""
    p = np.asarray(part_labels, dtype=np.int64)
    n_concepts = int(p.max()) + 1 if n_concepts is None else n_concepts
    return p[:, None] == np.arange(n_concepts)[None, :]


def dissection_miou(act_masks, con_masks) -> np.ndarray:
    """Mean over objects of per-(channel, concept) IoU; an empty union counts as 0."""
    if len(act_masks) != len(con_masks):
        raise MaskLengthMismatch("need one activation mask set per concept mask set")
    total = None
    for M, C in zip(act_masks, con_masks):
        M = np.asarray(M, dtype=bool)
        C = np.asarray(C, dtype=bool)
        if M.ndim == 1:
            M = M[:, None]
        if C.ndim == 1:
            C = C[:, None]
        if len(M) != len(C):
            raise MaskLengthMismatch(f"activation mask covers {len(M)} points, concept mask {len(C)}")
        Mf, Cf = M.astype(np.float64), C.astype(np.float64)
        inter = Mf.T @ Cf
        union = Mf.sum(0)[:, None] + Cf.sum(0)[None, :] - inter
        iou = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
        total = iou if total is None else total + iou
    if total is None:
        raise MaskLengthMismatch("no objects given")
    return total / len(act_masks)


@dataclass
class ConceptCount:
    total: int
    unique: int
    per_concept: np.ndarray


def count_detected_concepts(miou, threshold: float = 0.5) -> ConceptCount:
    hit = np.asarray(miou, dtype=np.float64) > threshold
    if hit.ndim == 1:
        hit = hit[None, :]
    per = hit.sum(axis=0)
    return ConceptCount(int(hit.sum()), int((per > 0).sum()), per)


def channel_activations(cloud: CloudLike, params: ModelParams) -> list[np.ndarray]:
    """Per-point feature maps of every encoder layer (hidden ones post-ReLU)."""
    _, cache = encoder_forward(cloud, params)
    return cache.features + [cache.enc_pre[-1]]


def dissect(clouds, part_labels, params: ModelParams, fraction: float = 0.2,
            n_concepts: int | None = None) -> list[np.ndarray]:
    """mIoU matrix (channels x concepts) for each encoder layer."""
    if len(clouds) != len(part_labels):
        raise MaskLengthMismatch("need one part label array per cloud")
    if n_concepts is None:
        n_concepts = int(max(np.max(p) for p in part_labels)) + 1
    per_layer_acts: list[list[np.ndarray]] | None = None
    cons = []
    for cloud, parts in zip(clouds, part_labels):
        feats = channel_activations(cloud, params)
        if per_layer_acts is None:
            per_layer_acts = [[] for _ in feats]
        for k, f in enumerate(feats):
            per_layer_acts[k].append(activation_mask(f, fraction))
        cons.append(concept_masks(parts, n_concepts))
    return [dissection_miou(masks, cons) for masks in per_layer_acts]


def miou_csv(mats: list[np.ndarray], concept_names=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n_con = mats[0].shape[1]
    names = list(concept_names) if concept_names is not None else [f"concept{j}" for j in range(n_con)]
    w.writerow(["layer", "channel"] + names)
    for layer, m in enumerate(mats):
        for ch, row in enumerate(m):
            w.writerow([f"feat{layer + 1}", ch] + [repr(float(x)) for x in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# loss landscape
# --------------------------------------------------------------------------


@dataclass
class LandscapeSlice:
    alphas: np.ndarray
    betas: np.ndarray
    loss: np.ndarray          # (len(alphas), len(betas))
    delta: ModelParams
    eta: ModelParams
    seed: int

    def center(self) -> float:
        c = len(self.alphas) // 2
        return float(self.loss[c, c])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "beta", "loss"])
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.betas):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(self.loss[i, j]))])
        return buf.getvalue()


def filter_normalized_direction(params: ModelParams, rng: np.random.Generator) -> ModelParams:
    """Gaussian direction with every filter rescaled to its counterpart's norm.

    A filter is one output row of a weight matrix; a bias vector is one filter.
    """
    out = {}
    for name, theta in params:
        d = rng.standard_normal(theta.shape)
        if theta.ndim == 1:
            nd = np.linalg.norm(d)
            d = d * (np.linalg.norm(theta) / nd if nd > 0 else 0.0)
        else:
            nd = np.linalg.norm(d, axis=1, keepdims=True)
            nt = np.linalg.norm(theta, axis=1, keepdims=True)
            d = d * np.divide(nt, nd, out=np.zeros_like(nt), where=nd > 0)
        out[name] = d
    return ModelParams(params.dims, out)


def dataset_loss(params: ModelParams, dataset, step: int = 0, alpha: float | None = None) -> float:
    a = alpha_schedule(step) if alpha is None else alpha
    return float(np.mean([sample_loss(s, params, step, alpha=a) for s in dataset]))


def landscape_slice(params: ModelParams, dataset, grid_side: int = 11, seed: int = 0,
                    step: int = 0, alpha: float | None = None, threads: int = 1) -> LandscapeSlice:
    """Mean completion loss on the plane theta* + a*delta + b*eta, a, b in [-1, 1]."""
    if grid_side < 3 or grid_side % 2 == 0:
        raise InputError("grid_side must be odd and >= 3")
    dataset = list(dataset)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    delta = filter_normalized_direction(params, rng)
    eta = filter_normalized_direction(params, rng)
    grid = np.linspace(-1.0, 1.0, grid_side)
    c = grid_side // 2
    grid[c] = 0.0
    nodes = [(i, j) for i in range(grid_side) for j in range(grid_side)]

    def at(node):
        i, j = node
        if i == c and j == c:
            p = params
        else:
            p = ModelParams(params.dims, {n: params[n] + grid[i] * delta[n] + grid[j] * eta[n]
                                          for n in params.names()})
        return dataset_loss(p, dataset, step, alpha)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(at, nodes))
    else:
        vals = [at(nd) for nd in nodes]
    loss = np.array(vals).reshape(grid_side, grid_side)
    return LandscapeSlice(grid, grid.copy(), loss, delta, eta, seed)
