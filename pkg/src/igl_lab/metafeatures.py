"""Dataset meta-properties used to predict how well AI-IGL does relative to CB.

Field formulas (``N`` rows, ``d`` features, ``K`` classes, logs are natural):

one_nn_accuracy, best_node_accuracy, naive_bayes_accuracy
    Holdout accuracy of 1-NN, a depth-1 entropy decision tree and Gaussian
    naive Bayes, trained on a seeded 70% split and scored on the other 30%.
    Rows are put in a canonical order first, so no field depends on the order
    rows arrive in.
feature_onehot_count
    Number of columns whose values all lie in {0, 1}.
instance_per_feature
    ``N / d``.
class_entropy_N
    Label entropy divided by ``log`` of the number of observed classes; 0 for
    a single class.
max_fisher_discrim
    ``max_j sum_c n_c (mu_cj - mu_j)^2 / sum_c sum_{i in c} (x_ij - mu_cj)^2``.
    Zero within-class and nonzero between-class spread gives ``inf``; 0/0
    gives 0.
max_single_feature_eff
    Fraction of nonzero entries of the feature matrix.
mutual_xy_info_mean
    Mean over features of ``I(B_j; C)``, where ``B_j`` is feature ``j`` cut
    into 10 equal-frequency bins.
noise_signal_ratio
    ``(mean_j H(B_j) - mean_j I(B_j; C)) / mean_j I(B_j; C)``; ``inf`` when the
    mean mutual information is 0.
pca_dims_95
    Smallest ``k`` whose top-``k`` principal components of the centered
    features explain at least 95% of the variance (1 for zero variance).
pca_top_1_percent
    Fraction of variance explained by the top ``ceil(0.01 d)`` components.
n, n_by_sqrt_k, n_by_k
    ``N``, ``N / sqrt(K)``, ``N / K`` with ``K`` the declared class count.

Infinite values serialize as ``INF_SENTINEL``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.tree import DecisionTreeClassifier

from .core import ContractViolation
from .data import SupervisedDataset

INF_SENTINEL = 1e15
NUM_BINS = 10
HOLDOUT_TRAIN = 0.7


@dataclass(frozen=True)
class MetaFeatureRecord:
    one_nn_accuracy: float
    best_node_accuracy: float
    feature_onehot_count: float
    instance_per_feature: float
    class_entropy_N: float
    max_fisher_discrim: float
    max_single_feature_eff: float
    mutual_xy_info_mean: float
    naive_bayes_accuracy: float
    noise_signal_ratio: float
    pca_dims_95: float
    pca_top_1_percent: float
    n: float
    n_by_sqrt_k: float
    n_by_k: float

    def to_json(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = INF_SENTINEL if math.isinf(v) else float(v)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetaFeatureRecord":
        names = [f.name for f in fields(cls)]
        missing = set(names) - set(obj)
        if missing:
            raise ContractViolation(f"meta-feature record lacks {sorted(missing)}")
        return cls(**{k: math.inf if obj[k] >= INF_SENTINEL else float(obj[k]) for k in names})


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def class_entropy_normalized(labels: np.ndarray) -> float:
    k = np.unique(labels).size
    if k <= 1:
        return 0.0
    return float(min(max(_entropy(labels) / math.log(k), 0.0), 1.0))


def fisher_ratios(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-feature between/within class scatter ratio."""
    mu = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c in np.unique(y):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        between += Xc.shape[0] * (mc - mu) ** 2
        within += ((Xc - mc) ** 2).sum(axis=0)
    out = np.zeros(X.shape[1])
    pos = within > 0
    out[pos] = between[pos] / within[pos]
    out[~pos & (between > 0)] = math.inf
    return out


def equal_frequency_bins(column: np.ndarray, num_bins: int = NUM_BINS) -> np.ndarray:
    """Bin codes from empirical quantiles; tied values always share a bin."""
    edges = np.unique(np.quantile(column, np.linspace(0, 1, num_bins + 1)[1:-1]))
    return np.searchsorted(edges, column, side="right")


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= joint.sum()
    pa, pb = joint.sum(1, keepdims=True), joint.sum(0, keepdims=True)
    nz = joint > 0
    return float(max((joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])).sum(), 0.0))


def pca_spectrum(X: np.ndarray) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    # singular values avoid forming the d x d covariance for wide data
    s = np.linalg.svd(Xc, compute_uv=False)
    return s ** 2


def pca_dims(X: np.ndarray, level: float = 0.95) -> int:
    ev = pca_spectrum(X)
    total = ev.sum()
    if total <= 0:
        return 1
    cum = np.cumsum(ev) / total
    return int(min(np.searchsorted(cum, level - 1e-12) + 1, X.shape[1]))


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def landmarkers(X: np.ndarray, y: np.ndarray, seed: int) -> tuple[float, float, float]:
    """Holdout accuracies of 1-NN, a decision stump and Gaussian naive Bayes (rows in canonical order)."""
    perm = np.random.default_rng(seed).permutation(X.shape[0])
    cut = int(round(HOLDOUT_TRAIN * X.shape[0]))
    tr, te = perm[:cut], perm[cut:]
    models = (
        KNeighborsClassifier(n_neighbors=1),
        DecisionTreeClassifier(max_depth=1, criterion="entropy", random_state=seed),
        GaussianNB(),
    )
    accs = []
    for m in models:
        m.fit(X[tr], y[tr])
        accs.append(float(np.mean(m.predict(X[te]) == y[te])))
    return accs[0], accs[1], accs[2]


def compute_meta_features(ds: SupervisedDataset, seed: int = 0) -> MetaFeatureRecord:
    X = np.asarray(ds.features, dtype=float)
    y = np.asarray(ds.labels)
    n, d = X.shape
    if n < 10:
        raise ContractViolation(f"meta-features need at least 10 rows, got {n}")
    if d < 1:
        raise ContractViolation("meta-features need at least one feature")
    if not np.all(np.isfinite(X)):
        raise ContractViolation("features must be finite")
    K = ds.num_classes
    # canonical row order makes every field, sums included, independent of input order
    order = _canonical_order(X, y)
    X, y = X[order], y[order]

    nn, node, nb = landmarkers(X, y, seed)
    bins = [equal_frequency_bins(X[:, j]) for j in range(d)]
    h_mean = float(np.mean([_entropy(b) for b in bins]))
    mi_mean = float(np.mean([mutual_information(b, y) for b in bins]))
    nsr = (h_mean - mi_mean) / mi_mean if mi_mean > 0 else math.inf
    ev = pca_spectrum(X)
    top = int(math.ceil(0.01 * d))
    top_frac = float(ev[:top].sum() / ev.sum()) if ev.sum() > 0 else 1.0

    return MetaFeatureRecord(
        one_nn_accuracy=nn,
        best_node_accuracy=node,
        feature_onehot_count=float(np.sum(np.all((X == 0) | (X == 1), axis=0))),
        instance_per_feature=n / d,
        class_entropy_N=class_entropy_normalized(y),
        max_fisher_discrim=float(np.max(fisher_ratios(X, y))),
        max_single_feature_eff=float(np.count_nonzero(X) / X.size),
        mutual_xy_info_mean=mi_mean,
        naive_bayes_accuracy=nb,
        noise_signal_ratio=float(nsr),
        pca_dims_95=float(pca_dims(X)),
        pca_top_1_percent=top_frac,
        n=float(n),
        n_by_sqrt_k=n / math.sqrt(K),
        n_by_k=n / K,
    )
