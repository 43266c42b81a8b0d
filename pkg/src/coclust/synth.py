"""Synthetic four-view count data with planted co-cluster structure."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError
from .matching import Permutation
from .metrics import contingency_table


@dataclass
class SynthSpec:
    """Generator parameters.

    ``hidden_permutation[k]`` names the block pattern (a feature cluster of
    view (1,1)) carried by feature cluster ``k`` of view (1,2).  The default
    is the cyclic shift ``k -> (k + 1) mod K``.
    """

    n: int = 600
    q: tuple[int, int, int, int] = (500, 500, 500, 500)
    n_clusters: int = 4
    k_features: tuple[int, int, int, int] = (4, 4, 4, 4)
    hidden_permutation: tuple[int, ...] | None = None
    signal: float = 1.0
    noise: float = 0.1
    dropout: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.q, int):
            self.q = (self.q,) * 4
        if isinstance(self.k_features, int):
            self.k_features = (self.k_features,) * 4
        self.q = tuple(int(x) for x in self.q)
        self.k_features = tuple(int(x) for x in self.k_features)
        if self.hidden_permutation is None:
            k = self.k_features[0]
            self.hidden_permutation = tuple((i + 1) % k for i in range(k))
        self.hidden_permutation = tuple(int(x) for x in self.hidden_permutation)
        self.validate()

    def validate(self):
        if len(self.q) != 4 or len(self.k_features) != 4:
            raise InvalidInputError("q and k_features need four values")
        if self.k_features[0] != self.k_features[1]:
            raise InvalidInputError("linked views need equal feature-cluster counts")
        Permutation(np.asarray(self.hidden_permutation))
        if len(self.hidden_permutation) != self.k_features[0]:
            raise InvalidInputError("hidden_permutation must have K entries")
        if not self.signal > self.noise >= 0:
            raise InvalidInputError("need signal > noise >= 0")
        if not 0 <= self.dropout < 1:
            raise InvalidInputError("dropout must lie in [0, 1)")
        if self.n < self.n_clusters or any(q < k for q, k in zip(self.q, self.k_features)):
            raise InvalidInputError("more clusters than items")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("q", "k_features", "hidden_permutation"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown synth spec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SynthTruth:
    cell_labels: np.ndarray
    feature_labels: list[np.ndarray]
    hidden_permutation: Permutation
    pattern_labels: list[np.ndarray] = field(repr=False, default_factory=list)


def _balanced(rng, m: int, k: int) -> np.ndarray:
    return rng.permutation(np.arange(m) % k)


def generate(spec: SynthSpec):
    """Draw four sparse count matrices and the planted labels.

    Each feature belongs to a block pattern ``c``; an entry is "on" when
    ``c mod m == cell cluster mod m`` with ``m = min(K, N)``.  Entries are
    Poisson with mean ``signal`` (on) or ``noise`` (off), then zeroed with
    probability ``dropout``.
    """
    rng = np.random.default_rng(spec.seed)
    N = spec.n_clusters
    cells = _balanced(rng, spec.n, N)
    hidden = Permutation(np.asarray(spec.hidden_permutation))
    inv = hidden.inverse().map
    mats, labels, patterns = [], [], []
    for idx, (q, k) in enumerate(zip(spec.q, spec.k_features)):
        pat = _balanced(rng, q, k)
        m = min(k, N)
        on = (pat[:, None] % m) == (cells[None, :] % m)
        mean = np.where(on, spec.signal, spec.noise)
        counts = rng.poisson(mean)
        if spec.dropout > 0:
            counts[rng.random(counts.shape) < spec.dropout] = 0
        mats.append(sp.csr_matrix(counts.astype(np.int64)))
        patterns.append(pat)
        labels.append(inv[pat] if idx == 1 else pat)
    return mats, SynthTruth(cells, labels, hidden, patterns)


def align_labels(found, truth, k: int | None = None) -> np.ndarray:
    """Map found cluster ids onto truth ids by maximum-overlap matching.

    Returns ``mapping`` with ``mapping[found_id] = truth_id``.
    """
    found = np.asarray(found)
    truth = np.asarray(truth)
    k = k or int(max(found.max(), truth.max())) + 1
    table = contingency_table(found, truth, n_rows=k, n_cols=k).counts
    rows, cols = linear_sum_assignment(-table)
    mapping = np.arange(k)
    mapping[rows] = cols
    return mapping


def permutation_in_truth_frame(h, found11, found12, truth11, truth12) -> Permutation:
    """Express a fitted ``h`` in the planted label frame of both linked views.

    With ``f1``/``f2`` aligning fitted ids to planted ids, the fitted pairing
    "row h[k] of view (1,1) with row k of view (1,2)" becomes
    "row f1[h[k]] with row f2[k]".
    """
    hm = h.map if isinstance(h, Permutation) else np.asarray(h)
    k = hm.size
    f1 = align_labels(found11, truth11, k)
    f2 = align_labels(found12, truth12, k)
    out = np.empty(k, dtype=np.int64)
    out[f2] = f1[hm]
    return Permutation(out)
