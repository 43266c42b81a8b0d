"""Synthetic comparison of the matched fit against the unmatched ablation."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.stats import binomtest

from .metrics import ari, nmi
from .scicml import ScicmlConfig, scicml0_fit, scicml_fit
from .synth import SynthSpec, generate, permutation_in_truth_frame

BENCH_SPEC_FILE = "bench_spec.json"


def worker_count() -> int:
    """Parallelism cap from ``COCLUST_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("COCLUST_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def map_ordered(fn, items):
    """``list(map(fn, items))``, on a process pool when more than one worker is allowed."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def load_bench_spec(path=None) -> dict:
    """The committed benchmark definition, or a user-supplied JSON file."""
    if path is None:
        text = resources.files("coclust.data").joinpath(BENCH_SPEC_FILE).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


@dataclass
class SeedOutcome:
    seed: int
    ari: float
    nmi: float
    ari0: float
    nmi0: float
    iterations: int
    iterations0: int
    converged: bool
    converged0: bool
    h_recovered: bool


def run_seed(job) -> SeedOutcome:
    synth_kw, fit_kw, seed = job
    spec = SynthSpec(**{**synth_kw, "seed": seed})
    mats, truth = generate(spec)
    cfg = ScicmlConfig(**{"n_clusters": spec.n_clusters, "k_features": spec.k_features,
                          **fit_kw, "seed": seed})
    res = scicml_fit(mats, cfg)
    res0 = scicml0_fit(mats, cfg)
    h = permutation_in_truth_frame(res.h, res.feature_labels[0].labels,
                                   res.feature_labels[1].labels,
                                   truth.feature_labels[0], truth.feature_labels[1])
    return SeedOutcome(
        seed=seed,
        ari=ari(truth.cell_labels, res.cell_labels.labels),
        nmi=nmi(truth.cell_labels, res.cell_labels.labels),
        ari0=ari(truth.cell_labels, res0.cell_labels.labels),
        nmi0=nmi(truth.cell_labels, res0.cell_labels.labels),
        iterations=res.iterations,
        iterations0=res0.iterations,
        converged=res.converged,
        converged0=res0.converged,
        h_recovered=h == truth.hidden_permutation,
    )


@dataclass
class BenchReport:
    outcomes: list[SeedOutcome]

    def _mean(self, attr):
        return float(np.mean([getattr(o, attr) for o in self.outcomes]))

    @property
    def mean_ari(self):
        return self._mean("ari")

    @property
    def mean_ari0(self):
        return self._mean("ari0")

    @property
    def mean_nmi(self):
        return self._mean("nmi")

    @property
    def mean_nmi0(self):
        return self._mean("nmi0")

    def sign_counts(self, tol: float = 1e-12):
        d = np.array([o.ari - o.ari0 for o in self.outcomes])
        return int(np.sum(d > tol)), int(np.sum(d < -tol))

    def sign_test_p(self) -> float:
        """One-sided sign test that the matched fit wins more often; ties dropped."""
        wins, losses = self.sign_counts()
        if wins + losses == 0:
            return 1.0
        return float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)

    def table(self) -> str:
        wins, losses = self.sign_counts()
        lines = [
            f"{'method':<10} {'NMI':>8} {'ARI':>8}",
            f"{'scICML':<10} {self.mean_nmi:8.4f} {self.mean_ari:8.4f}",
            f"{'scICML0':<10} {self.mean_nmi0:8.4f} {self.mean_ari0:8.4f}",
            f"seeds={len(self.outcomes)} wins={wins} losses={losses} "
            f"sign-test p={self.sign_test_p():.4g}",
        ]
        return "\n".join(lines)


def run_bench(spec: dict | None = None, seeds=None) -> BenchReport:
    spec = spec or load_bench_spec()
    if seeds is None:
        start = spec.get("seed_offset", 0)
        seeds = range(start, start + spec.get("seeds", 20))
    jobs = [(spec["synth"], spec.get("fit", {}), int(s)) for s in seeds]
    outcomes = map_ordered(run_seed, jobs)
    return BenchReport(sorted(outcomes, key=lambda o: o.seed))
