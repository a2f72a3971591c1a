"""Perceptual transform, whitening, augmentation, balancing, and splits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .baselines import MetricKind, baseline_metric
from .sampling import SampledBrdf, check_paired

STD_FLOOR = 1e-8


class Provenance(enum.Enum):
    SUBJECTIVE_JOD = "subjective"
    PSEUDO_DEITP = "pseudo_deitp"
    AUGMENTED_NOISE = "aug_noise"
    AUGMENTED_SCALE = "aug_scale"
    SYNTHETIC_ORACLE = "synthetic"


@dataclass(frozen=True)
class WhiteningStats:
    """Per-channel mean/std of transformed training-set reference samples."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).reshape(3)
        s = np.asarray(self.std, dtype=np.float64).reshape(3)
        if np.any(s <= 0.0):
            raise ValueError("std must be strictly positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)


@dataclass(frozen=True)
class LabeledPair:
    ref: SampledBrdf
    dist: SampledBrdf
    jod: float
    provenance: Provenance
    material: str

    def __post_init__(self):
        check_paired(self.ref, self.dist)
        if not 0.0 <= self.jod <= 10.0:
            raise ValueError(f"jod {self.jod} outside [0, 10]")


@dataclass(frozen=True)
class SplitManifest:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int


def perceptual_transform(rho):
    """Cube root then log1p: compresses specular peaks and dynamic range."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0.0):
        raise ValueError("reflectance must be non-negative (clamp first)")
    out = np.log1p(np.cbrt(rho))
    return float(out) if out.ndim == 0 else out


def transform_sampled(s: SampledBrdf) -> SampledBrdf:
    return SampledBrdf(values=perceptual_transform(np.maximum(s.values, 0.0)), directions=s.directions)


def compute_whitening(train_refs: list[SampledBrdf], already_transformed: bool = False) -> WhiteningStats:
    """Population per-channel moments over all samples of all references."""
    if not train_refs:
        raise ValueError("need at least one reference")
    stacked = np.concatenate([r.values for r in train_refs], axis=0)
    if not already_transformed:
        stacked = perceptual_transform(np.maximum(stacked, 0.0))
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return WhiteningStats(mean=mean, std=std)


def whiten(s: SampledBrdf, stats: WhiteningStats) -> SampledBrdf:
    return SampledBrdf(values=(s.values - stats.mean) / stats.std, directions=s.directions)


def augment_noise(pair: LabeledPair, sigma: float = 0.01, seed: int = 0, labeller=None) -> LabeledPair:
    """Add i.i.d. Gaussian noise to the distorted member's raw reflectance.

    The reference is untouched; negative results clamp to zero. The new
    label comes from `labeller(pair)` when given (e.g. the error-proxy map
    or a synthetic severity oracle), otherwise the source label is kept.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noisy = pair.dist.values + rng.normal(0.0, sigma, size=pair.dist.values.shape) if sigma > 0.0 else pair.dist.values
    dist = SampledBrdf(values=np.maximum(noisy, 0.0), directions=pair.dist.directions)
    out = LabeledPair(ref=pair.ref, dist=dist, jod=pair.jod, provenance=Provenance.AUGMENTED_NOISE, material=pair.material)
    if labeller is not None:
        out = replace(out, jod=float(np.clip(labeller(out), 0.0, 10.0)))
    return out


def augment_scale(pair: LabeledPair, lo: float = 0.95, hi: float = 1.05, seed: int = 0) -> LabeledPair:
    """Scale both members by one uniform random factor; the label is kept."""
    if lo > hi:
        raise ValueError("lo must be <= hi")
    f = float(np.random.default_rng(seed).uniform(lo, hi))
    return LabeledPair(
        ref=SampledBrdf(values=pair.ref.values * f, directions=pair.ref.directions),
        dist=SampledBrdf(values=pair.dist.values * f, directions=pair.dist.directions),
        jod=pair.jod,
        provenance=Provenance.AUGMENTED_SCALE,
        material=pair.material,
    )


def fit_label_proxy(pool: list[LabeledPair]):
    """Monotone map from MA-LogE to JOD, fitted on a labelled pool.

    Isotonic (non-increasing) regression of labels against the error metric;
    evaluation interpolates between fitted knots. Used to label augmented
    pairs when no severity oracle exists.
    """
    if len(pool) < 2:
        raise ValueError("need at least two labelled pairs")
    x = np.array([baseline_metric(MetricKind.MA_LOGE, p.ref, p.dist) for p in pool])
    y = np.array([p.jod for p in pool])
    order = np.argsort(x)
    x, y = x[order], y[order]
    fitted = _isotonic_decreasing(y)

    def labeller(pair: LabeledPair) -> float:
        e = baseline_metric(MetricKind.MA_LOGE, pair.ref, pair.dist)
        return float(np.interp(e, x, fitted))

    return labeller


def _isotonic_decreasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit of a non-increasing sequence."""
    vals = list(-np.asarray(y, dtype=float))
    weights = [1.0] * len(vals)
    counts = [1] * len(vals)
    i = 0
    while i < len(vals) - 1:
        if vals[i] > vals[i + 1]:
            merged = (vals[i] * weights[i] + vals[i + 1] * weights[i + 1]) / (weights[i] + weights[i + 1])
            vals[i : i + 2] = [merged]
            weights[i : i + 2] = [weights[i] + weights[i + 1]]
            counts[i : i + 2] = [counts[i] + counts[i + 1]]
            i = max(i - 1, 0)
        else:
            i += 1
    return -np.repeat(vals, counts)


def balance_by_jod(
    pool: list[LabeledPair],
    labeller,
    n_bins: int = 10,
    seed: int = 0,
    cap: int | None = None,
    sigma_range: tuple[float, float] = (1e-3, 0.5),
) -> list[LabeledPair]:
    """Fill under-represented JOD bins with noise-augmented pairs.

    Target histogram is uniform over [0, 10]: each bin should reach
    ceil(len(pool) / n_bins). Candidate pairs get log-uniform noise levels
    and are kept only when their new label lands in a still-deficient bin.
    Deterministic in (pool, seed); returns the new pairs only.
    """
    if not pool:
        raise ValueError("pool must be nonempty")
    edges = np.linspace(0.0, 10.0, n_bins + 1)

    def bin_of(jod: float) -> int:
        return min(int(np.searchsorted(edges, jod, side="right") - 1), n_bins - 1)

    counts = np.zeros(n_bins, dtype=int)
    for p in pool:
        counts[bin_of(p.jod)] += 1
    target = math.ceil(len(pool) / n_bins)
    deficit = np.maximum(target - counts, 0)
    total_deficit = int(deficit.sum())
    if total_deficit == 0:
        return []
    if cap is None:
        cap = 20 * total_deficit

    rng = np.random.default_rng(seed)
    lo, hi = sigma_range
    new_pairs: list[LabeledPair] = []
    for attempt in range(cap):
        if deficit.sum() == 0:
            break
        src = pool[int(rng.integers(len(pool)))]
        sigma = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        cand = augment_noise(src, sigma=sigma, seed=int(rng.integers(2**31)), labeller=labeller)
        b = bin_of(cand.jod)
        if deficit[b] > 0:
            deficit[b] -= 1
            new_pairs.append(cand)
    return new_pairs


def make_splits(pool: list[LabeledPair], test_materials: list[str], seed: int) -> SplitManifest:
    """Hold out test materials, split the rest 80/20 by pair, seeded."""
    if not pool:
        raise ValueError("pool must be nonempty")
    test_set = set(test_materials)
    test = [i for i, p in enumerate(pool) if p.material in test_set]
    rest = [i for i, p in enumerate(pool) if p.material not in test_set]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(rest))
    n_train = round(0.8 * len(rest))
    train = sorted(rest[j] for j in perm[:n_train])
    val = sorted(rest[j] for j in perm[n_train:])
    assert not (set(train) & set(val) or set(train) & set(test) or set(val) & set(test))
    assert len(train) + len(val) + len(test) == len(pool)
    return SplitManifest(train=train, val=val, test=sorted(test), seed=seed)


def severity_oracle_jod(severity: float) -> float:
    """Synthetic label: monotone map from normalized severity onto [0, 10]."""
    if not math.isfinite(severity):
        raise ValueError("severity must be finite")
    return float(np.clip(10.0 * (1.0 - severity), 0.0, 10.0))
