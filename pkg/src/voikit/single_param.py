"""Single-parameter EVPPI estimators built on rank-ordering one column.

Two estimators share the same preparation (sort the simulations by the
parameter of interest, then reason about contiguous runs of the ordered
net-benefit rows):

* bin averaging: split the ordered rows into M near-equal bins, average
  per treatment within each bin, take per-bin maxima.  M is chosen by
  holding the estimator's upward bias (estimated by a seeded normal
  perturbation of the bin means) under a threshold.
* segmentation search: pick the D cut points that maximise the
  size-weighted sum of per-segment best mean net benefit.  D is the
  number of times the decision is believed to change and must be supplied
  by the analyst; the cumulative-sum curve below is the supporting visual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .psa import EvppiEstimate, PsaSample, incremental_nb

__all__ = [
    "BinPartition",
    "SegmentationVector",
    "CumsumCurve",
    "order_by_param",
    "so_evppi",
    "so_bias",
    "so_choose_bins",
    "sad_evppi",
    "cumsum_curve",
    "BIN_GRID",
]

# Candidate bin counts for the automatic choice; values above S/10 are
# dropped so bins keep enough rows for stable means.
BIN_GRID = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 50, 75, 100, 150, 200)

DEFAULT_BIAS_THRESHOLD = 0.1
DEFAULT_BIAS_REPLICATES = 500


@dataclass(frozen=True)
class BinPartition:
    """Contiguous split of S rank-ordered rows into M bins.

    Bin sizes differ by at most one; when M does not divide S the extra
    rows go one each to the last bins.  ``offsets`` has M+1 entries with
    ``offsets[m]:offsets[m+1]`` delimiting bin m.
    """

    n_rows: int
    n_bins: int
    offsets: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=int)
        sizes = np.diff(offsets)
        if (
            offsets.ndim != 1
            or offsets.size != self.n_bins + 1
            or offsets[0] != 0
            or offsets[-1] != self.n_rows
            or np.any(sizes < 1)
        ):
            raise ValueError("offsets must split the rows into contiguous nonempty bins")
        if sizes.max() - sizes.min() > 1:
            raise ValueError("bin sizes may differ by at most one")
        offsets.flags.writeable = False
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def build(cls, n_rows: int, n_bins: int) -> "BinPartition":
        if not 1 <= n_bins <= n_rows:
            raise ValueError(f"bin count must be in [1, {n_rows}], got {n_bins}")
        base = n_rows // n_bins
        remainder = n_rows % n_bins
        sizes = np.full(n_bins, base, dtype=int)
        if remainder:
            sizes[-remainder:] += 1
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        return cls(n_rows=n_rows, n_bins=n_bins, offsets=offsets)

    @property
    def bin_size(self) -> int:
        """The base bin size floor(S/M)."""
        return self.n_rows // self.n_bins

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)


@dataclass(frozen=True)
class SegmentationVector:
    """Strictly increasing parameter values at which the decision may flip."""

    n_changes: int
    cut_values: tuple[float, ...]

    def __post_init__(self):
        if self.n_changes != len(self.cut_values):
            raise ValueError("n_changes must equal the number of cut values")
        vals = self.cut_values
        if any(not math.isfinite(v) for v in vals):
            raise ValueError("cut values must be finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"cut values must be strictly increasing, got {vals}")


@dataclass(frozen=True)
class CumsumCurve:
    """Plot-ready cumulative incremental net benefit along a parameter.

    ``values[j]`` is the scaled sum of the incremental net benefit over the
    rows ranked strictly below j, so the first point is zero by convention.
    Interior extrema hint at parameter values where the optimal decision
    changes.
    """

    phi: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if phi.shape != values.shape or phi.ndim != 1:
            raise ValueError("phi and values must be 1-D and the same length")
        if values.size and values[0] != 0.0:
            raise ValueError("curve must start at zero")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(values))):
            raise ValueError("curve contains non-finite entries")
        for arr in (phi, values):
            arr.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "values", values)


def order_by_param(sample: PsaSample, p: int) -> np.ndarray:
    """Permutation putting the rows of column p in ascending order.

    The sort is stable, so tied parameter values keep their original row
    order.
    """
    return np.argsort(sample.param_column(p), kind="stable")


def _phi_diagnostics(values: np.ndarray) -> dict:
    n_unique = np.unique(values).size
    tie_fraction = 1.0 - n_unique / values.size
    diag: dict = {"tie_fraction": float(tie_fraction)}
    if n_unique == 1:
        diag["constant_param"] = True
        warnings.warn("parameter column is constant; ordering is degenerate")
    elif tie_fraction > 0.01:
        diag["tie_warning"] = True
    return diag


def _binned_stats(nb_ordered: np.ndarray, partition: BinPartition):
    sums = np.add.reduceat(nb_ordered, partition.offsets[:-1], axis=0)
    sizes = partition.sizes
    means = sums / sizes[:, None]
    return means, sizes


def _weighted_terms(means: np.ndarray, sizes: np.ndarray, n_rows: int):
    """Size-weighted first and second terms of the binned estimator.

    The per-bin maxima are stacked next to the per-bin means and reduced in
    a single weighted product, so the first term dominates the second
    exactly (not merely up to rounding) whenever it does entrywise.
    """
    bin_max = means.max(axis=1)
    stacked = np.column_stack([means, bin_max])
    weighted = sizes.astype(float) @ stacked / n_rows
    return float(weighted[-1]), weighted[:-1]


def so_evppi(sample: PsaSample, p: int, n_bins: int) -> EvppiEstimate:
    """Bin-averaging single-parameter EVPPI.

    Rows are ordered by parameter column ``p`` and split into ``n_bins``
    contiguous bins; the estimate is the size-weighted average of per-bin
    best mean net benefit minus the overall best mean.  Only the ranks of
    the parameter matter, so any strictly increasing transform of the
    column leaves the estimate unchanged.
    """
    phi = sample.param_column(p)
    partition = BinPartition.build(sample.n_sims, n_bins)
    perm = order_by_param(sample, p)
    means, sizes = _binned_stats(sample.nb[perm], partition)
    first, col_means = _weighted_terms(means, sizes, sample.n_sims)
    value = first - float(col_means.max())

    diag = {
        "bins": int(n_bins),
        "bin_size": partition.bin_size,
        "bin_argmax": means.argmax(axis=1).tolist(),
        **_phi_diagnostics(phi),
    }
    return EvppiEstimate.clamped(
        value, "SO", nb_scale=float(np.max(np.abs(sample.nb))), diagnostics=diag
    )


def so_bias(
    sample: PsaSample,
    p: int,
    n_bins: int,
    n_mc: int = DEFAULT_BIAS_REPLICATES,
    seed=0,
) -> float:
    """Estimated upward bias of :func:`so_evppi` at a given bin count.

    Within each bin the vector of treatment means is perturbed by zero-mean
    normal noise whose covariance is the within-bin sample covariance over
    the bin size, matching the joint sampling noise of the actual bin
    means.  (Correlation across treatments matters: identical columns give
    perfectly correlated means and no upward bias at all.)  The average
    excess of the noisy per-bin maximum over the true per-bin maximum,
    size-weighted across bins, estimates how much the max-of-noisy-means
    inflates the first term.  Deterministic given the seed; the Monte Carlo
    average is clamped at zero.
    """
    if n_mc < 1:
        raise ValueError("need at least one bias replicate")
    partition = BinPartition.build(sample.n_sims, n_bins)
    if partition.bin_size < 2:
        raise ValueError(
            f"bins of size {partition.bin_size} cannot estimate within-bin variance; "
            f"use n_bins <= {sample.n_sims // 2}"
        )
    perm = order_by_param(sample, p)
    nb_ordered = sample.nb[perm]
    means, sizes = _binned_stats(nb_ordered, partition)
    n_bins_eff, n_t = means.shape

    centered = nb_ordered - np.repeat(means, sizes, axis=0)
    cross = centered[:, :, None] * centered[:, None, :]
    cov = np.add.reduceat(cross, partition.offsets[:-1], axis=0)
    cov /= (sizes - 1)[:, None, None]

    # noise factor per bin: sqrt of the covariance of the bin MEAN vector
    eigval, eigvec = np.linalg.eigh(cov / sizes[:, None, None])
    factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))[:, None, :]

    true_max = means.max(axis=1)
    rng = np.random.default_rng(seed)
    excess_sum = np.zeros(n_bins_eff)
    chunk = max(1, int(2_000_000 // max(n_bins_eff * n_t, 1)))
    done = 0
    while done < n_mc:
        take = min(chunk, n_mc - done)
        draws = rng.standard_normal((take, n_bins_eff, n_t))
        noise = np.einsum("cmt,mst->cms", draws, factor)
        noisy_max = (means + noise).max(axis=2)
        excess_sum += (noisy_max - true_max).sum(axis=0)
        done += take
    per_bin_bias = excess_sum / n_mc
    bias = float(sizes @ per_bin_bias / sample.n_sims)
    return max(0.0, bias)


def so_choose_bins(
    sample: PsaSample,
    p: int,
    threshold: float = DEFAULT_BIAS_THRESHOLD,
    n_mc: int = DEFAULT_BIAS_REPLICATES,
    seed: int = 0,
    grid: tuple[int, ...] = BIN_GRID,
) -> tuple[int, float]:
    """Largest candidate bin count whose estimated upward bias is below
    ``threshold`` (in net-benefit currency units).

    Falls back to a single bin, with a warning, when no candidate
    qualifies.  Each candidate's bias uses a seed derived from
    (seed, candidate), so the choice is reproducible.
    """
    if not (threshold > 0 and math.isfinite(threshold)):
        raise ValueError(f"threshold must be positive and finite, got {threshold}")
    max_bins = max(1, sample.n_sims // 10)
    candidates = sorted(
        m for m in set(grid) if 1 <= m <= max_bins and sample.n_sims // m >= 2
    )
    if not candidates:
        candidates = [1]
    biases = {
        m: so_bias(sample, p, m, n_mc=n_mc, seed=[seed, m]) for m in candidates
    }
    eligible = [m for m in candidates if biases[m] < threshold]
    if not eligible:
        warnings.warn(
            f"no candidate bin count has upward bias below {threshold}; "
            "falling back to a single bin (estimate will be 0)"
        )
        return 1, biases[candidates[0]]
    best = max(eligible)
    return best, biases[best]


def _relative_prefix_sums(nb_ordered: np.ndarray) -> np.ndarray:
    """Prefix sums of each treatment column minus those of the on-average
    best treatment.

    Subtracting the best column telescopes out of every segmentation, so
    the search objective becomes the EVPPI estimate directly; and since the
    best column's own relative prefix is exactly zero, every per-segment
    maximum is exactly nonnegative (identical columns give exactly 0).
    """
    n_t = nb_ordered.shape[1]
    prefix = np.vstack([np.zeros(n_t), np.cumsum(nb_ordered, axis=0)])
    t_star = int(np.argmax(prefix[-1]))
    return prefix - prefix[:, t_star : t_star + 1]


def _best_single_cut(prefix: np.ndarray) -> tuple[float, int]:
    n_rows = prefix.shape[0] - 1
    left = prefix[1:n_rows].max(axis=1)
    right = (prefix[n_rows] - prefix[1:n_rows]).max(axis=1)
    totals = left + right
    j = int(np.argmax(totals))
    return float(totals[j]), j + 1


def _best_cuts_dp(prefix: np.ndarray, n_cuts: int, chunk: int = 256):
    """Exact maximiser over all segmentations with ``n_cuts`` cuts.

    Dynamic programme over ``g[d][j]`` = best total of per-segment maxima
    of summed net benefit when the first j ordered rows form d segments.
    Equivalent to enumerating every cut vector, at O(D S^2 T) cost instead
    of O(S^D).
    """
    n_rows = prefix.shape[0] - 1
    n_segments = n_cuts + 1
    g = prefix[: n_rows + 1].max(axis=1)  # d=1, any j
    back = np.zeros((n_segments, n_rows + 1), dtype=int)
    for d in range(2, n_segments + 1):
        g_new = np.full(n_rows + 1, -np.inf)
        for j_start in range(d, n_rows + 1, chunk):
            j_end = min(j_start + chunk, n_rows + 1)
            j_idx = np.arange(j_start, j_end)
            i_idx = np.arange(d - 1, n_rows)
            seg = (
                prefix[j_idx][:, None, :] - prefix[i_idx][None, :, :]
            ).max(axis=2)
            cand = g[i_idx][None, :] + seg
            cand[i_idx[None, :] >= j_idx[:, None]] = -np.inf
            pick = np.argmax(cand, axis=1)
            g_new[j_idx] = cand[np.arange(len(j_idx)), pick]
            back[d - 1, j_idx] = i_idx[pick]
        g = g_new
    cuts = []
    j = n_rows
    for d in range(n_segments, 1, -1):
        j = int(back[d - 1, j])
        cuts.append(j)
    return float(g[n_rows]), sorted(cuts)


def sad_evppi(sample: PsaSample, p: int, n_changes: int) -> EvppiEstimate:
    """Segmentation-search single-parameter EVPPI.

    ``n_changes`` is the number of decision changes the analyst attributes
    to the parameter (read off the cumulative-sum curve); the search places
    that many cuts between consecutive ranks to maximise the size-weighted
    sum of per-segment best mean net benefit, then subtracts the overall
    best mean.  Zero changes declare the parameter non-influential, which
    pins the estimate at zero.  Capped at three cuts; beyond that the
    estimator's premise (a handful of decision changes) is broken anyway.
    """
    if n_changes < 0:
        raise ValueError(f"number of decision changes must be >= 0, got {n_changes}")
    if n_changes > 3:
        raise ValueError(
            f"segmentation search is capped at 3 decision changes, got {n_changes}"
        )
    if n_changes >= sample.n_sims:
        raise ValueError("more decision changes than simulation rows")

    phi = sample.param_column(p)
    diag: dict = {"changes": int(n_changes), **_phi_diagnostics(phi)}
    nb_scale = float(np.max(np.abs(sample.nb)))

    if n_changes == 0:
        diag["cut_ranks"] = []
        diag["cut_values"] = []
        return EvppiEstimate.clamped(0.0, "SAD", nb_scale, diagnostics=diag)

    perm = order_by_param(sample, p)
    prefix = _relative_prefix_sums(sample.nb[perm])
    n_rows = sample.n_sims
    if n_changes == 1:
        best, cut = _best_single_cut(prefix)
        cut_ranks = [cut]
    else:
        best, cut_ranks = _best_cuts_dp(prefix, n_changes)
    value = best / n_rows

    phi_sorted = phi[perm]
    diag["cut_ranks"] = [int(c) for c in cut_ranks]
    diag["cut_values"] = [float(phi_sorted[c]) for c in cut_ranks]
    return EvppiEstimate.clamped(value, "SAD", nb_scale, diagnostics=diag)


def segmentation_vector(sample: PsaSample, p: int, cut_ranks) -> SegmentationVector:
    """Validated segmentation vector for cut ranks found by :func:`sad_evppi`."""
    phi_sorted = sample.param_column(p)[order_by_param(sample, p)]
    values = tuple(float(phi_sorted[int(c)]) for c in cut_ranks)
    return SegmentationVector(n_changes=len(values), cut_values=values)


def cumsum_curve(sample: PsaSample, p: int, t: int, t_prime: int) -> CumsumCurve:
    """Cumulative incremental net benefit between two treatments, ordered
    by parameter column ``p``.

    The j-th point sums the increments of the rows ranked strictly below j
    and divides by the number of simulations, so the curve starts at zero
    and interior extrema flag candidate decision changes.
    """
    inc = incremental_nb(sample.nb, t, t_prime)
    perm = order_by_param(sample, p)
    ordered = inc[perm]
    values = np.concatenate([[0.0], np.cumsum(ordered)[:-1]]) / sample.n_sims
    return CumsumCurve(phi=sample.param_column(p)[perm], values=values)
