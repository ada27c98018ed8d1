"""Sampled-MMD simulation study: how kernel two-sample losses behave as
policy constraints.

Two scenarios, both one-dimensional:

1. behavior N(0, 1) versus agent N(0, x) with the scale x swept: the loss
   minimum should sit near the matched scale x = 1.
2. behavior uniform on [-2, -1] union [1, 2] versus agent N(x, 0.5) with the
   mean x swept: a constraint which respected the support would prefer the
   modes at +/-1.5; with wide kernels the loss is instead minimized in the
   hole between them.

Estimates use the biased V-statistic (the plotted losses are then
non-negative). Within one repeat, every sweep point reuses the same base
draws — scenario 1 scales one fixed standard-normal sample, scenario 2 shifts
it — so a sweep traces a smooth curve whose shape is the signal rather than
per-point sampling noise. Each repeat redraws everything.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KERNEL_FAMILIES = ("gaussian", "laplacian")


@dataclass(frozen=True)
class KernelSpec:
    family: str
    sigma: float

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    @property
    def label(self) -> str:
        return f"{self.family}-{self.sigma:g}"


def kernel_eval(spec: KernelSpec, x, y) -> np.ndarray:
    """Pointwise kernel value; gaussian exp(-d^2/(2 s^2)), laplacian exp(-|d|/s)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite kernel inputs")
    d = x - y
    if spec.family == "gaussian":
        return np.exp(-(d ** 2) / (2.0 * spec.sigma ** 2))
    return np.exp(-np.abs(d) / spec.sigma)


def _kernel_matrix_mean(spec: KernelSpec, a: np.ndarray, b: np.ndarray,
                        row_block: int = 2048) -> float:
    # blocked over rows so 1e4-sample estimates stay within memory
    total = 0.0
    for lo in range(0, a.size, row_block):
        d = a[lo:lo + row_block, None] - b[None, :]
        if spec.family == "gaussian":
            k = np.exp(-(d ** 2) / (2.0 * spec.sigma ** 2))
        else:
            k = np.exp(-np.abs(d) / spec.sigma)
        total += float(k.sum())
    return total / (a.size * b.size)


def sampled_mmd(spec: KernelSpec, samples_p, samples_q) -> float:
    """Biased (V-statistic) squared-MMD estimate between two 1-d samples."""
    p = np.asarray(samples_p, dtype=np.float64).ravel()
    q = np.asarray(samples_q, dtype=np.float64).ravel()
    if p.size < 2 or q.size < 2:
        raise ValueError("need at least 2 samples on each side")
    return (
        _kernel_matrix_mean(spec, p, p)
        - 2.0 * _kernel_matrix_mean(spec, p, q)
        + _kernel_matrix_mean(spec, q, q)
    )


def default_kernels() -> list[KernelSpec]:
    sigmas = (0.1, 1.0, 3.0, 10.0)
    return [KernelSpec(f, s) for f in KERNEL_FAMILIES for s in sigmas]


@dataclass
class MmdScenario:
    """One sweep definition: behavior sampler, agent family, grid."""

    name: str
    behavior: str  # "std_normal" | "uniform_bimodal"
    agent_family: str  # "scale" (N(0, x)) | "shift" (N(x, 0.5))
    sweep: np.ndarray = field(default_factory=lambda: np.array([]))
    n_samples: int = 1000
    n_repeats: int = 20

    def __post_init__(self):
        if self.sweep.size == 0:
            raise ValueError("empty sweep")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")

    def behavior_sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.behavior == "std_normal":
            return rng.standard_normal(self.n_samples)
        if self.behavior == "uniform_bimodal":
            u = rng.uniform(1.0, 2.0, size=self.n_samples)
            signs = rng.choice([-1.0, 1.0], size=self.n_samples)
            return u * signs
        raise ValueError(f"unknown behavior {self.behavior!r}")

    def agent_sample(self, x: float, base: np.ndarray) -> np.ndarray:
        if self.agent_family == "scale":
            return x * base
        if self.agent_family == "shift":
            return x + 0.5 * base
        raise ValueError(f"unknown agent family {self.agent_family!r}")


def scenario_matched_scale(n_samples: int = 1000, n_repeats: int = 20) -> MmdScenario:
    return MmdScenario(
        name="scenario1-scale",
        behavior="std_normal",
        agent_family="scale",
        sweep=np.round(np.arange(0.1, 3.0 + 1e-9, 0.1), 10),
        n_samples=n_samples,
        n_repeats=n_repeats,
    )


def scenario_bimodal_hole(n_samples: int = 1000, n_repeats: int = 20) -> MmdScenario:
    return MmdScenario(
        name="scenario2-bimodal",
        behavior="uniform_bimodal",
        agent_family="shift",
        sweep=np.round(np.arange(-3.0, 3.0 + 1e-9, 0.1), 10),
        n_samples=n_samples,
        n_repeats=n_repeats,
    )


@dataclass
class SweepCurve:
    kernel: KernelSpec
    xs: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def argmin_x(self) -> float:
        return float(self.xs[int(np.argmin(self.mean))])

    def minima_set(self, tol: float = 1e-12) -> list[float]:
        m = float(np.min(self.mean))
        return [float(x) for x, v in zip(self.xs, self.mean) if v <= m + tol]


def _mean_kernel_of_diffs(spec: KernelSpec, diffs: np.ndarray) -> float:
    if spec.family == "gaussian":
        return float(np.exp(-(diffs ** 2) / (2.0 * spec.sigma ** 2)).mean())
    return float(np.exp(-np.abs(diffs) / spec.sigma).mean())


_HIST_BINS = 8192


def _diff_histogram(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-grid weighted histogram of a large set of pairwise differences.

    Collapsing the n^2 differences to bin centers turns every sweep point into
    an O(bins) kernel evaluation. The midpoint error is O(bin_width^2 / sigma^2)
    weighted mass, ~1e-6 for the sharpest default kernel: orders of magnitude
    below the estimator's own sampling noise.
    """
    counts, edges = np.histogram(values, bins=_HIST_BINS)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mask = counts > 0
    return centers[mask], counts[mask] / values.size


def _mean_kernel_binned(spec: KernelSpec, centers: np.ndarray, weights: np.ndarray) -> float:
    if spec.family == "gaussian":
        return float(weights @ np.exp(-(centers ** 2) / (2.0 * spec.sigma ** 2)))
    return float(weights @ np.exp(-np.abs(centers) / spec.sigma))


def run_scenario(scenario: MmdScenario, kernels: list[KernelSpec] | None = None,
                 seed: int = 0) -> list[SweepCurve]:
    """Mean +/- std loss curves over repeats, common random numbers per repeat.

    Matches ``sampled_mmd`` on every (kernel, x, repeat) cell up to the binned
    evaluation of the x-dependent terms (see ``_diff_histogram``); constant
    terms are exact and computed once per repeat.
    """
    kernels = kernels if kernels is not None else default_kernels()
    xs = scenario.sweep
    values = np.empty((len(kernels), scenario.n_repeats, xs.size))
    for r in range(scenario.n_repeats):
        rng = np.random.default_rng([seed, r])
        behavior = scenario.behavior_sample(rng)
        base = rng.standard_normal(scenario.n_samples)
        d_pp = behavior[:, None] - behavior[None, :]
        d_bb = base[:, None] - base[None, :]
        if scenario.agent_family == "scale":
            # pq diffs are b_i - x*base_j (2-d structure, computed direct);
            # qq diffs are x*(base_i - base_j): binned on |base_i - base_j|
            qq_centers, qq_weights = _diff_histogram(np.abs(d_bb).ravel())
        else:
            # pq diffs are (b_i - 0.5*base_j) - x: binned on the constant part;
            # qq diffs are 0.5*(base_i - base_j), independent of x
            pq_centers, pq_weights = _diff_histogram(
                (behavior[:, None] - 0.5 * base[None, :]).ravel()
            )
        for ki, k in enumerate(kernels):
            pp = _mean_kernel_of_diffs(k, d_pp)
            if scenario.agent_family == "shift":
                qq_const = _mean_kernel_of_diffs(k, 0.5 * d_bb)
            for xi, x in enumerate(xs):
                x = float(x)
                if scenario.agent_family == "scale":
                    pq = _mean_kernel_of_diffs(k, behavior[:, None] - x * base[None, :])
                    qq = _mean_kernel_binned(k, abs(x) * qq_centers, qq_weights)
                else:
                    pq = _mean_kernel_binned(k, pq_centers - x, pq_weights)
                    qq = qq_const
                values[ki, r, xi] = pp - 2.0 * pq + qq
    return [
        SweepCurve(k, xs.copy(), values[ki].mean(axis=0), values[ki].std(axis=0))
        for ki, k in enumerate(kernels)
    ]


def write_curves_csv(path, scenario: MmdScenario, curves: list[SweepCurve]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "kernel", "sigma", "x", "mean", "std"])
        for c in curves:
            for x, m, s in zip(c.xs, c.mean, c.std):
                w.writerow([scenario.name, c.kernel.family, c.kernel.sigma, x, m, s])


def write_curves_gnuplot(path, curves: list[SweepCurve]) -> None:
    """Long-format whitespace table: one block per kernel, blank-line separated."""
    with Path(path).open("w", encoding="utf-8") as f:
        for c in curves:
            f.write(f"# {c.kernel.label}\n")
            for x, m, s in zip(c.xs, c.mean, c.std):
                f.write(f"{x} {m} {s}\n")
            f.write("\n\n")
