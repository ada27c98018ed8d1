import numpy as np
import pytest

from plas.mmd import (
    KernelSpec,
    MmdScenario,
    default_kernels,
    kernel_eval,
    run_scenario,
    sampled_mmd,
    scenario_bimodal_hole,
    scenario_matched_scale,
    write_curves_csv,
    write_curves_gnuplot,
)


def test_kernel_at_equal_points_is_one():
    for family in ("gaussian", "laplacian"):
        spec = KernelSpec(family, 0.7)
        assert kernel_eval(spec, 1.3, 1.3) == pytest.approx(1.0)


def test_kernel_gaussian_closed_form():
    spec = KernelSpec("gaussian", 1.0)
    assert kernel_eval(spec, 0.0, 1.0) == pytest.approx(np.exp(-0.5))


def test_kernel_laplacian_closed_form():
    spec = KernelSpec("laplacian", 2.0)
    assert kernel_eval(spec, 0.0, 1.0) == pytest.approx(np.exp(-0.5))


def test_kernel_symmetric_and_bounded():
    # distances kept small enough that even sigma=0.1 stays above float64
    # underflow, where the mathematically-positive value rounds to 0.0
    rng = np.random.default_rng(30)
    for spec in default_kernels():
        x = rng.uniform(-1.5, 1.5, size=10_000)
        y = rng.uniform(-1.5, 1.5, size=10_000)
        kxy = kernel_eval(spec, x, y)
        kyx = kernel_eval(spec, y, x)
        assert np.array_equal(kxy, kyx)
        assert np.all((kxy > 0.0) & (kxy <= 1.0))


def test_kernel_rejects_bad_sigma():
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 0.0)
    with pytest.raises(ValueError):
        KernelSpec("cauchy", 1.0)


def test_sampled_mmd_identical_sets_zero():
    rng = np.random.default_rng(31)
    x = rng.normal(size=200)
    for spec in (KernelSpec("gaussian", 1.0), KernelSpec("laplacian", 0.5)):
        assert abs(sampled_mmd(spec, x, x)) < 1e-12


def test_sampled_mmd_symmetric_in_arguments():
    rng = np.random.default_rng(32)
    p = rng.normal(size=150)
    q = rng.normal(loc=0.5, size=150)
    spec = KernelSpec("gaussian", 1.0)
    assert sampled_mmd(spec, p, q) == pytest.approx(sampled_mmd(spec, q, p), rel=1e-12)


def test_sampled_mmd_far_separated_modes():
    # Cross term vanishes, so the estimate approaches the two self terms.
    rng = np.random.default_rng(33)
    p = rng.normal(0.0, 1.0, size=500)
    q = rng.normal(10.0, 1.0, size=500)
    spec = KernelSpec("gaussian", 1.0)
    got = sampled_mmd(spec, p, q)
    self_terms = (
        np.exp(-((p[:, None] - p[None, :]) ** 2) / 2).mean()
        + np.exp(-((q[:, None] - q[None, :]) ** 2) / 2).mean()
    )
    assert got == pytest.approx(self_terms, abs=1e-6)


def test_sampled_mmd_null_concentration():
    rng = np.random.default_rng(34)
    p = rng.standard_normal(10_000)
    q = rng.standard_normal(10_000)
    assert sampled_mmd(KernelSpec("gaussian", 1.0), p, q) < 0.01


def test_sampled_mmd_needs_two_points():
    with pytest.raises(ValueError):
        sampled_mmd(KernelSpec("gaussian", 1.0), [1.0], [1.0, 2.0])


def test_run_scenario_matches_direct_estimator():
    sc = MmdScenario("t", "uniform_bimodal", "shift",
                     sweep=np.array([-0.7, 0.3]), n_samples=200, n_repeats=2)
    kern = KernelSpec("gaussian", 0.1)
    curve = run_scenario(sc, [kern], seed=3)[0]
    direct = np.zeros_like(curve.mean)
    for r in range(2):
        rng = np.random.default_rng([3, r])
        behavior = sc.behavior_sample(rng)
        base = rng.standard_normal(200)
        for xi, x in enumerate(sc.sweep):
            direct[xi] += sampled_mmd(kern, behavior, sc.agent_sample(float(x), base)) / 2
    assert np.max(np.abs(curve.mean - direct)) < 1e-5


def test_run_scenario_reproducible_bit_for_bit():
    sc = scenario_matched_scale(n_samples=100, n_repeats=3)
    kerns = [KernelSpec("gaussian", 1.0), KernelSpec("laplacian", 3.0)]
    a = run_scenario(sc, kerns, seed=9)
    b = run_scenario(sc, kerns, seed=9)
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.mean, cb.mean)
        assert np.array_equal(ca.std, cb.std)


def test_run_scenario_kernel_curves_independent_of_list():
    # a kernel's curve only depends on (seed, scenario, kernel)
    sc = scenario_bimodal_hole(n_samples=100, n_repeats=2)
    solo = run_scenario(sc, [KernelSpec("gaussian", 3.0)], seed=5)[0]
    joint = run_scenario(sc, default_kernels(), seed=5)
    match = [c for c in joint if c.kernel == KernelSpec("gaussian", 3.0)][0]
    assert np.array_equal(solo.mean, match.mean)


def test_scenario_small_scale_minima():
    # cheap version of the study: matched scale is preferred by every kernel
    sc = scenario_matched_scale(n_samples=200, n_repeats=5)
    curves = run_scenario(sc, [KernelSpec("gaussian", 1.0), KernelSpec("laplacian", 1.0)], seed=1)
    for c in curves:
        assert 0.8 <= c.argmin_x() <= 1.2


def test_scenario_bimodal_small_scale_hole():
    sc = scenario_bimodal_hole(n_samples=200, n_repeats=5)
    curve = run_scenario(sc, [KernelSpec("gaussian", 3.0)], seed=1)[0]
    assert abs(curve.argmin_x()) <= 0.2


def test_csv_and_gnuplot_outputs(tmp_path):
    sc = scenario_bimodal_hole(n_samples=50, n_repeats=2)
    kerns = [KernelSpec("gaussian", 1.0)]
    curves = run_scenario(sc, kerns, seed=0)
    csv_path = tmp_path / "curves.csv"
    write_curves_csv(csv_path, sc, curves)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "scenario,kernel,sigma,x,mean,std"
    assert len(lines) == 1 + len(sc.sweep)
    gp_path = tmp_path / "curves.dat"
    write_curves_gnuplot(gp_path, curves)
    assert gp_path.read_text().startswith("# gaussian-1")


def test_scenario_validation():
    with pytest.raises(ValueError):
        MmdScenario("t", "std_normal", "scale", sweep=np.array([]), n_samples=10)
    with pytest.raises(ValueError):
        MmdScenario("t", "std_normal", "scale", sweep=np.array([1.0]), n_samples=1)
