import math
import random

import numpy as np
import pytest
import scipy.stats

from meshbed.stats import (
    histogram,
    normal_ppf,
    sample_stddev,
    student_t_cdf,
    student_t_ppf,
    summarize,
    tukey_hinges,
)


def reference_summary(values, confidence):
    """Independent oracle built on numpy/scipy plus a from-scratch hinge rule."""
    arr = np.asarray(values, dtype=float)
    n = arr.size
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if n > 1 else 0.0
    if n > 1:
        half = scipy.stats.t.ppf((1 + confidence) / 2, n - 1) * std / math.sqrt(n)
    else:
        half = 0.0
    data = sorted(values)

    def med(xs):
        m = len(xs)
        return (xs[(m - 1) // 2] + xs[m // 2]) / 2

    half_len = (n + 1) // 2
    q1 = med(data[:half_len])
    q3 = med(data[-half_len:])
    q2 = med(data)
    notch = 1.57 * (q3 - q1) / math.sqrt(n)
    return mean, std, mean - half, mean + half, (data[0], q1, q2, q3, data[-1]), notch


def close(a, b, rel=1e-9):
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)


def test_constant_series():
    s = summarize([5, 5, 5, 5], 0.95)
    assert (s.mean, s.stddev) == (5.0, 0.0)
    assert (s.ci_low, s.ci_high) == (5.0, 5.0)
    assert (s.minimum, s.q1, s.median, s.q3, s.maximum) == (5, 5, 5, 5, 5)
    assert s.notch == 0.0


def test_small_symmetric_case_tukey_hinges():
    s = summarize([1, 2, 3, 4, 5], 0.9)
    assert (s.minimum, s.q1, s.median, s.q3, s.maximum) == (1, 2, 3, 4, 5)


def test_worked_ci_example():
    s = summarize([8, 10, 12], 0.95)
    assert s.mean == 10
    assert abs(s.ci_low - 5.032) < 1e-3
    assert abs(s.ci_high - 14.968) < 1e-3


def test_single_observation_flagged():
    s = summarize([7.5], 0.99)
    assert s.n == 1
    assert s.ci_degenerate
    assert s.ci_low == s.ci_high == 7.5
    assert s.stddev == 0.0


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        summarize([])
    with pytest.raises(ValueError):
        tukey_hinges([])


def test_summarize_matches_oracle_on_random_data():
    rng = random.Random(202)
    for trial in range(1000):
        n = rng.randint(1, 60)
        scale = 10 ** rng.randint(-3, 3)
        values = [rng.gauss(0, 1) * scale + rng.uniform(-5, 5)
                  for _ in range(n)]
        confidence = rng.choice([0.8, 0.9, 0.95, 0.99])
        s = summarize(values, confidence)
        mean, std, lo, hi, five, notch = reference_summary(values, confidence)
        assert close(s.mean, mean)
        assert close(s.stddev, std)
        assert close(s.ci_low, lo) and close(s.ci_high, hi)
        got_five = (s.minimum, s.q1, s.median, s.q3, s.maximum)
        for g, e in zip(got_five, five):
            assert close(g, e)
        assert close(s.notch, notch)
        assert s.ci_low <= s.mean <= s.ci_high
        assert s.minimum <= s.q1 <= s.median <= s.q3 <= s.maximum


def test_t_ppf_against_scipy():
    for df in (1, 2, 3, 5, 15, 30, 100, 10_000, 1_000_000):
        for p in (0.55, 0.75, 0.9, 0.95, 0.975, 0.995, 0.9999):
            mine = student_t_ppf(p, df)
            ref = scipy.stats.t.ppf(p, df)
            assert abs(mine - ref) <= 1e-6 * max(1.0, abs(ref)), (df, p)


def test_t_cdf_symmetry_and_known_value():
    assert student_t_cdf(0.0, 7) == 0.5
    assert close(student_t_cdf(-2.0, 9), 1 - student_t_cdf(2.0, 9))
    assert abs(student_t_ppf(0.975, 2) - 4.302652729911275) < 1e-9


def test_normal_ppf_accuracy():
    for p in (1e-9, 0.001, 0.025, 0.5, 0.75, 0.975, 0.999, 1 - 1e-9):
        assert abs(normal_ppf(p) - scipy.stats.norm.ppf(p)) < 1e-12


def test_histogram_worked_example():
    assert histogram([0.5, 1.5, 1.6], 1) == [(0, 1), (1, 2)]


def test_histogram_empty():
    assert histogram([], 1) == []


def test_histogram_rejects_bad_width_and_negatives():
    with pytest.raises(ValueError):
        histogram([1], 0)
    with pytest.raises(ValueError):
        histogram([-1], 1)


def test_histogram_matches_brute_force_counting():
    rng = random.Random(99)
    values = [rng.uniform(0, 50) for _ in range(10_000)]
    width = 1.7
    result = histogram(values, width)
    assert sum(c for _, c in result) == len(values)
    for start, count in result:
        k = round(start / width)
        expected = sum(1 for v in values if k * width <= v < (k + 1) * width)
        assert count == expected
    # bins contiguous from zero
    assert [s for s, _ in result] == [k * width for k in range(len(result))]


def test_histogram_includes_empty_middle_bins():
    got = histogram([0.5, 5.5], 1)
    assert got == [(0, 1), (1, 0), (2, 0), (3, 0), (4, 0), (5, 1)]


def test_stddev_n1_is_zero():
    assert sample_stddev([3.3]) == 0.0
