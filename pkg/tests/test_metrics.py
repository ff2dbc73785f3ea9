import numpy as np
import pytest

from cbirkit.errors import DimensionError, SpecError
from cbirkit.metrics import (
    MetricKind,
    canberra,
    canberra_terms,
    distance,
    distances_to,
    euclidean,
    hassanat,
    hassanat_terms,
    manhattan,
)

ALL_METRICS = list(MetricKind)


def test_euclidean_345():
    assert euclidean([0, 0], [3, 4]) == pytest.approx(5.0)


def test_euclidean_hand_value():
    assert euclidean([1, 2, 3], [4, 6, 3]) == pytest.approx(5.0)


def test_manhattan_values():
    assert manhattan([0, 0], [3, 4]) == pytest.approx(7.0)
    assert manhattan([-1], [1]) == pytest.approx(2.0)


def test_hassanat_zero_pair():
    assert hassanat([0], [0]) == 0.0


def test_hassanat_nonnegative_branch():
    # min >= 0: 1 - (1+1)/(1+3)
    assert hassanat([1], [3]) == pytest.approx(0.5)


def test_hassanat_negative_branch():
    # min < 0: 1 - (1-1+1)/(1+1+1)
    assert hassanat([-1], [1]) == pytest.approx(2.0 / 3.0, abs=1e-6)


def test_hassanat_both_negative_uses_shifted_branch():
    # the shift puts the smaller value at zero: 1 - 1/(1 + (max - min))
    assert hassanat([-5], [-2]) == pytest.approx(1.0 - 1.0 / 4.0)


def test_canberra_values():
    assert canberra([0], [0]) == 0.0
    assert canberra([1], [3]) == pytest.approx(0.5)
    assert canberra([2, 0], [0, 2]) == pytest.approx(2.0)


def test_canberra_scale_invariance():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(32), rng.standard_normal(32)
    assert canberra(a, b) == pytest.approx(canberra(7.3 * a, 7.3 * b), abs=1e-12)


def test_distance_dispatch():
    assert distance(MetricKind.EUCLIDEAN, [0, 0], [3, 4]) == pytest.approx(5.0)
    assert distance(MetricKind.HASSANAT, [1], [3]) == pytest.approx(0.5)
    assert distance(MetricKind.CANBERRA, [0], [0]) == 0.0


def test_parse_aliases():
    assert MetricKind.parse("ed") is MetricKind.EUCLIDEAN
    assert MetricKind.parse("md") is MetricKind.MANHATTAN
    assert MetricKind.parse("hd") is MetricKind.HASSANAT
    assert MetricKind.parse("cd") is MetricKind.CANBERRA
    assert MetricKind.parse("hassanat") is MetricKind.HASSANAT
    with pytest.raises(SpecError):
        MetricKind.parse("cosine")


@pytest.mark.parametrize("kind", ALL_METRICS)
def test_length_mismatch(kind):
    with pytest.raises(DimensionError):
        distance(kind, [1, 2], [1, 2, 3])


@pytest.mark.parametrize("kind", ALL_METRICS)
def test_randomized_symmetry_identity_nonnegativity(kind):
    rng = np.random.default_rng(hash(kind.value) % 2**32)
    for _ in range(300):
        d = int(rng.integers(1, 64))
        a = rng.standard_normal(d) * 10.0 ** rng.integers(-2, 3)
        b = rng.standard_normal(d) * 10.0 ** rng.integers(-2, 3)
        dab = distance(kind, a, b)
        assert dab >= 0.0
        assert distance(kind, b, a) == pytest.approx(dab, rel=1e-12, abs=1e-15)
        assert distance(kind, a, a) == 0.0


def test_hassanat_terms_below_one():
    rng = np.random.default_rng(1)
    for _ in range(200):
        d = int(rng.integers(1, 128))
        a = rng.standard_normal(d) * 1e3
        b = rng.standard_normal(d) * 1e-3
        assert np.all(hassanat_terms(a, b) < 1.0)
        assert np.all(hassanat_terms(a, b) >= 0.0)


def test_hassanat_outlier_bounded():
    """A huge outlier in one dimension moves the total by less than 1."""
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(16), rng.standard_normal(16)
    base = hassanat(a, b)
    spiked = b.copy()
    spiked[3] += 1e9
    assert abs(hassanat(a, spiked) - base) < 1.0


def test_canberra_terms_at_most_one():
    rng = np.random.default_rng(3)
    for _ in range(200):
        d = int(rng.integers(1, 128))
        a, b = rng.standard_normal(d), rng.standard_normal(d)
        assert np.all(canberra_terms(a, b) <= 1.0 + 1e-15)


@pytest.mark.parametrize("kind", [MetricKind.EUCLIDEAN, MetricKind.MANHATTAN])
def test_triangle_inequality(kind):
    rng = np.random.default_rng(4)
    for _ in range(200):
        a, b, c = rng.standard_normal((3, 12))
        assert distance(kind, a, c) <= distance(kind, a, b) + distance(kind, b, c) + 1e-12


@pytest.mark.parametrize("kind", ALL_METRICS)
def test_distances_to_matches_scalar(kind):
    rng = np.random.default_rng(5)
    M = rng.standard_normal((20, 9))
    q = rng.standard_normal(9)
    batch = distances_to(kind, M, q)
    singles = np.array([distance(kind, row, q) for row in M])
    np.testing.assert_allclose(batch, singles, rtol=1e-12, atol=1e-14)
