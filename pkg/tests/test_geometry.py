import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vadsphere import geometry as g
from vadsphere.errors import ConfigurationError, DomainError

RAW = g.Scale.RAW17
NORM = g.Scale.NORM_UNIT


def raw(v, a, d):
    return g.VadPoint(v, a, d, RAW)


def norm(v, a, d):
    return g.VadPoint(v, a, d, NORM)


@pytest.mark.parametrize("point, expected", [
    ((4, 4, 4), (0, 0, 0)),
    ((7, 1, 4), (1, -1, 0)),
    ((5.5, 2.5, 4.0), (0.5, -0.5, 0.0)),
])
def test_normalize_examples(point, expected):
    out = g.normalize_vad(raw(*point))
    assert out.scale is NORM
    assert (out.v, out.a, out.d) == pytest.approx(expected, abs=1e-15)


def test_normalize_names_offending_dimension():
    with pytest.raises(DomainError, match="arousal"):
        g.normalize_vad(raw(4, 7.5, 4))
    with pytest.raises(DomainError, match="dominance"):
        g.normalize_vad(raw(4, 4, 0.9))


@pytest.mark.parametrize("point, expected", [
    ((0, 0, 0), (4, 4, 4)),
    ((1, 1, 1), (7, 7, 7)),
    ((-1 / 3, 1 / 3, 0), (3, 5, 4)),
])
def test_denormalize_examples(point, expected):
    out = g.denormalize_vad(norm(*point))
    assert (out.v, out.a, out.d) == pytest.approx(expected, abs=1e-12)


def test_denormalize_rejects_out_of_range():
    with pytest.raises(DomainError):
        g.denormalize_vad(norm(1.2, 0, 0))


@given(st.tuples(*[st.floats(1, 7)] * 3))
def test_normalization_round_trip(p):
    back = g.denormalize_vad(g.normalize_vad(raw(*p)))
    assert np.allclose((back.v, back.a, back.d), p, rtol=0, atol=1e-12)


def test_to_spherical_examples():
    s = g.to_spherical(norm(1, 0, 0))
    assert (s.r, s.azimuth_deg, s.elevation_deg) == pytest.approx((1, 0, 90))
    s = g.to_spherical(norm(0, 0, 1))
    assert (s.r, s.azimuth_deg, s.elevation_deg) == (1.0, 0.0, 0.0)
    s = g.to_spherical(norm(1, 1, 1))
    # scalar trigonometry oracle
    assert s.r == pytest.approx(math.sqrt(3), abs=1e-12)
    assert s.azimuth_deg == pytest.approx(45.0, abs=1e-12)
    assert s.elevation_deg == pytest.approx(math.degrees(math.acos(1 / math.sqrt(3))), abs=1e-12)
    assert s.elevation_deg == pytest.approx(54.7356, abs=1e-4)


def test_degenerate_origin_is_canonical():
    s = g.to_spherical(norm(0, 0, 0))
    assert (s.r, s.azimuth_deg, s.elevation_deg) == (0.0, 0.0, 0.0)
    assert g.assign_region(g.make_partition(90), s) == 0


def test_azimuth_never_reaches_360():
    # atan2 of a tiny negative angle maps to 360 - tiny, which rounds to 360
    s = g.to_spherical(norm(1.0, -1e-18, 0.0))
    assert 0.0 <= s.azimuth_deg < 360.0


def test_to_cartesian_examples():
    p = g.to_cartesian(g.SphericalPoint(0, 0, 0))
    assert (p.v, p.a, p.d) == (0, 0, 0)
    p = g.to_cartesian(g.SphericalPoint(1, 90, 90))
    assert (p.v, p.a, p.d) == pytest.approx((0, 1, 0), abs=1e-15)
    p = g.to_cartesian(g.SphericalPoint(math.sqrt(3), 45, 54.7356))
    assert (p.v, p.a, p.d) == pytest.approx((1, 1, 1), abs=1e-4)


def test_to_cartesian_rejects_negative_radius():
    with pytest.raises(DomainError):
        g.to_cartesian(g.SphericalPoint(-1, 0, 0))


unit = st.floats(-1, 1)


@given(unit, unit, unit)
def test_spherical_round_trip(v, a, d):
    if math.sqrt(v * v + a * a + d * d) < 1e-6:
        return
    p = g.to_cartesian(g.to_spherical(norm(v, a, d)))
    assert np.allclose((p.v, p.a, p.d), (v, a, d), rtol=0, atol=1e-9)


@pytest.mark.parametrize("angle, n_phi, n_theta, total", [
    (90, 4, 2, 8), (60, 6, 3, 18), (45, 8, 4, 32),
])
def test_make_partition_table_counts(angle, n_phi, n_theta, total):
    part = g.make_partition(angle)
    assert (part.n_phi, part.n_theta, part.n_regions) == (n_phi, n_theta, total)
    assert part.azimuth_width == angle and part.elevation_width == angle


def test_make_partition_rejects_non_divisor():
    with pytest.raises(ConfigurationError, match="nearest valid: 36, 45"):
        g.make_partition(40)
    with pytest.raises(ConfigurationError):
        g.make_partition(0)


def test_assign_region_examples():
    part = g.make_partition(90)
    assert g.assign_region(part, g.SphericalPoint(1, 0, 0)) == 0
    assert g.assign_region(part, g.SphericalPoint(1, 359.9, 179.9)) == 7
    # closed final intervals
    assert g.assign_region(part, g.SphericalPoint(1, 0, 180)) == 1


def test_assign_region_sweep_hits_every_cell():
    # brute-force sampling oracle over the NormUnit cube
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(10_000, 3))
    part = g.make_partition(90)
    labels = []
    for p in pts:
        labels.append(g.assign_region(part, g.to_spherical(norm(*p))))
    labels = np.array(labels)
    assert labels.min() >= 0 and labels.max() < 8
    assert set(labels.tolist()) == set(range(8))


def test_region_centroid_examples():
    part = g.make_partition(90)
    c = g.region_centroid(part, 0, 1.0)
    assert (c.r, c.azimuth_deg, c.elevation_deg) == (1.0, 45.0, 45.0)
    c = g.region_centroid(part, 7, 1.0)
    assert (c.r, c.azimuth_deg, c.elevation_deg) == (1.0, 315.0, 135.0)
    with pytest.raises(IndexError):
        g.region_centroid(part, 8, 1.0)


@pytest.mark.parametrize("angle", [90, 60, 45, 30])
def test_centroid_maps_back_to_its_label(angle):
    part = g.make_partition(angle)
    for label in range(part.n_regions):
        assert g.assign_region(part, g.region_centroid(part, label, 0.7)) == label


@given(st.floats(0, 359.999), st.floats(0, 180), st.floats(1e-3, 1e3), st.sampled_from([90, 60, 45]))
def test_labels_depend_only_on_angles(az, el, k, angle):
    part = g.make_partition(angle)
    a = g.assign_region(part, g.SphericalPoint(1.0, az, el))
    b = g.assign_region(part, g.SphericalPoint(k, az, el))
    assert a == b and 0 <= a < part.n_regions


def test_array_api_matches_scalar_api():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1, 1, size=(50, 3))
    r, az, el = g.spherical_array(pts)
    for i, p in enumerate(pts):
        s = g.to_spherical(norm(*p))
        assert (s.r, s.azimuth_deg, s.elevation_deg) == (r[i], az[i], el[i])


def test_deterministic_outputs():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, size=(100, 3))
    a = g.spherical_array(pts)
    b = g.spherical_array(pts.copy())
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
