import numpy as np
import pytest

from opencam import errors
from opencam.noise_gen import (
    ColoredNoiseSpec,
    PerlinSpec,
    Rng,
    colored_noise,
    perlin_field,
    psd_weight,
)


def radial_psd_slope(field: np.ndarray, r_max: int) -> float:
    """Independent periodogram oracle: fit log power vs log radius."""
    n = field.shape[0]
    power = np.abs(np.fft.fft2(field.astype(np.float64))) ** 2 / n**2
    u = np.fft.fftfreq(n, d=1.0 / n)
    radius = np.sqrt(u[:, None] ** 2 + u[None, :] ** 2)
    radii = np.arange(1, r_max + 1)
    means = [power[(radius >= r - 0.5) & (radius < r + 0.5)].mean() for r in radii]
    return float(np.polyfit(np.log(radii), np.log(means), 1)[0])


# --- Rng ---


def test_same_seed_same_stream():
    a = Rng(123).standard_normal(16)
    b = Rng(123).standard_normal(16)
    assert np.array_equal(a, b)


def test_child_streams_differ():
    root = Rng(5)
    a = root.child("x").standard_normal(8)
    b = root.child("y").standard_normal(8)
    c = root.child("x", 1).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_child_is_reproducible():
    a = Rng(5).child("mask", 3).random(4)
    b = Rng(5).child("mask", 3).random(4)
    assert np.array_equal(a, b)


def test_pinned_stream_value():
    # frozen sample of the pinned Philox/SeedSequence stream; a change here
    # means previously generated keys are no longer reproducible
    value = Rng(42).random()
    assert value == pytest.approx(0.08607763073528474, abs=1e-15)


def test_string_ids_reject_bad_types():
    with pytest.raises(errors.InvalidSpec):
        Rng(1).child(3.14)


# --- Perlin ---


def _spec(side=64, feature=8, seed=0):
    return PerlinSpec(side, feature, Rng(seed).child("perm").permutation(side))


def test_perlin_zero_at_lattice_points():
    spec = _spec(64, 8)
    field = perlin_field(spec)
    lattice = field[::8, ::8]
    assert np.all(lattice == 0.0)


def test_perlin_deterministic_given_permutation():
    spec = _spec(32, 4, seed=9)
    assert np.array_equal(perlin_field(spec), perlin_field(spec))


def test_perlin_depends_only_on_permutation():
    perm = Rng(1).child("p").permutation(32)
    a = perlin_field(PerlinSpec(32, 4, perm))
    b = perlin_field(PerlinSpec(32, 4, perm.copy()))
    assert np.array_equal(a, b)


def test_perlin_range_bound_over_seeds():
    # exhaustive evaluation of the [-1, 1] bound over 50 permutations
    worst = 0.0
    for seed in range(50):
        field = perlin_field(_spec(128, 16, seed))
        worst = max(worst, float(np.abs(field).max()))
    assert worst <= 1.0


def test_perlin_feature_must_divide_side():
    with pytest.raises(errors.InvalidSpec):
        perlin_field(PerlinSpec(64, 7, Rng(0).permutation(64)))


def test_perlin_bad_permutation():
    with pytest.raises(errors.InvalidSpec):
        perlin_field(PerlinSpec(16, 4, np.zeros(16, dtype=int)))


# --- colored noise ---


def test_psd_weight_values():
    h = psd_weight(8, 2.0)
    assert h[0, 0] == 0.0
    assert h[0, 1] == pytest.approx(1.0)  # H_2(1,0) = 1
    assert h[0, 2] == pytest.approx(0.25)  # H_2(2,0) = 1/4


def test_colored_noise_moments():
    field = colored_noise(ColoredNoiseSpec(64, 3.0), Rng(4).child("c"))
    assert abs(float(np.mean(field.astype(np.float64)))) < 1e-6
    assert float(np.var(field.astype(np.float64))) == pytest.approx(1.0, abs=1e-6)


def test_colored_noise_deterministic():
    a = colored_noise(ColoredNoiseSpec(32, 2.0), Rng(7).child("n"))
    b = colored_noise(ColoredNoiseSpec(32, 2.0), Rng(7).child("n"))
    assert np.array_equal(a, b)


def test_white_noise_has_flat_spectrum():
    slopes = [
        radial_psd_slope(colored_noise(ColoredNoiseSpec(128, 0.0), Rng(s)), 32)
        for s in range(20)
    ]
    assert abs(float(np.mean(slopes))) < 0.2


def test_beta4_spectrum_slope():
    slopes = [
        radial_psd_slope(colored_noise(ColoredNoiseSpec(128, 4.0), Rng(s)), 32)
        for s in range(20)
    ]
    assert float(np.mean(slopes)) == pytest.approx(-4.0, abs=0.5)


def test_invalid_specs():
    with pytest.raises(errors.InvalidSpec):
        colored_noise(ColoredNoiseSpec(0, 2.0), Rng(1))
    with pytest.raises(errors.InvalidSpec):
        colored_noise(ColoredNoiseSpec(16, -1.0), Rng(1))
