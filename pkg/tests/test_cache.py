from __future__ import annotations

import numpy as np

from fracheat.cache import BasisCache
from fracheat.spectral import Grid, build_basis


def test_round_trip_is_bit_identical(tmp_path):
    cache = BasisCache(tmp_path)
    fresh = build_basis(0.6, 6, grid=128, cache=cache)
    assert len(list(tmp_path.glob("eigen-*.txt"))) == 1
    again = build_basis(0.6, 6, grid=128, cache=cache)
    np.testing.assert_array_equal(again.eigenvalues, fresh.eigenvalues)
    np.testing.assert_array_equal(again.coefficients, fresh.coefficients)
    np.testing.assert_array_equal(again.samples, fresh.samples)


def test_identical_inputs_give_identical_files(tmp_path):
    a, b = BasisCache(tmp_path / "a"), BasisCache(tmp_path / "b")
    build_basis(0.4, 3, grid=64, cache=a)
    build_basis(0.4, 3, grid=64, cache=b)
    fa, = (tmp_path / "a").glob("eigen-*.txt")
    fb, = (tmp_path / "b").glob("eigen-*.txt")
    assert fa.name == fb.name and fa.read_bytes() == fb.read_bytes()


def test_key_distinguishes_settings(tmp_path):
    cache = BasisCache(tmp_path)
    g = Grid.uniform(64)
    keys = {cache.key(s=0.5, method="jacobi", grid=g, N=4, degree=64),
            cache.key(s=0.5 + 1e-15, method="jacobi", grid=g, N=4, degree=64),
            cache.key(s=0.5, method="p1", grid=g, N=4, degree=0),
            cache.key(s=0.5, method="jacobi", grid=Grid.uniform(65), N=4, degree=64),
            cache.key(s=0.5, method="jacobi", grid=g, N=5, degree=64),
            cache.key(s=0.5, method="jacobi", grid=g, N=4, degree=72)}
    assert len({k.digest for k in keys}) == 6


def test_corrupt_or_mismatched_file_is_recomputed(tmp_path):
    cache = BasisCache(tmp_path)
    ref = build_basis(0.6, 4, grid=64, cache=cache)
    f, = tmp_path.glob("eigen-*.txt")
    f.write_text(f.read_text().replace("[coefficients]", "[broken]"))
    again = build_basis(0.6, 4, grid=64, cache=cache)
    np.testing.assert_array_equal(again.eigenvalues, ref.eigenvalues)
    key = cache.key(s=0.6, method="jacobi", grid=Grid.uniform(64), N=4, degree=80)
    assert cache.load(key) is not None


def test_p1_basis_cached(tmp_path):
    cache = BasisCache(tmp_path)
    a = build_basis(0.5, 3, grid=31, method="p1", cache=cache)
    b = build_basis(0.5, 3, grid=31, method="p1", cache=cache)
    np.testing.assert_array_equal(a.samples, b.samples)
