import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from elmvis.dataio import DataError, ParseError, dumps_json, load_labels, load_matrix, \
    load_pairs, make_layout, normalize_rows, one_hot, save_matrix, shuffle_rows


class TestLoadMatrix:
    def test_csv(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(load_matrix(p), [[1, 2], [3, 4]])

    def test_raw_f64(self, tmp_path):
        p = tmp_path / "m.bin"
        p.write_bytes(struct.pack("<QQ", 2, 1) + struct.pack("<2d", 0.0, 1.0))
        M = load_matrix(p)
        assert M.shape == (2, 1)
        np.testing.assert_array_equal(M, [[0.0], [1.0]])

    def test_ragged_row_names_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4\n5\n")
        with pytest.raises(ParseError, match="line 3") as exc:
            load_matrix(p)
        assert exc.value.line == 3

    def test_non_numeric_names_position(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(ParseError) as exc:
            load_matrix(p)
        assert (exc.value.line, exc.value.column) == (2, 2)

    @pytest.mark.parametrize("token", ["nan", "inf", "-Infinity"])
    def test_non_finite_csv(self, tmp_path, token):
        p = tmp_path / "m.csv"
        p.write_text(f"1,{token}\n")
        with pytest.raises(ParseError, match="non-finite"):
            load_matrix(p)

    def test_non_finite_raw(self, tmp_path):
        p = tmp_path / "m.bin"
        p.write_bytes(struct.pack("<QQ", 1, 2) + struct.pack("<2d", 1.0, float("nan")))
        with pytest.raises(ParseError) as exc:
            load_matrix(p)
        assert (exc.value.line, exc.value.column) == (1, 2)

    def test_truncated_raw(self, tmp_path):
        p = tmp_path / "m.bin"
        p.write_bytes(struct.pack("<QQ", 2, 2) + struct.pack("<3d", 1, 2, 3))
        with pytest.raises(ParseError, match="header declares"):
            load_matrix(p)

    def test_explicit_format_overrides_extension(self, tmp_path):
        p = tmp_path / "m.dat"
        save_matrix(p, np.eye(2), fmt="raw-f64")
        np.testing.assert_array_equal(load_matrix(p, fmt="raw-f64"), np.eye(2))


@settings(max_examples=50, deadline=None)
@given(M=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)),
                elements=st.floats(allow_nan=False, allow_infinity=False, width=64)),
       fmt=st.sampled_from(["csv", "raw-f64"]))
def test_round_trip_is_bitwise(tmp_path_factory, M, fmt):
    path = tmp_path_factory.mktemp("rt") / "m"
    save_matrix(path, M, fmt=fmt)
    back = load_matrix(path, fmt=fmt)
    # compare bytes so that -0.0 and 0.0 are distinguished
    assert back.shape == M.shape and back.tobytes() == M.tobytes()


class TestNormalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(normalize_rows([[3.0, 4.0]]), [[0.6, 0.8]], rtol=1e-15)

    def test_unit_rows_unchanged(self):
        X = np.eye(3)
        assert np.max(np.abs(normalize_rows(X) - X)) <= 1e-15

    def test_zero_row(self):
        with pytest.raises(DataError, match="row 1"):
            normalize_rows([[1.0, 0.0], [0.0, 0.0]])

    def test_similarity_is_sum_of_scaled_cosines(self):
        # with unit rows, trace(X^T A X) = sum_i cos(x_i, xhat_i) * |xhat_i|
        from elmvis.elm import hidden_layer, init_model, projection_matrix
        from elmvis.swap import init_state
        rng = np.random.default_rng(0)
        X = normalize_rows(rng.standard_normal((5, 3)))
        A = projection_matrix(hidden_layer(init_model(2, 3, "tanh", 1), rng.standard_normal((5, 2))))
        s = init_state(A, X)
        xhat = A @ X
        direct = sum(float(np.dot(x, h) / (np.linalg.norm(x) * np.linalg.norm(h))) * np.linalg.norm(h)
                     for x, h in zip(X, xhat))
        assert s.S == pytest.approx(direct, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6).filter(lambda v: abs(v) > 1e-3)))
def test_normalize_is_idempotent(X):
    once = normalize_rows(X)
    assert np.max(np.abs(normalize_rows(once) - once)) <= 1e-15


class TestLayout:
    def test_grid_corners(self):
        np.testing.assert_array_equal(make_layout("grid", 4, 2, 1.0),
                                      [[-1, -1], [-1, 1], [1, -1], [1, 1]])

    def test_grid_truncates_and_covers_extent(self):
        G = make_layout("grid", 10, 2, 2.0)
        assert G.shape == (10, 2)
        # 4x4 grid, row-major: the first axis varies slowest
        np.testing.assert_allclose(G[:4, 0], -2.0)
        np.testing.assert_allclose(G[:4, 1], np.linspace(-2, 2, 4))

    def test_grid_ignores_seed(self):
        assert make_layout("grid", 9, 2, seed=1).tobytes() == make_layout("grid", 9, 2, seed=2).tobytes()

    def test_normal_reproducible(self):
        a = make_layout("normal", 50, 3, 1.0, seed=4)
        b = make_layout("normal", 50, 3, 1.0, seed=4)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, make_layout("normal", 50, 3, 1.0, seed=5))

    def test_uniform_within_extent(self):
        U = make_layout("uniform", 1000, 2, 0.5, seed=0)
        assert np.all(np.abs(U) <= 0.5)

    def test_single_point_grid(self):
        assert make_layout("grid", 1, 3).shape == (1, 3)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            make_layout("spiral", 4)


class TestShuffle:
    def test_single_row(self):
        Xs, perm = shuffle_rows(np.array([[1.0, 2.0]]), seed=3)
        np.testing.assert_array_equal(Xs, [[1.0, 2.0]])
        np.testing.assert_array_equal(perm, [0])

    def test_inverse_restores(self):
        X = np.random.default_rng(0).standard_normal((20, 3))
        Xs, perm = shuffle_rows(X, seed=1)
        np.testing.assert_array_equal(Xs[np.argsort(perm)], X)
        np.testing.assert_array_equal(Xs, X[perm])

    def test_seeded(self):
        X = np.arange(30.0).reshape(10, 3)
        assert shuffle_rows(X, 5)[1].tolist() == shuffle_rows(X, 5)[1].tolist()


def test_one_hot():
    np.testing.assert_array_equal(one_hot([0, 2, 1]), [[1, 0, 0], [0, 0, 1], [0, 1, 0]])
    assert np.all(np.linalg.norm(one_hot([1, 1, 0], 4), axis=1) == 1.0)
    with pytest.raises(ValueError):
        one_hot([3], 2)


def test_label_and_pair_files(tmp_path):
    (tmp_path / "l.csv").write_text("0\n1\n1\n")
    assert load_labels(tmp_path / "l.csv").tolist() == [0, 1, 1]
    (tmp_path / "bad.csv").write_text("0.5\n")
    with pytest.raises(ParseError):
        load_labels(tmp_path / "bad.csv")
    (tmp_path / "p.csv").write_text("v_index,x_index\n3,4\n0,1\n")
    assert load_pairs(tmp_path / "p.csv") == [(3, 4), (0, 1)]


def test_json_floats_have_17_digits():
    assert dumps_json({"x": 0.1}, indent=None) == '{"x": 0.10000000000000001}'
    assert dumps_json([1.0, 2, True, None, "a"], indent=None) == '[1.0, 2, true, null, "a"]'
    with pytest.raises(ValueError):
        dumps_json(float("nan"))
