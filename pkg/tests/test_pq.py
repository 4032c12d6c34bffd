"""Unit tests for the product quantization core."""

import numpy as np
import pytest

from pqclust import (
    DistanceTables,
    PQCodebook,
    build_distance_tables,
    decode,
    encode,
    paired_distance_sq,
    symmetric_distance_sq,
    train_codebook,
)


def random_codebook(m, l_count, sub_dim, seed=0):
    rng = np.random.default_rng(seed)
    return PQCodebook(rng.standard_normal((m, l_count, sub_dim)).astype(np.float32))


def lattice_codebook(m, l_count):
    """Codewords on the integer line, so squared distances are exact floats."""
    grid = np.arange(l_count, dtype=np.float32).reshape(l_count, 1)
    return PQCodebook(np.broadcast_to(grid, (m, l_count, 1)).copy())


class TestPQCodebook:
    def test_properties(self):
        book = random_codebook(4, 16, 3)
        assert book.num_subspaces == 4
        assert book.num_codewords == 16
        assert book.subspace_dim == 3
        assert book.dim == 12
        assert book.codewords.dtype == np.float32
        assert not book.codewords.flags.writeable

    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(ValueError, match="shape"):
            PQCodebook(np.zeros((4, 8), dtype=np.float32))
        with pytest.raises(ValueError, match="outside"):
            PQCodebook(np.zeros((2, 1, 3), dtype=np.float32))
        with pytest.raises(ValueError, match="outside"):
            PQCodebook(np.zeros((2, 257, 3), dtype=np.float32))
        with pytest.raises(ValueError, match="finite"):
            bad = np.zeros((2, 4, 3), dtype=np.float32)
            bad[0, 0, 0] = np.nan
            PQCodebook(bad)


class TestTrainCodebook:
    def test_shapes_and_determinism(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(300, 8)).astype(np.float32)
        book_a = train_codebook(data, 4, 16, iterations=5, seed=7)
        book_b = train_codebook(data, 4, 16, iterations=5, seed=7)
        book_c = train_codebook(data, 4, 16, iterations=5, seed=8)
        assert book_a.codewords.shape == (4, 16, 2)
        assert np.array_equal(book_a.codewords, book_b.codewords)
        assert not np.array_equal(book_a.codewords, book_c.codewords)

    def test_fixed_point_when_n_equals_l(self):
        # With exactly L distinct training vectors, every vector becomes its
        # own codeword and the quantizer reconstructs the data verbatim.
        rng = np.random.default_rng(11)
        data = rng.normal(size=(32, 6)).astype(np.float32)
        book = train_codebook(data, 2, 32, iterations=5, seed=0)
        assert np.array_equal(decode(book, encode(book, data)), data)

    def test_quantization_error_shrinks_with_iterations(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(2000, 8)).astype(np.float32)

        def mse(iterations):
            book = train_codebook(data, 2, 16, iterations=iterations, seed=0)
            recon = decode(book, encode(book, data)).astype(np.float64)
            return float(np.mean((data.astype(np.float64) - recon) ** 2))

        # Lloyd cost is non-increasing in float64; the final float32 cast
        # may perturb either side by rounding, hence the slack.
        assert mse(12) <= mse(1) * (1.0 + 1e-6)

    def test_validation(self):
        data = np.zeros((100, 10), dtype=np.float32)
        with pytest.raises(ValueError, match="divisible"):
            train_codebook(data, 3, 8)
        with pytest.raises(ValueError, match="num_codewords"):
            train_codebook(data, 2, 1)
        with pytest.raises(ValueError, match="num_codewords"):
            train_codebook(data, 2, 300)
        with pytest.raises(ValueError, match="training vectors"):
            train_codebook(data[:5], 2, 8)
        with pytest.raises(ValueError, match="iterations"):
            train_codebook(data, 2, 8, iterations=0)
        with pytest.raises(ValueError, match="2-d"):
            train_codebook(data.ravel(), 2, 8)


class TestEncodeDecode:
    def test_encode_matches_bruteforce_nearest(self):
        book = random_codebook(3, 12, 4, seed=5)
        rng = np.random.default_rng(6)
        vectors = rng.normal(size=(40, 12)).astype(np.float32)
        codes = encode(book, vectors)
        assert codes.shape == (40, 3)
        assert codes.dtype == np.uint8
        points = vectors.astype(np.float64)
        for i in range(len(vectors)):
            for m in range(3):
                sub = points[i, m * 4 : (m + 1) * 4]
                dists = [
                    float(np.sum((sub - cw.astype(np.float64)) ** 2))
                    for cw in book.codewords[m]
                ]
                assert codes[i, m] == int(np.argmin(dists))

    def test_encode_breaks_ties_toward_low_index(self):
        # Duplicate codeword: the lower index must win.
        cw = np.array([[[0.0], [3.0], [3.0], [7.0]]], dtype=np.float32)
        book = PQCodebook(cw)
        assert encode(book, np.array([3.0], dtype=np.float32))[0] == 1
        # Equidistant between codewords 0 and 1 on the integer line.
        lattice = lattice_codebook(1, 4)
        assert encode(lattice, np.array([0.5], dtype=np.float32))[0] == 0

    def test_encode_single_matches_batch(self):
        book = random_codebook(2, 8, 3, seed=1)
        rng = np.random.default_rng(2)
        vectors = rng.normal(size=(5, 6)).astype(np.float32)
        batch = encode(book, vectors)
        for i, vec in enumerate(vectors):
            single = encode(book, vec)
            assert single.shape == (2,)
            assert np.array_equal(single, batch[i])

    def test_encode_rejects_wrong_dimension(self):
        book = random_codebook(2, 8, 3)
        with pytest.raises(ValueError, match="dimension"):
            encode(book, np.zeros((4, 7), dtype=np.float32))

    def test_decode_gathers_codewords(self):
        book = random_codebook(3, 8, 2, seed=9)
        rng = np.random.default_rng(10)
        codes = rng.integers(0, 8, size=(20, 3), dtype=np.uint8)
        out = decode(book, codes)
        assert out.shape == (20, 6)
        assert out.dtype == np.float32
        for i in range(20):
            expected = np.concatenate([book.codewords[m][codes[i, m]] for m in range(3)])
            assert np.array_equal(out[i], expected)
        single = decode(book, codes[0])
        assert single.shape == (6,)
        assert np.array_equal(single, out[0])

    def test_decode_rejects_out_of_range_codes(self):
        book = random_codebook(2, 8, 2)
        with pytest.raises(ValueError, match=r"\[0, 8\)"):
            decode(book, np.array([[0, 9]], dtype=np.int64))
        with pytest.raises(ValueError, match="integers"):
            decode(book, np.array([[0.0, 1.0]]))


class TestDistanceTables:
    def test_tables_match_bruteforce(self):
        book = random_codebook(3, 10, 4, seed=13)
        tables = build_distance_tables(book)
        assert tables.tables.shape == (3, 10, 10)
        assert tables.tables.dtype == np.float64
        cw = book.codewords.astype(np.float64)
        for m in range(3):
            for i in range(10):
                for j in range(10):
                    expected = float(np.sum((cw[m, i] - cw[m, j]) ** 2))
                    assert tables.tables[m, i, j] == pytest.approx(expected, rel=1e-12)

    def test_validation(self):
        good = np.zeros((1, 3, 3))
        DistanceTables(good)
        with pytest.raises(ValueError, match="shape"):
            DistanceTables(np.zeros((3, 3)))
        bad_diag = good.copy()
        bad_diag[0, 1, 1] = 2.0
        with pytest.raises(ValueError, match="diagonal"):
            DistanceTables(bad_diag)
        asym = good.copy()
        asym[0, 0, 1] = 1.0
        with pytest.raises(ValueError, match="symmetric"):
            DistanceTables(asym)
        neg = good.copy()
        neg[0, 0, 1] = neg[0, 1, 0] = -1.0
        with pytest.raises(ValueError, match="non-negative"):
            DistanceTables(neg)


class TestSymmetricDistance:
    def test_paired_distance_matches_table_sum(self):
        book = random_codebook(4, 16, 3, seed=17)
        tables = build_distance_tables(book)
        rng = np.random.default_rng(18)
        a = rng.integers(0, 16, size=(50, 4), dtype=np.uint8)
        b = rng.integers(0, 16, size=(50, 4), dtype=np.uint8)
        got = paired_distance_sq(tables, a, b)
        for i in range(50):
            acc = 0.0
            for m in range(4):
                acc += float(tables.tables[m][a[i, m], b[i, m]])
            assert got[i] == acc

    def test_symmetric_distance_properties(self):
        book = random_codebook(2, 8, 3, seed=19)
        tables = build_distance_tables(book)
        a = np.array([1, 5], dtype=np.uint8)
        b = np.array([7, 2], dtype=np.uint8)
        assert symmetric_distance_sq(tables, a, a) == 0.0
        assert symmetric_distance_sq(tables, a, b) == symmetric_distance_sq(tables, b, a)
        assert symmetric_distance_sq(tables, a, b) > 0.0

    def test_matches_euclidean_between_decoded_codes(self):
        book = random_codebook(4, 32, 4, seed=21)
        tables = build_distance_tables(book)
        rng = np.random.default_rng(22)
        a = rng.integers(0, 32, size=(200, 4), dtype=np.uint8)
        b = rng.integers(0, 32, size=(200, 4), dtype=np.uint8)
        sd = paired_distance_sq(tables, a, b)
        diff = decode(book, a).astype(np.float64) - decode(book, b).astype(np.float64)
        euclid = np.sum(diff**2, axis=1)
        np.testing.assert_allclose(sd, euclid, rtol=1e-9, atol=0.0)

    def test_validation(self):
        book = random_codebook(2, 8, 2)
        tables = build_distance_tables(book)
        with pytest.raises(ValueError, match="shape"):
            paired_distance_sq(
                tables,
                np.zeros((3, 2), dtype=np.uint8),
                np.zeros((4, 2), dtype=np.uint8),
            )
        with pytest.raises(ValueError, match="single codes"):
            symmetric_distance_sq(
                tables,
                np.zeros((1, 2), dtype=np.uint8),
                np.zeros((1, 2), dtype=np.uint8),
            )
