import numpy as np
import pytest
from importlib import resources
from scipy.special import logsumexp

from tikhmix.channel import Constellation
from tikhmix.ldpc import (
    AlistError,
    LdpcCode,
    ParityCheckMatrix,
    bits_to_symbol_beliefs,
    decode_bp,
    encode,
    format_alist,
    load_fixture,
    parse_alist,
    peg_construct,
    resolve_code,
    symbol_pu_to_bit_llrs,
)

TOY = resources.files("tikhmix.data").joinpath("toy_3x6.alist").read_text()


def test_toy_adjacency():
    H = parse_alist(TOY)
    assert (H.n, H.m) == (6, 3)
    assert H.row_adj == [[0, 1, 3], [1, 2, 4], [0, 2, 5]]
    assert H.col_adj[0] == [0, 2]
    assert H.design_rate == 0.5


def test_roundtrip_canonical():
    for name in ("toy_3x6.alist", "peg_120_60.alist", "peg_1020_112.alist"):
        text = resources.files("tikhmix.data").joinpath(name).read_text()
        once = format_alist(parse_alist(text))
        assert format_alist(parse_alist(once)) == once


@pytest.mark.parametrize("lineno,new,needle", [
    (5, "0 3", "line 5"),
    (11, "1 2 9", "line 11"),
    (1, "6", "line 1"),
    (3, "2 2 2 1 1", "line 3"),
])
def test_parse_errors_name_line(lineno, new, needle):
    lines = TOY.splitlines()
    lines[lineno - 1] = new
    with pytest.raises(AlistError, match=needle):
        parse_alist("\n".join(lines))


def test_parse_truncated():
    with pytest.raises(AlistError, match="truncated"):
        parse_alist("\n".join(TOY.splitlines()[:8]))


def test_parse_inconsistent_rows():
    lines = TOY.splitlines()
    lines[10] = "1 2 5"  # row 1 claims column 5, column 5 lists row 2
    with pytest.raises(AlistError):
        parse_alist("\n".join(lines))


def test_fixture_codes():
    small = load_fixture("peg_120_60.alist")
    big = resolve_code("highrate")
    assert (small.n, small.H.m) == (120, 60)
    assert (big.n, big.H.m) == (1020, 112)
    assert big.rate == pytest.approx(908 / 1020)
    assert all(len(c) == 3 for c in big.H.col_adj)


def test_peg_deterministic():
    text = resources.files("tikhmix.data").joinpath("peg_120_60.alist").read_text()
    assert format_alist(peg_construct(120, 60, 3, seed=2024)) == text


def test_encode_zero_and_checks():
    code = load_fixture("peg_120_60.alist")
    assert not code.encode(np.zeros(code.k)).any()
    rng = np.random.default_rng(0)
    dense = code.H.to_dense().astype(int)
    for _ in range(50):
        u = rng.integers(0, 2, code.k)
        c = encode(code.H, u) if _ == 0 else code.encode(u)
        assert not ((dense @ c) % 2).any()
        assert np.array_equal(code.extract_info(c), u)


def test_encode_matches_dense_oracle():
    # parity from an independently derived generator: solve H_p p = H_i u over GF(2)
    code = load_fixture("peg_120_60.alist")
    dense = code.H.to_dense().astype(int)
    Hp = dense[:, code.parity_pos]
    Hi = dense[:, code.info_pos]
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.integers(0, 2, code.k)
        rhs = (Hi @ u) % 2
        A = np.concatenate([Hp, rhs[:, None]], axis=1) % 2
        r = 0
        for c in range(Hp.shape[1]):
            piv = next(i for i in range(r, A.shape[0]) if A[i, c])
            A[[r, piv]] = A[[piv, r]]
            for i in range(A.shape[0]):
                if i != r and A[i, c]:
                    A[i] ^= A[r]
            r += 1
        p = A[: Hp.shape[1], -1]
        assert np.array_equal(code.encode(u)[code.parity_pos], p)


def test_rank_deficient_warns():
    H = np.array([[1, 1, 0, 0], [0, 1, 1, 0], [1, 0, 1, 0], [0, 0, 1, 1]])
    with pytest.warns(UserWarning, match="rank"):
        code = LdpcCode(ParityCheckMatrix.from_dense(H))
    c = code.encode(np.ones(code.k))
    assert not ((H @ c) % 2).any()


def test_noiseless_converges_in_one():
    code = resolve_code("small")
    c = code.encode(np.random.default_rng(2).integers(0, 2, code.k))
    llr = np.where(c == 0, np.inf, -np.inf)
    hard, post, ok, it = decode_bp(code, llr)
    assert ok and it == 1 and np.array_equal(hard, c)


def test_zero_llr_not_converged():
    code = resolve_code("small")
    hard, post, ok, it = decode_bp(code, np.zeros(code.n), max_iters=10)
    assert not ok and it == 10


def test_single_error_sweep():
    code = resolve_code("small")
    c = code.encode(np.random.default_rng(3).integers(0, 2, code.k))
    base = np.where(c == 0, 10.0, -10.0)
    for pos in range(code.n):
        llr = base.copy()
        llr[pos] = -llr[pos]
        hard, _, ok, _ = decode_bp(code, llr)
        assert ok and np.array_equal(hard, c), pos


def test_sign_agreement_monotone():
    code = resolve_code("small")
    rng = np.random.default_rng(4)
    c = code.encode(rng.integers(0, 2, code.k))
    rates = []
    for mu in (0.5, 2.0, 5.0):
        agree = 0
        for _ in range(30):
            llr = (1 - 2.0 * c) * mu + rng.normal(0, np.sqrt(2 * mu), code.n)
            _, post, _, _ = decode_bp(code, llr)
            agree += np.mean((post < 0) == c)
        rates.append(agree / 30)
    assert rates[0] <= rates[1] <= rates[2] and rates[2] > 0.999


@pytest.mark.parametrize("M", [2, 4, 8])
def test_belief_conversions(M):
    C = Constellation(M)
    b = C.bits_per_symbol
    u = bits_to_symbol_beliefs(np.zeros(5 * b), C)
    assert np.allclose(u, -np.log(M))
    bits = np.random.default_rng(5).integers(0, 2, 5 * b)
    ind = bits_to_symbol_beliefs(np.where(bits == 0, np.inf, -np.inf), C)
    assert np.array_equal(np.argmax(ind, axis=1), C.map_bits(bits))
    assert np.allclose(np.exp(ind).max(axis=1), 1.0)
    lp = bits_to_symbol_beliefs(np.random.default_rng(6).normal(0, 3, 5 * b), C)
    assert np.allclose(logsumexp(lp, axis=1), 0, atol=1e-12)


def test_symbol_to_bit_brute_force():
    C = Constellation(8)
    rng = np.random.default_rng(7)
    lp = np.log(rng.dirichlet(np.ones(8), 4))
    ours = symbol_pu_to_bit_llrs(lp, C).reshape(4, 3)
    for s in range(4):
        for bit in range(3):
            p0 = sum(np.exp(lp[s, x]) for x in range(8) if C.bit_table[x, bit] == 0)
            p1 = sum(np.exp(lp[s, x]) for x in range(8) if C.bit_table[x, bit] == 1)
            assert ours[s, bit] == pytest.approx(np.log(p0 / p1), abs=1e-12)
    ml = symbol_pu_to_bit_llrs(lp, C, method="maxlog").reshape(4, 3)
    for s in range(4):
        for bit in range(3):
            zero = C.bit_table[:, bit] == 0
            assert ml[s, bit] == pytest.approx(lp[s, zero].max() - lp[s, ~zero].max(), abs=1e-12)
    with pytest.raises(ValueError):
        symbol_pu_to_bit_llrs(lp, C, method="other")


def test_roundtrip_all_fixtures_zero_noise():
    for key in ("small", "highrate"):
        code = resolve_code(key)
        u = np.random.default_rng(8).integers(0, 2, code.k)
        c = code.encode(u)
        hard, _, ok, _ = decode_bp(code, np.where(c == 0, 30.0, -30.0))
        assert ok and np.array_equal(code.extract_info(hard), u)
