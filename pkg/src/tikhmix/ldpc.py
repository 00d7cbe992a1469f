"""LDPC codes: alist I/O, PEG construction, systematic encoding and BP decoding.

alist layout (all integers whitespace separated, one record per line)::

    n m                       codeword length, number of checks
    dv_max dc_max             largest column / row degree
    d_1 ... d_n               column degrees
    e_1 ... e_m               row degrees
    n lines                   1-based row indices of column j, zero padded to dv_max
    m lines                   1-based column indices of row i, zero padded to dc_max

Zeros are only allowed as padding after the listed degree. Blank lines are
ignored.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from .channel import Constellation

LLR_CLAMP = 30.0


class AlistError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class ParityCheckMatrix:
    n: int
    m: int
    col_adj: list  # col_adj[j] = sorted check indices of bit j
    row_adj: list  # row_adj[i] = sorted bit indices of check i

    def __post_init__(self):
        pairs_c = {(i, j) for j, rows in enumerate(self.col_adj) for i in rows}
        pairs_r = {(i, j) for i, cols in enumerate(self.row_adj) for j in cols}
        if pairs_c != pairs_r:
            raise ValueError("row and column adjacency disagree")
        if sum(len(r) for r in self.col_adj) != len(pairs_c):
            raise ValueError("duplicate edges")

    @classmethod
    def from_dense(cls, H):
        H = np.asarray(H) % 2
        m, n = H.shape
        return cls(n, m, [list(np.flatnonzero(H[:, j])) for j in range(n)],
                   [list(np.flatnonzero(H[i])) for i in range(m)])

    def to_dense(self):
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for i, cols in enumerate(self.row_adj):
            H[i, cols] = 1
        return H

    @property
    def n_edges(self):
        return sum(len(r) for r in self.row_adj)

    @property
    def design_rate(self):
        return 1.0 - self.m / self.n


def _ints(line, lineno):
    try:
        return [int(t) for t in line.split()]
    except ValueError:
        raise AlistError(f"non-integer token in {line!r}", lineno) from None


def parse_alist(text: str) -> ParityCheckMatrix:
    lines = [(no, ln) for no, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise AlistError(f"truncated file: missing {what}", last + 1)
        no, ln = lines[pos]
        pos += 1
        return no, _ints(ln, no)

    no, hdr = take("header")
    if len(hdr) != 2 or min(hdr) <= 0:
        raise AlistError("header must be 'n m' with positive values", no)
    n, m = hdr
    no, mx = take("max degrees")
    if len(mx) != 2 or min(mx) <= 0:
        raise AlistError("second line must hold two positive max degrees", no)
    dv_max, dc_max = mx
    no, cdeg = take("column degrees")
    if len(cdeg) != n:
        raise AlistError(f"expected {n} column degrees, got {len(cdeg)}", no)
    if max(cdeg) > dv_max or min(cdeg) < 0:
        raise AlistError("column degree out of range", no)
    no, rdeg = take("row degrees")
    if len(rdeg) != m:
        raise AlistError(f"expected {m} row degrees, got {len(rdeg)}", no)
    if max(rdeg) > dc_max or min(rdeg) < 0:
        raise AlistError("row degree out of range", no)

    def block(count, degs, limit, bound, what):
        out = []
        for idx in range(count):
            no, vals = take(f"{what} {idx + 1}")
            d = degs[idx]
            if len(vals) < d or len(vals) > limit:
                raise AlistError(f"{what} {idx + 1}: expected {d} entries (padded to at most {limit})", no)
            body, pad = vals[:d], vals[d:]
            if any(v != 0 for v in pad):
                raise AlistError(f"{what} {idx + 1}: nonzero entry beyond degree", no)
            for v in body:
                if not 1 <= v <= bound:
                    raise AlistError(f"{what} {idx + 1}: index {v} outside 1..{bound}", no)
            if len(set(body)) != len(body):
                raise AlistError(f"{what} {idx + 1}: duplicate index", no)
            out.append(sorted(v - 1 for v in body))
        return out, no

    col_adj, _ = block(n, cdeg, dv_max, m, "column")
    row_adj, last = block(m, rdeg, dc_max, n, "row")
    try:
        return ParityCheckMatrix(n, m, col_adj, row_adj)
    except ValueError as exc:
        raise AlistError(str(exc), last) from None


def format_alist(H: ParityCheckMatrix) -> str:
    """Canonical alist text (sorted indices, zero padding to the max degree)."""
    cdeg = [len(c) for c in H.col_adj]
    rdeg = [len(r) for r in H.row_adj]
    dv, dc = max(cdeg), max(rdeg)
    out = [f"{H.n} {H.m}", f"{dv} {dc}", " ".join(map(str, cdeg)), " ".join(map(str, rdeg))]
    for c in H.col_adj:
        out.append(" ".join(str(i + 1) for i in c) + " 0" * (dv - len(c)))
    for r in H.row_adj:
        out.append(" ".join(str(j + 1) for j in r) + " 0" * (dc - len(r)))
    return "\n".join(s.strip() for s in out) + "\n"


def peg_construct(n, m, col_weight, seed=0):
    """Progressive edge-growth Tanner graph with constant column weight.

    Each new edge of a bit goes to a lowest-degree check among those farthest
    from the bit in the current graph (ties broken by the seeded RNG).
    """
    rng = np.random.default_rng(seed)
    col_adj = [[] for _ in range(n)]
    row_adj = [[] for _ in range(m)]
    deg = np.zeros(m, dtype=int)
    for j in range(n):
        for e in range(col_weight):
            if e == 0:
                cand = np.flatnonzero(deg == deg.min())
            else:
                reached = np.zeros(m, dtype=bool)
                reached[col_adj[j]] = True
                frontier = list(col_adj[j])
                seen_bits = {j}
                prev = reached.copy()
                while True:
                    nxt = []
                    for c in frontier:
                        for b in row_adj[c]:
                            if b in seen_bits:
                                continue
                            seen_bits.add(b)
                            for c2 in col_adj[b]:
                                if not reached[c2]:
                                    reached[c2] = True
                                    nxt.append(c2)
                    if not nxt or reached.all():
                        break
                    prev = reached.copy()
                    frontier = nxt
                pool = ~reached if not reached.all() else ~prev
                pool[col_adj[j]] = False
                if not pool.any():
                    pool = np.ones(m, dtype=bool)
                    pool[col_adj[j]] = False
                idx = np.flatnonzero(pool)
                cand = idx[deg[idx] == deg[idx].min()]
            c = int(rng.choice(cand))
            col_adj[j].append(c)
            row_adj[c].append(j)
            deg[c] += 1
    return ParityCheckMatrix(n, m, [sorted(c) for c in col_adj], [sorted(r) for r in row_adj])


def _gf2_rref(A):
    A = A.copy() % 2
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.flatnonzero(A[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        others = np.flatnonzero(A[:, c])
        others = others[others != r]
        A[others] ^= A[r]
        pivots.append(c)
        r += 1
    return A[:r], pivots


class LdpcCode:
    """Parity-check matrix plus a cached systematic encoder and decoder tables."""

    def __init__(self, H: ParityCheckMatrix):
        self.H = H
        self.n = H.n
        dense = H.to_dense()
        R, pivots = _gf2_rref(dense)
        if len(pivots) < H.m:
            warnings.warn(f"parity-check matrix has rank {len(pivots)} < {H.m}; "
                          "dependent rows ignored for encoding", stacklevel=2)
        self.rank = len(pivots)
        self.parity_pos = np.array(pivots, dtype=np.int64)
        mask = np.ones(H.n, dtype=bool)
        mask[self.parity_pos] = False
        self.info_pos = np.flatnonzero(mask)
        self.k = self.info_pos.size
        self._P = R[:, self.info_pos].astype(np.uint8)
        # edges sorted by check for segment reductions
        ec, ev = [], []
        for i, cols in enumerate(H.row_adj):
            ec.extend([i] * len(cols))
            ev.extend(cols)
        self.edge_check = np.array(ec, dtype=np.int64)
        self.edge_var = np.array(ev, dtype=np.int64)
        self.check_start = np.concatenate([[0], np.cumsum([len(r) for r in H.row_adj])[:-1]])
        self._dense = dense

    @classmethod
    def from_alist(cls, text):
        return cls(parse_alist(text))

    @property
    def rate(self):
        return self.k / self.n

    def encode(self, info):
        u = np.asarray(info, dtype=np.uint8) % 2
        if u.size != self.k:
            raise ValueError(f"expected {self.k} info bits, got {u.size}")
        c = np.zeros(self.n, dtype=np.uint8)
        c[self.info_pos] = u
        c[self.parity_pos] = (self._P.astype(np.int64) @ u) % 2
        return c

    def extract_info(self, codeword):
        return np.asarray(codeword)[self.info_pos]

    def syndrome(self, bits):
        return (self._dense.astype(np.int64) @ np.asarray(bits, dtype=np.int64)) % 2


def load_fixture(name) -> LdpcCode:
    """Load a shipped alist fixture by file name (e.g. ``'peg_120_60.alist'``)."""
    text = resources.files("tikhmix.data").joinpath(name).read_text()
    return LdpcCode.from_alist(text)


FIXTURES = {
    "small": "peg_120_60.alist",
    "highrate": "peg_1020_112.alist",
}


def resolve_code(spec) -> LdpcCode:
    """Accept an LdpcCode, a fixture key, a shipped file name or a path."""
    if isinstance(spec, LdpcCode):
        return spec
    name = FIXTURES.get(spec, spec)
    try:
        return load_fixture(name)
    except (FileNotFoundError, OSError):
        with open(spec) as fh:
            return LdpcCode.from_alist(fh.read())


def encode(H, info):
    code = H if isinstance(H, LdpcCode) else LdpcCode(H)
    return code.encode(info)


def decode_bp(code, llr, max_iters=50, clamp=LLR_CLAMP):
    """Sum-product decoding in the tanh domain.

    LLRs are log P(0)/P(1). Returns ``(hard, posterior, converged, iterations)``.
    A zero posterior LLR counts as undecided, so ``converged`` needs every bit
    decided and every check satisfied.
    """
    if not isinstance(code, LdpcCode):
        code = LdpcCode(code)
    L = np.clip(np.asarray(llr, dtype=float), -clamp, clamp)
    if L.size != code.n:
        raise ValueError("llr length does not match the code")
    ev, ec, starts = code.edge_var, code.edge_check, code.check_start
    c2v = np.zeros(ev.size)
    post = L.copy()
    hard = (post < 0).astype(np.uint8)
    for it in range(1, max_iters + 1):
        v2c = post[ev] - c2v
        t = np.tanh(0.5 * v2c)
        mag = np.log(np.maximum(np.abs(t), 1e-300))
        neg = (t < 0).astype(np.int64)
        tot = np.add.reduceat(mag, starts)
        nneg = np.add.reduceat(neg, starts)
        ex_mag = np.minimum(np.exp(tot[ec] - mag), 1.0 - 1e-15)
        sign = 1.0 - 2.0 * ((nneg[ec] - neg) & 1)
        c2v = np.clip(sign * 2.0 * np.arctanh(ex_mag), -clamp, clamp)
        post = L + np.bincount(ev, weights=c2v, minlength=code.n)
        hard = (post < 0).astype(np.uint8)
        par = np.add.reduceat(hard[ev], starts) & 1
        if not par.any() and np.all(post != 0):
            return hard, post, True, it
    return hard, post, False, max_iters


def bits_to_symbol_beliefs(bit_llrs, constellation: Constellation):
    """Symbol log-beliefs from independent bit LLRs (product of bit probabilities)."""
    b = constellation.bits_per_symbol
    L = np.asarray(bit_llrs, dtype=float).reshape(-1, b)
    lp0 = -np.logaddexp(0.0, -L)
    lp1 = -np.logaddexp(0.0, L)
    T = constellation.bit_table.astype(bool)[None, :, :]
    out = np.where(T, lp1[:, None, :], lp0[:, None, :]).sum(axis=2)
    return out - logsumexp(out, axis=1, keepdims=True)


def symbol_pu_to_bit_llrs(log_pu, constellation: Constellation, method="exact"):
    """Bit LLRs log P(b=0)/P(b=1) from symbol log-likelihoods, flattened MSB first."""
    lp = np.asarray(log_pu, dtype=float)
    T = constellation.bit_table.astype(bool)
    out = np.empty((lp.shape[0], constellation.bits_per_symbol))
    for b in range(constellation.bits_per_symbol):
        one = T[:, b]
        if method == "exact":
            out[:, b] = logsumexp(lp[:, ~one], axis=1) - logsumexp(lp[:, one], axis=1)
        elif method == "maxlog":
            out[:, b] = lp[:, ~one].max(axis=1) - lp[:, one].max(axis=1)
        else:
            raise ValueError(f"unknown method {method!r}")
    return out.reshape(-1)
