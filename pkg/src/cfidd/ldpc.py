"""LDPC codes: seeded regular construction, systematic encoding, box-plus SPA.

LLR convention at this module's boundary: ``log P(b=1) / P(b=0)``, i.e. a
positive value favours bit 1 (amplitude +1).  The decoder negates on the way
in and out so the check-node rule can use the textbook box-plus form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

LLR_CLIP = 50.0
_PAD = 1e6  # box-plus identity element for padded check sockets


@dataclass(frozen=True)
class LdpcCode:
    H: np.ndarray  # (n-k) x n, uint8
    G: np.ndarray  # k x n, uint8, G @ H^T = 0 (mod 2)
    info_idx: np.ndarray
    parity_idx: np.ndarray
    max_iters: int = 10

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def k(self) -> int:
        return self.G.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def _graph(self):
        rows, cols = np.nonzero(self.H)
        m, n = self.H.shape
        # edges sorted check-major (np.nonzero already is)
        row_deg = np.bincount(rows, minlength=m)
        col_deg = np.bincount(cols, minlength=n)
        dc, dv = int(row_deg.max()), int(col_deg.max())
        n_edges = len(rows)

        # check sockets -> edge id, padded with n_edges (points to a pad slot)
        chk_edges = np.full((m, dc), n_edges, dtype=np.int64)
        start = np.concatenate([[0], np.cumsum(row_deg)[:-1]])
        pos = np.arange(n_edges) - start[rows]
        chk_edges[rows, pos] = np.arange(n_edges)

        order = np.argsort(cols, kind="stable")
        var_edges = np.full((n, dv), n_edges, dtype=np.int64)
        cstart = np.concatenate([[0], np.cumsum(col_deg)[:-1]])
        cpos = np.arange(n_edges) - cstart[cols[order]]
        var_edges[cols[order], cpos] = order

        chk_vars = np.full((m, dc), n, dtype=np.int64)
        chk_vars[rows, pos] = cols
        return {"edge_var": cols, "chk_edges": chk_edges, "var_edges": var_edges,
                "chk_vars": chk_vars, "n_edges": n_edges}


@dataclass
class DecodeResult:
    extrinsic: np.ndarray
    hard_bits: np.ndarray
    converged: np.ndarray
    iters_used: np.ndarray
    posterior: np.ndarray = field(repr=False, default=None)


# ---------------------------------------------------------------- GF(2)

def gf2_rref(A: np.ndarray):
    """Row-reduce a binary matrix; returns (R, pivot_columns)."""
    R = (np.asarray(A) & 1).astype(np.uint8).copy()
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.nonzero(R[row:, col])[0]
        if len(hits) == 0:
            continue
        p = row + hits[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        others = np.nonzero(R[:, col])[0]
        others = others[others != row]
        R[others] ^= R[row]
        pivots.append(col)
        row += 1
    return R, np.array(pivots, dtype=np.int64)


def gf2_rank(A: np.ndarray) -> int:
    return len(gf2_rref(A)[1])


def code_from_parity_check(H: np.ndarray, max_iters: int = 10) -> LdpcCode:
    """Systematic generator via Gaussian elimination.

    The pivot columns of the reduced ``H`` carry parity, the rest carry the
    message in order.
    """
    H = (np.asarray(H) & 1).astype(np.uint8)
    m, n = H.shape
    R, piv = gf2_rref(H)
    r = len(piv)
    if r != m:
        raise ValueError(f"parity-check matrix is rank deficient ({r} < {m})")
    info = np.setdiff1d(np.arange(n), piv)
    P = R[:r][:, info]  # parity = P @ info (mod 2)
    G = np.zeros((n - r, n), dtype=np.uint8)
    G[:, info] = np.eye(n - r, dtype=np.uint8)
    G[:, piv] = P.T
    return LdpcCode(H=H, G=G, info_idx=info, parity_idx=piv, max_iters=max_iters)


# ---------------------------------------------------------- construction

def _regular_parity_check(n: int, m: int, dv: int, dc: int, rng) -> np.ndarray | None:
    """Column-by-column placement keeping row degrees balanced and no 4-cycles."""
    H = np.zeros((m, n), dtype=np.uint8)
    row_deg = np.zeros(m, dtype=np.int64)
    shares = np.zeros((m, m), dtype=bool)  # rows already joined by some column
    for c in rng.permutation(n):
        chosen = []
        for _ in range(dv):
            ok = row_deg < dc
            if chosen:
                ok &= ~shares[chosen].any(axis=0)
                ok[chosen] = False
            cand = np.nonzero(ok)[0]
            if len(cand) == 0:
                return None
            low = cand[row_deg[cand] == row_deg[cand].min()]
            chosen.append(int(rng.choice(low)))
        H[chosen, c] = 1
        row_deg[chosen] += 1
        for a in chosen:
            shares[a, chosen] = True
    if np.any(row_deg != dc):
        return None
    return H


def build_code(n: int = 512, k: int = 256, seed=0, dv: int = 3, max_iters: int = 10,
               max_retries: int = 200) -> LdpcCode:
    """Seeded regular (dv, dc) LDPC code of length ``n`` and dimension ``k``.

    Raises:
        ValueError: bad dimensions, or no full-rank, 4-cycle-free matrix
            found within ``max_retries`` attempts.
    """
    if not 0 < k < n:
        raise ValueError("need 0 < k < n")
    m = n - k
    if (n * dv) % m:
        raise ValueError(f"n*dv={n * dv} is not divisible by n-k={m}")
    dc = n * dv // m
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        H = _regular_parity_check(n, m, dv, dc, rng)
        if H is not None and gf2_rank(H) == m:
            return code_from_parity_check(H, max_iters=max_iters)
    raise ValueError(f"no full-rank ({dv},{dc}) code found after {max_retries} retries")


# --------------------------------------------------------------- encoding

def encode(code: LdpcCode, message) -> np.ndarray:
    msg = np.asarray(message)
    if msg.shape[-1] != code.k:
        raise ValueError(f"message length {msg.shape[-1]} != k={code.k}")
    return ((msg.astype(np.int64) @ code.G) & 1).astype(np.uint8)


def syndrome(code: LdpcCode, bits) -> np.ndarray:
    return ((np.asarray(bits).astype(np.int64) @ code.H.T) & 1).astype(np.uint8)


def extract_message(code: LdpcCode, bits) -> np.ndarray:
    return np.asarray(bits)[..., code.info_idx]


# --------------------------------------------------------------- decoding

def boxplus(l1, l2):
    """Pairwise box-plus via the min-sum-plus-correction identity."""
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    out = (np.sign(l1) * np.sign(l2) * np.minimum(np.abs(l1), np.abs(l2))
           + np.log1p(np.exp(-np.abs(l1 + l2))) - np.log1p(np.exp(-np.abs(l1 - l2))))
    return float(out) if out.ndim == 0 else out


def boxplus_exact(l1, l2):
    """Closed form ``log((1 + e^(l1+l2)) / (e^l1 + e^l2))`` in log-sum-exp terms."""
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    out = np.logaddexp(0.0, l1 + l2) - np.logaddexp(l1, l2)
    return float(out) if out.ndim == 0 else out


def _check_update(msgs: np.ndarray) -> np.ndarray:
    """Exclusive box-plus along the last axis using prefix/suffix sweeps."""
    d = msgs.shape[-1]
    prefix = np.empty_like(msgs)
    suffix = np.empty_like(msgs)
    prefix[..., 0] = msgs[..., 0]
    suffix[..., -1] = msgs[..., -1]
    for t in range(1, d):
        prefix[..., t] = boxplus(prefix[..., t - 1], msgs[..., t])
        suffix[..., d - 1 - t] = boxplus(suffix[..., d - t], msgs[..., d - 1 - t])
    out = np.empty_like(msgs)
    out[..., 0] = suffix[..., 1]
    out[..., -1] = prefix[..., -2]
    for t in range(1, d - 1):
        out[..., t] = boxplus(prefix[..., t - 1], suffix[..., t + 1])
    return out


def decode(code: LdpcCode, intrinsic, max_iters: int | None = None,
           clip: float = LLR_CLIP) -> DecodeResult:
    """Flooding box-plus sum-product decoding.

    Args:
        code: the LDPC code.
        intrinsic: LLRs of shape (n,) or (frames, n), positive favouring 1.
        max_iters: defaults to ``code.max_iters``.

    Returns:
        DecodeResult whose ``extrinsic`` is the posterior minus the intrinsic
        input (clipped to +-clip), ready to be fed back as a-priori
        information.
    """
    g = code._graph
    max_iters = code.max_iters if max_iters is None else max_iters
    lin = np.asarray(intrinsic, dtype=float)
    single = lin.ndim == 1
    lin = np.atleast_2d(lin)
    if lin.shape[1] != code.n:
        raise ValueError(f"expected {code.n} LLRs, got {lin.shape[1]}")
    lin = np.clip(lin, -clip, clip)
    B = lin.shape[0]
    n, E = code.n, g["n_edges"]

    # internal convention: positive favours bit 0
    lam = -lin
    post = lam.copy()
    c2v = np.zeros((B, E + 1))
    v2c = np.full((B, E + 1), _PAD)
    v2c[:, :E] = lam[:, g["edge_var"]]
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)
    active = np.arange(B)

    hard = (post < 0).astype(np.uint8)
    for it in range(1, max_iters + 1):
        if len(active) == 0:
            break
        msgs = v2c[active][:, g["chk_edges"]]
        upd = _check_update(msgs)
        c2v_a = np.zeros((len(active), E + 1))
        c2v_a[:, g["chk_edges"]] = upd
        c2v_a[:, E] = 0.0
        c2v_a[:, :E] = np.clip(c2v_a[:, :E], -clip, clip)
        c2v[active] = c2v_a
        total = lam[active] + c2v_a[:, g["var_edges"]].sum(axis=-1)
        post[active] = total
        hard_a = (total < 0).astype(np.uint8)
        hard[active] = hard_a
        iters[active] = it
        padded = np.concatenate([hard_a, np.zeros((len(active), 1), np.uint8)], axis=1)
        ok = ~np.any(padded[:, g["chk_vars"]].sum(axis=-1) & 1, axis=1)
        converged[active[ok]] = True
        v2c_a = np.full((len(active), E + 1), _PAD)
        v2c_a[:, :E] = np.clip(total[:, g["edge_var"]] - c2v_a[:, :E], -clip, clip)
        v2c[active] = v2c_a
        active = active[~ok]

    ext = np.clip(-(post - lam), -clip, clip)
    posterior = -post
    if single:
        return DecodeResult(ext[0], hard[0], bool(converged[0]), int(iters[0]), posterior[0])
    return DecodeResult(ext, hard, converged, iters, posterior)


# ------------------------------------------------------------------ alist

def write_alist(H: np.ndarray, path) -> None:
    H = np.asarray(H) & 1
    m, n = H.shape
    cols = [np.nonzero(H[:, j])[0] + 1 for j in range(n)]
    rows = [np.nonzero(H[i])[0] + 1 for i in range(m)]
    dv = max(len(c) for c in cols)
    dc = max(len(r) for r in rows)

    def pad(v, w):
        return " ".join(str(x) for x in list(v) + [0] * (w - len(v)))

    lines = [f"{n} {m}", f"{dv} {dc}",
             " ".join(str(len(c)) for c in cols),
             " ".join(str(len(r)) for r in rows)]
    lines += [pad(c, dv) for c in cols]
    lines += [pad(r, dc) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_alist(path) -> np.ndarray:
    tokens = [int(t) for t in Path(path).read_text().split()]
    it = iter(tokens)
    n, m = next(it), next(it)
    dv, dc = next(it), next(it)
    col_deg = [next(it) for _ in range(n)]
    [next(it) for _ in range(m)]
    H = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        entries = [next(it) for _ in range(dv)]
        for r in entries[:col_deg[j]]:
            H[r - 1, j] = 1
    # row section repeats the same information; consumed for format checking
    for _ in range(m * dc):
        next(it)
    return H
