"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (plain loops, exact fractions) and
shares no code with the package under test.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction

import numpy as np


# --- Otsu ---------------------------------------------------------------------

def otsu_brute_force(counts) -> int:
    """Last background bin maximizing between-class variance; smallest on ties."""
    counts = [int(c) for c in counts]
    total = sum(counts)
    best_k, best_var = None, None
    for k in range(len(counts) - 1):
        n0 = sum(counts[:k + 1])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * counts[i] for i in range(k + 1)), n0)
        mu1 = Fraction(sum(i * counts[i] for i in range(k + 1, len(counts))), n1)
        var = Fraction(n0, total) * Fraction(n1, total) * (mu1 - mu0) ** 2
        if best_var is None or var > best_var:
            best_k, best_var = k, var
    return best_k


# --- morphology ---------------------------------------------------------------

def footprint_offsets(shape: str, radius: int) -> list[tuple[int, int]]:
    out = []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if shape == "square" or dx * dx + dy * dy <= radius * radius:
                out.append((dy, dx))
    return out


def naive_dilate(m: np.ndarray, offsets) -> np.ndarray:
    h, w = m.shape
    out = np.zeros_like(m, dtype=bool)
    for y in range(h):
        for x in range(w):
            for dy, dx in offsets:
                yy, xx = y - dy, x - dx
                if 0 <= yy < h and 0 <= xx < w and m[yy, xx]:
                    out[y, x] = True
                    break
    return out


def naive_erode(m: np.ndarray, offsets) -> np.ndarray:
    h, w = m.shape
    out = np.zeros_like(m, dtype=bool)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy, dx in offsets:
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w and m[yy, xx]):
                    ok = False
                    break
            out[y, x] = ok
    return out


def naive_close(m: np.ndarray, offsets, radius: int) -> np.ndarray:
    # on an unbounded background plane: pad generously, then crop
    pad = 2 * radius + 1
    c = np.pad(m, pad)
    out = naive_erode(naive_dilate(c, offsets), offsets)
    return out[pad:-pad, pad:-pad]


def naive_open(m: np.ndarray, offsets, radius: int) -> np.ndarray:
    pad = 2 * radius + 1
    c = np.pad(m, pad)
    out = naive_dilate(naive_erode(c, offsets), offsets)
    return out[pad:-pad, pad:-pad]


def union_find_labels(m: np.ndarray) -> np.ndarray:
    """8-connected partition; returns a label per pixel (arbitrary numbering)."""
    h, w = m.shape
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for y in range(h):
        for x in range(w):
            if m[y, x]:
                parent[(y, x)] = (y, x)
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for dy, dx in ((-1, -1), (-1, 0), (-1, 1), (0, -1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and m[yy, xx]:
                    ra, rb = find((y, x)), find((yy, xx))
                    if ra != rb:
                        parent[ra] = rb
    roots = {}
    out = np.zeros((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if m[y, x]:
                out[y, x] = roots.setdefault(find((y, x)), len(roots) + 1)
    return out


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two label rasters induce the same partition of the foreground."""
    if not np.array_equal(a > 0, b > 0):
        return False
    fwd, bwd = {}, {}
    for la, lb in zip(a[a > 0].ravel().tolist(), b[b > 0].ravel().tolist()):
        if fwd.setdefault(la, lb) != lb or bwd.setdefault(lb, la) != la:
            return False
    return True


def border_flood_fill_holes(m: np.ndarray) -> np.ndarray:
    """Background not 4-reachable from the border becomes foreground."""
    h, w = m.shape
    reach = np.zeros_like(m, dtype=bool)
    q = deque()
    for y in range(h):
        for x in range(w):
            if (y in (0, h - 1) or x in (0, w - 1)) and not m[y, x]:
                reach[y, x] = True
                q.append((y, x))
    while q:
        y, x = q.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and not m[yy, xx] and not reach[yy, xx]:
                reach[yy, xx] = True
                q.append((yy, xx))
    return ~reach


def component_scan_clear_border(m: np.ndarray, margin: int) -> np.ndarray:
    """Drop components whose bounding box comes within ``margin`` of an edge."""
    labels = union_find_labels(m)
    h, w = m.shape
    out = m.copy()
    for lab in range(1, labels.max() + 1):
        ys, xs = np.nonzero(labels == lab)
        if (ys.min() <= margin or xs.min() <= margin
                or ys.max() >= h - 1 - margin or xs.max() >= w - 1 - margin):
            out[labels == lab] = False
    return out


def covariance_minor_axis(ys, xs) -> float:
    coords = np.stack([np.asarray(xs, float), np.asarray(ys, float)])
    if coords.shape[1] == 1:
        return 0.0
    cov = np.cov(coords, bias=True)
    lam = np.linalg.eigvalsh(cov)[0]
    return 4.0 * np.sqrt(max(lam, 0.0))


# --- kappa --------------------------------------------------------------------

def qwk_direct(truth, pred, n: int) -> float:
    """Cohen's quadratic weighted kappa straight from the textbook formula."""
    N = len(truth)
    O = [[0.0] * n for _ in range(n)]
    for t, p in zip(truth, pred):
        O[t][p] += 1.0 / N
    rows = [sum(O[i]) for i in range(n)]
    cols = [sum(O[i][j] for i in range(n)) for j in range(n)]
    num = den = 0.0
    for i in range(n):
        for j in range(n):
            w = (i - j) ** 2 / (n - 1) ** 2
            num += w * O[i][j]
            den += w * rows[i] * cols[j]
    return 1.0 if den == 0 else 1.0 - num / den


def bootstrap_kappa_loop(rows, which: str, replicates: int, seed: int, n: int = 6):
    """Group bootstrap with one ``integers`` call per replicate, same seeded stream."""
    groups = []
    index = {}
    for r in rows:
        if r.group_id not in index:
            index[r.group_id] = len(groups)
            groups.append([])
        groups[index[r.group_id]].append(r)
    rng = np.random.default_rng(seed)
    ks = []
    for _ in range(replicates):
        picks = rng.integers(0, len(groups), size=len(groups))
        truth, pred = [], []
        for g in picks:
            for r in groups[g]:
                truth.append(r.truth)
                pred.append(r.pred_a if which == "a" else r.pred_b)
        ks.append(qwk_direct(truth, pred, n))
    return np.percentile(ks, [2.5, 97.5])


def bootstrap_mean_loop(values, replicates: int, rng) -> tuple[float, float]:
    means = []
    for _ in range(replicates):
        picks = rng.integers(0, len(values), size=len(values))
        means.append(sum(values[i] for i in picks) / len(values))
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


# --- CRC-32C ------------------------------------------------------------------

def crc32c_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0x82F63B78 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def masked_crc_bitwise(data: bytes) -> int:
    c = crc32c_bitwise(data)
    return ((((c >> 15) | (c << 17)) & 0xFFFFFFFF) + 0xA282EAD8) & 0xFFFFFFFF


def parse_frames_bitwise(data: bytes) -> list[bytes]:
    """Record reader that checks both checksums with the bitwise CRC."""
    import struct

    out, pos = [], 0
    while pos < len(data):
        header = data[pos:pos + 8]
        (length,) = struct.unpack("<Q", header)
        (hcrc,) = struct.unpack("<I", data[pos + 8:pos + 12])
        assert hcrc == masked_crc_bitwise(header)
        payload = data[pos + 12:pos + 12 + length]
        (pcrc,) = struct.unpack("<I", data[pos + 12 + length:pos + 16 + length])
        assert pcrc == masked_crc_bitwise(payload)
        out.append(payload)
        pos += 16 + length
    return out


# --- tiling -------------------------------------------------------------------

def patches_needed(dim: int, patch: int, overlap: int) -> int:
    """Smallest n with patch + (n - 1) * stride >= dim, by counting up."""
    stride = patch - 2 * overlap
    n = 1
    while patch + (n - 1) * stride < dim:
        n += 1
    return n


def owner_of(pos: int, n: int, stride: int, overlap: int) -> int:
    """Index of the patch whose central block holds padded position ``pos``."""
    for i in range(n):
        lo = i * stride + overlap
        hi = lo + stride
        if i == 0:
            lo = 0
        if i == n - 1:
            hi = 10 ** 9
        if lo <= pos < hi:
            return i
    raise AssertionError(pos)
