"""Partial Graver bases from solution differences, plus an exact completion oracle.

A Graver basis of an integer matrix A is the set of conformally minimal
nonzero integer kernel elements; augmenting a feasible point along basis
directions with unit steps is the move set used by both levels of the
bi-level heuristic.  Differences of feasible solutions of A x = b lie in the
kernel, and filtering them to the conformally minimal ones yields a partial
basis.  ``pottier_graver`` computes the complete basis by critical-pair
completion and is meant as a test oracle for small matrices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

IntVec = tuple[int, ...]


def is_conformal(x, y) -> bool:
    """x is conformal to y: same orthant and |x_i| <= |y_i| everywhere."""
    if len(x) != len(y):
        raise ValueError(f"dimension mismatch: {len(x)} vs {len(y)}")
    return all(xi * yi >= 0 and abs(xi) <= abs(yi) for xi, yi in zip(x, y))


def sign_canonical(v) -> IntVec:
    """Flip the sign so the first nonzero entry is positive."""
    v = tuple(int(e) for e in v)
    for e in v:
        if e > 0:
            return v
        if e < 0:
            return tuple(-x for x in v)
    return v


def negate(v: IntVec) -> IntVec:
    return tuple(-e for e in v)


def _scan_key(v: IntVec):
    # ascending 1-norm, ties by descending lexicographic order; this keeps the
    # single-lane swap (1,0,-1,0,1,0) ahead of its 3-entry peers on the
    # reference fixture, matching the documented walk
    return (sum(abs(e) for e in v), tuple(-e for e in v))


@dataclass(frozen=True, eq=False)
class GraverSet:
    """Sign-canonical, conformally minimal integer kernel vectors.

    Stored vectors have their first nonzero entry positive; walks try both
    signs, and ``signed_vectors`` expands the set with the negations.
    The scan order (ascending 1-norm, descending lexicographic on ties) is
    fixed here so augmentation walks are deterministic.
    """

    vectors: tuple[IntVec, ...]
    kernel_matrix: np.ndarray | None = None

    def __post_init__(self):
        vecs = tuple(sorted({sign_canonical(v) for v in self.vectors}, key=_scan_key))
        if any(not any(v) for v in vecs):
            raise ValueError("GraverSet must not contain the zero vector")
        object.__setattr__(self, "vectors", vecs)
        if self.kernel_matrix is not None:
            a = np.asarray(self.kernel_matrix, dtype=int)
            object.__setattr__(self, "kernel_matrix", a)
            if vecs and np.any(a @ np.array(vecs, dtype=int).T):
                raise ValueError("vector outside the kernel of the stored matrix")

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    @property
    def signed_vectors(self) -> tuple[IntVec, ...]:
        out = []
        for v in self.vectors:
            out.append(v)
            out.append(negate(v))
        return tuple(out)


def lattice_from_differences(solutions) -> tuple[IntVec, ...]:
    """All pairwise differences of the given feasible solutions, zero dropped,
    sign-canonicalized and deduplicated."""
    sols = [tuple(int(e) for e in s) for s in solutions]
    out = set()
    for x, y in combinations(sols, 2):
        d = sign_canonical(tuple(a - b for a, b in zip(x, y)))
        if any(d):
            out.add(d)
    return tuple(sorted(out))


def conformal_filter(candidates, kernel_matrix: np.ndarray | None = None) -> GraverSet:
    """Keep the conformally minimal candidates (either sign counts as a witness).

    The result is pairwise incomparable under the conformal order and forms a
    partial Graver basis whenever the candidates are kernel vectors.
    """
    cands = sorted({sign_canonical(v) for v in candidates if any(v)})
    kept = []
    for v in cands:
        dominated = False
        for u in cands:
            if u == v:
                continue
            if is_conformal(u, v) or is_conformal(negate(u), v):
                dominated = True
                break
        if not dominated:
            kept.append(v)
    return GraverSet(tuple(kept), kernel_matrix=kernel_matrix)


# --- exact completion (test oracle) ----------------------------------------


def integer_kernel_basis(a: np.ndarray) -> list[IntVec]:
    """Lattice basis of ker(A) over the integers, by unimodular row reduction
    of [A^T | I]."""
    a = np.asarray(a, dtype=int)
    m, n = a.shape
    rows = [
        [int(a[j, i]) for j in range(m)] + [1 if t == i else 0 for t in range(n)]
        for i in range(n)
    ]
    r = 0
    for col in range(m):
        while True:
            nz = [i for i in range(r, n) if rows[i][col] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda i: (abs(rows[i][col]), i))
            rows[r], rows[piv] = rows[piv], rows[r]
            for i in range(r + 1, n):
                if rows[i][col] != 0:
                    q = rows[i][col] // rows[r][col]
                    rows[i] = [x - q * y for x, y in zip(rows[i], rows[r])]
            if not any(rows[i][col] for i in range(r + 1, n)):
                r += 1
                break
    return [tuple(row[m:]) for row in rows[r:]]


def _normal_form(h: IntVec, pool) -> IntVec:
    reduced = True
    while reduced and any(h):
        reduced = False
        for g in pool:
            if is_conformal(g, h):
                h = tuple(a - b for a, b in zip(h, g))
                reduced = True
                break
    return h


def pottier_graver(a: np.ndarray, max_cols: int = 12) -> GraverSet:
    """Complete Graver basis of a small integer matrix by pair completion.

    Exponential in general; guarded at ``max_cols`` columns.  The returned
    set stores one sign per element (``signed_vectors`` has both, which is
    the full basis as usually printed).
    """
    a = np.asarray(a, dtype=int)
    if a.shape[1] > max_cols:
        raise ValueError(
            f"matrix has {a.shape[1]} columns, completion guarded at {max_cols}")
    seed = [v for v in integer_kernel_basis(a) if any(v)]
    pool: list[IntVec] = []
    seen = set()
    for v in seed:
        for w in (v, negate(v)):
            if w not in seen:
                pool.append(w)
                seen.add(w)
    queue = deque((f, g) for f, g in combinations(pool, 2))
    while queue:
        f, g = queue.popleft()
        s = tuple(x + y for x, y in zip(f, g))
        if not any(s):
            continue
        r = _normal_form(s, pool)
        if any(r):
            for w in (r, negate(r)):
                if w not in seen:
                    for h in pool:
                        queue.append((w, h))
                    pool.append(w)
                    seen.add(w)
    minimal = [
        g for g in pool
        if not any(h != g and is_conformal(h, g) for h in pool)
    ]
    return GraverSet(tuple(minimal), kernel_matrix=a)


# --- augmentation ------------------------------------------------------------


def augment(current: IntVec, g: IntVec, feasible, objective,
            current_value: float | None = None):
    """One candidate step: current + g if feasible and strictly improving.

    ``feasible`` is the bounds check (binary bounds for designs,
    nonnegativity for flows); ``objective`` evaluates a point.  Returns the
    improved point or None.  Pass ``current_value`` to skip re-evaluating the
    incumbent.
    """
    candidate = tuple(c + d for c, d in zip(current, g))
    if not feasible(candidate):
        return None
    if current_value is None:
        current_value = objective(current)
    if objective(candidate) < current_value:
        return candidate
    return None


# --- flat text serialization -------------------------------------------------


def save_graver(gset: GraverSet, path) -> None:
    """One vector per line, space-separated integers."""
    with open(path, "w") as fh:
        for v in gset.vectors:
            fh.write(" ".join(str(e) for e in v) + "\n")


def load_graver(path, kernel_matrix: np.ndarray | None = None) -> GraverSet:
    vecs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                vecs.append(tuple(int(tok) for tok in line.split()))
    return GraverSet(tuple(vecs), kernel_matrix=kernel_matrix)
