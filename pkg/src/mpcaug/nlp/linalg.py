"""Dense symmetric-indefinite factorization with inertia.

Wraps the Bunch-Kaufman LDL^T of ``scipy.linalg.ldl``; the block diagonal D
(1x1 and 2x2 pivots) is tridiagonal and solved as a banded system.

The matrix is first equilibrated symmetrically, S A S with S positive and
diagonal, so rows of very different magnitude (barrier terms next to
constraint rows) factor on a common scale. S A S is congruent to A and has
the same inertia.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import ldl, solve_banded, solve_triangular

EQUILIBRATION_SWEEPS = 20
EQUILIBRATION_TOL = 1e-3


@dataclass(frozen=True)
class Inertia:
    positive: int
    negative: int
    zero: int


def equilibrate(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Symmetric Ruiz scaling: returns (S A S, diag(S)) with every row's max entry close to 1."""
    n = a.shape[0]
    scale = np.ones(n)
    m = a.copy()
    for _ in range(EQUILIBRATION_SWEEPS):
        row = np.sqrt(np.max(np.abs(m), axis=1))
        row[row == 0.0] = 1.0
        m = m / row[:, None] / row[None, :]
        scale = scale / row
        if np.max(np.abs(1.0 - row)) <= EQUILIBRATION_TOL:
            break
    return m, scale


def _block_inertia(d: np.ndarray, zero_tol: float) -> Inertia:
    n = d.shape[0]
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            eigs = np.linalg.eigvalsh(d[i : i + 2, i : i + 2])
            i += 2
        else:
            eigs = np.array([d[i, i]])
            i += 1
        for e in eigs:
            if abs(e) <= zero_tol:
                zero += 1
            elif e > 0:
                pos += 1
            else:
                neg += 1
    return Inertia(pos, neg, zero)


class SymmetricFactorization:
    """A = L D L^T of the equilibrated matrix, reusable for any number of right-hand sides.

    Pivots below ``zero_tol`` (relative to the largest pivot of the
    equilibrated matrix) count as zero.
    """

    def __init__(self, matrix: np.ndarray, zero_tol: float = 1e-12):
        a = np.asarray(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        self.n = a.shape[0]
        if self.n == 0:
            self.inertia = Inertia(0, 0, 0)
            return
        scaled, self._scale = equilibrate(a)
        lu, d, perm = ldl(scaled, lower=True, check_finite=False)
        self._perm = perm
        self._tri = lu[perm]
        ab = np.zeros((3, self.n))
        ab[0, 1:] = np.diag(d, 1)
        ab[1, :] = np.diag(d)
        ab[2, :-1] = np.diag(d, -1)
        self._banded = ab
        self.inertia = _block_inertia(d, zero_tol * max(1.0, float(np.max(np.abs(d)))))

    @property
    def singular(self) -> bool:
        return self.inertia.zero > 0

    def has_inertia(self, positive: int, negative: int) -> bool:
        return self.inertia == Inertia(positive, negative, 0)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        if self.n == 0:
            return b.copy()
        s = self._scale if b.ndim == 1 else self._scale[:, None]
        y = solve_triangular(self._tri, (s * b)[self._perm], lower=True, unit_diagonal=True)
        z = solve_banded((1, 1), self._banded, y)
        v = solve_triangular(self._tri, z, lower=True, trans="T", unit_diagonal=True)
        x = np.empty_like(v)
        x[self._perm] = v
        return s * x
