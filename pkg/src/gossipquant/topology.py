"""Doubly stochastic mixing matrices and their spectral mixing rate.

The gossip step averages node models with the weights of a symmetric
doubly stochastic matrix. Its second-largest absolute eigenvalue (zeta)
controls how fast disagreement between nodes contracts: zero for the
all-pairs average, one when nothing mixes.
"""

from dataclasses import dataclass

import numpy as np

ROW_COL_TOL = 1e-10
SYMMETRY_TOL = 1e-12

__all__ = ["MixingMatrix", "ValidationReport", "build_mixing", "validate_doubly_stochastic", "zeta", "load_edge_list"]


@dataclass(frozen=True)
class ValidationReport:
    """Worst violation magnitude per doubly stochastic check."""

    row_sum: float
    col_sum: float
    symmetry: float
    negativity: float

    @property
    def ok(self):
        return (
            self.row_sum <= ROW_COL_TOL
            and self.col_sum <= ROW_COL_TOL
            and self.symmetry <= SYMMETRY_TOL
            and self.negativity <= 0.0
        )

    def failures(self):
        out = []
        if self.row_sum > ROW_COL_TOL:
            out.append(f"row sums off by {self.row_sum:.3e}")
        if self.col_sum > ROW_COL_TOL:
            out.append(f"column sums off by {self.col_sum:.3e}")
        if self.symmetry > SYMMETRY_TOL:
            out.append(f"asymmetry of {self.symmetry:.3e}")
        if self.negativity > 0.0:
            out.append(f"negative entry of {self.negativity:.3e}")
        return out


@dataclass(frozen=True)
class MixingMatrix:
    """Validated mixing matrix with its cached spectral value."""

    entries: np.ndarray
    zeta: float
    connected: bool = True

    @property
    def n(self):
        return self.entries.shape[0]

    @classmethod
    def from_entries(cls, entries, connected=True):
        entries = np.asarray(entries, dtype=np.float64)
        report = validate_doubly_stochastic(entries)
        if not report.ok:
            raise ValueError("matrix is not doubly stochastic: " + "; ".join(report.failures()))
        return cls(entries, zeta(entries), connected=connected)

    def neighbors(self, i):
        """Node ids j != i with nonzero weight into node i."""
        return [int(j) for j in np.flatnonzero(self.entries[:, i]) if j != i]


def validate_doubly_stochastic(C):
    """Diagnostic check of row sums, column sums, symmetry, nonnegativity."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("matrix must be square")
    return ValidationReport(
        row_sum=float(np.max(np.abs(C.sum(axis=1) - 1.0))),
        col_sum=float(np.max(np.abs(C.sum(axis=0) - 1.0))),
        symmetry=float(np.max(np.abs(C - C.T))),
        negativity=float(max(0.0, -C.min())),
    )


def zeta(C):
    """Largest absolute eigenvalue of the disagreement part of C.

    Subtracting the rank-one consensus projector removes the trivial unit
    eigenvalue, so the symmetric eigendecomposition of the remainder
    yields the second-largest absolute eigenvalue of C itself.
    """
    if isinstance(C, MixingMatrix):
        return C.zeta
    C = np.asarray(C, dtype=np.float64)
    n = C.shape[0]
    J = np.full((n, n), 1.0 / n)
    eigs = np.linalg.eigvalsh(C - J)
    value = float(np.max(np.abs(eigs)))
    # the value is confined to [0, 1] for any doubly stochastic matrix;
    # absorb eigensolver overshoot but let grossly invalid inputs show
    if 1.0 < value <= 1.0 + 1e-9:
        value = 1.0
    return value


def build_mixing(kind, n, *, self_weight=None, adjacency=None):
    """Construct a named mixing matrix on ``n`` nodes.

    ``complete`` is the all-pairs average, ``disconnected`` the identity,
    ``ring`` a circulant with ``self_weight`` on the diagonal and the rest
    split between the two ring neighbors, and ``custom`` applies
    Metropolis-Hastings weights to a given symmetric adjacency matrix
    (which guarantees the result is doubly stochastic). A disconnected
    custom graph is allowed but flagged, since its zeta is 1.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if kind == "complete":
        C = np.full((n, n), 1.0 / n)
        connected = True
    elif kind == "disconnected":
        C = np.eye(n)
        connected = False
    elif kind == "ring":
        if self_weight is None:
            self_weight = 1.0 / 3.0
        if not (0.0 < self_weight < 1.0):
            raise ValueError("ring self_weight must lie in (0, 1)")
        C = np.zeros((n, n))
        half = 0.5 * (1.0 - self_weight)
        for i in range(n):
            C[i, i] = self_weight
            C[i, (i + 1) % n] += half
            C[i, (i - 1) % n] += half
        connected = True
    elif kind == "custom":
        if adjacency is None:
            raise ValueError("custom topology requires an adjacency matrix")
        C, connected = _metropolis_hastings(np.asarray(adjacency))
        if C.shape[0] != n:
            raise ValueError(f"adjacency is {C.shape[0]}x{C.shape[0]}, expected n={n}")
    else:
        raise ValueError(f"unknown topology kind {kind!r}")
    return MixingMatrix.from_entries(C, connected=connected)


def _metropolis_hastings(adj):
    n = adj.shape[0]
    if adj.shape != (n, n) or not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be square and symmetric")
    adj = (adj != 0).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    deg = adj.sum(axis=1)
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                C[i, j] = C[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(C, 1.0 - C.sum(axis=1))
    return C, _is_connected(adj)


def _is_connected(adj):
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def load_edge_list(path):
    """Read an undirected edge list ("i j" per line, zero-based) into an adjacency matrix."""
    edges = []
    max_node = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            i, j = int(parts[0]), int(parts[1])
            if i < 0 or j < 0:
                raise ValueError(f"{path}:{lineno}: node ids must be nonnegative")
            if i == j:
                raise ValueError(f"{path}:{lineno}: self-loops are not allowed")
            edges.append((i, j))
            max_node = max(max_node, i, j)
    if max_node < 1:
        raise ValueError(f"{path}: no edges found")
    adj = np.zeros((max_node + 1, max_node + 1))
    for i, j in edges:
        adj[i, j] = adj[j, i] = 1.0
    return adj
