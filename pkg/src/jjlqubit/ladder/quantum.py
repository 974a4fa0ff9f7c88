"""Quantum phase model in a truncated charge basis.

    H = E_C/2 sum_i n_i^2 - sum_links E/2 (exp(-iA) hop_ij + h.c.)

``hop_ij = exp(i(phi_i - s phi_j))`` raises ``n_i`` by one and lowers
``n_j`` by ``s``.  Basis states are charge vectors with every ``|n_i| <=
n_max`` and, optionally, fixed total charge.  They are kept in the order of an
integer code (base ``2 n_max + 1`` digits), which turns "find the image state
of a hop" into a vectorized ``searchsorted``.
"""
from __future__ import annotations

import itertools
import logging
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .lattice import LadderSpec, Link, build_links, chirality_from_circulation, plaquette_loops, \
    ChiralityPattern

log = logging.getLogger(__name__)

DEFAULT_NNZ_CAP = 2_000_000


class DimensionCapExceeded(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass
class ChargeBasis:
    n_sites: int
    n_max: int
    n_tot: int | None
    states: np.ndarray  # (dim, n_sites) int8
    codes: np.ndarray   # sorted

    @classmethod
    def build(cls, n_sites: int, n_max: int, n_tot: int | None = 0) -> "ChargeBasis":
        base = 2 * n_max + 1
        # enumerate site by site, pruning partial sums that can no longer reach n_tot
        states = np.zeros((1, 0), dtype=np.int16)
        vals = np.arange(-n_max, n_max + 1, dtype=np.int16)
        for k in range(n_sites):
            rep = np.repeat(states, base, axis=0)
            col = np.tile(vals, len(states))[:, None]
            states = np.hstack([rep, col])
            if n_tot is not None:
                rest = n_sites - k - 1
                s = states.sum(1)
                keep = np.abs(n_tot - s) <= rest * n_max
                states = states[keep]
        codes = cls._code(states, n_max)
        order = np.argsort(codes)
        return cls(n_sites, n_max, n_tot, states[order].astype(np.int8), codes[order])

    @staticmethod
    def _code(states: np.ndarray, n_max: int) -> np.ndarray:
        base = 2 * n_max + 1
        w = base ** np.arange(states.shape[1], dtype=np.int64)
        return ((states.astype(np.int64) + n_max) * w).sum(1)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index_of(self, states: np.ndarray) -> np.ndarray:
        """Indices of charge vectors known to be in the basis."""
        c = self._code(np.atleast_2d(states), self.n_max)
        idx = np.searchsorted(self.codes, c)
        if np.any(idx >= self.dim) or np.any(self.codes[np.minimum(idx, self.dim - 1)] != c):
            raise KeyError("state outside the basis")
        return idx

    def hop_matrix(self, i: int, j: int, sign: int = 1) -> sps.csr_matrix:
        """exp(i(phi_i - sign*phi_j)) restricted to the basis (0/1 entries)."""
        T = self.states.astype(np.int16).copy()
        T[:, i] += 1
        T[:, j] -= sign
        ok = (np.abs(T[:, i]) <= self.n_max) & (np.abs(T[:, j]) <= self.n_max)
        if self.n_tot is not None:
            ok &= T.sum(1) == self.n_tot
        src = np.nonzero(ok)[0]
        dst = self.index_of(T[ok]) if len(src) else np.zeros(0, dtype=np.int64)
        return sps.csr_matrix((np.ones(len(src)), (dst, src)), shape=(self.dim, self.dim))


@dataclass
class SparseOperator:
    matrix: sps.csr_matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self):
        m = self.matrix.tocoo()
        return list(zip(m.row.tolist(), m.col.tolist(), m.data.tolist()))

    def is_hermitian(self) -> bool:
        """Exact entry-level check: (r, c, v) present implies (c, r, conj v)."""
        d = self.matrix - self.matrix.getH()
        d.eliminate_zeros()
        return d.nnz == 0

    def norm_bound(self) -> float:
        """Max absolute row sum, an upper bound on the spectral norm."""
        return float(abs(self.matrix).sum(1).max()) if self.nnz else 0.0

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return self.matrix @ v


class LadderHamiltonian:
    """Precomputed pieces of the Hamiltonian; assembles H at any hole flux."""

    def __init__(self, spec: LadderSpec, basis: ChargeBasis | None = None,
                 nnz_cap: int = DEFAULT_NNZ_CAP):
        self.spec = spec
        self.links: list = build_links(spec)
        if basis is None:
            est = (2 * spec.n_max + 1) ** spec.n_sites
            if spec.n_tot is None and est * (1 + len(self.links)) > nnz_cap:
                raise DimensionCapExceeded(f"basis of dimension {est} exceeds the cap")
            basis = ChargeBasis.build(spec.n_sites, spec.n_max, spec.n_tot)
        self.basis = basis
        est_nnz = basis.dim * (1 + 2 * len(self.links))
        if est_nnz > nnz_cap:
            raise DimensionCapExceeded(
                f"Hamiltonian would have ~{est_nnz} nonzeros (> cap {nnz_cap}); "
                f"lower n_max or N_plaquettes")
        self.hops = [basis.hop_matrix(l.i, l.j, l.sign) for l in self.links]
        charge2 = (basis.states.astype(np.int64) ** 2).sum(1)
        self.diag = sps.diags(0.5 * spec.E_C * charge2.astype(complex), format="csr")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def matrix(self, hole_flux: float | None = None) -> sps.csr_matrix:
        h = self.spec.hole_flux if hole_flux is None else hole_flux
        H = self.diag.copy()
        for l, P in zip(self.links, self.hops):
            K = (-0.5 * l.E * np.exp(-1j * l.phase(h))) * P
            H = H + K + K.getH()
        return H.tocsr()

    def operator(self, hole_flux: float | None = None) -> SparseOperator:
        return SparseOperator(self.matrix(hole_flux))

    def current_operator(self, k: int, hole_flux: float | None = None) -> sps.csr_matrix:
        """E sin(phi_i - s phi_j - A) = E/(2i) (exp(-iA) hop - h.c.) for link k."""
        h = self.spec.hole_flux if hole_flux is None else hole_flux
        l = self.links[k]
        K = (l.E / 2j * np.exp(-1j * l.phase(h))) * self.hops[k]
        return (K + K.getH()).tocsr()

    def circulation_operators(self, hole_flux: float | None = None) -> list:
        idx = {}
        for k, l in enumerate(self.links):
            idx[(l.i, l.j)] = (k, 1)
            idx[(l.j, l.i)] = (k, -1)
        cur = [self.current_operator(k, hole_flux) for k in range(len(self.links))]
        out = []
        for loop in plaquette_loops(self.spec):
            C = None
            for a, b in zip(loop, loop[1:] + loop[:1]):
                k, d = idx[(a, b)]
                C = d * cur[k] if C is None else C + d * cur[k]
            out.append(C.tocsr())
        return out

    def chirality_sum_operator(self, hole_flux: float | None = None) -> sps.csr_matrix:
        ops = self.circulation_operators(hole_flux)
        S = ops[0]
        for C in ops[1:]:
            S = S + C
        return S.tocsr()


def build_hamiltonian(spec: LadderSpec, nnz_cap: int = DEFAULT_NNZ_CAP) -> SparseOperator:
    return LadderHamiltonian(spec, nnz_cap=nnz_cap).operator()


@dataclass
class Eigenpair:
    value: float
    vector: np.ndarray
    residual: float


def ground_spectrum(H, k: int = 2, *, seed: int = 0, tol: float = 1e-8,
                    maxiter: int | None = None, dense_below: int = 400) -> list:
    """k lowest eigenpairs, sorted ascending.

    Uses ARPACK (Lanczos) with a seeded random start vector; small matrices
    are diagonalized densely.  Each pair must satisfy
    ||H v - lambda v|| < tol * ||H||, with ||H|| bounded by the max row sum.
    """
    M = H.matrix if isinstance(H, SparseOperator) else sps.csr_matrix(H)
    # a real matrix would make ARPACK silently drop the imaginary part of v0
    M = M.astype(complex)
    n = M.shape[0]
    if k < 1 or k >= n:
        raise ValueError(f"need 1 <= k < dim (k={k}, dim={n})")
    norm = float(abs(M).sum(1).max()) or 1.0
    if n <= dense_below:
        w, v = np.linalg.eigh(M.toarray())
        w, v = w[:k], v[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        attempt_iter = maxiter or max(1000, 20 * n)
        Ms = (M + norm * sps.identity(n, dtype=complex, format="csr")).tocsr()
        w = v = None
        last = np.inf
        for ncv in (max(2 * k + 1, 20), max(4 * k + 1, 60)):
            try:
                # shifted so the operator has no null space: ARPACK's start
                # vector handling can lose an exactly-zero eigenvalue
                w, v = spla.eigsh(Ms, k=k, which="SA", v0=v0, ncv=min(ncv, n - 1),
                                  tol=tol * 1e-3, maxiter=attempt_iter)
                w = w - norm
            except spla.ArpackNoConvergence as e:
                last = np.inf
                continue
            order = np.argsort(w)
            w, v = w[order], v[:, order]
            res = np.linalg.norm(M @ v - v * w, axis=0)
            last = float(res.max())
            if last < tol * norm:
                break
            w = None
        if w is None:
            raise NonConvergence("eigsh did not converge", last)
    out = []
    for j in range(k):
        vec = v[:, j]
        # fix the phase: largest component real positive (deterministic output)
        m = np.argmax(np.abs(vec))
        vec = vec * (abs(vec[m]) / vec[m])
        res = float(np.linalg.norm(M @ vec - w[j] * vec))
        if res >= tol * norm:
            raise NonConvergence(f"eigenpair {j} residual too large", res)
        out.append(Eigenpair(float(w[j]), vec, res))
    return out


def quantum_chirality(lh: LadderHamiltonian, state: np.ndarray, tol: float = 1e-6,
                      hole_flux: float | None = None) -> ChiralityPattern:
    """Chirality pattern from plaquette circulation expectation values."""
    ops = lh.circulation_operators(hole_flux)
    circ = [float(np.real(np.vdot(state, C @ state))) for C in ops]
    return chirality_from_circulation(circ, tol)


# --------------------------------------------------------------------------
# eigenvector dump:  b"JJLV1" | dim u64 | count u32 | count*dim complex128 (LE)

_MAGIC = b"JJLV1"


def write_eigenvectors(path, vectors: Sequence[np.ndarray]) -> None:
    """Vectors are stored one after another (row-major count x dim)."""
    arr = np.ascontiguousarray(np.array(vectors, dtype="<c16"))
    if arr.ndim != 2:
        raise ValueError("expected a sequence of equal-length vectors")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QI", arr.shape[1], arr.shape[0]))
        fh.write(arr.tobytes())


def read_eigenvectors(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _MAGIC:
            raise ValueError("not a JJLV1 eigenvector file")
        dim, count = struct.unpack("<QI", fh.read(12))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != dim * count:
        raise ValueError("truncated eigenvector file")
    return data.reshape(count, dim).copy()
