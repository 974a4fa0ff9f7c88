"""Two-level reduction of the ladder doublet, single-qubit dynamics and flux-linked registers.

Conventions (kept literally, on purpose different):

* single qubit:  H_eff = 1/2 (eps sigma_z - Delta sigma_x)
* register:      H = sum_j eps_j sigma_z^j + sum_j Delta_j sigma_x^j
                     + sum_{k<j} Lambda_kj sigma_z^k sigma_z^j

so a one-qubit register with (eps', Delta') equals H_eff with
eps = 2 eps', Delta = -2 Delta' (see :func:`register_from_qubit`).

Basis order: |0> = (1, 0); for registers qubit 0 is the most significant
factor of the Kronecker product.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

REGISTER_CAP = 12
TWO_LEVEL_RATIO_MAX = 0.5


class TwoLevelRejected(ValueError):
    """The doublet is not separated well enough from the rest of the spectrum."""

    def __init__(self, ratio: float, limit: float = TWO_LEVEL_RATIO_MAX):
        super().__init__(f"doublet-to-gap ratio {ratio:.4g} exceeds {limit}; "
                         f"two-level approximation rejected")
        self.ratio = ratio


class RegisterCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class EffectiveParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0 (its sign is absorbed into the basis phase)")

    @property
    def splitting(self) -> float:
        return math.hypot(self.epsilon, self.delta)

    def hamiltonian(self) -> np.ndarray:
        return 0.5 * (self.epsilon * SZ - self.delta * SX)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EffectiveParams":
        return cls(float(d["epsilon"]), float(d["delta"]))


@dataclass(frozen=True)
class QubitState:
    alpha: complex
    beta: complex

    def __post_init__(self):
        n = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(n - 1) > 1e-12:
            raise ValueError(f"state not normalized (|a|^2 + |b|^2 = {n!r})")

    @classmethod
    def from_vector(cls, v, normalize: bool = False) -> "QubitState":
        v = np.asarray(v, dtype=complex)
        if normalize:
            v = v / np.linalg.norm(v)
        return cls(complex(v[0]), complex(v[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def populations(self) -> tuple:
        return abs(self.alpha) ** 2, abs(self.beta) ** 2

    def overlap(self, other: "QubitState") -> complex:
        return complex(np.vdot(self.vector, other.vector))


ZERO = QubitState(1, 0)
ONE = QubitState(0, 1)


# --------------------------------------------------------------------------
# fitting the doublet


@dataclass
class FitResult:
    params: EffectiveParams
    basis_change: np.ndarray      # columns: logical |0>, |1> in the doublet eigenbasis
    logical_states: np.ndarray    # dim x 2, full-space logical vectors (or None)
    h_logical: np.ndarray         # 2x2 Hamiltonian in the logical basis
    s_values: tuple               # chirality-sum eigenvalues of |0>, |1>
    ratio: float                  # (E2 - E1)/(E3 - E1), nan when E3 unknown

    def to_dict(self) -> dict:
        return {"epsilon": self.params.epsilon, "delta": self.params.delta,
                "s_values": list(self.s_values), "ratio": self.ratio,
                "basis_change": [[[z.real, z.imag] for z in row] for row in self.basis_change]}


def _vec(p):
    return np.asarray(getattr(p, "vector", p), dtype=complex)


def _val(p):
    return float(getattr(p, "value", p))


def fit_effective(doublet: Sequence, sigma_z_operator, third_energy: float | None = None, *,
                  max_ratio: float = TWO_LEVEL_RATIO_MAX, degenerate_tol: float = 1e-12) -> FitResult:
    """Fit (eps, Delta) of H_eff = 1/2 (eps sz - Delta sx) to a ladder doublet.

    ``doublet`` holds eigenpairs (objects with ``value``/``vector``) sorted by
    energy; a third pair, or ``third_energy``, enables the two-level check.
    The logical basis diagonalizes the observable restricted to the doublet,
    |0> having the lower eigenvalue; |0> has a real positive first
    coefficient (in the doublet eigenbasis) and the phase of |1> makes the
    off-diagonal element real and non-positive, so Delta >= 0.  If the
    restricted observable is degenerate, the energy eigenbasis is used.
    """
    if len(doublet) < 2:
        raise ValueError("need at least two eigenpairs")
    E = np.array([_val(p) for p in doublet[:2]])
    if third_energy is None and len(doublet) > 2:
        third_energy = _val(doublet[2])
    ratio = math.nan
    if third_energy is not None:
        ratio = (E[1] - E[0]) / (third_energy - E[0])
        if not ratio <= max_ratio:
            raise TwoLevelRejected(ratio, max_ratio)
    V = np.array([_vec(p) for p in doublet[:2]]).T
    S = V.conj().T @ (sigma_z_operator @ V)
    S = 0.5 * (S + S.conj().T)
    s_vals, U = np.linalg.eigh(S)
    if abs(s_vals[1] - s_vals[0]) <= degenerate_tol * max(1.0, abs(s_vals).max()):
        U = np.eye(2, dtype=complex)
        s_vals = np.real(np.diag(S))
    U = U.astype(complex)
    if abs(U[0, 0]) > 0:
        U[:, 0] *= abs(U[0, 0]) / U[0, 0]
    else:
        U[:, 0] *= abs(U[1, 0]) / U[1, 0]
    H = U.conj().T @ np.diag(E) @ U
    h01 = H[0, 1]
    if abs(h01) > 0:
        U[:, 1] *= -abs(h01) / h01
    elif abs(U[1, 1]) > 0:
        U[:, 1] *= abs(U[1, 1]) / U[1, 1]
    H = U.conj().T @ np.diag(E) @ U
    eps = float(np.real(H[0, 0] - H[1, 1]))
    delta = float(-2 * np.real(H[0, 1]))
    return FitResult(EffectiveParams(eps, max(delta, 0.0)), U, V @ U, H,
                     (float(s_vals[0]), float(s_vals[1])), float(ratio))


# --------------------------------------------------------------------------
# single-qubit operations


def propagator(params: EffectiveParams, t: float) -> np.ndarray:
    """exp(-i H_eff t) in closed form."""
    om = params.splitting
    if om == 0:
        return ID2.copy()
    # divide the scalars first: subnormal parameters would otherwise give nan
    n = (params.epsilon / om) * SZ - (params.delta / om) * SX
    return math.cos(om * t / 2) * ID2 - 1j * math.sin(om * t / 2) * n


def evolve(params: EffectiveParams, psi0: QubitState, t: float) -> QubitState:
    v = propagator(params, t) @ psi0.vector
    # renormalize away the last-ulp drift of cos^2 + sin^2
    return QubitState.from_vector(v / np.linalg.norm(v))


def trajectory(params: EffectiveParams, psi0: QubitState, times: Iterable[float]) -> np.ndarray:
    """Rows (t, |a|^2, |b|^2, Re a b*, Im a b*)."""
    rows = []
    for t in times:
        s = evolve(params, psi0, t)
        ab = s.alpha * np.conj(s.beta)
        rows.append((t, abs(s.alpha) ** 2, abs(s.beta) ** 2, ab.real, ab.imag))
    return np.array(rows, dtype=float)


TRAJECTORY_HEADER = ("t", "p0", "p1", "re_ab", "im_ab")


def write_trajectory_csv(path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def not_gate(psi: QubitState) -> QubitState:
    """Amplitude swap; the ideal limit of one flux quantum through the hole."""
    return QubitState(psi.beta, psi.alpha)


# --------------------------------------------------------------------------
# registers


@dataclass
class RegisterSpec:
    K: int
    epsilon: Sequence[float]
    delta: Sequence[float]
    couplings: Mapping = field(default_factory=dict)  # {(k, j): Lambda_kj}

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        self.epsilon = [float(x) for x in self.epsilon]
        self.delta = [float(x) for x in self.delta]
        if len(self.epsilon) != self.K or len(self.delta) != self.K:
            raise ValueError("need one epsilon and one delta per qubit")
        clean = {}
        for key, lam in dict(self.couplings).items():
            k, j = (int(x) for x in (key.split("-") if isinstance(key, str) else key))
            if k == j or not (0 <= k < self.K and 0 <= j < self.K):
                raise ValueError(f"invalid coupling pair {key!r}")
            pair = (min(k, j), max(k, j))
            if pair in clean:
                raise ValueError(f"pair {pair} declared twice")
            clean[pair] = float(lam)
        self.couplings = clean

    @property
    def Lambda(self) -> np.ndarray:
        """Symmetric coupling matrix, zero outside the declared pairs."""
        M = np.zeros((self.K, self.K))
        for (k, j), lam in self.couplings.items():
            M[k, j] = M[j, k] = lam
        return M

    def scaled(self, c: float) -> "RegisterSpec":
        return RegisterSpec(self.K, [c * e for e in self.epsilon], [c * d for d in self.delta],
                            {p: c * v for p, v in self.couplings.items()})

    def to_dict(self) -> dict:
        return {"K": self.K, "epsilon": list(self.epsilon), "delta": list(self.delta),
                "couplings": {f"{k}-{j}": v for (k, j), v in sorted(self.couplings.items())}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegisterSpec":
        return cls(int(d["K"]), d["epsilon"], d["delta"], d.get("couplings", {}))


def _site_op(op: np.ndarray, j: int, K: int) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for k in range(K):
        out = np.kron(out, op if k == j else ID2)
    return out


def register_hamiltonian(spec: RegisterSpec) -> np.ndarray:
    if spec.K > REGISTER_CAP:
        raise RegisterCapExceeded(f"K = {spec.K} exceeds the dense cap {REGISTER_CAP}")
    K = spec.K
    H = np.zeros((2 ** K, 2 ** K), dtype=complex)
    Z = [_site_op(SZ, j, K) for j in range(K)]
    for j in range(K):
        H += spec.epsilon[j] * Z[j] + spec.delta[j] * _site_op(SX, j, K)
    for (k, j), lam in spec.couplings.items():
        H += lam * (Z[k] @ Z[j])
    return H


def register_from_qubit(params: EffectiveParams) -> RegisterSpec:
    """One-qubit register whose Hamiltonian equals H_eff of ``params``."""
    return RegisterSpec(1, [params.epsilon / 2], [-params.delta / 2])


def register_evolve(spec: RegisterSpec, psi0: np.ndarray, t: float, H=None) -> np.ndarray:
    H = register_hamiltonian(spec) if H is None else H
    w, V = np.linalg.eigh(H)
    return V @ (np.exp(-1j * w * t) * (V.conj().T @ np.asarray(psi0, dtype=complex)))


def product_state(states: Sequence[QubitState]) -> np.ndarray:
    out = np.array([1.0 + 0j])
    for s in states:
        out = np.kron(out, s.vector)
    return out


def reduced_density(psi: np.ndarray, K: int, keep: Sequence[int]) -> np.ndarray:
    keep = sorted(keep)
    rest = [k for k in range(K) if k not in keep]
    T = np.asarray(psi, dtype=complex).reshape((2,) * K).transpose(keep + rest)
    T = T.reshape(2 ** len(keep), 2 ** len(rest))
    return T @ T.conj().T


def entanglement_entropy(psi: np.ndarray, K: int, keep: Sequence[int] = (0,)) -> float:
    """Von Neumann entropy (natural log) of the reduced state on ``keep``."""
    p = np.linalg.eigvalsh(reduced_density(psi, K, keep))
    p = p[p > 1e-15]
    return float(-(p * np.log(p)).sum())


def params_to_json(params: EffectiveParams) -> str:
    return json.dumps(params.to_dict(), sort_keys=True)
