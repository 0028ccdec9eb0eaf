"""Dense density-matrix simulation for small qubit registers.

Qubit 0 is the most significant bit of the computational-basis index, so a
``2**n x 2**n`` matrix reshaped to ``(2,) * 2n`` has row axis ``q`` for qubit
``q`` and column axis ``n + q``.

Every operation returns a new object; inputs are never mutated.  The
``*_observable`` helpers evolve operators in the Heisenberg picture and accept
arbitrary leading batch dimensions, which is what the batched model code uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_QUBITS = 8


class SimulationError(ValueError):
    """Invalid input to a simulator operation."""


class CapacityError(SimulationError):
    pass


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        dim = m.shape[0]
        if m.ndim != 2 or m.shape[1] != dim or dim < 2 or dim & (dim - 1):
            raise SimulationError(f"density matrix must be 2^n x 2^n, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise SimulationError("density matrix has non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def n_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace_deviation(self) -> float:
        return float(abs(np.trace(self.matrix) - 1.0))

    def hermiticity_deviation(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def is_valid(self, atol: float = 1e-10, check_psd: bool = False) -> bool:
        ok = self.trace_deviation() < atol and self.hermiticity_deviation() < atol
        if ok and check_psd:
            ok = self.min_eigenvalue() > -1e-9
        return ok

    @classmethod
    def from_statevector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class Gate:
    name: str
    matrix: np.ndarray

    @property
    def arity(self) -> int:
        return self.matrix.shape[0].bit_length() - 1


@dataclass(frozen=True)
class Observable:
    """Pauli-Z on one qubit (the only measurement the models use)."""

    qubit: int
    kind: str = "PauliZ"


I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def rx(theta: float) -> Gate:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return Gate("RX", np.array([[c, -1j * s], [-1j * s, c]], dtype=complex))


def ry(theta: float) -> Gate:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return Gate("RY", np.array([[c, -s], [s, c]], dtype=complex))


def rz(theta: float) -> Gate:
    e = np.exp(-0.5j * theta)
    return Gate("RZ", np.array([[e, 0], [0, e.conjugate()]], dtype=complex))


def rotation(axis: str, theta: float) -> Gate:
    return {"X": rx, "Y": ry, "Z": rz}[axis](theta)


def cry(phi: float) -> Gate:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = ry(phi).matrix
    return Gate("CRY", m)


def named(name: str) -> Gate:
    table = {"I": I2, "X": X, "Y": Y, "Z": Z, "H": H, "CNOT": CNOT}
    return Gate(name, table[name])


# --- tensor plumbing -------------------------------------------------------


def _left(arr: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract ``op`` into ``arr`` along ``axes`` (as a left multiplication)."""
    k = len(axes)
    opt = op.reshape((2,) * (2 * k))
    out = np.tensordot(opt, arr, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


@lru_cache(maxsize=256)
def _basis_permutation(n: int, targets: tuple, local_src: tuple) -> np.ndarray:
    """Full-register source index for a permutation gate acting on ``targets``."""
    k = len(targets)
    idx = np.arange(2**n)
    local = np.zeros_like(idx)
    for q in targets:
        local = (local << 1) | ((idx >> (n - 1 - q)) & 1)
    src_local = np.asarray(local_src)[local]
    out = idx.copy()
    for pos, q in enumerate(targets):
        bit = (src_local >> (k - 1 - pos)) & 1
        shift = n - 1 - q
        out = (out & ~(1 << shift)) | (bit << shift)
    return out


def _permutation_source(op: np.ndarray):
    """Row-wise source indices if ``op`` is a 0/1 permutation matrix, else None."""
    if op.ndim != 2 or np.count_nonzero(op) != op.shape[0]:
        return None
    src = np.argmax(np.abs(op), axis=1)
    if not np.all(op[np.arange(op.shape[0]), src] == 1):
        return None
    return tuple(int(v) for v in src)


def _sandwich(mat: np.ndarray, left: np.ndarray, right_t: np.ndarray,
              targets: Sequence[int], n: int) -> np.ndarray:
    """Return ``L M R`` for ``M`` of shape (..., D, D); ``right_t`` is ``R^T``.

    ``left``/``right_t`` may carry one leading axis of per-matrix operators
    (single-qubit case) whose length divides the leading size of ``mat``.
    """
    dim = 2**n
    lead = mat.size // (dim * dim)
    if len(targets) == 1:
        # Two broadcast matmuls, no axis shuffling.
        q = targets[0]
        hi, lo = 2**q, 2 ** (n - q - 1)
        if left.ndim == 3:
            s = left.shape[0]
            t = np.matmul(left[:, None], mat.reshape(s, lead // s * hi, 2, lo * dim))
            t = np.matmul(right_t[:, None], t.reshape(s, lead // s * dim * hi, 2, lo))
        else:
            t = np.matmul(left, mat.reshape(lead * hi, 2, lo * dim))
            t = np.matmul(right_t, t.reshape(lead * dim * hi, 2, lo))
        return t.reshape(mat.shape)
    src_l, src_r = _permutation_source(left), _permutation_source(right_t)
    if src_l is not None and src_r is not None:
        rows = _basis_permutation(n, tuple(targets), src_l)
        cols = _basis_permutation(n, tuple(targets), src_r)
        return mat[..., rows, :][..., cols]
    batch = mat.shape[:-2]
    b = len(batch)
    t = mat.reshape(batch + (2,) * (2 * n))
    t = _left(t, left, [b + q for q in targets])
    t = _left(t, right_t, [b + n + q for q in targets])
    return t.reshape(mat.shape)


def _check_targets(targets: Sequence[int], n: int, arity: int | None = None) -> list[int]:
    targets = [int(q) for q in targets]
    if arity is not None and len(targets) != arity:
        raise SimulationError(f"gate arity {arity} but {len(targets)} targets given")
    if len(set(targets)) != len(targets):
        raise SimulationError(f"duplicate targets {targets}")
    for q in targets:
        if not 0 <= q < n:
            raise SimulationError(f"qubit {q} out of range for {n} qubits")
    return targets


def _n_from_dim(dim: int) -> int:
    return dim.bit_length() - 1


# --- Schrödinger picture ---------------------------------------------------


def init_zero_state(n_qubits: int) -> DensityMatrix:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must lie in [1, {MAX_QUBITS}], got {n_qubits}")
    m = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
    m[0, 0] = 1.0
    return DensityMatrix(m)


def apply_gate(state: DensityMatrix, gate: Gate, targets: Sequence[int]) -> DensityMatrix:
    n = state.n_qubits
    targets = _check_targets(targets, n, gate.arity)
    u = gate.matrix
    return DensityMatrix(_sandwich(state.matrix, u, u.conj(), targets, n))


def apply_kraus(state: DensityMatrix, operators: Sequence[np.ndarray], target: int) -> DensityMatrix:
    n = state.n_qubits
    (target,) = _check_targets([target], n)
    out = np.zeros_like(state.matrix)
    for k in operators:
        out += _sandwich(state.matrix, k, k.conj(), [target], n)
    return DensityMatrix(out)


def apply_channel(state: DensityMatrix, channel, target: int) -> DensityMatrix:
    """Apply a single-qubit :class:`~hqnn.noise.KrausChannel` at ``target``."""
    ok, dev = channel.cptp()
    if not ok:
        raise SimulationError(f"channel {channel.label} is not CPTP (deviation {dev:.3e})")
    return apply_kraus(state, channel.operators, target)


def partial_trace(state: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    n = state.n_qubits
    keep = [int(q) for q in keep]
    if not keep:
        raise SimulationError("keep list is empty")
    if keep != sorted(set(keep)):
        raise SimulationError(f"keep list must be sorted and distinct, got {keep}")
    _check_targets(keep, n)
    drop = [q for q in range(n) if q not in keep]
    t = state.matrix.reshape((2,) * (2 * n))
    t = t.transpose(keep + drop + [n + q for q in keep] + [n + q for q in drop])
    dk, dd = 2 ** len(keep), 2 ** len(drop)
    return DensityMatrix(np.einsum("iaja->ij", t.reshape(dk, dd, dk, dd)))


def z_signs(n_qubits: int, qubit: int) -> np.ndarray:
    """Diagonal of Z on ``qubit`` over the computational basis."""
    bits = (np.arange(2**n_qubits) >> (n_qubits - 1 - qubit)) & 1
    return 1.0 - 2.0 * bits


def expectation(state: DensityMatrix, obs: Observable) -> float:
    n = state.n_qubits
    _check_targets([obs.qubit], n)
    return float(np.dot(np.real(np.diag(state.matrix)), z_signs(n, obs.qubit)))


@dataclass(frozen=True)
class Counts:
    histogram: dict
    z: np.ndarray


def probabilities(state: DensityMatrix, tol: float = 1e-9) -> np.ndarray:
    p = np.real(np.diag(state.matrix)).copy()
    if p.min() < -tol:
        raise SimulationError(f"negative population {p.min():.3e} on the diagonal")
    if abs(p.sum() - 1.0) > tol:
        raise SimulationError(f"populations sum to {p.sum():.12f}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def z_from_counts(counts: np.ndarray, n_qubits: int) -> np.ndarray:
    """Per-qubit Z estimates from outcome counts over the basis (last axis)."""
    shots = counts.sum(axis=-1, keepdims=True)
    signs = np.stack([z_signs(n_qubits, q) for q in range(n_qubits)], axis=1)
    return (counts @ signs) / shots


def sample_counts(state: DensityMatrix, shots: int, seed: int) -> Counts:
    if shots < 1:
        raise SimulationError(f"shots must be >= 1, got {shots}")
    n = state.n_qubits
    p = probabilities(state)
    counts = np.random.default_rng(seed).multinomial(shots, p)
    hist = {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c}
    return Counts(hist, z_from_counts(counts.astype(float), n))


# --- Heisenberg picture ----------------------------------------------------


def z_observable(n_qubits: int, qubit: int) -> np.ndarray:
    return np.diag(z_signs(n_qubits, qubit)).astype(complex)


def gate_on_observable(obs: np.ndarray, gate: Gate, targets: Sequence[int]) -> np.ndarray:
    """``U^dag O U`` for a stack of observables of shape (..., D, D)."""
    n = _n_from_dim(obs.shape[-1])
    targets = _check_targets(targets, n, gate.arity)
    u = gate.matrix
    return _sandwich(obs, u.conj().T, u.T, targets, n)


def kraus_on_observable(obs: np.ndarray, operators: Sequence[np.ndarray], target: int) -> np.ndarray:
    """Adjoint channel ``sum_k K^dag O K`` for a stack of observables."""
    n = _n_from_dim(obs.shape[-1])
    _check_targets([target], n)
    out = np.zeros(obs.shape, dtype=complex)
    for k in operators:
        out += _sandwich(obs, k.conj().T, k.T, [target], n)
    return out


# --- batched Schrödinger helpers ------------------------------------------------


def rotation_matrices(axis: str, angles) -> np.ndarray:
    """Stack of rotation matrices, shape (S, 2, 2), for a vector of angles."""
    a = np.asarray(angles, dtype=float)
    c, s = np.cos(a / 2), np.sin(a / 2)
    m = np.zeros(a.shape + (2, 2), dtype=complex)
    if axis == "X":
        m[..., 0, 0] = m[..., 1, 1] = c
        m[..., 0, 1] = m[..., 1, 0] = -1j * s
    elif axis == "Y":
        m[..., 0, 0] = m[..., 1, 1] = c
        m[..., 0, 1], m[..., 1, 0] = -s, s
    elif axis == "Z":
        m[..., 0, 0] = np.exp(-0.5j * a)
        m[..., 1, 1] = np.exp(0.5j * a)
    else:
        raise SimulationError(f"unknown rotation axis {axis!r}")
    return m


def unitary_on_states(states: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """``U rho U^dag`` for a stack of density matrices (S, D, D).

    ``u`` is one matrix or, for single-qubit gates, a stack of S matrices.
    """
    n = _n_from_dim(states.shape[-1])
    targets = _check_targets(targets, n, _n_from_dim(u.shape[-1]))
    return _sandwich(states, u, u.conj(), targets, n)


def kraus_on_states(states: np.ndarray, operators: Sequence[np.ndarray], target: int) -> np.ndarray:
    n = _n_from_dim(states.shape[-1])
    _check_targets([target], n)
    out = np.zeros(states.shape, dtype=complex)
    for k in operators:
        out += _sandwich(states, k, k.conj(), [target], n)
    return out
