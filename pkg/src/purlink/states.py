"""Two-qubit mixed-state algebra.

Density matrices are plain complex numpy arrays. A two-qubit state is 4x4
with qubit order Alice tensor Bob. The Bell basis is fixed everywhere as
(phi+, psi-, psi+, phi-); keeping one ordering avoids silent coefficient
permutations between the simulator and the analytic recurrence oracle.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

TwoQubitState = np.ndarray

_SQ2 = 1.0 / np.sqrt(2.0)

# Bell vectors in the fixed order (phi+, psi-, psi+, phi-).
PHI_PLUS = np.array([_SQ2, 0.0, 0.0, _SQ2], dtype=complex)
PSI_MINUS = np.array([0.0, _SQ2, -_SQ2, 0.0], dtype=complex)
PSI_PLUS = np.array([0.0, _SQ2, _SQ2, 0.0], dtype=complex)
PHI_MINUS = np.array([_SQ2, 0.0, 0.0, -_SQ2], dtype=complex)

BELL_VECTORS = (PHI_PLUS, PSI_MINUS, PSI_PLUS, PHI_MINUS)

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULIS = {"I": I2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


class BellCoeffs(NamedTuple):
    """Diagonal weights on (phi+, psi-, psi+, phi-), in that order."""

    a: float
    b: float
    c: float
    d: float


def make_werner(f0: float) -> TwoQubitState:
    """Werner state with fidelity f0: a phi+ fraction plus white noise.

    ((4*f0-1)/3)|phi+><phi+| + ((1-f0)/3)*I4, valid for f0 in [0.25, 1].
    """
    if not 0.25 <= f0 <= 1.0:
        raise ValueError(f"werner fidelity must be in [0.25, 1], got {f0}")
    proj = np.outer(PHI_PLUS, PHI_PLUS.conj())
    return ((4.0 * f0 - 1.0) / 3.0) * proj + ((1.0 - f0) / 3.0) * np.eye(4, dtype=complex)


def bell_diagonal_state(coeffs: BellCoeffs) -> TwoQubitState:
    """Build the Bell-diagonal state with the given weights."""
    rho = np.zeros((4, 4), dtype=complex)
    for w, v in zip(coeffs, BELL_VECTORS):
        rho += w * np.outer(v, v.conj())
    return rho


def fidelity(rho: TwoQubitState) -> float:
    """Overlap <phi+|rho|phi+>, clamped into [0, 1]."""
    f = float(np.real(PHI_PLUS.conj() @ rho @ PHI_PLUS))
    return min(max(f, 0.0), 1.0)


def bell_diagonal(rho: TwoQubitState) -> BellCoeffs:
    """Diagonal of rho in the Bell basis, fixed order (phi+, psi-, psi+, phi-)."""
    return BellCoeffs(*(float(np.real(v.conj() @ rho @ v)) for v in BELL_VECTORS))


def pauli_expectation(rho: TwoQubitState, obs_a: str, obs_b: str) -> float:
    """Tr(rho * A tensor B) for Paulis A, B in {I, X, Y, Z}."""
    op = np.kron(PAULIS[obs_a], PAULIS[obs_b])
    return float(np.real(np.trace(rho @ op)))


def check_state(rho: np.ndarray, tol: float = 1e-9) -> None:
    """Assert hermiticity, unit trace, and positivity; used in tests and debug paths."""
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("state is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"state trace is {np.trace(rho).real}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("state has a negative eigenvalue")


# ---------------------------------------------------------------------------
# n-qubit helpers shared by the channel and purification code. Qubit 0 is the
# leftmost (most significant) tensor factor.

def embed_single(op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Lift a 2x2 operator to the full 2^n space at the given position."""
    ops = [I2] * n_qubits
    ops[qubit] = op
    full = ops[0]
    for o in ops[1:]:
        full = np.kron(full, o)
    return full


def embed_two(op: np.ndarray, qubit_a: int, qubit_b: int, n_qubits: int) -> np.ndarray:
    """Lift a 4x4 operator acting on (qubit_a, qubit_b) to the full space.

    The operator's first index is qubit_a, second qubit_b; the qubits need
    not be adjacent or ordered.
    """
    if qubit_a == qubit_b:
        raise ValueError("two-qubit operator needs distinct qubits")
    dim = 1 << n_qubits
    sa = n_qubits - 1 - qubit_a
    sb = n_qubits - 1 - qubit_b
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        ba = (col >> sa) & 1
        bb = (col >> sb) & 1
        base = col & ~(1 << sa) & ~(1 << sb)
        in_idx = (ba << 1) | bb
        for ca in (0, 1):
            for cb in (0, 1):
                row = base | (ca << sa) | (cb << sb)
                full[row, col] += op[(ca << 1) | cb, in_idx]
    return full


def trace_out(rho: np.ndarray, qubits: tuple[int, ...] | list[int], n_qubits: int) -> np.ndarray:
    """Partial trace removing the listed qubits."""
    t = rho.reshape((2,) * (2 * n_qubits))
    n = n_qubits
    for q in sorted(qubits, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + n)
        n -= 1
    dim = 1 << n
    return t.reshape(dim, dim)


def insert_mixed(rho: np.ndarray, positions: tuple[int, ...], n_total: int) -> np.ndarray:
    """Tensor maximally mixed qubits back in at the given positions.

    rho covers the other n_total - len(positions) qubits in their original
    relative order; the result covers all n_total.
    """
    k = len(positions)
    n_kept = n_total - k
    full = np.kron(rho, np.eye(1 << k, dtype=complex) / (1 << k))
    # Current qubit layout: kept qubits first (original order), then the
    # mixed ones; permute back to the original positions.
    kept = [q for q in range(n_total) if q not in positions]
    order = [0] * n_total
    for cur, q in enumerate(kept):
        order[q] = cur
    for j, q in enumerate(sorted(positions)):
        order[q] = n_kept + j
    t = full.reshape((2,) * (2 * n_total))
    axes = order + [o + n_total for o in order]
    return t.transpose(axes).reshape(1 << n_total, 1 << n_total)
