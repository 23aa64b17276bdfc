"""Noise and loss models.

Gate depolarization, imperfect measurement, amplitude damping, dephasing,
and the fiber / free-space transmissivities. All channel functions are pure:
they take a register and return a new one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .states import (
    PAULIS,
    TwoQubitState,
    embed_single,
    embed_two,
    insert_mixed,
    trace_out,
)


class ImpossibleOutcomeError(RuntimeError):
    """Both measurement branches have (numerically) zero probability."""


@dataclass(frozen=True)
class NoiseParams:
    """Gate, measurement, and memory noise parameters.

    t1/t2 are seconds; math.inf disables the corresponding damping. The
    dephasing formula needs t2 <= 2*t1 to stay a valid channel.
    """

    p_g: float = 0.99
    p_m: float = 0.99
    t1: float = 360.0
    t2: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_g <= 1.0:
            raise ValueError(f"p_g must be in [0, 1], got {self.p_g}")
        if not 0.0 <= self.p_m <= 1.0:
            raise ValueError(f"p_m must be in [0, 1], got {self.p_m}")
        if not self.t1 > 0 or not self.t2 > 0:
            raise ValueError("t1 and t2 must be positive")
        if self.t2 > 2.0 * self.t1:
            raise ValueError(f"t2 must be <= 2*t1, got t2={self.t2}, t1={self.t1}")


@dataclass(frozen=True)
class PairRegister:
    """Joint state over the stored qubits of up to three pairs.

    qubits lists (pair_label, side) per tensor slot, side in {"A", "B"};
    qubit 0 is the leftmost factor of rho. Pairs normally occupy adjacent
    (A, B) slots, but a register may transiently hold a lone qubit while its
    partner is being measured out.
    """

    rho: np.ndarray
    qubits: tuple[tuple[int, str], ...]

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    @property
    def pair_labels(self) -> tuple[int, ...]:
        seen: list[int] = []
        for label, _ in self.qubits:
            if label not in seen:
                seen.append(label)
        return tuple(seen)

    def qubit_index(self, pair_label: int, side: str) -> int:
        return self.qubits.index((pair_label, side))


def register_from_pair(state: TwoQubitState, pair_label: int) -> PairRegister:
    return PairRegister(np.array(state, dtype=complex), ((pair_label, "A"), (pair_label, "B")))


def join(reg_a: PairRegister, reg_b: PairRegister) -> PairRegister:
    """Tensor two registers; reg_a's qubits stay leftmost."""
    return PairRegister(np.kron(reg_a.rho, reg_b.rho), reg_a.qubits + reg_b.qubits)


def extract_pair(reg: PairRegister, pair_label: int) -> TwoQubitState:
    """Trace out everything but the named pair, ordered (A, B)."""
    ia = reg.qubit_index(pair_label, "A")
    ib = reg.qubit_index(pair_label, "B")
    others = tuple(i for i in range(reg.n_qubits) if i not in (ia, ib))
    rho = trace_out(reg.rho, others, reg.n_qubits)
    if ia > ib:
        rho = rho.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
    return rho


# ---------------------------------------------------------------------------
# Gate noise

CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)

TWO_QUBIT_GATES = {"CNOT": CNOT, "CZ": CZ}


def depolarize_gate(
    reg: PairRegister, unitary: np.ndarray, qubits: tuple[int, int], p_g: float
) -> PairRegister:
    """Apply a controlled two-qubit gate that succeeds with probability p_g.

    On failure the two acted qubits are replaced by the maximally mixed
    state: p_g * U rho U+ + (1 - p_g) * Tr_{i,j}(rho) (x) I/4, with the
    identity factor re-inserted at the gate's qubit positions.
    """
    i, j = qubits
    n = reg.n_qubits
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"invalid gate qubits {qubits} for a {n}-qubit register")
    u = embed_two(unitary, i, j, n)
    out = u @ reg.rho @ u.conj().T
    if p_g < 1.0:
        rest = trace_out(reg.rho, (i, j), n)
        out = p_g * out + (1.0 - p_g) * insert_mixed(rest, (i, j), n)
    return PairRegister(out, reg.qubits)


# ---------------------------------------------------------------------------
# Measurement

def _basis_projectors(basis: str) -> tuple[np.ndarray, np.ndarray]:
    pauli = PAULIS[basis]
    plus = (np.eye(2, dtype=complex) + pauli) / 2.0
    minus = (np.eye(2, dtype=complex) - pauli) / 2.0
    return plus, minus


def noisy_measure(
    reg: PairRegister, qubit: int, basis: str, p_m: float, u: float
) -> tuple[int, PairRegister, float]:
    """Measure one qubit in a Pauli basis with imperfect projection.

    The declared outcome o carries probability Tr[(p_m P_o + (1-p_m) P_!o) rho];
    the post-state is the matching imperfect projection, renormalized, with
    the measured qubit traced out immediately. u in [0,1) picks the outcome
    by threshold. Returns (outcome as +1/-1, new register, branch probability).
    """
    if basis not in ("X", "Y", "Z"):
        raise ValueError(f"measurement basis must be X, Y or Z, got {basis!r}")
    n = reg.n_qubits
    p_plus_1q, p_minus_1q = _basis_projectors(basis)
    p_plus = embed_single(p_plus_1q, qubit, n)
    p_minus = embed_single(p_minus_1q, qubit, n)

    branch_plus = p_m * (p_plus @ reg.rho @ p_plus) + (1.0 - p_m) * (p_minus @ reg.rho @ p_minus)
    branch_minus = p_m * (p_minus @ reg.rho @ p_minus) + (1.0 - p_m) * (p_plus @ reg.rho @ p_plus)
    prob_plus = float(np.real(np.trace(branch_plus)))
    prob_minus = float(np.real(np.trace(branch_minus)))
    total = prob_plus + prob_minus
    if total < 1e-15:
        raise ImpossibleOutcomeError("measurement branch probabilities underflowed")

    if u < prob_plus / total:
        outcome, post, prob = 1, branch_plus, prob_plus / total
    else:
        outcome, post, prob = -1, branch_minus, prob_minus / total
    if prob < 1e-15:
        raise ImpossibleOutcomeError("sampled a zero-probability measurement branch")

    rho = trace_out(post, (qubit,), n)
    rho = rho / np.trace(rho)
    labels = reg.qubits[:qubit] + reg.qubits[qubit + 1 :]
    return outcome, PairRegister(rho, labels), prob


# ---------------------------------------------------------------------------
# Memory decoherence

def _damping_lambda(t: float, t1: float) -> float:
    if t < 0:
        raise ValueError(f"negative duration {t}")
    if math.isinf(t1):
        return 0.0
    return 1.0 - math.exp(-t / t1)


def _dephasing_pz(t: float, t1: float, t2: float) -> float:
    if t < 0:
        raise ValueError(f"negative duration {t}")
    if t2 > 2.0 * t1:
        raise ValueError("dephasing needs t2 <= 2*t1")
    decay = 0.0 if math.isinf(t2) else t / t2
    revive = 0.0 if math.isinf(t1) else t / (2.0 * t1)
    return 0.5 * (1.0 - math.exp(-decay + revive))


def amplitude_damp(reg: PairRegister, qubit: int, t: float, t1: float) -> PairRegister:
    """Relaxation toward |0> for duration t with time constant t1."""
    lam = _damping_lambda(t, t1)
    if lam == 0.0:
        return reg
    e0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - lam)]], dtype=complex)
    e1 = np.array([[0.0, math.sqrt(lam)], [0.0, 0.0]], dtype=complex)
    n = reg.n_qubits
    k0 = embed_single(e0, qubit, n)
    k1 = embed_single(e1, qubit, n)
    rho = k0 @ reg.rho @ k0.conj().T + k1 @ reg.rho @ k1.conj().T
    return PairRegister(rho, reg.qubits)


def dephase(reg: PairRegister, qubit: int, t: float, t1: float, t2: float) -> PairRegister:
    """Phase flip with probability p_z(t; t1, t2) on one qubit."""
    p_z = _dephasing_pz(t, t1, t2)
    if p_z == 0.0:
        return reg
    z = embed_single(PAULIS["Z"], qubit, reg.n_qubits)
    rho = (1.0 - p_z) * reg.rho + p_z * (z @ reg.rho @ z)
    return PairRegister(rho, reg.qubits)


def decohere(
    reg: PairRegister, qubits: tuple[int, ...] | list[int], dt: float, noise: NoiseParams
) -> PairRegister:
    """Amplitude damping then dephasing for dt on each listed qubit."""
    if dt < 0:
        raise ValueError(f"negative duration {dt}")
    if dt == 0.0:
        return reg
    for q in qubits:
        reg = amplitude_damp(reg, q, dt, noise.t1)
        reg = dephase(reg, q, dt, noise.t1, noise.t2)
    return reg


# ---------------------------------------------------------------------------
# Loss

def fiber_transmissivity(l_km: float, alpha_f: float) -> float:
    """Photon survival over l km of fiber with attenuation alpha_f dB/km."""
    if l_km < 0 or alpha_f < 0:
        raise ValueError("length and attenuation must be non-negative")
    return 10.0 ** (-alpha_f * l_km / 10.0)


@dataclass(frozen=True)
class OpticalHardware:
    """Apertures and wavelength of the satellite downlink."""

    d_s: float = 0.2  # satellite aperture, m
    d_g: float = 2.0  # ground station aperture, m
    wavelength: float = 737e-9  # m


def diffraction_efficiency(l_o_km: float, hw: OpticalHardware) -> float:
    """Diffraction-limited collection efficiency of the free-space path.

    (pi d_s^2 / 4)(pi d_g^2 / 4) / (lambda * l_o)^2, clamped to 1; l_o is
    converted to meters.
    """
    if l_o_km <= 0:
        raise ValueError("free-space path must be positive")
    l_o_m = l_o_km * 1000.0
    num = (math.pi * hw.d_s**2 / 4.0) * (math.pi * hw.d_g**2 / 4.0)
    return min(num / (hw.wavelength * l_o_m) ** 2, 1.0)


def satellite_transmissivity(
    l_o_km: float, l_a_km: float, hw: OpticalHardware, alpha_a: float
) -> float:
    """Downlink photon survival: diffraction times atmospheric extinction."""
    if l_a_km < 0:
        raise ValueError("atmospheric path must be non-negative")
    eta_o = diffraction_efficiency(l_o_km, hw)
    eta_a = math.exp(-alpha_a * l_a_km)
    return eta_o * eta_a
