"""Purification mechanics.

One DEJMPS pumping step on the joint density matrix, a small circuit DSL
for externally supplied purification circuits, and the analytic
Bell-diagonal recurrence oracle the simulator is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import count
from pathlib import Path
from typing import Callable, Iterable, Iterator, Union

import numpy as np

from .channels import (
    CNOT,
    TWO_QUBIT_GATES,
    NoiseParams,
    PairRegister,
    depolarize_gate,
    extract_pair,
    join,
    noisy_measure,
    register_from_pair,
)
from .states import BellCoeffs, I2, PAULI_X, TwoQubitState

# Bilateral twirl rotations: Alice rotates +pi/2 about X, Bob -pi/2. Which
# side takes which sign is conventionally arbitrary; Alice gets the plus.
ROT_ALICE = (I2 - 1j * PAULI_X) / np.sqrt(2.0)
ROT_BOB = (I2 + 1j * PAULI_X) / np.sqrt(2.0)


@dataclass(frozen=True)
class StepOutcome:
    success: bool
    alice_outcome: int  # +1 / -1
    bob_outcome: int
    post_state: TwoQubitState
    branch_prob: float


def _rotate_pair(reg: PairRegister, pair_label: int) -> PairRegister:
    """Apply the bilateral DEJMPS rotation to one pair (noiseless 1q gates)."""
    ia = reg.qubit_index(pair_label, "A")
    ib = reg.qubit_index(pair_label, "B")
    ops = [I2] * reg.n_qubits
    ops[ia] = ROT_ALICE
    ops[ib] = ROT_BOB
    full = ops[0]
    for o in ops[1:]:
        full = np.kron(full, o)
    return PairRegister(full @ reg.rho @ full.conj().T, reg.qubits)


def _bilateral_gate(
    reg: PairRegister, gate: np.ndarray, control_pair: int, target_pair: int, p_g: float
) -> PairRegister:
    """Apply the gate on Alice's qubits and on Bob's, each depolarizing."""
    for side in ("A", "B"):
        c = reg.qubit_index(control_pair, side)
        t = reg.qubit_index(target_pair, side)
        reg = depolarize_gate(reg, gate, (c, t), p_g)
    return reg


def _measure_pair(
    reg: PairRegister, pair_label: int, basis: str, p_m: float, rng
) -> tuple[int, int, PairRegister, float]:
    """Measure both qubits of a pair, Alice first, and drop them."""
    ia = reg.qubit_index(pair_label, "A")
    out_a, reg, prob_a = noisy_measure(reg, ia, basis, p_m, rng.random())
    ib = reg.qubit_index(pair_label, "B")
    out_b, reg, prob_b = noisy_measure(reg, ib, basis, p_m, rng.random())
    return out_a, out_b, reg, prob_a * prob_b


def dejmps_step(
    main: TwoQubitState, sac: TwoQubitState, noise: NoiseParams, rng
) -> StepOutcome:
    """One pumping step: sacrifice `sac` to purify `main`.

    Both pairs get the bilateral twirl rotation, CNOTs run from the main
    qubits onto the sacrificial ones through the depolarizing gate channel,
    and the sacrificial qubits are Z-measured with imperfect projection.
    Success is coincidence (equal outcomes); post_state is the conditioned
    main pair either way.
    """
    reg = join(register_from_pair(main, 0), register_from_pair(sac, 1))
    reg = _rotate_pair(reg, 0)
    reg = _rotate_pair(reg, 1)
    reg = _bilateral_gate(reg, CNOT, 0, 1, noise.p_g)
    out_a, out_b, reg, prob = _measure_pair(reg, 1, "Z", noise.p_m, rng)
    return StepOutcome(out_a == out_b, out_a, out_b, extract_pair(reg, 0), prob)


def bell_recurrence_oracle(
    main: BellCoeffs, sac: BellCoeffs
) -> tuple[BellCoeffs, float]:
    """Closed-form noiseless recurrence for the coincidence branch.

    With both inputs Bell-diagonal, ordered (a, b, c, d) on
    (phi+, psi-, psi+, phi-), the kept branch has probability
    N = (a1+b1)(a2+b2) + (c1+d1)(c2+d2) and coefficients
    a' = (a1 a2 + b1 b2)/N   b' = (c1 d2 + d1 c2)/N
    c' = (c1 c2 + d1 d2)/N   d' = (a1 b2 + b1 a2)/N.
    """
    for coeffs in (main, sac):
        if abs(sum(coeffs) - 1.0) > 1e-9:
            raise ValueError(f"Bell coefficients must sum to 1, got {coeffs}")
    a1, b1, c1, d1 = main
    a2, b2, c2, d2 = sac
    n = (a1 + b1) * (a2 + b2) + (c1 + d1) * (c2 + d2)
    post = BellCoeffs(
        (a1 * a2 + b1 * b2) / n,
        (c1 * d2 + d1 * c2) / n,
        (c1 * c2 + d1 * d2) / n,
        (a1 * b2 + b1 * a2) / n,
    )
    return post, n


# ---------------------------------------------------------------------------
# Circuit DSL
#
# Line-oriented text, '#' for comments:
#   PAIRS n
#   ROT p                      bilateral twirl rotation (noiseless)
#   GATE CNOT c t              bilateral two-qubit gate (depolarizing)
#   GATE CZ c t
#   MEASURE p BASIS Z KEEP equal
#
# Pairs are numbered 0..n-1 in arrival order and must be first referenced in
# that order. Exactly one pair survives unmeasured. At most three pairs may
# be live at once (the register cap).

MAX_LIVE_PAIRS = 3


class CircuitError(ValueError):
    """Raised for DSL parse or validation failures, with a line number."""


@dataclass(frozen=True)
class Rot:
    pair: int


@dataclass(frozen=True)
class Gate:
    kind: str  # CNOT | CZ
    control_pair: int
    target_pair: int


@dataclass(frozen=True)
class Measure:
    pair: int
    basis: str  # X | Y | Z
    keep_equal: bool


Instruction = Union[Rot, Gate, Measure]


@dataclass(frozen=True)
class PurificationCircuit:
    num_pairs: int
    instructions: tuple[Instruction, ...]
    survivor: int
    max_live: int


def _fail(line_no: int, msg: str) -> CircuitError:
    return CircuitError(f"line {line_no}: {msg}")


def parse_circuit(text: str) -> PurificationCircuit:
    num_pairs = None
    instructions: list[Instruction] = []
    referenced: list[int] = []  # first-reference order
    measured: set[int] = set()
    max_live = 0

    def touch(line_no: int, pair: int) -> None:
        if num_pairs is None or not 0 <= pair < num_pairs:
            raise _fail(line_no, f"pair index {pair} out of range")
        if pair in measured:
            raise _fail(line_no, f"pair {pair} was already measured")
        if pair not in referenced:
            if pair != len(referenced):
                raise _fail(
                    line_no,
                    f"pair {pair} referenced before pair {len(referenced)} "
                    "(pairs arrive in index order)",
                )
            referenced.append(pair)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        op = tokens[0]
        measured_before = len(measured)
        if op == "PAIRS":
            if num_pairs is not None:
                raise _fail(line_no, "duplicate PAIRS line")
            if len(tokens) != 2 or not tokens[1].isdigit() or int(tokens[1]) < 1:
                raise _fail(line_no, "expected: PAIRS <positive integer>")
            num_pairs = int(tokens[1])
            continue
        if num_pairs is None:
            raise _fail(line_no, "PAIRS must come before instructions")
        if op == "ROT":
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise _fail(line_no, "expected: ROT <pair>")
            pair = int(tokens[1])
            touch(line_no, pair)
            instructions.append(Rot(pair))
        elif op == "GATE":
            if len(tokens) != 4 or tokens[1] not in TWO_QUBIT_GATES:
                raise _fail(line_no, "expected: GATE CNOT|CZ <control> <target>")
            if not (tokens[2].isdigit() and tokens[3].isdigit()):
                raise _fail(line_no, "gate pair indices must be integers")
            control, target = int(tokens[2]), int(tokens[3])
            if control == target:
                raise _fail(line_no, "gate control and target must differ")
            touch(line_no, control)
            touch(line_no, target)
            instructions.append(Gate(tokens[1], control, target))
        elif op == "MEASURE":
            if (
                len(tokens) != 6
                or tokens[2] != "BASIS"
                or tokens[3] not in ("X", "Y", "Z")
                or tokens[4] != "KEEP"
                or tokens[5] not in ("equal", "unequal")
                or not tokens[1].isdigit()
            ):
                raise _fail(
                    line_no, "expected: MEASURE <pair> BASIS X|Y|Z KEEP equal|unequal"
                )
            pair = int(tokens[1])
            touch(line_no, pair)
            measured.add(pair)
            instructions.append(Measure(pair, tokens[3], tokens[5] == "equal"))
        else:
            raise _fail(line_no, f"unknown instruction {op!r}")
        # A pair measured by this instruction still occupies its slot during it.
        live = len(referenced) - measured_before
        max_live = max(max_live, live)
        if live > MAX_LIVE_PAIRS:
            raise _fail(
                line_no, f"{live} pairs live at once, register holds {MAX_LIVE_PAIRS}"
            )

    if num_pairs is None:
        raise CircuitError("missing PAIRS line")
    # A trailing pair may go untouched (it is then the survivor); anything
    # beyond that leaves two pairs unmeasured and fails the check below.
    survivors = [p for p in range(num_pairs) if p not in measured]
    if len(survivors) != 1:
        raise CircuitError(
            f"exactly one pair must survive unmeasured, found {len(survivors)}"
        )
    # The survivor holds a slot even if no instruction ever touches it.
    return PurificationCircuit(
        num_pairs, tuple(instructions), survivors[0], max(max_live, 1)
    )


def load_circuit(path: str | Path) -> PurificationCircuit:
    return parse_circuit(Path(path).read_text())


PairSupplier = Union[Callable[[], TwoQubitState], Iterable[TwoQubitState]]


def run_circuit(
    circ: PurificationCircuit, pair_supplier: PairSupplier, noise: NoiseParams, rng
) -> StepOutcome:
    """Execute a circuit on pairs taken from the supplier in arrival order.

    Untimed: no storage decoherence, instructions run back to back. Overall
    success is the conjunction of all keep conditions; the reported outcomes
    are those of the final MEASURE. The timed variant lives in protocols.
    """
    supply: Iterator[TwoQubitState]
    if callable(pair_supplier):
        # states are arrays, so the two-argument iter() sentinel form would
        # trip on elementwise comparison
        supply = (pair_supplier() for _ in count())
    else:
        supply = iter(pair_supplier)

    reg: PairRegister | None = None
    present: set[int] = set()

    def ensure(pair: int) -> PairRegister:
        nonlocal reg
        if pair not in present:
            fresh = register_from_pair(next(supply), pair)
            reg = fresh if reg is None else join(reg, fresh)
            present.add(pair)
        assert reg is not None
        return reg

    success = True
    prob = 1.0
    out_a = out_b = 0
    for instr in circ.instructions:
        if isinstance(instr, Rot):
            reg = _rotate_pair(ensure(instr.pair), instr.pair)
        elif isinstance(instr, Gate):
            ensure(instr.control_pair)
            reg = _bilateral_gate(
                ensure(instr.target_pair),
                TWO_QUBIT_GATES[instr.kind],
                instr.control_pair,
                instr.target_pair,
                noise.p_g,
            )
        else:
            ensure(instr.pair)
            out_a, out_b, reg, p = _measure_pair(
                reg, instr.pair, instr.basis, noise.p_m, rng
            )
            prob *= p
            success &= (out_a == out_b) == instr.keep_equal
    reg = ensure(circ.survivor)  # an untouched survivor still has to be taken
    return StepOutcome(success, out_a, out_b, extract_pair(reg, circ.survivor), prob)
