"""Timed-event protocol engines for a single purified link.

Four protocols run the same physical story with different waiting rules:

  NOP   deliver the first heralded raw pair, no purification.
  BASE  herald every pair and check every step's outcomes before moving on.
  HOPT  herald pairs, but purify without waiting for outcome messages;
        mismatches abort as soon as the messages cross.
  OPT   act on local photon detection only; all classical messages are
        resolved in one final confirmation wait.

With measure_before_confirm the final confirmation wait is skipped: the pair
is consumed at the last local operation and bad rounds are filtered after
the fact (they cost time but deliver nothing).

A trial simulates from empty memories to one accepted pair. Storage
decoherence is applied to every stored qubit for every interval between the
events that touch it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .channels import (
    CNOT,
    ImpossibleOutcomeError,
    NoiseParams,
    PairRegister,
    TWO_QUBIT_GATES,
    decohere,
    depolarize_gate,
    extract_pair,
    join,
    noisy_measure,
    register_from_pair,
)
from .linkmodel import LinkConfig, attempt_success_prob, link_delays, per_photon_survival
from .purify import (
    Gate,
    Measure,
    PurificationCircuit,
    Rot,
    ROT_ALICE,
    ROT_BOB,
    _bilateral_gate,
    _rotate_pair,
)
from .states import TwoQubitState, embed_single, embed_two, insert_mixed, make_werner, trace_out

PROTOCOL_NAMES = ("NOP", "BASE", "HOPT", "OPT")

_TICK_EPS = 1e-9  # guard for float noise in tick index arithmetic


@dataclass(frozen=True)
class ProtocolKind:
    name: str
    measure_before_confirm: bool = False

    def __post_init__(self) -> None:
        if self.name not in PROTOCOL_NAMES:
            raise ValueError(f"unknown protocol {self.name!r}")


NOP = ProtocolKind("NOP")
BASE = ProtocolKind("BASE")
HOPT = ProtocolKind("HOPT")
OPT = ProtocolKind("OPT")


@dataclass(frozen=True)
class Pumping:
    n_steps: int

    def __post_init__(self) -> None:
        if not 0 <= self.n_steps <= 5:
            raise ValueError("pumping supports 0 to 5 steps")


@dataclass(frozen=True)
class CircuitScheme:
    circuit: PurificationCircuit


Scheme = Union[Pumping, CircuitScheme]


@dataclass(frozen=True)
class Message:
    send_time: float
    arrival_time: float
    kind: str  # herald_ok | herald_fail | purify_outcome | final_confirm
    step: Optional[int] = None
    outcome: Optional[int] = None


@dataclass(frozen=True)
class TrialResult:
    delivered: bool
    completion_time: float
    output_state: Optional[TwoQubitState]
    pairs_consumed: int
    steps_completed: int
    restarts: int


def expected_nop_time(link: LinkConfig) -> float:
    """Closed-form mean NOP delivery time: geometric wait plus delays."""
    p = attempt_success_prob(link)
    if not 0.0 < p <= 1.0:
        raise ValueError("attempt success probability must be in (0, 1]")
    period, photon_delay, herald_delay = link_delays(link)
    return period / p + photon_delay + herald_delay


# ---------------------------------------------------------------------------
# Fast conditional-branch maps for one pumping step.
#
# The step pipeline (rotations, two depolarized CNOTs, two noisy Z measures)
# is linear in the joint 16x16 input, so the four (alice, bob) outcome
# branches are fixed 16->4 dimensional superoperators. They are built once
# per (p_g, p_m) by pushing basis matrices through the slow channel ops,
# which keeps them semantically identical to dejmps_step.

_PROJ_Z = (np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex))


@lru_cache(maxsize=16)
def _step_branch_maps(p_g: float, p_m: float) -> np.ndarray:
    r16 = np.kron(np.kron(ROT_ALICE, ROT_BOB), np.kron(ROT_ALICE, ROT_BOB))
    cnot_a = embed_two(CNOT, 0, 2, 4)
    cnot_b = embed_two(CNOT, 1, 3, 4)
    pp, pm = _PROJ_Z

    def gate(rho: np.ndarray, unitary: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
        mixed = insert_mixed(trace_out(rho, pair, 4), pair, 4)
        return p_g * (unitary @ rho @ unitary.conj().T) + (1.0 - p_g) * mixed

    def weighted_branch(rho: np.ndarray, qubit: int, n: int, want_plus: bool) -> np.ndarray:
        po = embed_single(pp if want_plus else pm, qubit, n)
        pn = embed_single(pm if want_plus else pp, qubit, n)
        post = p_m * (po @ rho @ po) + (1.0 - p_m) * (pn @ rho @ pn)
        return trace_out(post, (qubit,), n)

    maps = np.empty((4, 16, 256), dtype=complex)
    for row in range(16):
        for col in range(16):
            basis = np.zeros((16, 16), dtype=complex)
            basis[row, col] = 1.0
            rho = r16 @ basis @ r16.conj().T
            rho = gate(rho, cnot_a, (0, 2))
            rho = gate(rho, cnot_b, (1, 3))
            for bi, (oa, ob) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
                r8 = weighted_branch(rho, 2, 4, oa == 1)  # Alice's sacrificial qubit
                r4 = weighted_branch(r8, 2, 3, ob == 1)  # Bob's, now at index 2
                maps[bi, :, row * 16 + col] = r4.reshape(-1)
    return maps.reshape(64, 256)


_DIAG = np.arange(4)


class _Kernel:
    """Per-configuration machinery shared by all trials of one cell."""

    def __init__(self, link: LinkConfig, noise: NoiseParams):
        self.link = link
        self.noise = noise
        self.period, self.photon_delay, self.herald_delay = link_delays(link)
        self.p_photon = per_photon_survival(link)
        self.werner = make_werner(link.f0)
        self._step_maps: Optional[np.ndarray] = None
        self._deco: dict[float, np.ndarray] = {}

    # -- timing helpers ----------------------------------------------------
    def tick_from_emission(self, ref: float) -> int:
        """First tick whose emission time is at or after ref."""
        return max(1, math.ceil(ref / self.period - _TICK_EPS))

    def tick_from_arrival(self, floor: float) -> int:
        """First tick whose arrival time is at or after floor."""
        k = math.ceil((floor - self.photon_delay) / self.period - _TICK_EPS)
        return max(1, k)

    def arrival(self, k: int) -> float:
        return k * self.period + self.photon_delay

    # -- quantum helpers ---------------------------------------------------
    def decohere_pair(self, rho: TwoQubitState, dt: float) -> TwoQubitState:
        if dt == 0.0:
            return rho
        sup = self._deco.get(dt)
        if sup is None:
            sup = np.empty((16, 16), dtype=complex)
            for idx in range(16):
                basis = np.zeros((4, 4), dtype=complex)
                basis[idx // 4, idx % 4] = 1.0
                reg = PairRegister(basis, ((0, "A"), (0, "B")))
                sup[:, idx] = decohere(reg, (0, 1), dt, self.noise).rho.reshape(-1)
            self._deco[dt] = sup
        return (sup @ rho.reshape(-1)).reshape(4, 4)

    def step(
        self, main: TwoQubitState, sac: TwoQubitState, rng
    ) -> tuple[int, int, TwoQubitState]:
        """Sample one pumping step; draws two uniforms (Alice then Bob)."""
        if self._step_maps is None:
            self._step_maps = _step_branch_maps(self.noise.p_g, self.noise.p_m)
        joint = (main[:, None, :, None] * sac[None, :, None, :]).reshape(-1)
        branches = (self._step_maps @ joint).reshape(4, 4, 4)
        traces = branches[:, _DIAG, _DIAG].sum(axis=1).real
        total = traces.sum()
        if total < 1e-15:
            raise ImpossibleOutcomeError("all step branches have vanishing probability")
        out_a = 1 if rng.random() < (traces[0] + traces[1]) / total else -1
        base = 0 if out_a == 1 else 2
        sub = traces[base] + traces[base + 1]
        if sub < 1e-15:
            raise ImpossibleOutcomeError("selected measurement branch is impossible")
        out_b = 1 if rng.random() < traces[base] / sub else -1
        idx = base + (0 if out_b == 1 else 1)
        if traces[idx] < 1e-15:
            raise ImpossibleOutcomeError("selected measurement branch is impossible")
        return out_a, out_b, branches[idx] / traces[idx]


@lru_cache(maxsize=8)
def _kernel(link: LinkConfig, noise: NoiseParams) -> _Kernel:
    return _Kernel(link, noise)


# ---------------------------------------------------------------------------
# Event/audit plumbing. Events are text lines "time node kind detail";
# audit maps (episode, pair) -> [arrival, decohered_total, end] and is only
# kept for pairs that reach their natural end (measured or delivered).


class _Trace:
    __slots__ = ("events", "audit", "herald_delay", "episode", "live", "_open")

    def __init__(self, events, audit, herald_delay: float):
        self.events = events
        self.audit = audit
        self.herald_delay = herald_delay
        self.episode = 0
        self.live = events is not None
        self._open: dict[int, list[float]] = {}

    def event(self, t: float, node: str, kind: str, detail: str = "") -> None:
        if self.events is not None:
            self.events.append(f"{t:.12f} {node} {kind} {detail}".rstrip())

    def message(self, send_time: float, node: str, msg: Message) -> None:
        if self.events is not None:
            extra = ""
            if msg.step is not None:
                extra = f" step={msg.step}"
                if msg.outcome is not None:
                    extra += f" outcome={msg.outcome:+d}"
            other = "B" if node == "A" else "A"
            self.event(send_time, node, f"send_{msg.kind}", extra.strip())
            self.event(msg.arrival_time, other, f"recv_{msg.kind}", extra.strip())

    def born(self, pair: int, arrival: float) -> None:
        if self.audit is not None:
            self._open[pair] = [arrival, 0.0]

    def decohered(self, pair: int, dt: float) -> None:
        if self.audit is not None and pair in self._open:
            self._open[pair][1] += dt

    def closed(self, pair: int, end: float) -> None:
        if self.audit is not None and pair in self._open:
            arrival, total = self._open.pop(pair)
            self.audit[(self.episode, pair)] = (arrival, total, end)

    def teardown(self) -> None:
        self.episode += 1
        self._open.clear()


@dataclass
class _Restart:
    ref: float  # emissions at or after this moment are usable


# ---------------------------------------------------------------------------
# Acquisition. Draws two uniforms per tick (Alice's photon, then Bob's).


def _acquire(kernel: _Kernel, rng, k_min: int, floor: float, heralded: bool, trace: _Trace):
    """Advance through source ticks until a pair is stored at both nodes.

    Returns (ok, k, arrival). With heralded=True a one-sided loss blocks the
    survivor's slot until the failure herald crosses, then retries; with
    heralded=False (OPT) it returns ok=False so the caller can restart.
    """
    k = max(k_min, kernel.tick_from_arrival(floor))
    while True:
        got_a = rng.random() < kernel.p_photon
        got_b = rng.random() < kernel.p_photon
        arrival = kernel.arrival(k)
        if got_a and got_b:
            return True, k, arrival
        if not got_a and not got_b:
            k += 1
            continue
        if trace.live:
            loser = "B" if got_a else "A"
            trace.event(arrival, loser, "photon_lost", f"tick={k}")
            trace.message(arrival, loser, Message(arrival, arrival + kernel.herald_delay, "herald_fail"))
        if not heralded:
            return False, k, arrival
        k = max(k + 1, kernel.tick_from_arrival(arrival + kernel.herald_delay))


def _nop_trial(kernel: _Kernel, kind: ProtocolKind, rng, trace: _Trace) -> TrialResult:
    # Raw delivery needs no reserved partner slot, so a one-sided loss never
    # blocks the next attempt: plain per-tick trials.
    k = 1
    while True:
        got_a = rng.random() < kernel.p_photon
        got_b = rng.random() < kernel.p_photon
        if got_a and got_b:
            break
        k += 1
    arrival = kernel.arrival(k)
    trace.born(0, arrival)
    herald = kernel.herald_delay
    if trace.live:
        trace.event(arrival, "AB", "pair_stored", "pair=0")
        trace.message(arrival, "A", Message(arrival, arrival + herald, "herald_ok"))
    if kind.measure_before_confirm:
        state = kernel.werner.copy()
        completion = arrival
    else:
        state = kernel.decohere_pair(kernel.werner, herald)
        trace.decohered(0, herald)
        completion = arrival + herald
    trace.closed(0, completion)
    trace.event(completion, "AB", "delivered", "pair=0")
    return TrialResult(True, completion, state, 1, 0, 0)


def _geometric_gap(rng, eta: float) -> int:
    """Failures before the next success in a Bernoulli(eta) stream."""
    if eta >= 1.0:
        return 0
    u = rng.random()
    return int(math.log(max(u, 1e-300)) / math.log1p(-eta))


def _opt_blind_trial(kernel: _Kernel, n_steps: int, rng, trace: _Trace) -> TrialResult:
    """Measure-first pumping for the fully optimistic protocol.

    With delivery decoupled from confirmation, classical messages only filter
    rounds after the fact; they never steer the nodes. The shared source
    clock assigns every tick a fixed role in advance (round r, slot s), so
    both sides always operate on matching halves without negotiating: a
    round's photons arrive on consecutive ticks, each purification step runs
    the moment its slot's photon lands, and the finished pair is measured at
    the last local operation. Any lost photon or mismatched check silently
    dooms the round; post-processing discards it, but the next round is
    already underway, so failures cost no waiting time.
    """
    link = kernel.link
    eta = kernel.p_photon
    gate_time, measure_time = link.gate_time, link.measure_time
    op_dur = gate_time + measure_time
    period = kernel.period
    slots = n_steps + 1
    # slot spacing: the next photon is accepted on the first tick after the
    # previous slot's gate work has finished
    stride = 1 if op_dur <= 0.0 else max(1, math.ceil(op_dur / period - _TICK_EPS))
    span = slots * stride  # ticks consumed by one round
    # chance that all 2*slots photons of a round survive
    q_round = (eta * eta) ** slots
    pairs = 0
    rounds = 0
    round_start = 1
    while True:
        skipped = _geometric_gap(rng, q_round)  # rounds lost to photon loss
        if skipped:
            rounds += skipped
            round_start += skipped * span
            if trace.live:
                trace.event(
                    kernel.arrival(round_start - 1), "AB", "rounds_filtered",
                    f"count={skipped} cause=loss",
                )
        rounds += 1
        pairs += slots
        ticks = [round_start + s * stride for s in range(slots)]
        round_start += span

        a_main = kernel.arrival(ticks[0])
        trace.born(0, a_main)
        main = kernel.werner
        last_touch = a_main
        tau_end = a_main
        matched = True
        for step in range(1, slots):
            a_sac = kernel.arrival(ticks[step])
            trace.born(step, a_sac)
            tau_end = a_sac + gate_time + measure_time
            main = kernel.decohere_pair(main, tau_end - last_touch)
            trace.decohered(0, tau_end - last_touch)
            sac = kernel.decohere_pair(kernel.werner, tau_end - a_sac)
            trace.decohered(step, tau_end - a_sac)
            out_a, out_b, post = kernel.step(main, sac, rng)
            if trace.live:
                trace.event(tau_end, "AB", "purify_step", f"step={step} a={out_a:+d} b={out_b:+d}")
            trace.closed(step, tau_end)
            if out_a != out_b:
                matched = False  # neither node knows yet; the round runs on
            main = post
            last_touch = tau_end
        trace.closed(0, tau_end)
        if matched:
            trace.event(tau_end, "AB", "delivered", "pair=0")
            return TrialResult(True, tau_end, main, pairs, n_steps, rounds - 1)
        if trace.live:
            trace.event(tau_end, "AB", "round_filtered", "cause=outcome")
        trace.teardown()


def _pumping_episode(
    kernel: _Kernel, kind: ProtocolKind, n_steps: int, rng, restart_ref: float, trace: _Trace
):
    """One attempt at a full delivery. Returns TrialResult or _Restart.

    The returned TrialResult leaves pairs_consumed/restarts at the episode
    level; the caller accumulates across episodes.
    """
    mbc = kind.measure_before_confirm
    heralded = kind.name != "OPT"
    confirmed = kind.name in ("BASE", "HOPT")  # pairs heralded before use
    herald = kernel.herald_delay
    gate_time = kernel.link.gate_time
    measure_time = kernel.link.measure_time

    pairs = 0
    ok, k_last, a_main = _acquire(
        kernel, rng, kernel.tick_from_emission(restart_ref), 0.0, heralded, trace
    )
    if not ok:
        return _Restart(a_main + herald), pairs
    pairs += 1
    if trace.live:
        trace.event(a_main, "AB", "pair_stored", "pair=0")
        trace.message(a_main, "A", Message(a_main, a_main + herald, "herald_ok"))
    trace.born(0, a_main)

    main = kernel.werner
    last_touch = a_main
    t_local = a_main + (herald if confirmed else 0.0)

    if n_steps == 0:
        completion = a_main if mbc else a_main + herald
        state = kernel.decohere_pair(main, completion - last_touch)
        trace.decohered(0, completion - last_touch)
        trace.closed(0, completion)
        trace.event(completion, "AB", "delivered", "pair=0")
        return TrialResult(True, completion, state, pairs, 0, 0), pairs

    mismatch_resolve = math.inf
    tau_end = t_local
    for step in range(1, n_steps + 1):
        if kind.name == "BASE":
            floor = 0.0 if step == 1 else tau_end + herald
        else:  # HOPT and OPT free the slot at the measurement itself
            floor = 0.0 if step == 1 else tau_end
        ok, k_last, a_sac = _acquire(kernel, rng, k_last + 1, floor, heralded, trace)
        if not ok:
            trace.teardown()
            return _Restart(a_sac + herald), pairs
        pairs += 1
        if trace.live:
            trace.event(a_sac, "AB", "pair_stored", f"pair={step}")
            trace.message(a_sac, "A", Message(a_sac, a_sac + herald, "herald_ok"))
        trace.born(step, a_sac)

        tau = max(t_local, a_sac + (herald if confirmed else 0.0))
        if tau >= mismatch_resolve:
            # The failure message crossed before this step could fire.
            trace.teardown()
            return _Restart(mismatch_resolve), pairs
        # Accumulate the two stage times separately so the timed circuit
        # interpreter, which dispatches them as distinct instructions,
        # lands on the bit-identical end time.
        tau_end = tau + gate_time + measure_time
        main = kernel.decohere_pair(main, tau_end - last_touch)
        trace.decohered(0, tau_end - last_touch)
        sac = kernel.decohere_pair(kernel.werner, tau_end - a_sac)
        trace.decohered(step, tau_end - a_sac)
        out_a, out_b, post = kernel.step(main, sac, rng)
        if trace.live:
            trace.event(tau_end, "AB", "purify_step", f"step={step} a={out_a:+d} b={out_b:+d}")
            trace.message(tau_end, "A", Message(tau_end, tau_end + herald, "purify_outcome", step, out_a))
        trace.closed(step, tau_end)
        if out_a != out_b:
            if not mbc:
                trace.teardown()
                return _Restart(tau_end + herald), pairs
            mismatch_resolve = min(mismatch_resolve, tau_end + herald)
        main = post
        last_touch = tau_end
        t_local = tau_end

    if mbc:
        completion = tau_end
        if mismatch_resolve < math.inf:
            # Delivered blind and filtered once the messages arrive; the
            # round costs time but produces nothing.
            trace.event(completion, "AB", "filtered")
            trace.teardown()
            return _Restart(completion), pairs
    else:
        completion = tau_end + herald
        if trace.live:
            trace.message(tau_end, "A", Message(tau_end, completion, "final_confirm"))
    state = kernel.decohere_pair(main, completion - last_touch)
    trace.decohered(0, completion - last_touch)
    trace.closed(0, completion)
    trace.event(completion, "AB", "delivered", "pair=0")
    return TrialResult(True, completion, state, pairs, n_steps, 0), pairs


def _circuit_episode(
    kernel: _Kernel,
    kind: ProtocolKind,
    circ: PurificationCircuit,
    rng,
    restart_ref: float,
    trace: _Trace,
):
    """Timed execution of a DSL circuit. Mirrors the pumping rules.

    Instructions dispatch eagerly: each fires as soon as its operands are
    locally usable and the local timeline is free.
    """
    mbc = kind.measure_before_confirm
    heralded = kind.name != "OPT"
    confirmed = kind.name in ("BASE", "HOPT")
    herald = kernel.herald_delay

    reg: Optional[PairRegister] = None
    usable: dict[int, float] = {}
    arrivals: dict[int, float] = {}
    last_touch: dict[int, float] = {}
    slot_free = [0.0] * circ.max_live
    check_floor = 0.0  # BASE: all outcomes so far must be checked
    k_last = 0
    t_local = 0.0
    pairs = 0
    steps = 0
    mismatch_resolve = math.inf
    measure_ends: list[float] = []

    def restart(ref: float):
        trace.teardown()
        return _Restart(ref), pairs

    def take_pair(p: int) -> Optional[float]:
        """Acquire pair p; returns the restart reference on loss, else None."""
        nonlocal reg, pairs, k_last
        slot_free.sort()
        floor = max(slot_free.pop(0), check_floor if kind.name == "BASE" else 0.0)
        if pairs == 0:
            k_min = kernel.tick_from_emission(restart_ref)
        else:
            k_min = k_last + 1
        ok, k_last, a_p = _acquire(kernel, rng, k_min, floor, heralded, trace)
        if not ok:
            return a_p + herald
        pairs += 1
        trace.event(a_p, "AB", "pair_stored", f"pair={p}")
        trace.message(a_p, "A", Message(a_p, a_p + herald, "herald_ok"))
        trace.born(p, a_p)
        arrivals[p] = a_p
        last_touch[p] = a_p
        usable[p] = a_p + (herald if confirmed else 0.0)
        fresh = register_from_pair(kernel.werner, p)
        reg = fresh if reg is None else join(reg, fresh)
        return None

    for instr in circ.instructions:
        operands = (
            (instr.pair,)
            if isinstance(instr, (Rot, Measure))
            else (instr.control_pair, instr.target_pair)
        )
        for p in operands:
            if p in usable:
                continue
            lost = take_pair(p)
            if lost is not None:
                return restart(lost)

        tau = max(t_local, *(usable[p] for p in operands))
        if tau >= mismatch_resolve:
            return restart(mismatch_resolve)
        dur = 0.0
        if isinstance(instr, Gate):
            dur = kernel.link.gate_time
        elif isinstance(instr, Measure):
            dur = kernel.link.measure_time
        tau_end = tau + dur
        assert reg is not None
        for p in operands:
            dt = tau_end - last_touch[p]
            if dt > 0.0:
                qubits = (reg.qubit_index(p, "A"), reg.qubit_index(p, "B"))
                reg = decohere(reg, qubits, dt, kernel.noise)
                trace.decohered(p, dt)
            last_touch[p] = tau_end

        if isinstance(instr, Rot):
            reg = _rotate_pair(reg, instr.pair)
        elif isinstance(instr, Gate):
            reg = _bilateral_gate(
                reg, TWO_QUBIT_GATES[instr.kind], instr.control_pair, instr.target_pair, kernel.noise.p_g
            )
        else:
            out_a, reg, _ = noisy_measure(
                reg, reg.qubit_index(instr.pair, "A"), instr.basis, kernel.noise.p_m, rng.random()
            )
            out_b, reg, _ = noisy_measure(
                reg, reg.qubit_index(instr.pair, "B"), instr.basis, kernel.noise.p_m, rng.random()
            )
            steps += 1
            slot_free.append(tau_end)
            measure_ends.append(tau_end)
            check_floor = max(check_floor, tau_end + herald)
            trace.event(tau_end, "AB", "measure", f"pair={instr.pair} a={out_a:+d} b={out_b:+d}")
            trace.message(
                tau_end, "A", Message(tau_end, tau_end + herald, "purify_outcome", steps, out_a)
            )
            trace.closed(instr.pair, tau_end)
            usable.pop(instr.pair)
            kept = (out_a == out_b) == instr.keep_equal
            if not kept:
                if not mbc:
                    return restart(tau_end + herald)
                mismatch_resolve = min(mismatch_resolve, tau_end + herald)
        t_local = tau_end

    if circ.survivor not in arrivals:  # circuit never touched the kept pair
        lost = take_pair(circ.survivor)
        if lost is not None:
            return restart(lost)
        t_local = max(t_local, arrivals[circ.survivor])

    if mbc:
        completion = t_local
        if mismatch_resolve < math.inf:
            trace.event(completion, "AB", "filtered")
            return restart(completion)
    else:
        completion = max(
            t_local,
            max(a + herald for a in arrivals.values()),
            max((m + herald for m in measure_ends), default=0.0),
        )
        trace.message(t_local, "A", Message(t_local, t_local + herald, "final_confirm"))
    assert reg is not None
    surv = circ.survivor
    dt = completion - last_touch[surv]
    if dt > 0.0:
        qubits = (reg.qubit_index(surv, "A"), reg.qubit_index(surv, "B"))
        reg = decohere(reg, qubits, dt, kernel.noise)
        trace.decohered(surv, dt)
    trace.closed(surv, completion)
    trace.event(completion, "AB", "delivered", f"pair={surv}")
    state = extract_pair(reg, surv)
    return TrialResult(True, completion, state, pairs, steps, 0), pairs


def run_trial(
    kind: ProtocolKind,
    scheme: Scheme,
    link: LinkConfig,
    noise: NoiseParams,
    rng,
    *,
    events: Optional[list] = None,
    audit: Optional[dict] = None,
) -> TrialResult:
    """Simulate one delivery from empty memories to one accepted pair."""
    kernel = _kernel(link, noise)
    trace = _Trace(events, audit, kernel.herald_delay)
    if kind.name == "NOP":
        return _nop_trial(kernel, kind, rng, trace)
    if kind.name == "OPT" and kind.measure_before_confirm and isinstance(scheme, Pumping):
        # Nothing is awaited and nothing is held back for confirmation, so
        # rounds pipeline back to back on the shared source clock; a bare
        # pair is just measured on arrival like raw delivery.
        if scheme.n_steps == 0:
            return _nop_trial(kernel, kind, rng, trace)
        return _opt_blind_trial(kernel, scheme.n_steps, rng, trace)

    if isinstance(scheme, Pumping):
        episode = lambda ref: _pumping_episode(kernel, kind, scheme.n_steps, rng, ref, trace)
    elif isinstance(scheme, CircuitScheme):
        episode = lambda ref: _circuit_episode(kernel, kind, scheme.circuit, rng, ref, trace)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    ref = 0.0
    restarts = 0
    total_pairs = 0
    while True:
        outcome, pairs = episode(ref)
        total_pairs += pairs
        if isinstance(outcome, TrialResult):
            return TrialResult(
                True,
                outcome.completion_time,
                outcome.output_state,
                total_pairs,
                outcome.steps_completed,
                restarts,
            )
        restarts += 1
        ref = outcome.ref
