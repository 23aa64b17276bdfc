"""Monte Carlo estimation with confidence-interval control, and BB84 key metrics.

estimate() drives run_trial until the 95% CI halfwidths of both the mean
fidelity and the delivery rate fall below a relative target, then scores the
trial-averaged state with the BB84 secret-key fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import NoiseParams
from .linkmodel import LinkConfig
from .protocols import ProtocolKind, Scheme, run_trial
from .states import TwoQubitState, fidelity

_XX = np.array(
    [[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=complex
)
_ZZ = np.diag([1.0, -1.0, -1.0, 1.0]).astype(complex)

SKF_MODES = ("qber", "raw")


def binary_entropy(x: float) -> float:
    """Shannon entropy of a bit, with h(0) = h(1) = 0 by continuity."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def skf_bb84(rho: TwoQubitState, mode: str = "qber") -> float:
    """BB84 secret-key fraction of a delivered two-qubit state.

    The X and Z correlators theta_b = Tr(rho P(x)P) set the sifted-basis
    error rates. In "qber" mode (default) they enter as e_b = (1-theta_b)/2;
    in "raw" mode the correlators feed the entropy directly, which zeroes
    the fraction for anything below theta ~ 0.89. Both are clamped at 0.
    """
    theta_x = float(np.real(np.trace(rho @ _XX)))
    theta_z = float(np.real(np.trace(rho @ _ZZ)))
    if mode == "qber":
        h_x = binary_entropy((1.0 - theta_x) / 2.0)
        h_z = binary_entropy((1.0 - theta_z) / 2.0)
    elif mode == "raw":
        h_x = binary_entropy(min(max(theta_x, 0.0), 1.0))
        h_z = binary_entropy(min(max(theta_z, 0.0), 1.0))
    else:
        raise ValueError(f"unknown secret-key mode {mode!r}, expected one of {SKF_MODES}")
    return max(1.0 - h_x - h_z, 0.0)


def ci_halfwidth(samples) -> float:
    """Halfwidth of the normal-approximation 95% CI of the sample mean."""
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        raise ValueError("confidence interval needs at least 2 samples")
    return 1.96 * float(np.std(arr, ddof=1)) / math.sqrt(arr.size)


@dataclass(frozen=True)
class Estimates:
    mean_fidelity: float
    rate: float  # deliveries per second
    skr: float  # secret bits per second
    ci_halfwidth_fidelity: float
    ci_halfwidth_rate: float
    n_trials: int
    mean_state: TwoQubitState
    converged: bool


def _seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def estimate(
    kind: ProtocolKind,
    scheme: Scheme,
    link: LinkConfig,
    noise: NoiseParams,
    n_min: int = 10_000,
    seed=0,
    *,
    ci_target: float = 0.03,
    max_trials: int | None = None,
    skf_mode: str = "qber",
) -> Estimates:
    """Estimate fidelity, rate, and SKR for one protocol configuration.

    Runs n_min trials, then keeps adding batches (half the current count,
    capped at max_trials, default 20x n_min) until the 95% CI halfwidth of
    both the fidelity and the rate is below ci_target of the respective
    mean. Trial i draws from a generator seeded with (*seed, i), so results
    are reproducible and independent of batching. If the cap is reached
    first the result is flagged converged=False but still reported.

    The SKR applies skf_bb84 to the trial-averaged density matrix, not to
    per-trial states, and multiplies by the delivery rate.
    """
    if n_min < 100:
        raise ValueError("n_min must be at least 100")
    if not 0.0 < ci_target:
        raise ValueError("ci_target must be positive")
    if skf_mode not in SKF_MODES:
        raise ValueError(f"unknown secret-key mode {skf_mode!r}, expected one of {SKF_MODES}")
    cap = 20 * n_min if max_trials is None else max_trials
    if cap < n_min:
        raise ValueError("max_trials must be at least n_min")

    base = _seed_tuple(seed)
    times: list[float] = []
    fids: list[float] = []
    state_sum = np.zeros((4, 4), dtype=complex)

    def run_batch(count: int) -> None:
        nonlocal state_sum
        start = len(times)
        for i in range(start, start + count):
            rng = np.random.default_rng((*base, i))
            res = run_trial(kind, scheme, link, noise, rng)
            times.append(res.completion_time)
            fids.append(fidelity(res.output_state))
            state_sum = state_sum + res.output_state

    def within_target() -> bool:
        mean_f = float(np.mean(fids))
        mean_t = float(np.mean(times))
        return (
            ci_halfwidth(fids) < ci_target * mean_f
            and ci_halfwidth(times) < ci_target * mean_t
        )

    run_batch(n_min)
    converged = within_target()
    while not converged and len(times) < cap:
        run_batch(min(math.ceil(len(times) / 2), cap - len(times)))
        converged = within_target()

    n = len(times)
    mean_t = float(np.mean(times))
    ci_t = ci_halfwidth(times)
    rate = 1.0 / mean_t
    mean_state = state_sum / n
    return Estimates(
        mean_fidelity=float(np.mean(fids)),
        rate=rate,
        skr=skf_bb84(mean_state, skf_mode) * rate,
        ci_halfwidth_fidelity=ci_halfwidth(fids),
        ci_halfwidth_rate=rate * (ci_t / mean_t),
        n_trials=n,
        mean_state=mean_state,
        converged=converged,
    )
