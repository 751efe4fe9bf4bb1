"""Algorithm steppers and the replication-parallel run loop.

Four variants share one iteration shape:

* ``dosp`` — each node perturbs its action by gamma_k * Phi_i (random signed
  perturbation), all nodes act simultaneously, observe their local utilities
  at the perturbed point, sum them into a scalar f~, and update
  a_i <- a_i + beta_k * Phi_i * f~.
* ``dosp_incomplete`` — same, except node i only receives a random subset of
  the other nodes' utilities and substitutes the scaled-sum estimate from
  :mod:`dospsim.exchange`; a node with an empty subset keeps its action.
* ``sine_baseline`` — identical update with the random perturbation replaced
  by the deterministic signal lambda_i * sin(Omega_i * t_k + phase_i), where
  t_k accumulates the beta step sizes.  The same signal value is used in both
  the performed perturbation and the multiplicative update.
* ``exact_gradient_baseline`` — stochastic gradient ascent with the exact
  per-sample gradient at the nominal action (an idealized reference that
  needs information no distributed node has).

Constrained runs clamp the nominal iterate to the shrunken box
[a_min + alpha3*gamma_{k+1}, a_max - alpha3*gamma_{k+1}] after each update so
the next perturbed action stays feasible.  When gamma is so large early on
that the shrunken box is empty, the run falls back to the plain box and the
performed action itself is clamped to [a_min, a_max]; once gamma has decayed
the shrunken-box rule applies verbatim (and the clamp of the performed action
becomes a no-op).

Randomness is counter-based: every (seed, iteration, purpose) triple keys an
independent Philox stream, with separate purposes for initialization,
perturbations, environment states, observation noise, and exchange subsets.
Consequences, relied on by the tests:

* reruns with the same seed are bit-identical;
* replication r's trajectory does not depend on how many replications run
  alongside it (draws are row-major prefixes of each purpose stream);
* the complete- and incomplete-information variants see identical
  perturbations and states under the same seed, so at p = 1 their
  trajectories coincide bitwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exchange import ExchangeModel, sample_masks
from .objectives import ObjectiveModel
from .perturbation import PerturbationModel, sample_array
from .schedules import PowerLawSchedule

logger = logging.getLogger(__name__)

__all__ = [
    "SineParams",
    "AlgoConfig",
    "RunState",
    "IterationRecord",
    "RunTrace",
    "StreamBundle",
    "streams",
    "project",
    "InfeasibleBoxError",
    "step_dosp",
    "step_dosp_incomplete",
    "step_sine_baseline",
    "step_exact_gradient_baseline",
    "run",
    "default_record_ks",
]

VARIANTS = ("dosp", "dosp_incomplete", "sine_baseline", "exact_gradient_baseline")

DEFAULT_SINE_FREQUENCIES = (63.0, 70.0, 56.0, 49.0)


@dataclass(frozen=True)
class SineParams:
    """Deterministic perturbation signal of the sine baseline.

    Frequencies must be pairwise distinct and no pairwise sum may equal a
    third frequency (otherwise the demodulation products alias onto each
    other and the baseline cannot separate the nodes' contributions).
    """

    frequencies: tuple
    amplitude: float = 1.5
    phase: float = 0.0

    def __post_init__(self) -> None:
        freqs = tuple(float(w) for w in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        if len(set(freqs)) != len(freqs):
            raise ValueError("sine frequencies must be pairwise distinct")
        fset = set(freqs)
        for i, wi in enumerate(freqs):
            for wj in freqs[i:]:
                if wi + wj in fset:
                    raise ValueError(
                        "sum of two sine frequencies collides with a third"
                    )
        if self.amplitude <= 0:
            raise ValueError("sine amplitude must be positive")


class InfeasibleBoxError(ValueError):
    """Raised when the shrunken projection box is empty."""


@dataclass(frozen=True)
class AlgoConfig:
    schedule: PowerLawSchedule
    perturbation: PerturbationModel = field(default_factory=PerturbationModel)
    bounds: Optional[tuple] = None  # overrides the objective's bounds if set
    exchange: Optional[ExchangeModel] = None
    variant: str = "dosp"
    sine: Optional[SineParams] = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; one of {VARIANTS}")
        if (self.variant == "sine_baseline") != (self.sine is not None):
            raise ValueError("sine parameters required iff variant is sine_baseline")
        if self.variant == "dosp_incomplete" and self.exchange is None:
            raise ValueError("dosp_incomplete requires an exchange model")

    def effective_bounds(self, objective: ObjectiveModel):
        return self.bounds if self.bounds is not None else objective.bounds


@dataclass
class RunState:
    k: int
    a: np.ndarray
    t: float = 0.0
    last_phi: Optional[np.ndarray] = None


@dataclass(frozen=True)
class IterationRecord:
    k: int
    performed_action: np.ndarray
    observed_global: np.ndarray  # scalar f~ per replication, or per-node estimates
    nominal_action: np.ndarray


# ---------------------------------------------------------------------------
# counter-based streams


_MASK64 = (1 << 64) - 1
_NPURP = 8
_INIT, _PHI, _STATE, _NOISE, _SUBSET = range(5)


def _stream(seed: int, k: int, purpose: int) -> np.random.Generator:
    key = ((seed & _MASK64) << 64) + (k + 1) * _NPURP + purpose
    return np.random.Generator(np.random.Philox(key=key))


class StreamBundle:
    """Lazy per-iteration bundle of the four purpose streams."""

    __slots__ = ("_seed", "_k", "_cache")

    def __init__(self, seed: int, k: int):
        self._seed = seed
        self._k = k
        self._cache = {}

    def _get(self, purpose: int) -> np.random.Generator:
        if purpose not in self._cache:
            self._cache[purpose] = _stream(self._seed, self._k, purpose)
        return self._cache[purpose]

    @property
    def phi(self):
        return self._get(_PHI)

    @property
    def state(self):
        return self._get(_STATE)

    @property
    def noise(self):
        return self._get(_NOISE)

    @property
    def subset(self):
        return self._get(_SUBSET)


def streams(seed: int, k: int = 0) -> StreamBundle:
    """Build the purpose streams for iteration ``k`` of run ``seed``."""
    return StreamBundle(seed, k)


# ---------------------------------------------------------------------------
# shared step primitives


def project(candidate, k_next: int, config: AlgoConfig, bounds=None):
    """Clamp to the shrunken box for iteration ``k_next``.

    Raises :class:`InfeasibleBoxError` when
    a_min + alpha3*gamma_{k_next} > a_max - alpha3*gamma_{k_next}.
    """
    if bounds is None:
        bounds = config.bounds
    if bounds is None:
        raise ValueError("project requires bounds")
    a_min, a_max = bounds
    margin = config.perturbation.amplitude * config.schedule.gamma(k_next)
    lo, hi = a_min + margin, a_max - margin
    if lo > hi:
        raise InfeasibleBoxError(
            f"shrunken box empty at k={k_next}: [{lo}, {hi}]"
        )
    return np.clip(candidate, lo, hi)


def _bounded_update(candidate, k_next, schedule, alpha3, bounds):
    """Shrunken-box clamp with plain-box fallback when the former is empty."""
    a_min, a_max = bounds
    margin = alpha3 * schedule.gamma(k_next)
    lo, hi = a_min + margin, a_max - margin
    if lo > hi:
        lo, hi = a_min, a_max
    return np.clip(candidate, lo, hi)


def _perform(a, gamma_k, phi, bounds):
    ahat = a + gamma_k * phi
    if bounds is not None:
        ahat = np.clip(ahat, bounds[0], bounds[1])
    return ahat


def _subset_estimates(u, mask):
    """Per-node scaled-sum estimates from utilities u (..., n) and receive
    masks (..., n, n).  Full subsets reproduce the plain sum bitwise."""
    n = u.shape[-1]
    counts = mask.sum(axis=-1)
    partial = np.einsum("...ij,...j->...i", mask.astype(float), u)
    scaled = u + (n - 1) / np.maximum(counts, 1) * partial
    total = np.broadcast_to(u.sum(axis=-1, keepdims=True), u.shape)
    est = np.where(counts == n - 1, total, scaled)
    return np.where(counts > 0, est, 0.0)


def _sine_phi(config: AlgoConfig, t_for_phi: float, shape):
    sp = config.sine
    w = np.asarray(sp.frequencies)
    vals = sp.amplitude * np.sin(w * t_for_phi + sp.phase)
    return np.broadcast_to(vals, shape).copy()


# ---------------------------------------------------------------------------
# single-step API (batch-safe: actions of shape (n,) or (..., n))


def step_dosp(state: RunState, config: AlgoConfig, objective: ObjectiveModel, rng):
    """One complete-information update; returns (new state, record)."""
    k, a = state.k, state.a
    b, gm = config.schedule.beta(k), config.schedule.gamma(k)
    bounds = config.effective_bounds(objective)
    phi = sample_array(config.perturbation, a.shape, rng.phi)
    s = objective.sample_state(rng.state, a.shape[:-1])
    ahat = _perform(a, gm, phi, bounds)
    u = objective.observe(ahat, s, rng.noise)
    ftil = u.sum(axis=-1)
    cand = a + b * phi * ftil[..., None]
    new = (
        _bounded_update(cand, k + 1, config.schedule,
                        config.perturbation.amplitude, bounds)
        if bounds is not None
        else cand
    )
    rec = IterationRecord(k, ahat, ftil, np.array(a, copy=True))
    return RunState(k + 1, new, state.t, phi), rec


def step_dosp_incomplete(state, config, objective, rng):
    """One incomplete-information update; per-node estimates replace f~."""
    k, a = state.k, state.a
    n = a.shape[-1]
    b, gm = config.schedule.beta(k), config.schedule.gamma(k)
    bounds = config.effective_bounds(objective)
    phi = sample_array(config.perturbation, a.shape, rng.phi)
    s = objective.sample_state(rng.state, a.shape[:-1])
    ahat = _perform(a, gm, phi, bounds)
    u = objective.observe(ahat, s, rng.noise)
    mask = sample_masks(config.exchange, n, rng.subset, a.shape[:-1])
    est = _subset_estimates(u, mask)
    cand = a + b * phi * est
    new = (
        _bounded_update(cand, k + 1, config.schedule,
                        config.perturbation.amplitude, bounds)
        if bounds is not None
        else cand
    )
    rec = IterationRecord(k, ahat, est, np.array(a, copy=True))
    return RunState(k + 1, new, state.t, phi), rec


def step_sine_baseline(state, config, objective, rng):
    """One deterministic-perturbation update (see module docstring).

    The accumulated time t sums the beta step sizes.  With index_offset 0 the
    step at index k uses t including beta_k; with offset 1 the first step
    (k = 0) uses t = 0.
    """
    k, a = state.k, state.a
    b, gm = config.schedule.beta(k), config.schedule.gamma(k)
    bounds = config.effective_bounds(objective)
    if config.schedule.index_offset == 0:
        t_new = state.t + b
        t_phi = t_new
    else:
        t_phi = state.t
        t_new = state.t + b
    phi = _sine_phi(config, t_phi, a.shape)
    s = objective.sample_state(rng.state, a.shape[:-1])
    ahat = _perform(a, gm, phi, bounds)
    u = objective.observe(ahat, s, rng.noise)
    ftil = u.sum(axis=-1)
    cand = a + b * phi * ftil[..., None]
    new = (
        _bounded_update(cand, k + 1, config.schedule,
                        config.perturbation.amplitude, bounds)
        if bounds is not None
        else cand
    )
    rec = IterationRecord(k, ahat, ftil, np.array(a, copy=True))
    return RunState(k + 1, new, t_new, phi), rec


def step_exact_gradient_baseline(state, config, objective, rng):
    """One exact-gradient ascent step at the nominal action (no perturbation)."""
    k, a = state.k, state.a
    b = config.schedule.beta(k)
    bounds = config.effective_bounds(objective)
    s = objective.sample_state(rng.state, a.shape[:-1])
    g = objective.exact_sample_gradient(a, s)
    cand = a + b * g
    new = np.clip(cand, bounds[0], bounds[1]) if bounds is not None else cand
    f = objective.global_utility(a, s)
    rec = IterationRecord(k, np.array(a, copy=True), f, np.array(a, copy=True))
    return RunState(k + 1, new, state.t, None), rec


_STEPPERS = {
    "dosp": step_dosp,
    "dosp_incomplete": step_dosp_incomplete,
    "sine_baseline": step_sine_baseline,
    "exact_gradient_baseline": step_exact_gradient_baseline,
}


# ---------------------------------------------------------------------------
# run loop


@dataclass
class RunTrace:
    """Recorded quantities of one (possibly replicated) run.

    ``actions[j]`` is the nominal iterate at index ``ks[j]``, shape (R, n).
    ``mean_utility`` is the per-node average utility f(a_k, S_k)/n at the
    nominal iterate under that iteration's state draw, averaged over
    replications.  ``ghat_sq`` is the replication-averaged squared norm of
    the update direction (NaN at the final index, where no step happens).
    ``successor_actions`` (optional) holds the iterate one step after each
    recorded index, for recursion checks.  ``performed_min``/``max`` track
    the extreme components of every performed action over the whole run.
    """

    ks: np.ndarray
    actions: np.ndarray
    mean_utility: np.ndarray
    utility_stderr: np.ndarray
    ghat_sq: np.ndarray
    performed_min: float
    performed_max: float
    variant: str
    seed: int
    replications: int
    successor_actions: Optional[np.ndarray] = None


def default_record_ks(first_index: int, horizon: int, dense: int = 1000,
                      per_decade: int = 25) -> np.ndarray:
    """Every index up to ``dense``, then log-spaced; always includes the
    final index ``first_index + horizon``."""
    kf = first_index + horizon
    ks = np.arange(first_index, min(first_index + dense, kf) + 1)
    if kf > first_index + dense:
        lo, hi = np.log10(first_index + dense), np.log10(kf)
        n_log = max(2, int(np.ceil((hi - lo) * per_decade)))
        logs = np.round(np.logspace(lo, hi, n_log)).astype(int)
        ks = np.unique(np.concatenate([ks, logs, [kf]]))
    return ks


def run(
    config: AlgoConfig,
    objective: ObjectiveModel,
    horizon: int,
    seed: int,
    replications: int = 1,
    record_ks: Optional[Sequence[int]] = None,
    record_successors: bool = False,
) -> RunTrace:
    """Run ``replications`` independent trajectories for ``horizon`` steps.

    All replications advance in lockstep as rows of a (R, n) action array;
    see the module docstring for the stream-derivation contract.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = objective.n_nodes
    R = int(replications)
    sched = config.schedule
    k0 = sched.first_index
    kf = k0 + horizon
    bounds = config.effective_bounds(objective)
    variant = config.variant

    if record_ks is None:
        record_ks = default_record_ks(k0, horizon)
    ks = np.unique(np.asarray(record_ks, dtype=int))
    if ks.size and (ks[0] < k0 or ks[-1] > kf):
        raise ValueError(f"record indices must lie in [{k0}, {kf}]")
    pos = {int(k): j for j, k in enumerate(ks)}
    K = len(ks)

    actions = np.empty((K, R, n))
    succ = np.full((K, R, n), np.nan) if record_successors else None
    mean_u = np.full(K, np.nan)
    stderr_u = np.full(K, np.nan)
    ghat_sq = np.full(K, np.nan)
    perf_min, perf_max = np.inf, -np.inf

    a = objective.init_action(_stream(seed, -1, _INIT), (R,))
    t = 0.0
    amp = config.perturbation.amplitude

    logger.debug("run %s: n=%d R=%d horizon=%d seed=%d", variant, n, R, horizon, seed)

    for k in range(k0, kf):
        bundle = StreamBundle(seed, k)
        b, gm = sched.beta(k), sched.gamma(k)
        s = objective.sample_state(bundle.state, (R,))
        j = pos.get(k)
        if j is not None:
            actions[j] = a
            f_nom = objective.global_utility(a, s) / n
            mean_u[j] = f_nom.mean()
            stderr_u[j] = f_nom.std(ddof=1) / np.sqrt(R) if R > 1 else 0.0

        if variant == "exact_gradient_baseline":
            ghat = objective.exact_sample_gradient(a, s)
            new = a + b * ghat
            if bounds is not None:
                new = np.clip(new, bounds[0], bounds[1])
            perf_min = min(perf_min, float(a.min()))
            perf_max = max(perf_max, float(a.max()))
        else:
            if variant == "sine_baseline":
                if sched.index_offset == 0:
                    t += b
                    phi = _sine_phi(config, t, (R, n))
                else:
                    phi = _sine_phi(config, t, (R, n))
                    t += b
            else:
                phi = sample_array(config.perturbation, (R, n), bundle.phi)
            ahat = _perform(a, gm, phi, bounds)
            perf_min = min(perf_min, float(ahat.min()))
            perf_max = max(perf_max, float(ahat.max()))
            u = objective.observe(ahat, s, bundle.noise)
            if variant == "dosp_incomplete":
                mask = sample_masks(config.exchange, n, bundle.subset, (R,))
                ghat = phi * _subset_estimates(u, mask)
            else:
                ghat = phi * u.sum(axis=-1)[..., None]
            cand = a + b * ghat
            new = (
                _bounded_update(cand, k + 1, sched, amp, bounds)
                if bounds is not None
                else cand
            )

        if j is not None:
            ghat_sq[j] = float(np.mean(np.sum(ghat * ghat, axis=-1)))
            if record_successors:
                succ[j] = new
        a = new

    j = pos.get(kf)
    if j is not None:
        actions[j] = a
        s = objective.sample_state(_stream(seed, kf, _STATE), (R,))
        f_nom = objective.global_utility(a, s) / n
        mean_u[j] = f_nom.mean()
        stderr_u[j] = f_nom.std(ddof=1) / np.sqrt(R) if R > 1 else 0.0

    return RunTrace(
        ks=ks,
        actions=actions,
        mean_utility=mean_u,
        utility_stderr=stderr_u,
        ghat_sq=ghat_sq,
        performed_min=perf_min,
        performed_max=perf_max,
        variant=variant,
        seed=seed,
        replications=R,
        successor_actions=succ,
    )
