"""Incremental ELMVIS: grow the fitted set from a large pool of samples.

Positions ``0..N-1`` pair an input row (a row of V) with a data sample
(a row of X). The positions are split into three consecutive ranges::

    [0, i_A)      fixed       never moved by candidate swaps
    [i_A, i_B)    candidates  optimised against the pool
    [i_B, N)      available   the pool; ignored by the model

These are zero-based half-open ranges; the 1-based inclusive ``[i_A, i_B]``
and ``[i_B + 1, N]`` of the usual description map onto them directly.
Only the ``i_B x i_B`` block of the hat matrix is ever built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np

from .dataio import dumps_json
from .elm import DEFAULT_RCOND, ElmModel, hidden_layer, init_model, projection_matrix, \
    solve_output_weights
from .swap import AcceptanceTrace, SimilarityState, SwapOutcome, apply_row_update, \
    delta_row, elmvis_plus_run, greedy_scan, init_state, tie_tolerance

L_MIN = 4
L_MAX = 256


def default_neuron_schedule(i_B: int) -> int:
    """``ceil(i_B / 4)`` neurons, clamped to [4, 256]."""
    if i_B < 1:
        raise ValueError("i_B must be >= 1")
    return min(max(math.ceil(i_B / 4), L_MIN), L_MAX)


def fixed_neurons(n: int) -> Callable[[int], int]:
    if n < 1:
        raise ValueError("neuron count must be >= 1")
    return lambda i_B: n


def default_inner_stagnation(i_A: int, i_B: int) -> int:
    return max(500, 10 * (i_B - i_A))


@dataclass
class RunConfig:
    k: int = 8
    stagnation_inner: int | None = None  # None: default_inner_stagnation
    stagnation_refine: int | None = None  # None: swap.default_stagnation
    neuron_schedule: Callable[[int], int] = default_neuron_schedule
    refine_each_iteration: bool = False
    rcond: float = DEFAULT_RCOND
    seed: int = 0
    activation: str = "tanh"
    initial_pairs: Sequence[tuple[int, int]] | None = None
    max_samples: int | None = None  # stop once this many positions are fixed
    shuffle_inputs: bool = False  # admit input rows in a seeded random order

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("stagnation_inner", "stagnation_refine"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_samples is not None and self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")


@dataclass
class Partition:
    """Position bookkeeping.

    ``perm[p]`` is the data sample at position ``p``; ``vperm[p]`` is the
    input row at position ``p``. ``vperm`` starts as the identity (or a
    seeded shuffle); seeding pulls seeded input rows to the front.
    """

    perm: np.ndarray
    i_A: int = 0
    i_B: int = 0
    vperm: np.ndarray | None = None

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.int64)
        if self.vperm is None:
            self.vperm = np.arange(self.N, dtype=np.int64)
        if not 0 <= self.i_A <= self.i_B <= self.N:
            raise ValueError(f"need 0 <= i_A <= i_B <= N, got {self.i_A}, {self.i_B}, {self.N}")

    @classmethod
    def identity(cls, N: int) -> "Partition":
        return cls(np.arange(N, dtype=np.int64))

    @property
    def N(self) -> int:
        return self.perm.shape[0]

    def assignment(self) -> np.ndarray:
        """Data sample assigned to each input row, indexed by input row."""
        out = np.empty(self.N, dtype=np.int64)
        out[self.vperm] = self.perm
        return out


@dataclass
class FitResult:
    final_perm: np.ndarray  # sample index for each input row
    n_fixed: int
    S_history: list[tuple[int, float]]
    model: ElmModel
    beta: np.ndarray
    partition: Partition
    peak_projection_bytes: int = 0
    progress: list[dict] = field(default_factory=list)


def seed_fixed(partition: Partition, pairs: Sequence[tuple[int, int]]) -> None:
    """Pin known (input row, sample) pairs as the first fixed positions."""
    if partition.i_A != 0 or partition.i_B != 0:
        raise ValueError("seeding requires an untouched partition")
    pairs = [(int(v), int(x)) for v, x in pairs]
    if not pairs:
        return
    N = partition.N
    vs = [v for v, _ in pairs]
    xs = [x for _, x in pairs]
    for name, idx in (("input", vs), ("sample", xs)):
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate {name} index in seed pairs")
        bad = [i for i in idx if not 0 <= i < N]
        if bad:
            raise ValueError(f"{name} index {bad[0]} out of range [0, {N})")

    def front(order: np.ndarray, chosen: list[int]) -> np.ndarray:
        rest = np.setdiff1d(order, chosen, assume_unique=True)
        # keep the remaining entries in their existing relative order
        rest = order[np.isin(order, rest)]
        return np.concatenate([np.asarray(chosen, dtype=np.int64), rest])

    partition.vperm = front(partition.vperm, vs)
    partition.perm = front(partition.perm, xs)
    partition.i_A = partition.i_B = len(pairs)


def propose_candidate_swap(rng: np.random.Generator, partition: Partition) -> tuple[int, int]:
    """Uniform candidate position ``a`` and uniform available position ``b``."""
    if partition.i_A >= partition.i_B:
        raise RuntimeError("no candidate positions")
    if partition.i_B >= partition.N:
        raise RuntimeError("no available samples left in the pool")
    a, b = rng.integers([partition.i_A, partition.i_B], [partition.i_B, partition.N])
    return int(a), int(b)


@dataclass
class _Model:
    """The fitted in-model block: V/X rows of positions [0, i_B)."""

    elm: ElmModel
    X: np.ndarray
    state: SimilarityState


def candidate_step(state: SimilarityState, X_in: np.ndarray, X_pool: np.ndarray,
                   partition: Partition, rng: np.random.Generator,
                   proposal: tuple[int, int] | None = None) -> SwapOutcome:
    """Try replacing one candidate with one available sample.

    Only the in-model row changes the criterion; the displaced sample simply
    returns to the pool at position ``b``.
    """
    a, b = proposal if proposal is not None else propose_candidate_swap(rng, partition)
    delta = X_pool[partition.perm[b]] - X_in[a]
    gain = delta_row(state, a, delta)
    if gain > tie_tolerance(state):
        apply_row_update(state, X_in, a, delta, gain)
        X_in[a] = X_pool[partition.perm[b]]  # exact copy, no rounding from +=
        partition.perm[a], partition.perm[b] = partition.perm[b], partition.perm[a]
        return SwapOutcome(True, gain, (a, b))
    return SwapOutcome(False, gain, (a, b))


def _candidate_loop(state, X_in, X_pool, partition, rng, stagnation,
                    trace: AcceptanceTrace | None) -> int:
    i_A, i_B, N = partition.i_A, partition.i_B, partition.N
    perm = partition.perm
    diag = np.diag(state.A).copy()

    def draw(size):
        return rng.integers(i_A, i_B, size=size), rng.integers(i_B, N, size=size)

    def gains(I, J):
        delta = X_pool[perm[J]] - X_in[I]
        return diag[I] * np.einsum("ij,ij->i", delta, delta) \
            + 2.0 * np.einsum("ij,ij->i", state.Xhat[I], delta)

    def accept(a, b, gain):
        apply_row_update(state, X_in, a, X_pool[perm[b]] - X_in[a], gain)
        X_in[a] = X_pool[perm[b]]
        perm[a], perm[b] = perm[b], perm[a]
        if trace is not None:
            trace.record(a, b, gain, state.S)

    return greedy_scan(draw, gains, accept, stagnation, tie_tolerance(state))


class IncrementalElmvis:
    """Stateful driver behind :func:`run`.

    Exposes the partition, current model and a read-only ``snapshot`` so a
    caller can observe progress between promotions.
    """

    def __init__(self, V, X, config: RunConfig | None = None,
                 progress_sink: IO[str] | None = None,
                 trace: AcceptanceTrace | None = None):
        V = np.asarray(V, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if V.ndim != 2 or X.ndim != 2:
            raise ValueError("V and X must be 2-D matrices")
        if V.shape[0] != X.shape[0]:
            raise ValueError(f"row mismatch: V has {V.shape[0]} rows, X has {X.shape[0]}")
        if V.shape[0] == 0 or V.shape[1] == 0 or X.shape[1] == 0:
            raise ValueError("V and X must be non-empty")
        self.V = V
        self.X = X
        self.config = config or RunConfig()
        self.progress_sink = progress_sink
        self.trace = trace
        self.rng = np.random.default_rng(self.config.seed)
        self.partition = Partition.identity(V.shape[0])
        if self.config.shuffle_inputs:
            order = np.random.default_rng([self.config.seed, 0x5EED]).permutation(V.shape[0])
            self.partition.vperm = order.astype(np.int64)
        self.stop = V.shape[0] if self.config.max_samples is None \
            else min(self.config.max_samples, V.shape[0])
        self.iteration = 0
        self.redraws = 0
        self.model: _Model | None = None
        self.peak_projection_bytes = 0
        self.S_history: list[tuple[int, float]] = []
        self.records: list[dict] = []
        self._accepted = 0

    @property
    def snapshot(self) -> tuple[int, int, float]:
        S = self.model.state.S if self.model is not None else 0.0
        return self.partition.i_A, self.partition.i_B, S

    def _elm_for(self, n_neurons: int) -> ElmModel:
        if self.model is not None and self.model.elm.n_neurons == n_neurons:
            return self.model.elm
        self.redraws += 1
        ss = np.random.SeedSequence([self.config.seed, self.redraws])
        return init_model(self.V.shape[1], n_neurons, self.config.activation, ss)

    def rebuild(self) -> None:
        """Refit the model on positions [0, i_B)."""
        p = self.partition
        n_neurons = self.config.neuron_schedule(p.i_B)
        if self.model is not None and n_neurons < self.model.elm.n_neurons:
            raise ValueError("neuron schedule must be non-decreasing")
        elm = self._elm_for(n_neurons)
        H = hidden_layer(elm, self.V[p.vperm[:p.i_B]])
        A = projection_matrix(H, self.config.rcond)
        self.peak_projection_bytes = max(self.peak_projection_bytes, A.nbytes)
        X_in = self.X[p.perm[:p.i_B]]
        self.model = _Model(elm, X_in, init_state(A, X_in))

    def promote(self) -> None:
        """Freeze the candidates and admit up to k new ones from the pool."""
        p = self.partition
        p.i_A = p.i_B
        p.i_B = max(p.i_A, min(p.i_B + self.config.k, self.stop))
        if p.i_B > p.i_A:
            self.rebuild()

    def seed(self, pairs) -> None:
        seed_fixed(self.partition, pairs)

    def step(self) -> None:
        """One iteration: optimise candidates, optionally refine, promote."""
        p = self.partition
        m = self.model
        cfg = self.config
        accepted = 0
        if p.i_B < p.N:
            stagnation = cfg.stagnation_inner or default_inner_stagnation(p.i_A, p.i_B)
            accepted += _candidate_loop(m.state, m.X, self.X, p, self.rng, stagnation, self.trace)
        else:
            # pool exhausted: candidates can only trade places among themselves
            order = p.perm[:p.i_B]
            accepted += elmvis_plus_run(m.state, m.X, p.i_A, p.i_B, cfg.stagnation_refine,
                                        self.rng, order, self.trace)[0]
        S_candidates = m.state.S
        if cfg.refine_each_iteration:
            order = p.perm[:p.i_B]
            accepted += elmvis_plus_run(m.state, m.X, 0, p.i_B, cfg.stagnation_refine,
                                        self.rng, order, self.trace)[0]
        self._accepted += accepted
        self.S_history.append((p.i_B, m.state.S))
        record = {"iteration": self.iteration, "i_A": p.i_A, "i_B": p.i_B,
                  "L": m.elm.n_neurons, "S": m.state.S, "S_before_refine": S_candidates,
                  "accepted_swaps": accepted}
        self.records.append(record)
        if self.progress_sink is not None:
            self.progress_sink.write(dumps_json(record, indent=None) + "\n")
        self.iteration += 1
        self.promote()

    def fit(self) -> FitResult:
        p = self.partition
        if self.config.initial_pairs:
            if p.i_A == 0 and p.i_B == 0:
                self.seed(self.config.initial_pairs)
        if self.model is None:
            self.promote()
            if self.model is None:  # seeds already cover every position
                self.rebuild()
        while p.i_A < self.stop:
            self.step()
        return self.result()

    def result(self) -> FitResult:
        p = self.partition
        m = self.model
        H = hidden_layer(m.elm, self.V[p.vperm[:p.i_A]])
        beta = solve_output_weights(H, self.X[p.perm[:p.i_A]], self.config.rcond)
        return FitResult(final_perm=p.assignment(), n_fixed=p.i_A,
                         S_history=list(self.S_history), model=m.elm, beta=beta,
                         partition=p, peak_projection_bytes=self.peak_projection_bytes,
                         progress=list(self.records))


def run(V, X, config: RunConfig | None = None, progress_sink: IO[str] | None = None,
        trace: AcceptanceTrace | None = None) -> FitResult:
    """Assign every sample of X to a row of V by incremental growth."""
    return IncrementalElmvis(V, X, config, progress_sink, trace).fit()
