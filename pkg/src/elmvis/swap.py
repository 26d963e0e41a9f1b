"""Similarity criterion and its closed-form deltas under row changes.

The maximised quantity is ``S = trace(X.T @ A @ X)`` where ``A`` is the ELM
hat matrix and ``X`` holds the in-model data rows. ``Xhat = A @ X`` is kept
up to date with rank-one updates so that a single-row change costs O(d) to
score and O(n*d) to apply.

Sign convention: ``delta`` is always ``new_row - old_row`` and the returned
change is the gain in S. A move is accepted only when the gain exceeds
:func:`tie_tolerance`, a rounding-level threshold; exact and numerical ties
alike are rejected, so equivalent arrangements never cause shuffling.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np

RESYNC_EVERY = 4096
TIE_RTOL = 1e-12


@dataclass
class SimilarityState:
    A: np.ndarray
    Xhat: np.ndarray
    S: float
    updates_since_resync: int = 0

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.Xhat.shape[1]


@dataclass(frozen=True)
class SwapOutcome:
    accepted: bool
    delta: float
    swap: tuple[int, int]


class AcceptanceTrace:
    """Append-only CSV log of accepted moves: step, a, b, delta_S, S."""

    def __init__(self, stream: IO[str]):
        self._writer = csv.writer(stream, lineterminator="\n")
        self._writer.writerow(["step", "a", "b", "delta_S", "S"])
        self.step = 0

    def record(self, a: int, b: int, delta: float, S: float) -> None:
        self._writer.writerow([self.step, a, b, f"{delta:.17g}", f"{S:.17g}"])
        self.step += 1


def init_state(A, X) -> SimilarityState:
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if X.ndim != 2 or X.shape[0] != A.shape[0]:
        raise ValueError(f"X must have {A.shape[0]} rows, got shape {X.shape}")
    Xhat = A @ X
    return SimilarityState(A=A, Xhat=Xhat, S=float(np.vdot(Xhat, X)))


def resync(state: SimilarityState, X) -> None:
    """Recompute Xhat and S from A and X, discarding accumulated drift."""
    state.Xhat = state.A @ X
    state.S = float(np.vdot(state.Xhat, X))
    state.updates_since_resync = 0


def tie_tolerance(state: SimilarityState) -> float:
    """Gains at or below this are rounding noise and count as ties."""
    return TIE_RTOL * max(1.0, abs(state.S))


def _check_index(state: SimilarityState, i: int) -> None:
    if not 0 <= i < state.n:
        raise IndexError(f"row index {i} outside [0, {state.n})")


def delta_row(state: SimilarityState, a: int, delta) -> float:
    """Gain in S if row ``a`` of X moved by ``delta`` and the fit were redone."""
    _check_index(state, a)
    delta = np.asarray(delta, dtype=np.float64)
    return float(state.A[a, a] * np.dot(delta, delta) + 2.0 * np.dot(state.Xhat[a], delta))


def _bump(state: SimilarityState, X) -> None:
    state.updates_since_resync += 1
    if state.updates_since_resync >= RESYNC_EVERY:
        resync(state, X)


def apply_row_update(state: SimilarityState, X: np.ndarray, a: int, delta,
                     gain: float | None = None) -> None:
    """Move row ``a`` of X (in place) by ``delta`` and update Xhat and S.

    ``gain`` may carry an already computed :func:`delta_row` value.
    """
    if gain is None:
        gain = delta_row(state, a, delta)
    delta = np.asarray(delta, dtype=np.float64)
    state.Xhat += np.outer(state.A[:, a], delta)
    X[a] += delta
    state.S += gain
    _bump(state, X)


def delta_pair_swap(state: SimilarityState, X, a: int, b: int) -> float:
    """Gain in S from exchanging rows ``a`` and ``b`` of X."""
    _check_index(state, a)
    _check_index(state, b)
    if a == b:
        raise ValueError("cannot swap a row with itself")
    A = state.A
    delta = X[b] - X[a]
    curv = A[a, a] + A[b, b] - 2.0 * A[a, b]
    return float(curv * np.dot(delta, delta) + 2.0 * np.dot(state.Xhat[a] - state.Xhat[b], delta))


def apply_pair_swap(state: SimilarityState, X: np.ndarray, a: int, b: int,
                    gain: float | None = None) -> None:
    if gain is None:
        gain = delta_pair_swap(state, X, a, b)
    delta = X[b] - X[a]
    # two rank-one updates collapse into one: row a gains delta, row b loses it
    state.Xhat += np.outer(state.A[:, a] - state.A[:, b], delta)
    X[[a, b]] = X[[b, a]]
    state.S += gain
    _bump(state, X)


def default_stagnation(lo: int, hi: int) -> int:
    return max(1000, 20 * (hi - lo))


def greedy_scan(draw, gains, accept, stagnation: int, tol: float = 0.0) -> int:
    """Run proposals until ``stagnation`` consecutive ones are rejected.

    ``draw(size)`` returns index arrays of proposals, ``gains(I, J)`` scores a
    block of them against the current state, ``accept(i, j, gain)`` applies
    one. Blocks are scored vectorised; after an acceptance the scan resumes
    at the next proposal with fresh scores, so decisions match a one-by-one
    loop over the same proposal stream. Only gains above ``tol`` count.
    """
    accepted = 0
    misses = 0
    I = J = np.empty(0, dtype=np.int64)
    pos = 0
    chunk = 16
    while misses < stagnation:
        if pos >= I.size:
            I, J = draw(max(1024, min(stagnation, 65536)))
            pos = 0
        size = min(I.size - pos, chunk, stagnation - misses)
        g = gains(I[pos:pos + size], J[pos:pos + size])
        hits = np.flatnonzero(g > tol)
        if hits.size == 0:
            misses += size
            pos += size
            chunk = min(chunk * 2, 4096)
            continue
        t = int(hits[0])
        accept(int(I[pos + t]), int(J[pos + t]), float(g[t]))
        accepted += 1
        misses = 0
        pos += t + 1
        chunk = 16
    return accepted


def elmvis_plus_run(state: SimilarityState, X: np.ndarray, lo: int, hi: int,
                    stagnation: int | None = None,
                    rng: int | np.random.Generator = 0,
                    order: np.ndarray | None = None,
                    trace: AcceptanceTrace | None = None) -> tuple[int, float]:
    """Greedy pairwise-swap optimisation of rows ``lo..hi-1`` of X.

    Pairs are drawn uniformly; a swap is kept when it raises S. Stops after
    ``stagnation`` consecutive rejections. If ``order`` is given (an index
    array aligned with X rows) it is permuted along with X.

    Returns ``(swaps_accepted, S_final)``.
    """
    if not 0 <= lo < hi <= state.n:
        raise ValueError(f"invalid range [{lo}, {hi}) for {state.n} rows")
    if stagnation is None:
        stagnation = default_stagnation(lo, hi)
    if stagnation < 1:
        raise ValueError("stagnation must be >= 1")
    if hi - lo < 2:
        return 0, state.S
    rng = np.random.default_rng(rng)
    span = hi - lo
    A = state.A
    diag = np.diag(A).copy()

    def draw(size):
        first = rng.integers(0, span, size=size)
        # second index uniform over the other span-1 positions
        second = rng.integers(0, span - 1, size=size)
        second += second >= first
        return first + lo, second + lo

    def gains(I, J):
        delta = X[J] - X[I]
        curv = diag[I] + diag[J] - 2.0 * A[I, J]
        lin = np.einsum("ij,ij->i", state.Xhat[I] - state.Xhat[J], delta)
        return curv * np.einsum("ij,ij->i", delta, delta) + 2.0 * lin

    def accept(i, j, gain):
        apply_pair_swap(state, X, i, j, gain)
        if order is not None:
            order[i], order[j] = order[j], order[i]
        if trace is not None:
            trace.record(i, j, gain, state.S)

    return greedy_scan(draw, gains, accept, stagnation, tie_tolerance(state)), state.S
