"""Brute-force oracles and experiment metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .elm import DEFAULT_RCOND, ElmModel, hidden_layer, init_model, projection_matrix
from .swap import apply_pair_swap, apply_row_update, delta_pair_swap, delta_row, init_state

MAX_PERMUTATION_CLASSES = 10
ABS_FLOOR = 1e-10


def oracle_similarity(model: ElmModel, V, X, rcond: float = DEFAULT_RCOND) -> float:
    """S recomputed from scratch: fresh least-squares fit, no cached state.

    Uses ``numpy.linalg.lstsq`` rather than the package's own pseudoinverse so
    that it stays an independent check on the incremental path.
    """
    V = np.asarray(V, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or V.shape[0] != X.shape[0]:
        raise ValueError(f"V and X row counts differ: {V.shape} vs {X.shape}")
    H = hidden_layer(model, V)
    beta = np.linalg.lstsq(H, X, rcond=rcond)[0]
    return float(np.sum((H @ beta) * X))


@dataclass(frozen=True)
class OracleReport:
    S_direct: float
    S_incremental: float

    @property
    def rel_error(self) -> float:
        return abs(self.S_direct - self.S_incremental) / max(abs(self.S_direct), 1e-10)


def delta_error(fast: float, oracle: float, floor: float = ABS_FLOOR) -> float:
    """Relative disagreement of a delta; differences within ``floor`` count as zero."""
    err = abs(fast - oracle)
    if err <= floor:
        return 0.0
    return err / max(abs(oracle), floor)


def oracle_resolution(H: np.ndarray, S: float, rcond: float = DEFAULT_RCOND) -> float:
    """Smallest difference of two refit S values the oracle can resolve.

    A refit in float64 carries error around eps * cond(H) * |S|, and an
    oracle delta is a difference of two such refits. ``cond`` counts only the
    singular values that survive the rank cut.
    """
    sv = np.linalg.svd(H, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return ABS_FLOOR
    kept = sv[sv > rcond * sv[0]]
    cond = kept[0] / kept[-1]
    return max(ABS_FLOOR, 4 * np.finfo(np.float64).eps * cond) * max(1.0, abs(S))


@dataclass
class TrialSummary:
    trials: int
    max_row_delta_error: float
    max_pair_delta_error: float
    max_state_error: float

    @property
    def max_error(self) -> float:
        return max(self.max_row_delta_error, self.max_pair_delta_error, self.max_state_error)


def oracle_trial(rng: np.random.Generator) -> tuple[float, float, float]:
    """One random instance: check a row delta and a pair-swap delta against
    full refits, then apply both and compare the running S with the oracle."""
    n = int(rng.integers(3, 31))
    L = int(rng.integers(1, 11))
    d = int(rng.integers(1, 7))
    # 1-D inputs with L near n give cond(H) beyond 1/rcond, where the rank
    # cut itself is ambiguous and no refit is accurate to the tolerance
    v = int(rng.integers(2, 5))
    activation = ("sigmoid", "tanh", "linear")[int(rng.integers(3))]
    model = init_model(v, L, activation, int(rng.integers(2**31)))
    V = rng.standard_normal((n, v))
    X = rng.standard_normal((n, d))
    H = hidden_layer(model, V)
    state = init_state(projection_matrix(H), X)
    S0 = oracle_similarity(model, V, X)

    a = int(rng.integers(n))
    delta = rng.standard_normal(d)
    X1 = X.copy()
    X1[a] += delta
    S1 = oracle_similarity(model, V, X1)
    row_err = delta_error(delta_row(state, a, delta), S1 - S0, oracle_resolution(H, S0))
    apply_row_update(state, X, a, delta)

    a, b = (int(i) for i in rng.choice(n, size=2, replace=False))
    X2 = X1.copy()
    X2[[a, b]] = X2[[b, a]]
    S2 = oracle_similarity(model, V, X2)
    pair_err = delta_error(delta_pair_swap(state, X, a, b), S2 - S1,
                           oracle_resolution(H, S1))
    apply_pair_swap(state, X, a, b)

    state_err = OracleReport(S2, state.S).rel_error
    return row_err, pair_err, state_err


def oracle_trials(n_trials: int, seed: int = 0) -> TrialSummary:
    if n_trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    errs = np.array([oracle_trial(rng) for _ in range(n_trials)])
    return TrialSummary(n_trials, *(float(e) for e in errs.max(axis=0)))


def confusion(true_labels, assigned_labels, k: int) -> np.ndarray:
    """``counts[i, j]``: samples of true class i assigned to class j."""
    t = np.asarray(true_labels, dtype=np.int64)
    a = np.asarray(assigned_labels, dtype=np.int64)
    if t.shape != a.shape:
        raise ValueError(f"label sequences differ in length: {t.size} vs {a.size}")
    for name, lab in (("true", t), ("assigned", a)):
        if lab.size and (lab.min() < 0 or lab.max() >= k):
            raise ValueError(f"{name} label outside [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, a), 1)
    return cm


def confusion_percent(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    sums = cm.sum(axis=1, keepdims=True)
    return 100.0 * np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)


def best_permutation_accuracy(cm) -> tuple[float, tuple[int, ...]]:
    """Exhaustive search for the class relabelling maximising the matched count.

    Returns ``(accuracy, perm)`` where true class ``i`` is matched with
    assigned class ``perm[i]``. The first maximiser in lexicographic order wins.
    """
    cm = np.asarray(cm)
    k = cm.shape[0]
    if cm.shape != (k, k):
        raise ValueError("confusion matrix must be square")
    if k > MAX_PERMUTATION_CLASSES:
        raise OverflowError(
            f"exhaustive matching over {k}! permutations is not supported; "
            f"reduce the number of classes to {MAX_PERMUTATION_CLASSES} or fewer")
    total = int(cm.sum())
    if k == 0:
        return 1.0, ()
    rows = np.arange(k)
    best_score, best_perm = -1, None
    perms = itertools.permutations(range(k))
    chunk = 40320
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(perms, chunk)),
                            dtype=np.int64)
        if block.size == 0:
            break
        block = block.reshape(-1, k)
        scores = cm[rows, block].sum(axis=1)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score, best_perm = int(scores[i]), tuple(int(p) for p in block[i])
    accuracy = best_score / total if total else 1.0
    return accuracy, best_perm


def _check_lengths(*seqs) -> None:
    if len({len(s) for s in seqs}) != 1:
        raise ValueError("length mismatch between permutations and labels")


def reconstruction_accuracy(final_perm, truth_perm, labels) -> float:
    """Fraction of positions holding a sample of the correct class."""
    final_perm = np.asarray(final_perm)
    truth_perm = np.asarray(truth_perm)
    labels = np.asarray(labels)
    _check_lengths(final_perm, truth_perm, labels)
    if final_perm.size == 0:
        return math.nan
    return float(np.mean(labels[final_perm] == labels[truth_perm]))


def exact_recovery(final_perm, truth_perm) -> float:
    """Fraction of positions holding exactly the ground-truth sample."""
    final_perm = np.asarray(final_perm)
    truth_perm = np.asarray(truth_perm)
    _check_lengths(final_perm, truth_perm)
    return float(np.mean(final_perm == truth_perm)) if final_perm.size else math.nan


def region_purity(regions, labels) -> np.ndarray:
    """For each region r, the share of its samples whose label is r."""
    regions = np.asarray(regions)
    labels = np.asarray(labels)
    k = int(max(regions.max(), labels.max())) + 1
    out = np.full(k, np.nan)
    for r in range(k):
        mask = regions == r
        if mask.any():
            out[r] = float(np.mean(labels[mask] == r))
    return out


def metrics_document(cm, S_history, **extra) -> dict:
    accuracy, perm = best_permutation_accuracy(cm)
    doc = {"confusion": np.asarray(cm).tolist(), "best_perm": list(perm),
           "accuracy": accuracy, "S_history": [[int(i), float(s)] for i, s in S_history]}
    doc.update(extra)
    return doc
