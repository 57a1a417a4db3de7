"""Budgeted selection strategies over an influence ranking.

A SelectionMode turns signed influence scores into utilities (higher =
preferred); selectors then pick k training ids: naive top-k, uniform random,
cost-weighted facility location over a candidate pool, DIVINE (utility plus a
gamma-swept diversity term), and AIDE (weighted influence/proximity plus
diversity). Ties always break by ascending id.
"""

from dataclasses import dataclass

import numpy as np

from .estimators import InfluenceRanking
from .gradstore import GradientMatrix
from .errors import BudgetError, ContractError

MODES = ("most_helpful", "most_harmful", "most_influential", "least_influential")

DIVINE_GAMMA_GRID = np.logspace(-4.0, 5.0, 20)
AIDE_ALPHA = 0.2
AIDE_BETA = 0.8
AIDE_GAMMA = 0.5


@dataclass(eq=False)
class Selection:
    """An ordered set of at most k training ids plus its provenance."""

    test_id: str
    strategy: str
    k: int
    member_ids: list[str]
    params: dict

    def __post_init__(self):
        self.member_ids = [str(i) for i in self.member_ids]
        if len(self.member_ids) != self.k:
            raise ValueError(
                f"selection holds {len(self.member_ids)} members for budget {self.k}"
            )
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError("selection members must be unique")
        lam = self.params.get("lambda")
        if lam is not None and not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} outside [0, 1]")


@dataclass(eq=False)
class CostVector:
    """Per-candidate selection costs in [1, m], min-max rescaled utilities."""

    costs: dict[str, float]
    m: float
    mode: str


def mode_transform(ranking: InfluenceRanking, mode: str) -> dict[str, float]:
    """Utilities under a selection mode; higher utility = preferred.

    most_helpful: u = -s; most_harmful: u = s; most_influential: u = |s|;
    least_influential: u = -|s|.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    s = ranking.scores
    if mode == "most_helpful":
        return {i: -v for i, v in s.items()}
    if mode == "most_harmful":
        return dict(s)
    if mode == "most_influential":
        return {i: abs(v) for i, v in s.items()}
    return {i: -abs(v) for i, v in s.items()}


def _top_ids(utilities: dict[str, float], k: int) -> list[str]:
    return sorted(utilities, key=lambda i: (-utilities[i], i))[:k]


def select_naive(ranking: InfluenceRanking, k: int, mode: str) -> Selection:
    """The k ids with highest mode utility, ordered by descending utility."""
    n = len(ranking.scores)
    if k > n:
        raise BudgetError(f"budget {k} exceeds training set size {n}")
    if k < 1:
        raise BudgetError(f"budget must be at least 1, got {k}")
    utilities = mode_transform(ranking, mode)
    return Selection(
        test_id=ranking.test_id,
        strategy=f"naive({mode})",
        k=k,
        member_ids=_top_ids(utilities, k),
        params={"mode": mode},
    )


def select_random(
    training_ids, k: int, seed: int, replicate: int, test_id: str = "test"
) -> Selection:
    """Uniform sample without replacement, deterministic in (seed, replicate)."""
    ids = sorted(str(i) for i in training_ids)
    if k > len(ids):
        raise BudgetError(f"budget {k} exceeds training set size {len(ids)}")
    if k < 1:
        raise BudgetError(f"budget must be at least 1, got {k}")
    if seed < 0 or replicate < 0:
        raise ValueError("seed and replicate must be non-negative")
    rng = np.random.default_rng([seed, replicate])
    members = [ids[j] for j in rng.choice(len(ids), size=k, replace=False)]
    return Selection(
        test_id=test_id,
        strategy=f"random({seed},{replicate})",
        k=k,
        member_ids=members,
        params={"seed": seed, "replicate": replicate},
    )


def candidate_pool(ranking: InfluenceRanking, mode: str, pool_size: int) -> list[str]:
    """Top pool_size ids by mode utility (the ground set for greedy selectors)."""
    if pool_size < 1:
        raise ValueError("pool_size must be at least 1")
    utilities = mode_transform(ranking, mode)
    return _top_ids(utilities, min(pool_size, len(utilities)))


def influence_to_costs(
    ranking: InfluenceRanking, mode: str, m: float, candidate_pool
) -> CostVector:
    """cost_j = 1 + (m-1) * (u_max - u_j) / (u_max - u_min) over the pool.

    Higher utility means lower cost; all-equal utilities give all costs 1.
    """
    if not m > 1:
        raise ValueError(f"cost ceiling m must exceed 1, got {m}")
    pool = [str(i) for i in candidate_pool]
    if not pool:
        raise ValueError("candidate pool is empty")
    utilities = mode_transform(ranking, mode)
    u = np.array([utilities[i] for i in pool], dtype=np.float64)
    spread = float(u.max() - u.min())
    if spread == 0.0:
        costs = {i: 1.0 for i in pool}
    else:
        scaled = 1.0 + (m - 1.0) * (u.max() - u) / spread
        costs = {i: float(c) for i, c in zip(pool, scaled)}
    return CostVector(costs=costs, m=m, mode=mode)


def candidate_similarity(
    matrix: GradientMatrix, candidate_ids, shift: bool = True
) -> np.ndarray:
    """Pairwise cosine similarity of the candidates' normalized gradients.

    With shift=True the values are mapped to [0, 1] via (1 + cos) / 2, which
    keeps the facility-location objective non-negative.
    """
    if not matrix.normalized:
        raise ContractError("similarity requires a normalized gradient matrix")
    rows = matrix.subset(candidate_ids).rows.astype(np.float64)
    sim = rows @ rows.T
    np.clip(sim, -1.0, 1.0, out=sim)
    sim = (sim + sim.T) / 2.0
    if shift:
        sim = (1.0 + sim) / 2.0
    return sim


def _check_sim(sim: np.ndarray, n: int) -> np.ndarray:
    sim = np.asarray(sim, dtype=np.float64)
    if sim.shape != (n, n):
        raise ValueError(f"similarity must be {n}x{n}, got {sim.shape}")
    if not np.allclose(sim, sim.T, atol=1e-9, rtol=0.0):
        raise ContractError("similarity matrix is not symmetric")
    if sim.min() < -1.0 - 1e-9 or sim.max() > 1.0 + 1e-9:
        raise ContractError("similarity entries must lie in [-1, 1]")
    return sim


def _pick(order_ids, scores, available) -> int:
    """Index of the best-scoring available candidate, ties by ascending id."""
    best = None
    for j in available:
        if best is None or scores[j] > scores[best] or (
            scores[j] == scores[best] and order_ids[j] < order_ids[best]
        ):
            best = j
    return best


def facility_location_select(
    candidates, sim, costs: CostVector, lam: float, k: int, test_id: str = "test"
) -> Selection:
    """Greedy facility location with cost-discounted gains.

    Coverage is F(S) = sum_i max(0, max_{j in S} sim_ij) over the candidate
    pool (zero-similarity baseline), and the greedy gain of j given S is
    (delta(j|S) + 1)^lam / cost_j^(1-lam). lam=0 reproduces the naive
    ranking through the costs; lam=1 ignores costs entirely.
    """
    pool = [str(i) for i in candidates]
    n = len(pool)
    if k > n:
        raise BudgetError(f"budget {k} exceeds candidate pool size {n}")
    if k < 1:
        raise BudgetError(f"budget must be at least 1, got {k}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    sim = _check_sim(sim, n)
    missing = [i for i in pool if i not in costs.costs]
    if missing:
        raise ValueError(f"costs missing for candidates {missing}")
    cost = np.array([costs.costs[i] for i in pool], dtype=np.float64)
    best_cover = np.zeros(n, dtype=np.float64)
    available = set(range(n))
    members = []
    for _ in range(k):
        delta = np.maximum(sim - best_cover[:, None], 0.0).sum(axis=0)
        gains = (delta + 1.0) ** lam / cost ** (1.0 - lam)
        j = _pick(pool, gains, available)
        members.append(pool[j])
        available.discard(j)
        best_cover = np.maximum(best_cover, sim[:, j])
    return Selection(
        test_id=test_id,
        strategy=f"facility_location({costs.mode},lambda={lam:g})",
        k=k,
        member_ids=members,
        params={
            "mode": costs.mode,
            "lambda": float(lam),
            "m": costs.m,
            "pool": n,
        },
    )


def divine_select(
    candidates, ranking: InfluenceRanking, mode: str, sim, k: int
) -> Selection:
    """Greedy maximization of sum-utility plus gamma times pairwise diversity.

    Sweeps 20 gamma values log-spaced in [1e-4, 1e5]; the winning selection
    maximizes the mean pairwise cosine distance (ties go to the smaller
    gamma). k=1 falls back to the naive top-1 (pairwise distance is undefined
    for singletons).
    """
    pool = [str(i) for i in candidates]
    n = len(pool)
    if k > n:
        raise BudgetError(f"budget {k} exceeds candidate pool size {n}")
    if k < 1:
        raise BudgetError(f"budget must be at least 1, got {k}")
    if k == 1:
        fallback = select_naive(ranking, 1, mode)
        return Selection(
            test_id=ranking.test_id,
            strategy=f"divine({mode})",
            k=1,
            member_ids=fallback.member_ids,
            params={"mode": mode, "gamma": None, "pool": n, "fallback": "select_naive"},
        )
    sim = _check_sim(sim, n)
    utilities = mode_transform(ranking, mode)
    u = np.array([utilities[i] for i in pool], dtype=np.float64)
    dist = 1.0 - sim
    best_members = None
    best_spread = -np.inf
    best_gamma = None
    for gamma in DIVINE_GAMMA_GRID:
        available = set(range(n))
        picked = []
        div = np.zeros(n, dtype=np.float64)
        for _ in range(k):
            j = _pick(pool, u + gamma * div, available)
            picked.append(j)
            available.discard(j)
            div += dist[:, j]
        pairs = [(a, b) for ai, a in enumerate(picked) for b in picked[ai + 1 :]]
        spread = float(np.mean([dist[a, b] for a, b in pairs]))
        if spread > best_spread:
            best_spread = spread
            best_members = [pool[j] for j in picked]
            best_gamma = float(gamma)
    return Selection(
        test_id=ranking.test_id,
        strategy=f"divine({mode})",
        k=k,
        member_ids=best_members,
        params={"mode": mode, "gamma": best_gamma, "pool": n},
    )


def aide_select(
    candidates,
    ranking: InfluenceRanking,
    test_gradient,
    sim,
    k: int,
    candidate_gradients,
) -> Selection:
    """Greedy AIDE objective: 0.2*|I| + 0.8*P per member plus 0.5*diversity.

    |I| is the absolute influence score min-max normalized to [0, 1] over the
    pool (all-equal scores contribute 0); P is the cosine similarity between
    the candidate's and the test instance's normalized gradients; diversity
    is the sum of pairwise cosine distances.
    """
    pool = [str(i) for i in candidates]
    n = len(pool)
    if k > n:
        raise BudgetError(f"budget {k} exceeds candidate pool size {n}")
    if k < 1:
        raise BudgetError(f"budget must be at least 1, got {k}")
    sim = _check_sim(sim, n)
    g = np.asarray(test_gradient, dtype=np.float64)
    if abs(float(np.linalg.norm(g)) - 1.0) > 1e-6:
        raise ContractError("test gradient must be normalized")
    grads = np.asarray(candidate_gradients, dtype=np.float64)
    if grads.shape != (n, g.shape[0]):
        raise ValueError(
            f"candidate gradients must be {n}x{g.shape[0]}, got {grads.shape}"
        )
    row_norms = np.linalg.norm(grads, axis=1)
    if np.any(np.abs(row_norms - 1.0) > 1e-6):
        raise ContractError("candidate gradients must be normalized")
    influence = np.array([abs(ranking.scores[i]) for i in pool], dtype=np.float64)
    spread = float(influence.max() - influence.min())
    inorm = (influence - influence.min()) / spread if spread else np.zeros(n)
    proximity = grads @ g
    util = AIDE_ALPHA * inorm + AIDE_BETA * proximity
    available = set(range(n))
    members = []
    div = np.zeros(n, dtype=np.float64)
    dist = 1.0 - sim
    for _ in range(k):
        j = _pick(pool, util + AIDE_GAMMA * div, available)
        members.append(pool[j])
        available.discard(j)
        div += dist[:, j]
    return Selection(
        test_id=ranking.test_id,
        strategy="aide",
        k=k,
        member_ids=members,
        params={"alpha": AIDE_ALPHA, "beta": AIDE_BETA, "gamma": AIDE_GAMMA, "pool": n},
    )
