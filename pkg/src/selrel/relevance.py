"""Selection relevance score: constrained reconstruction of probe gradients.

A selection's gradients form the columns of A; each probe gradient g is
approximated as A t under the scoring model's constraints, and the score is
the ratio of summed squared probe norms to summed squared residuals,
reported in decibels. 0 dB marks parity with the trivial zero
reconstruction; higher is better.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._checks import check_matrix, check_vector
from .gradstore import ProbeSet
from .errors import ConvergenceError, EmptySelectionError

VARIANTS = ("unconstrained_ls", "nnls_l2", "projected_simplex")


@dataclass(frozen=True)
class ScoringModelSpec:
    """Which reconstruction constraints to apply and the numeric guards.

    ridge_jitter is a fraction of trace(A^T A)/k added to the normal-equation
    diagonal (collinear selections are routine); ridge_weight is the absolute
    L2 weight of the nnls_l2 variant; error_floor is the minimum residual as
    a fraction of ||g||^2; db_cap bounds the reported decibels from above.
    """

    variant: str = "projected_simplex"
    ridge_jitter: float = 1e-8
    ridge_weight: float = 1e-6
    error_floor: float = 1e-12
    db_cap: float = 120.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected {VARIANTS}")
        if not self.ridge_jitter > 0:
            raise ValueError("ridge_jitter must be positive")
        if self.ridge_weight < 0:
            raise ValueError("ridge_weight must be non-negative")
        if not 0.0 < self.error_floor < 1.0:
            raise ValueError("error_floor must lie in (0, 1)")
        if not math.isfinite(self.db_cap):
            raise ValueError("db_cap must be finite")


@dataclass(frozen=True)
class ReconstructionResult:
    """Coefficients t with the raw squared residual and probe norm."""

    t: np.ndarray
    residual_sq: float
    g_norm_sq: float


@dataclass(frozen=True)
class RelevanceScore:
    """The ratio of probe energy to reconstruction error, with dB rendering."""

    ratio: float
    decibels: float
    probe_count: int
    variant: str

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError(f"ratio must be positive, got {self.ratio}")


def format_db(decibels: float) -> str:
    """Two-decimal rendering used in report tables, e.g. '-22.87 dB'."""
    return f"{decibels:.2f} dB"


def least_squares_solve(A, g, ridge_jitter: float = 0.0) -> np.ndarray:
    """Minimize ||g - A t||^2 + ridge_jitter * ||t||^2 via normal equations.

    With zero jitter a rank-deficient system falls back to the pseudoinverse
    solution.
    """
    A = check_matrix("A", A)
    g = check_vector("g", g)
    if A.shape[0] != g.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but g has {g.shape[0]} entries")
    if ridge_jitter < 0:
        raise ValueError("ridge_jitter must be non-negative")
    k = A.shape[1]
    gram = A.T @ A + ridge_jitter * np.eye(k)
    rhs = A.T @ g
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} by sorted thresholding."""
    v = check_vector("v", v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.shape[0] + 1)
    valid = u - (css - 1.0) / j > 0.0
    rho = int(np.nonzero(valid)[0][-1])
    tau = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - tau, 0.0)


def nnls_solve(
    A, g, ridge_weight: float = 0.0, max_iter: int | None = None
) -> np.ndarray:
    """Non-negative minimizer of ||g - A t||^2 + ridge_weight * ||t||^2.

    Lawson-Hanson active-set iteration on the ridge-augmented system; the
    passive-set coefficients solve their least-squares subproblem exactly, so
    the KKT conditions hold to solver precision at exit. Exceeding the
    iteration cap raises ConvergenceError reporting the final KKT violation.
    """
    A = check_matrix("A", A)
    g = check_vector("g", g)
    if A.shape[0] != g.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but g has {g.shape[0]} entries")
    if ridge_weight < 0:
        raise ValueError("ridge_weight must be non-negative")
    k = A.shape[1]
    if ridge_weight > 0:
        A_aug = np.vstack([A, np.sqrt(ridge_weight) * np.eye(k)])
        g_aug = np.concatenate([g, np.zeros(k)])
    else:
        A_aug, g_aug = A, g
    if max_iter is None:
        max_iter = 30 * k + 30
    t = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    scale = 1.0 + float(np.abs(A_aug.T @ g_aug).max(initial=0.0))
    tol = 1e-10 * scale
    for _ in range(max_iter):
        grad = A_aug.T @ (g_aug - A_aug @ t)
        grad_free = np.where(passive, -np.inf, grad)
        if passive.all() or grad_free.max() <= tol:
            return t
        passive[int(np.argmax(grad_free))] = True
        while True:
            z = np.zeros(k)
            cols = np.nonzero(passive)[0]
            z[cols] = np.linalg.lstsq(A_aug[:, cols], g_aug, rcond=None)[0]
            if z[cols].min() > 0.0:
                t = z
                break
            shrink = cols[z[cols] <= 0.0]
            gap = t[shrink] - z[shrink]
            ratios = np.where(gap > 0.0, t[shrink] / np.where(gap > 0.0, gap, 1.0), 0.0)
            alpha = float(ratios.min())
            t = t + alpha * (z - t)
            leave = shrink[ratios <= alpha * (1.0 + 1e-12)]
            passive[leave] = False
            t[leave] = 0.0
            t[~passive] = 0.0
    grad = A_aug.T @ (g_aug - A_aug @ t)
    violation = max(
        float(np.abs(grad[passive]).max(initial=0.0)),
        float(np.maximum(grad[~passive], 0.0).max(initial=0.0)),
    )
    raise ConvergenceError(
        f"nnls did not converge in {max_iter} iterations; KKT violation {violation:g}"
    )


def reconstruct(A, g, model: ScoringModelSpec) -> ReconstructionResult:
    """Fit coefficients for one probe under the model's constraints.

    projected_simplex solves unconstrained least squares, projects onto the
    unit simplex, and recomputes the residual at the projected point. The
    stored residual is raw; flooring happens at ratio time.
    """
    A = check_matrix("A", A)
    g = check_vector("g", g)
    if A.shape[1] == 0:
        raise EmptySelectionError("cannot reconstruct from an empty selection")
    if A.shape[0] != g.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but g has {g.shape[0]} entries")
    k = A.shape[1]
    trace = float(np.einsum("ij,ij->", A, A))
    jitter = model.ridge_jitter * (trace / k if trace > 0.0 else 1.0)
    if model.variant == "unconstrained_ls":
        t = least_squares_solve(A, g, jitter)
    elif model.variant == "nnls_l2":
        t = nnls_solve(A, g, model.ridge_weight)
    else:
        t = project_to_simplex(least_squares_solve(A, g, jitter))
    diff = g - A @ t
    return ReconstructionResult(
        t=t,
        residual_sq=float(diff @ diff),
        g_norm_sq=float(g @ g),
    )


def selection_relevance(A, probes: ProbeSet, model: ScoringModelSpec) -> RelevanceScore:
    """Ratio of summed probe energy to summed (floored) residual energy.

    Per-probe coefficients are optimized individually; sums accumulate in
    64-bit. Decibels are 10*log10(ratio), capped at model.db_cap.
    """
    A = check_matrix("A", A)
    num = 0.0
    den = 0.0
    for probe in probes.probes:
        rec = reconstruct(A, probe, model)
        num += rec.g_norm_sq
        den += max(rec.residual_sq, model.error_floor * rec.g_norm_sq)
    if num == 0.0:
        raise ValueError("all probe gradients are zero")
    ratio = num / den
    return RelevanceScore(
        ratio=ratio,
        decibels=min(10.0 * math.log10(ratio), model.db_cap),
        probe_count=probes.probes.shape[0],
        variant=model.variant,
    )
