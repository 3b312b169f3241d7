"""Sampling plans, with-replacement draws, preconditioners, and noise bounds.

A plan fixes per-row probabilities p and the preconditioner diagonal
d_i = (n p_i)^(-1/2). A draw gathers m rows i.i.d. from p, scaled by
sqrt(n/m), and orders them so the gathered preconditioner entries are
non-increasing. The gathered diagonal (d_omega, sorted) carries no sqrt(n/m)
factor; the scale lives in the sampling matrix applied to vectors. That
convention makes the preconditioned measurement matrix equal the plain
sampling matrix applied to the preconditioned transform, and keeps the chain
noise_factor <= max(gathered d) <= max(d) valid in the compressed regime.
"""

from __future__ import annotations

import math

import numpy as np

from .coherence import CoherenceVector
from .transforms import UnitaryOperator

__all__ = [
    "SamplingPlan",
    "DrawnSample",
    "uniform_plan",
    "make_plan",
    "optimized_probabilities",
    "complexity_mu",
    "draw_sample",
    "unit_truncation",
    "noise_factor",
    "noise_factor_bounds",
    "sample_complexity",
    "apply_measurement",
    "save_plan_csv",
    "load_plan_csv",
    "save_sample_csv",
    "load_sample_csv",
]

_SIMPLEX_TOL = 1e-12


def _as_alpha(alpha) -> np.ndarray:
    if isinstance(alpha, CoherenceVector):
        return alpha.alpha
    return np.asarray(alpha, dtype=np.float64)


class SamplingPlan:
    """Row probabilities p with the matching preconditioner diagonal d.

    Excluded rows carry p_i = 0 and d_i = 0 and are never drawn; on the
    support d_i * sqrt(n * p_i) = 1.
    """

    def __init__(self, p: np.ndarray, d: np.ndarray, alpha_ref: CoherenceVector | None = None):
        p = np.asarray(p, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        if p.ndim != 1 or p.shape != d.shape:
            raise ValueError("p and d must be vectors of equal length")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1 within 1e-12")
        n = p.size
        support = p > 0
        if not np.all(np.abs(d[support] * np.sqrt(n * p[support]) - 1.0) <= _SIMPLEX_TOL):
            raise ValueError("d_i * sqrt(n p_i) != 1 on the support")
        if np.any(d[~support] != 0.0):
            raise ValueError("excluded rows must carry d_i = 0")
        p = p.copy()
        d = d.copy()
        p.setflags(write=False)
        d.setflags(write=False)
        self.p = p
        self.d = d
        self.n = n
        self.support = support
        self.alpha_ref = alpha_ref

    def __repr__(self) -> str:
        excluded = int(np.sum(~self.support))
        return f"<SamplingPlan n={self.n} excluded={excluded}>"


class DrawnSample:
    """A with-replacement draw omega with its sorting permutation.

    ``order`` sorts draws so the gathered preconditioner entries ``d_tilde``
    are non-increasing (stable in draw position on ties); ``scale`` is the
    sqrt(n/m) row normalization of the sampling matrix.
    """

    def __init__(self, omega: np.ndarray, order: np.ndarray, scale: float, d_tilde: np.ndarray):
        omega = np.asarray(omega, dtype=np.int64)
        order = np.asarray(order, dtype=np.int64)
        d_tilde = np.asarray(d_tilde, dtype=np.float64)
        if omega.ndim != 1 or omega.shape != order.shape or omega.shape != d_tilde.shape:
            raise ValueError("omega, order, d_tilde must be vectors of equal length")
        if np.any(np.diff(d_tilde) > 0):
            raise ValueError("d_tilde must be non-increasing")
        for a in (omega, order, d_tilde):
            a.setflags(write=False)
        self.omega = omega
        self.order = order
        self.d_tilde = d_tilde
        self.m = omega.size
        self.scale = float(scale)

    @property
    def omega_sorted(self) -> np.ndarray:
        return self.omega[self.order]

    def __repr__(self) -> str:
        return f"<DrawnSample m={self.m} scale={self.scale:.6g}>"


def uniform_plan(n: int) -> SamplingPlan:
    """Flat probabilities 1/n with identity preconditioner."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    return SamplingPlan(np.full(n, 1.0 / n), np.ones(n))


def make_plan(p: np.ndarray, alpha_ref: CoherenceVector | None = None) -> SamplingPlan:
    """Plan from arbitrary simplex probabilities; d computed on the support."""
    p = np.asarray(p, dtype=np.float64)
    d = np.zeros_like(p)
    support = p > 0
    d[support] = 1.0 / np.sqrt(p.size * p[support])
    return SamplingPlan(p, d, alpha_ref)


def optimized_probabilities(alpha) -> SamplingPlan:
    """Coherence-proportional plan p_i = alpha_i^2 / ||alpha||^2."""
    vec = _as_alpha(alpha)
    total = np.sum(vec**2)
    if total <= 0:
        raise ValueError("coherence vector is identically zero")
    p = vec**2 / total
    p = p / p.sum()  # renormalize away float drift
    ref = alpha if isinstance(alpha, CoherenceVector) else CoherenceVector(vec, "exact")
    return make_plan(p, ref)


def complexity_mu(alpha, p) -> float:
    """Sampling complexity max_j alpha_j / sqrt(p_j) over the support of alpha."""
    vec = _as_alpha(alpha)
    probs = p.p if isinstance(p, SamplingPlan) else np.asarray(p, dtype=np.float64)
    if vec.shape != probs.shape:
        raise ValueError("alpha and p must have equal length")
    active = vec > 0
    if np.any(probs[active] <= 0):
        raise ValueError("alpha_j > 0 with p_j = 0: complexity is infinite")
    if not np.any(active):
        return 0.0
    return float(np.max(vec[active] / np.sqrt(probs[active])))


def draw_sample(plan: SamplingPlan, m: int, rng_seed) -> DrawnSample:
    """Draw m i.i.d. row indices by inverse CDF on a counter-based stream."""
    m = int(m)
    if m < 1:
        raise ValueError("m must be at least 1")
    if isinstance(rng_seed, np.random.Generator):
        rng = rng_seed
    else:
        rng = np.random.Generator(np.random.Philox(rng_seed))
    cum = np.cumsum(plan.p)
    cum[-1] = 1.0  # close the table exactly; u < 1 always lands
    omega = np.searchsorted(cum, rng.random(m), side="right")
    gathered = plan.d[omega]
    order = np.argsort(-gathered, kind="stable")
    return DrawnSample(omega, order, math.sqrt(plan.n / m), gathered[order])


def _truncation_index(v: np.ndarray) -> int:
    """0-based index I-1 of the adjusted entry; error if ||v|| < 1."""
    c = np.cumsum(v**2)
    if c[-1] < 1.0 - 1e-12:
        raise ValueError(f"cannot unit-truncate: ||v||^2 = {c[-1]!r} < 1")
    idx = int(np.searchsorted(c, 1.0, side="left"))
    return min(idx, v.size - 1)


def unit_truncation(v: np.ndarray) -> np.ndarray:
    """Truncate a nonnegative vector to unit norm at its defining index.

    Entries are copied while the cumulative norm stays below 1; the next entry
    is adjusted so the output norm is exactly 1 and the rest are zeroed.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a nonempty vector")
    if np.any(v < 0):
        raise ValueError("unit truncation is defined for nonnegative vectors")
    idx = _truncation_index(v)
    out = np.zeros_like(v)
    out[:idx] = v[:idx]
    head = np.sum(v[:idx] ** 2)
    out[idx] = np.sqrt(max(1.0 - head, 0.0))
    return out


def _sorted_gathers(plan: SamplingPlan, sample: DrawnSample, alpha) -> tuple[np.ndarray, np.ndarray]:
    vec = _as_alpha(alpha)
    if vec.size != plan.n:
        raise ValueError("alpha length does not match the plan")
    return sample.d_tilde, vec[sample.omega_sorted]


def noise_factor(plan: SamplingPlan, sample: DrawnSample, alpha) -> float:
    """||D~ T(S D alpha)||_2 with rows sorted so the gathered d is non-increasing."""
    d_tilde, alpha_sorted = _sorted_gathers(plan, sample, alpha)
    truncated = unit_truncation(sample.scale * d_tilde * alpha_sorted)
    return float(np.linalg.norm(d_tilde * truncated))


def noise_factor_bounds(plan: SamplingPlan, sample: DrawnSample, alpha, t: float) -> dict:
    """The paper's upper bounds on the noise factor, for runs and property tests.

    max_Sd and max_d bound every draw; truncated_SD2alpha_norm restricts
    S D^2 alpha to the truncation window; optimized_closed_bound(t) holds with
    probability at least 1 - t under optimized sampling.
    """
    d_tilde, alpha_sorted = _sorted_gathers(plan, sample, alpha)
    sd_alpha = sample.scale * d_tilde * alpha_sorted
    idx = _truncation_index(sd_alpha)
    truncated_norm = float(np.linalg.norm(sample.scale * d_tilde[: idx + 1] ** 2 * alpha_sorted[: idx + 1]))
    vec = _as_alpha(alpha)
    active = vec > 0
    closed = float(
        np.linalg.norm(vec)
        * min(1.0 / math.sqrt(t), 1.0 / (math.sqrt(plan.n) * np.min(vec[active])))
    )
    return {
        "max_Sd": float(d_tilde[0]),
        "max_d": float(np.max(plan.d)),
        "truncated_SD2alpha_norm": truncated_norm,
        "optimized_closed_bound": closed,
    }


def sample_complexity(mu: float, ell: int, log_M: float, delta: float, C: float) -> int:
    """m = ceil(C * mu^2 * (log ell + log M + log(1/delta))), at least 1."""
    if mu < 0 or ell < 1 or log_M < 0 or not 0 < delta <= 1 or C <= 0:
        raise ValueError("invalid sample-complexity inputs")
    raw = C * mu**2 * (math.log(ell) + log_M + math.log(1.0 / delta))
    return max(1, math.ceil(raw))


def apply_measurement(
    F: UnitaryOperator, sample: DrawnSample, x: np.ndarray, preconditioned: bool = False
) -> np.ndarray:
    """Measure x: one full transform, then a scaled sorted-row gather.

    Entry i is sqrt(n/m) * (Fx)_{omega_i} in the non-increasing-d row order,
    additionally multiplied by d_{omega_i} when ``preconditioned``.
    """
    fx = F.forward(x)
    rows = fx[sample.omega_sorted]
    if preconditioned:
        weights = sample.d_tilde if rows.ndim == 1 else sample.d_tilde[:, None]
        rows = rows * weights
    return sample.scale * rows


def save_plan_csv(plan: SamplingPlan, path) -> None:
    lines = ["index,p,d"]
    lines += [f"{j},{plan.p[j]:.17g},{plan.d[j]:.17g}" for j in range(plan.n)]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_plan_csv(path, alpha_ref: CoherenceVector | None = None) -> SamplingPlan:
    with open(path, newline="") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != "index,p,d":
        raise ValueError("malformed plan CSV header")
    p = np.zeros(len(lines) - 1)
    d = np.zeros(len(lines) - 1)
    for row, line in enumerate(lines[1:]):
        idx, pv, dv = line.split(",")
        if int(idx) != row:
            raise ValueError(f"row {row} has index {idx}")
        p[row], d[row] = float(pv), float(dv)
    return SamplingPlan(p, d, alpha_ref)


def save_sample_csv(sample: DrawnSample, path) -> None:
    """Store the draw in original draw order; the sort is recomputed on load."""
    lines = ["position,omega"]
    lines += [f"{i},{sample.omega[i]}" for i in range(sample.m)]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sample_csv(path, plan: SamplingPlan) -> DrawnSample:
    with open(path, newline="") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != "position,omega":
        raise ValueError("malformed sample CSV header")
    omega = np.zeros(len(lines) - 1, dtype=np.int64)
    for row, line in enumerate(lines[1:]):
        pos, idx = line.split(",")
        if int(pos) != row:
            raise ValueError(f"row {row} has position {pos}")
        omega[row] = int(idx)
    if np.any(omega < 0) or np.any(omega >= plan.n):
        raise ValueError("omega indices outside the plan")
    gathered = plan.d[omega]
    order = np.argsort(-gathered, kind="stable")
    return DrawnSample(omega, order, math.sqrt(plan.n / omega.size), gathered[order])
