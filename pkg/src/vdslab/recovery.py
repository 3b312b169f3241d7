"""Noisy measurement simulation, recovery solvers, and closed-form error bounds.

Every solver minimizes the squared preconditioned residual
||D~ S F x - D~ b||_2^2 over its prior set. Measurements are never
pre-scaled; the preconditioner enters at optimization time only. Complex
systems are handled by stacking real and imaginary parts, so least squares
and singular values are always computed over the reals, matching the
real-part convention for complex inner products.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .priors import (
    GenerativeNetwork,
    SubspaceUnion,
    _hard_threshold,
    _lex_greatest,
    generative_forward,
    generative_pullback,
)
from .sampling import DrawnSample, SamplingPlan, _as_alpha, apply_measurement, noise_factor
from .transforms import UnitaryOperator

__all__ = [
    "MeasurementSet",
    "RecoveryResult",
    "simulate_measurements",
    "objective",
    "recover_oracle",
    "recover_sparse_two_stage",
    "recover_generative",
    "rip_check",
    "theorem_error_bound",
    "deterministic_corollary_bound",
    "relative_recovery_error",
    "save_signal",
    "load_signal",
]

_RANK_RTOL = 1e-10
_SIGNAL_MAGIC = b"VDSX"

_SPARSE_DEFAULTS = {"max_iters": 500, "tol": 1e-8, "power_iters": 40}
_GENERATIVE_DEFAULTS = {
    "restarts": 10,
    "iters": 2000,
    "step": 0.05,
    "patience": 100,
    "init_pool": 16,
    "seed": 0,
    "init_z": None,
}


class MeasurementSet:
    """Measurements b = S F x0 + (sigma/sqrt(m)) g in the operator's field."""

    def __init__(self, b, sigma: float, field: str, sample_ref: DrawnSample, seed=None):
        if field not in ("real", "complex"):
            raise ValueError("field must be 'real' or 'complex'")
        b = np.asarray(b, dtype=np.complex128 if field == "complex" else np.float64)
        if b.ndim != 1:
            raise ValueError("b must be a vector")
        if not isinstance(sample_ref, DrawnSample):
            raise TypeError("sample_ref must be the DrawnSample that produced b")
        if b.size != sample_ref.m:
            raise ValueError("b length does not match the draw")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        b.setflags(write=False)
        self.b = b
        self.sigma = float(sigma)
        self.field = field
        self.sample_ref = sample_ref
        self.seed = seed
        self.m = b.size

    def __repr__(self) -> str:
        return f"<MeasurementSet m={self.m} sigma={self.sigma:.6g} field={self.field}>"


class RecoveryResult:
    """Outcome of one solver run on one measurement set.

    ``epsilon`` is the optimization-error certificate; descent solvers report
    a best-achieved gap instead and say so through the epsilon_uncertified
    flag. ``rre`` is filled only when the solver was handed the true signal.
    """

    def __init__(self, x_hat, objective, epsilon, rre, solver, iterations, flags=()):
        x_hat = np.asarray(x_hat, dtype=np.float64)
        x_hat.setflags(write=False)
        if objective < 0 or epsilon < 0:
            raise ValueError("objective and epsilon must be nonnegative")
        self.x_hat = x_hat
        self.objective = float(objective)
        self.epsilon = float(epsilon)
        self.rre = None if rre is None else float(rre)
        self.solver = str(solver)
        self.iterations = int(iterations)
        self.flags = tuple(flags)

    def __repr__(self) -> str:
        return (
            f"<RecoveryResult solver={self.solver} objective={self.objective:.6g}"
            f" iterations={self.iterations}>"
        )


def _measured_values(b) -> np.ndarray:
    return b.b if isinstance(b, MeasurementSet) else np.asarray(b)


def _preconditioned_target(sample: DrawnSample, b) -> np.ndarray:
    return sample.d_tilde * _measured_values(b)


def _stack_real(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a):
        return np.concatenate([a.real, a.imag], axis=0)
    return np.asarray(a, dtype=np.float64)


def _residual_sq(design: np.ndarray, w: np.ndarray, target: np.ndarray) -> float:
    r = design @ w - target
    return float(np.real(np.vdot(r, r)))


def _adjoint_measurement(F: UnitaryOperator, sample: DrawnSample, v: np.ndarray) -> np.ndarray:
    """(D~ S F)* v: scatter the weighted vector and run one adjoint transform."""
    weights = sample.scale * sample.d_tilde * v
    u = np.zeros(F.n, dtype=weights.dtype)
    np.add.at(u, sample.omega_sorted, weights)
    return F.adjoint(u)


def simulate_measurements(
    F: UnitaryOperator, sample: DrawnSample, x0: np.ndarray, sigma: float, field=None, seed=0
) -> MeasurementSet:
    """Measure a real signal and add seeded Gaussian noise scaled by sigma/sqrt(m).

    The field must follow the operator: complex noise has iid real and
    imaginary parts, so E||eta||_2^2 is 2 sigma^2 rather than sigma^2. ``seed``
    may be an existing Generator, in which case the caller owns reproducibility
    and the stored seed is None.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1 or x0.size != F.n:
        raise ValueError("x0 must be a real length-n vector")
    if field is None:
        field = F.field
    elif field != F.field:
        raise ValueError(f"field {field!r} does not match the operator field {F.field!r}")
    if isinstance(seed, np.random.Generator):
        rng, stored = seed, None
    else:
        rng, stored = np.random.Generator(np.random.Philox(seed)), seed
    clean = apply_measurement(F, sample, x0)
    if field == "complex":
        g = rng.standard_normal(sample.m) + 1j * rng.standard_normal(sample.m)
    else:
        g = rng.standard_normal(sample.m)
    b = clean + (sigma / math.sqrt(sample.m)) * g
    return MeasurementSet(b, sigma, field, sample, stored)


def objective(plan: SamplingPlan, sample: DrawnSample, F: UnitaryOperator, x, b) -> float:
    """Squared preconditioned residual ||D~ S F x - D~ b||_2^2."""
    if plan.n != F.n:
        raise ValueError("plan and operator dimensions differ")
    r = apply_measurement(F, sample, x, preconditioned=True) - _preconditioned_target(sample, b)
    return float(np.real(np.vdot(r, r)))


def recover_oracle(plan, sample, F, b, union: SubspaceUnion, *, truth=None) -> RecoveryResult:
    """Exact minimizer over an enumerated union: per-subspace least squares.

    Each subspace is solved in its basis coordinates through an orthogonal
    factorization with rank tolerance 1e-10 relative to the top singular
    value; a rank-deficient winner takes the minimum-norm solution and flags
    the result. Objective ties go to the lexicographically greatest signal.
    """
    if not isinstance(union, SubspaceUnion):
        raise TypeError("recover_oracle needs an explicitly enumerated union")
    target = _preconditioned_target(sample, b)
    stacked_target = _stack_real(target)
    candidates = []
    for sub in union.subspaces:
        design = apply_measurement(F, sample, sub.basis, preconditioned=True)
        w, _, rank, _ = np.linalg.lstsq(_stack_real(design), stacked_target, rcond=_RANK_RTOL)
        candidates.append((_residual_sq(design, w, target), sub.basis @ w, rank < sub.dim))
    best_obj = min(c[0] for c in candidates)
    tie_tol = 1e-12 * (1.0 + float(np.real(np.vdot(target, target))))
    tied = [c for c in candidates if c[0] <= best_obj + tie_tol]
    x_hat = _lex_greatest([c[1] for c in tied])
    winner = next(c for c in tied if c[1] is x_hat)
    flags = ("rank_deficient",) if winner[2] else ()
    rre = None if truth is None else relative_recovery_error(truth, x_hat)
    return RecoveryResult(x_hat, winner[0], 0.0, rre, "oracle", union.M, flags)


def _merge_config(defaults: dict, config) -> dict:
    merged = dict(defaults)
    if config:
        unknown = set(config) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(config)
    return merged


def _operator_norm_sq(F: UnitaryOperator, sample: DrawnSample, power_iters: int) -> float:
    """Power-iteration estimate of ||D~ S F||_2^2, inflated 5% for step safety."""
    rng = np.random.Generator(np.random.Philox(7))
    v = rng.standard_normal(F.n)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(power_iters):
        w = np.real(_adjoint_measurement(F, sample, apply_measurement(F, sample, v, preconditioned=True)))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return 1.05 * lam


def recover_sparse_two_stage(plan, sample, F, b, k: int, config=None, *, truth=None) -> RecoveryResult:
    """Two-stage sparse solver: hard-threshold descent, then support least squares.

    Stage 1 runs iterative hard thresholding on the preconditioned system with
    step 1/L, L estimated by power iteration. Stage 2 re-fits exactly on the
    support of the best stage-1 iterate, so epsilon certifies optimality
    within that fixed support only; the support itself stays uncertified
    (flagged). Stage-1 non-convergence keeps the best iterate's support and
    adds a warning flag.
    """
    cfg = _merge_config(_SPARSE_DEFAULTS, config)
    n = F.n
    k = int(k)
    if not 1 <= k <= n:
        raise ValueError("k must satisfy 1 <= k <= n")
    target = _preconditioned_target(sample, b)
    lam = _operator_norm_sq(F, sample, cfg["power_iters"])

    def resid_sq(x):
        r = apply_measurement(F, sample, x, preconditioned=True) - target
        return float(np.real(np.vdot(r, r)))

    x = np.zeros(n)
    best_x, best_obj = x, resid_sq(x)
    converged = False
    used = 0
    for used in range(1, cfg["max_iters"] + 1):
        r = apply_measurement(F, sample, x, preconditioned=True) - target
        g = np.real(_adjoint_measurement(F, sample, r))
        x_next = _hard_threshold(x - g / lam, k)
        obj = resid_sq(x_next)
        if obj < best_obj:
            best_x, best_obj = x_next, obj
        if np.linalg.norm(x_next - x) <= cfg["tol"] * max(1.0, np.linalg.norm(x)):
            converged = True
            break
        x = x_next

    support = np.sort(np.lexsort((np.arange(n), -np.abs(best_x)))[:k])
    columns = np.zeros((n, k))
    columns[support, np.arange(k)] = 1.0
    design = apply_measurement(F, sample, columns, preconditioned=True)
    w, _, rank, _ = np.linalg.lstsq(_stack_real(design), _stack_real(target), rcond=_RANK_RTOL)
    x_hat = np.zeros(n)
    x_hat[support] = w
    flags = ["support_uncertified"]
    if not converged:
        flags.append("stage1_not_converged")
    if rank < k:
        flags.append("rank_deficient")
    rre = None if truth is None else relative_recovery_error(truth, x_hat)
    return RecoveryResult(
        x_hat, _residual_sq(design, w, target), 0.0, rre, "sparse_two_stage", used, tuple(flags)
    )


def recover_generative(plan, sample, F, b, net: GenerativeNetwork, config=None, *, truth=None) -> RecoveryResult:
    """Multi-restart latent descent with exact reverse-mode gradients.

    Adam on f(z) = ||D~ S F G(z) - D~ b||_2^2. Each restart starts from the
    best of ``init_pool`` seeded candidate latents (config key init_z pins the
    first restart instead) and stops early after ``patience`` iterations
    without improvement. Returns the best iterate ever evaluated; epsilon is
    best-achieved minus best-known, zero by construction and flagged
    uncertified.
    """
    if not isinstance(net, GenerativeNetwork):
        raise TypeError("recover_generative needs a GenerativeNetwork")
    cfg = _merge_config(_GENERATIVE_DEFAULTS, config)
    target = _preconditioned_target(sample, b)
    rng = np.random.Generator(np.random.Philox(cfg["seed"]))
    k = net.latent_dim

    def value_and_grad(z):
        x, vjp = generative_pullback(net, z)
        r = apply_measurement(F, sample, x, preconditioned=True) - target
        obj = float(np.real(np.vdot(r, r)))
        gx = 2.0 * np.real(_adjoint_measurement(F, sample, r))
        return obj, x, vjp(gx)

    def best_of_pool():
        pool = rng.standard_normal((k, max(1, cfg["init_pool"])))
        block = apply_measurement(F, sample, generative_forward(net, pool), preconditioned=True)
        objs = np.sum(np.abs(block - target[:, None]) ** 2, axis=0)
        return pool[:, int(np.argmin(objs))].copy()

    best = None
    total = 0
    for restart in range(cfg["restarts"]):
        if restart == 0 and cfg["init_z"] is not None:
            z = np.asarray(cfg["init_z"], dtype=np.float64).copy()
            if z.shape != (k,):
                raise ValueError("init_z must have the latent dimension")
        else:
            z = best_of_pool()
        m1 = np.zeros(k)
        m2 = np.zeros(k)
        local_best = math.inf
        stall = 0
        for it in range(1, cfg["iters"] + 1):
            total += 1
            obj, x, gz = value_and_grad(z)
            if best is None or obj < best[0]:
                best = (obj, x)
            if obj < local_best - 1e-12 * (1.0 + abs(local_best)):
                local_best = obj
                stall = 0
            else:
                stall += 1
                if stall >= cfg["patience"]:
                    break
            m1 = 0.9 * m1 + 0.1 * gz
            m2 = 0.999 * m2 + 0.001 * gz**2
            step = cfg["step"] * (m1 / (1.0 - 0.9**it)) / (np.sqrt(m2 / (1.0 - 0.999**it)) + 1e-8)
            z = z - step
    obj, x_hat = best
    rre = None if truth is None else relative_recovery_error(truth, x_hat)
    return RecoveryResult(
        x_hat, obj, 0.0, rre, "generative_descent", total, ("epsilon_uncertified",)
    )


def rip_check(plan, sample, F, union: SubspaceUnion) -> dict:
    """Exact per-subspace restricted-isometry deviations of D~ S F.

    Complex blocks are stacked into 2m x dim real matrices before the
    singular-value computation; deviation per subspace is
    max(sigma_max - 1, 1 - sigma_min), and the property holds when the worst
    deviation is at most 1/3.
    """
    if not isinstance(union, SubspaceUnion):
        raise TypeError("rip_check needs an explicitly enumerated union")
    block = apply_measurement(
        F, sample, np.hstack([s.basis for s in union.subspaces]), preconditioned=True
    )
    devs = np.empty(union.M)
    start = 0
    for i, sub in enumerate(union.subspaces):
        cols = _stack_real(block[:, start : start + sub.dim])
        s = np.linalg.svd(cols, compute_uv=False)
        smin = s[-1] if cols.shape[0] >= cols.shape[1] else 0.0
        devs[i] = max(s[0] - 1.0, 1.0 - smin)
        start += sub.dim
    devs.setflags(write=False)
    worst = float(devs.max())
    return {"max_deviation": worst, "holds": bool(worst <= 1.0 / 3.0), "per_subspace": devs}


def theorem_error_bound(
    plan,
    sample,
    alpha,
    sigma: float,
    max_dim: int,
    log_subspace_count: float,
    *,
    delta: float | None = None,
    t: float | None = None,
    epsilon: float = 0.0,
    mismatch_norm: float = 0.0,
    preconditioned_mismatch_norm: float = 0.0,
) -> float:
    """Full recovery bound: noise, model-mismatch, and optimization terms.

    Evaluates 9 (sigma/sqrt(m)) nf (sqrt(max_dim) + sqrt(log_subspace_count) + t)
    + mismatch_norm + 6 preconditioned_mismatch_norm + (3/2) sqrt(epsilon),
    where nf is the noise factor of the draw. Given delta instead of the tail
    parameter, t = sqrt(log(2/delta)) so the bound fails with probability at
    most delta over the noise. The mismatch norms are ||x - proj(x)||_2 and
    its preconditioned-measurement image.
    """
    if (delta is None) == (t is None):
        raise ValueError("supply exactly one of delta or t")
    if delta is not None:
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        t = math.sqrt(math.log(2.0 / delta))
    if t < 0 or sigma < 0 or epsilon < 0 or max_dim < 1 or log_subspace_count < 0:
        raise ValueError("invalid bound inputs")
    if mismatch_norm < 0 or preconditioned_mismatch_norm < 0:
        raise ValueError("mismatch norms must be nonnegative")
    noise_term = (
        9.0
        * (sigma / math.sqrt(sample.m))
        * noise_factor(plan, sample, alpha)
        * (math.sqrt(max_dim) + math.sqrt(log_subspace_count) + t)
    )
    return noise_term + mismatch_norm + 6.0 * preconditioned_mismatch_norm + 1.5 * math.sqrt(epsilon)


def deterministic_corollary_bound(sample: DrawnSample, alpha, sigma: float) -> float:
    """Non-denoising comparison noise term from the deterministic-noise analysis.

    (sigma/sqrt(m)) ||alpha||_2 sum_i 1/(sqrt(n) alpha_{omega_i}); for flat
    coherences this grows like sigma sqrt(m) instead of decaying.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    vec = _as_alpha(alpha)
    gathered = vec[sample.omega]
    if np.any(gathered <= 0):
        raise ValueError("every drawn row must have positive coherence")
    terms = 1.0 / (math.sqrt(vec.size) * gathered)
    return float(sigma / math.sqrt(sample.m) * np.linalg.norm(vec) * np.sum(terms))


def relative_recovery_error(x0, x_hat) -> float:
    """||x0 - x_hat||_2 / ||x0||_2."""
    x0 = np.asarray(x0, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    denom = float(np.linalg.norm(x0))
    if denom == 0.0:
        raise ValueError("relative error is undefined for a zero truth signal")
    return float(np.linalg.norm(x0 - x_hat) / denom)


def save_signal(x: np.ndarray, path) -> None:
    """Dump a real signal as flat little-endian float64 after a 16-byte header."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signals are one-dimensional")
    with open(path, "wb") as fh:
        fh.write(_SIGNAL_MAGIC)
        fh.write(struct.pack("<IQ", 1, x.size))
        fh.write(x.astype("<f8").tobytes())


def load_signal(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _SIGNAL_MAGIC:
        raise ValueError("not a signal file (bad magic)")
    version, n = struct.unpack_from("<IQ", raw, 4)
    if version != 1:
        raise ValueError(f"unsupported signal file version {version}")
    if len(raw) != 16 + 8 * n:
        raise ValueError("signal payload size mismatch")
    return np.frombuffer(raw, dtype="<f8", count=n, offset=16).astype(np.float64)
