"""Deterministic DDIM reconstruction with pluggable noise predictors.

The schedule holds linear betas over T steps, the cumulative signal
fractions, and the strided sub-sequence the sampler actually visits.
Predictors implement a single callable contract (x_t, cond, t) -> eps_hat;
two references ship here: the exact posterior predictor for Gaussian data,
and a per-timestep-bucket linear least-squares fit that makes conditioning
on fused features testable end to end.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError, PredictorError


@dataclass
class DiffusionSchedule:
    """Beta table, cumulative alpha-bar (index 0 == 1.0), and DDIM steps."""

    total_steps: int
    beta_min: float
    beta_max: float
    beta: np.ndarray  # length T+1; beta[0] unused (= 0)
    alpha_bar: np.ndarray  # length T+1; alpha_bar[0] == 1.0
    tau: np.ndarray  # ascending sub-sequence of timesteps, tau[-1] == T
    spacing: str = "uniform"
    requested_steps: int = 0

    @property
    def num_sample_steps(self) -> int:
        return len(self.tau)

    def to_json(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "num_sample_steps": int(self.requested_steps or len(self.tau)),
            "spacing": self.spacing,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DiffusionSchedule":
        return make_schedule(
            doc["total_steps"], doc["beta_min"], doc["beta_max"],
            doc["num_sample_steps"], doc.get("spacing", "uniform"),
        )


def make_schedule(
    total_steps: int = 1000,
    beta_min: float = 1e-4,
    beta_max: float = 0.02,
    num_sample_steps: int = 50,
    spacing: str = "uniform",
) -> DiffusionSchedule:
    """Linear beta schedule with an S-step DDIM sub-sequence.

    spacing "uniform" strides evenly over timestep index.  spacing
    "angular" places steps evenly in arcsin(sqrt(1 - alpha_bar)), which
    equalizes the per-step transport error of the deterministic sampler and
    is required for coarse sub-sequences to preserve data variance.
    """
    if not 1 <= num_sample_steps <= total_steps:
        raise InputDomainError("need 1 <= num_sample_steps <= total_steps")
    if not 0 < beta_min <= beta_max < 1:
        raise InputDomainError("need 0 < beta_min <= beta_max < 1")
    beta = np.zeros(total_steps + 1)
    beta[1:] = np.linspace(beta_min, beta_max, total_steps)
    alpha_bar = np.ones(total_steps + 1)
    alpha_bar[1:] = np.cumprod(1.0 - beta[1:])
    idx = np.arange(1, num_sample_steps + 1, dtype=np.float64)
    if spacing == "uniform":
        tau = np.unique(np.ceil(idx * total_steps / num_sample_steps).astype(np.int64))
    elif spacing == "angular":
        theta = np.arcsin(np.sqrt(1.0 - alpha_bar))
        targets = idx * theta[total_steps] / num_sample_steps
        tau = np.searchsorted(theta, targets)
        tau = np.unique(np.clip(tau, 1, total_steps))
        tau[-1] = total_steps
        tau = np.unique(tau)
    else:
        raise InputDomainError(f"unknown spacing {spacing!r}")
    return DiffusionSchedule(total_steps, beta_min, beta_max, beta, alpha_bar, tau,
                             spacing, num_sample_steps)


def forward_diffuse(x0: np.ndarray, t: int, schedule: DiffusionSchedule, seed: int) -> np.ndarray:
    """Sample x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) z with seeded z ~ N(0, I)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if not 0 <= t <= schedule.total_steps:
        raise InputDomainError(f"t must be in [0, {schedule.total_steps}]")
    if t == 0:
        return x0.copy()
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(x0.shape)
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * z


def ddim_step(
    x_t: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    t_prev: int,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """One deterministic update: move the x0 estimate to the earlier step.

    x0_hat = (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t);
    x_{t_prev} = sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev) eps.
    t_prev == 0 returns x0_hat itself.
    """
    if not (schedule.total_steps >= t > t_prev >= 0):
        raise InputDomainError(f"need T >= t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if not np.all(np.isfinite(eps_hat)):
        raise PredictorError("noise prediction contains non-finite values")
    ab_t = schedule.alpha_bar[t]
    ab_p = schedule.alpha_bar[t_prev]
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    return np.sqrt(ab_p) * x0_hat + np.sqrt(1.0 - ab_p) * eps_hat


def ddim_sample(
    x_start: np.ndarray,
    cond: np.ndarray | None,
    predictor,
    schedule: DiffusionSchedule,
    t_start: int | None = None,
) -> np.ndarray:
    """Iterate ddim_step down the sub-sequence to t = 0.

    By default starts at tau[-1] (== T) with x_start as x_T.  Passing
    t_start restricts the walk to sub-sequence entries <= t_start, which is
    how the pipeline runs partial refinement; t_start must be one of the
    schedule's tau entries.  Fully deterministic in its inputs.
    """
    x = np.asarray(x_start, dtype=np.float64).copy()
    tau = schedule.tau
    if t_start is not None:
        if t_start == 0:
            return x
        matches = np.nonzero(tau == t_start)[0]
        if len(matches) == 0:
            raise InputDomainError(f"t_start={t_start} is not in the schedule sub-sequence")
        tau = tau[: matches[0] + 1]
    steps = list(tau[::-1]) + [0]
    for i, (t, t_prev) in enumerate(zip(steps[:-1], steps[1:])):
        try:
            eps_hat = predictor(x, cond, int(t))
        except Exception as exc:
            raise PredictorError(f"predictor failed at step {i} (t={t}): {exc}") from exc
        eps_hat = np.asarray(eps_hat, dtype=np.float64)
        if eps_hat.shape != x.shape:
            raise PredictorError(
                f"predictor output shape {eps_hat.shape} != state shape {x.shape} at step {i}"
            )
        if not np.all(np.isfinite(eps_hat)):
            raise PredictorError(f"non-finite noise prediction at step {i} (t={t})")
        x = ddim_step(x, eps_hat, int(t), int(t_prev), schedule)
    return x


class AnalyticGaussianPredictor:
    """Exact optimal noise predictor for x0 ~ N(mu, var * I).

    E[x0 | x_t] = mu + (sqrt(ab) var / (ab var + 1 - ab)) (x_t - sqrt(ab) mu);
    eps_hat = (x_t - sqrt(ab) E[x0 | x_t]) / sqrt(1 - ab).
    Used as a verification reference; var = 0 degenerates to the point-mass
    predictor.
    """

    def __init__(self, mu, var: float, schedule: DiffusionSchedule):
        if var < 0:
            raise InputDomainError("variance must be >= 0")
        self.mu = np.asarray(mu, dtype=np.float64)
        self.var = float(var)
        self.schedule = schedule

    def posterior_mean(self, x_t: np.ndarray, t: int) -> np.ndarray:
        ab = self.schedule.alpha_bar[t]
        s = np.sqrt(ab)
        gain = s * self.var / (ab * self.var + 1.0 - ab)
        return self.mu + gain * (np.asarray(x_t) - s * self.mu)

    def __call__(self, x_t: np.ndarray, cond, t: int) -> np.ndarray:
        ab = self.schedule.alpha_bar[t]
        if ab >= 1.0:
            raise InputDomainError("predictor undefined at t = 0")
        x0 = self.posterior_mean(x_t, t)
        return (np.asarray(x_t) - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)


class ZeroPredictor:
    """Predicts no noise; useful for telescoping checks."""

    def __call__(self, x_t, cond, t):
        return np.zeros_like(np.asarray(x_t, dtype=np.float64))


@dataclass
class ConditionalLinearPredictor:
    """Per-timestep-bucket linear map [x_t, cond channels, 1] -> eps.

    The desk-scale realization of a conditional noise model: ordinary least
    squares per bucket, with a ridge fallback when the design matrix is
    rank-deficient.  Fitting pools pixels over all provided samples.
    """

    total_steps: int
    num_buckets: int
    coef: np.ndarray  # (num_buckets, n_features)
    residual_rmse: np.ndarray  # (num_buckets,)
    used_ridge: bool = False
    cond_channels: int = 0
    bucket_has_data: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    RIDGE_LAMBDA = 1e-6

    def bucket_of(self, t: int) -> int:
        b = (t - 1) * self.num_buckets // self.total_steps
        return int(np.clip(b, 0, self.num_buckets - 1))

    @staticmethod
    def _design(x_t: np.ndarray, cond: np.ndarray | None, cond_channels: int) -> np.ndarray:
        cols = [np.asarray(x_t, dtype=np.float64).ravel()]
        if cond_channels:
            cond = np.asarray(cond, dtype=np.float64)
            if cond.ndim != 3 or cond.shape[0] != cond_channels:
                raise InputDomainError(
                    f"conditioning must be ({cond_channels}, H, W), got {None if cond is None else cond.shape}"
                )
            cols.extend(cond[c].ravel() for c in range(cond_channels))
        cols.append(np.ones(cols[0].size))
        return np.stack(cols, axis=1)

    @classmethod
    def fit(
        cls,
        samples,
        schedule: DiffusionSchedule,
        num_buckets: int = 10,
    ) -> "ConditionalLinearPredictor":
        """samples: iterable of (x_t, cond, t, eps); cond may be None."""
        samples = list(samples)
        if not samples:
            raise InputDomainError("no training samples")
        first_cond = samples[0][1]
        cond_channels = 0 if first_cond is None else int(np.asarray(first_cond).shape[0])
        n_features = cond_channels + 2

        xtx = np.zeros((num_buckets, n_features, n_features))
        xty = np.zeros((num_buckets, n_features))
        rows = np.zeros(num_buckets, dtype=np.int64)
        sq_sum = np.zeros(num_buckets)
        for x_t, cond, t, eps in samples:
            if not 1 <= t <= schedule.total_steps:
                raise InputDomainError(f"sample timestep {t} outside [1, T]")
            design = cls._design(x_t, cond, cond_channels)
            target = np.asarray(eps, dtype=np.float64).ravel()
            b = (t - 1) * num_buckets // schedule.total_steps
            b = int(np.clip(b, 0, num_buckets - 1))
            xtx[b] += design.T @ design
            xty[b] += design.T @ target
            rows[b] += len(target)
            sq_sum[b] += float(target @ target)
        total_rows = int(rows.sum())
        if total_rows < n_features + 2:
            raise InputDomainError(
                f"need at least {n_features + 2} training rows, got {total_rows}"
            )

        global_xtx = xtx.sum(axis=0)
        global_xty = xty.sum(axis=0)
        used_ridge = False

        def solve(a, y):
            nonlocal used_ridge
            if np.linalg.matrix_rank(a) < n_features:
                used_ridge = True
                warnings.warn("rank-deficient design; using ridge fallback", RuntimeWarning)
                a = a + cls.RIDGE_LAMBDA * np.eye(n_features)
            return np.linalg.solve(a, y)

        global_coef = solve(global_xtx, global_xty)
        coef = np.zeros((num_buckets, n_features))
        rmse = np.zeros(num_buckets)
        has_data = rows > 0
        for b in range(num_buckets):
            if rows[b] >= n_features:
                coef[b] = solve(xtx[b], xty[b])
            else:
                coef[b] = global_coef
            if rows[b]:
                sse = sq_sum[b] - 2 * coef[b] @ xty[b] + coef[b] @ xtx[b] @ coef[b]
                rmse[b] = np.sqrt(max(sse, 0.0) / rows[b])
        return cls(schedule.total_steps, num_buckets, coef, rmse, used_ridge,
                   cond_channels, has_data)

    def __call__(self, x_t: np.ndarray, cond, t: int) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        design = self._design(x_t, cond if self.cond_channels else None, self.cond_channels)
        out = design @ self.coef[self.bucket_of(t)]
        return out.reshape(x_t.shape)

    def to_json(self) -> dict:
        return {
            "type": "conditional_linear",
            "total_steps": self.total_steps,
            "num_buckets": self.num_buckets,
            "cond_channels": self.cond_channels,
            "coef": self.coef.tolist(),
            "residual_rmse": self.residual_rmse.tolist(),
            "used_ridge": self.used_ridge,
            "bucket_has_data": self.bucket_has_data.astype(bool).tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ConditionalLinearPredictor":
        if doc.get("type") != "conditional_linear":
            raise InputDomainError(f"unexpected predictor document type {doc.get('type')!r}")
        return cls(
            total_steps=int(doc["total_steps"]),
            num_buckets=int(doc["num_buckets"]),
            coef=np.asarray(doc["coef"], dtype=np.float64),
            residual_rmse=np.asarray(doc["residual_rmse"], dtype=np.float64),
            used_ridge=bool(doc["used_ridge"]),
            cond_channels=int(doc["cond_channels"]),
            bucket_has_data=np.asarray(doc["bucket_has_data"], dtype=bool),
        )


def save_run_document(path, schedule: DiffusionSchedule, predictor=None) -> None:
    """Persist a schedule (and optional fitted predictor) as one JSON file."""
    doc = {"schedule": schedule.to_json()}
    if predictor is not None:
        doc["predictor"] = predictor.to_json()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_run_document(path) -> tuple[DiffusionSchedule, ConditionalLinearPredictor | None]:
    with open(path) as fh:
        doc = json.load(fh)
    schedule = DiffusionSchedule.from_json(doc["schedule"])
    predictor = None
    if "predictor" in doc:
        predictor = ConditionalLinearPredictor.from_json(doc["predictor"])
    return schedule, predictor
