"""Closed-form state and handover probabilities.

Covers the three-state Markov model of a user inside one macro region, the
factors of the S2 -> S1 transition probability, guard-channel blocking,
exponential dwell-time competition and the correlated Gaussian SINR crossing
integral. Transition matrices are column-stochastic: ``p[k] = P @ p[k-1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, linalg
from scipy.stats import norm

S1, S2, S3 = 0, 1, 2
STATE_LABELS = ("S1", "S2", "S3")
DEFAULT_ACCESS_PROBABILITY = 0.5


class NumericError(ArithmeticError):
    """A numerical procedure failed or its result is not well defined."""


class MultiplicityError(NumericError):
    """The chain has no unique stationary distribution."""


class UndefinedConditionalError(NumericError):
    """Conditioning on an event of probability zero."""


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# guard-channel blocking


@dataclass(frozen=True)
class TrafficParams:
    lambda_n: float  # new-call arrival rate, 1/s
    lambda_h: float  # handover arrival rate, 1/s
    mu_c: float  # channel release rate, 1/s
    T: int  # channels per phantom
    g: int = 0  # guard channels kept for handovers

    def __post_init__(self):
        if min(self.lambda_n, self.lambda_h, self.mu_c) <= 0:
            raise ValueError("traffic rates must be positive")
        if int(self.T) != self.T or int(self.g) != self.g:
            raise ValueError("T and g must be integers")
        if not 0 <= self.g <= self.T:
            raise ValueError(f"need 0 <= g <= T, got g={self.g}, T={self.T}")

    @property
    def rho(self) -> float:
        return (self.lambda_n + self.lambda_h) / self.mu_c

    @property
    def rho_h(self) -> float:
        return self.lambda_h / self.mu_c


def _guard_weights(rho: float, rho_h: float, T: int, g: int) -> np.ndarray:
    """Unnormalised occupancy weights w_j, j = 0..T, built by ratios."""
    w = np.empty(T + 1)
    w[0] = 1.0
    for j in range(1, T + 1):
        load = rho if j <= T - g else rho_h
        w[j] = w[j - 1] * load / j
    return w


def blocking_probability(params: TrafficParams) -> float:
    """P(N >= N_max) = rho^(T-g) rho_h^g / T! * P0.

    With no channels at all every arrival is blocked.
    """
    T, g = int(params.T), int(params.g)
    if T == 0:
        return 1.0
    w = _guard_weights(params.rho, params.rho_h, T, g)
    return float(w[T] / w.sum())


def erlang_b(T: int, rho: float) -> float:
    """Erlang loss formula via the usual stable recursion."""
    b = 1.0
    for j in range(1, T + 1):
        b = rho * b / (j + rho * b)
    return b


def guard_channel_stationary(params: TrafficParams) -> np.ndarray:
    """Stationary law of the guard-channel birth-death chain by a linear solve.

    Independent of the product form: builds the generator and solves
    pi Q = 0 with the normalisation replacing one balance equation.
    """
    T, g = int(params.T), int(params.g)
    n = T + 1
    Q = np.zeros((n, n))
    for j in range(T):
        birth = params.lambda_n + params.lambda_h if j < T - g else params.lambda_h
        Q[j, j + 1] = birth
    for j in range(1, n):
        Q[j, j - 1] = j * params.mu_c
    Q -= np.diag(Q.sum(axis=1))
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return linalg.solve(A, b)


# ---------------------------------------------------------------------------
# dwell time and access


def dwell_short_probability(mean_dwell: float, mean_expected: float) -> float:
    """P(T_dwell < T_expected) = T_e / (T_e + T_d) for independent exponentials."""
    if mean_dwell < 0 or mean_expected < 0:
        raise ValueError("mean durations must be >= 0")
    if mean_dwell == 0 and mean_expected == 0:
        raise ValueError("mean_dwell and mean_expected cannot both be 0")
    return mean_expected / (mean_expected + mean_dwell)


def dwell_exceed_probability(mean_dwell: float, mean_expected: float) -> float:
    """P(T_dwell >= T_expected) = T_d / (T_e + T_d), as one minus the short-stay probability."""
    return 1.0 - dwell_short_probability(mean_dwell, mean_expected)


def access_probability(p_open: float = DEFAULT_ACCESS_PROBABILITY) -> float:
    if not 0.0 <= p_open <= 1.0:
        raise ValueError("access probability must lie in [0, 1]")
    return float(p_open)


# ---------------------------------------------------------------------------
# Gaussian SINR model


def gaussian_exceed_probability(threshold: float, mean: float, sigma: float) -> float:
    """P(eta > threshold) = Q((threshold - mean) / sigma), Q the upper tail."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(norm.sf((threshold - mean) / sigma))


def gaussian_below_probability(threshold: float, mean: float, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(norm.cdf((threshold - mean) / sigma))


@dataclass(frozen=True)
class SinrProcessParams:
    mu_prev: float
    mu_curr: float
    sigma_prev: float
    sigma_curr: float
    rho: float = 0.0

    def __post_init__(self):
        if not (self.sigma_prev > 0 and self.sigma_curr > 0):
            raise ValueError("sigmas must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    def conditional(self, prev: float) -> tuple[float, float]:
        """Mean and standard deviation of eta[k] given eta[k-1] = prev."""
        mu = self.mu_curr + self.rho * self.sigma_curr / self.sigma_prev * (prev - self.mu_prev)
        return mu, self.sigma_curr * math.sqrt(max(1.0 - self.rho ** 2, 0.0))


def _degenerate_cross(threshold: float, proc: SinrProcessParams) -> float:
    # |rho| = 1: eta[k] is an affine function of eta[k-1], so the crossing
    # event is an interval of eta[k-1] values
    slope = proc.rho * proc.sigma_curr / proc.sigma_prev
    lo, hi = -math.inf, threshold  # prev < threshold
    # curr = mu_curr + slope (prev - mu_prev) > threshold
    cut = proc.mu_prev + (threshold - proc.mu_curr) / slope
    if slope > 0:
        lo = max(lo, cut)
    else:
        hi = min(hi, cut)
    if lo >= hi:
        return 0.0
    z = lambda x: (x - proc.mu_prev) / proc.sigma_prev
    return float(max(norm.cdf(z(hi)) - norm.cdf(z(lo)), 0.0))


def joint_cross_probability(threshold: float, proc: SinrProcessParams, tol: float = 1e-8) -> float:
    """P(eta[k] > threshold, eta[k-1] < threshold) for a correlated Gaussian pair.

    Integrates the eta[k-1] density times the conditional upper tail of
    eta[k] over (mu_prev - 10 sigma_prev, threshold]. The result is clipped to
    the Frechet bound, which the exact value satisfies.
    """
    bound = min(gaussian_exceed_probability(threshold, proc.mu_curr, proc.sigma_curr),
                gaussian_below_probability(threshold, proc.mu_prev, proc.sigma_prev))
    if abs(proc.rho) == 1.0:
        return min(_degenerate_cross(threshold, proc), bound)
    lower = proc.mu_prev - 10.0 * proc.sigma_prev
    if threshold <= lower:
        return 0.0
    sigma_c = proc.sigma_curr * math.sqrt(1.0 - proc.rho ** 2)
    k = proc.rho * proc.sigma_curr / proc.sigma_prev

    def integrand(x):
        mu_c = proc.mu_curr + k * (x - proc.mu_prev)
        return norm.pdf(x, proc.mu_prev, proc.sigma_prev) * norm.sf((threshold - mu_c) / sigma_c)

    value, err, info, *rest = integrate.quad(integrand, lower, threshold, epsabs=tol, epsrel=0.0,
                                             limit=200, full_output=True)
    if rest or err > tol:
        msg = rest[0] if rest else ""
        raise NumericError(f"quadrature did not converge: estimate={value!r}, abserr={err:.3g}, "
                           f"evaluations={info['neval']}, proc={proc}, threshold={threshold}. {msg}")
    return float(min(max(value, 0.0), bound))


# ---------------------------------------------------------------------------
# S2 occupancy and the S2 -> S1 transition


class Clamped(NamedTuple):
    value: float
    clamped: bool


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def state2_probability(p_macro_ok: float, p_closed: float, p_full: float,
                       p_short_dwell: float, p_phantom_low: float) -> Clamped:
    """P(S2) under the union-bound approximation, bracket sum clamped at 1."""
    for name, p in (("p_macro_ok", p_macro_ok), ("p_closed", p_closed), ("p_full", p_full),
                    ("p_short_dwell", p_short_dwell), ("p_phantom_low", p_phantom_low)):
        _check_prob(name, p)
    bracket = p_closed + p_full + p_short_dwell + p_phantom_low
    return Clamped(p_macro_ok * min(bracket, 1.0), bracket > 1.0)


@dataclass(frozen=True)
class TransitionFactors:
    """Inputs of the S2 -> S1 transition probability.

    ``p_sinr`` is P(eta_ph[k] > th | S2[k-1]). Leave it as None to derive it
    from the marginal and joint SINR terms below.
    """

    p_access: float = DEFAULT_ACCESS_PROBABILITY
    p_not_full: float = 1.0
    p_dwell_ok: float = 1.0
    p_sinr: float | None = None
    p_macro_ok: float = 1.0
    p_phantom_above: float = 0.0  # P(eta_ph[k] > th)
    p_phantom_low_prev: float = 0.0  # P(eta_ph[k-1] < th)
    p_joint_cross: float = 0.0  # P(eta_ph[k] > th, eta_ph[k-1] < th)

    def __post_init__(self):
        for name in ("p_access", "p_not_full", "p_dwell_ok", "p_macro_ok", "p_phantom_above",
                     "p_phantom_low_prev", "p_joint_cross"):
            _check_prob(name, getattr(self, name))
        if self.p_sinr is not None:
            _check_prob("p_sinr", self.p_sinr)


def conditional_sinr_factor(f: TransitionFactors) -> Clamped:
    """Joint term over P(S2), with the shared gating probabilities."""
    closed, full, short = 1.0 - f.p_access, 1.0 - f.p_not_full, 1.0 - f.p_dwell_ok
    denom = state2_probability(f.p_macro_ok, closed, full, short, f.p_phantom_low_prev)
    if denom.value == 0.0:
        raise UndefinedConditionalError("P(S2[k-1]) = 0, the conditional SINR factor is undefined")
    above = f.p_phantom_above
    numer = f.p_macro_ok * (above * closed + above * full + above * short + f.p_joint_cross)
    ratio = numer / denom.value
    return Clamped(min(ratio, 1.0), denom.clamped or ratio > 1.0)


def transition_prob_s2_to_s1(f: TransitionFactors) -> float:
    """Product of the SINR, access, free-channel and dwell factors."""
    p_sinr = conditional_sinr_factor(f).value if f.p_sinr is None else f.p_sinr
    return p_sinr * f.p_access * f.p_not_full * f.p_dwell_ok


# ---------------------------------------------------------------------------
# three-state chain


@dataclass
class MarkovModel:
    """Column-stochastic 3x3 matrix; column j holds the moves out of state j."""

    P: np.ndarray
    flagged: tuple[int, ...] = ()  # columns filled in rather than estimated
    labels: tuple[str, ...] = STATE_LABELS
    counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        if self.P.shape != (3, 3):
            raise ValueError(f"P must be 3x3, got {self.P.shape}")
        if np.any(self.P < 0) or np.any(self.P > 1):
            raise ValueError("entries of P must lie in [0, 1]")
        if not np.allclose(self.P.sum(axis=0), 1.0, atol=1e-9):
            raise ValueError("columns of P must sum to 1")

    def step(self, p: np.ndarray) -> np.ndarray:
        return self.P @ p

    @classmethod
    def assemble(cls, p12: float, p21: float = 0.1, p31: float = 0.0, p13: float = 0.05,
                 p23: float = 0.1, p32: float = 0.0) -> "MarkovModel":
        """Fill the diagonal from the given off-diagonal entries p_ij (from j to i)."""
        P = np.zeros((3, 3))
        P[0, 1], P[1, 0], P[2, 0], P[0, 2], P[1, 2], P[2, 1] = p12, p21, p31, p13, p23, p32
        for j in range(3):
            rest = P[:, j].sum()
            if rest > 1.0 + 1e-12:
                raise ValueError(f"off-diagonal mass out of {STATE_LABELS[j]} exceeds 1")
            P[j, j] = max(1.0 - rest, 0.0)
        return cls(P)


def stationary_distribution(model: MarkovModel, tol: float = 1e-10) -> np.ndarray:
    """pi with P pi = pi, sum 1; raises when the fixed point is not unique."""
    P = model.P
    A = P - np.eye(3)
    s = linalg.svdvals(A)
    nullity = int(np.sum(s < tol))
    if nullity != 1:
        raise MultiplicityError(f"eigenvalue 1 has multiplicity {nullity}; no unique stationary distribution")
    # replace one balance row with the normalisation
    B = np.vstack([A[:-1], np.ones(3)])
    pi = linalg.solve(B, np.array([0.0, 0.0, 1.0]))
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def sample_markov_trace(model: MarkovModel, steps: int, rng: np.random.Generator, start: int = S1) -> np.ndarray:
    """One path of the chain, used to test the estimator."""
    cum = np.cumsum(model.P, axis=0)
    u = rng.random(steps)
    out = np.empty(steps, dtype=np.int8)
    s = start
    for k in range(steps):
        out[k] = s
        s = min(int(np.searchsorted(cum[:, s], u[k], side="right")), 2)
    return out


def _as_trace(state_trace) -> np.ndarray:
    arr = np.asarray(state_trace)
    if arr.dtype.kind in "US":
        lookup = {name: i for i, name in enumerate(STATE_LABELS)}
        try:
            arr = np.vectorize(lookup.__getitem__, otypes=[np.int8])(arr)
        except KeyError as exc:
            raise DataError(f"unknown state label {exc.args[0]!r}") from None
    arr = arr.astype(np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError("state trace must be (steps,) or (steps, users)")
    if arr.size and (arr.min() < 0 or arr.max() > 2):
        raise DataError("state labels must be S1, S2 or S3")
    return arr


def estimate_markov_from_simulation(event_log: Sequence | None, state_trace) -> MarkovModel:
    """Empirical column-stochastic matrix from a per-step, per-user state trace.

    Transitions are read from consecutive rows of ``state_trace`` (steps x
    users, labels 0/1/2 or "S1"/"S2"/"S3"). Columns for states never left
    from are set to the identity column and flagged. ``event_log`` is kept
    for callers that hold both; it is not needed for the estimate.
    """
    trace = _as_trace(state_trace)
    if trace.shape[0] < 2 or trace.shape[1] == 0:
        raise DataError("state trace needs at least two steps and one user")
    prev, curr = trace[:-1].ravel(), trace[1:].ravel()
    counts = np.zeros((3, 3), dtype=np.int64)
    np.add.at(counts, (curr, prev), 1)
    P = np.zeros((3, 3))
    flagged = []
    for j in range(3):
        total = counts[:, j].sum()
        if total == 0:
            P[j, j] = 1.0
            flagged.append(j)
        else:
            P[:, j] = counts[:, j] / total
    return MarkovModel(P, flagged=tuple(flagged), counts=counts)


# ---------------------------------------------------------------------------
# one-call evaluation used by the CLI


@dataclass
class AnalysisParams:
    lambda_n: float = 1.0
    lambda_h: float = 1.0
    mu_c: float = 1.0
    T: int = 10
    g: int = 1
    mean_dwell: float = 45.0
    T_expected: float = 5.0
    access_probability: float = DEFAULT_ACCESS_PROBABILITY
    eta_m_th: float = 0.40
    eta_ph_th: float = 0.45
    mu_macro: float = 1.0
    sigma_macro: float = 0.5
    mu_prev: float = 0.6
    mu_curr: float = 0.6
    sigma_prev: float = 0.2
    sigma_curr: float = 0.2
    rho: float = 0.5
    p21: float = 0.1
    p31: float = 0.05
    p13: float = 0.05
    p23: float = 0.1
    p32: float = 0.2


def evaluate(p: AnalysisParams) -> dict:
    """Every closed-form quantity for one parameter set, in table order."""
    traffic = TrafficParams(p.lambda_n, p.lambda_h, p.mu_c, p.T, p.g)
    proc = SinrProcessParams(p.mu_prev, p.mu_curr, p.sigma_prev, p.sigma_curr, p.rho)
    blocking = blocking_probability(traffic)
    factors = TransitionFactors(
        p_access=access_probability(p.access_probability),
        p_not_full=1.0 - blocking,
        p_dwell_ok=dwell_exceed_probability(p.mean_dwell, p.T_expected),
        p_macro_ok=gaussian_exceed_probability(p.eta_m_th, p.mu_macro, p.sigma_macro),
        p_phantom_above=gaussian_exceed_probability(p.eta_ph_th, p.mu_curr, p.sigma_curr),
        p_phantom_low_prev=gaussian_below_probability(p.eta_ph_th, p.mu_prev, p.sigma_prev),
        p_joint_cross=joint_cross_probability(p.eta_ph_th, proc),
    )
    s2 = state2_probability(factors.p_macro_ok, 1.0 - factors.p_access, blocking,
                            1.0 - factors.p_dwell_ok, factors.p_phantom_low_prev)
    sinr = conditional_sinr_factor(factors)
    p12 = transition_prob_s2_to_s1(factors)
    model = MarkovModel.assemble(p12, p.p21, p.p31, p.p13, p.p23, p.p32)
    return {
        "blocking_probability": blocking,
        "p_not_full": factors.p_not_full,
        "p_dwell_ok": factors.p_dwell_ok,
        "p_access": factors.p_access,
        "p_macro_ok": factors.p_macro_ok,
        "p_phantom_above": factors.p_phantom_above,
        "p_phantom_low_prev": factors.p_phantom_low_prev,
        "p_joint_cross": factors.p_joint_cross,
        "p_state2": s2.value,
        "p_state2_clamped": s2.clamped,
        "p_sinr_given_s2": sinr.value,
        "p_sinr_clamped": sinr.clamped,
        "p_ho_12": p12,
        "P": model.P,
        "stationary": stationary_distribution(model),
    }
