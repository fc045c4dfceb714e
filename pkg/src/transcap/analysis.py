"""Transforms of impulse responses and theta-optimized transient capacity bounds.

Rate functions follow the sign convention ``r(-theta)`` for Laplace
transforms (lower bounds) and ``r(theta)`` for moment generating functions
(upper bounds).  Aloha hops have independent increments and use the closed
form; CSMA hops share one modulating chain, so their rates come from the
largest eigenvalue of ``B = Q - theta C I_j`` and the Hoelder exponent ``k``.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.special import gammaln

from .contention import ContentionGraph
from .errors import NumericError, ParameterError
from .mmtp import MacKind, csma_model, stationary

THETA_MIN = 1e-4
THETA_MAX = 1e2
GRID_POINTS = 64
REL_TOL = 1e-6
THRESHOLD_CAP = 10**9

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------- Aloha

def aloha_rate(q, C, theta, sign):
    """``r(-theta)`` (sign -1) or ``r(theta)`` (sign +1) of an on/off hop.

    The hop serves ``C`` with probability ``q`` per slot, independently
    across slots.
    """
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"q must lie in [0,1], got {q}")
    if sign not in (-1, 1):
        raise ParameterError(f"sign must be -1 or +1, got {sign}")
    if q == 1.0:
        return float(C)
    if q == 0.0:
        return 0.0
    x = sign * theta * C
    if x > 30.0:
        lg = np.logaddexp(math.log(q) + x, math.log1p(-q))
    else:
        lg = math.log1p(q * math.expm1(x))
    return float(sign * lg / theta)


# ---------------------------------------------------------------------- CSMA

def csma_B_matrix(m, link, theta_eff):
    """``Q - theta_eff * C * I_link``; dense or sparse like the generator."""
    if m.kind is not MacKind.CSMA:
        raise ParameterError(f"B matrix needs a CSMA model, got {m.kind.value}")
    ind = m.indicator(link)
    Q = m.generator
    if scipy.sparse.issparse(Q):
        return (Q - scipy.sparse.diags(theta_eff * m.C * ind)).tocsr()
    B = np.array(Q, dtype=float)
    B[np.diag_indices_from(B)] -= theta_eff * m.C * ind
    return B


def _is_metzler(B):
    if scipy.sparse.issparse(B):
        coo = B.tocoo()
        off = coo.row != coo.col
        return bool(np.all(coo.data[off] >= 0))
    off = B - np.diag(np.diag(B))
    return bool(np.all(off >= 0))


def max_real_eig(B, tol=1e-13, max_iter=200):
    """Eigenvalue of ``B`` with the largest real part.

    Metzler matrices go through shifted inverse iteration.  For a shift
    ``s`` above the Perron root, ``(sI - B)^-1`` is entrywise nonnegative,
    so the iterate stays positive and the Collatz-Wielandt quotients of
    ``Bx / x`` bracket the root from both sides.  Anything else falls back
    to a dense eigensolver.
    """
    sparse = scipy.sparse.issparse(B)
    if not _is_metzler(B):
        dense = B.toarray() if sparse else np.asarray(B, dtype=float)
        return float(np.max(np.linalg.eigvals(dense).real))
    n = B.shape[0]
    if n == 1:
        return float(B[0, 0])
    scale = max(1.0, float(abs(B).max()))
    x = np.ones(n)
    Bx = B @ x
    lo, hi = float(Bx.min()), float(Bx.max())
    if hi - lo <= tol * scale:
        return 0.5 * (lo + hi)
    eye = scipy.sparse.identity(n, format="csc") if sparse else np.eye(n)
    resid = hi - lo
    for _ in range(max_iter):
        shift = hi + max(hi - lo, 1e-8 * scale)
        M = shift * eye - B
        try:
            if sparse:
                x = scipy.sparse.linalg.splu(M.tocsc()).solve(x)
            else:
                x = scipy.linalg.lu_solve(scipy.linalg.lu_factor(M, check_finite=False), x)
        except (RuntimeError, ValueError, scipy.linalg.LinAlgError) as exc:
            raise NumericError(f"inverse iteration solve failed: {exc}", residual=resid) from exc
        x = np.maximum(x / np.abs(x).max(), 1e-280)
        Bx = B @ x
        ratio = Bx / x
        lo, hi = max(lo, float(ratio.min())), min(hi, float(ratio.max()))
        ray = float(x @ Bx) / float(x @ x)
        resid = float(np.abs(Bx - ray * x).max())
        if hi - lo <= tol * scale:
            return 0.5 * (lo + hi)
        if resid <= tol * scale:
            # reducible case: some components vanish and the bracket stalls
            return ray
    raise NumericError(
        f"max_real_eig did not converge in {max_iter} iterations", residual=resid
    )


@dataclass(frozen=True)
class EigenSolution:
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    lambda_max: float


@dataclass(frozen=True)
class LaplaceResult:
    value: float
    method: str
    eigen: EigenSolution = None


def _rk4(B, y0, t):
    norm = float(abs(B).max()) * B.shape[0] if t > 0 else 0.0
    n_steps = max(1, math.ceil(t * norm / 0.1)) if t > 0 else 0
    y = np.array(y0, dtype=float)
    if n_steps == 0:
        return y
    h = t / n_steps
    for _ in range(n_steps):
        k1 = B @ y
        k2 = B @ (y + 0.5 * h * k1)
        k3 = B @ (y + 0.5 * h * k2)
        k4 = B @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def eigen_solution(m, link, theta):
    """Hyperexponential coefficients of ``E[exp(-theta S_link(t))]``."""
    B = csma_B_matrix(m, link, theta)
    if scipy.sparse.issparse(B):
        B = B.toarray()
    pi = stationary(m).probs
    w, X = scipy.linalg.eig(B)
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericError(f"eigenvector matrix ill-conditioned (cond={cond:.2e})")
    c = scipy.linalg.solve(X, np.ones(len(w)))
    coeff = c * (pi @ X)
    if abs(coeff.sum() - 1.0) > 1e-8:
        raise NumericError(
            "hyperexponential coefficients do not sum to 1",
            residual=abs(coeff.sum() - 1.0),
        )
    return EigenSolution(w, coeff, float(np.max(w.real)))


def csma_laplace(m, link, theta, t):
    """``L_t = pi exp(B t) 1`` with ``B = Q - theta C I_link``.

    Evaluated through the eigen-decomposition; a defective or badly
    conditioned ``B`` falls back to RK4 integration of ``dL/dt = B L``.
    """
    if theta == 0:
        raise ParameterError("theta must be nonzero")
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    if t == 0:
        return LaplaceResult(1.0, "exact")
    try:
        sol = eigen_solution(m, link, theta)
    except (NumericError, scipy.linalg.LinAlgError):
        B = csma_B_matrix(m, link, theta)
        B = B.toarray() if scipy.sparse.issparse(B) else B
        L = _rk4(B, np.ones(B.shape[0]), t)
        return LaplaceResult(float(stationary(m).probs @ L), "rk4")
    val = np.sum(sol.coefficients * np.exp(sol.eigenvalues * t))
    return LaplaceResult(float(val.real), "eig", sol)


# ------------------------------------------------------------ rate functions

@dataclass(frozen=True, eq=False)
class RateFunction:
    """Per-flow rate functions ``r(-theta)`` and ``r(theta)``.

    For CSMA the Hoelder exponent ``k`` is folded in, so ``lower(theta)``
    already returns ``r(-k theta)``.
    """

    mac: str
    k: int
    mean: float
    _lower: object = field(repr=False)
    _upper: object = field(repr=False)

    def lower(self, theta):
        return self._lower(float(theta))

    def upper(self, theta):
        return self._upper(float(theta))


def aloha_rates(qs, C=1.0):
    """Rates of a flow whose hop ``j`` succeeds with probability ``qs[j]``."""
    qs = tuple(float(q) for q in np.atleast_1d(qs))
    Cs = np.broadcast_to(np.asarray(C, dtype=float), (len(qs),))

    @lru_cache(maxsize=4096)
    def lower(theta):
        return min(aloha_rate(q, c, theta, -1) for q, c in zip(qs, Cs))

    @lru_cache(maxsize=4096)
    def upper(theta):
        return max(aloha_rate(q, c, theta, 1) for q, c in zip(qs, Cs))

    mean = min(q * c for q, c in zip(qs, Cs))
    return RateFunction("aloha", len(qs), float(mean), lower, upper)


def csma_rates(m, links, k=None):
    """Rates of a flow over ``links`` that share the CSMA chain ``m``."""
    links = tuple(links)
    k = len(links) if k is None else k
    pi = stationary(m)

    @lru_cache(maxsize=4096)
    def lower(theta):
        kt = k * theta
        return min(max_real_eig(csma_B_matrix(m, l, kt)) / (-kt) for l in links)

    @lru_cache(maxsize=4096)
    def upper(theta):
        kt = k * theta
        return max(max_real_eig(csma_B_matrix(m, l, -kt)) / kt for l in links)

    mean = min(m.C * pi.mass(m.favorable[l]) for l in links)
    return RateFunction("csma", k, float(mean), lower, upper)


# ------------------------------------------------------------------- bounds

class BoundResult(NamedTuple):
    rate: float
    theta: float
    infeasible: bool


def log_binom(n, r):
    """``log C(n, r)`` through log-gamma."""
    return float(gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1))


def _golden_max(f, a, b):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > REL_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


_LOG_GRID = np.linspace(math.log(THETA_MIN), math.log(THETA_MAX), GRID_POINTS)


def maximize_log_theta(objective):
    """Maximize ``objective(theta)`` over ``[THETA_MIN, THETA_MAX]``.

    A coarse grid in ``log theta`` brackets the optimum, golden-section
    search refines it to relative tolerance ``REL_TOL``.
    """

    def g(u):
        v = objective(math.exp(u))
        return v if np.isfinite(v) else -np.inf

    vals = [g(u) for u in _LOG_GRID]
    i = int(np.argmax(vals))
    a = _LOG_GRID[max(i - 1, 0)]
    b = _LOG_GRID[min(i + 1, GRID_POINTS - 1)]
    u, v = _golden_max(g, a, b)
    if vals[i] > v:
        u, v = _LOG_GRID[i], vals[i]
    return math.exp(u), v


def _check(t, eps):
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    if not 0.0 < eps <= 1.0:
        raise ParameterError(f"eps must lie in (0,1], got {eps}")


def lower_bound_rate(rates, k, t, eps):
    """``sup_theta {r(-theta) + (log eps - log C(t+k-1, k-1)) / (theta t)}``.

    Negative optima are clamped to 0 and flagged infeasible.
    """
    _check(t, eps)
    penalty = math.log(eps) - log_binom(t + k - 1, k - 1)
    theta, val = maximize_log_theta(lambda th: rates.lower(th) + penalty / (th * t))
    if val <= 0:
        return BoundResult(0.0, theta, True)
    return BoundResult(val, theta, False)


def upper_bound_rate(rates, k, t, eps):
    """``inf_theta {r(theta) - log eps / (theta t)}``."""
    _check(t, eps)
    le = math.log(eps)
    theta, val = maximize_log_theta(lambda th: -(rates.upper(th) - le / (th * t)))
    val = -val
    if not np.isfinite(val):
        return BoundResult(math.inf, theta, True)
    return BoundResult(val, theta, False)


@dataclass(frozen=True)
class BoundCurve:
    t: np.ndarray
    lambda_L: np.ndarray
    lambda_U: np.ndarray
    theta_L: np.ndarray
    theta_U: np.ndarray
    infeasible_L: np.ndarray
    eps: float
    k: int
    mac: str

    def rows(self):
        for i in range(len(self.t)):
            yield [
                int(self.t[i]), repr(float(self.lambda_L[i])), repr(float(self.lambda_U[i])),
                repr(float(self.theta_L[i])), repr(float(self.theta_U[i])),
                repr(float(self.eps)), self.k, self.mac,
            ]

    def to_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lambda_L", "lambda_U", "theta_L", "theta_U", "eps", "k", "mac"])
            w.writerows(self.rows())
        finally:
            if own:
                fh.close()


def bound_curve(rates, k, ts, eps):
    ts = np.asarray(ts, dtype=np.int64)
    lo = [lower_bound_rate(rates, k, int(t), eps) for t in ts]
    up = [upper_bound_rate(rates, k, int(t), eps) for t in ts]
    return BoundCurve(
        ts,
        np.array([r.rate for r in lo]),
        np.array([r.rate for r in up]),
        np.array([r.theta for r in lo]),
        np.array([r.theta for r in up]),
        np.array([r.infeasible for r in lo]),
        float(eps), int(k), rates.mac,
    )


def log_time_grid(t_max, per_decade=10, t_min=1):
    """Integer times spaced evenly in ``log t``, deduplicated."""
    lo, hi = math.log10(t_min), math.log10(t_max)
    n = max(2, int(round((hi - lo) * per_decade)) + 1)
    return np.unique(np.round(np.logspace(lo, hi, n)).astype(np.int64))


# -------------------------------------------------------------- threshold

@dataclass(frozen=True)
class ThresholdSetup:
    """Rate functions for the single-hop and multi-hop strategies.

    All ``k`` transmitters hear each other.  The direct link and each relay
    hop see the same contention, so they share the success probability
    (Aloha) or the favorable-state mass (CSMA); only the rate differs.
    """

    k: int
    single: RateFunction
    multi: RateFunction


def contention_rates(k, mac, hops, C=1.0, p=None, nu=0.1, mu=0.1):
    """Rates of a ``hops``-hop flow among ``k`` mutually interfering transmitters.

    Aloha uses ``p = 1/k`` unless given, so each hop succeeds with
    ``p (1-p)^(k-1)``.  CSMA runs the chain of the complete contention graph
    on ``k`` links and the flow uses the first ``hops`` of them.
    """
    if k < 1 or not 1 <= hops <= k:
        raise ParameterError(f"need 1 <= hops <= k, got hops={hops}, k={k}")
    if mac == "aloha":
        p = 1.0 / k if p is None else p
        if not (0.0 < p < 1.0 or (k == 1 and p == 1.0)):
            raise ParameterError(f"p must lie in (0,1), got {p}")
        q = p * (1.0 - p) ** (k - 1)
        return aloha_rates([q] * hops, C)
    if mac == "csma":
        m = csma_model(ContentionGraph.complete(k), nu, mu, C=C)
        return csma_rates(m, range(hops))
    raise ParameterError(f"unknown MAC {mac!r}; expected 'aloha' or 'csma'")


def threshold_setup(k, mac, r_sh, r_mh=1.0, p=None, nu=0.1, mu=0.1):
    if not r_sh < r_mh:
        raise ParameterError(f"need r_sh < r_mh, got r_sh={r_sh}, r_mh={r_mh}")
    return ThresholdSetup(
        k,
        contention_rates(k, mac, 1, r_sh, p, nu, mu),
        contention_rates(k, mac, k, r_mh, p, nu, mu),
    )


def multi_hop_wins(setup, t, eps):
    lo = lower_bound_rate(setup.multi, setup.k, t, eps)
    up = upper_bound_rate(setup.single, 1, t, eps)
    return (not lo.infeasible) and lo.rate > up.rate


def threshold_time(k, mac, r_sh, r_mh=1.0, eps=1e-3, p=None, nu=0.1, mu=0.1,
                   cap=THRESHOLD_CAP):
    """Smallest ``t`` with multi-hop lower bound above single-hop upper bound.

    Doubling locates a crossing, binary search narrows it.  Returns ``None``
    when no crossing occurs up to ``cap``.
    """
    setup = threshold_setup(k, mac, r_sh, r_mh, p, nu, mu)
    if setup.multi.mean <= setup.single.mean:
        return None
    hi = 1
    while not multi_hop_wins(setup, hi, eps):
        if hi >= cap:
            return None
        hi = min(2 * hi, cap)
    lo = hi // 2
    # invariant: predicate false at lo (or lo == 0), true at hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if multi_hop_wins(setup, mid, eps):
            hi = mid
        else:
            lo = mid
    return hi


def threshold_scan(k, mac, r_sh, r_mh=1.0, eps=1e-3, p=None, nu=0.1, mu=0.1,
                   t_max=10**5):
    """Linear-scan reference for :func:`threshold_time`."""
    setup = threshold_setup(k, mac, r_sh, r_mh, p, nu, mu)
    for t in range(1, t_max + 1):
        if multi_hop_wins(setup, t, eps):
            return t
    return None
