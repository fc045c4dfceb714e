"""Markov modulated transmission processes for centralized, Aloha and CSMA MACs.

Each model pairs a modulating chain ``X(t)`` with the set of states in which a
link is favorable.  A link then serves ``C`` packets per unit time while
``X(t)`` sits in one of its favorable states and nothing otherwise.
"""

import csv
import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .contention import DEFAULT_MAX_STATES, independent_sets
from .errors import ModelError, NumericError, ParameterError
from .schedule import Schedule

# above this many states the CSMA generator is kept sparse
DENSE_LIMIT = 2000


class MacKind(str, enum.Enum):
    CENTRALIZED = "centralized"
    ALOHA = "aloha"
    CSMA = "csma"


@dataclass(frozen=True, eq=False)
class MacModel:
    """Modulating chain plus per-link favorable states.

    ``generator`` is the CSMA rate matrix ``Q`` (dense ndarray or scipy
    sparse), ``pi_on`` the Aloha per-slot success probability and
    ``successor`` the centralized cyclic map.  Unused fields are ``None``.
    """

    kind: MacKind
    states: tuple
    favorable: dict
    C: float
    generator: object = None
    pi_on: float = None
    successor: tuple = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.states)
        for link, fav in self.favorable.items():
            if any(not 0 <= s < n for s in fav):
                raise ModelError(f"favorable states of link {link} outside the state space")

    @property
    def n_states(self):
        return len(self.states)

    def indicator(self, link):
        """0/1 vector over states marking the favorable ones of ``link``."""
        if link not in self.favorable:
            raise ModelError(f"link {link} has no favorable-state entry")
        v = np.zeros(self.n_states)
        v[sorted(self.favorable[link])] = 1.0
        return v

    def dense_generator(self):
        if self.generator is None:
            raise ModelError(f"{self.kind.value} model has no generator matrix")
        if scipy.sparse.issparse(self.generator):
            return self.generator.toarray()
        return np.asarray(self.generator)

    def generator_csv(self, path_or_file):
        """Dense row-major generator with a header of state labels."""
        Q = self.dense_generator()
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([state_label(s) for s in self.states])
            for row in Q:
                w.writerow([repr(float(x)) for x in row])
        finally:
            if own:
                fh.close()


def state_label(state):
    if isinstance(state, (tuple, frozenset)):
        return "{" + " ".join(str(x) for x in sorted(state)) + "}"
    return str(state)


@dataclass(frozen=True)
class StationaryDist:
    states: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-12 * max(1, len(p)):
            raise NumericError("stationary vector is not a probability distribution")
        p = np.clip(p, 0.0, None)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    def __getitem__(self, state):
        return self.probs[self.states.index(state)]

    def mass(self, indices):
        return float(self.probs[sorted(indices)].sum())


def aloha_model(g, link, p, C=1.0):
    """Two-state on/off model of ``link`` under slotted Aloha."""
    if not 0.0 < p < 1.0:
        raise ParameterError(f"Aloha transmit probability must lie in (0,1), got {p}")
    if not 0 <= link < g.n_links:
        raise ModelError(f"link {link} not in contention graph")
    deg = g.degree(link)
    q = p * (1.0 - p) ** deg
    return MacModel(
        MacKind.ALOHA,
        ("off", "on"),
        {link: frozenset({1})},
        C,
        pi_on=q,
        params={"p": p, "link": link, "degree": deg},
    )


def csma_model(g, nu, mu, C=1.0, max_states=DEFAULT_MAX_STATES):
    """Idealized CSMA chain over the independent sets of ``g``.

    ``Q(s, s+{i}) = nu`` for each addable link, ``Q(s, s-{i}) = mu`` for each
    active link.
    """
    if nu <= 0 or mu <= 0:
        raise ParameterError(f"CSMA rates must be positive, got nu={nu}, mu={mu}")
    states = independent_sets(g, max_states)
    index = {s: i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, s in enumerate(states):
        members = set(s)
        for l in range(g.n_links):
            if l in members:
                j = index[tuple(x for x in s if x != l)]
                rate = mu
            elif not any(m in members for m in g.neighbors(l)):
                j = index[tuple(sorted(s + (l,)))]
                rate = nu
            else:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(rate)
    n = len(states)
    off = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    diag = -np.asarray(off.sum(axis=1)).ravel()
    if n <= DENSE_LIMIT:
        Q = off.toarray()
        Q[np.diag_indices(n)] = diag
        Q.flags.writeable = False
    else:
        Q = (off + scipy.sparse.diags(diag)).tocsr()
    fav = {l: frozenset(i for i, s in enumerate(states) if l in s) for l in range(g.n_links)}
    return MacModel(
        MacKind.CSMA, tuple(states), fav, C, generator=Q,
        params={"nu": nu, "mu": mu, "graph": g},
    )


def centralized_model(schedule, C=1.0):
    """Deterministic cycle over schedule positions."""
    if not isinstance(schedule, Schedule):
        schedule = Schedule(tuple(schedule))
    K = len(schedule.slots)
    fav = {
        l: frozenset(i for i, s in enumerate(schedule.slots) if l in s)
        for l in schedule.links()
    }
    succ = tuple(schedule.successor(i) for i in range(K))
    return MacModel(
        MacKind.CENTRALIZED, tuple(range(K)), fav, C, successor=succ,
        params={"schedule": schedule},
    )


def product_form(states, nu, mu):
    """``pi(s) proportional to (nu/mu)^|s|``, evaluated in log space."""
    sizes = np.array([len(s) for s in states], dtype=float)
    logw = sizes * np.log(nu / mu)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def _solve_generator(Q):
    n = Q.shape[0]
    if scipy.sparse.issparse(Q):
        A = Q.T.tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[-1] = 1.0
        pi = scipy.sparse.linalg.spsolve(A.tocsc(), b)
        resid = np.abs(Q.T @ pi).max()
    else:
        A = np.array(Q.T)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = scipy.linalg.solve(A, b)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise NumericError(f"singular stationary system: {exc}") from exc
        resid = np.abs(pi @ Q).max()
    if not np.all(np.isfinite(pi)):
        raise NumericError("stationary solve returned non-finite values", residual=resid)
    scale = max(1.0, np.abs(Q).max() if not scipy.sparse.issparse(Q) else abs(Q).max())
    if resid > 1e-9 * scale:
        raise NumericError(f"stationary residual {resid:.3e} too large", residual=resid)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary(m):
    if m.kind is MacKind.ALOHA:
        return StationaryDist(m.states, np.array([1.0 - m.pi_on, m.pi_on]))
    if m.kind is MacKind.CENTRALIZED:
        # positions before the loop are visited once and carry no mass
        start = m.successor[-1]
        p = np.zeros(m.n_states)
        p[start:] = 1.0 / (m.n_states - start)
        return StationaryDist(m.states, p)
    return StationaryDist(m.states, _solve_generator(m.generator))


def mean_rate(m, link):
    """Long-run service rate ``C * pi(favorable)`` of ``link``."""
    return m.C * stationary(m).mass(m.favorable[link])


def is_generator(Q, tol=1e-12):
    Q = Q.toarray() if scipy.sparse.issparse(Q) else np.asarray(Q)
    off = Q - np.diag(np.diag(Q))
    return bool(np.all(off >= 0) and np.all(np.abs(Q.sum(axis=1)) <= tol * max(1.0, np.abs(Q).max())))


__all__ = [
    "MacKind", "MacModel", "StationaryDist", "aloha_model", "csma_model",
    "centralized_model", "stationary", "product_form", "mean_rate",
    "is_generator", "state_label",
]
