"""Exact (min,+) algebra on cumulative processes and bivariate impulse responses.

A cumulative process ``A(t)`` counts packets seen in ``[0, t]``; an impulse
response ``S(s, t)`` counts packets a saturated hop would serve in ``(s, t]``.
The output of a hop is the (min,+) convolution

    D(t) = min_{0 <= s <= t} { A(s) + S(s, t) }

and tandem hops collapse into one response by composition.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import HorizonError, ModelError
from .schedule import Schedule


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class CumulativeProcess:
    """Packet counts ``values[t]`` for slots ``t = 0..horizon``.

    ``CumulativeProcess.saturation()`` is the impulse input: zero at ``t = 0``
    and infinite afterwards.  It carries no numeric table.
    """

    values: np.ndarray = None
    saturated: bool = False

    def __post_init__(self):
        if self.saturated:
            object.__setattr__(self, "values", None)
            return
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ModelError("cumulative process needs a non-empty 1-D sequence")
        if v[0] != 0:
            raise ModelError("cumulative process must start at 0")
        if np.any(np.diff(v) < 0):
            raise ModelError("cumulative process must be nondecreasing")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def saturation(cls):
        return cls(saturated=True)

    @classmethod
    def from_arrivals(cls, per_slot):
        """Build from per-slot counts ``a(1), a(2), ...``."""
        return cls(np.concatenate([[0], np.cumsum(per_slot)]))

    @property
    def horizon(self):
        return None if self.saturated else len(self.values) - 1

    def __call__(self, t):
        if self.saturated:
            return 0 if t == 0 else np.inf
        return self.values[t]


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """Lower-triangular table ``table[s, t] = S(s, t)`` for ``0 <= s <= t <= T``.

    Entries with ``s > t`` are stored as zero and never read.
    """

    table: np.ndarray
    increments: np.ndarray = field(default=None)

    def __post_init__(self):
        tab = np.asarray(self.table)
        if tab.ndim != 2 or tab.shape[0] != tab.shape[1]:
            raise ModelError("impulse response table must be square")
        tab = np.triu(tab)
        if np.any(np.diag(tab) != 0):
            raise ModelError("impulse response must vanish on the diagonal S(t,t)")
        if np.any(tab < 0):
            raise ModelError("impulse response must be nonnegative")
        object.__setattr__(self, "table", _frozen(tab))
        if self.increments is not None:
            object.__setattr__(self, "increments", _frozen(self.increments))

    @classmethod
    def from_increments(cls, increments):
        """``S(s, t) = sum_{u=s+1}^{t} increments[u-1]``."""
        inc = np.asarray(increments)
        if np.any(inc < 0):
            raise ModelError("increments must be nonnegative")
        cum = np.concatenate([np.zeros(1, dtype=inc.dtype), np.cumsum(inc)])
        return cls(cum[None, :] - cum[:, None], increments=inc)

    @classmethod
    def zero(cls, horizon, dtype=np.int64):
        return cls(np.zeros((horizon + 1, horizon + 1), dtype=dtype))

    @property
    def horizon(self):
        return self.table.shape[0] - 1

    def __call__(self, s, t):
        if t > self.horizon or s > t or s < 0:
            raise HorizonError(f"S({s},{t}) outside 0 <= s <= t <= {self.horizon}")
        return self.table[s, t]

    def __eq__(self, other):
        if not isinstance(other, ImpulseResponse):
            return NotImplemented
        return self.table.shape == other.table.shape and np.array_equal(
            self.table, other.table
        )

    def __mul__(self, other):
        return compose(self, other)

    def to_csv(self, path_or_file):
        """Write rows ``s,t,value`` for every ``s <= t``."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "value"])
            n = self.horizon
            for s in range(n + 1):
                for t in range(s, n + 1):
                    w.writerow([s, t, self.table[s, t]])
        finally:
            if own:
                fh.close()


def _as_float(tab):
    return np.ascontiguousarray(tab, dtype=np.float64)


def _restore_dtype(values, like):
    if np.issubdtype(like.dtype, np.integer):
        return values.astype(like.dtype)
    return values


def convolve(A, S, t):
    """``min_{0<=s<=t} {A(s) + S(s, t)}`` for a single slot ``t``."""
    if t < 0 or t > S.horizon:
        raise HorizonError(f"t={t} beyond impulse response horizon {S.horizon}")
    if A.saturated:
        return S.table[0, t]
    if t > A.horizon:
        raise HorizonError(f"t={t} beyond arrival horizon {A.horizon}")
    return np.min(A.values[: t + 1] + S.table[: t + 1, t])


def convolve_all(A, S):
    """The whole output process ``A * S`` over the common horizon."""
    if A.saturated:
        return CumulativeProcess(S.table[0].copy())
    n = min(A.horizon, S.horizon)
    out = _core.minplus_convolve(
        _as_float(A.values[: n + 1]), _as_float(S.table[: n + 1, : n + 1])
    )
    return CumulativeProcess(_restore_dtype(out, S.table))


def compose(S1, S2):
    """``(S1 * S2)(s, t) = min_{s<=u<=t} {S1(s, u) + S2(u, t)}``."""
    if S1.horizon != S2.horizon:
        raise HorizonError(
            f"cannot compose horizons {S1.horizon} and {S2.horizon}"
        )
    out = _core.minplus_compose(_as_float(S1.table), _as_float(S2.table))
    like = S1.table if S1.table.dtype == S2.table.dtype else out
    return ImpulseResponse(_restore_dtype(out, like))


def compose_all(responses):
    responses = list(responses)
    if not responses:
        raise ModelError("need at least one impulse response")
    out = responses[0]
    for S in responses[1:]:
        out = compose(out, S)
    return out


def centralized_impulse(schedule, link, C, T_max, offset=0):
    """Deterministic response of ``link`` under a centralized schedule.

    ``S(s, t) = C * #{u in (max(s, offset), t] : link scheduled in slot u}``.
    ``offset`` is the causality offset of the hop: with hop index ``h``
    (1-based) along a flow, ``offset = h - 1`` keeps the composed end-to-end
    response causal at ``s = 0``.
    """
    if not isinstance(schedule, Schedule):
        schedule = Schedule(tuple(schedule))
    if link not in schedule.links():
        raise ModelError(f"link {link} never appears in the schedule")
    inc = np.array(
        [C if link in schedule.links_at(u) else 0 for u in range(1, T_max + 1)]
    )
    if T_max == 0:
        inc = np.zeros(0, dtype=np.asarray(C).dtype)
    S = ImpulseResponse.from_increments(inc)
    if offset <= 0:
        return S
    tab = np.array(S.table)
    lo = min(offset, T_max)
    # rows below the offset behave like row `offset`
    for s in range(lo):
        tab[s, lo:] = tab[lo, lo:]
        tab[s, s:lo] = 0
    return ImpulseResponse(tab)
