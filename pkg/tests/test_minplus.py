import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transcap.errors import HorizonError, ModelError
from transcap.minplus import (
    CumulativeProcess, ImpulseResponse, centralized_impulse, compose, compose_all,
    convolve, convolve_all,
)
from transcap.schedule import Schedule, line_schedule

from oracles import compose_bruteforce, convolve_bruteforce, table_from_increments

increments = st.lists(st.integers(0, 3), min_size=1, max_size=10)


def _closed_form(T, s_lo, t_shift):
    # C=1; sum over u of [(u-1) % 3 == 0]
    tab = np.zeros((T + 1, T + 1), dtype=np.int64)
    for s in range(T + 1):
        for t in range(s, T + 1):
            tab[s, t] = sum(1 for u in range(max(s, s_lo) + 1, t - t_shift + 1) if (u - 1) % 3 == 0)
    return tab


def test_cumulative_process_invariants():
    with pytest.raises(ModelError):
        CumulativeProcess([1, 2])
    with pytest.raises(ModelError):
        CumulativeProcess([0, 2, 1])
    A = CumulativeProcess.from_arrivals([1, 0, 2])
    assert list(A.values) == [0, 1, 1, 3]
    assert A.horizon == 3
    sat = CumulativeProcess.saturation()
    assert sat(0) == 0 and sat(5) == np.inf and sat.values is None


def test_impulse_response_invariants():
    with pytest.raises(ModelError):
        ImpulseResponse(np.array([[1, 1], [0, 0]]))
    with pytest.raises(ModelError):
        ImpulseResponse(np.array([[0, -1], [0, 0]]))
    S = ImpulseResponse.from_increments([0, 1, 0, 1])
    assert S(0, 4) == 2 and S(1, 4) == 2 and S(2, 4) == 1 and S(3, 3) == 0
    with pytest.raises(HorizonError):
        S(0, 5)
    with pytest.raises(ValueError):
        S.table[0, 1] = 7


def test_convolve_spec_example_against_loop():
    A = CumulativeProcess([0, 1, 1, 1, 1])
    S = ImpulseResponse.from_increments([0, 1, 0, 1])
    for t in range(5):
        assert convolve(A, S, t) == convolve_bruteforce(A.values, S.table, t)
    assert [convolve(A, S, t) for t in range(5)] == [0, 0, 1, 1, 1]


def test_convolve_zero_service_and_horizon():
    A = CumulativeProcess([0, 2, 3])
    Z = ImpulseResponse.zero(2)
    assert all(convolve(A, Z, t) == 0 for t in range(3))
    with pytest.raises(HorizonError):
        convolve(A, Z, 3)
    with pytest.raises(HorizonError):
        convolve(CumulativeProcess([0, 1]), Z, 2)


def test_saturated_input_returns_first_row():
    S = ImpulseResponse.from_increments([1, 0, 2, 1])
    sat = CumulativeProcess.saturation()
    assert [convolve(sat, S, t) for t in range(5)] == list(S.table[0])
    assert list(convolve_all(sat, S).values) == list(S.table[0])


def test_compose_with_zero_is_zero():
    S = ImpulseResponse.from_increments([1, 2, 0, 1])
    Z = ImpulseResponse.zero(4)
    assert compose(S, Z) == Z and compose(Z, S) == Z


def test_compose_horizon_mismatch():
    with pytest.raises(HorizonError):
        compose(ImpulseResponse.zero(3), ImpulseResponse.zero(4))


def test_table_csv_roundtrip():
    S = ImpulseResponse.from_increments([1, 0, 2])
    buf = io.StringIO()
    S.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "s,t,value"
    assert len(lines) == 1 + 10
    assert "0,3,3" in lines


def test_centralized_link2_allocation():
    sched = line_schedule()
    S2 = centralized_impulse(sched, 1, 1, 12, offset=1)
    assert S2(2, 5) == 1
    # link 2 (0-based 1) is granted slots 2, 5, 8, 11
    assert [int(S2(u - 1, u)) for u in range(2, 13)] == [1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0]
    assert np.all(centralized_impulse(sched, 3, 1, 0).table == 0)
    with pytest.raises(ModelError):
        centralized_impulse(sched, 7, 1, 5)


def test_centralized_single_entry_schedule():
    S = centralized_impulse(Schedule(({0},)), 0, 2, 5)
    assert list(S.table[0]) == [0, 2, 4, 6, 8, 10]


def test_e2e_composition_matches_closed_form_at_origin():
    T = 30
    sched = line_schedule()
    E = compose_all(centralized_impulse(sched, l, 1, T, offset=l) for l in range(4))
    # from s = 0 the composed response is the schedule sum with the sum
    # started after the causality offset 3
    assert np.array_equal(E.table[0], _closed_form(T, 3, 0)[0])
    # over the whole domain the exact e2e response carries the pipeline
    # latency of three slots
    assert np.array_equal(E.table, _closed_form(T, 0, 3))


def test_e2e_composition_offsets_do_not_change_result():
    T = 25
    sched = line_schedule()
    plain = compose_all(centralized_impulse(sched, l, 1, T) for l in range(4))
    clamped = compose_all(centralized_impulse(sched, l, 1, T, offset=l) for l in range(4))
    assert plain == clamped


def test_e2e_single_packet_departs_at_slot_4():
    T = 10
    sched = line_schedule()
    E = compose_all(centralized_impulse(sched, l, 1, T, offset=l) for l in range(4))
    A = CumulativeProcess.from_arrivals([1] + [0] * (T - 1))
    D = [convolve(A, E, t) for t in range(T + 1)]
    assert D[3] == 0 and D[4] == 1


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_compose_associative_and_matches_oracle(data):
    n = data.draw(st.integers(1, 9))
    S1, S2, S3 = (
        ImpulseResponse.from_increments(data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n)))
        for _ in range(3)
    )
    left = compose(compose(S1, S2), S3)
    right = compose(S1, compose(S2, S3))
    assert left == right
    assert np.array_equal(compose(S1, S2).table, compose_bruteforce(S1.table, S2.table))


@settings(max_examples=60, deadline=None)
@given(increments, st.data())
def test_convolve_monotone_isotone_and_matches_oracle(inc, data):
    n = len(inc)
    S = ImpulseResponse.from_increments(inc)
    a = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    bump = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    A = CumulativeProcess.from_arrivals(a)
    A2 = CumulativeProcess.from_arrivals([x + y for x, y in zip(a, bump)])
    D = [convolve(A, S, t) for t in range(n + 1)]
    D2 = [convolve(A2, S, t) for t in range(n + 1)]
    assert all(x <= y for x, y in zip(D, D[1:]))
    assert all(x <= y for x, y in zip(D, D2))
    assert D == [convolve_bruteforce(A.values, S.table, t) for t in range(n + 1)]
    assert list(convolve_all(A, S).values) == D


def test_increment_consistency():
    inc = [2, 0, 1, 3]
    S = ImpulseResponse.from_increments(inc)
    assert np.array_equal(S.table, table_from_increments(inc))
