import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecogear.cycle import (
    KMH,
    NEDC_SEGMENTS,
    DrivingCycle,
    derive_accel,
    gen_nedc,
    horizon_at,
    load_cycle,
    windows,
)
from ecogear.errors import ContractError, CycleError


def test_load_headerless_rows():
    c = load_cycle(io.StringIO("0,0\n1,1\n2,2\n"))
    assert len(c) == 3
    np.testing.assert_array_equal(c.v, [0, 1, 2])
    np.testing.assert_array_equal(c.alpha, [0, 0, 0])


def test_load_with_header_and_slope():
    c = load_cycle(io.StringIO("t,v,alpha\n0,0,0.01\n0.5,1,0.02\n"))
    assert c.dt == 0.5
    np.testing.assert_array_equal(c.alpha, [0.01, 0.02])


def test_load_non_uniform_step_reports_line():
    with pytest.raises(CycleError, match="line 4"):
        load_cycle(io.StringIO("t,v\n0,0\n1,1\n3,2\n"))


def test_load_negative_speed_reports_line():
    with pytest.raises(CycleError, match="line 3: negative speed"):
        load_cycle(io.StringIO("t,v\n0,0\n1,-1\n"))


@pytest.mark.parametrize("text, line", [
    ("t,v\n0,0\n1\n", 3),
    ("t,v\n0,0\n1,abc\n", 3),
    ("t,speed\n0,0\n", 1),
    ("", 1),
])
def test_load_malformed(text, line):
    with pytest.raises(CycleError, match=f"line {line}"):
        load_cycle(io.StringIO(text))


def test_load_from_path_round_trip(tmp_path):
    c = gen_nedc()
    path = tmp_path / "nedc.csv"
    path.write_text(c.to_csv())
    back = load_cycle(path)
    np.testing.assert_array_equal(back.t, c.t)
    np.testing.assert_array_equal(back.v, c.v)


def test_nedc_shape():
    c = gen_nedc(1.0)
    assert len(c) == 1181
    assert c.t[-1] == 1180.0
    assert c.v[0] == 0.0
    assert sum(seg[0] for seg in NEDC_SEGMENTS) == 1180


def test_nedc_distance():
    c = gen_nedc()
    # trapezoid rule over the uniform grid
    dist = float(np.sum(c.v[1:] + c.v[:-1]) / 2 * c.dt)
    assert dist == pytest.approx(11000, abs=100)


def test_nedc_deterministic_and_gentle():
    a, b = gen_nedc(), gen_nedc()
    np.testing.assert_array_equal(a.v, b.v)
    assert np.max(np.abs(derive_accel(a))) <= 1.5
    assert np.max(a.v) == pytest.approx(120 * KMH)


def test_nedc_rejects_bad_dt():
    with pytest.raises(CycleError):
        gen_nedc(0.7)
    with pytest.raises(CycleError):
        gen_nedc(0.0)


def test_derive_accel_examples():
    flat = DrivingCycle(t=[0, 1, 2, 3], v=[5, 5, 5, 5], alpha=None)
    np.testing.assert_array_equal(derive_accel(flat), 0.0)
    ramp = DrivingCycle(t=[0, 1, 2], v=[0, 1, 2], alpha=None)
    np.testing.assert_array_equal(derive_accel(ramp), [1, 1, 1])
    hold = DrivingCycle(t=[0, 1, 2, 3, 4], v=[0, 1, 2, 2, 2], alpha=None)
    np.testing.assert_array_equal(derive_accel(hold), [1, 1, 0, 0, 0])
    with pytest.raises(CycleError):
        derive_accel(DrivingCycle(t=[0], v=[0], alpha=None))


def test_cycle_invariants():
    with pytest.raises(CycleError):
        DrivingCycle(t=[0, 1, 3], v=[0, 0, 0], alpha=None)
    with pytest.raises(CycleError):
        DrivingCycle(t=[0, 1], v=[0, -1], alpha=None)
    with pytest.raises(CycleError):
        DrivingCycle(t=[0, 1], v=[0], alpha=None)


def test_window_counts(nedc):
    c = DrivingCycle(t=np.arange(10.0), v=np.arange(10.0), alpha=None)
    assert len(windows(c, 8)) == 2
    assert len(windows(c, 8, stride=10)) == 1
    assert len(windows(nedc, 8)) == 1173
    with pytest.raises(ContractError):
        windows(c, 10)


@given(st.integers(1, 12), st.integers(1, 40))
def test_window_slices(N, stride):
    c = gen_nedc()
    a = derive_accel(c)
    ws = windows(c, N, stride)
    for k, s in enumerate(ws[:50]):
        start = k * stride
        np.testing.assert_array_equal(s.v_ref, c.v[start:start + N])
        np.testing.assert_array_equal(s.a_ref, a[start:start + N])
        assert s.x0 == 0.0 and s.N == N


def test_horizon_padding_holds_last_speed():
    c = DrivingCycle(t=np.arange(5.0), v=[0, 1, 2, 3, 4], alpha=None)
    a = derive_accel(c)
    s = horizon_at(c, 3, 4, a)
    np.testing.assert_array_equal(s.v_ref, [3, 4, 4, 4])
    np.testing.assert_array_equal(s.a_ref, [1, 1, 0, 0])
    with pytest.raises(ContractError):
        horizon_at(c, 5, 4, a)
