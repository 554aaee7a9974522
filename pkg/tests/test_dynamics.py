import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipwalk.dynamics import (
    DSP,
    SSP,
    LegState,
    MassState,
    ModelParams,
    SingularConfigurationError,
    continuous_dynamics,
    guard_liftoff,
    guard_touchdown,
    leg_force,
    polar_accelerations,
    total_energy,
    touchdown_armed,
    transition_lo,
    transition_td,
)
from slipwalk.terrain import TerrainProfile, flat

P = ModelParams()


def ssp_at(mass, foot=(0.0, 0.0), L=1.02, Ld=0.0):
    st_leg = LegState.stance(mass, foot[0], foot[1], L, Ld)
    sw = LegState.swing(mass, 0.9, 0.0, -0.2)
    return SSP(st_leg, sw)


@settings(max_examples=80, deadline=None)
@given(
    x=st.floats(-0.4, 0.4),
    z=st.floats(0.8, 1.1),
    xd=st.floats(-1.0, 1.0),
    zd=st.floats(-0.5, 0.5),
    L=st.floats(0.9, 1.15),
    Ld=st.floats(-0.5, 0.5),
)
def test_cartesian_matches_polar_equations(x, z, xd, zd, L, Ld):
    mass = MassState(x, z, xd, zd)
    ph = ssp_at(mass, L=L, Ld=Ld)
    d = continuous_dynamics(ph, mass, (0.0,))
    leg = ph.stance
    rdd, thdd = polar_accelerations(leg)
    # x = r sin th, z = r cos th about the foot
    r, th, rd, thd = leg.r, leg.theta, leg.rd, leg.thetad
    ax = (rdd - r * thd**2) * math.sin(th) + (2 * rd * thd + r * thdd) * math.cos(th)
    az = (rdd - r * thd**2) * math.cos(th) - (2 * rd * thd + r * thdd) * math.sin(th)
    assert d.xdd == pytest.approx(ax, abs=1e-9)
    assert d.zdd == pytest.approx(az, abs=1e-9)
    # s'' = tau - r''
    assert d.sdd[0] == pytest.approx(-rdd, abs=1e-9)


def test_vertical_leg_at_rest_length_is_free_fall_plus_nothing():
    mass = MassState(0.0, 1.0, 0.0, 0.0)
    ph = ssp_at(mass, L=1.0)
    d = continuous_dynamics(ph, mass, (0.0,))
    assert d.xdd == pytest.approx(0.0)
    assert d.zdd == pytest.approx(-P.g)


def test_leg_force_definition():
    mass = MassState(0.0, 0.98, 0.0, -0.1)
    leg = LegState.stance(mass, 0.0, 0.0, 1.0, 0.0)
    assert leg.s == pytest.approx(0.02)
    assert leg.sd == pytest.approx(0.1)
    assert leg_force(leg) == pytest.approx(8000 * 0.02 + 100 * 0.1)


def rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def test_energy_conserved_without_damping_or_actuation():
    params = ModelParams(D=0.0)
    L = 1.03

    def f(y):
        mass = MassState(*y)
        ph = ssp_at(mass, L=L)
        d = continuous_dynamics(ph, mass, (0.0,), params)
        return np.array([d.xd, d.zd, d.xdd, d.zdd])

    y = np.array([-0.1, 0.99, 0.5, 0.0])
    e0 = total_energy(ssp_at(MassState(*y), L=L), MassState(*y), params)
    for _ in range(2000):
        y = rk4(f, y, 1e-4)
    e1 = total_energy(ssp_at(MassState(*y), L=L), MassState(*y), params)
    assert abs(e1 - e0) / e0 < 1e-8


def test_damping_dissipates():
    L = 1.03

    def f(y):
        mass = MassState(*y)
        d = continuous_dynamics(ssp_at(mass, L=L), mass, (0.0,))
        return np.array([d.xd, d.zd, d.xdd, d.zdd])

    y = np.array([0.0, 0.99, 0.0, -0.3])
    e0 = total_energy(ssp_at(MassState(*y), L=L), MassState(*y))
    for _ in range(500):
        y = rk4(f, y, 1e-4)
    assert total_energy(ssp_at(MassState(*y), L=L), MassState(*y)) < e0


def test_dsp_symmetric_legs_give_zero_horizontal_acceleration():
    mass = MassState(0.0, 0.95, 0.0, 0.0)
    a = LegState.stance(mass, -0.2, 0.0, 1.0, 0.0)
    b = LegState.stance(mass, 0.2, 0.0, 1.0, 0.0)
    d = continuous_dynamics(DSP(a, b, leg_force(a)), mass, (0.0, 0.0))
    assert d.xdd == pytest.approx(0.0, abs=1e-12)
    assert d.sdd[0] == pytest.approx(d.sdd[1])


def test_input_count_checked():
    mass = MassState(0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        continuous_dynamics(ssp_at(mass), mass, (0.0, 0.0))


def test_zero_length_leg_rejected():
    with pytest.raises(SingularConfigurationError):
        LegState.stance(MassState(0.0, 0.0, 0.0, 0.0), 0.0, 0.0, 1.0, 0.0)


def test_guards_and_transitions():
    terrain = TerrainProfile((flat(),))
    mass = MassState(0.1, 0.97, 0.4, -0.05)
    st_leg = LegState.stance(mass, 0.0, 0.0, 1.0, 0.0)
    sw = LegState.swing(mass, 0.98, 0.1, -0.2)
    ph = SSP(st_leg, sw, 0.3)
    assert guard_touchdown(ph, terrain) == pytest.approx(sw.foot_z)
    assert touchdown_armed(0.3, 0.4) and not touchdown_armed(0.1, 0.4)

    dsp = transition_td(ph, mass)
    assert dsp.s2.foot_x == pytest.approx(sw.foot_x)
    assert dsp.s2.L == sw.L and dsp.s2.Ld == sw.Ld
    assert dsp.s2.s == pytest.approx(sw.L - dsp.s2.r)
    assert dsp.F0_s1 == pytest.approx(max(leg_force(st_leg), 0.0))
    assert guard_liftoff(dsp) == pytest.approx(leg_force(dsp.s1))

    ssp = transition_lo(dsp, mass)
    assert ssp.stance is dsp.s2
    assert ssp.swing.theta == pytest.approx(dsp.s1.theta)
    assert ssp.t_phase == 0.0
