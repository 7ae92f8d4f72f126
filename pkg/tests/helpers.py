"""Shared toy instances for the scheduler / MPC test modules."""

import numpy as np

from gridflex import thermal as th


def scalar_reserve_model(u_max=10.0, a_diag=0.0):
    """One state, one input which is also the reserve actuator, y = x."""
    return th.LtvBuildingModel(
        name="scalar", a=np.array([[a_diag]]), b_steps=np.array([[[1.0]]]),
        e=np.array([[0.0]]), c=np.array([[1.0]]),
        d_steps=np.zeros((1, 1, 1)), f=np.zeros((1, 1)),
        u_min=np.zeros(1), u_max=np.array([u_max]),
        reserve_actuator_index=(0,), actuator_sign=(1,), cop=(1.0,),
        floor_area=1000.0, input_electric_factor=np.array([1.0]))


def loose_trace(n, n_v=1, y_lo=-1e3, y_hi=1e3):
    return th.DisturbanceTrace(
        v=np.zeros((n, n_v)), occupied=np.ones(n, dtype=bool),
        y_min=np.full((n, 1), y_lo), y_max=np.full((n, 1), y_hi))


def scalar_reserve_stack(n_steps=1, u_max=10.0):
    model = scalar_reserve_model(u_max=u_max)
    trace = loose_trace(n_steps)
    stacked = th.stack_building(model, np.zeros(1), trace, n_steps)
    return model, trace, stacked


def heating_toy_model(sign=1):
    """Two-state building, heating (or cooling) input plus a free input."""
    a = np.array([[0.85, 0.10], [0.05, 0.92]])
    b = np.array([[0.6 * sign, 0.0], [0.05 * sign, 0.0]])
    b[0, 1] = 0.2  # second input heats the room a little, not reservable
    return th.LtvBuildingModel(
        name="heat-toy", a=a, b_steps=b[None], e=np.array([[0.08], [0.02]]),
        c=np.array([[1.0, 0.0]]), d_steps=np.zeros((1, 1, 2)),
        f=np.zeros((1, 1)),
        u_min=np.zeros(2), u_max=np.array([10.0, 4.0]),
        reserve_actuator_index=(0,), actuator_sign=(sign,), cop=(3.0,),
        floor_area=1000.0, input_electric_factor=np.array([1 / 3.0, 1.0]))


def comfort_trace(n, lo=19.0, hi=23.0, amb=10.0):
    v = np.full((n, 1), amb)
    return th.DisturbanceTrace(
        v=v, occupied=np.ones(n, dtype=bool),
        y_min=np.full((n, 1), lo), y_max=np.full((n, 1), hi))


def heating_toy_stack(n_steps=4, lo=19.0, hi=23.0, x0=21.0, building_id=0):
    model = heating_toy_model()
    trace = comfort_trace(n_steps, lo=lo, hi=hi)
    x0v = np.array([x0, x0])
    return model, trace, th.stack_building(model, x0v, trace, n_steps,
                                           building_id=building_id)


def mixed_reserve_stack(n_steps=3):
    """Building with one heating and one cooling reserve actuator."""
    a = np.array([[0.85, 0.10], [0.05, 0.92]])
    b = np.array([[0.6, -0.5], [0.05, -0.02]])
    model = th.LtvBuildingModel(
        name="mixed-toy", a=a, b_steps=b[None], e=np.array([[0.08], [0.02]]),
        c=np.array([[1.0, 0.0]]), d_steps=np.zeros((1, 1, 2)),
        f=np.zeros((1, 1)),
        u_min=np.zeros(2), u_max=np.array([10.0, 8.0]),
        reserve_actuator_index=(0, 1), actuator_sign=(1, -1), cop=(3.0, 3.5),
        floor_area=1000.0, input_electric_factor=np.array([1 / 3.0, 1 / 3.5]))
    trace = comfort_trace(n_steps, lo=15.0, hi=27.0)
    x0 = np.array([21.0, 21.0])
    return model, trace, th.stack_building(model, x0, trace, n_steps)
