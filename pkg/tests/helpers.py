"""Problem generators shared by several test modules."""

import numpy as np

from ivisnav.bus import DATA_REGS, BusState, ControlState, REG_CONTROL
from ivisnav.datapath import encode_problem
from ivisnav.estimator import EstimationProblem, SensorConstants
from ivisnav.sensor import TrueState, default_geometry, frame_problem, synthesize_frame


def random_fixed_problem(rng):
    """A full-rank frame with random pose, rates and diagonal weights, encoded for the core."""
    g = default_geometry()
    r_c = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 3.0)])
    x = rng.uniform(-1, 1, 6)
    frame = synthesize_frame(TrueState(r_c, x[:3], x[3:]), g)
    Sigma = np.diag(rng.uniform(0.5, 2.0, 6))
    return encode_problem(frame_problem(frame, g, Sigma), SensorConstants())


def singular_fixed_problem():
    return encode_problem(EstimationProblem(np.zeros((6, 6)), np.eye(6), np.ones(6)))


def bus_at(state, ctrl, send_complete, problem=None):
    """A bus placed directly in ``state`` with the given control word and data status."""
    bus = BusState(state=state)
    bus.regs[REG_CONTROL] = ctrl
    if send_complete:
        words = (list(problem.H.raw) + list(problem.W.raw) + list(problem.y.raw)) if problem else [0] * len(DATA_REGS)
        for addr, w in zip(DATA_REGS, words):
            bus.regs[addr] = w & 0xFFFFFFFF
        bus.received = set(DATA_REGS)
    return bus


def enumerate_edges(problem):
    """Step once from every (state, control bits, send-complete) combination."""
    edges = []
    for state in ControlState:
        for ctrl in range(8):
            for complete in (False, True):
                bus = bus_at(state, ctrl, complete, problem)
                bus.step()
                edges.append(((state, ctrl, complete), bus.state))
    return edges
