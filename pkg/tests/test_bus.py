import pytest

from helpers import bus_at, enumerate_edges, random_fixed_problem, singular_fixed_problem
from ivisnav import bus as b
from ivisnav.bus import (
    CTRL_READY,
    CTRL_RESTART,
    CTRL_START,
    DATA_REGS,
    ERR_SINGULAR,
    N_REGS,
    REG_CONTROL,
    REG_CYCLES,
    REG_ERROR_CODE,
    REG_H,
    REG_OVERFLOW,
    REG_STATUS,
    REG_W,
    REG_X,
    REG_Y,
    RESULT_REGS,
    STAT_COMPUTE_DONE,
    STAT_ERROR,
    STAT_SEND_COMPLETE,
    TRANSITIONS,
    BusError,
    ControlState,
    CoreFault,
    ReadNotPermitted,
    UnknownRegister,
    WriteNotPermitted,
    reset,
    restart,
    run_transaction,
    step,
    write_reg,
)
from ivisnav.datapath import hw_wls_pipeline, pipeline_cycles

IDLE, SEND, COMPUTE, DONE = ControlState


def test_register_map_layout():
    assert (REG_CONTROL, REG_STATUS, REG_H, REG_W, REG_Y, REG_X) == (0, 1, 2, 38, 74, 80)
    assert (REG_OVERFLOW, REG_CYCLES, REG_ERROR_CODE, N_REGS) == (86, 87, 88, 89)
    assert len(DATA_REGS) == 78


def test_reset():
    bus = reset()
    assert bus.state is IDLE
    assert bus.regs == [0] * N_REGS
    assert bus.read_reg(REG_STATUS) == 0


def test_reset_after_done_clears_results(rng):
    bus = reset()
    p = random_fixed_problem(rng)
    write_reg(bus, REG_CONTROL, CTRL_READY | CTRL_START)
    step(bus)
    for addr, w in zip(DATA_REGS, list(p.H.raw) + list(p.W.raw) + list(p.y.raw)):
        write_reg(bus, addr, w)
    step(bus)
    step(bus)
    assert bus.state is DONE and any(bus.regs[a] for a in RESULT_REGS)
    bus.reset()
    assert bus.state is IDLE and bus.regs == [0] * N_REGS and not bus.received


def test_start_with_ready_triggers_on_next_step():
    bus = reset()
    write_reg(bus, REG_CONTROL, CTRL_START | CTRL_READY)
    assert bus.state is IDLE
    step(bus)
    assert bus.state is SEND


@pytest.mark.parametrize("ctrl", [0, CTRL_START, CTRL_READY, CTRL_RESTART, CTRL_START | CTRL_RESTART])
def test_idle_holds_without_ready_and_start(ctrl):
    bus = reset()
    write_reg(bus, REG_CONTROL, ctrl)
    for _ in range(5):
        step(bus)
    assert bus.state is IDLE


def test_write_data_during_compute_rejected():
    bus = bus_at(COMPUTE, 0, True)
    before = list(bus.regs)
    with pytest.raises(WriteNotPermitted) as err:
        write_reg(bus, REG_H, 123)
    assert err.value.state is COMPUTE and err.value.addr == REG_H
    assert bus.regs == before and bus.state is COMPUTE


def test_unknown_register():
    bus = reset()
    for addr in (-1, N_REGS, 1000):
        with pytest.raises(UnknownRegister):
            write_reg(bus, addr, 0)
        with pytest.raises(UnknownRegister):
            bus.read_reg(addr)


def test_window_gating_exhaustive():
    for state in ControlState:
        for addr in range(N_REGS):
            bus = bus_at(state, 0, False)
            before_regs, before_state = list(bus.regs), bus.state
            allowed = addr == REG_CONTROL or (addr in DATA_REGS and state in (IDLE, SEND))
            if allowed:
                write_reg(bus, addr, 0xA5A5A5A5)
                assert bus.state is before_state
            else:
                with pytest.raises(WriteNotPermitted):
                    write_reg(bus, addr, 0xA5A5A5A5)
                assert bus.regs == before_regs and bus.state is before_state


def test_result_window_readable_only_in_done():
    for state in ControlState:
        bus = bus_at(state, 0, False)
        for addr in RESULT_REGS:
            if state is DONE:
                bus.read_reg(addr)
            else:
                with pytest.raises(ReadNotPermitted):
                    bus.read_reg(addr)
        bus.read_reg(REG_STATUS)
        bus.read_reg(REG_H)


def test_send_complete_counts_distinct_words():
    bus = reset()
    for _ in range(3):
        write_reg(bus, REG_H, 1)  # rewriting one word does not count twice
    assert not bus.send_complete
    for addr in DATA_REGS:
        write_reg(bus, addr, 0)
    assert bus.send_complete
    assert bus.read_reg(REG_STATUS) & STAT_SEND_COMPLETE


def test_send_data_waits_for_all_words():
    bus = reset()
    write_reg(bus, REG_CONTROL, CTRL_READY | CTRL_START)
    step(bus)
    for addr in list(DATA_REGS)[:-1]:
        write_reg(bus, addr, 0)
    step(bus)
    assert bus.state is SEND
    write_reg(bus, DATA_REGS[-1], 0)
    step(bus)
    assert bus.state is COMPUTE


def test_fsm_edges_enumerated(rng):
    p = random_fixed_problem(rng)
    for (state, ctrl, complete), nxt in enumerate_edges(p):
        assert nxt is state or (state, nxt) in TRANSITIONS
        ready_start = bool(ctrl & CTRL_READY) and bool(ctrl & CTRL_START)
        expected = {
            IDLE: SEND if ready_start else IDLE,
            SEND: COMPUTE if complete else SEND,
            COMPUTE: DONE,
            DONE: IDLE if ctrl & CTRL_RESTART else DONE,
        }[state]
        assert nxt is expected, (state, ctrl, complete)


def test_done_self_loop():
    bus = bus_at(DONE, CTRL_START | CTRL_READY, True)
    for _ in range(10):
        step(bus)
    assert bus.state is DONE


def test_transaction_visits_states_in_order(rng):
    bus = reset(trace=True)
    run_transaction(bus, random_fixed_problem(rng))
    edges = [e.op for e in bus.trace if "->" in e.op]
    assert edges == ["IDLE->SEND_DATA", "SEND_DATA->COMPUTE", "COMPUTE->DONE", "DONE->IDLE"]
    assert bus.state is IDLE


def test_transport_transparency(rng):
    for _ in range(10):
        p = random_fixed_problem(rng)
        via_bus = run_transaction(reset(), p)
        direct = hw_wls_pipeline(p)
        assert via_bus.same_bits(direct)


def test_status_and_cycles_latched(rng):
    bus = reset()
    p = random_fixed_problem(rng)
    write_reg(bus, REG_CONTROL, CTRL_READY | CTRL_START)
    step(bus)
    for addr, w in zip(DATA_REGS, list(p.H.raw) + list(p.W.raw) + list(p.y.raw)):
        write_reg(bus, addr, w)
    step(bus)
    step(bus)
    status = bus.read_reg(REG_STATUS)
    assert status & STAT_COMPUTE_DONE and status & STAT_SEND_COMPLETE and not status & STAT_ERROR
    assert bus.read_reg(REG_CYCLES) == pipeline_cycles(6).total
    assert bus.read_reg(REG_ERROR_CODE) == 0


def test_singular_problem_sets_error():
    bus = reset()
    with pytest.raises(CoreFault) as err:
        run_transaction(bus, singular_fixed_problem())
    assert err.value.code == ERR_SINGULAR
    assert bus.state is DONE
    assert bus.read_reg(REG_STATUS) & STAT_ERROR
    assert bus.read_reg(REG_ERROR_CODE) == ERR_SINGULAR
    assert all(bus.read_reg(a) == 0 for a in range(REG_X, REG_OVERFLOW))
    restart(bus)
    assert bus.state is IDLE and bus.regs == [0] * N_REGS


def test_back_to_back_isolation(rng):
    p1, p2 = random_fixed_problem(rng), random_fixed_problem(rng)
    bus = reset()
    run_transaction(bus, p1)
    second = run_transaction(bus, p2)
    assert second.same_bits(run_transaction(reset(), p2))
    with pytest.raises(CoreFault):
        run_transaction(bus, singular_fixed_problem())
    restart(bus)
    assert run_transaction(bus, p1).same_bits(hw_wls_pipeline(p1))


def test_transaction_requires_idle(rng):
    with pytest.raises(BusError):
        run_transaction(bus_at(DONE, 0, False), random_fixed_problem(rng))


def test_trace_dump(tmp_path, rng):
    bus = reset(trace=True)
    run_transaction(bus, random_fixed_problem(rng))
    path = tmp_path / "trace.txt"
    bus.dump_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# tick state op")
    writes = [ln for ln in lines if " write " in ln]
    assert len(writes) == 2 + len(DATA_REGS)  # start, data, restart
    assert any(ln.split()[2] == "read" and ln.split()[3] == str(REG_X) for ln in lines)
    assert "COMPUTE->DONE" in "\n".join(lines)


def test_module_level_helpers_return_bus():
    bus = b.reset()
    assert write_reg(bus, REG_CONTROL, 0) is bus
    assert step(bus) is bus
    assert bus.tick == 1
