import json
import socket
import time

import numpy as np
import pytest

from rtaccomp.audiofile import read_stems
from rtaccomp.control import CommandError, ControlServer, PerformanceSession


def make_stems(cfg, n_steps, rng, predicted="bass"):
    n = n_steps * cfg.step_samples
    return {
        "drums": (rng.standard_normal(n) * 0.2).astype(np.float32),
        "guitar": (rng.standard_normal(n) * 0.1).astype(np.float32),
        "piano": np.zeros(n, dtype=np.float32),
    }


def run_session(cfg, stems, generator="echo:0", time_scale=0.2, **kw):
    session = PerformanceSession(
        cfg, stems, generator=generator, time_scale=time_scale, block_size=500, **kw
    )
    try:
        session.start()
        session.run_to_completion(timeout=60.0)
    finally:
        session.close()
    return session


class TestFeasibleSession:
    def test_echo_session_clean_and_sample_exact(self, small_cfg, rng):
        n_steps = 12
        stems = make_stems(small_cfg, n_steps, rng)
        session = run_session(small_cfg, stems)

        assert session.state.underruns == 0
        step = small_cfg.step_samples
        delay = (small_cfg.lookahead_w + 1) * step
        mixture = stems["drums"] + stems["guitar"] + stems["piano"]
        predicted = session.buffer.stems["bass"]
        n = n_steps * step
        np.testing.assert_allclose(
            predicted[delay:n], mixture[: n - delay], atol=1e-6
        )
        assert not predicted[:delay].any()

    def test_every_cycle_yields_one_metric(self, small_cfg, rng):
        n_steps = 8
        session = run_session(small_cfg, make_stems(small_cfg, n_steps, rng))
        events = session.metrics()
        assert sorted(ev.step_id for ev in events) == list(range(n_steps))
        assert all(not ev.dropped for ev in events)
        assert all(ev.rt_budget_ms == small_cfg.budget_ms for ev in events)
        assert all(ev.stem == "bass" for ev in events)

    def test_metric_stages_come_from_server(self, small_cfg, rng):
        session = run_session(small_cfg, make_stems(small_cfg, 6, rng))
        ev = session.metrics()[-1]
        stage_sum = sum(ev.stages.as_dict().values())
        assert stage_sum > 0.0
        assert ev.total_ms > 0.0


class TestInfeasibleSession:
    def test_slow_generator_underruns_early(self, small_cfg, rng):
        # 600 ms injected per cycle against a 250 ms budget: predictions
        # always land late, so playback hits uncovered samples right after
        # the warm-up region
        n_steps = 8
        session = run_session(
            small_cfg,
            make_stems(small_cfg, n_steps, rng),
            generator="wrapped:echo:0:600",
        )
        assert session.state.underruns > 0
        flagged = [ev for ev in session.metrics() if ev.underrun or ev.dropped]
        assert flagged
        warmup_steps = small_cfg.lookahead_w + 1
        assert min(ev.step_id for ev in flagged) <= warmup_steps + 2


class TestCommands:
    @pytest.fixture
    def idle_session(self, small_cfg, rng):
        session = PerformanceSession(
            small_cfg, make_stems(small_cfg, 8, rng), time_scale=0.2, block_size=500
        )
        session.start()
        yield session
        session.close()

    def test_set_params_staged_then_applied(self, idle_session):
        reply = idle_session.handle(
            {"cmd": "set_params", "params": {"step_ratio": "1/8"}}
        )
        assert reply["staged"]
        # still on the old ratio until a boundary passes
        assert idle_session.describe()["params"]["step_ratio"] == "1/4"
        idle_session.handle({"cmd": "next"})
        assert idle_session.describe()["params"]["step_ratio"] == "1/8"
        assert idle_session.describe()["rt_budget_ms"] == 125.0

    def test_set_params_rejects_invalid(self, idle_session):
        with pytest.raises(CommandError):
            idle_session.handle(
                {"cmd": "set_params", "params": {"step_ratio": "3/10"}}
            )
        with pytest.raises(CommandError):
            idle_session.handle({"cmd": "set_params", "params": {"tempo": 120}})
        with pytest.raises(CommandError):
            # prediction window would extend past the receptive field
            idle_session.handle(
                {"cmd": "set_params", "params": {"step_ratio": "1/1"}}
            )

    def test_select_instrument(self, idle_session):
        reply = idle_session.handle({"cmd": "select_instrument", "stem": "guitar"})
        assert reply["predicted_stem"] == "guitar"
        assert idle_session.describe()["predicted_stem"] == "guitar"
        with pytest.raises(CommandError):
            idle_session.handle({"cmd": "select_instrument", "stem": "theremin"})

    def test_next_services_one_cycle_while_stopped(self, idle_session):
        reply = idle_session.handle({"cmd": "next"})
        assert reply["triggered"]
        deadline = time.monotonic() + 5.0
        while not idle_session.metrics() and time.monotonic() < deadline:
            time.sleep(0.01)
        events = idle_session.metrics()
        assert events and events[0].step_id == 0

    def test_play_stop_gate_the_clock(self, idle_session):
        assert idle_session.handle({"cmd": "play"}) == {"playing": True}
        time.sleep(0.2)
        assert idle_session.handle({"cmd": "stop"}) == {"playing": False}
        cursor = idle_session.state.playback_cursor
        assert cursor > 0
        time.sleep(0.2)
        assert idle_session.state.playback_cursor == cursor

    def test_clean_resets_generated_state(self, idle_session):
        idle_session.handle({"cmd": "next"})
        time.sleep(0.2)
        idle_session.handle({"cmd": "clean"})
        assert not idle_session.buffer.committed.any()
        assert not idle_session.state.outstanding
        assert idle_session.state.underruns == 0

    def test_unknown_command_rejected(self, idle_session):
        with pytest.raises(CommandError):
            idle_session.handle({"cmd": "selfdestruct"})

    def test_describe_shape(self, idle_session):
        state = idle_session.describe()
        assert set(state["params"]) >= {
            "step_ratio",
            "lookahead_w",
            "fade_samples",
            "packet_size",
        }
        assert len(state["waveforms"]["mixture"]) <= 2000
        assert len(state["waveforms"]["predicted"]) <= 2000

    def test_write_round_trips_stems(self, idle_session, tmp_path):
        path = tmp_path / "session.wav"
        idle_session.handle({"cmd": "write", "path": str(path)})
        sr, stems = read_stems(str(path))
        assert sr == idle_session.state.cfg.sample_rate
        assert set(stems) == {"bass", "drums", "guitar", "piano"}


class TestMetricsFanout:
    def test_subscriber_gets_backlog_and_live_events(self, small_cfg, rng):
        session = PerformanceSession(
            small_cfg, make_stems(small_cfg, 6, rng), time_scale=0.2, block_size=500
        )
        try:
            session.start()
            session.handle({"cmd": "next"})
            deadline = time.monotonic() + 5.0
            while not session.metrics() and time.monotonic() < deadline:
                time.sleep(0.01)
            q = session.subscribe()
            backlog = q.get(timeout=1.0)
            assert backlog.step_id == 0
            session.handle({"cmd": "next"})
            live = q.get(timeout=5.0)
            assert live.step_id == 1
            session.unsubscribe(q)
        finally:
            session.close()


class TcpClient:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5.0)
        self.sock.settimeout(5.0)
        self.buf = b""
        self.next_id = 0
        self.events = []

    def _read_line(self):
        while b"\n" not in self.buf:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("closed")
            self.buf += data
        line, self.buf = self.buf.split(b"\n", 1)
        return json.loads(line)

    def request(self, cmd, **fields):
        rid = self.next_id
        self.next_id += 1
        msg = {"id": rid, "cmd": cmd, **fields}
        self.sock.sendall((json.dumps(msg) + "\n").encode())
        # events pushed while waiting for the reply are kept for next_event
        while True:
            obj = self._read_line()
            if obj.get("id") == rid:
                return obj
            if obj.get("event") == "metric":
                self.events.append(obj["data"])

    def next_event(self):
        if self.events:
            return self.events.pop(0)
        while True:
            obj = self._read_line()
            if obj.get("event") == "metric":
                return obj["data"]

    def close(self):
        self.sock.close()


class TestControlServer:
    def test_request_reply_and_event_push(self, small_cfg, rng):
        session = PerformanceSession(
            small_cfg, make_stems(small_cfg, 6, rng), time_scale=0.2, block_size=500
        )
        server = ControlServer(session).start()
        client = None
        try:
            session.start()
            client = TcpClient(server.port)

            reply = client.request("get_state")
            assert reply["ok"]
            assert reply["result"]["params"]["step_ratio"] == "1/4"

            reply = client.request("set_params", params={"step_ratio": "5/3"})
            assert not reply["ok"] and reply["error"]

            reply = client.request("select_instrument", stem="drums")
            assert reply["ok"] and reply["result"]["predicted_stem"] == "drums"

            client.request("next")
            event = client.next_event()
            assert event["step_id"] == 0
            assert "stages" in event and "rt_budget_ms" in event
        finally:
            if client is not None:
                client.close()
            server.stop()
            session.close()

    def test_malformed_json_reported_not_fatal(self, small_cfg, rng):
        session = PerformanceSession(
            small_cfg, make_stems(small_cfg, 4, rng), time_scale=0.2, block_size=500
        )
        server = ControlServer(session).start()
        client = None
        try:
            session.start()
            client = TcpClient(server.port)
            client.sock.sendall(b"this is not json\n")
            while True:
                obj = client._read_line()
                if "ok" in obj and not obj["ok"]:
                    assert obj["error"] == "malformed JSON"
                    break
            # connection still usable
            assert client.request("get_state")["ok"]
        finally:
            if client is not None:
                client.close()
            server.stop()
            session.close()
