"""Run one scenario on the event kernel.

Per frame tick the OLT, in order: takes in upstream bursts that have fully
arrived (MAC learning and upstream delivery), admits packets generated
during the previous frame, sends the downstream frame using the current MAC
table, then computes the next grant table and launches the bursts.

That is the model; the implementation reaches the same outcomes with less
work per frame:

* Packet arrivals are drained at frame ticks rather than scheduled one event
  each. Every packet keeps its exact arrival time, which decides which ONUs
  hear it.
* Bursts that reached the OLT are applied lazily, in arrival order, whenever
  MAC state is about to be read or changed by something else (a train move,
  an aging scan, the end of the run) and at least every half aging time.
* Downstream forwarding feeds nothing back into the run. It depends only on
  the MAC binding in force at each tick, the whitelist window and the radio
  association, so the run records the binding and window histories and
  forwards all downstream traffic in one pass at the end.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import deque

from .dba import DbaScheduler, TContQueue
from .handover import (
    AssociationTimeline,
    MacTable,
    TrainState,
    WhitelistMode,
    WhitelistPolicy,
    age_scan,
    doppler_shift,
    learn,
)
from .kernel import Event, EventKind, Kernel, RunConfig
from .metrics import PENDING, DropCause, FlowStats, RunReport
from .pon import OltState, OnuNode, upstream_burst_arrival
from .scenario import Scenario
from .traffic import Direction, PacketSource

_DECREMENT = bytes((b - 1) % 256 for b in range(256))


class Simulation:
    def __init__(self, scenario: Scenario, config: RunConfig | None = None):
        self.scenario = scenario
        self.config = config or scenario.run
        cfg = self.config
        topo = scenario.topology
        self.kernel = Kernel(cfg)

        self.olt = OltState(
            downstream_rate=topo.line_rate,
            upstream_rate=topo.line_rate,
            guard_time=topo.guard_time,
            group_index=topo.group_index,
            max_fiber_length=topo.ranging_window,
        )
        for spec in topo.onus:
            self.olt.add(OnuNode(spec.id, spec.track_position, spec.fiber_length))
        self.olt.range_all()
        onus = sorted(self.olt.onus.values(), key=lambda o: o.track_position)
        self.track_order = [o.id for o in onus]
        # OLT-side burst arrival = grant start + this per-ONU constant
        self.arrival_offset = {o.id: o.eq_delay + 2 * o.prop_delay for o in onus}
        self.prop = {o.id: o.prop_delay for o in onus}

        self.train = TrainState(scenario.train.start, scenario.train.speed, scenario.train.mac)
        self.timeline = AssociationTimeline(
            self.train, onus, topo.cell_radius, scenario.policies.overlap, cfg.end_time
        )
        pol = scenario.policies
        self.mac_table = MacTable(aging_time=pol.aging_time)
        self.policy = WhitelistPolicy(pol.mode)
        self.trigger = pol.relearn_trigger
        self.expiries: list[tuple[int, int]] = []
        # (time, port) each time the train's binding changes; None = unknown
        self.binding_times: list[int] = [0]
        self.binding_ports: list[int | None] = [None]
        # (time, window) each time the whitelist window moves
        self.window_times: list[int] = [0]
        self.windows: list[tuple[int, ...]] = [()]

        self.profiles = []
        self.queues: list[TContQueue] = []
        self.tcont_at: dict[tuple[str, int], int] = {}
        for spec, profile in scenario.tcont_profiles():
            self.tcont_at[(spec.name, profile.owner_onu)] = len(self.profiles)
            self.profiles.append(profile)
            self.queues.append(TContQueue(profile, spec.queue_cap))
        self.dba = DbaScheduler(self.profiles, self.olt, cfg.frame_period)

        m = scenario.metrics
        self.report = RunReport(
            scenario=scenario.name, seed=cfg.seed, end_time=cfg.end_time,
            frame_period=cfg.frame_period, bucket=m.bucket,
        )
        self.flows = scenario.flows
        self.sources = []
        self.stats = []
        self.copies: list[bytearray | None] = []
        for i, flow in enumerate(self.flows):
            self.sources.append(PacketSource(flow, cfg.seed, i))
            self.stats.append(self.report.add_flow(flow, m.gap_thresholds.get(flow.name)))
            self.copies.append(bytearray() if flow.direction is Direction.UPSTREAM else None)
        self.upstream_flows = [i for i, f in enumerate(self.flows) if f.direction is Direction.UPSTREAM]
        self.downstream_flows = [i for i, f in enumerate(self.flows) if f.direction is Direction.DOWNSTREAM]
        self.flow_queues = [
            {onu: self.queues[k] for (name, onu), k in self.tcont_at.items() if name == f.tcont}
            for f in self.flows
        ]
        # per flow: (segment start, segment end, queues, copy count) while uncapped
        self._admit_cache: list[tuple | None] = [None] * len(self.flows)
        self.trace_start = m.burst_trace_start
        self.trace_end = m.burst_trace_start + m.burst_trace_frames * cfg.frame_period

        self.down_capacity = self.olt.downstream_rate * cfg.frame_period // (8 * 10**9)
        # (arrival end, onu, [(flow, first seq, count), ...]) in arrival order
        self.in_flight: deque[tuple[int, int, list[tuple[int, int, int]]]] = deque()
        self.frame_index = 0
        self._scan_at: int | None = None
        # bursts must be applied before any entry could reach its aging time
        self.sync_interval = max(1, pol.aging_time // 2)
        self._sync_at = 0

        k = self.kernel
        k.on(EventKind.FRAME_TICK, self._on_tick)
        k.on(EventKind.TRAIN_MOVE, self._on_move)
        k.on(EventKind.MAC_AGE_SCAN, self._on_scan)
        k.on(EventKind.SCENARIO_END, self._on_end)

    # -- upstream ----------------------------------------------------------

    def _catch_up(self, now: int) -> None:
        """Apply every upstream burst that has fully reached the OLT by ``now``."""
        q = self.in_flight
        if q and q[0][0] <= now:
            end = self.config.end_time
            while q and q[0][0] <= now and q[0][0] < end:
                at, onu, runs = q.popleft()
                self._receive_burst(at, onu, runs)
        self._sync_at = now + self.sync_interval
        if self._scan_at is None and self.mac_table.entries:
            self._scan_at = self.mac_table.next_expiry()
            self.kernel.schedule(max(self._scan_at, self.kernel.now), EventKind.MAC_AGE_SCAN)

    def _note_binding(self, t: int) -> None:
        port = self.mac_table.lookup(self.train.mac_address)
        if port != self.binding_ports[-1]:
            self.binding_times.append(t)
            self.binding_ports.append(port)

    def _receive_burst(self, at: int, onu: int, runs: list[tuple[int, int, int]]) -> None:
        mac = self.train.mac_address
        entries = self.mac_table.entries
        for flow, first, count in runs:
            entry = entries.get(mac)
            if entry is not None and entry.port == onu:
                # same port as the binding: a plain refresh
                entry.last_seen = at
                ok = True
            else:
                ok = learn(self.mac_table, mac, onu, at, self.policy, self.trigger, count)
                self._note_binding(at)
            copies = self.copies[flow]
            st = self.stats[flow]
            if count == 1:
                copies[first] -= 1
                if st.status[first] == PENDING:
                    if ok:
                        st.deliver(first, at)
                    elif copies[first] == 0:
                        self._drop_spoofed(st, first, at, 1)
                continue
            end = first + count
            left = copies[first:end].translate(_DECREMENT)
            copies[first:end] = left
            status = st.status[first:end]
            pending = status.count(PENDING)
            if not pending:
                continue
            if ok:
                if pending == count:
                    st.deliver(first, at, count)
                else:
                    for j in range(count):
                        if status[j] == PENDING:
                            st.deliver(first + j, at)
            elif pending == count and not any(left):
                self._drop_spoofed(st, first, at, count)
            else:
                # a packet is lost once every ONU that heard it has been refused
                for j in range(count):
                    if status[j] == PENDING and left[j] == 0:
                        self._drop_spoofed(st, first + j, at, 1)

    def _drop_spoofed(self, st: FlowStats, first: int, at: int, count: int) -> None:
        st.drop(first, at, DropCause.ANTISPOOFING, count)
        self.report.violations["antispoofing"] += count

    def _admit_upstream(self, i: int, first: int, times: list[int]) -> None:
        """Queue new upstream packets at every ONU that heard them."""
        n = len(times)
        cached = self._admit_cache[i]
        if cached is not None and cached[0] <= times[0] and (cached[1] is None or times[-1] < cached[1]):
            # same serving ONUs as last time, none of them capped
            self.copies[i].extend(cached[3] * n)
            size = self.flows[i].packet_bytes
            for q in cached[2]:
                q.enqueue_run(size, i, first, n)
            return
        self.copies[i].extend(bytes(n))
        timeline = self.timeline
        k = 0
        while k < n:
            start, seg_end, serving = timeline.segment(times[k])
            m = n if seg_end is None or times[-1] < seg_end else bisect_left(times, seg_end, k)
            self._enqueue_upstream(i, serving, first + k, times[k:m])
            k = m
        queues = [self.flow_queues[i][onu] for onu in serving]
        if serving and all(q.cap_packets is None for q in queues):
            self._admit_cache[i] = (start, seg_end, queues, bytes([len(queues)]))
        else:
            self._admit_cache[i] = None

    def _enqueue_upstream(self, i: int, serving: tuple[int, ...], first: int, times: list[int]) -> None:
        """Queue packets that all reach the same serving ONUs."""
        count = len(times)
        st = self.stats[i]
        if not serving:
            st.drop(first, times[0], DropCause.COVERAGE_GAP, count)
            return
        size = self.flows[i].packet_bytes
        by_onu = self.flow_queues[i]
        queues = [by_onu[onu] for onu in serving]
        copies = self.copies[i]
        if all(q.cap_packets is None or q.room() >= count for q in queues):
            for q in queues:
                q.enqueue_run(size, i, first, count)
            if len(queues) == 1 and count == 1:
                copies[first] = 1
            else:
                copies[first:first + count] = bytes([len(queues)]) * count
            return
        for j, g in enumerate(times):
            seq = first + j
            heard = sum(q.enqueue(size, i, seq) for q in queues)
            copies[seq] = heard
            if heard == 0:
                st.drop(seq, g, DropCause.QUEUE_CAP)

    def _grant(self, now: int) -> None:
        queues = self.queues
        demands = None if self.dba.fixed_only else [q.demand for q in queues]
        entries = self.dba.grant(demands, self.frame_index)
        trace = self.trace_start <= now < self.trace_end
        for i, offset, nbytes, duration in entries:
            queue = queues[i]
            if not queue.runs and not trace:
                continue
            onu = queue.profile.owner_onu
            done, used = queue.transmit(nbytes)
            grant_start = now + offset
            if trace:
                record = upstream_burst_arrival(self.olt.onus[onu], grant_start, nbytes, self.olt, used)
                self.report.bursts.append(record)
            if done:
                self.in_flight.append((grant_start + self.arrival_offset[onu] + duration, onu, done))

    # -- downstream --------------------------------------------------------

    def _route(self, tick: int) -> tuple[int | None, DropCause | None, int | None]:
        """Fate of a downstream frame sent at ``tick``.

        Returns ``(delay, cause, valid_until)``: frames reach the train
        ``delay`` ns after the tick, or are lost to ``cause``; the answer
        holds for every tick before ``valid_until`` (None: to the end).
        """
        until = None

        def bound(t: int | None) -> None:
            nonlocal until
            if t is not None and (until is None or t < until):
                until = t

        k = bisect_right(self.binding_times, tick) - 1
        if k + 1 < len(self.binding_times):
            bound(self.binding_times[k + 1])
        port = self.binding_ports[k]
        if port is not None:
            dests = (port,)
        elif self.policy.mode is WhitelistMode.WINDOW3:
            w = bisect_right(self.window_times, tick) - 1
            if w + 1 < len(self.window_times):
                bound(self.window_times[w + 1])
            dests = tuple(sorted(self.windows[w]))
        else:
            dests = tuple(sorted(o.id for o in self.olt.active_onus()))
        reached = []
        for d in dests:
            _, seg_end, serving = self.timeline.segment(tick + self.prop[d])
            if seg_end is not None:
                bound(seg_end - self.prop[d])
            if d in serving:
                reached.append(self.prop[d])
        if reached:
            return min(reached), None, until
        delay = min(self.prop[d] for d in dests) if dests else 0
        _, seg_end, serving = self.timeline.segment(tick + delay)
        if seg_end is not None:
            bound(seg_end - delay)
        return delay, DropCause.STALE_BINDING if serving else DropCause.COVERAGE_GAP, until

    def _forward_downstream(self) -> None:
        """Send every downstream packet generated during the run."""
        cfg = self.config
        frame, end = cfg.frame_period, cfg.end_time
        batches = []
        peak = 0
        for i in self.downstream_flows:
            first, times = self.sources[i].take_until(end)
            self.stats[i].note_sent(len(times))
            batches.append((i, first, times))
            flow = self.flows[i]
            # most packets one frame can collect, with jitter squeezing the gaps
            per_frame = int(frame // (flow.gap_ns * (1 - 2 * flow.jitter))) + 1
            peak += per_frame * flow.packet_bytes
        if peak <= self.down_capacity:
            for i, first, times in batches:
                self._forward_flow(i, first, times)
        else:
            self._forward_shared(batches)

    def _forward_flow(self, i: int, first: int, times: list[int]) -> None:
        """Forward one flow's packets, each in the frame right after it arrived.

        Only valid when no frame can run out of capacity.
        """
        frame, end = self.config.frame_period, self.config.end_time
        st = self.stats[i]
        lo, hi = 0, -1  # route cache covers ticks in [lo, hi)
        delay, cause = 0, None
        run_first, run_cause, ats = first, None, []
        for j, g in enumerate(times):
            tick = (g // frame + 1) * frame
            if tick >= end:
                break  # the run ends before this packet's frame goes out
            if not lo <= tick < hi:
                delay, cause, until = self._route(tick)
                lo, hi = tick, end if until is None else until
            at = tick + delay
            if at >= end:
                # still on the fiber when the run ends
                if ats:
                    self._settle(st, run_first, ats, run_cause)
                run_first, ats = first + j + 1, []
                continue
            if cause is not run_cause and ats:
                self._settle(st, run_first, ats, run_cause)
                run_first, ats = first + j, []
            run_cause = cause
            ats.append(at)
        if ats:
            self._settle(st, run_first, ats, run_cause)

    def _forward_shared(self, batches: list[tuple[int, int, list[int]]]) -> None:
        """Frame-by-frame forwarding when flows compete for downstream capacity."""
        frame, end = self.config.frame_period, self.config.end_time
        arrivals = []  # (tick, flow order, flow, seq)
        for order, (i, first, times) in enumerate(batches):
            for j, g in enumerate(times):
                arrivals.append(((g // frame + 1) * frame, order, i, first + j))
        arrivals.sort()
        backlog: deque[tuple[int, int]] = deque()
        k = 0
        tick = arrivals[0][0] if arrivals else end
        while tick < end and (backlog or k < len(arrivals)):
            while k < len(arrivals) and arrivals[k][0] == tick:
                backlog.append((arrivals[k][2], arrivals[k][3]))
                k += 1
            delay, cause, _ = self._route(tick)
            at = tick + delay
            budget = self.down_capacity
            while backlog and budget >= self.flows[backlog[0][0]].packet_bytes:
                i, seq = backlog.popleft()
                budget -= self.flows[i].packet_bytes
                if at < end:
                    self._settle(self.stats[i], seq, [at], cause)
            tick += frame
            if not backlog and k < len(arrivals):
                tick = max(tick, arrivals[k][0])

    @staticmethod
    def _settle(st: FlowStats, first: int, ats: list[int], cause: DropCause | None) -> None:
        if cause is None:
            st.deliver_each(first, ats)
        else:
            st.drop_each(first, ats, cause)

    # -- handlers ----------------------------------------------------------

    def _on_tick(self, event: Event) -> None:
        now = event.at
        if now >= self._sync_at:
            self._catch_up(now)
        for i in self.upstream_flows:
            first, times = self.sources[i].take_until(now)
            if times:
                self.stats[i].note_sent(len(times))
                self._admit_upstream(i, first, times)
        self._grant(now)
        self.frame_index += 1

    def _on_move(self, event: Event) -> None:
        now = event.at
        self._catch_up(now)
        serving, nearest = event.payload
        if self.policy.mode is WhitelistMode.WINDOW3:
            window = self.policy.slide(self.track_order, nearest)
            if window != self.windows[-1]:
                self.window_times.append(now)
                self.windows.append(window)
        self.report.associations.append((now, serving))

    def _on_scan(self, event: Event) -> None:
        self._catch_up(event.at)
        self._scan_at = None
        for mac in age_scan(self.mac_table, event.at):
            self.expiries.append((event.at, mac))
        self._note_binding(event.at)
        if self._scan_at is None and self.mac_table.entries:
            self._scan_at = self.mac_table.next_expiry()
            self.kernel.schedule(self._scan_at, EventKind.MAC_AGE_SCAN)

    def _on_end(self, event: Event) -> None:
        self._catch_up(event.at)
        self._forward_downstream()
        # upstream packets generated in the last partial frame are sent but still queued
        for i in self.upstream_flows:
            _, times = self.sources[i].take_until(event.at)
            if times:
                self.stats[i].note_sent(len(times))
        self.kernel.stop()

    # -- driver ------------------------------------------------------------

    def run(self) -> RunReport:
        cfg = self.config
        k = self.kernel
        k.schedule(cfg.end_time, EventKind.SCENARIO_END)
        for t, serving, nearest in self.timeline.changes():
            k.schedule(t, EventKind.TRAIN_MOVE, (serving, nearest))
        k.every(cfg.frame_period, EventKind.FRAME_TICK)
        k.run()

        r = self.report
        r.frames_elapsed = self.frame_index
        r.rejected_frames = self.mac_table.violations
        r.mac_moves = [(t, src, dst) for t, _, src, dst in self.mac_table.moves]
        r.coverage_gap_time = self.timeline.gap_time(cfg.end_time)
        r.extras["mac_expiries"] = [t for t, _ in self.expiries]
        r.extras["ranging"] = {
            str(o.id): {"fiber_m": o.fiber_length, "eq_delay_ns": o.eq_delay}
            for o in self.olt.onus.values()
        }
        if self.scenario.train.carrier:
            r.extras["max_doppler_hz"] = doppler_shift(self.train.speed, self.scenario.train.carrier, 1.0)
        return r


def run(scenario: Scenario, config: RunConfig | None = None) -> RunReport:
    """Simulate ``scenario`` and return its report (deterministic in scenario + seed)."""
    return Simulation(scenario, config).run()
