import csv
import json

import pytest

from hstpon.metrics import (
    DoubleRecordError,
    DropCause,
    RunReport,
    interruption_intervals,
    outage_spans,
    record_delivery,
    record_drop,
)
from hstpon.pon import BurstRecord
from hstpon.traffic import Direction, FlowSpec

MS = 10**6


def report():
    r = RunReport(scenario="t", seed=1, end_time=1000 * MS, frame_period=125_000, bucket=100 * MS)
    r.add_flow(FlowSpec("down", Direction.DOWNSTREAM, 1200, 100_000_000))
    r.flows["down"].note_sent(100)
    return r


def test_counts_and_series():
    r = report()
    record_delivery(r, "down", 0, 5 * MS, count=3)
    record_drop(r, "down", 3, 150 * MS, DropCause.STALE_BINDING)
    st = r.flows["down"]
    assert (st.received, st.dropped, st.in_flight) == (3, 1, 96)
    assert st.series[0] == 3 * 1200 * 8
    assert st.drops_by_cause["stale_binding"] == 1


def test_outcomes_cannot_be_recorded_twice():
    r = report()
    record_delivery(r, "down", 0, 1)
    with pytest.raises(DoubleRecordError):
        record_drop(r, "down", 0, 2, DropCause.QUEUE_CAP)
    with pytest.raises(ValueError):
        record_delivery(r, "down", 99, 1, count=2)  # seq 100 was never sent
    with pytest.raises(ValueError):
        record_delivery(r, "down", 5, 1000 * MS)  # after the end of the run


def test_interruption_runs_from_first_loss_to_next_delivery():
    r = report()
    record_delivery(r, "down", 0, 10 * MS)
    record_drop(r, "down", 1, 20 * MS, DropCause.STALE_BINDING)
    record_drop(r, "down", 2, 21 * MS, DropCause.STALE_BINDING)
    record_delivery(r, "down", 3, 45 * MS)
    record_drop(r, "down", 4, 50 * MS, DropCause.COVERAGE_GAP)
    record_delivery(r, "down", 5, 50 * MS + 100_000)
    record_drop(r, "down", 6, 900 * MS, DropCause.COVERAGE_GAP)
    assert outage_spans(r, "down") == [(20 * MS, 45 * MS), (50 * MS, 50 * MS + 100_000), (900 * MS, 1000 * MS)]
    # default threshold is two nominal gaps (192 us): the 100 us blip is ignored
    assert interruption_intervals(r, "down") == [(20 * MS, 45 * MS), (900 * MS, 1000 * MS)]
    assert interruption_intervals(r, "down", gap_threshold=0) == outage_spans(r, "down")


def test_write_outputs(tmp_path):
    r = report()
    record_delivery(r, "down", 0, 5 * MS, count=2)
    r.bursts.append(BurstRecord(1, 400_000, 1885, 2344))
    paths = r.write(tmp_path / "out")
    assert [p.name for p in paths] == ["report.json", "throughput.csv", "bursts.csv"]
    data = json.loads(paths[0].read_text())
    assert data["schema_version"] == 1
    assert data["flows"]["down"]["received"] == 2
    rows = list(csv.reader(paths[1].open()))
    assert rows[0] == ["bucket_index", "bucket_start_ns", "flow", "bits"]
    assert rows[1] == ["0", "0", "down", str(2 * 1200 * 8)]
    assert len(rows) == 1 + 10
    bursts = list(csv.reader(paths[2].open()))
    assert bursts == [["onu_id", "start_ns", "duration_ns", "bytes_carried"], ["1", "400000", "1885", "2344"]]


def test_json_is_key_sorted_and_stable():
    a, b = report(), report()
    for r in (a, b):
        record_delivery(r, "down", 0, 7)
    assert a.to_json() == b.to_json()
    keys = list(json.loads(a.to_json()))
    assert keys == sorted(keys)
