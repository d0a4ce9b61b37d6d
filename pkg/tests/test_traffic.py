import pytest

from hstpon.traffic import Direction, FlowSpec, PacketSource, generate


def flow(**kw):
    base = dict(name="f", direction=Direction.DOWNSTREAM, packet_bytes=1200, rate=100_000_000)
    base.update(kw)
    return FlowSpec(**base)


def test_nominal_spacing_is_exact():
    f = flow()
    assert f.gap_ns == 96_000
    assert [f.nominal_arrival(k) for k in range(3)] == [0, 96_000, 192_000]
    # 1 Gb/s of 1500 B: 12 us apart
    assert flow(packet_bytes=1500, rate=10**9).nominal_arrival(7) == 84_000


def test_take_until_windows_partition_the_stream():
    f = flow(rate=77_000_000, start=13)
    whole = list(generate(f, seed=1, until=10**8))
    src = PacketSource(f, seed=1)
    pieces = []
    for t in range(0, 10**8 + 1, 125_000):
        first, times = src.take_until(t)
        assert first == len(pieces)
        pieces += times
    assert pieces == whole
    assert all(t < 10**8 for t in whole)


def test_jitter_is_seeded_and_monotone():
    f = flow(jitter=0.4)
    a = list(generate(f, seed=7, until=10**8))
    b = list(generate(f, seed=7, until=10**8))
    c = list(generate(f, seed=8, until=10**8))
    assert a == b and a != c
    assert all(x <= y for x, y in zip(a, a[1:]))
    assert all(abs(t - f.nominal_arrival(k)) <= 0.4 * f.gap_ns + 1 for k, t in enumerate(a))


@pytest.mark.parametrize("kw, match", [
    (dict(packet_bytes=10), ">= 64 bytes"),
    (dict(rate=0), "rate must be positive"),
    (dict(jitter=0.5), "jitter"),
    (dict(direction=Direction.UPSTREAM), "need a tcont"),
])
def test_flow_validation(kw, match):
    with pytest.raises(ValueError, match=match):
        flow(**kw)
