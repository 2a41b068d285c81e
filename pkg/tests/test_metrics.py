import pytest

from tcpsim.metrics import (
    INCOMPLETE, FlowInfo, FlowSummary, MetricsError, TraceLog, TraceRecord, completion_time, conservation_counts,
    cwnd_trace, e2e_delay_stats, goodput_bps, packet_counts, read_series_csv, rtt_stats, summaries_from_text,
    summaries_to_text, summarize, throughput_series, time_saving, write_series_csv,
)


def make_trace(total_bytes=None, duration=3.0):
    return TraceLog(flows=[FlowInfo(1, 'tcp', 'a', 'b', total_bytes)], duration=duration)


def receive(trace, t, size, seq, pkt=0):
    trace.emit(t, 'recv', 'b', 1, pkt, size, seq)


@pytest.fixture
def arrivals():
    trace = make_trace()
    receive(trace, 0.5, 1000, 0)
    receive(trace, 1.0, 500, 1000)
    receive(trace, 2.999, 250, 1500)
    return trace


def test_throughput_series(arrivals):
    assert throughput_series(arrivals, 1, 1.0) == [(0.0, 8000.0), (1.0, 4000.0), (2.0, 2000.0)]


def test_throughput_windows_are_half_open(arrivals):
    series = throughput_series(arrivals, 1, 0.5)
    assert series[1] == (0.5, 16000.0)
    assert series[2] == (1.0, 8000.0)
    assert series[0] == (0.0, 0.0)


@pytest.mark.parametrize(
    ['t', 'window_s', 'expected_window'],
    [
        (0.3, 0.1, 3),
        (0.7, 0.1, 7),
        (0.29999, 0.1, 2),
        (0.6, 0.2, 3),
    ]
)
def test_arrival_on_a_decimal_boundary_opens_the_next_window(t, window_s, expected_window):
    trace = make_trace(duration=1.0)
    receive(trace, t, 1000, 0)
    series = throughput_series(trace, 1, window_s)
    starts = [start for start, _ in series]
    assert starts == [round(k * window_s, 9) for k in range(len(series))]
    assert starts[expected_window] == pytest.approx(expected_window * window_s)
    assert [k for k, (_, bps) in enumerate(series) if bps > 0] == [expected_window]
    assert series[expected_window][1] == pytest.approx(8000 / window_s)


def test_decimal_window_starts_are_exact():
    trace = make_trace(duration=0.4)
    receive(trace, 0.3, 1000, 0)
    series = throughput_series(trace, 1, 0.1)
    assert [start for start, _ in series] == [0.0, 0.1, 0.2, 0.3]
    assert [bps for _, bps in series] == pytest.approx([0.0, 0.0, 0.0, 80000.0])


@pytest.mark.parametrize('window_s', [0.1, 0.25, 1.0, 1.5])
def test_throughput_series_preserves_the_byte_count(arrivals, window_s):
    series = throughput_series(arrivals, 1, window_s)
    assert sum(bps * window_s for _, bps in series) == pytest.approx(8 * 1750)


def test_empty_windows_are_reported_as_zero():
    assert throughput_series(make_trace(duration=2.0), 1, 1.0) == [(0.0, 0.0), (1.0, 0.0)]


def test_non_positive_window():
    with pytest.raises(MetricsError):
        throughput_series(make_trace(), 1, 0.0)


def test_unknown_flow():
    with pytest.raises(MetricsError):
        throughput_series(make_trace(), 7, 1.0)


def test_goodput_counts_duplicates_once():
    trace = make_trace(duration=1.0)
    receive(trace, 0.1, 1000, 0, pkt=1)
    receive(trace, 0.2, 1000, 0, pkt=2)
    receive(trace, 0.3, 1000, 1000, pkt=3)
    assert goodput_bps(trace, 1) == 16000.0
    assert throughput_series(trace, 1, 1.0, goodput=True) == [(0.0, 16000.0)]
    assert throughput_series(trace, 1, 1.0) == [(0.0, 24000.0)]


def test_cwnd_trace():
    trace = make_trace()
    trace.emit(0.0, 'cwnd', 'a', 1, -1, 0, 32, 1.0)
    trace.emit(0.1, 'cwnd', 'a', 1, -1, 0, 32, 2.0)
    assert cwnd_trace(trace, 1) == [(0.0, 1.0), (0.1, 2.0)]


def test_rtt_stats():
    trace = make_trace()
    for pkt, sample in enumerate([0.3, 0.0, 0.5, 0.6]):
        trace.emit(1.0 + pkt, 'ack', 'a', 1, pkt, 40, 1000 * pkt, sample)
    stats = rtt_stats(trace, 1)
    assert stats.count == 3
    assert stats.avg == pytest.approx(0.4666666, abs=1e-6)
    assert (stats.min, stats.min_pkt_id) == (0.3, 0)
    assert (stats.max, stats.max_pkt_id) == (0.6, 3)


def test_rtt_stats_without_samples():
    assert rtt_stats(make_trace(), 1).is_empty


def test_e2e_delay():
    trace = make_trace()
    trace.emit(0.0, 'send', 'a', 1, 7, 1000, 0)
    trace.emit(0.004, 'send', 'a', 1, 8, 1000, 1000)
    receive(trace, 0.042, 1000, 0, pkt=7)
    receive(trace, 0.050, 1000, 1000, pkt=8)
    stats = e2e_delay_stats(trace, 1)
    assert stats.count == 2
    assert stats.min == pytest.approx(0.042)
    assert stats.max == pytest.approx(0.046)


def test_packet_counts():
    trace = make_trace()
    trace.emit(0.0, 'send', 'a', 1, 1, 1000, 0)
    trace.emit(0.0, 'send', 'a', 1, 2, 500, 1000)
    receive(trace, 0.1, 1000, 0, pkt=1)
    counts = packet_counts(trace, 1)
    assert (counts.generated, counts.received) == (2, 1)
    assert counts.avg_size_src == 750.0
    assert counts.avg_size_sink == 1000.0


def test_completion_time():
    trace = make_trace(total_bytes=2000)
    assert completion_time(trace, 1) is INCOMPLETE
    trace.emit(0.5, 'ack', 'a', 1, 3, 40, 1000)
    trace.emit(0.9, 'ack', 'a', 1, 4, 40, 2000)
    assert completion_time(trace, 1) == 0.9


def test_unbounded_flow_has_no_completion_time():
    with pytest.raises(MetricsError):
        completion_time(make_trace(), 1)


def test_conservation_counts():
    trace = make_trace()
    trace.emit(0.0, 'send', 'a', 1, 1, 1000, 0)
    trace.emit(0.0, 'send', 'a', 1, 2, 1000, 1000)
    trace.emit(0.0, 'send', 'a', 1, 3, 1000, 2000)
    trace.emit(0.1, 'drop_loss', 'a', 1, 2, 1000, 1000)
    receive(trace, 0.2, 1000, 0, pkt=1)
    assert conservation_counts(trace, 1) == {'sent': 3, 'delivered': 1, 'dropped_queue': 0, 'dropped_loss': 1}


def test_records_are_rounded_to_the_file_precision():
    trace = make_trace()
    trace.emit(0.1234567891, 'cwnd', 'a', 1, -1, 0, 2, 1.0000004)
    assert trace.records[0].t == 0.123457
    assert trace.records[0].aux == 1.0


def test_trace_file_round_trip(tmp_path, arrivals):
    arrivals.emit(0.7, 'cwnd', 'a', 1, -1, 0, 32, 1.5)
    path = tmp_path / 'trace.log'
    arrivals.write(path, banner='tcpsim test')
    assert path.read_text().splitlines()[:3] == [
        '# tcpsim test',
        '# duration=3.000000',
        '# flow=1 type=tcp src=a dst=b bytes=unbounded',
    ]
    assert TraceLog.from_path(path) == arrivals


def test_record_line_format():
    record = TraceRecord(0.014, 'recv', 'n4', 1, 12, 536, 5360, 0.0)
    assert record.to_line() == 't=0.014000 ev=recv node=n4 flow=1 pkt=12 size=536 seq=5360 aux=0.000000'
    assert TraceRecord.from_line(record.to_line()) == record


@pytest.mark.parametrize('line', ['t=abc ev=recv node=n4 flow=1 pkt=1 size=1 seq=0 aux=0', 't=1.0 ev=recv'])
def test_malformed_trace_line(line):
    with pytest.raises(MetricsError):
        TraceRecord.from_line(line)


def test_summary_text_round_trip():
    trace = make_trace(total_bytes=2000)
    trace.flows[2] = FlowInfo(2, 'cbr', 'c', 'd')
    trace.emit(0.0, 'send', 'a', 1, 1, 1000, 0)
    receive(trace, 0.1, 1000, 0, pkt=1)
    trace.emit(0.2, 'ack', 'a', 1, 2, 40, 1000, 0.2)
    summaries = summarize(trace)
    assert summaries[1].completion_time_s is None
    assert summaries[1].rtt_avg == 0.2
    assert summaries[2].rtt_avg is None
    assert summaries_from_text(summaries_to_text(summaries)) == summaries


def test_summary_with_unknown_key():
    with pytest.raises(MetricsError):
        FlowSummary.from_text('flow_id=1\nbogus=3\n')


def test_time_saving():
    assert time_saving(5.0, 14.0) == pytest.approx(64.2857, abs=1e-4)


def test_series_csv(tmp_path):
    path = tmp_path / 'throughput.csv'
    write_series_csv([(0.0, 8000.0), (1.0, 4000.0)], path, ('window_start_s', 'throughput_bps'))
    assert path.read_text().splitlines()[0] == 'window_start_s,throughput_bps'
    assert read_series_csv(path) == (('window_start_s', 'throughput_bps'), [(0.0, 8000.0), (1.0, 4000.0)])


def test_csv_with_wrong_shape(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('a,b,c\n1,2,3\n')
    with pytest.raises(MetricsError):
        read_series_csv(path)
