"""End-to-end behaviour of the dumbbell experiments."""
import math
from functools import lru_cache

import pytest

from tcpsim.metrics import conservation_counts, cwnd_trace, throughput_series
from tcpsim.resources import CBR_FLOW_ID, DEFAULT_DURATION_S, DEFAULT_LOSS_RATES, DEFAULT_SWEEP_SEEDS, FTP_FLOW_ID
from tcpsim.scenario import build_paper_topology, run_scenario, run_sweep


@lru_cache()
def bounded_run(variant, lost_segments, total_bytes=100000):
    cfg = build_paper_topology(0.0, variant, {
        'experiment.duration_s': 60.0,
        'experiment.stop_on_completion': True,
        'experiment.scripted_losses': [{'flow': FTP_FLOW_ID, 'segment': s} for s in lost_segments],
        'flows[0].total_bytes': total_bytes,
    })
    return run_scenario(cfg)


def records(result, kind):
    return [r for r in result.trace.for_flow(FTP_FLOW_ID) if r.kind == kind]


def test_variants_are_identical_without_losses():
    tahoe, reno = (
        run_scenario(build_paper_topology(0.0, variant, {'experiment.duration_s': 20.0}))
        for variant in ('tahoe', 'reno')
    )
    assert tahoe.trace == reno.trace
    assert not any(r.kind in ('drop_queue', 'drop_loss') for r in reno.trace.records)
    assert reno.summary[FTP_FLOW_ID].rto_count == 0
    assert reno.summary[CBR_FLOW_ID].throughput_bps == pytest.approx(0.5e6, rel=0.01)


def test_single_loss_is_repaired_by_fast_recovery():
    tahoe, reno = bounded_run('tahoe', (40,)), bounded_run('reno', (40,))
    assert reno.summary[FTP_FLOW_ID].rto_count == 0
    assert len(records(reno, 'retransmit')) == 1
    assert reno.summary[FTP_FLOW_ID].completion_time_s < tahoe.summary[FTP_FLOW_ID].completion_time_s

    first_retransmit = records(tahoe, 'retransmit')[0].t
    assert any(cwnd == 1.0 for t, cwnd in cwnd_trace(tahoe.trace, FTP_FLOW_ID) if t >= first_retransmit)
    assert min(cwnd for t, cwnd in cwnd_trace(reno.trace, FTP_FLOW_ID) if t > 0) > 1.0


def test_multiple_losses_in_one_window_stall_reno():
    tahoe, reno = bounded_run('tahoe', (7, 8, 9)), bounded_run('reno', (7, 8, 9))
    assert reno.summary[FTP_FLOW_ID].rto_count >= 1
    assert tahoe.summary[FTP_FLOW_ID].rto_count == 0
    assert tahoe.summary[FTP_FLOW_ID].completion_time_s < reno.summary[FTP_FLOW_ID].completion_time_s

    completion = reno.summary[FTP_FLOW_ID].completion_time_s
    goodput = throughput_series(reno.trace, FTP_FLOW_ID, 0.25, goodput=True)
    assert any(bps == 0.0 for start, bps in goodput if 0.25 <= start < completion - 0.25)


def test_slow_start_doubles_then_grows_linearly():
    overrides = {f'links[{i}].bandwidth_bps': 100e6 for i in range(10)}
    overrides.update({
        'experiment.duration_s': 1.5,
        'flows': [{'type': 'tcp', 'id': 1, 'src': 'n0', 'dst': 'n4', 'initial_ssthresh': 8, 'awnd': 64}],
    })
    result = run_scenario(build_paper_topology(0.0, 'reno', overrides))
    rtt = records(result, 'ack')[0].t
    cwnd = cwnd_trace(result.trace, FTP_FLOW_ID)

    def cwnd_at(k):
        return [c for t, c in cwnd if t <= (k + 0.5) * rtt][-1]

    assert [cwnd_at(k) for k in (1, 2, 3)] == [2.0, 4.0, 8.0]
    assert 9 <= cwnd_at(13) - cwnd_at(3) <= 11


@pytest.mark.parametrize('variant', ['tahoe', 'reno'])
def test_every_packet_is_accounted_for(variant):
    result = run_scenario(build_paper_topology(0.1, variant, {'experiment.duration_s': 5.0}))
    for flow_id in (FTP_FLOW_ID, CBR_FLOW_ID):
        counts = conservation_counts(result.trace, flow_id)
        in_flight = result.in_flight.get(flow_id, 0)
        assert counts['sent'] == counts['delivered'] + counts['dropped_queue'] + counts['dropped_loss'] + in_flight
        assert in_flight >= 0
    summary = result.summary[FTP_FLOW_ID]
    assert summary.goodput_bps <= summary.throughput_bps
    assert summary.received_pkts <= summary.generated_pkts
    acks = [r.seq_no for r in records(result, 'send') if r.node == 'n4']
    assert acks and acks == sorted(acks)
    assert run_scenario(result.config_echo).trace == result.trace


def test_loss_reduces_goodput():
    goodput = {
        loss_rate: run_scenario(build_paper_topology(loss_rate, 'reno', {'experiment.duration_s': 10.0}))
        .summary[FTP_FLOW_ID].goodput_bps
        for loss_rate in (0.0, 0.3)
    }
    assert goodput[0.0] > goodput[0.3]


@pytest.mark.slow
def test_full_length_run_without_losses_is_variant_independent():
    tahoe, reno = (run_scenario(build_paper_topology(0.0, variant)) for variant in ('tahoe', 'reno'))
    assert tahoe.trace.end_time == DEFAULT_DURATION_S
    assert tahoe.trace == reno.trace
    assert not any(r.kind in ('drop_queue', 'drop_loss') for r in reno.trace.records)


@lru_cache()
def full_sweep():
    return run_sweep(
        build_paper_topology(), DEFAULT_LOSS_RATES, ['tahoe', 'reno'], DEFAULT_SWEEP_SEEDS, workers=4, progress=False
    )


@pytest.mark.slow
def test_goodput_falls_with_the_loss_rate():
    result = full_sweep()
    assert len(result.rows) == len(DEFAULT_LOSS_RATES) * 2 * len(DEFAULT_SWEEP_SEEDS)
    for _, cells in result.summary.groupby('variant'):
        means = cells.sort_values('loss_rate')['goodput_bps_mean'].tolist()
        assert means == sorted(means, reverse=True)
        assert (cells['n'] == len(DEFAULT_SWEEP_SEEDS)).all()


@pytest.mark.slow
def test_tahoe_goodput_is_at_least_reno_at_heavy_loss():
    summary = full_sweep().summary.set_index(['loss_rate', 'variant'])
    inversions = []
    for loss_rate in (0.1, 0.2, 0.3):
        tahoe, reno = summary.loc[(loss_rate, 'tahoe')], summary.loc[(loss_rate, 'reno')]
        if tahoe['goodput_bps_mean'] < reno['goodput_bps_mean']:
            inversions.append((loss_rate, tahoe, reno))
    assert len(inversions) <= 1
    for loss_rate, tahoe, reno in inversions:
        standard_error = math.hypot(tahoe['goodput_bps_sem'], reno['goodput_bps_sem'])
        assert reno['goodput_bps_mean'] - tahoe['goodput_bps_mean'] <= standard_error, loss_rate


@pytest.mark.slow
def test_every_lossy_run_loses_packets():
    rows = full_sweep().rows
    lossy = rows[rows['loss_rate'] > 0]
    assert len(lossy) == 4 * 2 * len(DEFAULT_SWEEP_SEEDS)
    assert (lossy['received_pkts'] < lossy['generated_pkts']).all()
