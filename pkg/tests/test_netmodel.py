import pytest

from tcpsim.engine import EventQueue, RandomSource
from tcpsim.metrics import FlowInfo, TraceLog, conservation_counts
from tcpsim.netmodel import EnqueueResult, Network, Packet, PacketKind, RoutingError, RoutingTable
from tcpsim.scenario import build_paper_topology


def two_node_network(loss_rate=0.0, capacity=20, seed=1):
    events = EventQueue()
    trace = TraceLog(flows=[FlowInfo(1, 'cbr', 'a', 'b')])
    network = Network(events, trace, ['a', 'b'])
    link = network.add_link(
        'a', 'b',
        bandwidth_bps=2e6,
        prop_delay_s=0.010,
        loss_rate=loss_rate,
        queue_capacity=capacity,
        rng=RandomSource(seed) if loss_rate > 0 else None,
    )
    received = []
    network.attach('b', 1, received.append)
    return events, trace, network, link, received


def new_packet(network, size=1000, seq=0):
    return network.new_packet(flow_id=1, src='a', dst='b', size_bytes=size, kind=PacketKind.UDP_CBR, seq_no=seq)


def test_enqueue_on_idle_link_starts_transmission():
    _, _, network, link, _ = two_node_network()
    assert link.enqueue(new_packet(network)) == EnqueueResult.ACCEPTED
    assert link.busy
    assert len(link.queue) == 0


def test_full_queue_drops_the_arrival():
    _, trace, network, link, _ = two_node_network(capacity=20)
    results = [link.enqueue(new_packet(network, seq=i)) for i in range(21)]
    assert all(r == EnqueueResult.ACCEPTED for r in results)
    assert len(link.queue) == 20
    assert link.enqueue(new_packet(network, seq=21)) == EnqueueResult.DROPPED_QUEUE
    assert [r.kind for r in trace.records].count('drop_queue') == 1


def test_packet_in_service_does_not_take_a_queue_slot():
    _, _, network, link, _ = two_node_network(capacity=1)
    assert link.enqueue(new_packet(network, seq=0)) == EnqueueResult.ACCEPTED
    assert link.enqueue(new_packet(network, seq=1)) == EnqueueResult.ACCEPTED
    assert link.enqueue(new_packet(network, seq=2)) == EnqueueResult.DROPPED_QUEUE


def test_serialization_and_propagation_delay():
    events, trace, network, _, received = two_node_network()
    network.send('a', new_packet(network))
    events.run_until(1.0)
    assert len(received) == 1
    recv = [r for r in trace.records if r.kind == 'recv']
    assert recv[0].t == pytest.approx(0.014, abs=1e-9)


def test_fifo_order_and_back_to_back_transmission():
    events, trace, network, _, received = two_node_network()
    for seq in range(3):
        network.send('a', new_packet(network, seq=seq))
    events.run_until(1.0)
    assert [p.seq_no for p in received] == [0, 1, 2]
    times = [r.t for r in trace.records if r.kind == 'recv']
    assert times == pytest.approx([0.014, 0.018, 0.022], abs=1e-9)


def test_certain_loss_drops_everything():
    events, trace, network, _, received = two_node_network(loss_rate=1.0)
    for seq in range(10):
        network.send('a', new_packet(network, seq=seq))
    events.run_until(1.0)
    assert received == []
    assert [r.kind for r in trace.records].count('drop_loss') == 10


@pytest.mark.parametrize('seed', [1, 2, 3, 4, 5])
def test_loss_process_calibration(seed):
    _, _, network, link, _ = two_node_network(loss_rate=0.1, seed=seed)
    pkt = new_packet(network)
    n = 10 ** 5
    dropped = sum(link.is_lost(pkt) for _ in range(n))
    assert abs(dropped / n - 0.1) <= 0.005


def test_lossless_link_never_draws():
    events, _, network, link, received = two_node_network()
    for seq in range(5):
        network.send('a', new_packet(network, seq=seq))
    events.run_until(1.0)
    assert link.rng is None
    assert len(received) == 5


def test_conservation_with_packets_in_flight():
    events, trace, network, _, _ = two_node_network(loss_rate=0.3, capacity=5)
    for seq in range(40):
        network.send('a', new_packet(network, seq=seq))
    events.run_until(0.015)
    counts = conservation_counts(trace, 1)
    assert counts['dropped_queue'] > 0
    assert network.in_flight[1] > 0
    assert counts['sent'] == (
            counts['delivered'] + counts['dropped_queue'] + counts['dropped_loss'] + network.in_flight[1]
    )


@pytest.fixture
def dumbbell_routes():
    cfg = build_paper_topology()
    return RoutingTable(cfg.nodes, cfg.links)


def packet_to(dst):
    return Packet(pkt_id=0, flow_id=1, src='n0', dst=dst, size_bytes=536, kind=PacketKind.TCP_DATA, seq_no=0,
                  created_at=0.0)


@pytest.mark.parametrize(
    ['node', 'dst', 'expected'],
    [
        ('n0', 'n4', ('n0', 'n2')),
        ('n2', 'n4', ('n2', 'n3')),
        ('n3', 'n4', ('n3', 'n4')),
        ('n4', 'n0', ('n4', 'n3')),
        ('n1', 'n5', ('n1', 'n2')),
    ]
)
def test_dumbbell_routes(dumbbell_routes, node, dst, expected):
    link = dumbbell_routes.route(node, packet_to(dst))
    assert (link.src, link.dst) == expected


def test_local_delivery_needs_no_link(dumbbell_routes):
    assert dumbbell_routes.route('n4', packet_to('n4')) is None


def test_unreachable_destination():
    events = EventQueue()
    network = Network(events, TraceLog(), ['a', 'b', 'c'])
    network.add_link('a', 'b', bandwidth_bps=1e6, prop_delay_s=0.01)
    routes = network.build_routes()
    assert not routes.reachable('a', 'c')
    with pytest.raises(RoutingError):
        routes.route('a', Packet(0, 1, 'a', 'c', 100, PacketKind.UDP_CBR, 0, 0.0))
