"""
Packets, unidirectional links with a bounded DropTail FIFO and a Bernoulli loss process,
static shortest-path routing and the ``Network`` that moves packets between endpoints.
"""
import logging
from collections import Counter, deque
from enum import Enum
from typing import Callable, Deque, Dict, Iterable, List, NamedTuple, Optional, Set, Tuple

from tcpsim.engine import EventQueue, RandomSource
from tcpsim.metrics import DEQ, DROP_LOSS, DROP_QUEUE, ENQ, RECV, SEND, TraceLog

__all__ = [
    'NodeId', 'PacketKind', 'Packet', 'EnqueueResult', 'DropTailQueue', 'Link', 'RoutingTable', 'RoutingError',
    'Network',
]

logger = logging.getLogger(__name__)

NodeId = str


class PacketKind(Enum):
    TCP_DATA = 'tcp_data'
    TCP_ACK = 'tcp_ack'
    UDP_CBR = 'udp_cbr'


class Packet(NamedTuple):
    """
    A single transmission. Retransmitted segments are new packets with a fresh ``pkt_id``
    and the ``retransmitted`` flag set. For ACKs ``seq_no`` holds the cumulative ACK number,
    for CBR packets the emission index.
    """
    pkt_id: int
    flow_id: int
    src: NodeId
    dst: NodeId
    size_bytes: int
    kind: PacketKind
    seq_no: int
    created_at: float
    retransmitted: bool = False

    @property
    def end_seq(self) -> int:
        return self.seq_no + self.size_bytes


class EnqueueResult(Enum):
    ACCEPTED = 'accepted'
    DROPPED_QUEUE = 'dropped_queue'


class RoutingError(ValueError):
    pass


class DropTailQueue:
    """FIFO of waiting packets; the packet being serialized is not counted against the capacity."""

    def __init__(self, capacity_pkts: int):
        if capacity_pkts < 1:
            raise ValueError(f'The queue capacity has to be a positive integer (got {capacity_pkts})')
        self.capacity_pkts = capacity_pkts
        self.buffer: Deque[Packet] = deque()

    def __len__(self) -> int:
        return len(self.buffer)

    @property
    def is_full(self) -> bool:
        return len(self.buffer) >= self.capacity_pkts

    def push(self, pkt: Packet):
        self.buffer.append(pkt)

    def pop(self) -> Packet:
        return self.buffer.popleft()


class Link:
    def __init__(
            self,
            network: 'Network',
            index: int,
            src: NodeId,
            dst: NodeId,
            bandwidth_bps: float,
            prop_delay_s: float,
            loss_rate: float = 0.0,
            queue_capacity: int = 50,
            rng: Optional[RandomSource] = None,
    ):
        if bandwidth_bps <= 0 or prop_delay_s <= 0:
            raise ValueError(f'Link {src}->{dst} needs a positive bandwidth and propagation delay')
        if not 0.0 <= loss_rate <= 1.0:
            raise ValueError(f'Link {src}->{dst} loss rate has to be in [0, 1] (got {loss_rate})')
        if loss_rate > 0 and rng is None:
            raise ValueError(f'Link {src}->{dst} is lossy but has no random source')
        self.network = network
        self.index = index
        self.src = src
        self.dst = dst
        self.bandwidth_bps = bandwidth_bps
        self.prop_delay_s = prop_delay_s
        self.loss_rate = loss_rate
        self.queue = DropTailQueue(queue_capacity)
        self.rng = rng
        # (flow_id, seq_no) of data segments dropped on their first pass over this link.
        self.scripted_drops: Set[Tuple[int, int]] = set()
        self.in_service: Optional[Packet] = None
        self.propagating = 0

    @property
    def name(self) -> str:
        return f'{self.src}->{self.dst}'

    @property
    def busy(self) -> bool:
        return self.in_service is not None

    def serialization_time(self, pkt: Packet) -> float:
        return pkt.size_bytes * 8 / self.bandwidth_bps

    def enqueue(self, pkt: Packet) -> EnqueueResult:
        now = self.network.events.now
        trace = self.network.trace
        if self.queue.is_full:
            trace.packet_event(now, DROP_QUEUE, self.src, pkt)
            self.network.discard(pkt)
            return EnqueueResult.DROPPED_QUEUE
        self.queue.push(pkt)
        trace.packet_event(now, ENQ, self.src, pkt, aux=len(self.queue))
        if not self.busy:
            self.transmit_head()
        return EnqueueResult.ACCEPTED

    def transmit_head(self):
        pkt = self.queue.pop()
        events = self.network.events
        self.network.trace.packet_event(events.now, DEQ, self.src, pkt, aux=len(self.queue))
        self.in_service = pkt
        events.schedule_in(self.serialization_time(pkt), self._serialized, pkt)

    def is_lost(self, pkt: Packet) -> bool:
        """Decides the fate of a packet that finished serialization. Loss-free links never draw."""
        if pkt.kind is PacketKind.TCP_DATA and not pkt.retransmitted:
            key = (pkt.flow_id, pkt.seq_no)
            if key in self.scripted_drops:
                self.scripted_drops.discard(key)
                return True
        if self.loss_rate > 0:
            return self.rng.next_uniform() < self.loss_rate
        return False

    def _serialized(self, pkt: Packet):
        events = self.network.events
        self.in_service = None
        if self.is_lost(pkt):
            self.network.trace.packet_event(events.now, DROP_LOSS, self.src, pkt)
            self.network.discard(pkt)
        else:
            self.propagating += 1
            events.schedule_in(self.prop_delay_s, self._propagated, pkt)
        if self.queue:
            self.transmit_head()

    def _propagated(self, pkt: Packet):
        self.propagating -= 1
        self.network.arrive(self.dst, pkt)

    def __repr__(self):
        return (
            f'Link({self.name}, {self.bandwidth_bps:g} bps, {self.prop_delay_s:g} s, '
            f'loss={self.loss_rate:g}, queue={len(self.queue)}/{self.queue.capacity_pkts})'
        )


class RoutingTable:
    """Static next-hop table computed by breadth-first search; ties are broken by link creation order."""

    def __init__(self, nodes: Iterable[NodeId], links: Iterable[Link]):
        self.nodes = list(nodes)
        adjacency: Dict[NodeId, List[Link]] = {node: [] for node in self.nodes}
        for link in links:
            adjacency[link.src].append(link)
        self.next_hop: Dict[NodeId, Dict[NodeId, Link]] = {node: {} for node in self.nodes}
        for dst in self.nodes:
            self._search_towards(dst, adjacency)

    def _search_towards(self, dst: NodeId, adjacency: Dict[NodeId, List[Link]]):
        # BFS from every source keeps the first link of a shortest path.
        for origin in self.nodes:
            if origin == dst:
                continue
            visited = {origin}
            frontier = deque((link, link) for link in adjacency[origin])
            while frontier:
                first, link = frontier.popleft()
                if link.dst == dst:
                    self.next_hop[origin][dst] = first
                    break
                if link.dst in visited:
                    continue
                visited.add(link.dst)
                frontier.extend((first, nxt) for nxt in adjacency[link.dst])

    def reachable(self, node: NodeId, dst: NodeId) -> bool:
        return node == dst or dst in self.next_hop.get(node, {})

    def route(self, node: NodeId, pkt: Packet) -> Optional[Link]:
        """The outgoing link towards ``pkt.dst``, or None when the packet is already there."""
        if node == pkt.dst:
            return None
        try:
            return self.next_hop[node][pkt.dst]
        except KeyError:
            raise RoutingError(f'No route from {node} to {pkt.dst}')


PacketHandler = Callable[[Packet], None]


class Network:
    """
    Owns the links and routing of one simulation and delivers packets to the endpoints
    attached to ``(node, flow_id)``. Tracks per flow how many packets are still inside the network.
    """

    def __init__(self, events: EventQueue, trace: TraceLog, nodes: Iterable[NodeId]):
        self.events = events
        self.trace = trace
        self.nodes = list(nodes)
        self.links: List[Link] = []
        self.routing: Optional[RoutingTable] = None
        self.endpoints: Dict[Tuple[NodeId, int], PacketHandler] = {}
        self.in_flight: Counter = Counter()
        self._next_pkt_id = 0

    def add_link(self, src: NodeId, dst: NodeId, **kwargs) -> Link:
        for node in (src, dst):
            if node not in self.nodes:
                raise RoutingError(f'Link {src}->{dst} refers to the unknown node {node}')
        link = Link(self, len(self.links), src, dst, **kwargs)
        self.links.append(link)
        self.routing = None
        return link

    def link(self, src: NodeId, dst: NodeId) -> Link:
        for link in self.links:
            if link.src == src and link.dst == dst:
                return link
        raise RoutingError(f'There is no link {src}->{dst}')

    def build_routes(self) -> RoutingTable:
        self.routing = RoutingTable(self.nodes, self.links)
        return self.routing

    def attach(self, node: NodeId, flow_id: int, handler: PacketHandler):
        self.endpoints[(node, flow_id)] = handler

    def new_packet(self, **fields) -> Packet:
        pkt = Packet(pkt_id=self._next_pkt_id, created_at=self.events.now, **fields)
        self._next_pkt_id += 1
        return pkt

    def send(self, node: NodeId, pkt: Packet) -> EnqueueResult:
        self.trace.packet_event(self.events.now, SEND, node, pkt)
        self.in_flight[pkt.flow_id] += 1
        return self.forward(node, pkt)

    def forward(self, node: NodeId, pkt: Packet) -> EnqueueResult:
        if self.routing is None:
            self.build_routes()
        link = self.routing.route(node, pkt)
        if link is None:
            self.arrive(node, pkt)
            return EnqueueResult.ACCEPTED
        return link.enqueue(pkt)

    def arrive(self, node: NodeId, pkt: Packet):
        if node != pkt.dst:
            self.forward(node, pkt)
            return
        self.in_flight[pkt.flow_id] -= 1
        self.trace.packet_event(self.events.now, RECV, node, pkt)
        handler = self.endpoints.get((node, pkt.flow_id))
        if handler is not None:
            handler(pkt)

    def discard(self, pkt: Packet):
        self.in_flight[pkt.flow_id] -= 1
