import logging
import math
from typing import Callable, List, Optional

from tcpsim.engine import EventHandle
from tcpsim.metrics import ACK, CWND, RETRANSMIT, RTO_FIRE
from tcpsim.netmodel import Network, NodeId, Packet, PacketKind
from tcpsim.resources import ACK_SIZE_BYTES
from tcpsim.tcp.receiver import TcpReceiverState
from tcpsim.tcp.sender import SenderActions, TcpSenderState, TimerAction

__all__ = ['TcpAgent', 'TcpSink']

logger = logging.getLogger(__name__)


class TcpAgent:
    """
    Connects a ``TcpSenderState`` to the network: turns its segments into packets,
    owns the retransmission timer and writes the ``ack``, ``cwnd``, ``retransmit`` and ``rto_fire`` records.
    """

    def __init__(self, network: Network, flow_id: int, node: NodeId, peer: NodeId, state: TcpSenderState):
        self.network = network
        self.flow_id = flow_id
        self.node = node
        self.peer = peer
        self.state = state
        self.rto_count = 0
        self.on_complete: List[Callable[['TcpAgent'], None]] = []
        network.attach(node, flow_id, self.receive)

    @property
    def now(self) -> float:
        return self.network.events.now

    def start(self):
        self.apply(self.state.start(self.now))

    def receive(self, ack: Packet):
        actions = self.state.on_ack(ack.seq_no, self.now)
        self.network.trace.packet_event(self.now, ACK, self.node, ack, aux=actions.rtt_sample or 0.0)
        self.apply(actions)

    def _on_timer(self):
        self.state.retransmit_timer = None
        self.rto_count += 1
        self.network.trace.emit(
            self.now, RTO_FIRE, self.node, self.flow_id, -1, 0, self.state.snd_una, self.state.rtt.timer_interval
        )
        self.apply(self.state.on_timeout(self.now))

    def apply(self, actions: SenderActions):
        state = self.state
        if actions.window_changed:
            self.network.trace.emit(
                self.now, CWND, self.node, self.flow_id, -1, 0, math.floor(state.ssthresh), state.cwnd
            )
        if actions.timer is TimerAction.CANCEL:
            self._cancel_timer()
        elif actions.timer is TimerAction.RESTART:
            self._cancel_timer()
            self._arm_timer()
        for segment in actions.segments:
            pkt = self.network.new_packet(
                flow_id=self.flow_id,
                src=self.node,
                dst=self.peer,
                size_bytes=segment.length,
                kind=PacketKind.TCP_DATA,
                seq_no=segment.seq_no,
                retransmitted=segment.retransmission,
            )
            if segment.retransmission:
                self.network.trace.packet_event(self.now, RETRANSMIT, self.node, pkt)
            self.network.send(self.node, pkt)
        if actions.segments and state.retransmit_timer is None:
            self._arm_timer()
        if actions.completed:
            logger.info(f'Flow {self.flow_id} completed at t={self.now:.6f} ({state.snd_una} bytes)')
            for callback in self.on_complete:
                callback(self)

    def _arm_timer(self):
        self.state.retransmit_timer = self.network.events.schedule_in(self.state.rtt.timer_interval, self._on_timer)

    def _cancel_timer(self):
        handle: Optional[EventHandle] = self.state.retransmit_timer
        if handle is not None:
            self.network.events.cancel(handle)
            self.state.retransmit_timer = None


class TcpSink:
    def __init__(self, network: Network, flow_id: int, node: NodeId, peer: NodeId):
        self.network = network
        self.flow_id = flow_id
        self.node = node
        self.peer = peer
        self.state = TcpReceiverState()
        network.attach(node, flow_id, self.receive)

    def receive(self, seg: Packet) -> Packet:
        ack_no = self.state.on_segment(seg.seq_no, seg.size_bytes)
        ack = self.network.new_packet(
            flow_id=self.flow_id,
            src=self.node,
            dst=self.peer,
            size_bytes=ACK_SIZE_BYTES,
            kind=PacketKind.TCP_ACK,
            seq_no=ack_no,
        )
        self.network.send(self.node, ack)
        return ack
