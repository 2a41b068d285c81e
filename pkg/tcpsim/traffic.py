"""
Application sources: a greedy FTP source feeding a TCP sender and a constant-bit-rate source over UDP.
"""
import logging
import math
from typing import NamedTuple, Optional, Tuple, Union

from tcpsim.netmodel import Network, NodeId, Packet, PacketKind
from tcpsim.resources import DEFAULT_CBR_PACKET_BYTES, DEFAULT_CBR_RATE_BPS

__all__ = ['UNBOUNDED', 'FtpSource', 'CbrSource', 'CbrAgent', 'ftp_available']

logger = logging.getLogger(__name__)

UNBOUNDED = None


class FtpSource(NamedTuple):
    flow_id: int
    total_bytes: Optional[int] = UNBOUNDED

    @property
    def bounded(self) -> bool:
        return self.total_bytes is not UNBOUNDED

    def available(self, already_sent: int) -> Union[int, float]:
        if self.total_bytes is UNBOUNDED:
            return math.inf
        return max(self.total_bytes - already_sent, 0)


def ftp_available(src: FtpSource, already_sent: int) -> Union[int, float]:
    return src.available(already_sent)


class CbrSource(NamedTuple):
    flow_id: int
    node: NodeId
    peer: NodeId
    rate_bps: float = DEFAULT_CBR_RATE_BPS
    packet_bytes: int = DEFAULT_CBR_PACKET_BYTES
    start: float = 0.0
    stop: float = math.inf

    @property
    def interval(self) -> float:
        return self.packet_bytes * 8 / self.rate_bps

    def emission_time(self, index: int) -> float:
        # Multiplying keeps emission times free of accumulated rounding.
        return self.start + index * self.interval

    def emissions_between(self, t1: float, t2: float) -> int:
        """Number of emissions in ``[t1, t2)``."""
        lo, hi = max(t1, self.start), min(t2, self.stop)
        if hi <= lo:
            return 0
        first = max(math.ceil((lo - self.start) / self.interval), 0)
        while self.emission_time(first) < lo:
            first += 1
        while first > 0 and self.emission_time(first - 1) >= lo:
            first -= 1
        last = math.floor((hi - self.start) / self.interval)
        while self.emission_time(last) >= hi:
            last -= 1
        while self.emission_time(last + 1) < hi:
            last += 1
        return max(last - first + 1, 0)


class CbrAgent:
    """Emits the packets of a ``CbrSource`` into the network; the UDP sink needs no state."""

    def __init__(self, network: Network, source: CbrSource):
        self.network = network
        self.source = source
        self.emitted = 0

    def start(self):
        if self.source.start < self.source.stop:
            self.network.events.schedule(self.source.start, self._tick)

    def _tick(self):
        _, next_emission = self.cbr_emit(self.network.events.now)
        if next_emission < self.source.stop:
            self.network.events.schedule(next_emission, self._tick)

    def cbr_emit(self, now: float) -> Tuple[Optional[Packet], float]:
        """Sends the next packet if ``now`` lies in the active interval and returns it with the next emission time."""
        src = self.source
        next_emission = src.emission_time(self.emitted + 1)
        if not src.start <= now < src.stop:
            return None, next_emission
        pkt = self.network.new_packet(
            flow_id=src.flow_id,
            src=src.node,
            dst=src.peer,
            size_bytes=src.packet_bytes,
            kind=PacketKind.UDP_CBR,
            seq_no=self.emitted,
        )
        self.emitted += 1
        self.network.send(src.node, pkt)
        return pkt, next_emission
