"""
The TCP sender as a pure state machine. Every handler receives the current time and returns
``SenderActions`` describing which segments to emit and what to do with the retransmission timer;
``TcpAgent`` turns those actions into packets and events.
"""
import logging
import math
from enum import Enum
from typing import List, NamedTuple, Optional

from tcpsim.resources import DEFAULT_AWND, DEFAULT_DUP_ACK_THRESHOLD, DEFAULT_MSS_BYTES
from tcpsim.tcp.rtt import ProtocolFault, RttEstimator

__all__ = ['TcpVariant', 'Segment', 'TimerAction', 'SenderActions', 'TcpSenderState']

logger = logging.getLogger(__name__)


class TcpVariant(Enum):
    TAHOE = 'tahoe'
    RENO = 'reno'

    @staticmethod
    def parse(name: str) -> 'TcpVariant':
        try:
            return TcpVariant(str(name).lower())
        except ValueError:
            raise ValueError(f'Unknown TCP variant "{name}" (expected one of: tahoe, reno)')


class Segment(NamedTuple):
    seq_no: int
    length: int
    retransmission: bool = False

    @property
    def end_seq(self) -> int:
        return self.seq_no + self.length


class TimerAction(Enum):
    KEEP = 'keep'
    RESTART = 'restart'
    CANCEL = 'cancel'


class SenderActions(NamedTuple):
    segments: List[Segment]
    timer: TimerAction = TimerAction.KEEP
    rtt_sample: Optional[float] = None
    window_changed: bool = False
    completed: bool = False


class TcpSenderState:
    """
    Window and sequence state of one TCP sender.
    ``cwnd`` and ``ssthresh`` are in MSS units, sequence numbers in bytes.
    ``snd_max`` is the highest byte ever sent; it only differs from ``snd_nxt``
    while a go-back-N resend is in progress.
    """

    def __init__(
            self,
            source,
            variant: TcpVariant = TcpVariant.RENO,
            mss: int = DEFAULT_MSS_BYTES,
            awnd: int = DEFAULT_AWND,
            dup_ack_threshold: int = DEFAULT_DUP_ACK_THRESHOLD,
            initial_cwnd: float = 1.0,
            initial_ssthresh: Optional[float] = None,
            rtt: Optional[RttEstimator] = None,
    ):
        self.source = source
        self.variant = variant
        self.mss = mss
        self.awnd = awnd
        self.dup_ack_threshold = dup_ack_threshold
        self.cwnd = float(initial_cwnd)
        self.ssthresh = float(awnd if initial_ssthresh is None else initial_ssthresh)
        self.rtt = rtt if rtt is not None else RttEstimator()
        self.dup_acks = 0
        self.snd_una = 0
        self.snd_nxt = 0
        self.snd_max = 0
        self.in_fast_recovery = False
        # A new loss reaction needs snd_una to move past this point.
        self.recovery_point = -1
        self.retransmit_timer = None
        self.segments_sent = 0
        self.segments_retransmitted = 0
        self.completion_time: Optional[float] = None

    @property
    def completed(self) -> bool:
        return self.completion_time is not None

    @property
    def flight_size(self) -> int:
        return self.snd_nxt - self.snd_una

    @property
    def outstanding(self) -> int:
        return self.snd_max - self.snd_una

    @property
    def inflation(self) -> int:
        if self.in_fast_recovery and self.dup_acks >= self.dup_ack_threshold:
            return self.dup_acks
        return 0

    @property
    def effective_cwnd(self) -> float:
        return self.cwnd + self.inflation

    def usable_window(self) -> int:
        window = math.floor(min(self.awnd, self.effective_cwnd) * self.mss)
        return max(window - self.flight_size, 0)

    def try_send(self, now: float) -> List[Segment]:
        segments = []
        while not self.completed:
            available = self.source.available(self.snd_nxt)
            if available <= 0:
                break
            length = int(min(self.mss, available))
            if self.usable_window() < length:
                break
            segments.append(self._emit(self.snd_nxt, length, now))
            self.snd_nxt += length
            self.snd_max = max(self.snd_max, self.snd_nxt)
        return segments

    def start(self, now: float) -> SenderActions:
        return SenderActions(segments=self.try_send(now), window_changed=True)

    def on_ack(self, ack_no: int, now: float) -> SenderActions:
        if ack_no > self.snd_max:
            raise ProtocolFault(f'ACK {ack_no} acknowledges data never sent (highest byte sent: {self.snd_max})')
        if ack_no > self.snd_una:
            return self.on_new_ack(ack_no, now)
        if ack_no == self.snd_una and self.outstanding > 0 and not self.completed:
            return self.on_dup_ack(now)
        return SenderActions(segments=[])

    def on_new_ack(self, ack_no: int, now: float) -> SenderActions:
        sample = self.rtt.sample_on_ack(ack_no, now)
        self.snd_una = ack_no
        self.snd_nxt = max(self.snd_nxt, self.snd_una)
        self.dup_acks = 0
        self.rtt.reset_backoff()

        if self.in_fast_recovery and ack_no >= self.recovery_point:
            self.cwnd = self.ssthresh
            self.in_fast_recovery = False
            logger.debug(f'{now:.6f}: fast recovery ends at ack {ack_no}, cwnd={self.cwnd:g}')
        elif self.cwnd < self.ssthresh:
            self.cwnd += 1
        else:
            self.cwnd += 1 / self.cwnd

        if self.source.available(self.snd_una) <= 0:
            self.completion_time = now
            return SenderActions(
                segments=[], timer=TimerAction.CANCEL, rtt_sample=sample, window_changed=True, completed=True
            )
        segments = self.try_send(now)
        timer = TimerAction.RESTART if self.outstanding > 0 else TimerAction.CANCEL
        return SenderActions(segments=segments, timer=timer, rtt_sample=sample, window_changed=True)

    def on_dup_ack(self, now: float) -> SenderActions:
        if self.in_fast_recovery:
            self.dup_acks += 1
            return SenderActions(segments=self.try_send(now))
        if self.snd_una <= self.recovery_point:
            return SenderActions(segments=[])
        self.dup_acks += 1
        if self.dup_acks < self.dup_ack_threshold:
            return SenderActions(segments=[])
        return self._fast_retransmit(now)

    def _fast_retransmit(self, now: float) -> SenderActions:
        self.ssthresh = self._halved_flight()
        self.recovery_point = self.snd_max
        logger.debug(
            f'{now:.6f}: {self.variant.value} fast retransmit at {self.snd_una}, ssthresh={self.ssthresh:g}'
        )
        if self.variant is TcpVariant.TAHOE:
            self.cwnd = 1.0
            self.dup_acks = 0
            self.snd_nxt = self.snd_una
            segments = self.try_send(now)
        else:
            self.cwnd = self.ssthresh
            self.in_fast_recovery = True
            length = int(min(self.mss, self.source.available(self.snd_una)))
            segments = [self._emit(self.snd_una, length, now)]
            segments.extend(self.try_send(now))
        return SenderActions(segments=segments, timer=TimerAction.RESTART, window_changed=True)

    def on_timeout(self, now: float) -> SenderActions:
        self.ssthresh = self._halved_flight()
        self.cwnd = 1.0
        self.dup_acks = 0
        self.in_fast_recovery = False
        self.recovery_point = self.snd_max
        self.rtt.back_off()
        self.rtt.cancel_timing()
        self.snd_nxt = self.snd_una
        logger.debug(
            f'{now:.6f}: retransmission timeout at {self.snd_una}, ssthresh={self.ssthresh:g}, '
            f'backoff x{self.rtt.backoff}'
        )
        return SenderActions(segments=self.try_send(now), timer=TimerAction.RESTART, window_changed=True)

    def _halved_flight(self) -> float:
        return max(self.outstanding / self.mss / 2, 2.0)

    def _emit(self, seq_no: int, length: int, now: float) -> Segment:
        retransmission = seq_no < self.snd_max
        self.segments_sent += 1
        if retransmission:
            self.segments_retransmitted += 1
            self.rtt.cancel_timing()
        else:
            self.rtt.start_timing(seq_no + length, now)
        return Segment(seq_no, length, retransmission)
