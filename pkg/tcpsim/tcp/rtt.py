import logging
from typing import NamedTuple, Optional

from tcpsim.resources import DEFAULT_MAX_BACKOFF, DEFAULT_RTO_INITIAL_S, DEFAULT_RTO_MAX_S, DEFAULT_RTO_MIN_S

__all__ = ['RttEstimator', 'RttTiming', 'ProtocolFault', 'update_rtt']

logger = logging.getLogger(__name__)

ALPHA = 1 / 8
BETA = 1 / 4
K = 4


class ProtocolFault(RuntimeError):
    pass


class RttTiming(NamedTuple):
    """The single segment currently being timed: the sequence that has to be acked and its send time."""
    end_seq: int
    sent_at: float


class RttEstimator:
    """
    Jacobson mean/deviation estimator with exponential timer backoff.
    Karn's rule is enforced by the sender: it only times segments that were never retransmitted
    and drops the active timing whenever it retransmits.
    """

    def __init__(
            self,
            rto_initial: float = DEFAULT_RTO_INITIAL_S,
            rto_min: float = DEFAULT_RTO_MIN_S,
            rto_max: float = DEFAULT_RTO_MAX_S,
            max_backoff: int = DEFAULT_MAX_BACKOFF,
    ):
        self.srtt: Optional[float] = None
        self.rttvar: Optional[float] = None
        self.rto = rto_initial
        self.rto_min = rto_min
        self.rto_max = rto_max
        self.max_backoff = max_backoff
        self.backoff = 1
        self.timing: Optional[RttTiming] = None

    def update(self, sample: float) -> float:
        if sample <= 0:
            raise ProtocolFault(f'Non-positive RTT sample: {sample!r}')
        if self.srtt is None:
            self.srtt = sample
            self.rttvar = sample / 2
        else:
            self.rttvar = (1 - BETA) * self.rttvar + BETA * abs(self.srtt - sample)
            self.srtt = (1 - ALPHA) * self.srtt + ALPHA * sample
        self.rto = min(max(self.srtt + K * self.rttvar, self.rto_min), self.rto_max)
        return self.rto

    @property
    def timer_interval(self) -> float:
        return min(self.rto * self.backoff, self.rto_max)

    def back_off(self):
        self.backoff = min(self.backoff * 2, self.max_backoff)

    def reset_backoff(self):
        self.backoff = 1

    def start_timing(self, end_seq: int, now: float):
        if self.timing is None:
            self.timing = RttTiming(end_seq, now)

    def cancel_timing(self):
        self.timing = None

    def sample_on_ack(self, ack_no: int, now: float) -> Optional[float]:
        """Closes the active timing when ``ack_no`` covers it and returns the RTT sample fed to the estimator."""
        timing = self.timing
        if timing is None or ack_no < timing.end_seq:
            return None
        self.timing = None
        sample = now - timing.sent_at
        self.update(sample)
        return sample


def update_rtt(estimator: RttEstimator, sample_s: float):
    estimator.update(sample_s)
    return estimator.srtt, estimator.rttvar, estimator.rto
