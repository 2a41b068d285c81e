"""
Trace log definition and every measurement derived from it: windowed throughput, congestion window traces,
RTT and end-to-end delay statistics, packet counts and flow completion times.
All measurements are pure functions of a ``TraceLog``, so they can be recomputed from a saved trace file.
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from cytoolz import groupby

__all__ = [
    'TraceRecord', 'TraceLog', 'FlowInfo', 'FlowSummary', 'RttStats', 'DelayStats', 'PacketCounts', 'MetricsError',
    'INCOMPLETE', 'TRACE_KINDS', 'throughput_series', 'cwnd_trace', 'rtt_stats', 'e2e_delay_stats', 'packet_counts',
    'completion_time', 'goodput_bps', 'throughput_bps', 'conservation_counts', 'summarize_flow', 'summarize',
    'summaries_to_text', 'summaries_from_text',
    'time_saving', 'write_series_csv', 'read_series_csv',
]

logger = logging.getLogger(__name__)

SEND = 'send'
RECV = 'recv'
ENQ = 'enq'
DEQ = 'deq'
DROP_QUEUE = 'drop_queue'
DROP_LOSS = 'drop_loss'
ACK = 'ack'
CWND = 'cwnd'
RTO_FIRE = 'rto_fire'
RETRANSMIT = 'retransmit'

TRACE_KINDS = (SEND, RECV, ENQ, DEQ, DROP_QUEUE, DROP_LOSS, ACK, CWND, RTO_FIRE, RETRANSMIT)
QUEUE_KINDS = frozenset({ENQ, DEQ})

# Marks a bounded flow whose final byte was never acknowledged within the run.
INCOMPLETE = None

UNBOUNDED = 'unbounded'


class MetricsError(ValueError):
    pass


class TraceRecord(NamedTuple):
    t: float
    kind: str
    node: str
    flow_id: int
    pkt_id: int
    size_bytes: int
    seq_no: int
    aux: float = 0.0

    def to_line(self) -> str:
        return (
            f't={self.t:.6f} ev={self.kind} node={self.node} flow={self.flow_id} pkt={self.pkt_id} '
            f'size={self.size_bytes} seq={self.seq_no} aux={self.aux:.6f}'
        )

    @staticmethod
    def from_line(line: str) -> 'TraceRecord':
        try:
            fields = dict(item.split('=', 1) for item in line.split())
            return TraceRecord(
                t=float(fields['t']),
                kind=fields['ev'],
                node=fields['node'],
                flow_id=int(fields['flow']),
                pkt_id=int(fields['pkt']),
                size_bytes=int(fields['size']),
                seq_no=int(fields['seq']),
                aux=float(fields['aux']),
            )
        except (KeyError, ValueError) as e:
            raise MetricsError(f'Malformed trace line: "{line.strip()}" ({e})')


class FlowInfo(NamedTuple):
    flow_id: int
    kind: str  # 'tcp' or 'cbr'
    src: str
    dst: str
    total_bytes: Optional[int] = None

    def to_header(self) -> str:
        size = UNBOUNDED if self.total_bytes is None else self.total_bytes
        return f'# flow={self.flow_id} type={self.kind} src={self.src} dst={self.dst} bytes={size}'

    @staticmethod
    def from_header(line: str) -> 'FlowInfo':
        fields = dict(item.split('=', 1) for item in line.lstrip('#').split())
        size = fields['bytes']
        return FlowInfo(
            flow_id=int(fields['flow']),
            kind=fields['type'],
            src=fields['src'],
            dst=fields['dst'],
            total_bytes=None if size == UNBOUNDED else int(size),
        )


class TraceLog:
    """
    Ordered list of trace records plus the flow descriptions and the run duration needed to interpret them.
    Time and ``aux`` are rounded to the 6 decimals of the file format at emission, so a trace read back
    from disk is identical to the one that was written.
    """

    def __init__(self, flows: Iterable[FlowInfo] = (), duration: Optional[float] = None, queue_events: bool = True):
        self.records: List[TraceRecord] = []
        self.flows: Dict[int, FlowInfo] = {f.flow_id: f for f in flows}
        self.duration = duration
        self.queue_events = queue_events
        self._by_flow: Optional[Dict[int, List[TraceRecord]]] = None

    def emit(
            self,
            t: float,
            kind: str,
            node: str,
            flow_id: int,
            pkt_id: int,
            size_bytes: int,
            seq_no: int,
            aux: float = 0.0
    ):
        if not self.queue_events and kind in QUEUE_KINDS:
            return
        self.records.append(TraceRecord(round(t, 6), kind, node, flow_id, pkt_id, size_bytes, seq_no, round(aux, 6)))
        self._by_flow = None

    def packet_event(self, t: float, kind: str, node: str, pkt, aux: float = 0.0):
        self.emit(t, kind, node, pkt.flow_id, pkt.pkt_id, pkt.size_bytes, pkt.seq_no, aux)

    def flow(self, flow_id: int) -> FlowInfo:
        if flow_id not in self.flows:
            raise MetricsError(f'Unknown flow {flow_id} (the trace describes flows: {sorted(self.flows)})')
        return self.flows[flow_id]

    def for_flow(self, flow_id: int) -> List[TraceRecord]:
        self.flow(flow_id)
        if self._by_flow is None:
            self._by_flow = groupby(lambda r: r.flow_id, self.records)
        return self._by_flow.get(flow_id, [])

    @property
    def end_time(self) -> float:
        if self.duration is not None:
            return self.duration
        return self.records[-1].t if self.records else 0.0

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        return (
                isinstance(other, TraceLog)
                and self.records == other.records
                and self.flows == other.flows
                and self.duration == other.duration
        )

    def header_lines(self, banner: Optional[str] = None) -> List[str]:
        lines = [f'# {banner}'] if banner else []
        if self.duration is not None:
            lines.append(f'# duration={self.duration:.6f}')
        lines.extend(info.to_header() for _, info in sorted(self.flows.items()))
        return lines

    def lines(self, banner: Optional[str] = None) -> Iterable[str]:
        yield from self.header_lines(banner)
        for record in self.records:
            yield record.to_line()

    def write(self, path: Union[str, Path], banner: Optional[str] = None):
        with open(path, 'w') as f:
            for line in self.lines(banner):
                print(line, file=f)

    @staticmethod
    def from_lines(lines: Iterable[str]) -> 'TraceLog':
        trace = TraceLog()
        for line in lines:
            line = line.strip()
            if not line:
                continue
            if line.startswith('#'):
                if line.startswith('# duration='):
                    trace.duration = float(line.split('=', 1)[1])
                elif line.startswith('# flow='):
                    info = FlowInfo.from_header(line)
                    trace.flows[info.flow_id] = info
                # Anything else is a banner.
                continue
            trace.records.append(TraceRecord.from_line(line))
        return trace

    @staticmethod
    def from_path(path: Union[str, Path]) -> 'TraceLog':
        with open(path) as f:
            return TraceLog.from_lines(f)


class RttStats(NamedTuple):
    count: int
    min: Optional[float] = None
    max: Optional[float] = None
    avg: Optional[float] = None
    min_pkt_id: Optional[int] = None
    max_pkt_id: Optional[int] = None

    @property
    def is_empty(self) -> bool:
        return self.count == 0


class DelayStats(NamedTuple):
    count: int
    min: Optional[float] = None
    max: Optional[float] = None
    avg: Optional[float] = None


class PacketCounts(NamedTuple):
    generated: int
    received: int
    avg_size_src: Optional[float]
    avg_size_sink: Optional[float]


class FlowSummary(NamedTuple):
    flow_id: int
    generated_pkts: int
    received_pkts: int
    avg_pkt_size_bytes: Optional[float]
    avg_pkt_size_sink_bytes: Optional[float]
    sent_bytes: int
    rtt_min: Optional[float]
    rtt_max: Optional[float]
    rtt_avg: Optional[float]
    e2e_delay_min: Optional[float]
    e2e_delay_max: Optional[float]
    e2e_delay_avg: Optional[float]
    goodput_bps: float
    throughput_bps: float
    completion_time_s: Optional[float]
    retransmissions: int
    rto_count: int
    dropped_queue: int
    dropped_loss: int

    def to_text(self) -> str:
        return ''.join(f'{key}={_format_value(value)}\n' for key, value in self._asdict().items())

    @staticmethod
    def from_text(text: str) -> 'FlowSummary':
        values = dict(line.split('=', 1) for line in text.splitlines() if line.strip())
        unknown = set(values) - set(FlowSummary._fields)
        if unknown:
            raise MetricsError(f'Unknown summary keys: {sorted(unknown)}')
        return FlowSummary(**{
            key: _parse_value(values[key], int_field=key in _INT_SUMMARY_FIELDS)
            for key in FlowSummary._fields
        })


_INT_SUMMARY_FIELDS = frozenset({
    'flow_id', 'generated_pkts', 'received_pkts', 'sent_bytes', 'retransmissions', 'rto_count', 'dropped_queue', 'dropped_loss'
})


def _format_value(value) -> str:
    if value is None:
        return 'none'
    return repr(value)


def _parse_value(text: str, int_field: bool):
    if text == 'none':
        return None
    return int(text) if int_field else float(text)


def _sink_records(trace: TraceLog, flow_id: int) -> List[TraceRecord]:
    info = trace.flow(flow_id)
    return [r for r in trace.for_flow(flow_id) if r.kind == RECV and r.node == info.dst]


def _source_sends(trace: TraceLog, flow_id: int) -> List[TraceRecord]:
    info = trace.flow(flow_id)
    return [r for r in trace.for_flow(flow_id) if r.kind == SEND and r.node == info.src]


def _first_deliveries(records: Sequence[TraceRecord]) -> List[TraceRecord]:
    seen = set()
    firsts = []
    for r in records:
        if r.seq_no not in seen:
            seen.add(r.seq_no)
            firsts.append(r)
    return firsts


def _window_position(t: float, window_s: float) -> float:
    # Snapped so that t=0.3 with w=0.1 opens window 3 instead of closing window 2.
    return round(t / window_s, 9)


def throughput_series(
        trace: TraceLog,
        flow_id: int,
        window_s: float = 1.0,
        goodput: bool = False
) -> List[Tuple[float, float]]:
    """
    Bits per second received at the flow's sink in consecutive half-open windows ``[k*w, (k+1)*w)``.
    Windows without arrivals are reported as zero. With ``goodput=True`` only the first delivery of
    each sequence range is counted.
    """
    if window_s <= 0:
        raise MetricsError(f'The throughput window has to be positive (got {window_s})')
    records = _sink_records(trace, flow_id)
    if goodput:
        records = _first_deliveries(records)
    n_windows = math.ceil(_window_position(trace.end_time, window_s))
    indices = np.array([math.floor(_window_position(r.t, window_s)) for r in records], dtype=np.int64)
    if records:
        n_windows = max(n_windows, int(indices[-1]) + 1)
    sizes = np.array([r.size_bytes for r in records], dtype=np.float64)
    byte_counts = np.bincount(indices, weights=sizes, minlength=n_windows)
    return [(round(k * window_s, 9), 8 * float(b) / window_s) for k, b in enumerate(byte_counts)]


def cwnd_trace(trace: TraceLog, flow_id: int) -> List[Tuple[float, float]]:
    return [(r.t, r.aux) for r in trace.for_flow(flow_id) if r.kind == CWND]


def rtt_stats(trace: TraceLog, flow_id: int) -> RttStats:
    """Statistics over the RTT samples carried by the sender's ``ack`` records, annotated with packet ids."""
    samples = [(r.aux, r.pkt_id) for r in trace.for_flow(flow_id) if r.kind == ACK and r.aux > 0]
    if not samples:
        return RttStats(count=0)
    values = np.array([s for s, _ in samples])
    lo, hi = int(np.argmin(values)), int(np.argmax(values))
    return RttStats(
        count=len(samples),
        min=float(values[lo]),
        max=float(values[hi]),
        avg=float(values.mean()),
        min_pkt_id=samples[lo][1],
        max_pkt_id=samples[hi][1],
    )


def e2e_delay_stats(trace: TraceLog, flow_id: int) -> DelayStats:
    sent_at = {r.pkt_id: r.t for r in _source_sends(trace, flow_id)}
    delays = np.array([r.t - sent_at[r.pkt_id] for r in _sink_records(trace, flow_id) if r.pkt_id in sent_at])
    if not len(delays):
        return DelayStats(count=0)
    return DelayStats(count=len(delays), min=float(delays.min()), max=float(delays.max()), avg=float(delays.mean()))


def packet_counts(trace: TraceLog, flow_id: int) -> PacketCounts:
    sent = _source_sends(trace, flow_id)
    received = _sink_records(trace, flow_id)
    return PacketCounts(
        generated=len(sent),
        received=len(received),
        avg_size_src=float(np.mean([r.size_bytes for r in sent])) if sent else None,
        avg_size_sink=float(np.mean([r.size_bytes for r in received])) if received else None,
    )


def completion_time(trace: TraceLog, flow_id: int) -> Optional[float]:
    """Time the sender saw the ACK covering the final byte, or ``INCOMPLETE``."""
    info = trace.flow(flow_id)
    if info.total_bytes is None:
        raise MetricsError(f'Flow {flow_id} is unbounded; it has no completion time.')
    for r in trace.for_flow(flow_id):
        if r.kind == ACK and r.node == info.src and r.seq_no >= info.total_bytes:
            return r.t
    return INCOMPLETE


def goodput_bps(trace: TraceLog, flow_id: int) -> float:
    duration = trace.end_time
    if duration <= 0:
        return 0.0
    delivered = sum(r.size_bytes for r in _first_deliveries(_sink_records(trace, flow_id)))
    return 8 * delivered / duration


def throughput_bps(trace: TraceLog, flow_id: int) -> float:
    duration = trace.end_time
    if duration <= 0:
        return 0.0
    return 8 * sum(r.size_bytes for r in _sink_records(trace, flow_id)) / duration


def conservation_counts(trace: TraceLog, flow_id: int) -> Dict[str, int]:
    """Per-flow packet fates over every packet of the flow (data and ACKs alike)."""
    counts = {SEND: 0, RECV: 0, DROP_QUEUE: 0, DROP_LOSS: 0}
    for r in trace.for_flow(flow_id):
        if r.kind in counts:
            counts[r.kind] += 1
    return {
        'sent': counts[SEND],
        'delivered': counts[RECV],
        'dropped_queue': counts[DROP_QUEUE],
        'dropped_loss': counts[DROP_LOSS],
    }


def summarize_flow(trace: TraceLog, flow_id: int) -> FlowSummary:
    info = trace.flow(flow_id)
    counts = packet_counts(trace, flow_id)
    rtt = rtt_stats(trace, flow_id)
    delay = e2e_delay_stats(trace, flow_id)
    fates = conservation_counts(trace, flow_id)
    records = trace.for_flow(flow_id)
    return FlowSummary(
        flow_id=flow_id,
        generated_pkts=counts.generated,
        received_pkts=counts.received,
        avg_pkt_size_bytes=counts.avg_size_src,
        avg_pkt_size_sink_bytes=counts.avg_size_sink,
        sent_bytes=sum(r.size_bytes for r in _source_sends(trace, flow_id)),
        rtt_min=rtt.min,
        rtt_max=rtt.max,
        rtt_avg=rtt.avg,
        e2e_delay_min=delay.min,
        e2e_delay_max=delay.max,
        e2e_delay_avg=delay.avg,
        goodput_bps=goodput_bps(trace, flow_id),
        throughput_bps=throughput_bps(trace, flow_id),
        completion_time_s=completion_time(trace, flow_id) if info.total_bytes is not None else None,
        retransmissions=sum(1 for r in records if r.kind == RETRANSMIT),
        rto_count=sum(1 for r in records if r.kind == RTO_FIRE),
        dropped_queue=fates['dropped_queue'],
        dropped_loss=fates['dropped_loss'],
    )


def summarize(trace: TraceLog) -> Dict[int, FlowSummary]:
    return {flow_id: summarize_flow(trace, flow_id) for flow_id in sorted(trace.flows)}


def summaries_to_text(summaries: Dict[int, FlowSummary]) -> str:
    return '\n'.join(summary.to_text() for _, summary in sorted(summaries.items()))


def summaries_from_text(text: str) -> Dict[int, FlowSummary]:
    blocks = [block for block in text.split('\n\n') if block.strip()]
    summaries = (FlowSummary.from_text(block) for block in blocks)
    return {s.flow_id: s for s in summaries}


def time_saving(faster_s: float, slower_s: float) -> float:
    """Relative time saved (in %) by finishing in ``faster_s`` instead of ``slower_s``."""
    return 100.0 * (1.0 - faster_s / slower_s)


def write_series_csv(series: Sequence[Tuple[float, float]], path: Union[str, Path], columns: Tuple[str, str]):
    pd.DataFrame(list(series), columns=list(columns)).to_csv(path, index=False)


def read_series_csv(path: Union[str, Path]) -> Tuple[Tuple[str, str], List[Tuple[float, float]]]:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise MetricsError(f'Cannot parse "{path}" as CSV: {e}')
    if frame.shape[1] != 2:
        raise MetricsError(f'Expected exactly two columns in "{path}", found {list(frame.columns)}')
    try:
        values = frame.astype(float).itertuples(index=False, name=None)
    except ValueError as e:
        raise MetricsError(f'Non-numeric values in "{path}": {e}')
    return (frame.columns[0], frame.columns[1]), [(float(x), float(y)) for x, y in values]
