"""
Experiment descriptions and their execution: the JSON configuration codec, the six-node dumbbell builder,
the single-run orchestrator and the loss-rate sweep.
"""
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from copy import deepcopy
from functools import partial
from itertools import product
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import pandas as pd
from cytoolz.itertoolz import identity
from tqdm.auto import tqdm

from tcpsim.engine import EventFault, EventQueue, RandomSource
from tcpsim.metrics import FlowInfo, FlowSummary, TraceLog, summarize, time_saving
from tcpsim.netmodel import Network, RoutingTable
from tcpsim.resources import (
    ACCESS_LINKS, CBR_FLOW_ID, DEFAULT_AWND, DEFAULT_BANDWIDTH_BPS, DEFAULT_CBR_PACKET_BYTES, DEFAULT_CBR_RATE_BPS,
    DEFAULT_DUP_ACK_THRESHOLD, DEFAULT_DURATION_S, DEFAULT_MAX_BACKOFF, DEFAULT_MSS_BYTES, DEFAULT_PROP_DELAY_S,
    DEFAULT_QUEUE_CAPACITY, DEFAULT_RTO_INITIAL_S, DEFAULT_RTO_MAX_S, DEFAULT_RTO_MIN_S, DEFAULT_SEED,
    DEFAULT_THROUGHPUT_WINDOW_S, DUMBBELL_NODES, FTP_FLOW_ID, SHARED_LINK,
)
from tcpsim.tcp import RttEstimator, TcpAgent, TcpSenderState, TcpSink, TcpVariant
from tcpsim.traffic import CbrAgent, CbrSource, FtpSource

__all__ = [
    'ConfigurationError', 'RunFault', 'SweepError', 'LinkConfig', 'TcpFlowConfig', 'CbrFlowConfig', 'ScriptedLoss',
    'ScenarioConfig', 'RunResult', 'VariantComparison', 'SweepResult', 'dumbbell_config_document',
    'build_paper_topology', 'run_scenario', 'compare_variants', 'run_sweep', 'SWEEP_COLUMNS', 'PACKET_COLUMNS',
]

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f'{field}: {message}' if field else message)
        self.field = field
        self.message = message


class RunFault(RuntimeError):
    """A run aborted; ``trace`` holds every record emitted up to the fault."""

    def __init__(self, message: str, trace: TraceLog):
        super().__init__(message)
        self.trace = trace


class SweepError(RuntimeError):
    def __init__(self, failures: List[Tuple[Tuple[float, str, int], str]]):
        lines = [
            f'  loss_rate={loss_rate:g} variant={variant} seed={seed}: {message}'
            for (loss_rate, variant, seed), message in failures
        ]
        super().__init__(f'{len(failures)} sweep cell(s) failed:\n' + '\n'.join(lines))
        self.failures = failures


class LinkConfig(NamedTuple):
    src: str
    dst: str
    bandwidth_bps: float = DEFAULT_BANDWIDTH_BPS
    prop_delay_s: float = DEFAULT_PROP_DELAY_S
    loss_rate: float = 0.0
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY


class TcpFlowConfig(NamedTuple):
    flow_id: int
    src: str
    dst: str
    variant: TcpVariant = TcpVariant.RENO
    total_bytes: Optional[int] = None
    start_s: float = 0.0
    mss: int = DEFAULT_MSS_BYTES
    awnd: int = DEFAULT_AWND
    dup_ack_threshold: int = DEFAULT_DUP_ACK_THRESHOLD
    initial_cwnd: float = 1.0
    initial_ssthresh: Optional[float] = None
    rto_initial_s: float = DEFAULT_RTO_INITIAL_S
    rto_min_s: float = DEFAULT_RTO_MIN_S
    rto_max_s: float = DEFAULT_RTO_MAX_S
    max_backoff: int = DEFAULT_MAX_BACKOFF

    @property
    def kind(self) -> str:
        return 'tcp'


class CbrFlowConfig(NamedTuple):
    flow_id: int
    src: str
    dst: str
    rate_bps: float = DEFAULT_CBR_RATE_BPS
    packet_bytes: int = DEFAULT_CBR_PACKET_BYTES
    start_s: float = 0.0
    stop_s: Optional[float] = None

    @property
    def kind(self) -> str:
        return 'cbr'


class ScriptedLoss(NamedTuple):
    """The first transmission of data segment ``segment_index`` (0-based) of a TCP flow is dropped on the shared link."""
    flow_id: int
    segment_index: int


FlowConfig = Union[TcpFlowConfig, CbrFlowConfig]

# JSON key -> (NamedTuple field, converter)
_LINK_KEYS = {
    'src': ('src', str), 'dst': ('dst', str), 'bandwidth_bps': ('bandwidth_bps', float),
    'prop_delay_s': ('prop_delay_s', float), 'loss_rate': ('loss_rate', float),
    'queue_capacity': ('queue_capacity', int),
}
_TCP_KEYS = {
    'type': None, 'id': ('flow_id', int), 'src': ('src', str), 'dst': ('dst', str),
    'variant': ('variant', TcpVariant.parse), 'total_bytes': ('total_bytes', int), 'start_s': ('start_s', float),
    'mss': ('mss', int), 'awnd': ('awnd', int), 'dup_ack_threshold': ('dup_ack_threshold', int),
    'initial_cwnd': ('initial_cwnd', float), 'initial_ssthresh': ('initial_ssthresh', float),
    'rto_initial_s': ('rto_initial_s', float), 'rto_min_s': ('rto_min_s', float), 'rto_max_s': ('rto_max_s', float),
    'max_backoff': ('max_backoff', int),
}
_CBR_KEYS = {
    'type': None, 'id': ('flow_id', int), 'src': ('src', str), 'dst': ('dst', str), 'rate_bps': ('rate_bps', float),
    'packet_bytes': ('packet_bytes', int), 'start_s': ('start_s', float), 'stop_s': ('stop_s', float),
}
_EXPERIMENT_KEYS = {
    'duration_s': ('duration_s', float), 'seed': ('seed', int), 'shared_link': None, 'scripted_losses': None,
    'trace_queue_events': ('trace_queue_events', bool), 'stop_on_completion': ('stop_on_completion', bool),
    'throughput_window_s': ('throughput_window_s', float),
}
_SECTIONS = ('topology', 'links', 'flows', 'experiment')


def _check_keys(doc: Any, allowed: Iterable[str], path: str) -> Dict[str, Any]:
    if not isinstance(doc, dict):
        raise ConfigurationError(path, f'expected an object, got {type(doc).__name__}')
    for key in doc:
        if key not in allowed:
            raise ConfigurationError(f'{path}.{key}' if path else key, 'unknown key')
    return doc


def _convert(value: Any, converter, path: str):
    if value is None:
        return None
    if converter is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(path, f'expected true or false, got {value!r}')
        return value
    if converter in (int, float) and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ConfigurationError(path, f'expected a number, got {value!r}')
    if converter is str and not isinstance(value, str):
        raise ConfigurationError(path, f'expected a string, got {value!r}')
    if converter is int and isinstance(value, float) and not value.is_integer():
        raise ConfigurationError(path, f'expected an integer, got {value!r}')
    try:
        return converter(value)
    except ValueError as e:
        raise ConfigurationError(path, str(e))


def _read_entry(doc: Dict[str, Any], keys: Dict, path: str) -> Dict[str, Any]:
    _check_keys(doc, keys, path)
    fields = {}
    for key, value in doc.items():
        spec = keys[key]
        if spec is None:
            continue
        name, converter = spec
        fields[name] = _convert(value, converter, f'{path}.{key}')
    return fields


def _require(fields: Dict[str, Any], names: Sequence[str], path: str):
    for name in names:
        if fields.get(name) is None:
            raise ConfigurationError(path, f'missing required key "{name}"')


class ScenarioConfig(NamedTuple):
    nodes: Tuple[str, ...]
    links: Tuple[LinkConfig, ...]
    flows: Tuple[FlowConfig, ...]
    duration_s: float = DEFAULT_DURATION_S
    seed: int = DEFAULT_SEED
    shared_link: Tuple[str, str] = SHARED_LINK
    scripted_losses: Tuple[ScriptedLoss, ...] = ()
    trace_queue_events: bool = True
    stop_on_completion: bool = False
    throughput_window_s: float = DEFAULT_THROUGHPUT_WINDOW_S

    @property
    def tcp_flows(self) -> List[TcpFlowConfig]:
        return [f for f in self.flows if isinstance(f, TcpFlowConfig)]

    @property
    def cbr_flows(self) -> List[CbrFlowConfig]:
        return [f for f in self.flows if isinstance(f, CbrFlowConfig)]

    def link_index(self, src: str, dst: str) -> Optional[int]:
        for idx, link in enumerate(self.links):
            if link.src == src and link.dst == dst:
                return idx
        return None

    def with_variant(self, variant: TcpVariant) -> 'ScenarioConfig':
        flows = tuple(f._replace(variant=variant) if isinstance(f, TcpFlowConfig) else f for f in self.flows)
        return self._replace(flows=flows)

    def with_loss_rate(self, loss_rate: float) -> 'ScenarioConfig':
        """Sets the random loss rate of the forward shared link."""
        idx = self.link_index(*self.shared_link)
        if idx is None:
            raise ConfigurationError('experiment.shared_link', f'no link {self.shared_link[0]}->{self.shared_link[1]}')
        links = list(self.links)
        links[idx] = links[idx]._replace(loss_rate=loss_rate)
        return self._replace(links=tuple(links)).validate()

    def validate(self) -> 'ScenarioConfig':
        if not self.nodes:
            raise ConfigurationError('topology.nodes', 'at least one node is required')
        if len(set(self.nodes)) != len(self.nodes):
            raise ConfigurationError('topology.nodes', 'node names have to be unique')
        nodes = set(self.nodes)
        seen_links = set()
        for idx, link in enumerate(self.links):
            path = f'links[{idx}]'
            for key in ('src', 'dst'):
                if getattr(link, key) not in nodes:
                    raise ConfigurationError(f'{path}.{key}', f'unknown node "{getattr(link, key)}"')
            if link.src == link.dst:
                raise ConfigurationError(path, 'a link has to connect two different nodes')
            if (link.src, link.dst) in seen_links:
                raise ConfigurationError(path, f'duplicate link {link.src}->{link.dst}')
            seen_links.add((link.src, link.dst))
            if not link.bandwidth_bps > 0:
                raise ConfigurationError(f'{path}.bandwidth_bps', f'has to be positive (got {link.bandwidth_bps})')
            if not link.prop_delay_s > 0:
                raise ConfigurationError(f'{path}.prop_delay_s', f'has to be positive (got {link.prop_delay_s})')
            if not 0.0 <= link.loss_rate <= 1.0:
                raise ConfigurationError(f'{path}.loss_rate', f'has to be in [0, 1] (got {link.loss_rate})')
            if link.queue_capacity < 1:
                raise ConfigurationError(f'{path}.queue_capacity', f'has to be positive (got {link.queue_capacity})')

        routing = RoutingTable(self.nodes, self.links)
        flow_ids = set()
        for idx, flow in enumerate(self.flows):
            path = f'flows[{idx}]'
            if flow.flow_id in flow_ids:
                raise ConfigurationError(f'{path}.id', f'duplicate flow id {flow.flow_id}')
            flow_ids.add(flow.flow_id)
            for key in ('src', 'dst'):
                if getattr(flow, key) not in nodes:
                    raise ConfigurationError(f'{path}.{key}', f'unknown node "{getattr(flow, key)}"')
            if flow.src == flow.dst:
                raise ConfigurationError(path, 'source and destination have to differ')
            if not routing.reachable(flow.src, flow.dst):
                raise ConfigurationError(path, f'no route from {flow.src} to {flow.dst}')
            if flow.start_s < 0:
                raise ConfigurationError(f'{path}.start_s', f'cannot be negative (got {flow.start_s})')
            if isinstance(flow, TcpFlowConfig):
                self._validate_tcp(flow, path, routing)
            else:
                self._validate_cbr(flow, path)

        if not self.duration_s > 0:
            raise ConfigurationError('experiment.duration_s', f'has to be positive (got {self.duration_s})')
        if self.seed < 0:
            raise ConfigurationError('experiment.seed', f'has to be non-negative (got {self.seed})')
        if not self.throughput_window_s > 0:
            raise ConfigurationError(
                'experiment.throughput_window_s', f'has to be positive (got {self.throughput_window_s})'
            )
        self._validate_scripted_losses()
        return self

    @staticmethod
    def _validate_tcp(flow: TcpFlowConfig, path: str, routing: RoutingTable):
        if not routing.reachable(flow.dst, flow.src):
            raise ConfigurationError(path, f'no route for ACKs from {flow.dst} to {flow.src}')
        if flow.total_bytes is not None and flow.total_bytes < 1:
            raise ConfigurationError(f'{path}.total_bytes', f'has to be positive (got {flow.total_bytes})')
        for key in ('mss', 'awnd', 'dup_ack_threshold', 'max_backoff'):
            if getattr(flow, key) < 1:
                raise ConfigurationError(f'{path}.{key}', f'has to be positive (got {getattr(flow, key)})')
        if not flow.initial_cwnd >= 1:
            raise ConfigurationError(f'{path}.initial_cwnd', f'has to be at least 1 (got {flow.initial_cwnd})')
        if flow.initial_ssthresh is not None and not flow.initial_ssthresh > 0:
            raise ConfigurationError(f'{path}.initial_ssthresh', f'has to be positive (got {flow.initial_ssthresh})')
        if not 0 < flow.rto_min_s <= flow.rto_max_s:
            raise ConfigurationError(f'{path}.rto_min_s', 'requires 0 < rto_min_s <= rto_max_s')
        if not flow.rto_initial_s > 0:
            raise ConfigurationError(f'{path}.rto_initial_s', f'has to be positive (got {flow.rto_initial_s})')

    @staticmethod
    def _validate_cbr(flow: CbrFlowConfig, path: str):
        if not flow.rate_bps > 0:
            raise ConfigurationError(f'{path}.rate_bps', f'has to be positive (got {flow.rate_bps})')
        if flow.packet_bytes < 1:
            raise ConfigurationError(f'{path}.packet_bytes', f'has to be positive (got {flow.packet_bytes})')
        if flow.stop_s is not None and not flow.stop_s > flow.start_s:
            raise ConfigurationError(f'{path}.stop_s', f'has to be after start_s (got {flow.stop_s})')

    def _validate_scripted_losses(self):
        if not self.scripted_losses:
            return
        idx = self.link_index(*self.shared_link)
        if idx is None:
            raise ConfigurationError(
                'experiment.shared_link', f'no link {self.shared_link[0]}->{self.shared_link[1]}'
            )
        if self.links[idx].loss_rate > 0:
            raise ConfigurationError(
                'experiment.scripted_losses',
                f'the shared link {self.shared_link[0]}->{self.shared_link[1]} already has a random loss rate'
            )
        tcp = {f.flow_id: f for f in self.tcp_flows}
        for i, loss in enumerate(self.scripted_losses):
            path = f'experiment.scripted_losses[{i}]'
            if loss.flow_id not in tcp:
                raise ConfigurationError(f'{path}.flow', f'{loss.flow_id} is not a TCP flow')
            if loss.segment_index < 0:
                raise ConfigurationError(f'{path}.segment', f'cannot be negative (got {loss.segment_index})')
            flow = tcp[loss.flow_id]
            if flow.total_bytes is not None and loss.segment_index * flow.mss >= flow.total_bytes:
                raise ConfigurationError(
                    f'{path}.segment', f'flow {flow.flow_id} has fewer than {loss.segment_index + 1} segments'
                )

    def to_document(self) -> Dict[str, Any]:
        def flow_doc(flow: FlowConfig) -> Dict[str, Any]:
            doc = {'type': flow.kind, 'id': flow.flow_id}
            for key, value in flow._asdict().items():
                if key == 'flow_id':
                    continue
                doc[key] = value.value if isinstance(value, TcpVariant) else value
            return doc

        return {
            'topology': {'nodes': list(self.nodes)},
            'links': [link._asdict() for link in self.links],
            'flows': [flow_doc(flow) for flow in self.flows],
            'experiment': {
                'duration_s': self.duration_s,
                'seed': self.seed,
                'shared_link': list(self.shared_link),
                'scripted_losses': [{'flow': s.flow_id, 'segment': s.segment_index} for s in self.scripted_losses],
                'trace_queue_events': self.trace_queue_events,
                'stop_on_completion': self.stop_on_completion,
                'throughput_window_s': self.throughput_window_s,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2) + '\n'

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.to_json())

    @staticmethod
    def from_dict(doc: Dict[str, Any]) -> 'ScenarioConfig':
        _check_keys(doc, _SECTIONS, '')
        topology = _check_keys(doc.get('topology', {}), ('nodes',), 'topology')
        nodes = topology.get('nodes')
        if not isinstance(nodes, list) or not all(isinstance(n, str) for n in nodes):
            raise ConfigurationError('topology.nodes', 'expected a list of node names')

        links_doc = doc.get('links', [])
        if not isinstance(links_doc, list):
            raise ConfigurationError('links', 'expected a list')
        links = []
        for idx, entry in enumerate(links_doc):
            path = f'links[{idx}]'
            fields = _read_entry(entry, _LINK_KEYS, path)
            _require(fields, ('src', 'dst'), path)
            links.append(LinkConfig(**{k: v for k, v in fields.items() if v is not None}))

        flows_doc = doc.get('flows', [])
        if not isinstance(flows_doc, list):
            raise ConfigurationError('flows', 'expected a list')
        flows = []
        for idx, entry in enumerate(flows_doc):
            path = f'flows[{idx}]'
            kind = entry.get('type') if isinstance(entry, dict) else None
            if kind == 'tcp':
                fields = _read_entry(entry, _TCP_KEYS, path)
                _require(fields, ('flow_id', 'src', 'dst'), path)
                flows.append(TcpFlowConfig(**{
                    k: v for k, v in fields.items() if v is not None or k in ('total_bytes', 'initial_ssthresh')
                }))
            elif kind == 'cbr':
                fields = _read_entry(entry, _CBR_KEYS, path)
                _require(fields, ('flow_id', 'src', 'dst'), path)
                flows.append(CbrFlowConfig(**{k: v for k, v in fields.items() if v is not None or k == 'stop_s'}))
            else:
                raise ConfigurationError(f'{path}.type', f'expected "tcp" or "cbr", got {kind!r}')

        experiment = doc.get('experiment', {})
        fields = _read_entry(experiment, _EXPERIMENT_KEYS, 'experiment')
        fields = {k: v for k, v in fields.items() if v is not None}
        if 'shared_link' in experiment:
            shared = experiment['shared_link']
            if not (isinstance(shared, list) and len(shared) == 2 and all(isinstance(n, str) for n in shared)):
                raise ConfigurationError('experiment.shared_link', 'expected a pair of node names')
            fields['shared_link'] = tuple(shared)
        scripted = []
        for i, entry in enumerate(experiment.get('scripted_losses') or []):
            path = f'experiment.scripted_losses[{i}]'
            _check_keys(entry, ('flow', 'segment'), path)
            if 'flow' not in entry or 'segment' not in entry:
                raise ConfigurationError(path, 'expected the keys "flow" and "segment"')
            scripted.append(ScriptedLoss(
                _convert(entry['flow'], int, f'{path}.flow'), _convert(entry['segment'], int, f'{path}.segment')
            ))
        fields['scripted_losses'] = tuple(scripted)

        return ScenarioConfig(nodes=tuple(nodes), links=tuple(links), flows=tuple(flows), **fields).validate()

    @staticmethod
    def from_json(text: str) -> 'ScenarioConfig':
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError('', f'invalid JSON: {e}')
        return ScenarioConfig.from_dict(doc)

    @staticmethod
    def from_path(path: Union[str, Path]) -> 'ScenarioConfig':
        return ScenarioConfig.from_json(Path(path).read_text())


def dumbbell_config_document(
        loss_rate: float = 0.0,
        variant: Union[str, TcpVariant] = TcpVariant.RENO,
        total_bytes: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Six-node dumbbell: FTP over TCP from n0 to n4 and CBR over UDP from n1 to n5 share the n2->n3 link,
    the only link with random loss. Every link is bidirectional with 2 Mbps and 10 ms.
    """
    variant = variant if isinstance(variant, TcpVariant) else TcpVariant.parse(variant)
    links = []
    for src, dst in ACCESS_LINKS[:2] + (SHARED_LINK,) + ACCESS_LINKS[2:]:
        for a, b in ((src, dst), (dst, src)):
            links.append({
                'src': a,
                'dst': b,
                'bandwidth_bps': DEFAULT_BANDWIDTH_BPS,
                'prop_delay_s': DEFAULT_PROP_DELAY_S,
                'loss_rate': loss_rate if (a, b) == SHARED_LINK else 0.0,
                'queue_capacity': DEFAULT_QUEUE_CAPACITY,
            })
    return {
        'topology': {'nodes': list(DUMBBELL_NODES)},
        'links': links,
        'flows': [
            {
                'type': 'tcp', 'id': FTP_FLOW_ID, 'src': 'n0', 'dst': 'n4', 'variant': variant.value,
                'total_bytes': total_bytes, 'mss': DEFAULT_MSS_BYTES, 'awnd': DEFAULT_AWND,
            },
            {
                'type': 'cbr', 'id': CBR_FLOW_ID, 'src': 'n1', 'dst': 'n5', 'rate_bps': DEFAULT_CBR_RATE_BPS,
                'packet_bytes': DEFAULT_CBR_PACKET_BYTES,
            },
        ],
        'experiment': {
            'duration_s': DEFAULT_DURATION_S,
            'seed': DEFAULT_SEED,
            'shared_link': list(SHARED_LINK),
            'scripted_losses': [],
            'trace_queue_events': True,
            'stop_on_completion': False,
            'throughput_window_s': DEFAULT_THROUGHPUT_WINDOW_S,
        },
    }


_PATH_TOKEN = re.compile(r'([^.\[\]]+)|\[(\d+)\]')


def _apply_override(doc: Dict[str, Any], dotted: str, value: Any):
    tokens = [name if name else int(index) for name, index in _PATH_TOKEN.findall(dotted)]
    if not tokens:
        raise ConfigurationError(dotted, 'empty override path')
    target = doc
    for i, token in enumerate(tokens):
        last = i == len(tokens) - 1
        where = dotted if last else str(token)
        if isinstance(token, int):
            if not isinstance(target, list) or token >= len(target):
                raise ConfigurationError(dotted, f'index {token} does not exist')
        elif not isinstance(target, dict) or (not last and token not in target):
            raise ConfigurationError(dotted, f'"{where}" does not exist')
        if last:
            target[token] = value
        else:
            target = target[token]


def build_paper_topology(
        loss_rate: float = 0.0,
        variant: Union[str, TcpVariant] = TcpVariant.RENO,
        overrides: Optional[Dict[str, Any]] = None,
) -> ScenarioConfig:
    """
    Builds the validated dumbbell configuration. ``overrides`` maps dotted paths of the JSON document
    to new values, e.g. ``{'experiment.duration_s': 10, 'flows[0].total_bytes': 100000}``.
    """
    doc = dumbbell_config_document(loss_rate, variant)
    for dotted, value in (overrides or {}).items():
        _apply_override(doc, dotted, deepcopy(value))
    return ScenarioConfig.from_dict(doc)


class RunResult(NamedTuple):
    trace: TraceLog
    summary: Dict[int, FlowSummary]
    config_echo: ScenarioConfig
    seed: int
    in_flight: Dict[int, int]
    events_executed: int
    end_time: float


def _flow_infos(cfg: ScenarioConfig) -> List[FlowInfo]:
    return [
        FlowInfo(f.flow_id, f.kind, f.src, f.dst, f.total_bytes if isinstance(f, TcpFlowConfig) else None)
        for f in cfg.flows
    ]


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """
    Executes one configuration to ``duration_s`` (or to the completion of every bounded TCP flow
    when ``stop_on_completion`` is set). Identical configurations produce identical traces.
    """
    cfg.validate()
    events = EventQueue()
    trace = TraceLog(flows=_flow_infos(cfg), duration=cfg.duration_s, queue_events=cfg.trace_queue_events)
    network = Network(events, trace, cfg.nodes)
    rng = RandomSource(cfg.seed)
    for idx, link in enumerate(cfg.links):
        network.add_link(
            link.src,
            link.dst,
            bandwidth_bps=link.bandwidth_bps,
            prop_delay_s=link.prop_delay_s,
            loss_rate=link.loss_rate,
            queue_capacity=link.queue_capacity,
            rng=rng.spawn(idx) if link.loss_rate > 0 else None,
        )
    network.build_routes()

    tcp_by_id = {f.flow_id: f for f in cfg.tcp_flows}
    if cfg.scripted_losses:
        shared = network.link(*cfg.shared_link)
        for loss in cfg.scripted_losses:
            shared.scripted_drops.add((loss.flow_id, loss.segment_index * tcp_by_id[loss.flow_id].mss))

    agents = []
    for flow in cfg.tcp_flows:
        state = TcpSenderState(
            source=FtpSource(flow.flow_id, flow.total_bytes),
            variant=flow.variant,
            mss=flow.mss,
            awnd=flow.awnd,
            dup_ack_threshold=flow.dup_ack_threshold,
            initial_cwnd=flow.initial_cwnd,
            initial_ssthresh=flow.initial_ssthresh,
            rtt=RttEstimator(flow.rto_initial_s, flow.rto_min_s, flow.rto_max_s, flow.max_backoff),
        )
        agent = TcpAgent(network, flow.flow_id, flow.src, flow.dst, state)
        TcpSink(network, flow.flow_id, flow.dst, flow.src)
        events.schedule(flow.start_s, agent.start)
        agents.append(agent)
    for flow in cfg.cbr_flows:
        source = CbrSource(
            flow.flow_id, flow.src, flow.dst, flow.rate_bps, flow.packet_bytes, flow.start_s,
            math.inf if flow.stop_s is None else flow.stop_s,
        )
        CbrAgent(network, source).start()

    bounded = [agent for agent in agents if agent.state.source.bounded]
    if cfg.stop_on_completion and bounded:
        pending = set(agent.flow_id for agent in bounded)

        def on_complete(agent: TcpAgent):
            pending.discard(agent.flow_id)
            if not pending:
                events.stop()

        for agent in bounded:
            agent.on_complete.append(on_complete)

    logger.info(f'Running {len(cfg.flows)} flow(s) for up to {cfg.duration_s:g} s (seed {cfg.seed})')
    try:
        executed = events.run_until(cfg.duration_s)
    except EventFault as e:
        trace.duration = round(events.now, 6)
        logger.error(f'Run aborted: {e}')
        raise RunFault(str(e), trace) from e
    if events.now < cfg.duration_s:
        trace.duration = round(events.now, 6)
    for agent in bounded:
        if not agent.state.completed:
            logger.warning(f'Flow {agent.flow_id} did not complete within {trace.duration:g} s')
    logger.info(f'Executed {executed} events, {len(trace)} trace records')
    return RunResult(
        trace=trace,
        summary=summarize(trace),
        config_echo=cfg,
        seed=cfg.seed,
        in_flight=dict(network.in_flight),
        events_executed=executed,
        end_time=events.now,
    )


class VariantComparison(NamedTuple):
    flow_id: int
    tahoe_s: Optional[float]
    reno_s: Optional[float]
    time_saving_pct: Optional[float]

    def to_text(self) -> str:
        def fmt(value: Optional[float]) -> str:
            return 'incomplete' if value is None else f'{value:.6f}'

        saving = 'n/a' if self.time_saving_pct is None else f'{self.time_saving_pct:.2f}%'
        return (
            f'flow={self.flow_id}\n'
            f'tahoe_completion_s={fmt(self.tahoe_s)}\n'
            f'reno_completion_s={fmt(self.reno_s)}\n'
            f'tahoe_time_saving={saving}\n'
        )


def compare_variants(cfg: ScenarioConfig) -> VariantComparison:
    """Completion time of the first bounded TCP flow under Tahoe and Reno on the same seed."""
    bounded = [f for f in cfg.tcp_flows if f.total_bytes is not None]
    if not bounded:
        raise ConfigurationError('flows', 'comparing variants requires a TCP flow with total_bytes set')
    flow_id = bounded[0].flow_id
    times = {}
    for variant in (TcpVariant.TAHOE, TcpVariant.RENO):
        result = run_scenario(cfg.with_variant(variant))
        times[variant] = result.summary[flow_id].completion_time_s
    tahoe, reno = times[TcpVariant.TAHOE], times[TcpVariant.RENO]
    saving = time_saving(tahoe, reno) if tahoe is not None and reno is not None else None
    return VariantComparison(flow_id, tahoe, reno, saving)


SWEEP_COLUMNS = [
    'loss_rate', 'variant', 'seed', 'goodput_bps', 'throughput_bps', 'completion_s', 'retransmissions', 'rto_count',
]
# Kept in the in-memory rows and aggregated into the summary; sweep.csv holds SWEEP_COLUMNS only.
PACKET_COLUMNS = ['generated_pkts', 'received_pkts']
_AGGREGATED = ['goodput_bps', 'throughput_bps', 'completion_s', 'retransmissions', 'rto_count', *PACKET_COLUMNS]


class SweepResult(NamedTuple):
    rows: pd.DataFrame
    summary: pd.DataFrame


def _sweep_cell(cfg: ScenarioConfig, flow_id: int) -> Tuple[Dict[str, Any], Optional[str]]:
    variant = cfg.tcp_flows[0].variant.value
    coords = {'loss_rate': cfg.links[cfg.link_index(*cfg.shared_link)].loss_rate, 'variant': variant, 'seed': cfg.seed}
    try:
        summary = run_scenario(cfg).summary[flow_id]
    except (RunFault, ConfigurationError) as e:
        return coords, str(e)
    return {
        **coords,
        'goodput_bps': summary.goodput_bps,
        'throughput_bps': summary.throughput_bps,
        'completion_s': summary.completion_time_s,
        'retransmissions': summary.retransmissions,
        'rto_count': summary.rto_count,
        'generated_pkts': summary.generated_pkts,
        'received_pkts': summary.received_pkts,
    }, None


def aggregate_sweep(rows: pd.DataFrame) -> pd.DataFrame:
    """Per (loss_rate, variant) cell: seed count, mean and sample standard deviation, goodput standard error."""
    grouped = rows.groupby(['loss_rate', 'variant'], sort=True)
    summary = grouped[_AGGREGATED].agg(['mean', 'std'])
    summary.columns = [f'{column}_{stat}' for column, stat in summary.columns]
    for column in _AGGREGATED:
        mean, std = summary[f'{column}_mean'], summary[f'{column}_std']
        # A single sample has no spread; cells without any value stay empty.
        summary[f'{column}_std'] = std.where(std.notna() | mean.isna(), 0.0)
    summary.insert(0, 'n', grouped.size())
    summary['goodput_bps_sem'] = summary['goodput_bps_std'] / summary['n'] ** 0.5
    return summary.reset_index()


def run_sweep(
        base: ScenarioConfig,
        loss_rates: Sequence[float],
        variants: Sequence[Union[str, TcpVariant]],
        seeds: Sequence[int],
        workers: int = 1,
        progress: bool = True,
) -> SweepResult:
    """
    Runs the cartesian product of loss rates, variants and seeds on top of ``base``.
    Queue records are not traced in sweep runs. Rows come out sorted by (loss_rate, variant, seed)
    regardless of the number of workers.
    """
    for name, values in (('loss_rates', loss_rates), ('variants', variants), ('seeds', seeds)):
        if not values:
            raise ConfigurationError(name, 'the sweep needs at least one value')
    negative = [seed for seed in seeds if seed < 0]
    if negative:
        raise ConfigurationError('seeds', f'seeds have to be non-negative (got {negative})')
    if not base.tcp_flows:
        raise ConfigurationError('flows', 'the sweep needs a TCP flow')
    variants = [v if isinstance(v, TcpVariant) else TcpVariant.parse(v) for v in variants]
    flow_id = base.tcp_flows[0].flow_id
    base = base._replace(trace_queue_events=False)
    configs = [
        base.with_loss_rate(loss_rate).with_variant(variant)._replace(seed=seed)
        for loss_rate, variant, seed in product(loss_rates, variants, seeds)
    ]
    logger.info(f'Sweeping {len(configs)} runs with {workers} worker(s)')
    run_cell = partial(_sweep_cell, flow_id=flow_id)
    maybe_tqdm = partial(tqdm, desc='Sweep runs', total=len(configs)) if progress else identity
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(maybe_tqdm(pool.map(run_cell, configs)))
    else:
        outcomes = list(maybe_tqdm(map(run_cell, configs)))

    failures = [
        ((row['loss_rate'], row['variant'], row['seed']), error) for row, error in outcomes if error is not None
    ]
    if failures:
        raise SweepError(failures)
    rows = pd.DataFrame([row for row, _ in outcomes], columns=SWEEP_COLUMNS + PACKET_COLUMNS)
    rows['completion_s'] = pd.to_numeric(rows['completion_s'])
    rows = rows.sort_values(['loss_rate', 'variant', 'seed'], kind='mergesort').reset_index(drop=True)
    return SweepResult(rows=rows, summary=aggregate_sweep(rows))
