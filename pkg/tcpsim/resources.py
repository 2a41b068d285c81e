"""
Defaults and named constants shared by the simulator, the scenario builder and the CLI.
"""
__all__ = [
    'VERSION', 'DUMBBELL_NODES', 'ACCESS_LINKS', 'DEFAULT_LOSS_RATES', 'DEFAULT_DURATION_S', 'SHARED_LINK',
    'FTP_FLOW_ID', 'CBR_FLOW_ID',
    'DEFAULT_BANDWIDTH_BPS', 'DEFAULT_PROP_DELAY_S', 'DEFAULT_QUEUE_CAPACITY', 'DEFAULT_MSS_BYTES', 'DEFAULT_AWND',
    'DEFAULT_DUP_ACK_THRESHOLD', 'DEFAULT_RTO_INITIAL_S', 'DEFAULT_RTO_MIN_S', 'DEFAULT_RTO_MAX_S',
    'DEFAULT_MAX_BACKOFF', 'ACK_SIZE_BYTES', 'DEFAULT_CBR_RATE_BPS', 'DEFAULT_CBR_PACKET_BYTES',
    'DEFAULT_THROUGHPUT_WINDOW_S', 'DEFAULT_SEED', 'DEFAULT_SWEEP_SEEDS',
]

VERSION = '0.1'

# Dumbbell: n0, n1 sources; n2, n3 routers; n4, n5 sinks.
DUMBBELL_NODES = ('n0', 'n1', 'n2', 'n3', 'n4', 'n5')
ACCESS_LINKS = (('n0', 'n2'), ('n1', 'n2'), ('n3', 'n4'), ('n3', 'n5'))
SHARED_LINK = ('n2', 'n3')

# Random loss rates of the shared link swept by default.
DEFAULT_LOSS_RATES = (0.0, 0.01, 0.10, 0.20, 0.30)
DEFAULT_DURATION_S = 141.0

FTP_FLOW_ID = 1
CBR_FLOW_ID = 2

DEFAULT_BANDWIDTH_BPS = 2e6
DEFAULT_PROP_DELAY_S = 0.010
DEFAULT_QUEUE_CAPACITY = 50

DEFAULT_MSS_BYTES = 536
DEFAULT_AWND = 32
DEFAULT_DUP_ACK_THRESHOLD = 3
DEFAULT_RTO_INITIAL_S = 3.0
DEFAULT_RTO_MIN_S = 1.0
DEFAULT_RTO_MAX_S = 64.0
DEFAULT_MAX_BACKOFF = 64
ACK_SIZE_BYTES = 40

DEFAULT_CBR_RATE_BPS = 0.5e6
DEFAULT_CBR_PACKET_BYTES = 210

DEFAULT_THROUGHPUT_WINDOW_S = 1.0

DEFAULT_SEED = 1
DEFAULT_SWEEP_SEEDS = tuple(range(1, 21))
