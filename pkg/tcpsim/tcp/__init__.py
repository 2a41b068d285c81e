from .rtt import *
from .sender import *
from .receiver import *
from .agent import *
