from .engine import *
from .metrics import *
from .netmodel import *
from .tcp import *
from .traffic import *
from .scenario import *
