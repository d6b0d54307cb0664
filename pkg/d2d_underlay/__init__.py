__version__ = "0.1.0"

from .config import *  # noqa: E402, F401, F403
from .topology import *  # noqa: E402, F401, F403
from .estimation import *  # noqa: E402, F401, F403
from .se import *  # noqa: E402, F401, F403
from .powerctl import *  # noqa: E402, F401, F403
from .harness import *  # noqa: E402, F401, F403
