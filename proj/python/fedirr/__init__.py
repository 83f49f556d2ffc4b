"""Python access to the federated irrigation simulator."""

from ._fedirr import *  # noqa: F401,F403
from ._fedirr import FedirrError, default_config, run_demo, compare  # noqa: F401
