from ._tractloop import *  # noqa: F401,F403
from ._tractloop import __version__  # noqa: F401
