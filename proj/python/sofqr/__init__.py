from ._sofqr import *  # noqa: F401,F403
from ._sofqr import __version__  # noqa: F401
