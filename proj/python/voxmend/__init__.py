"""48 kHz speech restoration and enhancement toolkit (C++ core)."""

from ._voxmend import *  # noqa: F401,F403
from ._voxmend import __doc__  # noqa: F401
