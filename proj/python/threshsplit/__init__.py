"""Threshold regression with a nonparametrically varying split point.

Thin wrapper around the compiled extension; everything lives in _core.
"""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __version__  # noqa: F401
except ImportError:
    # Build-tree layout: the extension sits next to this package on sys.path
    # rather than inside it.
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
