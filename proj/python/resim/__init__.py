"""LiDAR reconstruct / resimulate toolkit."""

try:
    from ._resim import *  # noqa: F401,F403
    from ._resim import __doc__  # noqa: F401
except ImportError:  # build tree: the extension sits next to the package
    from _resim import *  # noqa: F401,F403
