try:
    from ._conectl import *  # noqa: F401,F403
    from ._conectl import __version__  # noqa: F401
except ImportError:  # in-tree builds put the module next to the package
    from _conectl import *  # noqa: F401,F403
    from _conectl import __version__  # noqa: F401
