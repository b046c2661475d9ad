"""Python surface of the outlier-detection search core.

The compiled extension is normally installed as ``autood._core``. When
working from a source tree, a build-directory ``_core`` module on
``sys.path`` is accepted as a fallback.
"""

try:
    from autood._core import *  # noqa: F401,F403
    from autood._core import __version__  # noqa: F401
except ImportError:  # pragma: no cover - source-tree fallback
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
