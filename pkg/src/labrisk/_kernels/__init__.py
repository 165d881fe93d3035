"""Hot loops for tree growing, with a compiled backend when available.

The Cython extension ``_tree`` is used when it was built; otherwise the numpy
twin in ``_tree_py`` is used. Set ``LABRISK_PURE_PYTHON=1`` to force the
fallback. Both produce identical trees for identical inputs.
"""

import os

from . import _tree_py

BACKEND = "python"

if os.environ.get("LABRISK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _tree as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        BACKEND = "cython"
else:
    _compiled = None

_impl = _compiled if _compiled is not None else _tree_py

build_tree = _impl.build_tree
apply_tree = _impl.apply_tree

GINI = _tree_py.GINI
LEAST_SQUARES = _tree_py.LEAST_SQUARES


def backends():
    """Mapping of available backend name -> module."""
    out = {"python": _tree_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
