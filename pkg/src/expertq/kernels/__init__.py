"""Hot-kernel dispatch: compiled Cython extension with a pure-numpy fallback.

The compiled module is preferred when present; set ``EXPERTQ_PURE_PYTHON=1``
to force the fallback. Both implementations return identical results, so the
choice only affects speed. ``IMPLEMENTATION`` records which one is active.
"""

import os

from . import pure

if os.environ.get("EXPERTQ_PURE_PYTHON"):
    _impl = pure
    IMPLEMENTATION = "pure"
else:
    try:
        from . import _compiled as _impl

        IMPLEMENTATION = "compiled"
    except ImportError:
        _impl = pure
        IMPLEMENTATION = "pure"

legal_mask = _impl.legal_mask
flips_mask = _impl.flips_mask
im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["IMPLEMENTATION", "legal_mask", "flips_mask", "im2col", "col2im", "pure"]
