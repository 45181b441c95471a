"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise (or when the
``POSTCLUST_PURE_PYTHON`` environment variable is set) the numpy fallback is
used.  Both expose the same four functions with bit-identical results.
"""
import os

BACKEND = "python"
if not os.environ.get("POSTCLUST_PURE_PYTHON"):
    try:
        from postclust import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = None
else:
    _impl = None

if _impl is None:
    from postclust import _fallback as _impl

ward_merges = _impl.ward_merges
ward_preserved_many = _impl.ward_preserved_many
dip_sorted = _impl.dip_sorted
dip_uniform_many = _impl.dip_uniform_many

__all__ = ["BACKEND", "ward_merges", "ward_preserved_many", "dip_sorted", "dip_uniform_many"]
