"""Kernel backend selection.

The compiled extension (marylab._ckernels) is preferred when importable; the
numpy fallback has identical semantics.  Set MARYLAB_BACKEND=fallback or
MARYLAB_BACKEND=compiled to force a side (the latter raises if the extension
is missing rather than silently degrading).
"""

from __future__ import annotations

import os

from . import fallback as _fallback

_choice = os.environ.get("MARYLAB_BACKEND", "").strip().lower()

if _choice == "fallback":
    impl = _fallback
    BACKEND = "fallback"
elif _choice == "compiled":
    from .. import _ckernels as impl  # noqa: F401

    BACKEND = "compiled"
else:
    try:
        from .. import _ckernels as impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        impl = _fallback
        BACKEND = "fallback"

f_product = impl.f_product
ptilde_logs = impl.ptilde_logs
det_logs = impl.det_logs
sturm_count = impl.sturm_count
sturm_counts = impl.sturm_counts
bisect_eigenvalues = impl.bisect_eigenvalues
inverse_iteration = impl.inverse_iteration
sinpi = impl.sinpi
cospi = impl.cospi
