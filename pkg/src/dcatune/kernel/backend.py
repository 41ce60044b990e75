"""Loop backend selection: compiled extension when available, numpy otherwise.

Set ``DCATUNE_KERNEL=python`` or ``=compiled`` to force one side (the
benchmark and the parity tests use this).
"""

from __future__ import annotations

import os

from . import _loop_py

try:
    from . import _loop_cy

    HAVE_COMPILED = True
except ImportError:  # extension not built
    _loop_cy = None
    HAVE_COMPILED = False


def _select():
    pref = os.environ.get("DCATUNE_KERNEL", "").strip().lower()
    if pref in ("py", "python", "numpy"):
        return "python"
    if pref in ("cy", "c", "compiled"):
        if not HAVE_COMPILED:
            raise ImportError(
                "DCATUNE_KERNEL requests the compiled kernel but the extension "
                "is not built; reinstall with the Cython toolchain available"
            )
        return "compiled"
    return "compiled" if HAVE_COMPILED else "python"


ACTIVE = _select()


def get_run_chunk(name=None):
    which = name or ACTIVE
    if which == "compiled":
        return _loop_cy.run_chunk
    return _loop_py.run_chunk


run_chunk = get_run_chunk()
