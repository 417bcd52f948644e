"""Picks the compiled kernels when available, else the numpy fallback.

Set ``POMDP_MANIP_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from pomdp_manip.dish import _pykernels

if os.environ.get("POMDP_MANIP_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from pomdp_manip.dish import _ckernels as _impl
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"
    else:
        BACKEND = "cython"

step = _impl.step
expected_reward = _impl.expected_reward
update = _impl.update
rollout = _impl.rollout
valid_actions = _impl.valid_actions

python = _pykernels


def compiled():
    """The compiled module, or None when it was not built."""
    try:
        from pomdp_manip.dish import _ckernels
    except ImportError:
        return None
    return _ckernels
