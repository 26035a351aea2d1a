"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``POMDPKIT_PURE=1`` to
force the pure-Python implementation.  ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("POMDPKIT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels

sample_chain = _impl.sample_chain
hmm_filter = _impl.hmm_filter
ruler_chain = _impl.ruler_chain
regret_matching = _impl.regret_matching
recem_gaussian = _impl.recem_gaussian

__all__ = ["BACKEND", "sample_chain", "hmm_filter", "ruler_chain", "regret_matching", "recem_gaussian"]
