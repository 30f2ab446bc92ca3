"""Backend selection for the hot kernels.

The compiled extension ``rlbridge._kernels`` is used when importable; set
``RLBRIDGE_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("RLBRIDGE_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
path_keys = _impl.path_keys
uniforms = _impl.uniforms
normals = _impl.normals
sample_bridge_batch = _impl.sample_bridge_batch
atom_posterior_batch = _impl.atom_posterior_batch


def available_backends():
    """Modules implementing the kernel contract that can be imported here."""
    mods = [_kernels_py]
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        mods.append(_kernels)
    return mods
