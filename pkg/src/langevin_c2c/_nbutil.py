"""Numba helpers shared by the kernels."""

from __future__ import annotations

import numba as nb
from numba.core import types
from numba.extending import intrinsic


@intrinsic
def _data_ptr(typingctx, arr):
    if not isinstance(arr, types.Array):
        return None
    sig = types.CPointer(arr.dtype)(arr)

    def codegen(context, builder, signature, args):
        ary = context.make_array(signature.args[0])(context, builder, args[0])
        return ary.data

    return sig, codegen


@nb.njit(cache=True, nogil=True, inline="always")
def borrow(a):
    """Untracked view of a C-contiguous array.

    Kernels hand the same large read-only arrays down through many inlined
    calls; without a meminfo the views skip the atomic reference counting
    that otherwise dominates the inner loops. The caller must keep ``a``
    alive for as long as the view is used.
    """
    return nb.carray(_data_ptr(a), a.shape)
