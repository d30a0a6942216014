"""Structure-aware pooling over contextualized attribute vectors.

Homogeneous schemas concatenate elementwise products of aligned attribute
pairs; heterogeneous schemas take, per left attribute, the elementwise
maximum of its products against every right attribute.  A Siamese variant
prepends the two entity-level vectors to the attribute features.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

Vectors = Mapping[str, np.ndarray]


def _dim(vectors: Vectors) -> int:
    dims = {v.shape[-1] for v in vectors.values()}
    if len(dims) > 1:
        raise DataError(f"attribute vectors disagree on dimension: {sorted(dims)}")
    return dims.pop() if dims else 0


def pooling_homo(left: Vectors, right: Vectors, alignment: Sequence[str]) -> np.ndarray:
    """Concatenated elementwise products over the aligned attribute list.

    An attribute missing on either side contributes a zero vector, so its
    slice is zero: a neutral no-evidence signal.
    """
    if not alignment:
        raise DataError("alignment must name at least one attribute")
    d = max(_dim(left), _dim(right))
    if d == 0:
        raise DataError("cannot pool: no attribute vectors on either side")
    zero = np.zeros(d)
    slices = []
    for attr in alignment:
        va = left.get(attr, zero)
        vb = right.get(attr, zero)
        if va.shape != (d,) or vb.shape != (d,):
            raise DataError(f"attribute {attr!r}: vector dimension mismatch")
        slices.append(va * vb)
    return np.concatenate(slices)


def pooling_heter(left: Vectors, right: Vectors) -> np.ndarray:
    """Per left attribute, elementwise max of products against all right attributes."""
    if not left or not right:
        raise DataError("heterogeneous pooling needs at least one attribute per side")
    d = _dim(left)
    if d != _dim(right):
        raise DataError("left and right attribute vectors disagree on dimension")
    right_stack = np.stack(list(right.values()))  # (m, d)
    slices = []
    for va in left.values():
        products = va * right_stack  # (m, d)
        slices.append(products.max(axis=0))
    return np.concatenate(slices)


def siamese_pool(cls_a: np.ndarray, cls_b: np.ndarray, attr_features: np.ndarray) -> np.ndarray:
    """cls_a ⊕ cls_b ⊕ attribute features."""
    if cls_a.shape != cls_b.shape:
        raise DataError("entity-level vectors disagree on dimension")
    return np.concatenate([cls_a, cls_b, attr_features])


def pooling_homo_backward(
    left: Vectors, right: Vectors, alignment: Sequence[str], upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Gradients w.r.t. each present attribute vector (zero-filled ones drop out)."""
    d = max(_dim(left), _dim(right))
    if upstream.shape != (len(alignment) * d,):
        raise DataError(
            f"upstream shape {upstream.shape} != ({len(alignment) * d},)"
        )
    zero = np.zeros(d)
    d_left: dict[str, np.ndarray] = {}
    d_right: dict[str, np.ndarray] = {}
    for i, attr in enumerate(alignment):
        sl = upstream[i * d : (i + 1) * d]
        va = left.get(attr)
        vb = right.get(attr)
        if va is not None:
            d_left[attr] = sl * (vb if vb is not None else zero)
        if vb is not None:
            d_right[attr] = sl * (va if va is not None else zero)
    return d_left, d_right


def pooling_heter_backward(
    left: Vectors, right: Vectors, upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Gradient flows only to the argmax right attribute per element.

    Ties route to the smallest right index (numpy argmax takes the first
    maximum), which keeps the subgradient deterministic.
    """
    d = _dim(left)
    if upstream.shape != (len(left) * d,):
        raise DataError(f"upstream shape {upstream.shape} != ({len(left) * d},)")
    right_names = list(right)
    right_stack = np.stack([right[name] for name in right_names])  # (m, d)
    d_left: dict[str, np.ndarray] = {}
    d_right: dict[str, np.ndarray] = {name: np.zeros(d) for name in right_names}
    for i, (attr, va) in enumerate(left.items()):
        sl = upstream[i * d : (i + 1) * d]
        products = va * right_stack
        winners = products.argmax(axis=0)  # (d,)
        vb_win = right_stack[winners, np.arange(d)]
        d_left[attr] = sl * vb_win
        for k in range(d):
            d_right[right_names[winners[k]]][k] += sl[k] * va[k]
    return d_left, d_right


def pooling_gradients(
    variant: str,
    left: Vectors,
    right: Vectors,
    upstream: np.ndarray,
    alignment: Sequence[str] | None = None,
):
    """Dispatcher over the two pooling variants."""
    if variant == "homo":
        if alignment is None:
            raise DataError("homogeneous pooling gradients need the alignment")
        return pooling_homo_backward(left, right, alignment, upstream)
    if variant == "heter":
        return pooling_heter_backward(left, right, upstream)
    raise DataError(f"unknown pooling variant {variant!r}")


__all__ = [
    "pooling_gradients",
    "pooling_heter",
    "pooling_heter_backward",
    "pooling_homo",
    "pooling_homo_backward",
    "siamese_pool",
]
