"""Bilinear pairing backend: BLS12-381 tower fields, curves, and the ate pairing."""

from .provider import (
    DEFAULT_GROUP_ID,
    BilinearGroupProvider,
    Bls12381Provider,
    get_provider,
)

__all__ = [
    "DEFAULT_GROUP_ID",
    "BilinearGroupProvider",
    "Bls12381Provider",
    "get_provider",
]
