"""Interactive instance segmentation with constrained clicks and superpixel guidance."""

from clickcut.imagecore import BinaryMask, Image, PixelPoint, iou
from clickcut.superpixels import SuperpixelMap, slic

__all__ = ["BinaryMask", "Image", "PixelPoint", "SuperpixelMap", "iou", "slic"]

__version__ = "0.1.0"
