from .dists import Noise
from .gnm import GNM, Trace
from .nets import NonFiniteLatent, ShapeError
from .render import RenderResult, box_to_xyxy, extract_glimpses, place_glimpses, render, where_to_bbox, where_to_box
from .struct import StructParams, StructSample
from .structdraw import GlobalLatent

__all__ = ["GNM", "GlobalLatent", "Noise", "NonFiniteLatent", "RenderResult", "ShapeError", "StructParams",
           "StructSample", "Trace", "box_to_xyxy", "extract_glimpses", "place_glimpses", "render",
           "where_to_bbox", "where_to_box"]
