from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Optional, Union


class DatasetKind(str, enum.Enum):
    MNIST4 = "MNIST4"
    MNIST10 = "MNIST10"
    MNIST4_10 = "MNIST4_10"
    ARROW2D = "ARROW2D"

    @classmethod
    def parse(cls, value) -> "DatasetKind":
        if isinstance(value, cls):
            return value
        key = str(value).upper().replace("-", "_")
        aliases = {"MNIST_4": "MNIST4", "MNIST_10": "MNIST10", "MNIST_4_10": "MNIST4_10",
                   "ARROW": "ARROW2D", "ARROW_2D": "ARROW2D"}
        return cls(aliases.get(key, key))


# Clockwise from top-left.
QUADRANTS = ("TL", "TR", "BR", "BL")


@dataclass
class ObjectSpec:
    cls: Union[int, str]
    center: tuple[float, float]
    bbox: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    color: tuple[int, int, int] = (255, 255, 255)
    role: str = "digit"
    quadrant: Optional[str] = None
    style: Optional[str] = None
    orientation: Optional[float] = None  # degrees, image frame (y down); arrows only

    def to_json(self) -> dict:
        d = asdict(self)
        d["cls"] = self.cls if isinstance(self.cls, str) else int(self.cls)
        d["center"] = [float(v) for v in self.center]
        d["bbox"] = [float(v) for v in self.bbox]
        d["color"] = [int(v) for v in self.color]
        if self.orientation is not None:
            d["orientation"] = float(self.orientation)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ObjectSpec":
        return cls(
            cls=d["cls"],
            center=tuple(d["center"]),
            bbox=tuple(d["bbox"]),
            color=tuple(d["color"]),
            role=d["role"],
            quadrant=d.get("quadrant"),
            style=d.get("style"),
            orientation=d.get("orientation"),
        )


@dataclass
class SceneSpec:
    objects: list[ObjectSpec]
    dataset_kind: DatasetKind
    image_size: int = 128
    swapped: Optional[bool] = None  # MNIST-10 diagonal swap event
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "dataset_kind": self.dataset_kind.value,
            "image_size": self.image_size,
            "objects": [o.to_json() for o in self.objects],
            "swapped": self.swapped,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SceneSpec":
        return cls(
            objects=[ObjectSpec.from_json(o) for o in d["objects"]],
            dataset_kind=DatasetKind.parse(d["dataset_kind"]),
            image_size=int(d["image_size"]),
            swapped=d.get("swapped"),
            meta=d.get("meta", {}),
        )

    def scaled(self, factor: float) -> "SceneSpec":
        """Same scene with every coordinate multiplied by ``factor``."""
        objs = []
        for o in self.objects:
            objs.append(ObjectSpec(
                cls=o.cls, role=o.role, quadrant=o.quadrant, color=o.color, style=o.style,
                orientation=o.orientation,
                center=(o.center[0] * factor, o.center[1] * factor),
                bbox=tuple(v * factor for v in o.bbox),
            ))
        return SceneSpec(objs, self.dataset_kind, int(round(self.image_size * factor)),
                         self.swapped, dict(self.meta))
