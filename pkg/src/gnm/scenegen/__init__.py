from .arrow import gen_arrow2d
from .idx import BadMagic, CountMismatch, DigitBank, Truncated, load_mnist_idx, write_idx_images, write_idx_labels
from .mnist import LayoutConfig, gen_mnist4, gen_mnist4_10, gen_mnist10
from .store import DatasetIOError, SceneDataset, SchemaVersionMismatch, load_dataset, serialize_dataset
from .types import QUADRANTS, DatasetKind, ObjectSpec, SceneSpec
from .validate import UnknownKind, validate_scene


def generate(kind, count: int, seed: int, bank: DigitBank | None = None, image_size: int = 128,
             start: int = 0):
    """Dispatch to the generator for ``kind``."""
    kind = DatasetKind.parse(kind)
    if kind is DatasetKind.ARROW2D:
        return gen_arrow2d(count, seed, image_size, start=start)
    if bank is None:
        raise ValueError(f"{kind.value} needs a digit bank")
    cfg = LayoutConfig(image_size=image_size)
    fn = {DatasetKind.MNIST4: gen_mnist4, DatasetKind.MNIST10: gen_mnist10,
          DatasetKind.MNIST4_10: gen_mnist4_10}[kind]
    return fn(bank, count, seed, cfg, start=start)


__all__ = [
    "BadMagic", "CountMismatch", "DatasetIOError", "DatasetKind", "DigitBank", "LayoutConfig", "ObjectSpec",
    "QUADRANTS", "SceneDataset", "SceneSpec", "SchemaVersionMismatch", "Truncated", "UnknownKind",
    "gen_arrow2d", "gen_mnist4", "gen_mnist4_10", "gen_mnist10", "generate", "load_dataset", "load_mnist_idx",
    "serialize_dataset", "validate_scene", "write_idx_images", "write_idx_labels",
]
