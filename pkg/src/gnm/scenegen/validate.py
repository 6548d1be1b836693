"""Rule checks for scene specs.

Ground-truth specs are checked exactly (``pos_tol=0``). Specs reconstructed
from images by the evaluation detector pass looser tolerances.
"""
from __future__ import annotations

import math
from collections import Counter

from .mnist import DIAGONAL, MNIST10_COUNTS, MNIST10_SETS, quadrant_of, quadrant_origin
from .types import QUADRANTS, DatasetKind, SceneSpec


class UnknownKind(ValueError):
    pass


def _in_image(spec: SceneSpec) -> bool:
    S = spec.image_size
    return all(0 <= o.bbox[0] and 0 <= o.bbox[1] and o.bbox[2] <= S and o.bbox[3] <= S
               and o.bbox[0] <= o.center[0] <= o.bbox[2] and o.bbox[1] <= o.center[1] <= o.bbox[3]
               for o in spec.objects)


def _in_quadrant(o, S) -> bool:
    ox, oy = quadrant_origin(o.quadrant, S)
    q = S / 2
    return ox <= o.bbox[0] and o.bbox[2] <= ox + q and oy <= o.bbox[1] and o.bbox[3] <= oy + q


def _by_quadrant(spec: SceneSpec) -> dict[str, list]:
    out = {q: [] for q in QUADRANTS}
    for o in spec.objects:
        out[o.quadrant if o.quadrant in out else quadrant_of(*o.center, spec.image_size)].append(o)
    return out


def _digit_placement(spec, violations):
    S = spec.image_size
    if not _in_image(spec) or not all(o.quadrant in QUADRANTS and _in_quadrant(o, S) for o in spec.objects):
        violations.append("bbox-containment")
    if any(o.quadrant != quadrant_of(*o.center, S) for o in spec.objects):
        violations.append("quadrant-label")


def _check_mnist4(spec: SceneSpec, pos_tol: float) -> list[str]:
    v: list[str] = []
    if len(spec.objects) != 4:
        return ["object-count"]
    _digit_placement(spec, v)
    quads = _by_quadrant(spec)
    if any(len(quads[q]) != 1 for q in QUADRANTS):
        v.append("one-per-quadrant")
        return v
    o = {q: quads[q][0] for q in QUADRANTS}
    try:
        cls = {q: int(o[q].cls) for q in QUADRANTS}
    except (TypeError, ValueError):
        return v + ["clockwise-increment"]
    if not 0 <= cls["TL"] <= 6:
        v.append("start-class")
    if [cls[q] - cls["TL"] for q in QUADRANTS] != [0, 1, 2, 3]:
        v.append("clockwise-increment")
    cx = cy = spec.image_size / 2
    dx = [abs(o[q].center[0] - cx) for q in QUADRANTS]
    dy = [abs(o[q].center[1] - cy) for q in QUADRANTS]
    if max(dx) - min(dx) > pos_tol or max(dy) - min(dy) > pos_tol:
        v.append("position-symmetry")
    return v


def _set_matches(objs, home) -> bool:
    return len(objs) == MNIST10_COUNTS[home] and all(
        isinstance(o.cls, int) and o.cls in MNIST10_SETS[home] for o in objs)


def _offsets(objs, S):
    out = []
    for o in objs:
        ox, oy = quadrant_origin(quadrant_of(*o.center, S), S)
        out.append((o.center[0] - ox, o.center[1] - oy))
    return out


def _check_mnist10(spec: SceneSpec, pos_tol: float) -> list[str]:
    v: list[str] = []
    if len(spec.objects) != 10:
        return ["object-count"]
    _digit_placement(spec, v)
    quads = _by_quadrant(spec)
    # per quadrant: was it filled from its own class set or from the diagonal one?
    state = {}
    for q in QUADRANTS:
        if _set_matches(quads[q], q):
            state[q] = False
        elif _set_matches(quads[q], DIAGONAL[q]):
            state[q] = True
    if len(state) < 4 or state["TL"] != state["BR"] or state["TR"] != state["BL"]:
        v.append("class-sets")
    elif state["TL"] != state["TR"]:
        v.append("swap-consistency")
    if spec.swapped is not None and len(state) == 4 and "class-sets" not in v and state["TL"] != spec.swapped:
        v.append("swap-consistency")
    a, b = _offsets(quads["TL"], spec.image_size), _offsets(quads["BR"], spec.image_size)
    if len(a) != 2 or len(b) != 2:
        v.append("position-sharing")
    else:
        def close(p, q):
            return abs(p[0] - q[0]) <= pos_tol and abs(p[1] - q[1]) <= pos_tol
        if not ((close(a[0], b[0]) and close(a[1], b[1])) or (close(a[0], b[1]) and close(a[1], b[0]))):
            v.append("position-sharing")
    return sorted(set(v), key=v.index)


def _angle_between(deg, dx, dy) -> float:
    d = math.degrees(math.atan2(dy, dx)) - deg
    return abs((d + 180) % 360 - 180)


def _check_arrow(spec: SceneSpec, angle_tol: float) -> list[str]:
    v: list[str] = []
    if len(spec.objects) != 4:
        return ["object-count"]
    if not _in_image(spec):
        v.append("bbox-containment")
    arrows = [o for o in spec.objects if o.cls == "arrow"]
    others = [o for o in spec.objects if o.cls != "arrow"]
    counts = Counter(o.cls for o in others)
    pattern_ok = len(arrows) == 1 and sorted(counts.values()) == [1, 2]
    roles_ok = (Counter(o.role for o in spec.objects) == Counter({"arrow": 1, "pair_shape": 2, "unique_shape": 1}))
    if not pattern_ok or not roles_ok:
        v.append("shape-pattern")
    else:
        unique = [o for o in others if counts[o.cls] == 1][0]
        if unique.role != "unique_shape":
            v.append("shape-pattern")
        a = arrows[0]
        if a.orientation is None or _angle_between(
                a.orientation, unique.center[0] - a.center[0], unique.center[1] - a.center[1]) > angle_tol:
            v.append("arrow-pointing")
        if spec.objects[-1] is not a:
            v.append("arrow-topmost")
    if len({o.style for o in spec.objects}) != 1 or spec.objects[0].style is None:
        v.append("shared-style")
    return v


def validate_scene(spec: SceneSpec, pos_tol: float = 0.0, angle_tol: float = 5.0) -> tuple[bool, list[str]]:
    """Check a scene against its dataset's structure rules.

    Returns ``(passed, violations)`` where ``violations`` lists rule ids such
    as ``"clockwise-increment"`` or ``"position-sharing"``.
    """
    try:
        kind = DatasetKind.parse(spec.dataset_kind)
    except ValueError as exc:
        raise UnknownKind(str(spec.dataset_kind)) from exc
    if kind is DatasetKind.MNIST4:
        v = _check_mnist4(spec, pos_tol)
    elif kind is DatasetKind.MNIST10:
        v = _check_mnist10(spec, pos_tol)
    elif kind is DatasetKind.MNIST4_10:
        n = len(spec.objects)
        v = _check_mnist4(spec, pos_tol) if n == 4 else _check_mnist10(spec, pos_tol) if n == 10 else ["object-count"]
    elif kind is DatasetKind.ARROW2D:
        v = _check_arrow(spec, angle_tol)
    else:  # pragma: no cover
        raise UnknownKind(str(kind))
    return not v, v
