"""Scene descriptors: objects, contour perimeters and directed occlusion contacts.

A scene file is JSON with two top-level fields::

    {
      "objects":  [{"id": 1, "centroid": [0.10, 0.42], "perimeter": 240, "dirty": true}, ...],
      "contacts": [{"occluder": 1, "occluded": 5, "tou": 60}, ...]
    }

Centroids are in meters, perimeters and touching-edge lengths in pixels.
A contact means the occluder is nearer the sensor than the occluded object.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

MERGE_RATIO = 0.5
MERGE_DISTANCE = 0.08


class SceneError(ValueError):
    """Malformed or invalid scene description."""


@dataclass(frozen=True)
class SceneObject:
    id: int
    centroid: tuple[float, float]
    perimeter: int
    dirty: bool = False


@dataclass(frozen=True)
class Contact:
    occluder: int
    occluded: int
    tou: int


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple[SceneObject, ...] = ()
    contacts: tuple[Contact, ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def object(self, obj_id: int) -> SceneObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    def occluders_of(self, obj_id: int) -> list[Contact]:
        return [c for c in self.contacts if c.occluded == obj_id]

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.object(a).centroid, self.object(b).centroid
        return math.hypot(xa - xb, ya - yb)


def validate(scene: SceneSpec) -> None:
    seen = set()
    for o in scene.objects:
        if o.id in seen:
            raise SceneError(f"duplicate object id {o.id}")
        seen.add(o.id)
        if o.perimeter <= 0:
            raise SceneError(f"object {o.id}: perimeter must be > 0, got {o.perimeter}")
    pairs = set()
    for c in scene.contacts:
        for end in (c.occluder, c.occluded):
            if end not in seen:
                raise SceneError(f"contact {c.occluder}->{c.occluded} references unknown object {end}")
        if c.occluder == c.occluded:
            raise SceneError(f"object {c.occluder} cannot occlude itself")
        if c.tou < 0:
            raise SceneError(f"contact {c.occluder}->{c.occluded}: tou must be >= 0, got {c.tou}")
        if (c.occluder, c.occluded) in pairs:
            raise SceneError(f"duplicate contact {c.occluder}->{c.occluded}")
        pairs.add((c.occluder, c.occluded))


def _require(obj: dict, where: str, allowed: set[str], required: set[str]) -> None:
    if not isinstance(obj, dict):
        raise SceneError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise SceneError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise SceneError(f"{where}: missing field(s) {sorted(missing)}")


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SceneError(f"{where}: expected an integer, got {value!r}")
    return value


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{where}: expected a number, got {value!r}")
    return float(value)


def scene_from_dict(data: dict, name: str = "") -> SceneSpec:
    _require(data, "scene", {"objects", "contacts"}, {"objects"})
    objects = []
    raw_objects = data["objects"]
    if not isinstance(raw_objects, list):
        raise SceneError("objects: expected a list")
    for n, raw in enumerate(raw_objects):
        where = f"objects[{n}]"
        _require(raw, where, {"id", "centroid", "perimeter", "dirty"}, {"id", "centroid", "perimeter"})
        cen = raw["centroid"]
        if not isinstance(cen, list) or len(cen) != 2:
            raise SceneError(f"{where}.centroid: expected [x, y]")
        dirty = raw.get("dirty", False)
        if not isinstance(dirty, bool):
            raise SceneError(f"{where}.dirty: expected true/false, got {dirty!r}")
        objects.append(
            SceneObject(
                id=_int(raw["id"], f"{where}.id"),
                centroid=(_num(cen[0], f"{where}.centroid[0]"), _num(cen[1], f"{where}.centroid[1]")),
                perimeter=_int(raw["perimeter"], f"{where}.perimeter"),
                dirty=dirty,
            )
        )
    contacts = []
    raw_contacts = data.get("contacts", [])
    if not isinstance(raw_contacts, list):
        raise SceneError("contacts: expected a list")
    for n, raw in enumerate(raw_contacts):
        where = f"contacts[{n}]"
        _require(raw, where, {"occluder", "occluded", "tou"}, {"occluder", "occluded", "tou"})
        contacts.append(
            Contact(
                occluder=_int(raw["occluder"], f"{where}.occluder"),
                occluded=_int(raw["occluded"], f"{where}.occluded"),
                tou=_int(raw["tou"], f"{where}.tou"),
            )
        )
    objects.sort(key=lambda o: o.id)
    return SceneSpec(tuple(objects), tuple(contacts), name=name)


def load_scene(text: str, name: str = "") -> SceneSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scene_from_dict(data, name=name)


def load_scene_file(path) -> SceneSpec:
    path = Path(path)
    return load_scene(path.read_text(encoding="utf-8"), name=path.stem)


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "objects": [
            {"id": o.id, "centroid": [o.centroid[0], o.centroid[1]], "perimeter": o.perimeter, "dirty": o.dirty}
            for o in scene.objects
        ],
        "contacts": [{"occluder": c.occluder, "occluded": c.occluded, "tou": c.tou} for c in scene.contacts],
    }


def dump_scene(scene: SceneSpec) -> str:
    return json.dumps(scene_to_dict(scene), indent=2) + "\n"


def bundled_scene_names() -> list[str]:
    root = resources.files("pomdp_manip.dish") / "scenes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scene(name: str) -> SceneSpec:
    root = resources.files("pomdp_manip.dish") / "scenes"
    path = root / f"{name}.json"
    if not path.is_file():
        raise SceneError(f"no bundled scene named {name!r}; have {bundled_scene_names()}")
    return load_scene(path.read_text(encoding="utf-8"), name=name)


def resolve_scene(ref: str) -> SceneSpec:
    """A path to a scene file, or the name of a bundled scene."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return load_scene_file(p)
    return bundled_scene(ref)


def ratio_from_counts(tot: float, tou: float) -> float:
    """Occlusion ratio from contour perimeter and touching-edge length."""
    if tou <= 0:
        return 0.0
    if tot - tou < tou:
        return 1.0
    return min(1.0, tou / (tot - tou))


def occlusion_ratio(scene: SceneSpec, state=None, obj_id: int | None = None, absent=()) -> float:
    """Occlusion ratio of ``obj_id`` counting only occluders still present.

    ``state`` (a :class:`~pomdp_manip.dish.world.WorldState` or None for the
    initial scene) removes occluders already in the dishwasher; ``absent``
    removes further occluders, e.g. one that is currently lifted.
    """
    absent = set(absent)
    if state is not None:
        index = {oid: n for n, oid in enumerate(scene.ids)}
        absent |= {oid for oid in scene.ids if state.loc[index[oid]] != 0}
    tou = sum(c.tou for c in scene.occluders_of(obj_id) if c.occluder not in absent)
    return ratio_from_counts(scene.object(obj_id).perimeter, tou)


def _pair_tou(contacts, a: int, b: int) -> int:
    return sum(c.tou for c in contacts if {c.occluder, c.occluded} == {a, b})


def merge_objects(scene: SceneSpec, log: list[str] | None = None) -> SceneSpec:
    """Merge close, strongly occluding fragments until no pair qualifies.

    A pair (occluder A, occluded B) merges when B's occlusion ratio from A's
    touching edge alone exceeds 0.5 and their centroids are closer than 8 cm.
    """
    objects = {o.id: o for o in scene.objects}
    contacts = list(scene.contacts)
    merged = False
    while True:
        best = None
        for c in contacts:
            a, b = objects[c.occluder], objects[c.occluded]
            dist = math.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1])
            ratio = ratio_from_counts(b.perimeter, c.tou)
            if ratio > MERGE_RATIO and dist < MERGE_DISTANCE:
                key = (-ratio, min(a.id, b.id), max(a.id, b.id))
                if best is None or key < best[0]:
                    best = (key, a, b, ratio, dist)
        if best is None:
            break
        _, a, b, ratio, dist = best
        merged = True
        keep, drop = min(a.id, b.id), max(a.id, b.id)
        tou = _pair_tou(contacts, a.id, b.id)
        perimeter = a.perimeter + b.perimeter - 2 * tou
        if perimeter <= 0:
            raise SceneError(f"merging {a.id} and {b.id} gives non-positive perimeter {perimeter}")
        wa, wb = a.perimeter, b.perimeter
        centroid = (
            (a.centroid[0] * wa + b.centroid[0] * wb) / (wa + wb),
            (a.centroid[1] * wa + b.centroid[1] * wb) / (wa + wb),
        )
        objects[keep] = SceneObject(keep, centroid, perimeter, a.dirty or b.dirty)
        del objects[drop]
        summed: dict[tuple[int, int], int] = {}
        for c in contacts:
            src = keep if c.occluder == drop else c.occluder
            dst = keep if c.occluded == drop else c.occluded
            if src == dst:
                continue
            summed[(src, dst)] = summed.get((src, dst), 0) + c.tou
        contacts = [Contact(s, d, t) for (s, d), t in summed.items()]
        if log is not None:
            log.append(
                f"merged {drop} into {keep} (ratio {ratio:.3f}, distance {dist * 100:.1f} cm, perimeter {perimeter})"
            )
    if not merged:
        return scene
    ordered = tuple(sorted(objects.values(), key=lambda o: o.id))
    contacts.sort(key=lambda c: (c.occluder, c.occluded))
    return SceneSpec(ordered, tuple(contacts), name=scene.name)
