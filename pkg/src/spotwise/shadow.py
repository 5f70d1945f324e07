"""Digital-shadow entity graph and the status fan-out.

Six entity types describe a lot: ``Building``, ``OffStreetParking``,
``ParkingGroup``, ``ParkingSpot``, ``ParkingSensor`` and ``Totem``. A sensor
bitmask update is fanned out to every dependent entity by
:func:`apply_status_update`, because a context broker does not propagate
derived values on its own.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from datetime import datetime
from importlib import resources

from .codec import ParkingStatus, decode_status
from .errors import ConfigError, RangeError
from .spots import LotConfig, format_timestamp, invert_groups, parse_timestamp

CONTEXT_URL = "https://raw.githubusercontent.com/smart-data-models/data-models/master/context.jsonld"
UNKNOWN = "unknown"

ENTITY_TYPES = ("Building", "OffStreetParking", "ParkingGroup", "ParkingSpot", "ParkingSensor", "Totem")

# properties rewritten by status updates; everything else is static
DYNAMIC_PROPS: dict[str, tuple[str, ...]] = {
    "Building": (),
    "OffStreetParking": ("availableSpotNumber", "occupiedSpotNumber", "occupancy"),
    "ParkingGroup": ("availableSpotNumber", "occupiedSpotNumber"),
    "ParkingSpot": ("status",),
    "ParkingSensor": ("parking_status",),
    "Totem": ("availableSpotNumber",),
}

OBSERVED_AT = "observedAt"


def entity_id(entity_type: str, name: str) -> str:
    return f"urn:ngsi-ld:{entity_type}:{name}"


def context_document() -> dict:
    """The bundled JSON-LD context."""
    text = resources.files("spotwise").joinpath("data/context.jsonld").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class Entity:
    id: str
    type: str
    static_props: dict = field(default_factory=dict)
    dynamic_props: dict = field(default_factory=dict)
    relationships: dict = field(default_factory=dict)
    observed_at: datetime | None = None

    def __post_init__(self):
        if not self.id or not self.type:
            raise ConfigError("entity id and type are mandatory")
        if self.type not in ENTITY_TYPES:
            raise ConfigError(f"unknown entity type {self.type!r}")

    def get(self, prop: str):
        if prop in self.dynamic_props:
            return self.dynamic_props[prop]
        return self.static_props[prop]


@dataclass(frozen=True)
class Change:
    entity_id: str
    prop: str
    old: object
    new: object
    observed_at: datetime


@dataclass
class EntityGraph:
    entities: dict[str, Entity]
    group_membership: dict[int, str]
    totem_scope: str = "total"

    # -- lookup helpers

    def of_type(self, entity_type: str) -> list[Entity]:
        return [e for e in self.entities.values() if e.type == entity_type]

    def one(self, entity_type: str) -> Entity:
        found = self.of_type(entity_type)
        if len(found) != 1:
            raise ConfigError(f"expected exactly one {entity_type}, found {len(found)}")
        return found[0]

    @property
    def n_spots(self) -> int:
        return len(self.group_membership)

    def spot(self, spot_id: int) -> Entity:
        for e in self.of_type("ParkingSpot"):
            if e.static_props.get("spotNumber") == spot_id:
                return e
        raise KeyError(spot_id)

    def group_members(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for sid in sorted(self.group_membership):
            out.setdefault(self.group_membership[sid], []).append(sid)
        return out

    def snapshot(self) -> "EntityGraph":
        return EntityGraph(dict(self.entities), dict(self.group_membership), self.totem_scope)

    # -- structural checks

    def validate(self) -> None:
        ids = set(self.entities)
        for e in self.entities.values():
            for name, target in e.relationships.items():
                if target not in ids:
                    raise ConfigError(f"{e.id} relationship {name} points at missing {target}")
        lot = self.one("OffStreetParking")
        self.one("Building")
        if lot.relationships.get("refBuilding") != self.one("Building").id:
            raise ConfigError("OffStreetParking must reference its Building")
        for t in ("ParkingSensor", "Totem"):
            if self.one(t).relationships.get("refParkingSite") != lot.id:
                raise ConfigError(f"{t} must reference the OffStreetParking")
        for g in self.of_type("ParkingGroup"):
            if g.relationships.get("refParkingSite") != lot.id:
                raise ConfigError(f"{g.id} must reference the OffStreetParking")
        group_ids = {g.id for g in self.of_type("ParkingGroup")}
        spots = self.of_type("ParkingSpot")
        if len(spots) != self.n_spots:
            raise ConfigError("ParkingSpot count disagrees with group membership")
        for s in spots:
            if set(s.relationships) != {"refParkingGroup"} or s.relationships["refParkingGroup"] not in group_ids:
                raise ConfigError(f"{s.id} must reference exactly one ParkingGroup")
            if self.group_membership.get(s.static_props["spotNumber"]) != s.relationships["refParkingGroup"]:
                raise ConfigError(f"{s.id} group reference disagrees with membership")

    # -- persistence

    def to_json(self, context: str = CONTEXT_URL) -> dict:
        return {
            "@context": context,
            "totemScope": self.totem_scope,
            "groupMembership": {str(k): v for k, v in sorted(self.group_membership.items())},
            "entities": [entity_to_dict(e, context) for e in sorted(self.entities.values(), key=lambda e: e.id)],
        }

    def dumps(self, context: str = CONTEXT_URL) -> str:
        return json.dumps(self.to_json(context), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, data: Mapping) -> "EntityGraph":
        entities = [entity_from_dict(d) for d in data["entities"]]
        graph = cls(
            {e.id: e for e in entities},
            {int(k): v for k, v in data["groupMembership"].items()},
            data.get("totemScope", "total"),
        )
        graph.validate()
        return graph

    @classmethod
    def loads(cls, text: str) -> "EntityGraph":
        return cls.from_json(json.loads(text))


def build_entities(
    lot: LotConfig | Mapping,
    groups: Mapping[str, Iterable[int]] | None = None,
    n_spots: int | None = None,
) -> EntityGraph:
    """Construct the full entity graph for one lot.

    ``groups`` (``{group_id: [spot ids]}``) overrides the lot config's own
    groups and must partition ``1..n_spots``. Dynamic properties start as
    ``"unknown"``.
    """
    if isinstance(lot, Mapping):
        lot = LotConfig.from_dict(lot)
    groups = dict(groups if groups is not None else lot.groups)
    if not groups:
        raise ConfigError("group configuration is empty")
    if any(not list(m) for m in groups.values()):
        raise ConfigError("every group needs at least one spot")
    flat = invert_groups(groups)
    if n_spots is None:
        n_spots = max(flat)
    invert_groups(groups, n_spots)

    name = lot.lot_name
    building_id = entity_id("Building", lot.building_name)
    lot_id = entity_id("OffStreetParking", name)
    entities: list[Entity] = [
        Entity(building_id, "Building", {"name": lot.building_name, "category": ["university"]}),
        Entity(
            lot_id,
            "OffStreetParking",
            {"name": name, "totalSpotNumber": n_spots, "category": ["staffOnly"]},
            {p: UNKNOWN for p in DYNAMIC_PROPS["OffStreetParking"]},
            {"refBuilding": building_id},
        ),
        Entity(
            entity_id("ParkingSensor", f"{name}-camera"),
            "ParkingSensor",
            {"name": f"{name}-camera", "description": "camera with on-device detection", "spotCount": n_spots},
            {"parking_status": UNKNOWN},
            {"refParkingSite": lot_id},
        ),
        Entity(
            entity_id("Totem", f"{name}-totem"),
            "Totem",
            {"name": f"{name}-totem", "description": "roadside availability display"},
            {"availableSpotNumber": UNKNOWN},
            {"refParkingSite": lot_id},
        ),
    ]
    membership: dict[int, str] = {}
    for gid, members in groups.items():
        members = sorted(int(m) for m in members)
        group_eid = entity_id("ParkingGroup", f"{name}-{gid}")
        entities.append(
            Entity(
                group_eid,
                "ParkingGroup",
                {"name": gid, "totalSpotNumber": len(members), "category": [gid]},
                {p: UNKNOWN for p in DYNAMIC_PROPS["ParkingGroup"]},
                {"refParkingSite": lot_id},
            )
        )
        for sid in members:
            membership[sid] = group_eid
            entities.append(
                Entity(
                    entity_id("ParkingSpot", f"{name}-spot-{sid}"),
                    "ParkingSpot",
                    {"name": f"spot {sid}", "spotNumber": sid},
                    {"status": UNKNOWN},
                    {"refParkingGroup": group_eid},
                )
            )
    if lot.totem_scope != "total" and lot.totem_scope not in groups:
        raise ConfigError(f"totem_scope {lot.totem_scope!r} is neither 'total' nor a group id")
    graph = EntityGraph({e.id: e for e in entities}, membership, lot.totem_scope)
    graph.validate()
    return graph


def apply_status_update(graph: EntityGraph, status: ParkingStatus) -> tuple[EntityGraph, list[Change]]:
    """Fan one sensor status out over the graph.

    Returns the new graph and the changes that turn the old graph into it.
    The input graph is not modified.
    """
    if status.n_spots != graph.n_spots:
        raise RangeError(f"status carries {status.n_spots} spots, graph has {graph.n_spots}")
    bits = decode_status(status.bitmask, status.n_spots)
    ts = status.timestamp

    targets: dict[str, dict[str, object]] = {}
    group_occ: dict[str, int] = {}
    group_size: dict[str, int] = {}
    for sid, gid in graph.group_membership.items():
        occ = bits[sid - 1]
        group_occ[gid] = group_occ.get(gid, 0) + occ
        group_size[gid] = group_size.get(gid, 0) + 1
    for spot in graph.of_type("ParkingSpot"):
        sid = spot.static_props["spotNumber"]
        targets[spot.id] = {"status": "occupied" if bits[sid - 1] else "free"}
    for gid, size in group_size.items():
        targets[gid] = {"availableSpotNumber": size - group_occ[gid], "occupiedSpotNumber": group_occ[gid]}

    lot = graph.one("OffStreetParking")
    occupied = sum(group_occ.values())
    available = graph.n_spots - occupied
    targets[lot.id] = {
        "availableSpotNumber": available,
        "occupiedSpotNumber": occupied,
        "occupancy": occupied / graph.n_spots,
    }
    if graph.totem_scope == "total":
        shown = available
    else:
        scope_gid = entity_id("ParkingGroup", f"{lot.static_props['name']}-{graph.totem_scope}")
        shown = targets[scope_gid]["availableSpotNumber"]
    targets[graph.one("Totem").id] = {"availableSpotNumber": shown}
    targets[graph.one("ParkingSensor").id] = {"parking_status": status.bitmask}

    new_entities = dict(graph.entities)
    changes: list[Change] = []
    for eid in sorted(targets):
        ent = graph.entities[eid]
        props = dict(ent.dynamic_props)
        touched = False
        for prop, value in targets[eid].items():
            old = props.get(prop)
            if old != value or type(old) is not type(value):
                changes.append(Change(eid, prop, old, value, ts))
                props[prop] = value
                touched = True
        if ent.observed_at != ts:
            changes.append(Change(eid, OBSERVED_AT, ent.observed_at, ts, ts))
            touched = True
        if touched:
            new_entities[eid] = replace(ent, dynamic_props=props, observed_at=ts)
    return EntityGraph(new_entities, dict(graph.group_membership), graph.totem_scope), changes


def apply_changeset(graph: EntityGraph, changes: Iterable[Change]) -> EntityGraph:
    """Replay a change list onto ``graph``; checks every ``old`` value matches."""
    entities = dict(graph.entities)
    for ch in changes:
        ent = entities[ch.entity_id]
        if ch.prop == OBSERVED_AT:
            if ent.observed_at != ch.old:
                raise ConfigError(f"{ch.entity_id} observedAt is {ent.observed_at}, change expects {ch.old}")
            entities[ch.entity_id] = replace(ent, observed_at=ch.new)
            continue
        current = ent.dynamic_props.get(ch.prop)
        if current != ch.old:
            raise ConfigError(f"{ch.entity_id}.{ch.prop} is {current!r}, change expects {ch.old!r}")
        props = dict(ent.dynamic_props)
        props[ch.prop] = ch.new
        entities[ch.entity_id] = replace(ent, dynamic_props=props)
    return EntityGraph(entities, dict(graph.group_membership), graph.totem_scope)


# -- NGSI-LD payloads ------------------------------------------------------------


def entity_to_dict(entity: Entity, context: str = CONTEXT_URL) -> dict:
    out: dict = {"id": entity.id, "type": entity.type, "@context": context}
    for prop, value in entity.static_props.items():
        out[prop] = {"type": "Property", "value": value}
    for prop, value in entity.dynamic_props.items():
        wrapped = {"type": "Property", "value": value}
        if entity.observed_at is not None:
            wrapped["observedAt"] = format_timestamp(entity.observed_at)
        out[prop] = wrapped
    for rel, target in entity.relationships.items():
        out[rel] = {"type": "Relationship", "object": target}
    return out


def serialize_entity(entity: Entity, context: str = CONTEXT_URL) -> str:
    """NGSI-LD JSON for one entity, keys sorted so output is byte-stable."""
    return json.dumps(entity_to_dict(entity, context), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def entity_from_dict(data: Mapping) -> Entity:
    etype = data["type"]
    dynamic_names = DYNAMIC_PROPS.get(etype, ())
    static, dynamic, rels = {}, {}, {}
    observed = None
    for key, value in data.items():
        if key in ("id", "type", "@context"):
            continue
        kind = value.get("type") if isinstance(value, Mapping) else None
        if kind == "Relationship":
            rels[key] = value["object"]
        elif kind == "Property":
            if key in dynamic_names:
                dynamic[key] = value["value"]
                if "observedAt" in value:
                    observed = parse_timestamp(value["observedAt"])
            else:
                static[key] = value["value"]
        else:
            raise ConfigError(f"attribute {key!r} of {data.get('id')} is neither Property nor Relationship")
    return Entity(data["id"], etype, static, dynamic, rels, observed)


def parse_entity(text: str) -> Entity:
    return entity_from_dict(json.loads(text))
