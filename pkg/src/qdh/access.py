"""Group-plus-discretionary authorization over samples.

The sample is the atomic unit: artifacts (catalog rows, graph nodes,
stored files) inherit their sample's decision. Every subject belongs to
exactly one research group; the group's members hold full
read/write/update rights over the group's samples (the group component of
a decision). A group owner, or a designated representative, may grant an
outside collaborator explicit per-object positive rights (the
discretionary component); such grants never propagate to the grantee's
group. Rights are positive-only and the world is closed: whatever is not
explicitly allowed is denied, so the two components can never conflict.

Delete is not a permissible member action. A config-designated
administrator can tombstone or restore objects for exceptional scenarios;
tombstoned objects are invisible to queries until restored.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from qdh.errors import QdhError
from qdh.wal import RecordLog

ROLES = ("pi", "researcher", "phd_student", "student")
RIGHTS = frozenset({"read", "write", "update"})
ACTIONS = RIGHTS | {"delete"}


@dataclass(frozen=True)
class Subject:
    user_id: str
    group_id: str
    role: str


@dataclass(frozen=True)
class ObjectRef:
    object_id: str  # sample_id
    owning_group: str
    public: bool = False
    tombstoned: bool = False


@dataclass(frozen=True)
class Decision:
    allowed: bool
    basis: str  # group | discretionary | public | denied_default | denied_delete

    def __post_init__(self):
        if self.allowed and self.basis not in ("group", "discretionary", "public"):
            raise ValueError(f"allowed decision cannot have basis {self.basis!r}")


class AccessControl:
    def __init__(self, directory: Path | str, *, admin_users: Iterable[str] = (),
                 durability: str = "os"):
        self._log = RecordLog(Path(directory), durability=durability)
        self._admins = set(admin_users)
        self._groups: dict[str, dict[str, Any]] = {}   # gid -> {owner, members: {uid: role}, reps}
        self._membership: dict[str, str] = {}          # uid -> gid
        self._grants: dict[tuple[str, str], frozenset[str]] = {}
        self._objects: dict[str, ObjectRef] = {}
        self._lock = threading.RLock()

    # -- lifecycle -------------------------------------------------------

    def open(self, skip_bundles: Iterable[str] = ()) -> None:
        skip = set(skip_bundles)
        snapshot, records = self._log.load()
        if snapshot is not None:
            self._groups = {g: {"owner": d["owner"], "members": dict(d["members"]),
                                "reps": set(d["reps"])}
                            for g, d in snapshot["groups"].items()}
            self._membership = {u: g for g, d in self._groups.items() for u in d["members"]}
            self._grants = {(s, o): frozenset(r)
                            for s, o, r in snapshot["grants"]}
            self._objects = {o["object_id"]: ObjectRef(**o) for o in snapshot["objects"]}
        for rec in records:
            if rec.get("bundle") in skip:
                continue
            self._apply(rec["op"], rec["payload"])

    def _apply(self, op: str, p: dict[str, Any]) -> None:
        if op == "create_group":
            self._groups[p["group_id"]] = {"owner": p["owner"],
                                           "members": {p["owner"]: "pi"}, "reps": set()}
            self._membership[p["owner"]] = p["group_id"]
        elif op == "add_member":
            self._groups[p["group_id"]]["members"][p["user"]] = p["role"]
            self._membership[p["user"]] = p["group_id"]
        elif op == "set_representative":
            reps = self._groups[p["group_id"]]["reps"]
            (reps.add if p["flag"] else reps.discard)(p["user"])
        elif op == "register_object":
            self._objects[p["object_id"]] = ObjectRef(
                p["object_id"], p["owning_group"], bool(p.get("public")), False)
        elif op == "set_public":
            ref = self._objects[p["object_id"]]
            self._objects[p["object_id"]] = ObjectRef(
                ref.object_id, ref.owning_group, p["public"], ref.tombstoned)
        elif op == "grant":
            key = (p["subject"], p["object_id"])
            self._grants[key] = self._grants.get(key, frozenset()) | frozenset(p["rights"])
        elif op == "tombstone":
            ref = self._objects[p["object_id"]]
            self._objects[p["object_id"]] = ObjectRef(
                ref.object_id, ref.owning_group, ref.public, True)
        elif op == "restore":
            ref = self._objects[p["object_id"]]
            self._objects[p["object_id"]] = ObjectRef(
                ref.object_id, ref.owning_group, ref.public, False)

    def compact(self) -> None:
        with self._lock:
            state = {
                "groups": {g: {"owner": d["owner"], "members": d["members"],
                               "reps": sorted(d["reps"])}
                           for g, d in self._groups.items()},
                "grants": [[s, o, sorted(r)] for (s, o), r in sorted(self._grants.items())],
                "objects": [{"object_id": o.object_id, "owning_group": o.owning_group,
                             "public": o.public, "tombstoned": o.tombstoned}
                            for o in self._objects.values()],
            }
            self._log.write_snapshot(state)

    def close(self) -> None:
        self._log.close()

    # -- subjects and groups ---------------------------------------------------

    def is_admin(self, user_id: str) -> bool:
        return user_id in self._admins

    def subject_of(self, user_id: str) -> Subject:
        gid = self._membership.get(user_id)
        if gid is None:
            raise QdhError("UNREGISTERED_USER", f"user {user_id!r} belongs to no group")
        return Subject(user_id, gid, self._groups[gid]["members"][user_id])

    def create_group(self, caller: str, group_id: str, owner: str) -> dict[str, Any]:
        with self._lock:
            if not self.is_admin(caller):
                raise QdhError("NOT_ADMIN", f"user {caller!r} cannot create groups")
            if group_id in self._groups:
                raise QdhError("DUPLICATE_GROUP", f"group {group_id!r} already exists")
            if owner in self._membership:
                raise QdhError("ALREADY_MEMBER_ELSEWHERE",
                               f"user {owner!r} already belongs to {self._membership[owner]!r}")
            self._log.append("create_group", {"group_id": group_id, "owner": owner})
            self._apply("create_group", {"group_id": group_id, "owner": owner})
            return {"group_id": group_id, "owner": owner}

    def add_member(self, caller: str, group_id: str, user: str, role: str) -> dict[str, Any]:
        with self._lock:
            group = self._groups.get(group_id)
            if group is None:
                raise QdhError("UNKNOWN_GROUP", f"no group {group_id!r}")
            if caller != group["owner"]:
                raise QdhError("NOT_OWNER", f"only the owner of {group_id!r} may add members")
            if role not in ROLES:
                raise QdhError("INVALID_ROLE", f"role must be one of {list(ROLES)}")
            if user in self._membership:
                raise QdhError("ALREADY_MEMBER_ELSEWHERE",
                               f"user {user!r} already belongs to {self._membership[user]!r}")
            self._log.append("add_member", {"group_id": group_id, "user": user, "role": role})
            self._apply("add_member", {"group_id": group_id, "user": user, "role": role})
            return {"group_id": group_id, "user": user, "role": role}

    def set_representative(self, caller: str, group_id: str, user: str,
                           flag: bool = True) -> dict[str, Any]:
        """Owner-settable flag letting a member issue discretionary grants."""
        with self._lock:
            group = self._groups.get(group_id)
            if group is None:
                raise QdhError("UNKNOWN_GROUP", f"no group {group_id!r}")
            if caller != group["owner"]:
                raise QdhError("NOT_OWNER", f"only the owner of {group_id!r} may designate")
            if user not in group["members"]:
                raise QdhError("UNREGISTERED_USER", f"user {user!r} is not a member of {group_id!r}")
            self._log.append("set_representative", {"group_id": group_id, "user": user,
                                                    "flag": flag})
            self._apply("set_representative", {"group_id": group_id, "user": user,
                                            "flag": flag})
            return {"group_id": group_id, "user": user, "representative": flag}

    def group_of(self, group_id: str) -> dict[str, Any]:
        group = self._groups.get(group_id)
        if group is None:
            raise QdhError("UNKNOWN_GROUP", f"no group {group_id!r}")
        return {"group_id": group_id, "owner": group["owner"],
                "members": dict(group["members"]), "representatives": sorted(group["reps"])}

    # -- objects --------------------------------------------------------------

    def register_object(self, object_id: str, owning_group: str, *, public: bool = False,
                        bundle: Optional[str] = None) -> None:
        """Attach ownership to a freshly ingested sample (internal)."""
        with self._lock:
            if owning_group not in self._groups:
                raise QdhError("UNKNOWN_GROUP", f"no group {owning_group!r}")
            if object_id in self._objects:
                return  # re-ingest keeps the original ownership
            self._log.append("register_object", {"object_id": object_id,
                                                 "owning_group": owning_group,
                                                 "public": public}, bundle=bundle)
            self._apply("register_object", {"object_id": object_id,
                                         "owning_group": owning_group, "public": public})

    def object_ref(self, object_id: str) -> ObjectRef:
        ref = self._objects.get(object_id)
        if ref is None:
            raise QdhError("UNKNOWN_OBJECT", f"no object {object_id!r}")
        return ref

    def has_object(self, object_id: str) -> bool:
        return object_id in self._objects

    def set_public(self, caller: str, object_id: str, public: bool = True) -> dict[str, Any]:
        with self._lock:
            ref = self.object_ref(object_id)
            if not self._is_owner_or_rep(caller, ref.owning_group):
                raise QdhError("NOT_OWNER",
                               f"only the owner of {ref.owning_group!r} may publish its samples")
            self._log.append("set_public", {"object_id": object_id, "public": public})
            self._apply("set_public", {"object_id": object_id, "public": public})
            return {"object_id": object_id, "public": public}

    # -- decisions ---------------------------------------------------------------

    def authorize(self, user_id: str, object_id: str, action: str) -> Decision:
        """Pure decision for one (subject, object, action) instance.

        Group and discretionary components are evaluated independently;
        either allowing suffices. Public samples are readable by any
        authenticated subject. Everything else is denied by default, and
        delete is denied for every non-admin regardless of membership.
        """
        if action not in ACTIONS:
            raise QdhError("INVALID_ACTION", f"action must be one of {sorted(ACTIONS)}")
        ref = self.object_ref(object_id)
        if action == "delete":
            return Decision(False, "denied_delete")
        if ref.tombstoned:
            return Decision(False, "denied_default")
        if self.authorize_group_only(user_id, object_id, action):
            return Decision(True, "group")
        if self.authorize_discretionary_only(user_id, object_id, action):
            return Decision(True, "discretionary")
        if ref.public and action == "read":
            return Decision(True, "public")
        return Decision(False, "denied_default")

    def authorize_group_only(self, user_id: str, object_id: str, action: str) -> bool:
        """The group component in isolation (decomposition testing hook)."""
        ref = self.object_ref(object_id)
        if action == "delete" or ref.tombstoned:
            return False
        return self._membership.get(user_id) == ref.owning_group

    def authorize_discretionary_only(self, user_id: str, object_id: str, action: str) -> bool:
        """The discretionary component in isolation."""
        ref = self.object_ref(object_id)
        if action == "delete" or ref.tombstoned:
            return False
        return action in self._grants.get((user_id, object_id), frozenset())

    def grant_discretionary(self, granter: str, subject: str, object_id: str,
                            rights: Iterable[str]) -> dict[str, Any]:
        with self._lock:
            rights = frozenset(rights)
            if not rights or not rights <= RIGHTS:
                raise QdhError("INVALID_RIGHTS",
                               f"rights must be a non-empty subset of {sorted(RIGHTS)}")
            ref = self.object_ref(object_id)
            if not self._is_owner_or_rep(granter, ref.owning_group):
                raise QdhError("NOT_OWNER",
                               f"user {granter!r} may not grant on group "
                               f"{ref.owning_group!r} objects")
            grantee = self.subject_of(subject)  # UNREGISTERED_USER if unknown
            if grantee.group_id == ref.owning_group:
                # already covered by the group component; record nothing
                return {"subject": subject, "object_id": object_id,
                        "warning": "SELF_GROUP_REDUNDANT", "rights": sorted(rights)}
            self._log.append("grant", {"subject": subject, "object_id": object_id,
                                       "rights": sorted(rights)})
            self._apply("grant", {"subject": subject, "object_id": object_id,
                               "rights": sorted(rights)})
            return {"subject": subject, "object_id": object_id, "rights": sorted(rights)}

    def _is_owner_or_rep(self, user_id: str, group_id: str) -> bool:
        group = self._groups.get(group_id)
        if group is None:
            return False
        return user_id == group["owner"] or user_id in group["reps"]

    # -- administration -----------------------------------------------------------

    def admin_restore_or_delete(self, caller: str, object_id: str, action: str) -> dict[str, Any]:
        """Tombstone or restore an object; out-of-band admin capability only."""
        with self._lock:
            if not self.is_admin(caller):
                raise QdhError("NOT_ADMIN", f"user {caller!r} holds no admin capability")
            ref = self.object_ref(object_id)
            if action == "delete":
                self._log.append("tombstone", {"object_id": object_id})
                self._apply("tombstone", {"object_id": object_id})
            elif action == "restore":
                self._log.append("restore", {"object_id": object_id})
                self._apply("restore", {"object_id": object_id})
            else:
                raise QdhError("INVALID_ACTION", "admin action must be 'delete' or 'restore'")
            return {"object_id": object_id, "action": action, "was": ref.tombstoned}

    # -- query support ---------------------------------------------------------------

    def visible(self, object_id: str) -> bool:
        ref = self._objects.get(object_id)
        return ref is not None and not ref.tombstoned

    def readable_samples(self, user_id: str, candidates: Iterable[str]) -> set[str]:
        """Subset of candidate sample ids the user may read; unregistered
        samples (no ownership attached) stay invisible."""
        out = set()
        for sid in candidates:
            if sid in self._objects and self.authorize(user_id, sid, "read").allowed:
                out.add(sid)
        return out
