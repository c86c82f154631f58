"""Bearer-token principals.

Tokens are opaque random strings handed out once; only SHA-256 digests are
stored, so a leaked snapshot does not leak credentials.  A principal may
hold several live tokens (one per issuance).
"""

from __future__ import annotations

import hashlib
import secrets
import threading
import time
from dataclasses import dataclass, field

from ..errors import InvalidRequest, UnknownPrincipal
from ..ids import new_id

ROLES = ("admin", "user")


def hash_token(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


@dataclass
class Principal:
    principal_id: str
    username: str
    role: str
    token_hashes: list[str] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)

    def to_dict(self) -> dict:
        return {
            "principal_id": self.principal_id,
            "username": self.username,
            "role": self.role,
            "token_hashes": list(self.token_hashes),
            "created_at": self.created_at,
        }


class AuthStore:
    def __init__(self):
        self._lock = threading.RLock()
        self._principals: dict[str, Principal] = {}
        self._by_hash: dict[str, str] = {}

    def issue_token(self, username: str, role: str,
                    token: str | None = None) -> tuple[Principal, str]:
        """Mint a token for the named principal, creating the principal on
        first use.  The cleartext token is returned exactly once; a caller
        may bring its own (bootstrap from an environment variable)."""
        if not username:
            raise InvalidRequest("username must not be empty")
        if role not in ROLES:
            raise InvalidRequest(f"role must be one of {ROLES}")
        with self._lock:
            principal = self._find_by_username(username)
            if principal is None:
                principal = Principal(principal_id=new_id("usr"),
                                      username=username, role=role)
                self._principals[principal.principal_id] = principal
            elif principal.role != role:
                raise InvalidRequest(
                    f"{username} already exists with role {principal.role}")
            if token is None:
                token = secrets.token_urlsafe(32)
            digest = hash_token(token)
            principal.token_hashes.append(digest)
            self._by_hash[digest] = principal.principal_id
            return principal, token

    def _find_by_username(self, username: str) -> Principal | None:
        for principal in self._principals.values():
            if principal.username == username:
                return principal
        return None

    def has_role(self, role: str) -> bool:
        with self._lock:
            return any(p.role == role for p in self._principals.values())

    def authenticate(self, token: str) -> Principal:
        with self._lock:
            pid = self._by_hash.get(hash_token(token))
            if pid is None:
                raise UnknownPrincipal("unknown or revoked token")
            return self._principals[pid]

    def get(self, principal_id: str) -> Principal:
        with self._lock:
            principal = self._principals.get(principal_id)
        if principal is None:
            raise UnknownPrincipal(f"no such principal: {principal_id}")
        return principal

    def list_principals(self) -> list[Principal]:
        with self._lock:
            return sorted(self._principals.values(),
                          key=lambda p: p.created_at)

    def dump(self) -> dict:
        with self._lock:
            return {"principals": [p.to_dict()
                                   for p in self._principals.values()]}

    def load(self, data: dict) -> None:
        with self._lock:
            self._principals.clear()
            self._by_hash.clear()
            for raw in data.get("principals", []):
                principal = Principal(
                    principal_id=raw["principal_id"],
                    username=raw["username"],
                    role=raw["role"],
                    token_hashes=list(raw.get("token_hashes", [])),
                    created_at=raw.get("created_at", 0.0),
                )
                self._principals[principal.principal_id] = principal
                for digest in principal.token_hashes:
                    self._by_hash[digest] = principal.principal_id
