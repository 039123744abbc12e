"""Named vulnerability toggles and the toggle-to-check ground truth matrix.

Each toggle disables exactly one control in the mock deployment. The
matrix records which check(s) must flip to Fail when that toggle alone is
enabled; every other check must keep its secure-profile verdict. One
toggle intentionally maps to two checks: disabling signature verification
is observable both through tampered tokens and through forged-scope
tokens, and hiding either observation would misstate the blast radius.
"""

from __future__ import annotations

import importlib.resources
import json

TOGGLES: tuple[str, ...] = (
    # network
    "expose-dbnode",
    # database
    "plaintext-dbnode",
    "tls12-dbnode",
    "string-concat-query",
    "no-at-rest-encryption",
    "at-rest-aes128",
    # authorization server
    "no-client-cert-binding",
    "over-scoped-profile",
    "weak-secret",
    "plaintext-secret-store",
    "enable-password-grant",
    "missing-csrf-state",
    # tokens
    "long-expiry",
    "accept-expired",
    "weak-alg-hs256-default",
    "expose-private-key",
    "jwks-private-fields",
    "skip-signature-check",
    "accept-none-alg",
    "accept-alg-confusion",
    "no-scope-check",
    "no-audience-check",
    "insecure-cookie-flags",
    # logging
    "coarse-logs",
    "allow-log-overwrite",
    "allow-log-delete",
    "broken-hash-chain",
    "public-log-read",
)

PROFILES: dict[str, tuple[str, ...]] = {
    "secure": (),
    "paper-poc": ("plaintext-dbnode", "enable-password-grant", "expose-private-key"),
    "all-vulnerable": TOGGLES,
}


class UnknownToggleError(ValueError):
    pass


def validate_toggles(names) -> frozenset[str]:
    chosen = frozenset(names)
    unknown = chosen - set(TOGGLES)
    if unknown:
        raise UnknownToggleError(
            f"unknown toggles: {', '.join(sorted(unknown))}"
        )
    return chosen


def toggles_for_profile(profile: str) -> frozenset[str]:
    if profile not in PROFILES:
        raise UnknownToggleError(
            f"unknown profile {profile!r}; choose from {', '.join(sorted(PROFILES))}"
        )
    return frozenset(PROFILES[profile])


def load_matrix() -> dict[str, list[str]]:
    """toggle name -> check ids that must flip when it is enabled alone."""
    raw = (
        importlib.resources.files("utmaudit")
        .joinpath("testbed/toggle_matrix.json")
        .read_text(encoding="utf-8")
    )
    matrix = json.loads(raw)
    if set(matrix) != set(TOGGLES):
        missing = set(TOGGLES) - set(matrix)
        extra = set(matrix) - set(TOGGLES)
        raise RuntimeError(
            f"toggle matrix out of sync (missing={sorted(missing)}, "
            f"extra={sorted(extra)})"
        )
    return matrix
