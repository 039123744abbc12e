"""Log-policy checks: granularity, WORM enforcement, chain integrity, access.

The chain model is append-only records where each link is
SHA-256(previous_link || canonical_serialization(fields)) anchored at a
32-zero-byte genesis. Canonical serialization sorts fields by name and joins
"name=value" lines with single newlines, UTF-8 encoded. Any single mutated
record therefore breaks exactly at its own position.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from typing import Optional

from .manifest import ComponentRole, TargetManifest, Zone, expected_zone
from .results import CheckResult, CheckStatus
from .wire import HttpClient, SourceUnavailable, WireError

GENESIS = b"\x00" * 32


@dataclass(frozen=True)
class LogRecord:
    seq: int
    fields: dict
    link: bytes


@dataclass(frozen=True)
class LogChain:
    records: tuple

    @property
    def head(self) -> bytes:
        return self.records[-1].link if self.records else GENESIS


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    first_broken_seq: Optional[int] = None


def canonical_serialization(fields: dict) -> bytes:
    lines = [f"{name}={fields[name]}" for name in sorted(fields)]
    return "\n".join(lines).encode("utf-8")


def compute_link(previous_link: bytes, fields: dict) -> bytes:
    return hashlib.sha256(previous_link + canonical_serialization(fields)).digest()


def build_chain(field_dicts: list, start_seq: int = 1) -> LogChain:
    """Construct a well-linked chain (test scaffolding, not a verifier)."""
    records = []
    link = GENESIS
    for offset, fields in enumerate(field_dicts):
        link = compute_link(link, fields)
        records.append(LogRecord(seq=start_seq + offset, fields=fields, link=link))
    return LogChain(tuple(records))


def verify_chain(chain: LogChain) -> VerificationReport:
    """Recompute every link from genesis; report the smallest broken seq."""
    previous = GENESIS
    expected_seq = chain.records[0].seq if chain.records else 1
    for record in chain.records:
        if record.seq != expected_seq:
            return VerificationReport(ok=False, first_broken_seq=record.seq)
        try:
            expected_link = compute_link(previous, record.fields)
        except (TypeError, AttributeError):
            return VerificationReport(ok=False, first_broken_seq=record.seq)
        if record.link != expected_link:
            return VerificationReport(ok=False, first_broken_seq=record.seq)
        previous = record.link
        expected_seq += 1
    return VerificationReport(ok=True)


def chain_from_wire(entries: list) -> LogChain:
    """Parse the repository's record list; malformed entries get a link that
    can never verify so the break lands at their seq."""
    records = []
    for entry in entries:
        try:
            seq = int(entry["seq"])
            fields = dict(entry["fields"])
            link = bytes.fromhex(entry["link"])
        except (KeyError, TypeError, ValueError):
            seq = int(entry.get("seq", 0)) if isinstance(entry, dict) else 0
            fields, link = {}, b"\xff" * 32
        records.append(LogRecord(seq=seq, fields=fields, link=link))
    return LogChain(tuple(records))


# ---------------------------------------------------------------------------
# Live checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogAuditConfig:
    sample_size: int = 50
    full_scan: bool = False


def check_logs(
    manifest: TargetManifest,
    mint,
    http: HttpClient,
    config: LogAuditConfig = LogAuditConfig(),
) -> list[CheckResult]:
    """LOG-01..LOG-04 against the declared log repository."""
    repos = manifest.by_role(ComponentRole.LOG_REPOSITORY)
    if not repos:
        return [
            CheckResult(check_id, CheckStatus.SKIPPED, ["no log repository declared"])
            for check_id in ("LOG-01", "LOG-02", "LOG-03", "LOG-04")
        ]
    repo = repos[0]
    if not repo.read:
        return [
            CheckResult(check_id, CheckStatus.NOT_ASSESSABLE,
                        [f"{repo.id}: no read action declared"])
            for check_id in ("LOG-01", "LOG-02", "LOG-03", "LOG-04")
        ]

    source = (
        "allowlisted"
        if expected_zone(repo.role) is Zone.RESTRICTED and http.allowlisted_source
        else "external"
    )
    endpoint = repo.primary_endpoint()
    base_url = f"{endpoint.scheme}://{endpoint.host}:{endpoint.port}"
    read_url = base_url + repo.read.path

    read_token = mint(scope=repo.read.scope, audience=repo.audience)
    if read_token is None:
        return [
            CheckResult(check_id, CheckStatus.NOT_ASSESSABLE,
                        ["could not obtain a log-read token"])
            for check_id in ("LOG-01", "LOG-02", "LOG-03", "LOG-04")
        ]
    auth = {"Authorization": f"Bearer {read_token.compact()}"}

    try:
        resp = http.request("GET", read_url, headers=auth, source=source)
    except WireError as exc:
        return [
            CheckResult(check_id, CheckStatus.NOT_ASSESSABLE, [f"{repo.id}: {exc}"])
            for check_id in ("LOG-01", "LOG-02", "LOG-03", "LOG-04")
        ]
    if resp.status != 200:
        return [
            CheckResult(check_id, CheckStatus.NOT_ASSESSABLE,
                        [f"{repo.id}: record listing returned HTTP {resp.status}"])
            for check_id in ("LOG-01", "LOG-02", "LOG-03", "LOG-04")
        ]
    chain = chain_from_wire(resp.json().get("records", []))

    # Read-only verdicts come from the fetched snapshot before any
    # write-probing can disturb repository state.
    results = [
        _check_granularity(manifest, repo, chain, config),
        _check_chain(repo, chain, mint, http, base_url, source),
        _check_worm(repo, mint, http, base_url, source),
        _check_access(repo, read_url, auth, http),
    ]
    return sorted(results, key=lambda r: r.check_id)


def _required_probe_fields(manifest: TargetManifest, action: str) -> dict:
    fields = {name: "audit-probe" for name in manifest.required_log_fields}
    fields["action"] = action
    fields["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return fields


def _check_granularity(
    manifest: TargetManifest, repo, chain: LogChain, config: LogAuditConfig
) -> CheckResult:
    records = chain.records if config.full_scan else chain.records[-config.sample_size:]
    if not records:
        return CheckResult("LOG-01", CheckStatus.NOT_ASSESSABLE,
                           [f"{repo.id}: repository holds no records to sample"])
    required = set(manifest.required_log_fields)
    missing: set = set()
    for record in records:
        missing |= required - set(record.fields)
    policy = (
        "full repository scan"
        if config.full_scan
        else f"sampling policy: most recent {config.sample_size} records"
    )
    if missing:
        return CheckResult(
            "LOG-01", CheckStatus.FAIL,
            [policy,
             "sampled records missing required fields: " + ", ".join(sorted(missing))],
            component_id=repo.id,
        )
    return CheckResult(
        "LOG-01", CheckStatus.PASS,
        [policy,
         "every sampled record carries required fields: "
         + ", ".join(sorted(required))],
    )


def _check_chain(
    repo, chain: LogChain, mint, http: HttpClient, base_url: str, source: str
) -> CheckResult:
    evidence = []
    report = verify_chain(chain)
    if report.ok:
        evidence.append("hash chain verifies from genesis to head: all links valid")
    else:
        evidence.append(
            f"hash chain break: stored link at seq {report.first_broken_seq} "
            "does not recompute from its predecessor"
        )
        return CheckResult("LOG-03", CheckStatus.FAIL, evidence, component_id=repo.id)

    # A repository that lets writers dictate links invites silent rewrites.
    if repo.write:
        write_token = mint(scope=repo.write.scope, audience=repo.audience)
        if write_token is None:
            evidence.append("forged-link append not probed: no write token")
            return CheckResult("LOG-03", CheckStatus.PASS, evidence)
        body = json.dumps(
            {"fields": {"action": "audit-chain-probe", "actor_id": "auditor",
                        "token_subject": "auditor", "resource": "audit",
                        "outcome": "probe", "timestamp": "probe"},
             "link": "00" * 32}
        ).encode("utf-8")
        try:
            resp = http.request(
                "POST", base_url + repo.write.path, body=body,
                headers={"Authorization": f"Bearer {write_token.compact()}"},
                source=source,
            )
        except WireError as exc:
            evidence.append(f"forged-link append not probed: {exc}")
            return CheckResult("LOG-03", CheckStatus.PASS, evidence)
        if 200 <= resp.status < 300:
            evidence.append(
                f"append with forged chain link accepted: HTTP {resp.status}"
            )
            return CheckResult("LOG-03", CheckStatus.FAIL, evidence,
                               component_id=repo.id)
        evidence.append(f"append with forged chain link rejected: HTTP {resp.status}")
    return CheckResult("LOG-03", CheckStatus.PASS, evidence)


def _check_worm(repo, mint, http: HttpClient, base_url: str, source: str) -> CheckResult:
    if not repo.write:
        return CheckResult("LOG-02", CheckStatus.NOT_ASSESSABLE,
                           [f"{repo.id}: no write action declared for probing"])
    write_token = mint(scope=repo.write.scope, audience=repo.audience)
    if write_token is None:
        return CheckResult("LOG-02", CheckStatus.NOT_ASSESSABLE,
                           ["could not obtain a log-write token"])
    auth = {"Authorization": f"Bearer {write_token.compact()}"}
    body = json.dumps(
        {"fields": {"action": "audit-worm-probe", "actor_id": "auditor",
                    "token_subject": "auditor", "resource": "audit",
                    "outcome": "probe", "timestamp": "probe"}}
    ).encode("utf-8")
    try:
        resp = http.request("POST", base_url + repo.write.path, body=body,
                            headers=auth, source=source)
    except WireError as exc:
        return CheckResult("LOG-02", CheckStatus.NOT_ASSESSABLE, [f"{repo.id}: {exc}"])
    if resp.status not in (200, 201):
        return CheckResult(
            "LOG-02", CheckStatus.NOT_ASSESSABLE,
            [f"sacrificial append rejected (HTTP {resp.status}); "
             "mutation probing has no safe target"],
        )
    seq = resp.json().get("seq")
    evidence = ["sacrificial record appended for mutation probing"]
    record_url = f"{base_url}{repo.write.path}/{seq}"
    failed = False
    for method, label in (("PUT", "overwrite"), ("DELETE", "delete")):
        try:
            attempt = http.request(method, record_url, body=body if method == "PUT" else None,
                                   headers=auth, source=source)
        except WireError as exc:
            evidence.append(f"{label} attempt failed at transport level: {exc}")
            continue
        if 200 <= attempt.status < 300:
            evidence.append(f"{label} of the sacrificial record accepted: "
                            f"HTTP {attempt.status}")
            failed = True
        else:
            evidence.append(f"{label} attempt rejected: HTTP {attempt.status}")
    if failed:
        return CheckResult("LOG-02", CheckStatus.FAIL, evidence, component_id=repo.id)
    return CheckResult("LOG-02", CheckStatus.PASS, evidence)


def _check_access(repo, read_url: str, auth: dict, http: HttpClient) -> CheckResult:
    evidence = []
    failed = False
    try:
        resp = http.request(
            "GET", read_url,
            source="allowlisted" if http.allowlisted_source else "external",
        )
        if resp.status == 200:
            evidence.append("records readable without authorization: HTTP 200")
            failed = True
        else:
            evidence.append(f"unauthenticated read rejected: HTTP {resp.status}")
    except WireError as exc:
        evidence.append(f"unauthenticated read refused at transport level: {exc}")

    if http.allowlisted_source:
        try:
            resp = http.request("GET", read_url, headers=auth, source="external")
            if resp.status == 200:
                evidence.append("records readable from the external network vantage: "
                                "HTTP 200")
                failed = True
            else:
                evidence.append("external-vantage read rejected: "
                                f"HTTP {resp.status}")
        except SourceUnavailable:
            evidence.append("external-vantage separation not assessable from this host")
        except WireError:
            evidence.append("external-vantage read refused at transport level")
    else:
        evidence.append("external-vantage separation not assessable from this host")

    if failed:
        return CheckResult("LOG-04", CheckStatus.FAIL, evidence, component_id=repo.id)
    return CheckResult("LOG-04", CheckStatus.PASS, evidence)
