"""JWT parsing, forgery, and the ten token checks.

The pure half decodes, re-encodes, and mutates compact JWS tokens without
ever needing a network; every mutation is a small, named transformation so
tests can quantify over the full set. The live half presents mutated tokens
to the deployment's token-accepting services and turns acceptance behavior
into check results JWT-01 through JWT-10.

Tokens keep their original Base64URL part strings; only mutated parts are
re-serialized. That makes decode/encode lossless for issuer-produced tokens.
"""

from __future__ import annotations

import base64
import binascii
import enum
import hashlib
import hmac
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa

from .manifest import ComponentSpec, TargetManifest, Zone, expected_zone
from .results import CheckResult, CheckStatus
from .wire import HttpClient, WireError

_B64URL_RE = re.compile(r"^[A-Za-z0-9_-]*$")


class TokenError(ValueError):
    """Malformed compact serialization or impossible mutation."""


# ---------------------------------------------------------------------------
# Base64URL without padding
# ---------------------------------------------------------------------------


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    if not _B64URL_RE.match(text):
        raise TokenError(f"invalid Base64URL part: {text[:32]!r}")
    padded = text + "=" * (-len(text) % 4)
    try:
        return base64.urlsafe_b64decode(padded)
    except (binascii.Error, ValueError) as exc:
        raise TokenError(f"invalid Base64URL part: {exc}") from None


def _json_part(mapping: dict) -> str:
    return b64url_encode(json.dumps(mapping, separators=(",", ":")).encode("utf-8"))


# ---------------------------------------------------------------------------
# Token model
# ---------------------------------------------------------------------------


@dataclass
class SignedToken:
    header: dict
    claims: dict
    signature: bytes
    # Original part strings are authoritative; header/claims are parsed views.
    header_b64: str
    claims_b64: str

    @property
    def original_compact(self) -> str:
        return self.compact()

    def compact(self) -> str:
        return f"{self.header_b64}.{self.claims_b64}.{b64url_encode(self.signature)}"

    def signing_input(self) -> bytes:
        return f"{self.header_b64}.{self.claims_b64}".encode("ascii")

    def with_header(self, **changes) -> "SignedToken":
        header = dict(self.header)
        header.update(changes)
        return SignedToken(
            header=header,
            claims=self.claims,
            signature=self.signature,
            header_b64=_json_part(header),
            claims_b64=self.claims_b64,
        )

    def with_claims(self, **changes) -> "SignedToken":
        claims = dict(self.claims)
        claims.update(changes)
        return SignedToken(
            header=self.header,
            claims=claims,
            signature=self.signature,
            header_b64=self.header_b64,
            claims_b64=_json_part(claims),
        )


def decode(compact: str) -> SignedToken:
    parts = compact.split(".")
    if len(parts) != 3:
        raise TokenError(f"expected 3 parts, got {len(parts)}")
    header_b64, claims_b64, sig_b64 = parts
    header = _decode_mapping(header_b64, "header")
    claims = _decode_mapping(claims_b64, "claims")
    if "alg" not in header:
        raise TokenError("header lacks alg")
    return SignedToken(
        header=header,
        claims=claims,
        signature=b64url_decode(sig_b64),
        header_b64=header_b64,
        claims_b64=claims_b64,
    )


def _decode_mapping(part: str, label: str) -> dict:
    raw = b64url_decode(part)
    try:
        value = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TokenError(f"{label} is not valid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise TokenError(f"{label} is not a JSON mapping")
    return value


def encode(token: SignedToken) -> str:
    return token.compact()


# ---------------------------------------------------------------------------
# Key material and signing primitives
# ---------------------------------------------------------------------------


class KeyKind(enum.Enum):
    RSA_PUBLIC = "RsaPublic"
    RSA_PRIVATE = "RsaPrivate"
    HMAC_SECRET = "HmacSecret"


@dataclass(frozen=True)
class KeyMaterial:
    kind: KeyKind
    data: bytes  # PEM for RSA, raw secret for HMAC


def sign_hs256(signing_input: bytes, key: bytes) -> bytes:
    return hmac.new(key, signing_input, hashlib.sha256).digest()


def verify_hs256(signing_input: bytes, signature: bytes, key: bytes) -> bool:
    return hmac.compare_digest(sign_hs256(signing_input, key), signature)


def sign_rs256(signing_input: bytes, private_pem: bytes) -> bytes:
    key = serialization.load_pem_private_key(private_pem, password=None)
    return key.sign(signing_input, padding.PKCS1v15(), hashes.SHA256())


def verify_rs256(signing_input: bytes, signature: bytes, public_pem: bytes) -> bool:
    key = serialization.load_pem_public_key(public_pem)
    try:
        key.verify(signature, signing_input, padding.PKCS1v15(), hashes.SHA256())
        return True
    except InvalidSignature:
        return False


def make_token(header: dict, claims: dict, key: Optional[KeyMaterial]) -> SignedToken:
    """Build and sign a fresh token (issuer-shaped helper for tests/fixtures)."""
    token = SignedToken(
        header=dict(header),
        claims=dict(claims),
        signature=b"",
        header_b64=_json_part(header),
        claims_b64=_json_part(claims),
    )
    alg = header.get("alg")
    if alg == "none":
        return token
    if key is None:
        raise TokenError(f"alg {alg} requires key material")
    if alg == "RS256":
        if key.kind != KeyKind.RSA_PRIVATE:
            raise TokenError("RS256 requires an RSA private key")
        token.signature = sign_rs256(token.signing_input(), key.data)
    elif alg == "HS256":
        if key.kind != KeyKind.HMAC_SECRET:
            raise TokenError("HS256 requires an HMAC secret")
        token.signature = sign_hs256(token.signing_input(), key.data)
    else:
        raise TokenError(f"unsupported algorithm {alg!r}")
    return token


def verify_token(token: SignedToken, key: KeyMaterial) -> bool:
    """Signature validity under the given key; alg 'none' never verifies."""
    alg = token.header.get("alg")
    if alg == "RS256" and key.kind == KeyKind.RSA_PUBLIC:
        return verify_rs256(token.signing_input(), token.signature, key.data)
    if alg == "HS256" and key.kind == KeyKind.HMAC_SECRET:
        return verify_hs256(token.signing_input(), token.signature, key.data)
    return False


# ---------------------------------------------------------------------------
# JWKS helpers
# ---------------------------------------------------------------------------

_JWK_PRIVATE_FIELDS = ("d", "p", "q", "dp", "dq", "qi")


def jwk_to_public_pem(jwk: dict) -> bytes:
    """RSA JWK (n, e) to the canonical SubjectPublicKeyInfo PEM bytes."""
    if jwk.get("kty") != "RSA":
        raise TokenError(f"not an RSA JWK: kty={jwk.get('kty')!r}")
    n = int.from_bytes(b64url_decode(jwk["n"]), "big")
    e = int.from_bytes(b64url_decode(jwk["e"]), "big")
    public_key = rsa.RSAPublicNumbers(e, n).public_key()
    return public_key.public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def jwks_private_fields(jwks: dict) -> list[str]:
    exposed = []
    for entry in jwks.get("keys", []):
        for name in _JWK_PRIVATE_FIELDS:
            if name in entry and name not in exposed:
                exposed.append(name)
    return exposed


# ---------------------------------------------------------------------------
# Mutations
# ---------------------------------------------------------------------------


class Mutation:
    name = "mutation"


@dataclass(frozen=True)
class SetAlgNone(Mutation):
    name: str = field(default="none-alg", init=False)


@dataclass(frozen=True)
class AlgConfusionHs256(Mutation):
    public_key_pem: bytes
    name: str = field(default="alg-confusion-hs256", init=False)


@dataclass(frozen=True)
class StripSignature(Mutation):
    name: str = field(default="strip-signature", init=False)


@dataclass(frozen=True)
class FlipSignatureBit(Mutation):
    bit_index: int = 0
    name: str = field(default="flip-signature-bit", init=False)


@dataclass(frozen=True)
class SetExpiry(Mutation):
    expires_at: int = 0
    name: str = field(default="set-expiry", init=False)


@dataclass(frozen=True)
class AddScope(Mutation):
    scope: str = ""
    name: str = field(default="add-scope", init=False)


@dataclass(frozen=True)
class SetAudience(Mutation):
    audience: str = ""
    name: str = field(default="set-audience", init=False)


@dataclass(frozen=True)
class ResignWith(Mutation):
    key: KeyMaterial = None
    name: str = field(default="resign", init=False)


def _copy(base: SignedToken) -> SignedToken:
    """Copy preserving the original part bytes exactly."""
    return SignedToken(
        header=dict(base.header),
        claims=dict(base.claims),
        signature=base.signature,
        header_b64=base.header_b64,
        claims_b64=base.claims_b64,
    )


def forge(base: SignedToken, mutation: Mutation) -> SignedToken:
    """Apply one named mutation. Claim edits deliberately leave the old
    signature in place; a sound verifier must reject the result."""
    if isinstance(mutation, SetAlgNone):
        token = base.with_header(alg="none")
        token.signature = b""
        return token
    if isinstance(mutation, AlgConfusionHs256):
        token = base.with_header(alg="HS256")
        token.signature = sign_hs256(token.signing_input(), mutation.public_key_pem)
        return token
    if isinstance(mutation, StripSignature):
        token = _copy(base)
        token.signature = b""
        return token
    if isinstance(mutation, FlipSignatureBit):
        if not base.signature:
            raise TokenError("cannot flip a bit of an empty signature")
        index = mutation.bit_index
        if not 0 <= index < len(base.signature) * 8:
            raise TokenError(f"bit index {index} out of range")
        raw = bytearray(base.signature)
        raw[index // 8] ^= 1 << (index % 8)
        token = _copy(base)
        token.signature = bytes(raw)
        return token
    if isinstance(mutation, SetExpiry):
        return base.with_claims(exp=mutation.expires_at)
    if isinstance(mutation, AddScope):
        current = base.claims.get("scope", "")
        merged = f"{current} {mutation.scope}".strip()
        return base.with_claims(scope=merged)
    if isinstance(mutation, SetAudience):
        return base.with_claims(aud=mutation.audience)
    if isinstance(mutation, ResignWith):
        key = mutation.key
        if key is None:
            raise TokenError("resign requires key material")
        if key.kind == KeyKind.RSA_PRIVATE:
            token = base.with_header(alg="RS256")
            token.signature = sign_rs256(token.signing_input(), key.data)
        elif key.kind == KeyKind.HMAC_SECRET:
            token = base.with_header(alg="HS256")
            token.signature = sign_hs256(token.signing_input(), key.data)
        else:
            raise TokenError("cannot sign with a public key")
        return token
    raise TokenError(f"unknown mutation {mutation!r}")


# ---------------------------------------------------------------------------
# Live battery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JwtAuditConfig:
    lifetime_threshold_s: int = 900
    allowed_algs: frozenset = frozenset({"RS256", "ES256", "PS256"})
    clock_skew_s: int = 30
    key_paths: tuple = ("/private.pem", "/.env", "/keys/")

    def accepted(self, status: int) -> bool:
        return 200 <= status < 300


@dataclass(frozen=True)
class AcceptanceVerdict:
    endpoint_label: str
    token_variant: str
    http_status: int
    accepted: bool


# mint(scope, audience, lifetime_s, iat_offset_s) -> SignedToken or None.
MintFn = Callable[..., Optional[SignedToken]]

_KEY_EXPOSURE_MARKERS = (b"PRIVATE KEY", b"client_secret=", b"CLIENT_SECRET=")


def token_services(manifest: TargetManifest) -> list[ComponentSpec]:
    """Components that accept bearer tokens on a declared API action."""
    return [
        comp
        for comp in manifest.components
        if comp.read
        and comp.audience
        and comp.endpoints
        and comp.primary_endpoint().scheme in ("http", "https")
    ]


def _source_for(http: HttpClient, comp: ComponentSpec) -> str:
    if expected_zone(comp.role) is Zone.RESTRICTED and http.allowlisted_source:
        return "allowlisted"
    return "external"


def _present(
    http: HttpClient,
    comp: ComponentSpec,
    method: str,
    path: str,
    token: str,
    variant: str,
    body: Optional[bytes] = None,
) -> AcceptanceVerdict:
    endpoint = comp.primary_endpoint()
    url = f"{endpoint.scheme}://{endpoint.host}:{endpoint.port}{path}"
    resp = http.request(
        method,
        url,
        body=body,
        headers={"Authorization": f"Bearer {token}"},
        source=_source_for(http, comp),
    )
    return AcceptanceVerdict(
        endpoint_label=f"{comp.id} {method} {path}",
        token_variant=variant,
        http_status=resp.status,
        accepted=200 <= resp.status < 300,
    )


def _verdict_line(v: AcceptanceVerdict) -> str:
    word = "accepted" if v.accepted else "rejected"
    return f"{v.endpoint_label} with {v.token_variant} token: HTTP {v.http_status} ({word})"


def _rejects_anonymous(
    http: HttpClient,
    comp: ComponentSpec,
    method: str,
    path: str,
    body: Optional[bytes] = None,
) -> Optional[bool]:
    """Whether the action turns away a request carrying no token at all.

    None when the service cannot be reached; the per-check probes surface
    that as NotAssessable themselves.
    """
    endpoint = comp.primary_endpoint()
    url = f"{endpoint.scheme}://{endpoint.host}:{endpoint.port}{path}"
    try:
        resp = http.request(method, url, body=body, source=_source_for(http, comp))
    except WireError:
        return None
    return not (200 <= resp.status < 300)


def _enforcing_services(
    services: list[ComponentSpec], http: HttpClient
) -> tuple[list[ComponentSpec], list[str]]:
    """Split off services whose read action admits anonymous callers.

    Presenting a forged token to an action that never demands one proves
    nothing about token validation; the missing access control is its own
    finding elsewhere. Unreachable services stay in, so the token probes
    report them NotAssessable with their own evidence.
    """
    enforcing: list[ComponentSpec] = []
    notes: list[str] = []
    for comp in services:
        if _rejects_anonymous(http, comp, comp.read.method, comp.read.path) is False:
            notes.append(
                f"{comp.id} {comp.read.method} {comp.read.path}: accepts "
                "anonymous requests; token validation not exercised there"
            )
        else:
            enforcing.append(comp)
    return enforcing, notes


def _with_notes(result: CheckResult, notes: list[str]) -> CheckResult:
    if notes:
        result.evidence[:0] = notes
    return result


def run_jwt_battery(
    manifest: TargetManifest,
    live_token: SignedToken,
    keys: Optional[dict] = None,
    *,
    http: HttpClient,
    mint: MintFn,
    config: JwtAuditConfig = JwtAuditConfig(),
) -> list[CheckResult]:
    """Execute JWT-01..JWT-10 against every token-accepting service."""
    services = token_services(manifest)
    if keys is None:
        keys = _fetch_jwks(manifest, http)

    enforcing, open_notes = _enforcing_services(services, http)

    results = [
        _check_lifetime(live_token, config),
        _with_notes(
            _check_expired(manifest, enforcing, http, mint, config), open_notes
        ),
        _check_algorithm(live_token, config),
        _check_key_exposure(manifest, http, keys, config),
    ]

    baselines: dict[str, SignedToken] = {}
    for comp in services:
        token = mint(scope=comp.read.scope, audience=comp.audience)
        if token is not None:
            baselines[comp.id] = token

    results.append(_with_notes(
        _check_forgeries(enforcing, baselines, http, "JWT-05",
                         [StripSignature(), FlipSignatureBit(0)],
                         "signature validation enforced for every variant"),
        open_notes,
    ))
    results.append(_with_notes(
        _check_forgeries(enforcing, baselines, http, "JWT-06",
                         [SetAlgNone()],
                         "alg=none token rejected everywhere"),
        open_notes,
    ))
    results.append(_with_notes(
        _check_confusion(enforcing, baselines, http, keys), open_notes
    ))
    results.append(_check_scope(manifest, services, baselines, http))
    results.append(_with_notes(
        _check_audience(services, enforcing, http, mint), open_notes
    ))
    results.append(_check_web_token_storage(manifest, http))
    return results


def _fetch_jwks(manifest: TargetManifest, http: HttpClient) -> Optional[dict]:
    server = manifest.oauth_server()
    if not server.jwks_path:
        return None
    endpoint = server.primary_endpoint()
    url = f"{endpoint.scheme}://{endpoint.host}:{endpoint.port}{server.jwks_path}"
    try:
        resp = http.request("GET", url)
        if resp.status == 200:
            doc = resp.json()
            if isinstance(doc, dict):
                return doc
    except (WireError, ValueError):
        pass
    return None


def _check_lifetime(live_token: SignedToken, config: JwtAuditConfig) -> CheckResult:
    claims = live_token.claims
    if "exp" not in claims:
        return CheckResult(
            "JWT-01", CheckStatus.FAIL,
            ["issued token carries no exp claim (unbounded lifetime)"],
        )
    if "iat" not in claims:
        return CheckResult(
            "JWT-01", CheckStatus.FAIL,
            ["issued token carries exp but no iat; lifetime cannot be bounded at issue time"],
        )
    lifetime = int(claims["exp"]) - int(claims["iat"])
    threshold = config.lifetime_threshold_s
    if lifetime > threshold:
        return CheckResult(
            "JWT-01", CheckStatus.FAIL,
            [f"issued token lifetime exp-iat = {lifetime} s exceeds threshold: "
             f"{lifetime} > {threshold}"],
        )
    return CheckResult(
        "JWT-01", CheckStatus.PASS,
        [f"issued token lifetime exp-iat = {lifetime} s within threshold {threshold} s"],
    )


def _check_expired(
    manifest: TargetManifest,
    services: list[ComponentSpec],
    http: HttpClient,
    mint: MintFn,
    config: JwtAuditConfig,
) -> CheckResult:
    if not services:
        return CheckResult("JWT-02", CheckStatus.NOT_ASSESSABLE,
                           ["no token-accepting services declared"])
    evidence = []
    failed_component = None
    assessed = False
    for comp in services:
        expired = None
        if manifest.audit_fixture:
            # Issuer fixture parameters yield a validly signed, already
            # expired token; forging expiry would also break the signature
            # and prove nothing about expiry enforcement.
            expired = mint(
                scope=comp.read.scope,
                audience=comp.audience,
                lifetime_s=60,
                iat_offset_s=-3600,
            )
        if expired is None:
            continue
        assessed = True
        try:
            verdict = _present(
                http, comp, comp.read.method, comp.read.path,
                expired.compact(), "validly-signed expired",
            )
        except WireError as exc:
            return CheckResult("JWT-02", CheckStatus.NOT_ASSESSABLE,
                               [f"{comp.id}: {exc}"])
        evidence.append(_verdict_line(verdict))
        if verdict.accepted:
            failed_component = failed_component or comp.id
    if not assessed:
        return CheckResult(
            "JWT-02", CheckStatus.NOT_ASSESSABLE,
            ["a validly signed expired token cannot be obtained without issuer "
             "cooperation; declare audit_fixture mode or wait out a real token "
             "lifetime to assess expiry enforcement"],
        )
    if failed_component:
        return CheckResult("JWT-02", CheckStatus.FAIL, evidence,
                           component_id=failed_component)
    return CheckResult("JWT-02", CheckStatus.PASS, evidence)


def _check_algorithm(live_token: SignedToken, config: JwtAuditConfig) -> CheckResult:
    alg = live_token.header.get("alg")
    allowed = ", ".join(sorted(config.allowed_algs))
    if alg not in config.allowed_algs:
        return CheckResult(
            "JWT-03", CheckStatus.FAIL,
            [f"issued token header alg = {alg}; outside allowed set: {allowed}"],
        )
    return CheckResult(
        "JWT-03", CheckStatus.PASS,
        [f"issued token header alg = {alg}; allowed set: {allowed}"],
    )


def _check_key_exposure(
    manifest: TargetManifest,
    http: HttpClient,
    keys: Optional[dict],
    config: JwtAuditConfig,
) -> CheckResult:
    evidence = []
    failed_component = None
    public_web = [
        comp
        for comp in manifest.components
        if expected_zone(comp.role) is Zone.PUBLIC
        and comp.endpoints
        and comp.primary_endpoint().scheme in ("http", "https")
    ]
    for comp in public_web:
        endpoint = comp.primary_endpoint()
        for path in config.key_paths:
            url = f"{endpoint.scheme}://{endpoint.host}:{endpoint.port}{path}"
            try:
                resp = http.request("GET", url)
            except WireError as exc:
                return CheckResult("JWT-04", CheckStatus.NOT_ASSESSABLE,
                                   [f"{comp.id}: {exc}"])
            exposed = resp.status == 200 and any(
                marker in resp.body for marker in _KEY_EXPOSURE_MARKERS
            )
            if exposed:
                evidence.append(f"{comp.id} GET {path}: HTTP 200 returns key material")
                failed_component = failed_component or comp.id
            else:
                evidence.append(f"{comp.id} GET {path}: HTTP {resp.status}")
    if keys is not None:
        exposed_fields = jwks_private_fields(keys)
        if exposed_fields:
            evidence.append(
                "published JWKS exposes private fields: " + ", ".join(exposed_fields)
            )
            failed_component = failed_component or manifest.oauth_server().id
        else:
            evidence.append("published JWKS contains public parameters only")
    else:
        evidence.append("no JWKS document published")
    if failed_component:
        return CheckResult("JWT-04", CheckStatus.FAIL, evidence,
                           component_id=failed_component)
    return CheckResult("JWT-04", CheckStatus.PASS, evidence)


def _check_forgeries(
    services: list[ComponentSpec],
    baselines: dict[str, SignedToken],
    http: HttpClient,
    check_id: str,
    mutations: list[Mutation],
    pass_summary: str,
) -> CheckResult:
    if not services:
        return CheckResult(check_id, CheckStatus.NOT_ASSESSABLE,
                           ["no token-accepting services declared"])
    evidence = []
    failed_component = None
    for comp in services:
        base = baselines.get(comp.id)
        if base is None:
            return CheckResult(check_id, CheckStatus.NOT_ASSESSABLE,
                               [f"{comp.id}: no baseline token could be minted"])
        for mutation in mutations:
            forged = forge(base, mutation)
            try:
                verdict = _present(
                    http, comp, comp.read.method, comp.read.path,
                    forged.compact(), mutation.name,
                )
            except WireError as exc:
                return CheckResult(check_id, CheckStatus.NOT_ASSESSABLE,
                                   [f"{comp.id}: {exc}"])
            evidence.append(_verdict_line(verdict))
            if verdict.accepted:
                failed_component = failed_component or comp.id
    if failed_component:
        return CheckResult(check_id, CheckStatus.FAIL, evidence,
                           component_id=failed_component)
    evidence.append(pass_summary)
    return CheckResult(check_id, CheckStatus.PASS, evidence)


def _check_confusion(
    services: list[ComponentSpec],
    baselines: dict[str, SignedToken],
    http: HttpClient,
    keys: Optional[dict],
) -> CheckResult:
    if not services:
        return CheckResult("JWT-07", CheckStatus.NOT_ASSESSABLE,
                           ["no token-accepting services declared"])
    public_pem = None
    if keys is not None:
        for entry in keys.get("keys", []):
            if entry.get("kty") == "RSA":
                public_pem = jwk_to_public_pem(entry)
                break
    if public_pem is None:
        return CheckResult(
            "JWT-07", CheckStatus.NOT_ASSESSABLE,
            ["no published RSA key; confusion forgery cannot be constructed"],
        )
    return _check_forgeries(
        services, baselines, http, "JWT-07",
        [AlgConfusionHs256(public_pem)],
        "HMAC-with-public-key forgery rejected everywhere",
    )


def _check_scope(
    manifest: TargetManifest,
    services: list[ComponentSpec],
    baselines: dict[str, SignedToken],
    http: HttpClient,
) -> CheckResult:
    writable = [c for c in services if c.write]
    if not writable:
        return CheckResult("JWT-08", CheckStatus.NOT_ASSESSABLE,
                           ["no scope-gated write action declared"])
    evidence = []
    failed_component = None
    probed = 0
    for comp in writable:
        base = baselines.get(comp.id)
        if base is None:
            return CheckResult("JWT-08", CheckStatus.NOT_ASSESSABLE,
                               [f"{comp.id}: no baseline token could be minted"])
        body = comp.write_body.encode("utf-8") if comp.write_body else b"{}"
        if _rejects_anonymous(
            http, comp, comp.write.method, comp.write.path, body=body
        ) is False:
            evidence.append(
                f"{comp.id} {comp.write.method} {comp.write.path}: accepts "
                "anonymous requests; scope validation not exercised there"
            )
            continue
        probed += 1
        probes = [
            (forge(base, AddScope(comp.write.scope)), "forged added-scope"),
            (base, "legitimately scoped read-only"),
        ]
        for token, variant in probes:
            try:
                verdict = _present(
                    http, comp, comp.write.method, comp.write.path,
                    token.compact(), variant, body=body,
                )
            except WireError as exc:
                return CheckResult("JWT-08", CheckStatus.NOT_ASSESSABLE,
                                   [f"{comp.id}: {exc}"])
            evidence.append(_verdict_line(verdict))
            if verdict.accepted:
                failed_component = failed_component or comp.id
    if failed_component:
        return CheckResult("JWT-08", CheckStatus.FAIL, evidence,
                           component_id=failed_component)
    if probed == 0:
        return CheckResult("JWT-08", CheckStatus.NOT_ASSESSABLE, evidence)
    evidence.append("write actions demand their declared scope")
    return CheckResult("JWT-08", CheckStatus.PASS, evidence)


def _check_audience(
    services: list[ComponentSpec],
    enforcing: list[ComponentSpec],
    http: HttpClient,
    mint: MintFn,
) -> CheckResult:
    # Audience candidates come from every declared service; presentation is
    # limited to services that demand a token in the first place.
    audiences = []
    for comp in services:
        if comp.audience not in audiences:
            audiences.append(comp.audience)
    if len(audiences) < 2:
        return CheckResult(
            "JWT-09", CheckStatus.NOT_ASSESSABLE,
            ["fewer than two token audiences declared; cross-audience replay "
             "cannot be constructed"],
        )
    if not enforcing:
        return CheckResult(
            "JWT-09", CheckStatus.NOT_ASSESSABLE,
            ["no token-demanding action remains to present a cross-audience "
             "token to"],
        )
    evidence = []
    failed_component = None
    for comp in enforcing:
        foreign = next(a for a in audiences if a != comp.audience)
        # Correct scope for the target, wrong audience: only the audience
        # check separates this token from a legitimate one.
        token = mint(scope=comp.read.scope, audience=foreign)
        if token is None:
            return CheckResult("JWT-09", CheckStatus.NOT_ASSESSABLE,
                               [f"could not mint a token for audience {foreign}"])
        try:
            verdict = _present(
                http, comp, comp.read.method, comp.read.path,
                token.compact(), f"audience={foreign}",
            )
        except WireError as exc:
            return CheckResult("JWT-09", CheckStatus.NOT_ASSESSABLE,
                               [f"{comp.id}: {exc}"])
        evidence.append(_verdict_line(verdict))
        if verdict.accepted:
            failed_component = failed_component or comp.id
    if failed_component:
        return CheckResult("JWT-09", CheckStatus.FAIL, evidence,
                           component_id=failed_component)
    evidence.append("tokens are rejected outside their minted audience")
    return CheckResult("JWT-09", CheckStatus.PASS, evidence)


_COOKIE_REQUIRED_FLAGS = ("secure", "httponly", "samesite=strict")
_STORAGE_PATTERN = re.compile(r"localStorage\s*\.\s*setItem|window\.localStorage")


def _check_web_token_storage(manifest: TargetManifest, http: HttpClient) -> CheckResult:
    web_apps = manifest.web_apps()
    if not web_apps:
        return CheckResult("JWT-10", CheckStatus.SKIPPED,
                           ["no web interface declared"])
    evidence = []
    failed_component = None
    for comp in web_apps:
        endpoint = comp.primary_endpoint()
        url = f"{endpoint.scheme}://{endpoint.host}:{endpoint.port}/"
        try:
            resp = http.request("GET", url, source=_source_for(http, comp))
        except WireError as exc:
            return CheckResult("JWT-10", CheckStatus.NOT_ASSESSABLE,
                               [f"{comp.id}: {exc}"])
        for cookie in resp.header_all("Set-Cookie"):
            cookie_name = cookie.split("=", 1)[0].strip()
            lowered = cookie.lower()
            missing = [flag for flag in _COOKIE_REQUIRED_FLAGS if flag not in lowered]
            if missing:
                evidence.append(
                    f"{comp.id} cookie {cookie_name} missing flags: "
                    + ", ".join(missing)
                )
                failed_component = failed_component or comp.id
            else:
                evidence.append(
                    f"{comp.id} cookie {cookie_name} sets Secure, HttpOnly, "
                    "SameSite=Strict"
                )
        if _STORAGE_PATTERN.search(resp.text()):
            evidence.append(f"{comp.id} page persists values to browser localStorage")
            failed_component = failed_component or comp.id
        else:
            evidence.append(f"{comp.id} page does not persist tokens to browser storage")
    if failed_component:
        return CheckResult("JWT-10", CheckStatus.FAIL, evidence,
                           component_id=failed_component)
    return CheckResult("JWT-10", CheckStatus.PASS, evidence)
