"""Synthetic biometric enrollment, template scrambling and biometric-bound keys.

Templates are unit feature vectors. A deployment-wide secret orthonormal
matrix scrambles them before they ever leave the device; because the
transform is an isometry, cosine matching works on the scrambled values
directly. The enrollment authority stands in for a cloud biometrics
service: it certifies the binding between a BiometricID and a device's
Ed25519 verification key.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .digest import double_sha256, uint_be

log = logging.getLogger(__name__)

DEFAULT_DIM = 128
DEFAULT_THRESHOLD = 0.85
GENUINE_NOISE_SIGMA = 0.05
QUANT_SCALE = 2**15 - 1
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 32

_ENROLL_TAG = b"BBC/enroll/v1"


class KeyMismatchError(ValueError):
    """Templates scrambled under different keys cannot be compared."""


class DuplicateIdentity(ValueError):
    """The BiometricID is already present in the registry."""


# -- feature vectors ---------------------------------------------------------


def random_unit_vector(rng: np.random.Generator, dim: int = DEFAULT_DIM) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def genuine_probe(
    enrolled: np.ndarray, rng: np.random.Generator, sigma: float = GENUINE_NOISE_SIGMA
) -> np.ndarray:
    """A fresh capture of the same trait: enrolled vector plus Gaussian noise, renormalized."""
    v = enrolled + sigma * rng.standard_normal(enrolled.shape[0])
    return v / np.linalg.norm(v)


def _check_unit(v: np.ndarray) -> None:
    if abs(float(np.linalg.norm(v)) - 1.0) > 1e-9:
        raise ValueError("feature vector must have unit Euclidean norm")


# -- scrambling --------------------------------------------------------------


def key_id_for_seed(seed: int) -> bytes:
    return double_sha256(uint_be(seed, 8, "seed"))


@dataclass(frozen=True, eq=False)
class ScramblingKey:
    seed: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def key_id(self) -> bytes:
        return key_id_for_seed(self.seed)


def generate_key(seed: int, dim: int = DEFAULT_DIM) -> ScramblingKey:
    """Seeded Gaussian matrix orthonormalized by QR.

    Column signs are fixed so that R has a positive diagonal, which makes
    the factorization (and hence the key) unique for a given seed.
    """
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    q.setflags(write=False)
    return ScramblingKey(seed, q)


@dataclass(frozen=True, eq=False)
class ScrambledTemplate:
    values: np.ndarray
    key_id: bytes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScrambledTemplate):
            return NotImplemented
        return self.key_id == other.key_id and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


def scramble(v: np.ndarray, key: ScramblingKey) -> ScrambledTemplate:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != key.dim:
        raise ValueError(f"dimension mismatch: vector {v.shape}, key {key.dim}")
    _check_unit(v)
    out = key.matrix @ v
    out.setflags(write=False)
    return ScrambledTemplate(out, key.key_id)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def match_encrypted(
    probe: ScrambledTemplate, enrolled: ScrambledTemplate, threshold: float = DEFAULT_THRESHOLD
) -> tuple[float, bool]:
    """Cosine match in the scrambled domain. Returns ``(score, accepted)``."""
    if probe.key_id != enrolled.key_id:
        raise KeyMismatchError("probe and enrolled template use different scrambling keys")
    if probe.values.shape != enrolled.values.shape:
        raise ValueError("template dimension mismatch")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    score = cosine(probe.values, enrolled.values)
    return score, score >= threshold


# -- identity ----------------------------------------------------------------


def quantize(values: np.ndarray) -> np.ndarray:
    """Signed 16-bit fixed point, rounding half away from zero."""
    scaled = np.asarray(values, dtype=float) * QUANT_SCALE
    q = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(q, -QUANT_SCALE, QUANT_SCALE).astype(np.int64)


def quantized_bytes(t: ScrambledTemplate) -> bytes:
    return quantize(t.values).astype(">i2").tobytes()


def template_from_quantized(raw: bytes, key_id: bytes) -> ScrambledTemplate:
    q = np.frombuffer(raw, dtype=">i2").astype(float)
    values = q / QUANT_SCALE
    values.setflags(write=False)
    return ScrambledTemplate(values, key_id)


def derive_biometric_id(t: ScrambledTemplate) -> bytes:
    return double_sha256(t.key_id + quantized_bytes(t))


# -- signatures --------------------------------------------------------------


@functools.lru_cache(maxsize=4096)
def _public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


@functools.lru_cache(maxsize=1 << 18)
def _verify_cached(public_key: bytes, data: bytes, signature: bytes) -> bool:
    try:
        _public_key(public_key).verify(signature, data)
    except (InvalidSignature, ValueError):
        return False
    return True


def verify(public_key: bytes, data: bytes, signature: bytes) -> bool:
    """True exactly for authentic ``(key, data, signature)`` triples.

    Results are memoized; verification is a pure function of its inputs.
    """
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    return _verify_cached(bytes(public_key), bytes(data), bytes(signature))


class SigningKey:
    """Ed25519 signing key derived from 32 seed bytes (deterministic signatures)."""

    __slots__ = ("_sk", "public_key")

    def __init__(self, seed: bytes):
        if len(seed) != 32:
            raise ValueError("signing key seed must be 32 bytes")
        self._sk = Ed25519PrivateKey.from_private_bytes(seed)
        self.public_key: bytes = self._sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    @classmethod
    def from_rng(cls, rng: np.random.Generator) -> "SigningKey":
        return cls(rng.bytes(32))

    def sign(self, data: bytes) -> bytes:
        return self._sk.sign(data)

    def __repr__(self) -> str:
        return f"SigningKey(public={self.public_key.hex()[:16]}...)"


def sign(key: SigningKey, data: bytes) -> bytes:
    return key.sign(data)


# -- enrollment --------------------------------------------------------------


@dataclass(frozen=True)
class EnrollmentRecord:
    biometric_id: bytes
    template: ScrambledTemplate
    public_key: bytes
    authority_signature: bytes

    def binding_bytes(self) -> bytes:
        return binding_bytes(self.biometric_id, self.public_key)


def binding_bytes(biometric_id: bytes, public_key: bytes) -> bytes:
    return _ENROLL_TAG + biometric_id + public_key


@dataclass
class Registry:
    """BiometricID -> EnrollmentRecord, certified by one authority key.

    Insertion order is kept; node ids in the simulator are positions in it.
    """

    authority_key: bytes
    records: dict[bytes, EnrollmentRecord] = field(default_factory=dict)

    def add(self, record: EnrollmentRecord) -> None:
        if record.biometric_id in self.records:
            raise DuplicateIdentity(record.biometric_id.hex())
        if not verify(self.authority_key, record.binding_bytes(), record.authority_signature):
            raise ValueError("authority signature does not verify for this record")
        self.records[record.biometric_id] = record

    def __contains__(self, biometric_id: object) -> bool:
        return biometric_id in self.records

    def __getitem__(self, biometric_id: bytes) -> EnrollmentRecord:
        return self.records[biometric_id]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[bytes]:
        return iter(self.records)

    def public_key(self, biometric_id: bytes) -> bytes | None:
        record = self.records.get(biometric_id)
        return None if record is None else record.public_key

    def ids(self) -> list[bytes]:
        return list(self.records)


class EnrollmentAuthority:
    """In-process enrollment service holding the certification keypair."""

    def __init__(self, signing_key: SigningKey):
        self._key = signing_key
        self.registry = Registry(signing_key.public_key)

    @property
    def public_key(self) -> bytes:
        return self._key.public_key

    def enroll(
        self, v: np.ndarray, key: ScramblingKey, device_key: SigningKey
    ) -> EnrollmentRecord:
        """Scramble ``v``, derive its ID, certify ``device_key`` for it and register.

        The caller supplies the freshly generated device keypair so that
        enrollment stays reproducible from seeded streams.
        """
        template = scramble(v, key)
        biometric_id = derive_biometric_id(template)
        if biometric_id in self.registry:
            raise DuplicateIdentity(biometric_id.hex())
        record = EnrollmentRecord(
            biometric_id=biometric_id,
            template=template,
            public_key=device_key.public_key,
            authority_signature=self._key.sign(binding_bytes(biometric_id, device_key.public_key)),
        )
        self.registry.add(record)
        log.debug("enrolled %s", biometric_id.hex()[:16])
        return record

    def verify_probe(
        self, biometric_id: bytes, probe: ScrambledTemplate, threshold: float = DEFAULT_THRESHOLD
    ) -> tuple[float, bool]:
        return match_encrypted(probe, self.registry[biometric_id].template, threshold)


def verify_binding(authority_key: bytes, record: EnrollmentRecord) -> bool:
    return verify(authority_key, record.binding_bytes(), record.authority_signature)


# -- synthetic fleets --------------------------------------------------------

# stream tags for seeded_rng
STREAM_TEMPLATE = 1
STREAM_DEVICE_KEY = 2
STREAM_AUTHORITY = 3
STREAM_SCRAMBLE = 4
STREAM_PROBE = 5


def seeded_rng(*words: int) -> np.random.Generator:
    """Independent named stream, e.g. ``seeded_rng(seed, node_id, STREAM_TEMPLATE)``."""
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


class Fleet:
    """A registry of ``size`` synthetic identities enrolled under one seed.

    Node ``i`` is the ``i``-th registry record. Raw feature vectors stay
    private to the fleet; only scrambled probes leave it.
    """

    def __init__(self, seed: int, size: int, dim: int = DEFAULT_DIM):
        if size < 1:
            raise ValueError("fleet size must be at least 1")
        self.seed = seed
        self.dim = dim
        scramble_seed = int(seeded_rng(seed, STREAM_SCRAMBLE).integers(0, 2**63))
        self.scrambling_key = generate_key(scramble_seed, dim)
        self.authority = EnrollmentAuthority(SigningKey.from_rng(seeded_rng(seed, STREAM_AUTHORITY)))
        self.device_keys: list[SigningKey] = []
        self.ids: list[bytes] = []
        self._features: list[np.ndarray] = []
        for node_id in range(size):
            v = random_unit_vector(seeded_rng(seed, node_id, STREAM_TEMPLATE), dim)
            device_key = SigningKey.from_rng(seeded_rng(seed, node_id, STREAM_DEVICE_KEY))
            record = self.authority.enroll(v, self.scrambling_key, device_key)
            self.device_keys.append(device_key)
            self.ids.append(record.biometric_id)
            self._features.append(v)

    @property
    def registry(self) -> Registry:
        return self.authority.registry

    def __len__(self) -> int:
        return len(self.ids)

    def probe(self, node_id: int, rng: np.random.Generator) -> ScrambledTemplate:
        """Scrambled genuine re-capture of node ``node_id``'s trait."""
        return scramble(genuine_probe(self._features[node_id], rng), self.scrambling_key)

    def impostor_probe(self, rng: np.random.Generator) -> ScrambledTemplate:
        return scramble(random_unit_vector(rng, self.dim), self.scrambling_key)
