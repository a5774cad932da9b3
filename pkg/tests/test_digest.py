import hashlib
import os

import pytest

from bbc.digest import SerializationError, double_sha256, int_be, parse_hex, uint_be
from oracles import dsha_ref, sha256_ref

EMPTY_DSHA = "5df6e0e2761359d30a8275058e299fcc0381534545f55cf43e41983f5d4c9456"
ABC_DSHA = "4f8b42c22dd3729b519ba6f68d2da7cc5b2d606d05daed5ad5128cc03e6c6358"


def test_reference_sha256_agrees_with_known_single_hash():
    # FIPS 180-2 appendix B.1
    assert sha256_ref(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_empty_input_vector():
    assert dsha_ref(b"").hex() == EMPTY_DSHA
    assert double_sha256(b"").hex() == EMPTY_DSHA


def test_abc_vector():
    assert dsha_ref(b"abc").hex() == ABC_DSHA
    assert double_sha256(b"abc").hex() == ABC_DSHA


@pytest.mark.parametrize("n", [1, 55, 56, 63, 64, 65, 119, 1000])
def test_matches_reference_across_padding_boundaries(n):
    data = os.urandom(n)
    assert double_sha256(data) == dsha_ref(data)


def test_one_mib_digest_is_32_bytes():
    assert len(double_sha256(os.urandom(1 << 20))) == 32


def test_is_sha256_twice():
    data = b"bbc"
    assert double_sha256(data) == hashlib.sha256(hashlib.sha256(data).digest()).digest()


def test_fixed_width_ranges():
    assert uint_be(1, 4) == b"\x00\x00\x00\x01"
    assert int_be(-1, 2) == b"\xff\xff"
    with pytest.raises(SerializationError):
        uint_be(-1, 8)
    with pytest.raises(SerializationError):
        uint_be(2**32, 4)
    with pytest.raises(SerializationError):
        int_be(2**63, 8)
    with pytest.raises(SerializationError):
        uint_be(True, 1)


@pytest.mark.parametrize("text", ["AB", "abc", "zz", " ab", "ab\n"])
def test_parse_hex_is_strict(text):
    with pytest.raises(SerializationError):
        parse_hex(text)


def test_parse_hex_size():
    assert parse_hex("00ff", 2) == b"\x00\xff"
    with pytest.raises(SerializationError):
        parse_hex("00ff", 3)
