import json

import pytest
from mpmath import mp, mpf

from singmin.serialize import (
    FormatError,
    construction_to_dict,
    decode_int,
    decode_mpf,
    decode_offset,
    dumps,
    encode_int,
    encode_mpf,
    encode_offset,
    load_construction,
    schedule_from_dict,
    schedule_to_dict,
)
from singmin.special_functions import Offset


@pytest.mark.parametrize("x", ["0", "0.1", "-3.25", "1e-300", "12345.678901234567890123"])
def test_decimal_roundtrip(x):
    v = mpf(x)
    s = encode_mpf(v)
    assert "p" not in s
    assert decode_mpf(s) == v


def test_binary_form_for_huge_exponents():
    v = mp.exp(-mp.exp(mpf(9000)))
    s = encode_mpf(v)
    assert s.startswith("0x") and "p-0x" in s
    assert decode_mpf(s) == v
    assert decode_mpf(encode_mpf(-v)) == -v


def test_int_and_offset_roundtrip():
    big = 3**5000
    assert decode_int(encode_int(big)) == big
    for o in (Offset.from_theta(mpf("12.75"), -1), Offset.plain(mpf("-0.002")), Offset.plain(0)):
        assert decode_offset(encode_offset(o)) == o
    assert set(encode_offset(Offset.from_theta(1))) == {"theta", "sign"}


def test_schedule_roundtrip(con6):
    d = schedule_to_dict(con6.schedule)
    assert d["format"] == "singmin-schedule" and d["version"] == 1
    back = schedule_from_dict(json.loads(dumps(d)))
    assert back == con6.schedule


def test_construction_files_roundtrip(con6, artifacts):
    con = load_construction(artifacts / "schedule.json", artifacts / "profiles.json")
    assert con.schedule == con6.schedule
    assert con.profiles == con6.profiles
    # re-serialization is byte-identical
    assert dumps(construction_to_dict(con)) == (artifacts / "profiles.json").read_text()
    assert dumps(schedule_to_dict(con.schedule)) == (artifacts / "schedule.json").read_text()


def test_version_guard(con6):
    d = schedule_to_dict(con6.schedule)
    d["version"] = 99
    with pytest.raises(FormatError):
        schedule_from_dict(d)
    d["version"], d["format"] = 1, "other"
    with pytest.raises(FormatError):
        schedule_from_dict(d)
