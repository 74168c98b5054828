import pytest

from vmuckle import qkd
from vmuckle.errors import BadHex, IndexOutOfRange, KeyReuse, SeedTooShort, WrongLength

SEED = bytes(range(32))


def test_simulator_agreement():
    a, b = qkd.simulator_new(SEED, "link"), qkd.simulator_new(SEED, "link")
    keys = [a.get_key(i, 256) for i in range(1000)]
    assert keys == [b.get_key(i, 256) for i in range(1000)]
    assert len(set(keys)) == 1000
    assert all(len(k) == 32 for k in keys)


def test_simulator_streams_and_seed():
    assert qkd.simulator_new(SEED, "x").get_key(0, 256) != qkd.simulator_new(SEED, "y").get_key(0, 256)
    with pytest.raises(SeedTooShort):
        qkd.simulator_new(b"short")


def test_file_provider(tmp_path):
    p = tmp_path / "keys.hex"
    lines = ["11" * 32, "22" * 32, "33" * 40]
    p.write_text("# comment\n" + "\n".join(lines) + "\n")
    prov = qkd.file_provider_new(str(p))
    assert prov.get_key(1, 256) == bytes.fromhex("22" * 32)
    assert prov.get_key(2, 256) == bytes.fromhex("33" * 32)
    with pytest.raises(IndexOutOfRange):
        prov.get_key(3, 256)


def test_file_provider_errors(tmp_path):
    odd = tmp_path / "odd.hex"
    odd.write_text("abc\n")
    with pytest.raises(BadHex):
        qkd.file_provider_new(str(odd)).get_key(0, 256)
    short = tmp_path / "short.hex"
    short.write_text("aa" * 8 + "\n")
    with pytest.raises(WrongLength):
        qkd.file_provider_new(str(short)).get_key(0, 256)


def test_one_shot():
    prov = qkd.OneShotProvider(qkd.simulator_new(SEED))
    prov.get_key(4, 256)
    with pytest.raises(KeyReuse):
        prov.get_key(4, 256)


def test_parse_source(tmp_path):
    prov = qkd.parse_source(f"sim:{SEED.hex()}:link")
    assert prov.get_key(0, 256) == qkd.simulator_new(SEED, "link").get_key(0, 256)
    p = tmp_path / "k"
    p.write_text("44" * 32 + "\n")
    assert qkd.parse_source(f"file:{p}").get_key(0, 256) == bytes.fromhex("44" * 32)
    with pytest.raises(ValueError):
        qkd.parse_source("etsi:whatever")
