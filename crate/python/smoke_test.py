"""Smoke test for the fplus extension module.

Build and install first:  cd crates/python && maturin develop  (or maturin build + pip install)
"""

import json
import pathlib

import fplus

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def main():
    assert fplus.normal_form("g0 g1") == "g2^1 g0^1"
    assert fplus.words_equal("g0 g1", "g2 g0")
    assert not fplus.words_equal("g0 g0", "g1 g0")
    assert fplus.words_equal("h0 h0", "h1 h0", monoid="splus")
    assert fplus.shift(1, 2, "g0 g1") == "g1 g3"

    trace = json.loads(fplus.derive("EF+", 0, 1))
    assert trace[0]["word"] == "c0 g0 c1 g1"
    assert all("relation" in step for step in trace[1:])

    coin = fplus.Chain([["1/2", "1/2"], ["1/4", "3/4"]])
    assert coin.pi == ["1/3", "2/3"]
    law = dict((tuple(p), q) for p, q in coin.path_law(depth=2))
    assert law[(0, 0, 0)] == "1/12" and law[(1, 1, 1)] == "3/8"

    report = coin.verify("all", depth=4)
    assert report.passed, report.failures
    for line in report.to_json_lines().splitlines():
        entry = json.loads(line)
        assert {"check", "anchor", "verdict"} <= entry.keys()

    loaded = fplus.Chain.load(str(DATA / "coin_p12_p14.toml"))
    assert loaded.pi == coin.pi

    fixture = json.loads((DATA / "nonlumpable.json").read_text())
    chain = fplus.Chain.from_json(json.dumps(fixture["chain"]))
    summary = json.loads(chain.lump(fixture["map"]))
    assert summary["partially_spreadable"] and not summary["maximal"] and not summary["markov"]

    try:
        fplus.normal_form("g0 x1")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed word accepted")

    print(f"ok: {report!r}")


if __name__ == "__main__":
    main()
