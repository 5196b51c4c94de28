import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxmcmc.cli import config_hash, main, parse_config, serialize_config
from approxmcmc.errors import ConfigError

kinds = st.sampled_from(["FullMH", "WideMH", "SubsampleNarrow", "SubsampleWide", "Austerity"])


@st.composite
def configs(draw):
    N = draw(st.integers(10, 500))
    kind = draw(kinds)
    kernel = {"kind": kind}
    if kind in ("WideMH", "SubsampleNarrow"):
        kernel["n"] = draw(st.integers(1, N))
    if kind == "SubsampleWide":
        n = draw(st.integers(1, N))
        kernel.update(n=n, A=draw(st.integers(1, N // n)))
    src = draw(st.sampled_from(["synthesize", "two_point", "values"]))
    if src == "values":
        data = {"values": draw(st.lists(st.floats(-5, 5), min_size=1, max_size=20))}
        if kernel.get("n", 0) > len(data["values"]) or kind == "SubsampleWide":
            kernel = {"kind": "FullMH"}
    elif src == "synthesize":
        data = {"synthesize": {"N": N, "theta_star": draw(st.floats(-2, 2)), "seed": draw(st.integers(0, 99))}}
    else:
        data = {"two_point": {"N": N}}
    return {"model": {"kind": draw(st.sampled_from(["gaussian", "bounded"])),
                      "prior_sd": draw(st.floats(0.1, 10))},
            "data": data, "kernel": kernel, "chain": {"T": draw(st.integers(0, 10_000))},
            "seed": draw(st.integers(0, 2**31)), "grid": {"G": draw(st.integers(2, 1000))}}


@settings(max_examples=100, deadline=None)
@given(configs())
def test_config_round_trip(raw):
    cfg = parse_config(raw)
    again = parse_config(json.loads(serialize_config(cfg)))
    assert again == cfg and config_hash(again) == config_hash(cfg)


def test_config_errors_name_the_key():
    with pytest.raises(ConfigError, match="kernel.n = 101 out of range"):
        parse_config({"data": {"two_point": {"N": 100}}, "kernel": {"kind": "SubsampleNarrow", "n": 101}})
    with pytest.raises(ConfigError, match="bogus"):
        parse_config({"bogus": 1})
    with pytest.raises(ConfigError, match="grid.G"):
        parse_config({"grid": {"G": 1}})


def _base(tmp_path, **kw):
    cfg = {"data": {"synthesize": {"N": 100, "theta_star": 0.5, "seed": 1}},
           "kernel": {"kind": "SubsampleNarrow", "n": 10}, "chain": {"T": 200},
           "out_dir": str(tmp_path), "grid": {"G": 60}}
    cfg.update(kw)
    return json.dumps(cfg)


def test_run_exit_codes(tmp_path):
    bad = json.dumps({"data": {"two_point": {"N": 100}}, "kernel": {"kind": "SubsampleNarrow", "n": 101}})
    assert main(["run", "--config", bad, "--out", str(tmp_path)]) == 1
    assert main(["run", "--config", _base(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_status"] == 0 and not man["partial"]
    assert {f["path"] for f in man["files"]} == {"trajectory.csv", "run.json"}
    for f in man["files"]:
        assert os.path.exists(tmp_path / f["path"])


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", _base(a), "--seed", "5"]) == 0
    assert main(["run", "--config", _base(b), "--seed", "5"]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert (a / "run.json").read_bytes() == (b / "run.json").read_bytes()


def test_discretize_and_certify_identical(tmp_path):
    assert main(["discretize", "--config", _base(tmp_path)]) == 0
    assert (tmp_path / "matrix.csv").exists()
    cfg = _base(tmp_path, approx_kernel={"kind": "SubsampleNarrow", "n": 10})
    assert main(["certify", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "certificates.json").read_text())
    tv = next(c for c in rep["certificates"] if c["name"] == "tv_stationary")
    assert tv["holds"] and tv["lhs"] == pytest.approx(0.0, abs=1e-12)


def test_reproduce_log_uniform(tmp_path):
    cfg = json.dumps({"experiments": {"exp_log_uniform": {"trials": 1000}}})
    assert main(["reproduce", "exp_log_uniform", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "exp_log_uniform.json").exists()
    assert main(["reproduce", "nope", "--out", str(tmp_path)]) == 1


def test_tradeoff_argmin_consistent(tmp_path):
    cfg = json.dumps({"data": {"two_point": {"N": 2000, "values": [-1, 1]}},
                      "tradeoff": {"M": 10_000, "n_list": [8, 16, 32, 64, 128], "G": 80},
                      "out_dir": str(tmp_path)})
    assert main(["tradeoff", "--config", cfg]) == 0
    summary = json.loads((tmp_path / "tradeoff.json").read_text())
    import csv
    rows = list(csv.DictReader(open(tmp_path / "tradeoff.csv")))
    assert [int(r["n"]) for r in rows] == [8, 16, 32, 64, 128]
    n0 = summary["n0"]
    valid = [(float(r["total_bound"]), int(r["n"])) for r in rows if int(r["n"]) >= n0]
    assert summary["argmin_bound"] == (min(valid)[1] if valid else None)


def test_missing_config(tmp_path):
    assert main(["run", "--out", str(tmp_path)]) == 1
