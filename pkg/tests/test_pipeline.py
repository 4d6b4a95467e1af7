import copy
import json

import numpy as np
import pytest

from lorentzhom import io
from lorentzhom.cli import main
from lorentzhom.errors import FingerprintError, MissingArtifactError, UnsupportedError
from lorentzhom.pipeline import ArtifactStore, Study, emit_report, parse_config

SMALL = {
    "geometry": {"shape": "cube", "center": [0.5, 0.5, 0.5], "size": 0.5, "n": 8},
    "field": {"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": "4", "support": "inclusion"},
    "tensors": {"A1": {"lambda": 1.0, "mu": 1.0}, "A2": {"lambda": 1.0, "mu": 1.0}},
    "discretization": {"modes": 20, "kernel_dt": 0.01, "T": 0.2, "samples": 2, "macro": {"m": 6},
                       "fine": {"eps": [0.5], "cell_resolution": 8}},
    "scenario": {"u0": ["0.1*sin(pi*x1)*sin(pi*x2)*sin(pi*x3)", "0", "0"]},
}


def write_cfg(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def modified(**changes):
    raw = copy.deepcopy(SMALL)
    for path, value in changes.items():
        node = raw
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return raw


def test_cell_subcommand(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "cell", "--config", write_cfg(tmp_path, SMALL), "--out", str(tmp_path / "o"))
    assert code == 0
    summary = json.loads(out)
    assert summary["case"] == "directional" and summary["interface_rank"] == 1
    assert (tmp_path / "o" / "cell.json").exists() and (tmp_path / "o" / "report.json").exists()


@pytest.mark.parametrize("raw, code, kind", [
    (modified(geometry__n=4), 2, "config"),
    (modified(field__colour="red"), 2, "config"),
    (modified(geometry__size=1.0), 3, "geometry"),
    (modified(field__support="cell"), 4, "field"),
])
def test_errors_map_to_exit_codes_with_json_stderr(tmp_path, capsys, raw, code, kind):
    got, _, err = run_cli(capsys, "cell", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path / "o"))
    assert got == code
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["error"] == kind and msg["code"] == code and msg["message"]


def test_missing_config_file_and_bad_eps(tmp_path, capsys):
    assert run_cli(capsys, "cell", "--config", str(tmp_path / "nope.json"))[0] == 2
    assert run_cli(capsys, "fine", "--config", write_cfg(tmp_path, SMALL), "--eps", "a,b")[0] == 2


def test_report_on_empty_store_lists_missing(tmp_path):
    with pytest.raises(MissingArtifactError) as info:
        emit_report(ArtifactStore(tmp_path / "empty"))
    assert info.value.exit_code == 9 and "coeffs.json" in info.value.missing


def test_modes_bit_identical_across_runs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    blobs = []
    for out in ("a", "b"):
        assert run_cli(capsys, "modes", "--config", cfg, "--out", str(tmp_path / out))[0] == 0
        blobs.append((tmp_path / out / "modes" / "modes.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_fingerprints_track_inputs(tmp_path):
    a = Study(parse_config(SMALL), out=tmp_path)
    b = Study(parse_config(modified(tensors__A2={"lambda": 2.0, "mu": 1.0})), out=tmp_path)
    assert a.fp("cell") == b.fp("cell") and a.fp("correctors") == b.fp("correctors")
    assert a.fp("modes") != b.fp("modes") and a.fp("kernel") != b.fp("kernel")
    c = Study(parse_config(modified(discretization__fine={"eps": [0.25], "cell_resolution": 8})), out=tmp_path)
    assert c.fp("modes") == a.fp("modes") and c.fp("fine") != a.fp("fine")


def test_stale_artifacts_are_detected_and_rebuilt(tmp_path):
    a = Study(parse_config(SMALL), out=tmp_path)
    a.cell()
    a.coeffs()
    kb, _ = a.kernel()
    a.store.check("kernel.csv", a.fp("kernel"))
    b = Study(parse_config(modified(tensors__A2={"lambda": 2.0, "mu": 1.0})), out=tmp_path)
    with pytest.raises(FingerprintError):
        b.store.check("kernel.csv", b.fp("kernel"))
    assert not b.store.is_fresh("kernel.csv", b.fp("kernel"))
    ms = b.modes()
    assert ms.fingerprint == b.fp("modes")
    assert io.read_json(tmp_path / "modes" / "modes.json")["fingerprint"] == b.fp("modes")


def test_macro_refused_in_frozen_case(tmp_path, capsys):
    raw = modified(field={"kind": "general", "components": ["sin(2*pi*x2)", "0", "sin(2*pi*x1)"],
                          "support": "inclusion"})
    study = Study(parse_config(raw), out=tmp_path)
    assert study.case() == "frozen"
    with pytest.raises(UnsupportedError):
        study.macro()
    code, _, err = run_cli(capsys, "macro", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path / "o"))
    assert code == 10 and json.loads(err)["error"] == "unsupported"


def test_check_and_converge_end_to_end(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    out = str(tmp_path / "o")
    code, stdout, err = run_cli(capsys, "check", "--config", cfg, "--out", out, "--threads", "1")
    assert code == 0, err
    assert json.loads(stdout)["passed"]
    code, _, err = run_cli(capsys, "converge", "--config", cfg, "--out", out)
    assert code == 2 and "two values of eps" in err
    code, _, err = run_cli(capsys, "converge", "--config", cfg, "--out", out, "--eps", "0.5,0.25")
    assert code == 0, err
    rep = io.read_json(tmp_path / "o" / "report.json")
    assert rep["example_identities"]["abs_Mstar_minus_1"] < 1e-8
    assert set(rep["convergence"]) >= {"eps", "err_hard_phase", "rel_hard_phase"}
    fine = io.read_csv(tmp_path / "o" / "fine.csv")
    assert np.all(np.isfinite(fine["energy"]))
