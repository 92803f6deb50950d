import json

import numpy as np
import pytest

from musicxml_writer import render_musicxml
from perfalign.cli import main
from perfalign.perf_ir import PerfNote, write_smf
from perfalign.schemas import ERROR, PROVENANCE, SCORE_IR, TRAIN_REPORT, check
from perfalign.synth import random_score


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def tsv_provenance(path):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# ")
    return json.loads(first[2:])


@pytest.fixture
def corpus(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "corpus", "--out", tmp_path / "c", "--n", 2, "--bars", 1, 1,
                     "--mistake-rate", 0, "--seed", 3)
    assert code == 0
    return tmp_path / "c"


def test_align_eval_pipeline(corpus, tmp_path, capsys):
    p = corpus / "pieces" / "piece_0000"
    code, out, _ = run(capsys, "align", f"{p}.score.json", f"{p}.perf.jsonl", "--out", tmp_path / "pred.tsv")
    assert code == 0 and "insert=0" in out
    code, out, err = run(capsys, "eval", "align", tmp_path / "pred.tsv", f"{p}.truth.tsv")
    assert code == 0 and "F=1.000000" in err
    assert json.loads(out)["aggregate"]["f_align"]["f1"] == 1.0


def test_eval_directories(corpus, tmp_path, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    truth = corpus / "pieces"
    for k in range(2):
        p = truth / f"piece_{k:04d}"
        assert run(capsys, "align", f"{p}.score.json", f"{p}.perf.jsonl", "--out",
                   pred / f"piece_{k:04d}.truth.tsv")[0] == 0
    code, out, _ = run(capsys, "eval", "align", pred, truth, "--out", tmp_path / "m.json")
    assert code == 0 and "F=1.000000" in out
    report = json.loads((tmp_path / "m.json").read_text())
    assert len(report["files"]) == 2 and report["aggregate"]["f_align"]["f1"] == 1.0
    check(report["provenance"], PROVENANCE)


def test_config_precedence(corpus, tmp_path, capsys):
    p = corpus / "pieces" / "piece_0000"
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("seed = 9\nrefits = 7\n[align]\ngap_penalty = 2.5\nrefits = 1\n")
    out = tmp_path / "a.tsv"
    assert run(capsys, "--config", cfg, "align", f"{p}.score.json", f"{p}.perf.jsonl", "--refits", 0,
               "--out", out)[0] == 0
    prov = tsv_provenance(out)
    # flag beats section, section beats default, top-level only supplies globals
    assert prov["config"]["refits"] == 0 and prov["config"]["gap_penalty"] == 2.5 and prov["seed"] == 9
    cfg.write_text("refits = 7\n")
    assert run(capsys, "--config", cfg, "align", f"{p}.score.json", f"{p}.perf.jsonl", "--out", out)[0] == 0
    assert tsv_provenance(out)["config"]["refits"] == 2


def test_score_convert_musicxml(tmp_path, capsys):
    s = random_score(np.random.default_rng(0), n_bars=2)
    xml = tmp_path / "s.musicxml"
    xml.write_text(render_musicxml(s))
    code, _, _ = run(capsys, "score", "convert", xml, "--out", tmp_path / "s.json", "--abc", tmp_path / "p.json")
    assert code == 0
    doc = json.loads((tmp_path / "s.json").read_text())
    check(doc, SCORE_IR)
    assert len(doc["notes"]) == len(s.notes)
    patches = json.loads((tmp_path / "p.json").read_text())["patches"]
    assert len(patches) == 3 and all(len(p["text"]) == 64 for p in patches)
    code, _, _ = run(capsys, "score", "unfold", tmp_path / "s.json", "--out", tmp_path / "u.json")
    assert code == 0 and len(json.loads((tmp_path / "u.json").read_text())["bars"]) == 2


def test_perf_import_midi(tmp_path, capsys):
    mid = tmp_path / "x.mid"
    mid.write_bytes(write_smf([PerfNote(0.0, 0.5, 60, 64), PerfNote(0.5, 0.5, 64, 70)]))
    out = tmp_path / "x.jsonl"
    assert run(capsys, "perf", "import", mid, "--out", out)[0] == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows == [{"onset_s": 0.0, "dur_s": 0.5, "pitch": 60, "velocity": 64},
                    {"onset_s": 0.5, "dur_s": 0.5, "pitch": 64, "velocity": 70}]
    check(json.loads((tmp_path / "x.jsonl.meta.json").read_text())["provenance"], PROVENANCE)


def test_tokenize_detokenize_and_mistakes(corpus, tmp_path, capsys):
    truth = corpus / "pieces" / "piece_0001.truth.tsv"
    for ext in ("bin", "json"):
        steps = tmp_path / f"t.{ext}"
        assert run(capsys, "tokenize", truth, "--out", steps)[0] == 0
        back = tmp_path / f"back_{ext}.tsv"
        assert run(capsys, "detokenize", steps, "--out", back)[0] == 0
        code, _, err = run(capsys, "eval", "align", back, truth, "--onset-tol", 0.004)
        assert code == 0 and "F=1.000000" in err
    code, _, _ = run(capsys, "mistakes", truth, "--out", tmp_path / "m.json")
    report = json.loads((tmp_path / "m.json").read_text())
    assert code == 0 and report["extra"] == [] and report["missed"] == []


def test_augment_perf_truth_is_evaluable(corpus, tmp_path, capsys):
    p = corpus / "pieces" / "piece_0000"
    code, _, _ = run(capsys, "augment", "perf", f"{p}.perf.jsonl", "--score", f"{p}.score.json",
                     "--alignment", f"{p}.truth.tsv", "--truth", tmp_path / "t.tsv", "--out", tmp_path / "m.jsonl",
                     "--log", tmp_path / "log.json", "--insert", 0.3, "--seed", 1)
    assert code == 0
    log = json.loads((tmp_path / "log.json").read_text())
    assert log["kind"] == "performance" and log["seed"] == 1
    code, _, err = run(capsys, "eval", "align", tmp_path / "t.tsv", tmp_path / "t.tsv")
    assert code == 0 and "F=1.000000" in err


def test_toy_train_and_infer(corpus, tmp_path, capsys):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "toy", "train", "--corpus", corpus, "--out", out, "--d-model", 24, "--n-blocks", 1,
                     "--n-heads", 2, "--steps", 4, "--warmup", 1, "--checkpoint-every", 2, "--quiet")
    assert code == 0
    report = json.loads((out / "train_report.json").read_text())
    check(report, TRAIN_REPORT)
    assert report["steps"] == 4 and (out / "last.bin").exists() and (out / "ckpt_2.bin").exists()
    code, _, _ = run(capsys, "toy", "infer", "--checkpoint", out / "last.bin", "--corpus", corpus,
                     "--out", tmp_path / "inf", "--max-steps", 6)
    assert code == 0
    inf = json.loads((tmp_path / "inf" / "infer_report.json").read_text())
    assert len(inf["samples"]) == 2


def test_gradcheck_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "toy", "gradcheck", "--d-model", 12, "--n-heads", 2, "--n-blocks", 1,
                       "--n-params", 30, "--out", tmp_path / "g.json")
    assert code == 0
    assert json.loads((tmp_path / "g.json").read_text())["max_rel_error"] < 1e-3
    code, _, _ = run(capsys, "toy", "gradcheck", "--d-model", 12, "--n-heads", 2, "--n-blocks", 1,
                     "--n-params", 30, "--tolerance", 0)
    assert code == 1


def test_exit_codes_and_json_errors(tmp_path, capsys):
    assert run(capsys, "perf", "import", tmp_path / "nothere.mid")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "score", "unfold", bad)[0] == 2
    notes = tmp_path / "n.jsonl"
    notes.write_text('{"onset_s": 0, "dur_s": 0.5, "pitch": 60, "velocity": 0}\n')
    code, _, err = run(capsys, "--json-errors", "perf", "import", notes)
    assert code == 3
    doc = json.loads(err.strip().splitlines()[-1])
    check(doc, ERROR)
    assert doc["exit_code"] == 3 and doc["line"] == 1
    code, _, err = run(capsys, "perf", "import", notes)
    assert code == 3 and "line 1" in err


def test_workers_give_same_output(corpus, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    truth = corpus / "pieces"
    assert run(capsys, "eval", "align", truth, truth, "--out", a)[0] == 0
    assert run(capsys, "--workers", 2, "eval", "align", truth, truth, "--out", b)[0] == 0
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    da.pop("provenance"), db.pop("provenance")
    assert da == db


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "perfalign" in capsys.readouterr().out
