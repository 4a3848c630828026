import json

import numpy as np
import pytest

from cft.cache import FeatureCache, save_cache
from cft.cli import main
from cft.head import ClassificationHead, save_head
from cft.labels import LabelMatrix, write_labels_csv


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    p = {k: str(d / v) for k, v in dict(
        tr="tr.cftc", full="full.csv", va="va.cftc", val="va.csv", drop="drop.csv", an="an.cfth"
    ).items()}
    assert main(["synth", "--n", "2000", "--z", "12", "--c", "3", "--seed", "1",
                 "--cache", p["tr"], "--labels", p["full"]]) == 0
    assert main(["synth", "--n", "800", "--z", "12", "--c", "3", "--seed", "1",
                 "--cache", p["va"], "--labels", p["val"]]) == 0
    assert main(["drop", "--labels", p["full"], "--keep", "0.1", "--seed", "2", "--output", p["drop"]]) == 0
    assert main(["train", "--cache", p["tr"], "--labels", p["drop"], "--output", p["an"], "--epochs", "80"]) == 0
    p["dir"] = d
    return p


def cft_args(p, out_head, *extra):
    return ["cft", "--head", p["an"], "--cache", p["tr"], "--labels", p["drop"],
            "--valid", p["va"], p["val"], "--output", out_head, *extra]


def test_eval_perfect_separation(tmp_path, capsys):
    save_cache(FeatureCache(np.array([[-2.0], [-1.0], [1.0], [2.0]], dtype=np.float32)), tmp_path / "c.cftc")
    write_labels_csv(LabelMatrix(np.array([[-1], [-1], [1], [1]], dtype=np.int8)), tmp_path / "l.csv")
    save_head(ClassificationHead(np.array([[1.0]]), np.array([0.0])), tmp_path / "h.cfth")
    out = tmp_path / "r.json"
    rc = main(["eval", "--head", str(tmp_path / "h.cfth"), "--cache", str(tmp_path / "c.cftc"),
               "--labels", str(tmp_path / "l.csv"), "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["schema"] == 1 and report["mean"] == 1.0 and report["metric"] == "auc"
    assert "mean" in capsys.readouterr().out


def test_pipeline_bp_improves(pipeline):
    p = pipeline
    out = p["dir"] / "bp.json"
    rc = main(cft_args(p, str(p["dir"] / "bp.cfth"), "--metric", "ap", "--epochs", "200", "--lr", "1e-3",
                       "--out", str(out)))
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["mean_metric_after"] >= report["mean_metric_before"]
    for c in report["categories"]:
        assert c["metric_after"] >= c["metric_before"]
        assert c["policy"] == "ignore"
    assert report["args"]["epochs"] == 200


def test_ga_byte_identical(pipeline):
    p = pipeline
    heads = []
    for k in range(2):
        path = p["dir"] / f"ga{k}.cfth"
        assert main(cft_args(p, str(path), "--variant", "ga", "--preset", "coco-ga", "--seed", "1",
                             "--generations", "20")) == 0
        heads.append(path.read_bytes())
    assert heads[0] == heads[1]


def test_jobs_do_not_change_output(pipeline):
    p = pipeline
    paths = [p["dir"] / "j1.cfth", p["dir"] / "j4.cfth"]
    for path, jobs in zip(paths, ["1", "4"]):
        assert main(cft_args(p, str(path), "--epochs", "30", "--jobs", jobs)) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_greedy_records_policy(pipeline):
    p = pipeline
    out = p["dir"] / "g.json"
    assert main(cft_args(p, str(p["dir"] / "g.cfth"), "--uncertain", "greedy", "--epochs", "20",
                         "--out", str(out))) == 0
    report = json.loads(out.read_text())
    assert report["uncertain"] == "greedy"
    assert all(c["policy"] in ("ignore", "ones", "zeros") for c in report["categories"])


def test_eval_groups_and_subset(pipeline, tmp_path):
    p = pipeline
    out = tmp_path / "e.json"
    assert main(["eval", "--head", p["an"], "--cache", p["va"], "--labels", p["val"], "--metric", "ap",
                 "--groups", "3", "--subset", "0,2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert sorted(report["per_category"]) == ["0", "2"]
    assert len(report["groups"]) == 3
    assert sorted(c for g in report["groups"] for c in g["categories"]) == [0, 1, 2]


def test_failure_exit_code(tmp_path, capsys):
    rc = main(["eval", "--head", str(tmp_path / "missing"), "--cache", "x", "--labels", "y"])
    assert rc == 1
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and "error" in err


def test_corrupt_file_exit_code(tmp_path, pipeline, capsys):
    bad = tmp_path / "bad.cfth"
    bad.write_bytes(b"XXXX" + bytes(20))
    rc = main(["eval", "--head", str(bad), "--cache", pipeline["va"], "--labels", pipeline["val"]])
    assert rc == 1


def test_wrong_preset_for_variant(pipeline, tmp_path):
    assert main(cft_args(pipeline, str(tmp_path / "h.cfth"), "--preset", "coco-ga")) == 1


@pytest.mark.parametrize("argv", [[], ["bogus"], ["drop", "--labels", "x"], ["drop", "--labels", "x",
                                  "--keep", "1.5", "--output", "y"], ["cft", "--jobs", "0", "--head", "h",
                                  "--cache", "c", "--labels", "l", "--output", "o"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_bench_small(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--n", "2000", "--z", "16", "--epochs", "20", "--generations", "20",
                 "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["n_known"] == 200
    assert report["bp_seconds_per_lr"] > 0 and report["ga_seconds_per_lr"] > 0
