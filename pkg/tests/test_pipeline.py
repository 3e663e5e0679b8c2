import json
import shutil
import time
from pathlib import Path

import pytest

from decontext.cli import main
from decontext.pipeline import (
    ConfigError,
    ConfigMismatch,
    PipelineConfig,
    StageError,
    cmd_answer,
    cmd_evaluate,
    cmd_extract,
    cmd_train,
    load_config,
    read_dataset,
    run_pipeline,
    synthesize,
)
from decontext.pipeline.records import read_stage

FIXTURE = Path(__file__).resolve().parent.parent / "data" / "fixture20"


def graph_doc(caption, nodes, edges):
    return {
        "caption": caption,
        "nodes": [{"id": i, "surface": s, "pos": p, "ne": ne} for i, s, p, ne in nodes],
        "edges": [{"src": a, "dst": b, "relation": ""} for a, b in edges],
    }


DOG_PARK = graph_doc(
    "A brown dog runs in the park",
    [(0, "dog", "Noun", "None"), (1, "brown", "Adjective", "None"), (3, "run", "Verb", "None"), (2, "park", "Noun", "Location")],
    [(0, 1), (3, 0), (3, 2)],
)
TOWER = graph_doc("The Eiffel Tower", [(0, "Eiffel Tower", "NamedEntity", "Location")], [])


def record(sid, g, label=None, split="test"):
    return {"id": sid, "caption": g["caption"], "image": f"img/{sid}.jpg", "graph": g, "label": label, "split": split}


def write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def fixture20(tmp_path):
    d = tmp_path / "fx"
    shutil.copytree(FIXTURE, d)
    return d


def config_for(d, **kw):
    return load_config(d / "config.json", **kw)


class TestExtract:
    def test_empty_dataset(self, tmp_path):
        res = cmd_extract(write(tmp_path / "d.jsonl", []), tmp_path / "q.jsonl", PipelineConfig())
        header, recs = read_stage(tmp_path / "q.jsonl", "extract")
        assert res.exit_code == 0 and recs == [] and header["seed"] == 0

    def test_two_samples(self, tmp_path):
        ds = write(tmp_path / "d.jsonl", [record("a", DOG_PARK), record("b", TOWER)])
        res = cmd_extract(ds, tmp_path / "q.jsonl", PipelineConfig())
        _, recs = read_stage(tmp_path / "q.jsonl", "extract")
        assert res.exit_code == 0 and res.ok == 2
        assert [len(r["queries"]) for r in recs] == [4, 1]
        assert recs[1]["queries"][0]["text"] == "Is the photo taken in Eiffel Tower?"

    def test_corrupt_sample_is_skipped(self, tmp_path, caplog):
        bad = dict(DOG_PARK, edges=[{"src": 0, "dst": 99, "relation": ""}])
        ds = write(tmp_path / "d.jsonl", [record("a", DOG_PARK), record("b", bad), record("c", TOWER)])
        res = cmd_extract(ds, tmp_path / "q.jsonl", PipelineConfig())
        _, recs = read_stage(tmp_path / "q.jsonl", "extract")
        assert [r["id"] for r in recs] == ["a", "c"]
        assert res.exit_code == 1 and len(res.failed) == 1 and "line 2" in res.failed[0]
        assert "99" in caplog.text

    def test_caption_must_match_graph(self, tmp_path):
        rec = record("a", DOG_PARK)
        rec["caption"] = "something else"
        samples, errors = read_dataset(write(tmp_path / "d.jsonl", [rec, record("a", TOWER), record("a", TOWER)]))
        assert [s.id for s in samples] == ["a"] and [n for n, _ in errors] == [1, 3]


class TestAnswer:
    def setup_dataset(self, tmp_path, oracle):
        ds = write(tmp_path / "d.jsonl", [record("a", DOG_PARK, "Real"), record("b", TOWER, "Fake")])
        cfg = PipelineConfig(oracle=oracle, cache_path=str(tmp_path / "cache.jsonl"))
        cmd_extract(ds, tmp_path / "q.jsonl", cfg)
        return cfg

    def test_answers_follow_fixture_and_rerun_is_byte_identical(self, tmp_path):
        fx = tmp_path / "fx.jsonl"
        texts = {"img/a.jpg": ["Is the photo about dog?", "In the photo, is dog brown?", "Is the photo taken in park?",
                               "Is the photo about dog run park?"],
                 "img/b.jpg": ["Is the photo taken in Eiffel Tower?"]}
        scores = iter([0.9, 0.2, 0.5, 0.49, 0.1])
        write(fx, [{"image": im, "text": t, "score": next(scores)} for im, ts in texts.items() for t in ts])
        cfg = self.setup_dataset(tmp_path, {"kind": "fixture", "path": str(fx)})
        res = cmd_answer(tmp_path / "q.jsonl", tmp_path / "a1.jsonl", cfg)
        _, recs = read_stage(tmp_path / "a1.jsonl", "answer")
        assert res.exit_code == 0
        assert [[a["answer"] for a in r["answers"]] for r in recs] == [["Yes", "No", "Yes", "No"], ["No"]]
        assert recs[0]["answers"][2]["raw_score"] == 0.5

        # scores changed behind the cache's back: a warm rerun must still report the cached ones
        write(fx, [{"image": im, "text": t, "score": 0.0} for im, ts in texts.items() for t in ts])
        cmd_answer(tmp_path / "q.jsonl", tmp_path / "a2.jsonl", cfg)
        assert (tmp_path / "a1.jsonl").read_bytes() == (tmp_path / "a2.jsonl").read_bytes()

    def test_unreachable_remote_is_reported_per_item(self, tmp_path):
        import socket

        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        cfg = self.setup_dataset(tmp_path, {"kind": "remote", "url": f"http://127.0.0.1:{port}/", "timeout": 0.5})
        res = cmd_answer(tmp_path / "q.jsonl", tmp_path / "a.jsonl", cfg)
        _, recs = read_stage(tmp_path / "a.jsonl", "answer")
        assert res.exit_code == 1 and res.failed == ["a", "b"]
        rows = [a for r in recs for a in r["answers"]]
        assert len(rows) == 5
        assert all(a["status"] == "error" and a["error"].startswith("BackendUnavailable") for a in rows)

    def test_requires_extract_stage_file(self, tmp_path):
        write(tmp_path / "x.jsonl", [{"format": "decontext.stage", "stage": "answer"}])
        with pytest.raises(StageError):
            cmd_answer(tmp_path / "x.jsonl", tmp_path / "a.jsonl", PipelineConfig())


class TestTrainEvaluate:
    def stages(self, d, cfg, w):
        cmd_extract(d / "dataset.jsonl", w / "q.jsonl", cfg)
        cmd_answer(w / "q.jsonl", w / "a.jsonl", cfg)

    def test_rerun_gives_identical_model(self, fixture20, tmp_path):
        cfg = config_for(fixture20, epochs=5)
        self.stages(fixture20, cfg, tmp_path)
        r1 = cmd_train(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m1.json", cfg)
        cmd_train(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m2.json", cfg)
        assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
        meta = json.loads((tmp_path / "m1.json").read_text())["meta"]
        assert meta["seed"] == 0 and len(meta["losses"]) == 5 and meta["config_hash"] == cfg.stage_hash("train")
        assert r1.outputs["train_accuracy"] >= 0.95

    def test_unlabeled_dataset_is_rejected_before_training(self, fixture20, tmp_path):
        cfg = config_for(fixture20)
        self.stages(fixture20, cfg, tmp_path)
        recs = [json.loads(l) for l in (fixture20 / "dataset.jsonl").read_text().splitlines()]
        for r in recs:
            r["label"] = None
        write(tmp_path / "unlabeled.jsonl", recs)
        with pytest.raises(StageError, match="no label"):
            cmd_train(tmp_path / "unlabeled.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", cfg)
        assert not (tmp_path / "m.json").exists()

    def test_evaluate_outputs(self, fixture20, tmp_path):
        cfg = config_for(fixture20)
        self.stages(fixture20, cfg, tmp_path)
        cmd_train(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", cfg)
        plain = cmd_evaluate(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", tmp_path / "e1", cfg)
        assert "hit_at_10" not in plain.outputs["metrics"]
        assert plain.outputs["metrics"]["accuracy"] == 1.0
        ann = cmd_evaluate(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", tmp_path / "e2", cfg,
                           fixture20 / "annotations.jsonl")
        assert ann.outputs["metrics"]["hit_at_10"] == 1.0
        doc = json.loads((tmp_path / "e2" / "metrics.json").read_text())
        assert doc["seed"] == 0 and doc["config_hash"] == cfg.stage_hash("train")
        _, reports = read_stage(tmp_path / "e2" / "reports.jsonl", "evaluate")
        assert len(reports) == doc["metrics"]["counts"]["n"]
        assert "ANSWER=" in (tmp_path / "e2" / "evidence.txt").read_text()

    def test_mismatched_hashes_are_refused(self, fixture20, tmp_path):
        cfg = config_for(fixture20, epochs=2)
        self.stages(fixture20, cfg, tmp_path)
        cmd_train(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", cfg)
        with pytest.raises(ConfigMismatch):
            cmd_evaluate(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", tmp_path / "e",
                         config_for(fixture20, epochs=2, tau_ans=0.6))
        with pytest.raises(StageError, match="trained under config"):
            cmd_evaluate(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m.json", tmp_path / "e",
                         config_for(fixture20, epochs=2, seed=1))
        with pytest.raises(ConfigMismatch):
            cmd_train(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", tmp_path / "m2.json",
                      config_for(fixture20, oracle={"kind": "fixture", "path": "other.jsonl"}))

    def test_model_required_with_ranker(self, fixture20, tmp_path):
        cfg = config_for(fixture20)
        self.stages(fixture20, cfg, tmp_path)
        with pytest.raises(StageError):
            cmd_evaluate(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", None, tmp_path / "e", cfg)
        res = cmd_evaluate(fixture20 / "dataset.jsonl", tmp_path / "a.jsonl", None, tmp_path / "e",
                           config_for(fixture20, use_ranker=False))
        assert res.exit_code == 0


class TestSynth:
    def test_byte_identical(self, tmp_path):
        synthesize(tmp_path / "a", 30, 0.1, seed=4, distractor_rate=0.3)
        synthesize(tmp_path / "b", 30, 0.1, seed=4, distractor_rate=0.3)
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == ["annotations.jsonl", "config.json", "dataset.jsonl", "embeddings.jsonl",
                         "oracle_fixture.jsonl", "planted.jsonl"]
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_noise_free_fixture_equals_planted_truth(self, tmp_path):
        synthesize(tmp_path, 40, 0.0, seed=2)
        planted = [json.loads(l) for l in (tmp_path / "planted.jsonl").read_text().splitlines()]
        assert all(p["planted"] == p["observed"] for p in planted)
        assert any("No" in p["planted"] for p in planted)

    def test_flip_fraction(self, tmp_path):
        summary = synthesize(tmp_path, 500, 0.1, seed=0)
        assert 0.08 <= summary.flip_fraction <= 0.12

    def test_dataset_shape(self, tmp_path):
        synthesize(tmp_path, 48, 0.0, seed=1)
        samples, errors = read_dataset(tmp_path / "dataset.jsonl")
        assert errors == [] and len(samples) == 48
        splits = {s: [x for x in samples if x.split == s] for s in ("train", "val", "test")}
        assert [len(v) for v in splits.values()] == [40, 4, 4]
        for part in splits.values():
            assert sum(x.label.value == "Real" for x in part) == len(part) / 2
        planted = {p["id"]: p for p in map(json.loads, (tmp_path / "planted.jsonl").read_text().splitlines())}
        anns = [json.loads(l) for l in (tmp_path / "annotations.jsonl").read_text().splitlines()]
        assert {a["id"] for a in anns} == {s.id for s in samples if s.label.value == "Fake"}
        for s in samples:
            if s.label.value == "Real":
                assert "No" not in planted[s.id]["planted"]

    def test_noise_range(self, tmp_path):
        with pytest.raises(ValueError):
            synthesize(tmp_path, 5, 0.5)


class TestConfig:
    def test_toml_and_relative_paths(self, tmp_path):
        (tmp_path / "c.toml").write_text('seed = 3\ntau_ans = 0.4\n[oracle]\nkind = "fixture"\npath = "fx.jsonl"\n')
        cfg = load_config(tmp_path / "c.toml", k=5)
        assert (cfg.seed, cfg.tau_ans, cfg.k) == (3, 0.4, 5)
        assert cfg.oracle["path"] == str(tmp_path / "fx.jsonl")

    def test_hash_ignores_machine_specific_paths(self, tmp_path):
        a = PipelineConfig(oracle={"kind": "fixture", "path": "/x/fx.jsonl"}, cache_path="/x/c", max_inflight=1)
        b = PipelineConfig(oracle={"kind": "fixture", "path": "/y/fx.jsonl"}, cache_path="/y/c", max_inflight=8)
        assert a.stage_hash("train") == b.stage_hash("train")
        assert a.stage_hash("answer") != PipelineConfig(tau_ans=0.7).stage_hash("answer")

    @pytest.mark.parametrize("bad", ['{"tau": 0.5}', '{"tau_ans": 2}', '{"k": 0}', "{not json"])
    def test_invalid(self, tmp_path, bad):
        (tmp_path / "c.json").write_text(bad)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.json")


class TestCli:
    def test_exit_codes(self, fixture20, tmp_path, capsys):
        cfg = str(fixture20 / "config.json")
        ds = str(fixture20 / "dataset.jsonl")
        assert main(["extract", ds, "--config", cfg, "--out", str(tmp_path / "q.jsonl")]) == 0
        assert main(["answer", str(tmp_path / "q.jsonl"), "--config", cfg, "--out", str(tmp_path / "a.jsonl")]) == 0
        assert main(["train", "--dataset", ds, "--answers", str(tmp_path / "a.jsonl"), "--config", cfg,
                     "--out", str(tmp_path / "m.json")]) == 0
        assert main(["evaluate", "--dataset", ds, "--answers", str(tmp_path / "a.jsonl"), "--model", str(tmp_path / "m.json"),
                     "--config", cfg, "--seed", "5", "--out", str(tmp_path / "e")]) == 2
        assert main(["evaluate", "--dataset", ds, "--answers", str(tmp_path / "a.jsonl"), "--no-ranker",
                     "--config", cfg, "--out", str(tmp_path / "e")]) == 0
        assert json.loads(capsys.readouterr().out)["counts"]["n"] == 2

        bad = tmp_path / "bad.jsonl"
        lines = (fixture20 / "dataset.jsonl").read_text().splitlines()
        bad.write_text(lines[0] + "\n{broken\n")
        assert main(["extract", str(bad), "--out", str(tmp_path / "q2.jsonl")]) == 1
        assert main(["extract", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "q3.jsonl")]) == 2

    def test_synth(self, tmp_path):
        assert main(["synth", "--size", "12", "--noise", "0.1", "--seed", "3", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "config.json").exists()
        assert main(["synth", "--size", "12", "--noise", "0.7", "--out", str(tmp_path / "x")]) == 2


def test_bundled_fixture_runs_fast(fixture20, tmp_path):
    start = time.perf_counter()
    metrics = run_pipeline(fixture20 / "dataset.jsonl", tmp_path / "run", config_for(fixture20),
                           fixture20 / "annotations.jsonl")
    assert time.perf_counter() - start < 10.0
    assert metrics["accuracy"] == 1.0 and metrics["auc_roc"] == 1.0


def test_newsclippings_converter(tmp_path):
    from decontext.pipeline.convert import convert_newsclippings

    (tmp_path / "ann.json").write_text(json.dumps({"annotations": [
        {"id": 1, "image_id": 1, "similarity_score": 1.0, "falsified": False, "source_dataset": 0},
        {"id": 1, "image_id": 2, "similarity_score": 0.7, "falsified": True, "source_dataset": 0},
        {"id": 9, "image_id": 2, "similarity_score": 0.7, "falsified": True, "source_dataset": 0},
    ]}))
    (tmp_path / "vn.json").write_text(json.dumps([
        {"id": 1, "caption": "The Eiffel Tower", "image_path": "./bbc/1.jpg"},
        {"id": 2, "caption": "A brown dog runs in the park", "image_path": "./bbc/2.jpg"},
    ]))
    graphs = {"The Eiffel Tower": TOWER, "A brown dog runs in the park": DOG_PARK}
    n = convert_newsclippings(tmp_path / "ann.json", tmp_path / "vn.json", graphs.__getitem__, "val", tmp_path / "d.jsonl")
    samples, errors = read_dataset(tmp_path / "d.jsonl")
    assert n == 2 and errors == []
    assert [(s.id, s.image, s.label.value, s.split) for s in samples] == [
        ("1-1", "./bbc/1.jpg", "Real", "val"), ("1-2", "./bbc/2.jpg", "Fake", "val")]
    assert samples[1].caption == "The Eiffel Tower"
