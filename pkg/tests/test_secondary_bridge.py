"""End-to-end bridge integration: the node CLI serves the mock endpoint and
writes predictions; the evaluator scores them. Runs only when the frontend
bundle has been built (cd frontend && npm install && npm run build)."""

import json
import shutil
import subprocess
from pathlib import Path

import pytest

from cqkit.cli import main as cli_main
from cqkit.corpus import read_corpus
from cqkit.evaluate import evaluate_predictions, load_predictions
from cqkit.kg import SplitGraphs

REPO = Path(__file__).resolve().parent.parent
BRIDGE_CLI = REPO / "frontend" / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not BRIDGE_CLI.exists(),
    reason="frontend bundle not built (cd frontend && npm install && npm run build)",
)


@pytest.fixture(scope="module")
def built_pipeline(tmp_path_factory, toy_dir):
    out = tmp_path_factory.mktemp("bridge-pipeline")
    base = ["--dataset", str(toy_dir), "--out", str(out), "--seed", "31"]
    assert cli_main(["sample", *base, "--per-type", "2"]) == 0
    assert cli_main(["build", *base]) == 0
    return out


def start_server(mode, corpus=None):
    args = ["node", str(BRIDGE_CLI), "serve", "--mode", mode]
    if corpus:
        args += ["--corpus", str(corpus)]
    proc = subprocess.Popen(args, stdout=subprocess.PIPE, text=True)
    line = proc.stdout.readline().strip()
    assert line.startswith("LISTENING "), line
    return proc, int(line.split()[1])


def bridge_predict(endpoint, corpus, out, batch_size=8):
    subprocess.run(
        [
            "node",
            str(BRIDGE_CLI),
            "predict",
            "--endpoint",
            endpoint,
            "--corpus",
            str(corpus),
            "--out",
            str(out),
            "--batch-size",
            str(batch_size),
        ],
        check=True,
        capture_output=True,
    )


def test_echo_mock_scores_perfect(built_pipeline, toy_dir, tmp_path):
    corpus_path = built_pipeline / "corpus.jsonl"
    proc, port = start_server("echo", corpus_path)
    try:
        pred_path = tmp_path / "pred.jsonl"
        bridge_predict(f"http://127.0.0.1:{port}", corpus_path, pred_path)
        rows = read_corpus(corpus_path)
        predictions = load_predictions(pred_path)
        assert set(predictions) == {r["id"] for r in rows}  # id-complete
        graphs = SplitGraphs.load(toy_dir)
        report = evaluate_predictions(rows, predictions, graphs.train_valid_test)
        assert report.avg_p == 1.0 and report.avg_ood == 1.0 and report.avg_n == 1.0
    finally:
        proc.terminate()


def test_empty_mock_scores_zero(built_pipeline, toy_dir, tmp_path):
    corpus_path = built_pipeline / "corpus.jsonl"
    proc, port = start_server("empty")
    try:
        pred_path = tmp_path / "pred.jsonl"
        bridge_predict(f"http://127.0.0.1:{port}", corpus_path, pred_path)
        rows = read_corpus(corpus_path)
        graphs = SplitGraphs.load(toy_dir)
        report = evaluate_predictions(rows, load_predictions(pred_path), graphs.train_valid_test)
        assert report.avg_p == 0.0 and report.avg_n == 0.0
        assert report.parse_failures == report.samples
    finally:
        proc.terminate()


def test_train_consumes_stages_in_order(built_pipeline, tmp_path):
    stages = ",".join(str(built_pipeline / f"stage{k}.jsonl") for k in (1, 2, 3))
    log_path = tmp_path / "train_log.json"
    subprocess.run(
        ["node", str(BRIDGE_CLI), "train", "--stages", stages, "--log", str(log_path)],
        check=True,
        capture_output=True,
    )
    log = json.loads(log_path.read_text())
    assert [s["stage"] for s in log["stages"]] == [1, 2, 3]
    assert all(s["losses"] for s in log["stages"])
    assert log["checkpoint"].startswith("ckpt-")


def test_train_missing_stage_fails_fast(built_pipeline, tmp_path):
    stages = ",".join(
        [str(built_pipeline / "stage1.jsonl"), str(tmp_path / "ghost.jsonl")]
    )
    result = subprocess.run(
        ["node", str(BRIDGE_CLI), "train", "--stages", stages],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 1
    assert "missing stage file" in result.stderr
