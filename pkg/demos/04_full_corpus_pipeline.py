"""The full corpus workflow, end to end, through the command line.

This demo drives the same five subcommands you would run by hand:

    nbestslu import <data-root> <flist> train.ds --config run.cfg
    nbestslu train  train.ds checkpoint/ --config run.cfg
    nbestslu cv     train.ds cv-reports/ --config run.cfg
    nbestslu decode checkpoint/ test.ds test.frames
    nbestslu eval   test.frames test.ds --out report

With the real corpus this takes a few CPU-hours per configuration.  When
the environment variables below are unset, the demo falls back to a tiny
generated corpus so the mechanics can be watched in seconds:

    DSTC2_DATA          directory with the call directories
    DSTC2_TRAIN_FLIST   list of training calls (train + dev combined)
    DSTC2_TEST_FLIST    list of test calls
    GLOVE_PATH          100-d pretrained vector text file

Run:  python3 demos/04_full_corpus_pipeline.py
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from nbestslu.cli import main

env = {k: os.environ.get(k) for k in
       ("DSTC2_DATA", "DSTC2_TRAIN_FLIST", "DSTC2_TEST_FLIST", "GLOVE_PATH")}
have_corpus = all(env.values())

workdir = Path(tempfile.mkdtemp(prefix="nbestslu-demo-"))
print(f"working directory: {workdir}")


def write_toy_corpus(root: Path) -> Path:
    """A miniature corpus in the call-directory layout."""
    rng = np.random.default_rng(3)
    calls = []
    for d in range(6):
        call = f"S0/voip-demo-{d:03d}"
        call_dir = root / call
        call_dir.mkdir(parents=True)
        price = ("cheap", "moderate", "expensive")[int(rng.integers(3))]
        area = ("north", "south")[int(rng.integers(2))]
        log_turns = [
            {"turn-index": 0,
             "output": {"dialog-acts": [{"act": "welcomemsg", "slots": []}]},
             "input": {"live": {"asr-hyps": [
                 {"asr-hyp": f"i want a {price} restaurant in the {area}", "score": 0.9},
                 {"asr-hyp": f"i want a {price} restaurant", "score": 0.1}]}}},
            {"turn-index": 1,
             "output": {"dialog-acts": [{"act": "offer", "slots": [["name", "gardenia"]]}]},
             "input": {"live": {"asr-hyps": [{"asr-hyp": "thank you good bye", "score": 1.0}]}}},
        ]
        label_turns = [
            {"turn-index": 0, "semantics": {"json": [
                {"act": "inform", "slots": [["pricerange", price]]},
                {"act": "inform", "slots": [["area", area]]}]}},
            {"turn-index": 1, "semantics": {"json": [{"act": "bye", "slots": []}]}},
        ]
        (call_dir / "log.json").write_text(json.dumps({"session-id": f"voip-demo-{d:03d}", "turns": log_turns}))
        (call_dir / "label.json").write_text(json.dumps({"session-id": f"voip-demo-{d:03d}", "turns": label_turns}))
        calls.append(call)
    flist = root / "toy.flist"
    flist.write_text("\n".join(calls) + "\n")
    return flist


def write_toy_vectors(path: Path) -> Path:
    rng = np.random.default_rng(4)
    words = ("i want a cheap moderate expensive restaurant in the north south "
             "thank you good bye gardenia offer welcomemsg inform name pricerange area").split()
    with open(path, "w") as handle:
        for word in sorted(set(words)):
            vec = " ".join(repr(float(x)) for x in rng.uniform(-0.5, 0.5, 10))
            handle.write(f"{word} {vec}\n")
    return path


if have_corpus:
    data_root, train_flist, test_flist = env["DSTC2_DATA"], env["DSTC2_TRAIN_FLIST"], env["DSTC2_TEST_FLIST"]
    config_lines = [f"embeddings = {env['GLOVE_PATH']}"]
else:
    print("corpus environment not set; using a generated toy corpus instead\n")
    data_root = workdir / "corpus"
    train_flist = test_flist = write_toy_corpus(data_root)
    vectors = write_toy_vectors(workdir / "vectors.txt")
    config_lines = [
        f"embeddings = {vectors}",
        "embedding_dim = 10",
        "filter_windows = 2,3",
        "filters_per_window = 4",
        "hidden_size = 8",
        "batch_size = 6",
        "patience = 0",
        "max_epochs = 15",
    ]

config = workdir / "run.cfg"
config.write_text("model = cnn_lstm_w4\nseed = 2016\n" + "\n".join(config_lines) + "\n")

steps = [
    ["import", str(data_root), str(train_flist), str(workdir / "train.ds"), "--config", str(config)],
    ["import", str(data_root), str(test_flist), str(workdir / "test.ds"), "--config", str(config)],
    ["train", str(workdir / "train.ds"), str(workdir / "checkpoint"), "--config", str(config)],
    ["decode", str(workdir / "checkpoint"), str(workdir / "test.ds"), str(workdir / "test.frames")],
    ["eval", str(workdir / "test.frames"), str(workdir / "test.ds"), "--out", str(workdir / "report")],
]

for argv in steps:
    print(f"\n$ nbestslu {' '.join(argv)}")
    status = main(argv)
    if status != 0:
        raise SystemExit(f"step failed with exit code {status}")

print(f"\nartifacts left in {workdir}:")
for path in sorted(workdir.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(workdir)}")
