import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles helper

from leadtime.synth import SynthSpec, synthesize_corpus, write_corpus


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Six 60 s dialogues plus an experiment config: enough for a tiny
    train/evaluate round trip without being slow."""
    root = tmp_path_factory.mktemp("mini")
    records = synthesize_corpus(SynthSpec(n_dialogues=6, duration=60.0), seed=3)
    manifest = write_corpus(records, root / "corpus")
    ids = [r.id for r in records]
    config = {
        "seed": 11,
        "manifest": "corpus/manifest.json",
        "out_dir": "run",
        "splits": {"train": ids[:4], "val": ids[4:5], "test": ids[5:]},
        "model": {"feature_set": "RA", "hidden": 8, "T": 3, "delta_max": 2.0},
        "train": {"learning_rate": 3e-3, "batch_size": 4, "epochs": 1,
                  "n_train_segments": 8},
    }
    cfg_path = root / "exp.json"
    cfg_path.write_text(json.dumps(config, indent=1))
    return {"root": root, "manifest": manifest, "config": cfg_path,
            "ids": ids, "config_doc": config}
