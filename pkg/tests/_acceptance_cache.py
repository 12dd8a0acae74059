"""Shared artifacts for the acceptance suite.

Training two 8,000-step runs takes ~20 minutes of CPU, so the corpus and
checkpoints are cached under .cache/acceptance keyed by a digest of every
config that feeds them. A stale or missing cache is rebuilt in place.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from stemflow.batching import Dataset
from stemflow.corpus import CorpusConfig, build_corpus
from stemflow.model import ModelConfig, init_params
from stemflow.training import TrainConfig, load_checkpoint, train

CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache" / "acceptance"

CORPUS_CONFIG = CorpusConfig(num_compositions=512, seed=7)
TRAIN_STEPS = 8000
TRAIN_SEED = 2024


def _train_configs() -> dict[str, TrainConfig]:
    return {
        "A": TrainConfig.from_setting("A", steps=TRAIN_STEPS, seed=TRAIN_SEED),
        "C": TrainConfig.from_setting("C", steps=TRAIN_STEPS, seed=TRAIN_SEED),
    }


def _cache_key() -> str:
    payload = {
        "corpus": vars(CORPUS_CONFIG),
        "train": {k: vars(v) for k, v in _train_configs().items()},
        "model": vars(ModelConfig(parameter_seed=TRAIN_SEED)),
        # digest of the initial parameter tables, so architecture and
        # initialization changes invalidate the cache even when the config
        # dataclass is unchanged
        "param_init": {
            k: hashlib.sha256(np.ascontiguousarray(v).tobytes()).hexdigest()[:12]
            for k, v in init_params(ModelConfig(parameter_seed=TRAIN_SEED)).items()
        },
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


def get_acceptance_corpus() -> Path:
    """Build (or reuse) just the corpus; cheap compared to training."""
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    manifest = CACHE_DIR / "corpus" / "manifest.jsonl"
    if manifest.exists():
        return manifest
    return build_corpus(CORPUS_CONFIG, CACHE_DIR / "corpus")


def get_acceptance_artifacts() -> dict:
    """Return {'manifest': Path, 'checkpoints': {'A': Path, 'C': Path},
    'train_minutes': {'A': float, 'C': float}}, building anything missing."""
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    meta_path = CACHE_DIR / "meta.json"
    key = _cache_key()
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        if meta.get("key") == key and all(Path(p).exists() for p in meta["paths"].values()):
            return {
                "manifest": Path(meta["paths"]["manifest"]),
                "checkpoints": {k: Path(meta["paths"][k]) for k in ("A", "C")},
                "train_minutes": meta["train_minutes"],
            }

    import time

    corpus_dir = CACHE_DIR / "corpus"
    manifest = build_corpus(CORPUS_CONFIG, corpus_dir)
    dataset = Dataset.load(manifest)
    checkpoints: dict[str, Path] = {}
    minutes: dict[str, float] = {}
    for setting, config in _train_configs().items():
        t0 = time.perf_counter()
        checkpoints[setting] = train(config, dataset, CACHE_DIR / f"run_{setting}")
        minutes[setting] = (time.perf_counter() - t0) / 60.0
    meta = {
        "key": key,
        "paths": {"manifest": str(manifest), "A": str(checkpoints["A"]), "C": str(checkpoints["C"])},
        "train_minutes": minutes,
    }
    meta_path.write_text(json.dumps(meta, indent=2))
    return {"manifest": manifest, "checkpoints": checkpoints, "train_minutes": minutes}


def load_params(setting: str):
    art = get_acceptance_artifacts()
    params, model_config, _ = load_checkpoint(art["checkpoints"][setting])
    return params, model_config


if __name__ == "__main__":
    art = get_acceptance_artifacts()
    print(json.dumps({k: str(v) for k, v in art["checkpoints"].items()}))
    print("train minutes:", art["train_minutes"])
