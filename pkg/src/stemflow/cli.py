"""Command-line entry points: corpus building, training, generation,
evaluation, and the HTTP service."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import codec, wavio
from .batching import Dataset
from .corpus import CorpusConfig, DEFAULT_CLIP_FRAMES, NUM_STYLES, STEM_TYPES, TEMPO_GRID, build_corpus
from .evaluation import format_report, held_out_specs, run_eval_suite
from .sampling import SampleConfig, StemRequest, run_workflow
from .training import TrainConfig, load_checkpoint, train


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise click.UsageError("config file must contain a JSON object")
    return data


def _merge(file_opts: dict, **flag_opts) -> dict:
    """Config file values, overridden by any flag the user actually passed."""
    merged = dict(file_opts)
    merged.update({k: v for k, v in flag_opts.items() if v is not None})
    return merged


@click.group()
def main() -> None:
    """Toy multi-stem music generation with rectified flow."""


@main.group()
def corpus() -> None:
    """Procedural corpus commands."""


@corpus.command("build")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--num", "num_compositions", default=512, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--frames", default=DEFAULT_CLIP_FRAMES, show_default=True)
def corpus_build(out_dir: str, num_compositions: int, seed: int, frames: int) -> None:
    """Synthesize a corpus and write latents plus a JSONL manifest."""
    cfg = CorpusConfig(num_compositions=num_compositions, seed=seed, clip_frames=frames)
    manifest = build_corpus(cfg, out_dir)
    click.echo(f"wrote {num_compositions} compositions, manifest at {manifest}")


@main.command("train")
@click.option("--setting", type=click.Choice(["A", "B", "C"]), default="C", show_default=True)
@click.option("--corpus", "manifest", required=True, type=click.Path(exists=True), help="Corpus manifest (JSONL).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON config; flags override.")
@click.option("--resume", "resume_from", type=click.Path(exists=True), default=None, help="Resume from a saved train state.")
def train_cmd(setting, manifest, out_dir, steps, seed, batch_size, lr, config_path, resume_from) -> None:
    """Train the velocity model under ablation setting A, B, or C."""
    opts = _merge(_load_config_file(config_path), steps=steps, seed=seed, batch_size=batch_size, learning_rate=lr)
    config = TrainConfig.from_setting(setting, **opts)
    dataset = Dataset.load(manifest)
    final = train(config, dataset, out_dir, resume_from=resume_from)
    click.echo(f"final checkpoint: {final}")


def _parse_stems(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise click.UsageError("--stems must name at least one stem type")
    bad = [n for n in names if n not in STEM_TYPES]
    if bad:
        raise click.UsageError(f"unknown stem types {bad}; choose from {list(STEM_TYPES)}")
    return names


@main.command("generate")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["k_pass", "two_pass", "one_pass"]), default="one_pass", show_default=True)
@click.option("--stems", "stems_text", required=True, help="Comma-separated stem types, e.g. drums,bass,keys.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--style", "style_token", type=int, default=None)
@click.option("--tempo", "tempo_bpm", type=int, default=None)
@click.option("--steps", "num_steps", type=int, default=None)
@click.option("--cfg-scale", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--frames", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON config; flags override.")
def generate_cmd(checkpoint, mode, stems_text, out_dir, style_token, tempo_bpm, num_steps, cfg_scale, seed, frames, config_path) -> None:
    """Generate stems plus their normalized mix, with a timing report."""
    opts = _merge(
        _load_config_file(config_path),
        style_token=style_token,
        tempo_bpm=tempo_bpm,
        num_steps=num_steps,
        cfg_scale=cfg_scale,
        seed=seed,
        frames=frames,
    )
    style = int(opts.get("style_token", 0))
    tempo = int(opts.get("tempo_bpm", 120))
    if tempo not in TEMPO_GRID:
        raise click.UsageError(f"tempo must be one of {list(TEMPO_GRID)}")
    if not (0 <= style < NUM_STYLES):
        raise click.UsageError(f"style must be in [0, {NUM_STYLES})")
    clip_frames = int(opts.get("frames", DEFAULT_CLIP_FRAMES))
    sample_config = SampleConfig(
        num_steps=int(opts.get("num_steps", 32)),
        cfg_scale=float(opts.get("cfg_scale", 3.0)),
        seed=int(opts.get("seed", 0)),
    )

    params, model_config, _ = load_checkpoint(checkpoint)
    names = _parse_stems(stems_text)
    requests = [StemRequest(stem_type=n, style_token=style, tempo_bpm=tempo) for n in names]
    rng = np.random.default_rng(sample_config.seed)
    latents, report = run_workflow(params, model_config, requests, mode, sample_config, rng, clip_frames)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stems = [codec.decode(lat) for lat in latents]
    for name, samples in zip(names, stems):
        wavio.write_wav(out / f"{name}.wav", samples)
    wavio.write_wav(out / "mix.wav", codec.normalize_mix(codec.mix(stems)))
    report.write(out / "workflow_report.json")
    click.echo(f"{mode}: {report.wall_time_ms:.1f} ms for {len(names)} stems; outputs in {out}")


@main.command("eval")
@click.option(
    "--checkpoints",
    required=True,
    help="Comma-separated setting=path pairs, e.g. A=runs/a/checkpoint_final.sfck,C=runs/c/checkpoint_final.sfck.",
)
@click.option("--num-specs", default=64, show_default=True, help="Held-out compositions per cell.")
@click.option("--seed", default=1234, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Also write the report to a file.")
def eval_cmd(checkpoints: str, num_specs: int, seed: int, out_path: str | None) -> None:
    """Metric report over (training setting x inference noise-sharing) cells."""
    loaded = {}
    for pair in checkpoints.split(","):
        if "=" not in pair:
            raise click.UsageError("expected setting=path pairs")
        label, path = pair.split("=", 1)
        params, model_config, _ = load_checkpoint(path.strip())
        loaded[label.strip()] = (params, model_config)
    specs = held_out_specs(num_specs, seed=seed, n_stems=4)
    cells, _reports = run_eval_suite(loaded, specs, seed=seed)
    text = format_report(cells)
    click.echo(text)
    if out_path is not None:
        Path(out_path).write_text(text + "\n")


@main.command("serve")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), default=None, help="Session store directory (env STEMFLOW_DATA_DIR).")
def serve_cmd(checkpoint: str, port: int, host: str, data_dir: str | None) -> None:
    """Run the session-based generation service."""
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint, data_dir=data_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
