"""Command-line entry point: every pipeline stage as a subcommand.

Hyperparameters are layered: built-in defaults, then a config file
(flat `section.key = value` lines), then explicit flags. The effective
config is dumped beside every run's outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import kvdoc
from .corpus import PhonemeInventory, load_alignments, load_manifest
from .errors import StyleVCError
from .features import (
    FeatureConfig,
    compute_log_mel,
    extract_f0,
    interpolate_f0,
    read_wav,
    utterance_mvn,
)
from .training import TrainSchedule


def _config_sections(path: str | None) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    if path:
        for key, value in kvdoc.read(path).items():
            if "." not in key:
                raise StyleVCError(f"config key {key!r} needs a section prefix")
            section, name = key.split(".", 1)
            sections.setdefault(section, {})[name] = value
    return sections


def _feature_config(sections) -> FeatureConfig:
    cfg = kvdoc.dataclass_from_kv(FeatureConfig, sections.get("features", {}))
    cfg.validate()
    return cfg


def _schedule(sections, args) -> TrainSchedule:
    pairs = dict(sections.get("schedule", {}))
    if getattr(args, "steps", None) is not None:
        pairs["steps"] = str(args.steps)
    if getattr(args, "batch_size", None) is not None:
        pairs["batch_size"] = str(args.batch_size)
    if getattr(args, "learning_rate", None) is not None:
        pairs["learning_rate"] = str(args.learning_rate)
    if "steps" not in pairs:
        raise StyleVCError("training steps required (--steps or schedule.steps)")
    return kvdoc.dataclass_from_kv(TrainSchedule, pairs)


def _dump_effective(out_dir: Path, named_configs: dict[str, dict]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    flat = {}
    for section, pairs in named_configs.items():
        for key, value in pairs.items():
            flat[f"{section}.{key}"] = value
    kvdoc.write(out_dir / "effective.cfg", flat)


def _load_asr_dataset(manifest_path, inventory, cfg):
    records = load_manifest(manifest_path, inventory)
    dataset = []
    for r in records:
        wav = read_wav(r.audio_path, target_rate=cfg.sample_rate)
        mel = utterance_mvn(compute_log_mel(wav, cfg))
        dataset.append((mel, inventory.encode(r.phonemes)))
    return records, dataset


def _load_tts_dataset(manifest_path, inventory, cfg, alignments_path):
    records = load_manifest(manifest_path, inventory)
    mels = {}
    for r in records:
        wav = read_wav(r.audio_path, target_rate=cfg.sample_rate)
        mels[r.id] = compute_log_mel(wav, cfg)
    table = load_alignments(alignments_path, records,
                            {utt: mel.n_frames for utt, mel in mels.items()})
    speakers = sorted({r.speaker for r in records})
    dataset = []
    for r in records:
        if r.id not in table:
            raise StyleVCError(f"no alignment for utterance {r.id}")
        dataset.append((mels[r.id], inventory.encode(r.phonemes),
                        table[r.id], speakers.index(r.speaker)))
    return records, dataset, speakers, table


def _resolve_speaker(value: str, speakers: list[str]) -> int:
    if value in speakers:
        return speakers.index(value)
    try:
        idx = int(value)
    except ValueError:
        raise StyleVCError(f"unknown speaker {value!r}; table has {speakers}") from None
    if not 0 <= idx < len(speakers):
        raise StyleVCError(f"speaker index {idx} outside table of {len(speakers)}")
    return idx


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract_features(args) -> int:
    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    inventory = PhonemeInventory.load(args.inventory)
    records = load_manifest(args.manifest, inventory)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .conversion import write_mel

    for r in records:
        wav = read_wav(r.audio_path, target_rate=cfg.sample_rate)
        mel = compute_log_mel(wav, cfg)
        write_mel(out_dir / f"{r.id}.mel", mel)
    _dump_effective(out_dir, {"features": kvdoc.dataclass_to_kv(cfg)})
    print(f"wrote {len(records)} mel files to {out_dir}", file=sys.stderr)
    return 0


def cmd_align(args) -> int:
    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    inventory = PhonemeInventory.load(args.inventory)
    from .recognizer import RecognizerCheckpoint, ctc_force_align

    ckpt = RecognizerCheckpoint.load(args.checkpoint, inventory)
    records = load_manifest(args.manifest, inventory)
    with open(args.out, "w", encoding="utf-8") as f:
        for r in records:
            wav = read_wav(r.audio_path, target_rate=cfg.sample_rate)
            mel = utterance_mvn(compute_log_mel(wav, cfg))
            durations = ctc_force_align(mel, inventory.encode(r.phonemes), ckpt)
            f.write(r.id + " " + " ".join(str(d) for d in durations) + "\n")
    print(f"aligned {len(records)} utterances -> {args.out}", file=sys.stderr)
    return 0


def cmd_train_asr(args) -> int:
    import torch

    from .recognizer import RecognizerConfig, train_recognizer

    torch.manual_seed(args.seed)
    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    model_cfg = RecognizerConfig.from_kv(
        {**{"n_mels": str(cfg.n_mels)}, **sections.get("recognizer", {})}
    )
    schedule = _schedule(sections, args)
    inventory = PhonemeInventory.load(args.inventory)
    _, dataset = _load_asr_dataset(args.manifest, inventory, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = train_recognizer(dataset, model_cfg, schedule, inventory,
                            seed=args.seed, log_path=out_dir / "train_log.csv")
    ckpt.save(out_dir)
    _dump_effective(out_dir, {
        "features": kvdoc.dataclass_to_kv(cfg),
        "recognizer": model_cfg.to_kv(),
        "schedule": schedule.to_kv(),
    })
    print(f"recognizer checkpoint written to {out_dir}", file=sys.stderr)
    return 0


def cmd_train_tts(args) -> int:
    import torch

    from .generator import GeneratorConfig, train_generator

    torch.manual_seed(args.seed)
    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    inventory = PhonemeInventory.load(args.inventory)
    records, dataset, speakers, _ = _load_tts_dataset(
        args.manifest, inventory, cfg, args.alignments
    )
    model_cfg = GeneratorConfig.from_kv({
        **{"n_mels": str(cfg.n_mels), "n_speakers": str(len(speakers)),
           "frame_shift_ms": str(cfg.frame_shift_ms),
           "frame_length_ms": str(cfg.frame_length_ms)},
        **sections.get("generator", {}),
    })
    schedule = _schedule(sections, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = train_generator(dataset, model_cfg, schedule, inventory, speakers,
                           seed=args.seed, log_path=out_dir / "train_log.csv")
    ckpt.save(out_dir)
    _dump_effective(out_dir, {
        "features": kvdoc.dataclass_to_kv(cfg),
        "generator": model_cfg.to_kv(),
        "schedule": schedule.to_kv(),
    })
    print(f"generator checkpoint written to {out_dir}", file=sys.stderr)
    return 0


def cmd_adapt(args) -> int:
    import torch

    from .generator import GeneratorCheckpoint, adapt_generator

    torch.manual_seed(args.seed)
    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    inventory = PhonemeInventory.load(args.inventory)
    ckpt = GeneratorCheckpoint.load(args.checkpoint, inventory)
    records = load_manifest(args.manifest, inventory)
    mels = {}
    for r in records:
        wav = read_wav(r.audio_path, target_rate=cfg.sample_rate)
        mels[r.id] = compute_log_mel(wav, cfg)
    table = load_alignments(args.alignments, records,
                            {utt: mel.n_frames for utt, mel in mels.items()})
    target_data = [
        (mels[r.id], inventory.encode(r.phonemes), table[r.id])
        for r in records if r.speaker == args.speaker
    ]
    if not target_data:
        raise StyleVCError(f"manifest has no utterances for speaker {args.speaker!r}")
    schedule = _schedule(sections, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    adapted = adapt_generator(ckpt, target_data, args.speaker, schedule,
                              seed=args.seed, log_path=out_dir / "adapt_log.csv")
    adapted.save(out_dir)
    _dump_effective(out_dir, {
        "features": kvdoc.dataclass_to_kv(cfg),
        "generator": adapted.config.to_kv(),
        "schedule": schedule.to_kv(),
    })
    print(f"adapted checkpoint written to {out_dir}", file=sys.stderr)
    return 0


def cmd_convert(args) -> int:
    from .conversion import convert, write_mel
    from .features import write_wav
    from .generator import GeneratorCheckpoint
    from .recognizer import RecognizerCheckpoint

    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    rec_ckpt = RecognizerCheckpoint.load(args.asr)
    gen_ckpt = GeneratorCheckpoint.load(args.tts)
    speaker = _resolve_speaker(args.speaker, gen_ckpt.speakers)
    source = read_wav(args.source, target_rate=cfg.sample_rate)
    reference = read_wav(args.reference, target_rate=cfg.sample_rate)
    result = convert(source, reference, speaker, rec_ckpt, gen_ckpt, cfg,
                     beam=args.beam)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.source).stem
    write_wav(out_dir / f"{stem}_converted.wav", result.wav)
    write_mel(out_dir / f"{stem}_converted.mel", result.mel)
    kvdoc.write(out_dir / f"{stem}_converted.meta", {
        "phonemes": " ".join(result.phoneme_symbols),
        "durations": " ".join(str(d) for d in result.durations),
        "speaker": gen_ckpt.speakers[speaker],
        "reference": str(args.reference),
        "timed_out": result.timed_out,
    })
    _dump_effective(out_dir, {"features": kvdoc.dataclass_to_kv(cfg)})
    print(f"converted {args.source} -> {out_dir / (stem + '_converted.wav')}",
          file=sys.stderr)
    return 0


def cmd_batch_convert(args) -> int:
    from .conversion import batch_convert
    from .generator import GeneratorCheckpoint
    from .recognizer import RecognizerCheckpoint

    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    rec_ckpt = RecognizerCheckpoint.load(args.asr)
    gen_ckpt = GeneratorCheckpoint.load(args.tts)
    inventory = gen_ckpt.inventory
    records = load_manifest(args.manifest, inventory)
    speaker = _resolve_speaker(args.speaker, gen_ckpt.speakers)
    report = batch_convert(records, args.reference, speaker, rec_ckpt, gen_ckpt,
                           cfg, args.out_dir, beam=args.beam)
    _dump_effective(Path(args.out_dir), {"features": kvdoc.dataclass_to_kv(cfg)})
    failed = [r for r in report if r.status != "ok"]
    print(f"{len(report) - len(failed)} converted, {len(failed)} failed",
          file=sys.stderr)
    return 0


def _read_sequences(path: str) -> dict[str, tuple[str, ...]]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise StyleVCError(f"{path}:{lineno}: expected id<TAB>symbols")
        out[parts[0]] = tuple(parts[1].split())
    return out


def cmd_eval_per(args) -> int:
    from .evaluation import compute_per, corpus_per, write_per_rows

    hyp = _read_sequences(args.hyp)
    ref = _read_sequences(args.ref)
    pooled = corpus_per(hyp, ref)
    if args.out:
        rows = {utt: compute_per(hyp[utt], ref[utt]) for utt in sorted(ref)}
        write_per_rows(args.out, rows)
    print(f"PER {pooled.per:.1f} (Sub {pooled.sub_rate:.1f} Del {pooled.del_rate:.1f} "
          f"Ins {pooled.ins_rate:.1f}) over {pooled.ref_len} reference phones")
    return 0


def cmd_plot_f0(args) -> int:
    from .evaluation import plot_f0_overlay

    sections = _config_sections(args.config)
    cfg = _feature_config(sections)
    contours = []
    for item in args.wav:
        name, _, path = item.partition("=")
        if not path:
            raise StyleVCError(f"--wav expects label=path, got {item!r}")
        wav = read_wav(path, target_rate=cfg.sample_rate)
        contours.append((name, interpolate_f0(extract_f0(wav, cfg))))
    plot_f0_overlay(contours, args.out)
    print(f"wrote {args.out} and companion CSV", file=sys.stderr)
    return 0


def cmd_serve_tests(args) -> int:
    import uvicorn

    from .listening_service import ListeningService, create_app

    service = ListeningService(args.data_dir, seed=args.seed)
    app = create_app(service, webapp_dir=args.webapp_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_make_toy_corpus(args) -> int:
    from .toydata import make_toy_corpus

    records, _, _, _ = make_toy_corpus(args.out_dir, n_utterances=args.utterances,
                                       seed=args.seed)
    print(f"wrote {len(records)} synthetic utterances to {args.out_dir}",
          file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylevc",
        description="Style-transferable voice conversion toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        if config:
            p.add_argument("--config", help="flat section.key config file")

    p = sub.add_parser("extract-features", help="waveforms to mel matrices")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--inventory", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_extract_features)

    p = sub.add_parser("align", help="CTC forced alignment over a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--inventory", required=True)
    p.add_argument("--checkpoint", required=True, help="recognizer checkpoint dir")
    p.add_argument("--out", required=True, help="alignment file to write")
    p.set_defaults(fn=cmd_align)

    for name, fn, extra in (
        ("train-asr", cmd_train_asr, False),
        ("train-tts", cmd_train_tts, True),
    ):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a manifest")
        common(p)
        p.add_argument("--manifest", required=True)
        p.add_argument("--inventory", required=True)
        if extra:
            p.add_argument("--alignments", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--steps", type=int, help="training steps")
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.set_defaults(fn=fn)

    p = sub.add_parser("adapt", help="fine-tune the generator on one speaker")
    common(p)
    p.add_argument("--checkpoint", required=True, help="generator checkpoint dir")
    p.add_argument("--manifest", required=True)
    p.add_argument("--inventory", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("convert", help="convert one utterance")
    common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--reference", required=True,
                   help="style reference WAV; pass the source for style transfer")
    p.add_argument("--speaker", required=True, help="target speaker name or index")
    p.add_argument("--asr", required=True, help="recognizer checkpoint dir")
    p.add_argument("--tts", required=True, help="generator checkpoint dir")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--beam", type=int, default=4)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("batch-convert", help="convert every manifest utterance")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--reference", required=True,
                   help="'source' or a fixed reference WAV path")
    p.add_argument("--speaker", required=True)
    p.add_argument("--asr", required=True)
    p.add_argument("--tts", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--beam", type=int, default=4)
    p.set_defaults(fn=cmd_batch_convert)

    p = sub.add_parser("eval-per", help="phone error rate of hyp vs ref")
    common(p, config=False)
    p.add_argument("--hyp", required=True, help="TSV: id<TAB>space-separated symbols")
    p.add_argument("--ref", required=True)
    p.add_argument("--out", help="per-utterance CSV")
    p.set_defaults(fn=cmd_eval_per)

    p = sub.add_parser("plot-f0", help="overlay interpolated F0 contours")
    common(p)
    p.add_argument("--wav", action="append", required=True,
                   help="label=path, repeatable")
    p.add_argument("--out", required=True, help="SVG output path")
    p.set_defaults(fn=cmd_plot_f0)

    p = sub.add_parser("serve-tests", help="run the listening-test service")
    common(p, config=False)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--webapp-dir", help="static frontend to serve at /")
    p.set_defaults(fn=cmd_serve_tests)

    p = sub.add_parser("make-toy-corpus", help="synthesize a small demo corpus")
    common(p, config=False)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--utterances", type=int, default=20)
    p.set_defaults(fn=cmd_make_toy_corpus)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StyleVCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
