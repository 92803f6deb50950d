"""Command-line interface.

Options resolve as: command-line flag, then the ``--config`` TOML file
(top-level keys for global options, ``[align]`` / ``[toy.train]`` style
tables for subcommands, keys spelled like the flag with ``_`` or ``-``),
then the built-in default.

Exit codes: 0 success, 1 a check command found a failure (``toy gradcheck``
above tolerance), 2 unreadable input, 3 input violating a contract,
4 internal error or training divergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, schemas
from .aligner import AlignParams, align_notes, read_match_tsv, write_match_tsv
from .analysis import (
    MistakeReport,
    aggregate_counts,
    derive_mistakes,
    f_align,
    metrics_report,
    mistake_metrics,
    transcription_f1,
)
from .augment import (
    modulate_performance,
    modulate_score,
    performance_modulation_truth,
    repeat_truth,
    score_modulation_truth,
    simulate_repeats,
)
from .errors import ParseError, PerfAlignError
from .perf_ir import PerfNote, dump_notes_json, load_notes_json, parse_smf
from .score_ir import ScoreIR, ScoreNote, lossiness_report, parse_musicxml, to_abc_interleaved, unfold_repeats
from .tokenizer import MATCH, check_step, decode, encode, from_bytes, from_json, to_bytes, to_json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


# ---- IO helpers -------------------------------------------------------------

def _read_text(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def load_score(path) -> ScoreIR:
    if path.endswith(".json"):
        score = ScoreIR.from_dict(_read_json(path))
        return score.validate()
    return parse_musicxml(_read_text(path))


def load_perf(path, warnings=None) -> list:
    if path.lower().endswith((".mid", ".midi", ".smf")):
        with open(path, "rb") as fh:
            return parse_smf(fh.read(), warnings)
    return load_notes_json(_read_text(path))


def load_steps(path):
    if path.endswith(".json"):
        return from_json(_read_json(path))
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def load_mistakes(path) -> MistakeReport:
    if path.endswith(".json"):
        d = _read_json(path)
        schemas.check(d, schemas.MISTAKES, path)
        return MistakeReport(
            correct=[(PerfNote(**c["perf"]), ScoreNote.from_dict(c["score"]), int(c["pass"])) for c in d["correct"]],
            extra=[PerfNote(**p) for p in d["extra"]],
            missed=[(ScoreNote.from_dict(m["score"]), int(m["pass"])) for m in d["missed"]],
        )
    return derive_mistakes(read_match_tsv(_read_text(path)))


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _write(path, data, mode="w"):
    if path in (None, "-"):
        sys.stdout.write(data if isinstance(data, str) else data.decode("latin-1"))
        return
    _ensure_parent(path)
    with open(path, mode, **({} if "b" in mode else {"encoding": "utf-8"})) as fh:
        fh.write(data)


def write_json(path, obj: dict, schema, prov: dict | None):
    if prov is not None:
        obj = {**obj, "provenance": prov}
        schemas.check(prov, schemas.PROVENANCE, "provenance")
    schemas.check(obj, schema, path or "stdout")
    _write(path, json.dumps(obj, indent=1, sort_keys=False) + "\n")


def write_meta(path, prov: dict, extra=None):
    """Sidecar ``<path>.meta.json`` for formats without room for a header."""
    if path in (None, "-"):
        return
    write_json(f"{path}.meta.json", {**(extra or {})}, {"type": "object"}, prov)


def write_notes(path, notes, prov, extra=None):
    for n in notes:
        schemas.check(n.to_dict(), schemas.PERF_NOTE, path or "stdout")
    _write(path, dump_notes_json(notes))
    write_meta(path, prov, extra)


def _indexed(records):
    """Give decoded records running perf/score indices."""
    out, pi, si = [], 0, 0
    for r in records:
        out.append(replace(r, perf_index=pi if r.perf_note is not None else -1,
                           score_index=si if r.score_note is not None else -1))
        pi += r.perf_note is not None
        si += r.score_note is not None
    return out


def write_tsv(path, records, prov):
    text = write_match_tsv(records)
    for row in read_match_tsv(text):
        schemas.check({"perf_index": row.perf_index, "score_linear_index": row.score_index, "op": row.op,
                       "repeat_flag": int(row.repeat_flag), "score_pass": row.score_pass}, schemas.MATCH_ROW,
                      path or "stdout")
    header = "# " + json.dumps(prov, sort_keys=True) + "\n" if prov is not None else ""
    _write(path, header + text)


def _pmap(fn, items, workers: int):
    """Ordered map; output order never depends on the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _say(args, msg, stderr=False):
    if not args.quiet:
        print(msg, file=sys.stderr if stderr else sys.stdout)


def _warn(args, warnings):
    if not args.quiet:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)


# ---- option handling --------------------------------------------------------

class _Spec:
    """Collects per-subcommand option defaults so config values can fill gaps."""

    def __init__(self, parser, path):
        self.parser = parser
        self.defaults = {}
        parser.set_defaults(_path=path, _defaults=self.defaults)

    def opt(self, *flags, default=None, **kw):
        action = self.parser.add_argument(*flags, default=None, **kw)
        self.defaults[action.dest] = default
        return self

    def arg(self, *a, **kw):
        self.parser.add_argument(*a, **kw)
        return self


def _config_section(config: dict, path: str) -> dict:
    node = config
    for part in path.split("."):
        node = node.get(part, {}) if isinstance(node, dict) else {}
    return node if isinstance(node, dict) else {}


def _lookup(section: dict, dest: str):
    for key in (dest, dest.replace("_", "-")):
        if key in section:
            return True, section[key]
    return False, None


def resolve(args) -> dict:
    """Fill unset options from the config file, then defaults. Returns the
    resolved option dict recorded in provenance headers."""
    config = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                config = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{args.config}: {exc}") from None
    section = _config_section(config, args._path)
    for dest, default in {**GLOBAL_DEFAULTS, **args._defaults}.items():
        if getattr(args, dest, None) is None:
            found, value = _lookup(section, dest)
            if not found and dest in GLOBAL_DEFAULTS:
                found, value = _lookup(config, dest)
            setattr(args, dest, value if found else default)
    resolved = {}
    for dest in list(args._defaults) + ["seed", "workers"]:
        value = getattr(args, dest)
        resolved[dest] = list(value) if isinstance(value, tuple) else value
    return resolved


GLOBAL_DEFAULTS = {"seed": 0, "quiet": False, "workers": 1}


def _global_options(parser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="TOML file of option values (flags win)")
    parser.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    parser.add_argument("--quiet", action="store_const", const=True, default=d, help="suppress summaries")
    parser.add_argument("--json-errors", action="store_const", const=True, default=d,
                        help="print errors as JSON on stderr")
    parser.add_argument("--workers", type=int, default=d, help="parallel workers for per-file work")


# ---- commands ---------------------------------------------------------------

def cmd_score_convert(args, prov):
    score = load_score(args.input)
    write_json(args.out, {**score.to_dict(), "warnings": list(score.warnings)}, schemas.SCORE_IR, prov)
    _warn(args, score.warnings)
    if args.abc:
        patches = to_abc_interleaved(score, max_bars=args.max_bars, start_bar=args.start_bar)
        doc = {"patches": [{"bar": p.bar_index, "text": p.text, "full_length": p.full_length,
                            "truncated": p.truncated} for p in patches],
               "lossiness": lossiness_report(patches)}
        write_json(args.abc, doc, schemas.PATCHES, prov)
    return 0


def cmd_score_unfold(args, prov):
    unfolded = unfold_repeats(load_score(args.input))
    write_json(args.out, unfolded.to_dict(), schemas.UNFOLDED, prov)
    return 0


def cmd_perf_import(args, prov):
    warnings = []
    notes = load_perf(args.input, warnings)
    _warn(args, warnings)
    write_notes(args.out, notes, prov, {"warnings": warnings, "notes": len(notes)})
    return 0


def _align_params(args):
    return AlignParams(gap_penalty=args.gap_penalty, refits=args.refits)


def cmd_align(args, prov):
    unfolded = unfold_repeats(load_score(args.score))
    perf = load_perf(args.perf)
    records = align_notes(unfolded, perf, _align_params(args))
    write_tsv(args.out, records, prov)
    counts = {op: sum(r.op == op for r in records) for op in ("match", "insert", "delete")}
    _say(args, " ".join(f"{k}={v}" for k, v in counts.items()), stderr=args.out in (None, "-"))
    return 0


def cmd_tokenize(args, prov):
    records = read_match_tsv(_read_text(args.input))
    events = [tuple(t) for t in load_score(args.score).time_sigs] if args.score else []
    steps = encode(records, events, window_origin=args.origin, bar_offset=args.bar_offset)
    if args.out.endswith(".json"):
        write_json(args.out, to_json(steps), schemas.TRISTEPS, prov)
    else:
        blob = to_bytes(steps)
        if from_bytes(blob) != steps:
            raise PerfAlignError("binary step encoding did not round-trip")
        for k, s in enumerate(steps):
            check_step(s, k)
        _write(args.out, blob, "wb")
        write_meta(args.out, prov, {"steps": len(steps)})
    _say(args, f"{len(records)} records -> {len(steps)} steps", stderr=args.out == "-")
    return 0


def cmd_detokenize(args, prov):
    decoded = decode(load_steps(args.input), window_origin=args.origin, bar_offset=args.bar_offset)
    write_tsv(args.out, _indexed(decoded.records), prov)
    return 0


def cmd_mistakes(args, prov):
    report = derive_mistakes(read_match_tsv(_read_text(args.input)))
    c, e, m = report.counts()
    write_json(args.out, {**report.to_dict(), "counts": {"correct": c, "extra": e, "missed": m}},
               schemas.MISTAKES, prov)
    _say(args, f"correct={c} extra={e} missed={m}", stderr=args.out in (None, "-"))
    return 0


def _pairs_of(pred, truth, suffixes):
    if os.path.isdir(pred) != os.path.isdir(truth):
        raise ParseError("pred and truth must both be files or both be directories")
    if not os.path.isdir(pred):
        return [(os.path.basename(pred), pred, truth)]
    names = sorted(f for f in os.listdir(truth) if f.endswith(suffixes))
    missing = [n for n in names if not os.path.exists(os.path.join(pred, n))]
    if missing:
        raise ParseError(f"prediction missing for {', '.join(missing[:5])}")
    return [(n, os.path.join(pred, n), os.path.join(truth, n)) for n in names]


def _eval_align_one(job):
    name, pred, truth, tol = job
    return name, f_align(read_match_tsv(_read_text(pred)), read_match_tsv(_read_text(truth)), onset_tol=tol)


def _eval_transcription_one(job):
    name, pred, truth, tol = job
    return name, transcription_f1(load_perf(pred), load_perf(truth), onset_tol=tol)


def _eval_mistakes_one(job):
    name, pred, truth, tol = job
    return name, mistake_metrics(load_mistakes(pred), load_mistakes(truth), onset_tol=tol)


def cmd_eval(args, prov):
    kind = args.kind
    if kind == "align":
        jobs = [(n, p, t, args.onset_tol if args.onset_tol is not None else 1e-6)
                for n, p, t in _pairs_of(args.pred, args.truth, (".tsv",))]
        results = _pmap(_eval_align_one, jobs, args.workers)
        blocks = {n: {"f_align": r} for n, r in results}
        aggregate = {"f_align": aggregate_counts([r for _, r in results])}
        headline = aggregate["f_align"]
    elif kind == "transcription":
        jobs = [(n, p, t, args.onset_tol if args.onset_tol is not None else 0.05)
                for n, p, t in _pairs_of(args.pred, args.truth, (".jsonl", ".mid", ".midi"))]
        results = _pmap(_eval_transcription_one, jobs, args.workers)
        blocks = {n: {"onset": r.onset, "onset_offset_velocity": r.offset_velocity, "velocity_mae": r.mae_velocity}
                  for n, r in results}
        aggregate = {"onset": aggregate_counts([r.onset for _, r in results]),
                     "onset_offset_velocity": aggregate_counts([r.offset_velocity for _, r in results])}
        headline = aggregate["onset"]
    else:
        jobs = [(n, p, t, args.onset_tol if args.onset_tol is not None else 0.05)
                for n, p, t in _pairs_of(args.pred, args.truth, (".tsv", ".json"))]
        results = _pmap(_eval_mistakes_one, jobs, args.workers)
        blocks = {n: r for n, r in results}
        aggregate = {k: aggregate_counts([r[k] for _, r in results]) for k in ("correct", "extra", "missed")}
        headline = aggregate["extra"]
    report = metrics_report(blocks, aggregate)
    write_json(args.out, report, schemas.METRICS_REPORT, prov)
    # keep stdout clean when it carries the report
    _say(args, f"{kind}: F={headline.f1:.6f} P={headline.precision:.6f} R={headline.recall:.6f}",
         stderr=args.out in (None, "-"))
    return 0


def _truth_pairs(args, score, perf):
    """Original (perf index, unfolded score index) pairs from --alignment or the aligner."""
    unfolded = unfold_repeats(score)
    if args.alignment:
        records = read_match_tsv(_read_text(args.alignment))
    else:
        records = align_notes(unfolded, perf)
    return unfolded, records, [(r.perf_index, r.score_index) for r in records if r.op == MATCH]


def cmd_augment(args, prov):
    kind = args.kind
    if kind == "score":
        score = load_score(args.score)
        new, log = modulate_score(score, ratio=args.ratio, seed=args.seed)
        write_json(args.out, {**new.to_dict(), "warnings": []}, schemas.SCORE_IR, prov)
        if args.truth:
            perf = load_perf(args.perf)
            unfolded, _, pairs = _truth_pairs(args, score, perf)
            records, _ = score_modulation_truth(unfolded, new, perf, pairs, log)
            write_tsv(args.truth, records, prov)
    elif kind == "perf":
        perf = load_perf(args.perf)
        rates = {"insert": args.insert, "delete": args.delete, "shift": args.shift}
        new, log = modulate_performance(perf, rates, seed=args.seed)
        write_notes(args.out, new, prov, {"notes": len(new)})
        if args.truth:
            score = load_score(args.score)
            unfolded, _, pairs = _truth_pairs(args, score, perf)
            write_tsv(args.truth, performance_modulation_truth(unfolded, new, pairs, log), prov)
    else:
        score = load_score(args.score)
        perf = load_perf(args.perf)
        unfolded, records, pairs = _truth_pairs(args, score, perf)
        new_score, new_perf, provenance = simulate_repeats(score, perf, prob=args.prob, seed=args.seed,
                                                           alignment=records)
        log = {"kind": "repeats", "seed": args.seed, "applied": provenance is not None,
               **({k: v for k, v in provenance.items() if k != "copy_index"} if provenance else {})}
        if provenance:
            log["copy_index"] = {str(k): v for k, v in provenance["copy_index"].items()}
        write_json(args.out, {**new_score.to_dict(), "warnings": []}, schemas.SCORE_IR, prov)
        write_notes(args.out_perf, new_perf, prov, {"notes": len(new_perf)})
        if args.truth:
            if provenance is None:
                truth = records
            else:
                truth, _ = repeat_truth(new_score, new_perf, provenance, unfolded, pairs)
            write_tsv(args.truth, truth, prov)
    write_json(args.log, log, schemas.AUGMENT_LOG, prov)
    return 0


def _synth_piece(job):
    index, seed_seq, out, bars, mistake_rate, jitter, prov = job
    from .neural.corpus import make_piece

    piece = make_piece(np.random.default_rng(seed_seq), bars=tuple(bars), mistake_rate=mistake_rate, jitter=jitter)
    name = f"piece_{index:04d}"
    files = {"score": f"pieces/{name}.score.json", "perf": f"pieces/{name}.perf.jsonl",
             "truth": f"pieces/{name}.truth.tsv"}
    write_json(os.path.join(out, files["score"]), {**piece.score.to_dict(), "warnings": []}, schemas.SCORE_IR, prov)
    write_notes(os.path.join(out, files["perf"]), piece.perf, prov)
    write_tsv(os.path.join(out, files["truth"]), piece.records, prov)
    return {"name": name, **files}


def cmd_synth(args, prov):
    seqs = np.random.SeedSequence(args.seed).spawn(args.n)
    jobs = [(k, s, args.out, args.bars, args.mistake_rate, args.jitter, prov) for k, s in enumerate(seqs)]
    pieces = _pmap(_synth_piece, jobs, args.workers)
    write_json(os.path.join(args.out, "corpus.json"), {"pieces": pieces}, schemas.CORPUS, prov)
    _say(args, f"wrote {len(pieces)} pieces to {args.out}")
    return 0


def load_corpus(directory, d_model):
    """Pieces and training samples of a ``synth corpus`` directory."""
    from .neural.corpus import Piece, piece_to_sample

    manifest = _read_json(os.path.join(directory, "corpus.json"))
    schemas.check(manifest, schemas.CORPUS, "corpus.json")
    names, samples = [], []
    for entry in manifest["pieces"]:
        piece = Piece(load_score(os.path.join(directory, entry["score"])),
                      load_perf(os.path.join(directory, entry["perf"])),
                      read_match_tsv(_read_text(os.path.join(directory, entry["truth"]))))
        names.append(entry["name"])
        samples.append(piece_to_sample(piece, d_model))
    return names, samples


def _toy_config(args):
    from .neural import ToyDecoderConfig

    return ToyDecoderConfig(d_model=args.d_model, n_blocks=args.n_blocks, n_heads=args.n_heads,
                            max_len=args.max_len, hierarchical=not args.concat_memory)


def cmd_toy_train(args, prov):
    from .neural import Schedule, TrainOptions, train

    config = _toy_config(args)
    _, samples = load_corpus(args.corpus, config.d_model)
    if args.limit:
        samples = samples[:args.limit]
    schedule = Schedule(total=args.steps, warmup=args.warmup, init_lr=args.init_lr, peak_lr=args.peak_lr,
                        final_lr=args.final_lr)
    options = TrainOptions(seed=args.seed, batch_size=args.batch_size, weight_decay=args.weight_decay,
                           target_accuracy=args.target_accuracy, checkpoint_every=args.checkpoint_every,
                           out_dir=args.out, eval_every=args.eval_every)

    def log(step, lr, value):
        _say(args, f"step {step} lr {lr:.3g} loss {value:.5f}")
    result = train(samples, config, schedule, options, resume_from=args.resume, log=log)
    report = {"steps": result.steps, "final_loss": result.losses[-1][2] if result.losses else float("nan"),
              "accuracy": result.accuracy, "min_accuracy": min(result.accuracy.values()),
              "checkpoint": result.checkpoint, "schedule": schedule.to_dict(), "model": config.to_dict()}
    write_json(os.path.join(args.out, "train_report.json"), report, schemas.TRAIN_REPORT, prov)
    _say(args, f"stopped at step {result.steps}; min field accuracy {report['min_accuracy']:.4f}")
    return 0


def cmd_toy_gradcheck(args, prov):
    from .neural import ToyDecoderConfig, build_corpus, grad_check, init_params, make_batch

    config = ToyDecoderConfig(d_model=args.d_model, n_blocks=args.n_blocks, n_heads=args.n_heads, max_len=16,
                              hierarchical=not args.concat_memory)
    corpus = build_corpus(2, seed=args.seed, d_model=config.d_model, bars=(1, 1))
    batch = make_batch([s.steps[:args.seq_len] for s in corpus], [s.audio for s in corpus],
                       [s.chars for s in corpus])
    params = init_params(config, seed=args.seed, dtype=np.float64)
    result = grad_check(params, batch, config, epsilon=args.epsilon, n_params=args.n_params, seed=args.seed)
    write_json(args.out, {**result.to_dict(), "tolerance": args.tolerance}, schemas.GRADCHECK, prov)
    ok = result.max_rel_error < args.tolerance
    _say(args, f"max relative error {result.max_rel_error:.3e} at {result.worst_param}"
               f"{list(result.worst_index)}: {'ok' if ok else 'FAILED'}", stderr=args.out in (None, "-"))
    return 0 if ok else 1


def cmd_toy_infer(args, prov):
    from .errors import DecodeError
    from .neural import greedy_decode, load_params

    config, params = load_params(args.checkpoint)
    names, samples = load_corpus(args.corpus, config.d_model)
    if args.limit:
        names, samples = names[:args.limit], samples[:args.limit]
    rows = []
    for name, sample in zip(names, samples):
        steps = greedy_decode(sample.audio, sample.chars, params, config, max_steps=args.max_steps)
        write_json(os.path.join(args.out, f"{name}.pred.json"), to_json(steps), schemas.TRISTEPS, prov)
        error = None
        try:
            pred = decode(steps)
            write_tsv(os.path.join(args.out, f"{name}.pred.tsv"), _indexed(pred.records), prov)
        except DecodeError as exc:
            error = str(exc)
        ref = decode(sample.steps)
        write_tsv(os.path.join(args.out, f"{name}.ref.tsv"), _indexed(ref.records), prov)
        rows.append({"name": name, "steps": len(steps), "exact": steps == sample.steps, "decode_error": error})
    write_json(os.path.join(args.out, "infer_report.json"), {"samples": rows}, schemas.INFER_REPORT, prov)
    _say(args, f"{sum(r['exact'] for r in rows)}/{len(rows)} sequences reproduced exactly")
    return 0


# ---- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfalign", description="Score/performance alignment toolkit.")
    parser.add_argument("--version", action="version", version=f"perfalign {__version__}")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(parent, name, path, func, help_text):
        p = parent.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(_func=func)
        return _Spec(p, path)

    score = sub.add_parser("score", help="score conversion").add_subparsers(dest="action", required=True)
    (command(score, "convert", "score.convert", cmd_score_convert, "MusicXML -> score IR JSON (+ ABC patches)")
     .arg("input").arg("--out", default="-").arg("--abc")
     .opt("--max-bars", type=int, default=50).opt("--start-bar", type=int, default=0))
    (command(score, "unfold", "score.unfold", cmd_score_unfold, "expand repeats with bar provenance")
     .arg("input").arg("--out", default="-"))

    perf = sub.add_parser("perf", help="performance import").add_subparsers(dest="action", required=True)
    command(perf, "import", "perf.import", cmd_perf_import, "MIDI or notes JSONL -> normalized notes JSONL") \
        .arg("input").arg("--out", default="-")

    (command(sub, "align", "align", cmd_align, "align a performance to a score")
     .arg("score").arg("perf").arg("--out", default="-")
     .opt("--gap-penalty", type=float, default=1.0).opt("--refits", type=int, default=2))

    (command(sub, "tokenize", "tokenize", cmd_tokenize, "match TSV -> tri-stream steps (.bin or .json)")
     .arg("input").arg("--out", required=True).arg("--score", help="score IR or MusicXML for time signatures")
     .opt("--origin", type=float, default=0.0).opt("--bar-offset", type=int, default=0))
    (command(sub, "detokenize", "detokenize", cmd_detokenize, "tri-stream steps -> match TSV")
     .arg("input").arg("--out", default="-")
     .opt("--origin", type=float, default=0.0).opt("--bar-offset", type=int, default=0))

    command(sub, "mistakes", "mistakes", cmd_mistakes, "match TSV -> correct/extra/missed report") \
        .arg("input").arg("--out", default="-")

    (command(sub, "eval", "eval", cmd_eval, "metric report for prediction vs truth (files or directories)")
     .arg("kind", choices=("align", "transcription", "mistakes")).arg("pred").arg("truth")
     .arg("--out", default="-").opt("--onset-tol", type=float, default=None))

    aug = sub.add_parser("augment", help="seeded data augmentation").add_subparsers(dest="kind", required=True)
    (command(aug, "score", "augment.score", cmd_augment, "pitch-shift or delete a fraction of score notes")
     .arg("score").arg("--out", required=True).arg("--log", required=True)
     .arg("--perf", help="performance, needed for --truth").arg("--alignment").arg("--truth")
     .opt("--ratio", type=float, default=0.1))
    (command(aug, "perf", "augment.perf", cmd_augment, "inject extra, missing and wrong-pitch notes")
     .arg("perf").arg("--out", required=True).arg("--log", required=True)
     .arg("--score", help="score, needed for --truth").arg("--alignment").arg("--truth")
     .opt("--insert", type=float, default=0.05).opt("--delete", type=float, default=0.05)
     .opt("--shift", type=float, default=0.05))
    (command(aug, "repeats", "augment.repeats", cmd_augment, "add a repeat and replay it in the performance")
     .arg("score").arg("perf").arg("--out", required=True).arg("--out-perf", required=True)
     .arg("--log", required=True).arg("--alignment").arg("--truth").opt("--prob", type=float, default=0.2))

    synth = sub.add_parser("synth", help="synthetic data").add_subparsers(dest="action", required=True)
    (command(synth, "corpus", "synth.corpus", cmd_synth, "random scores, renderings and ground truth")
     .arg("--out", required=True).opt("--n", type=int, default=50)
     .opt("--bars", type=int, nargs=2, default=(2, 4)).opt("--mistake-rate", type=float, default=0.1)
     .opt("--jitter", type=float, default=0.2))

    toy = sub.add_parser("toy", help="toy decoder").add_subparsers(dest="action", required=True)

    def model_opts(spec, d_model):
        return (spec.opt("--d-model", type=int, default=d_model).opt("--n-blocks", type=int, default=2)
                .opt("--n-heads", type=int, default=4)
                .opt("--concat-memory", action="store_const", const=True, default=False))

    model_opts(command(toy, "train", "toy.train", cmd_toy_train, "teacher-forced training on a synth corpus")
               .arg("--corpus", required=True).arg("--out", required=True).arg("--resume"), 48) \
        .opt("--max-len", type=int, default=128).opt("--steps", type=int, default=3000) \
        .opt("--warmup", type=int, default=100).opt("--init-lr", type=float, default=1e-3) \
        .opt("--peak-lr", type=float, default=1e-2).opt("--final-lr", type=float, default=1e-5) \
        .opt("--weight-decay", type=float, default=0.01).opt("--batch-size", type=int, default=0) \
        .opt("--target-accuracy", type=float, default=None).opt("--eval-every", type=int, default=50) \
        .opt("--checkpoint-every", type=int, default=500).opt("--limit", type=int, default=0)
    model_opts(command(toy, "gradcheck", "toy.gradcheck", cmd_toy_gradcheck, "finite-difference gradient check")
               .arg("--out", default="-"), 24) \
        .opt("--n-params", type=int, default=200).opt("--epsilon", type=float, default=1e-4) \
        .opt("--seq-len", type=int, default=8).opt("--tolerance", type=float, default=1e-3)
    (command(toy, "infer", "toy.infer", cmd_toy_infer, "greedy decoding of a corpus with a checkpoint")
     .arg("--checkpoint", required=True).arg("--corpus", required=True).arg("--out", required=True)
     .opt("--max-steps", type=int, default=None).opt("--limit", type=int, default=0))
    return parser


def _command_name(args) -> str:
    parts = [args.command] + [getattr(args, k) for k in ("action", "kind") if getattr(args, k, None)]
    return " ".join(parts)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    json_errors = bool(getattr(args, "json_errors", None))
    try:
        options = resolve(args)
        prov = {"tool": "perfalign", "version": __version__, "command": _command_name(args),
                "seed": args.seed, "config": options}
        return args._func(args, prov)
    except PerfAlignError as exc:
        return _fail(exc.to_dict(), json_errors)
    except OSError as exc:
        return _fail({"error": type(exc).__name__, "message": str(exc), "exit_code": 2}, json_errors)
    except Exception as exc:  # pragma: no cover - last-resort reporting
        return _fail({"error": type(exc).__name__, "message": str(exc), "exit_code": 4}, json_errors)


def _fail(info: dict, json_errors: bool) -> int:
    if json_errors:
        schemas.check(info, schemas.ERROR, "error report")
        print(json.dumps(info), file=sys.stderr)
    else:
        print(f"perfalign: error: {info['message']}", file=sys.stderr)
    return info["exit_code"]


if __name__ == "__main__":
    raise SystemExit(main())
