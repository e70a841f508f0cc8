"""Single entry point exposing every pipeline stage as a subcommand.

Machine-readable output (JSON) goes to stdout or to --out paths; progress
lines and human-readable tables go to stderr, so the two never interleave
on one stream. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from fractions import Fraction
from hashlib import sha256
from pathlib import Path

from . import asrscore, irextract, mushra, service, signalio, snranalysis, sweptsine, synthlab

SVG_HASHSALT = "miclab"


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_json(path: str):
    return json.loads(Path(path).read_text())


def _parse_span(text: str, what: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"{what} must look like LO:HI, got {text!r}")
    try:
        return float(lo), float(hi)
    except ValueError:
        raise ValueError(f"{what} must be numeric LO:HI, got {text!r}") from None


def _parse_fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse octave fraction {text!r}") from None


def _plt():
    try:
        import matplotlib
    except ImportError as exc:
        raise ValueError(
            "matplotlib is required for --svg output; install the 'plot' extra"
        ) from exc
    matplotlib.use("Agg", force=True)
    matplotlib.rcParams["svg.hashsalt"] = SVG_HASHSALT
    import matplotlib.pyplot as plt
    return plt


def _save_svg(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    _log(f"wrote {path}")


def _render_fr_svg(curves, path: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    for label, fr in curves:
        mask = fr.freqs_hz > 0
        ax.semilogx(fr.freqs_hz[mask], fr.magnitude_db[mask], label=label)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("magnitude (dB)")
    ax.grid(True, which="both", alpha=0.3)
    if len(curves) > 1:
        ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def _render_accuracy_bars(report: asrscore.AccuracyReport, path: str) -> None:
    plt = _plt()
    devices = sorted({dev for dev, _, _ in report.groups})
    columns = sorted({(cond, style) for _, cond, style in report.groups})
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    width = 0.8 / max(len(devices), 1)
    for di, dev in enumerate(devices):
        xs, heights = [], []
        for ci, (cond, style) in enumerate(columns):
            stats = report.groups.get((dev, cond, style))
            if stats is not None:
                xs.append(ci + di * width)
                heights.append(stats.mean_accuracy)
        ax.bar(xs, heights, width, label=dev or "(default)")
    ax.set_xticks([ci + 0.4 - width / 2 for ci in range(len(columns))])
    ax.set_xticklabels([f"{cond}\n{style}" for cond, style in columns])
    ax.set_ylabel("character accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def _render_condition_bars(report: dict, path: str) -> None:
    plt = _plt()
    rows = report["conditions"]
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ax.bar(
        range(len(rows)),
        [r["mean"] for r in rows],
        yerr=[r["sd"] for r in rows],
        capsize=4,
    )
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([r["condition_label"] for r in rows], rotation=20)
    ax.set_ylabel("score")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def cmd_gen_sweep(args) -> int:
    spec = sweptsine.SweepSpec(
        length_samples=args.len,
        sample_rate_hz=args.rate,
        f_start_hz=args.f_start,
        f_end_hz=args.f_end,
        sweep_kind=args.kind,
        amplitude=args.amplitude,
        fade_samples=args.fade,
    )
    plan = sweptsine.MeasurementPlan(
        sweep=spec,
        repetitions_per_block=args.reps,
        gap_samples=args.gap,
        blocks=args.blocks,
    )
    buf = sweptsine.assemble_plan(plan)
    signalio.save_wav(buf, args.out, encoding=args.encoding)
    plan_path = args.plan_out or str(Path(args.out).with_suffix(".plan.json"))
    sweptsine.save_plan(plan, plan_path)
    _log(
        f"wrote {args.out} ({len(buf)} samples, one of {plan.blocks} blocks) "
        f"and {plan_path}"
    )
    return 0


def cmd_simulate(args) -> int:
    scenario = synthlab.load_scenario(args.scenario)
    rec = synthlab.render(scenario)
    signalio.save_wav(rec, args.out, encoding=args.encoding)
    _log(f"wrote {args.out} ({len(rec)} samples at {rec.sample_rate_hz} Hz)")
    return 0


def cmd_extract_ir(args) -> int:
    rec = signalio.load_wav(args.rec)
    plan = sweptsine.load_plan(args.plan)
    onsets = irextract.detect_onsets(rec, plan, min_band_snr_db=args.min_band_snr_db)
    ir = irextract.extract_ir(rec, plan, onsets, average=args.average)
    fr = irextract.magnitude_response(ir)
    if args.smooth is not None:
        fr = irextract.smooth_fractional_octave(fr, _parse_fraction(args.smooth))
    signalio.save_wav(ir.samples, args.out, encoding="float32")
    _write_json(fr.to_dict(), args.report)
    _log(f"detected {len(onsets)} sweep instances; averaged {ir.n_averaged}")
    if args.svg:
        _render_fr_svg([(Path(args.rec).name, fr)], args.svg)
    return 0


def cmd_smooth(args) -> int:
    fr = irextract.FrequencyResponse.from_dict(_read_json(args.infile))
    smoothed = irextract.smooth_fractional_octave(fr, _parse_fraction(args.fraction))
    _write_json(smoothed.to_dict(), args.out)
    if args.svg:
        _render_fr_svg([("input", fr), ("smoothed", smoothed)], args.svg)
    return 0


def cmd_compare_fr(args) -> int:
    inside = irextract.FrequencyResponse.from_dict(_read_json(args.inside))
    outside = irextract.FrequencyResponse.from_dict(_read_json(args.outside))
    band = _parse_span(args.band, "--band")
    advantage = irextract.compare_responses(inside, outside, band)
    _write_json({"band_hz": list(band), "advantage_db": advantage}, args.out)
    if args.svg:
        _render_fr_svg([("inside", inside), ("outside", outside)], args.svg)
    return 0


def cmd_snr(args) -> int:
    report = snranalysis.compute_snr(
        signalio.load_wav(args.signal),
        signalio.load_wav(args.noise),
        condition_label=args.condition,
        device_label=args.device,
        remove_dc=not args.keep_dc,
        trim=_parse_span(args.trim, "--trim") if args.trim else None,
        band_hz=_parse_span(args.band, "--band") if args.band else None,
    )
    _write_json(report.to_dict(), args.out)
    return 0


def cmd_snr_table(args) -> int:
    entries = _read_json(args.manifest)
    if not isinstance(entries, list):
        raise ValueError("snr-table manifest must be a JSON array")
    base = Path(args.manifest).parent
    pairs = []
    for entry in entries:
        try:
            pairs.append((
                str(entry["condition_label"]),
                signalio.load_wav(base / entry["signal"]),
                signalio.load_wav(base / entry["noise"]),
            ))
        except KeyError as exc:
            raise ValueError(f"manifest entry missing key {exc}") from None
    reports = snranalysis.snr_sweep_table(
        pairs, device_label=args.device, remove_dc=not args.keep_dc
    )
    _log(snranalysis.format_snr_table(reports))
    _write_json([r.to_dict() for r in reports], args.out)
    return 0


def cmd_asr_run(args) -> int:
    entries = _read_json(args.manifest)
    if not isinstance(entries, list):
        raise ValueError("asr-run manifest must be a JSON array")
    pairs = asrscore.run_external_asr(
        entries,
        args.cmd,
        base_dir=Path(args.manifest).parent,
        max_workers=args.jobs,
        timeout_s=args.timeout,
    )
    _write_json([p.to_dict() for p in pairs], args.out)
    n_missing = sum(p.hypothesis is None for p in pairs)
    _log(f"ran recognizer on {len(pairs)} clips; {n_missing} failed")
    return 0


def cmd_asr_score(args) -> int:
    pairs = [asrscore.TranscriptPair.from_dict(d) for d in _read_json(args.pairs)]
    report = asrscore.aggregate(pairs)
    _log(asrscore.format_accuracy_table(report))
    _write_json(report.to_dict(), args.out)
    if args.svg:
        _render_accuracy_bars(report, args.svg)
    return 0


def _opaque_id(*parts: str) -> str:
    return sha256(":".join(parts).encode()).hexdigest()[:12]


def _clip_ref(dest: Path, out_dir: Path, digest: str) -> signalio.AudioClipRef:
    # stored path is relative to the session dir; the service resolves it
    buf = signalio.load_wav(dest)
    return signalio.AudioClipRef(
        id=f"c{digest}",
        path=f"clips/{digest}.wav",
        duration_s=buf.duration_s,
        checksum=signalio.file_checksum(dest),
    )


def _import_clip(src: Path, out_dir: Path, digest: str) -> signalio.AudioClipRef:
    """Copy a wav into the session's clip store under an opaque name."""
    dest = out_dir / "clips" / f"{digest}.wav"
    if src.resolve() != dest.resolve():
        shutil.copyfile(src, dest)
    return _clip_ref(dest, out_dir, digest)


def cmd_mushra_init(args) -> int:
    config = _read_json(args.config)
    base = Path(args.config).parent
    out_dir = Path(args.out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)
    session_id = str(config["id"])
    cutoff = float(config.get("anchor_cutoff_hz", mushra.ANCHOR_CUTOFF_HZ))

    # clip ids and filenames are content- and slot-derived digests, so the
    # hidden reference never shares an id with the visible reference and
    # nothing about a clip's URL hints at its role
    trials = []
    for trial_cfg in config.get("trials", []):
        trial_id = str(trial_cfg["id"])
        ref_src = base / trial_cfg["reference"]
        ref_sum = signalio.file_checksum(ref_src)

        def clip_for(slot: str, src: Path, checksum: str):
            return _import_clip(src, out_dir, _opaque_id(session_id, trial_id, slot, checksum))

        reference = clip_for("ref", ref_src, ref_sum)
        items = [mushra.TrialItem(
            item_id=f"i{_opaque_id(session_id, trial_id, 'item-hidden')}",
            clip=clip_for("hidden", ref_src, ref_sum),
            role="hidden_reference",
            condition_label=str(trial_cfg.get("reference_condition_label", "reference")),
        )]
        if trial_cfg.get("anchor"):
            anchor_src = base / trial_cfg["anchor"]
            anchor_clip = clip_for("anchor", anchor_src, signalio.file_checksum(anchor_src))
        else:
            anchor_buf = mushra.make_anchor(signalio.load_wav(ref_src), cutoff_hz=cutoff)
            digest = _opaque_id(session_id, trial_id, "anchor-gen", ref_sum, f"{cutoff}")
            dest = out_dir / "clips" / f"{digest}.wav"
            signalio.save_wav(anchor_buf, dest, encoding="float32")
            anchor_clip = _clip_ref(dest, out_dir, digest)
        items.append(mushra.TrialItem(
            item_id=f"i{_opaque_id(session_id, trial_id, 'item-anchor')}",
            clip=anchor_clip,
            role="anchor",
            condition_label=str(trial_cfg.get("anchor_condition_label", "anchor")),
        ))
        for k, test_cfg in enumerate(trial_cfg.get("tests", [])):
            test_src = base / test_cfg["path"]
            items.append(mushra.TrialItem(
                item_id=f"i{_opaque_id(session_id, trial_id, f'item-test{k}')}",
                clip=clip_for(f"test{k}", test_src, signalio.file_checksum(test_src)),
                role="test",
                condition_label=str(test_cfg["condition_label"]),
            ))
        trials.append(mushra.Trial(id=trial_id, reference=reference, items=tuple(items)))

    session = mushra.MushraSession(
        id=session_id,
        trials=tuple(trials),
        screening_rule=mushra.ScreeningRule.from_dict(config.get("screening_rule", {})),
        seed=int(config.get("seed", 0)),
    )
    session_path = out_dir / f"{session.id}.json"
    mushra.save_session(session, session_path)
    n_items = sum(len(t.items) for t in session.trials)
    _log(f"wrote {session_path} ({len(session.trials)} trials, {n_items} items)")
    return 0


def _serve_config_from(args) -> service.ServiceConfig:
    address = args.address or os.environ.get("MICLAB_ADDR") or "127.0.0.1:8765"
    session_dir = args.session_dir or os.environ.get("MICLAB_SESSION_DIR")
    log_path = args.log or os.environ.get("MICLAB_RESPONSE_LOG")
    static_ui = args.static_ui or os.environ.get("MICLAB_STATIC_UI")
    missing = [
        flag for flag, value in
        (("--session-dir/MICLAB_SESSION_DIR", session_dir),
         ("--log/MICLAB_RESPONSE_LOG", log_path))
        if not value
    ]
    if missing:
        _log(f"mushra-serve: missing required {', '.join(missing)}")
        raise SystemExit(1)
    return service.ServiceConfig(
        session_dir=Path(session_dir),
        response_log_path=Path(log_path),
        listen_address=address,
        static_ui_dir=Path(static_ui) if static_ui else None,
    )


def cmd_mushra_serve(args) -> int:
    config = _serve_config_from(args)
    _log(f"serving sessions from {config.session_dir} on {config.listen_address}")
    service.run_service(config)
    return 0


def cmd_mushra_report(args) -> int:
    session = None
    for path in sorted(Path(args.session_dir).glob("*.json")):
        candidate = mushra.load_session(path)
        if candidate.id == args.session:
            session = candidate
            break
    if session is None:
        raise ValueError(f"no session {args.session!r} under {args.session_dir}")
    records = service.ResponseLog(args.log).load()
    responses = [
        mushra.MushraResponse.from_dict(r)
        for r in records
        if r.get("session_id") == args.session
    ]
    report = mushra.session_report(session, responses, baseline_condition=args.baseline)
    _log(mushra.format_report_table(report))
    _write_json(report, args.out)
    if args.svg:
        _render_condition_bars(report, args.svg)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(
        prog="miclab",
        description="Microphone measurement toolkit: swept-sine capture, "
                    "impulse-response extraction, SNR analysis, recognition "
                    "scoring, and listening tests.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-sweep", help="generate a sweep block WAV and its plan JSON")
    p.add_argument("--len", type=int, default=65536, help="sweep length in samples")
    p.add_argument("--rate", type=int, default=44100)
    p.add_argument("--f-start", type=float, default=20.0)
    p.add_argument("--f-end", type=float, default=22050.0)
    p.add_argument("--kind", choices=sweptsine.SWEEP_KINDS, default="linear")
    p.add_argument("--amplitude", type=float, default=0.9)
    p.add_argument("--fade", type=int, default=256)
    p.add_argument("--reps", type=int, default=5, help="sweeps per block")
    p.add_argument("--gap", type=int, default=None, help="gap samples (default: sweep length)")
    p.add_argument("--blocks", type=int, default=10)
    p.add_argument("--out", required=True, help="output WAV (one block)")
    p.add_argument("--plan-out", default=None, help="plan JSON path (default: OUT.plan.json)")
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    p.set_defaults(func=cmd_gen_sweep)

    p = sub.add_parser("simulate", help="render a synthetic scenario to a WAV")
    p.add_argument("--scenario", required=True, help="scenario manifest JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract-ir", help="locate sweeps, deconvolve, and average")
    p.add_argument("--rec", required=True, help="recording WAV")
    p.add_argument("--plan", required=True, help="measurement plan JSON")
    p.add_argument("--out", required=True, help="averaged impulse-response WAV")
    p.add_argument("--report", required=True, help="frequency-response JSON")
    p.add_argument("--average", choices=("coherent", "magnitude"), default="coherent")
    p.add_argument("--smooth", default=None, metavar="FRACTION",
                   help="also smooth the response, e.g. 1/3")
    p.add_argument("--min-band-snr-db", type=float, default=12.0)
    p.add_argument("--svg", default=None, help="plot the response to this SVG")
    p.set_defaults(func=cmd_extract_ir)

    p = sub.add_parser("smooth", help="fractional-octave smooth a response JSON")
    p.add_argument("--in", dest="infile", required=True, help="frequency-response JSON")
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.add_argument("--fraction", default="1/3")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("compare-fr", help="mean dB advantage of one response over another")
    p.add_argument("--inside", required=True, help="frequency-response JSON")
    p.add_argument("--outside", required=True, help="frequency-response JSON")
    p.add_argument("--band", default="200:5000", help="band as LO:HI in Hz")
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_compare_fr)

    p = sub.add_parser("snr", help="SNR between a signal and a noise recording")
    p.add_argument("--signal", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--condition", default="")
    p.add_argument("--device", default="")
    p.add_argument("--keep-dc", action="store_true", help="skip DC-offset removal")
    p.add_argument("--trim", default=None, help="window as START:END in seconds")
    p.add_argument("--band", default=None, help="band-limit as LO:HI in Hz")
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("snr-table", help="SNR table across noise conditions")
    p.add_argument("--manifest", required=True,
                   help='JSON array of {"condition_label", "signal", "noise"}')
    p.add_argument("--device", default="")
    p.add_argument("--keep-dc", action="store_true")
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_snr_table)

    p = sub.add_parser("asr-run", help="run an external recognizer over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cmd", required=True,
                   help='command template containing "{input}"')
    p.add_argument("--out", required=True, help="transcript-pairs JSON")
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--timeout", type=float, default=600.0, help="per-clip seconds")
    p.set_defaults(func=cmd_asr_run)

    p = sub.add_parser("asr-score", help="character accuracy per device and condition")
    p.add_argument("--pairs", required=True, help="transcript-pairs JSON")
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_asr_score)

    p = sub.add_parser("mushra-init", help="build a listening-test session from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_mushra_init)

    p = sub.add_parser("mushra-serve", help="serve sessions over HTTP")
    p.add_argument("--address", default=None, help="host:port (env MICLAB_ADDR)")
    p.add_argument("--session-dir", default=None, help="env MICLAB_SESSION_DIR")
    p.add_argument("--log", default=None,
                   help="response log path (env MICLAB_RESPONSE_LOG)")
    p.add_argument("--static-ui", default=None,
                   help="static UI directory (env MICLAB_STATIC_UI)")
    p.set_defaults(func=cmd_mushra_serve)

    p = sub.add_parser("mushra-report", help="screening, stats, and tests for a session")
    p.add_argument("--session-dir", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--session", required=True, help="session id")
    p.add_argument("--baseline", default=None, help="baseline condition label")
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_mushra_report)

    return parser


def entrypoint(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except SystemExit as exc:  # argparse --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(entrypoint())
