"""Command-line entry point: ``orthotact <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, plotting
from .channel import TraceParseError, read_trace_csv, write_trace_csv
from .codebook import CodeBookError, assign_codes, verify_orthogonality
from .config import ConfigError, SystemConfig
from .decoder import Reconstructor, decode_trace
from .sensor import PressureFrame, read_pressure_csv, write_pressure_csv
from .simulate import Simulator

log = logging.getLogger("orthotact")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_config(path) -> SystemConfig:
    return SystemConfig() if path is None else SystemConfig.load(path)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bits_list(text: str) -> list[int | None]:
    out: list[int | None] = []
    for x in text.split(","):
        x = x.strip().lower()
        if not x:
            continue
        if x in ("none", "ideal"):
            out.append(None)
        else:
            try:
                out.append(int(x))
            except ValueError:
                raise argparse.ArgumentTypeError(f"bad ADC bit count {x!r}") from None
    return out


def _layout(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"layout must look like 4x4, got {text!r}") from None


def truth_path(trace_path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.stem + ".truth.json")


# commands ----------------------------------------------------------------


def cmd_config_init(args) -> int:
    cfg = SystemConfig()
    if args.nodes is not None or args.layout is not None:
        rows, cols = args.layout or (1, args.nodes)
        nodes = args.nodes if args.nodes is not None else rows * cols
        cfg = SystemConfig.from_dict({**cfg.to_dict(), "node_count": nodes, "layout": [rows, cols]})
    text = json.dumps(cfg.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_codegen(args) -> int:
    book = assign_codes(args.n_nodes, skip_dc_row=not args.no_skip_dc)
    report = verify_orthogonality(book)
    book.save(args.out)
    print(f"order {book.order}, {book.n_nodes} nodes, max cross-dot {report.max_cross_dot}, "
          f"self-dot {report.min_self_dot} -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    frames = read_pressure_csv(args.pressure)
    sim = Simulator(cfg, seed=args.seed)
    trace, truths = sim.run(frames, args.frames)
    write_trace_csv(trace, args.out)
    k = cfg.encoder.k_bits
    sidecar = {
        "frame_period_s": cfg.encoder.frame_period,
        "frame_origin_s": trace.t0,
        "clipped_samples": trace.clip_count,
        "frames": [t.to_dict(k) for t in truths],
    }
    tpath = Path(args.truth) if args.truth else truth_path(args.out)
    tpath.write_text(json.dumps(sidecar, indent=2) + "\n")
    if not args.no_plot:
        plotting.plot_trace(trace, plotting.figure_path(args.out))
    active = sum(int(t.active.sum()) for t in truths)
    print(f"{len(truths)} frame(s), {len(trace)} samples, {active} node transmissions -> {args.out}")
    if trace.clip_count:
        log.warning("%d samples clipped by the channel ADC", trace.clip_count)
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = _load_config(args.config)
    trace = read_trace_csv(args.trace)
    dcfg = cfg.decoder_config()
    if args.frame_origin is not None:
        dcfg = replace(dcfg, frame_origin=args.frame_origin)
    book = cfg.codebook()
    frames = decode_trace(trace, book, dcfg)
    docs = [f.to_dict(cfg.sensor, cfg.encoder.k_bits) for f in frames]
    Path(args.out).write_text(json.dumps(docs, indent=2) + "\n")
    rec = Reconstructor(cfg.sensor, cfg.rows, cfg.cols)
    grid = PressureFrame.zeros(cfg.rows, cfg.cols)
    for f in frames:
        grid = rec.update(f).pressure
    if args.heatmap:
        write_pressure_csv(args.heatmap, grid)
        if not args.no_plot:
            plotting.plot_pressure(grid, plotting.figure_path(args.heatmap))
    if not args.no_plot:
        plotting.plot_trace(trace, plotting.figure_path(args.out), frames)
    for f in frames:
        words = ", ".join(f"node {i}={w:0{cfg.encoder.k_bits}b}" for i, w in f.words().items()) or "all inactive"
        flag = f"  [{'; '.join(f.flags)}]" if f.flags else ""
        print(f"frame {f.frame_index} @ {f.t_start * 1e3:.3f} ms: {words}{flag}")
    if not frames:
        print("no frames found")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    cfg = _load_config(args.config)
    summary = harness.roundtrip(cfg, args.trials, args.seed, noise_bound_frac=args.noise_frac,
                                p_active=args.p_active)
    print(summary.line())
    for m in summary.mismatches[:10]:
        print(f"  trial {m['trial']}: {m['node_errors']} node errors, ghosts {m['ghosts']}, missing {m['missing']}")
    return EXIT_OK if summary.ok else EXIT_VERIFY


def cmd_sweep_scaling(args) -> int:
    cfg = _load_config(args.config)
    rows = harness.sweep_scaling(cfg, args.nodes, k=args.k, target_frame=args.target_frame_ms * 1e-3,
                                 trials=args.trials, seed=args.seed, t_floor=args.t_floor_us * 1e-6,
                                 timing=args.timing)
    harness.write_report(rows, args.out, harness.SCALING_FIELDS)
    if not args.no_plot:
        plotting.plot_scaling(rows, plotting.figure_path(args.out))
    for r in rows:
        flag = "" if r["feasible"] else "  (below T floor)"
        print(f"n={r['n_nodes']:>6} order={r['order']:>6} T={r['T_seconds'] * 1e6:.5g} us "
              f"frame={r['frame_ms']:.4g} ms period={r['period_ms']:.4g} ms ok={r['decode_ok_rate']:.0%}{flag}")
    return EXIT_OK if all(r["decode_ok_rate"] == 1 for r in rows) else EXIT_VERIFY


def cmd_sweep_noise(args) -> int:
    cfg = _load_config(args.config)
    rows = harness.sweep_noise(cfg, args.noise, args.jitter, args.adc_bits, trials=args.trials,
                               seed=args.seed, noise_model=args.noise_model, p_active=args.p_active)
    harness.write_report(rows, args.out, harness.BER_FIELDS)
    if not args.no_plot:
        plotting.plot_ber(rows, plotting.figure_path(args.out))
    for r in rows:
        print(f"noise={r['noise_level']:g} V jitter={r['jitter_frac']:g} adc={r['channel_adc_bits'] or 'ideal'} "
              f"BER={r['bit_error_rate']:.3g} node_err={r['node_error_rate']:.3g} ghost={r['ghost_rate']:.3g}")
    return EXIT_OK


# parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orthotact", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("config-init", help="write the default system config")
    s.add_argument("--out", help="output path (stdout if omitted)")
    s.add_argument("--nodes", type=int)
    s.add_argument("--layout", type=_layout, help="grid such as 4x4")
    s.set_defaults(func=cmd_config_init)

    s = sub.add_parser("codegen", help="generate and verify a codebook")
    s.add_argument("n_nodes", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--no-skip-dc", action="store_true", help="allow assigning the all-ones row")
    s.set_defaults(func=cmd_codegen)

    s = sub.add_parser("simulate", help="pressure grid(s) -> bus trace CSV + ground truth")
    s.add_argument("--config")
    s.add_argument("--pressure", required=True, help="CSV grid; blank lines separate frames")
    s.add_argument("--frames", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="ground-truth sidecar path (default <out>.truth.json)")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("decode", help="bus trace CSV -> decoded frames JSON")
    s.add_argument("--config")
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--heatmap", help="write the last reconstructed pressure grid as CSV")
    s.add_argument("--frame-origin", type=float, help="time (s) of a known frame start")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("roundtrip", help="simulate -> decode -> compare; exit 1 on any mismatch")
    s.add_argument("--config")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-frac", type=float, help="uniform noise as a multiple of the decision guarantee bound")
    s.add_argument("--p-active", type=float, help="per-node activity probability (random per trial if omitted)")
    s.set_defaults(func=cmd_roundtrip)

    s = sub.add_parser("sweep-scaling", help="constant-frame-time sweep over node counts")
    s.add_argument("--config")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--nodes", type=_int_list, default=[16, 64, 256, 1024, 4096])
    s.add_argument("--target-frame-ms", type=float, default=8.0)
    s.add_argument("--trials", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t-floor-us", type=float, default=0.1)
    s.add_argument("--timing", action="store_true", help="record wall time (makes the report non-reproducible)")
    s.add_argument("--out", required=True)
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_sweep_scaling)

    s = sub.add_parser("sweep-noise", help="BER over noise x jitter x channel ADC bits")
    s.add_argument("--config")
    s.add_argument("--noise", type=_float_list, required=True, help="noise levels in volts")
    s.add_argument("--noise-model", choices=["gaussian", "uniform"], default="gaussian")
    s.add_argument("--jitter", type=_float_list, default=[0.0])
    s.add_argument("--adc-bits", type=_bits_list, default=[12])
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--p-active", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_sweep_noise)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CodeBookError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TraceParseError as exc:
        print(f"error: {getattr(args, 'trace', '')}: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
