"""Command-line entry points.

    rtaccomp serve    run the inference server (UDP in/out)
    rtaccomp perform  run a file-driven client session
    rtaccomp sweep    latency feasibility table across step ratios
    rtaccomp mask     print context/target masks for a config
    rtaccomp sample   run the inpainting sampler and dump the latent grid
    rtaccomp fuzz     hammer the wire decoder/reassembler with mutations

Ports and host default from the environment: RTACCOMP_HOST,
RTACCOMP_RECV_PORT, RTACCOMP_SEND_PORT.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import audiofile, generators, wire
from .control import ControlServer, PerformanceSession
from .latency import LatencyModel, format_sweep, sweep
from .sampler import InpaintSpec, gaussian_denoiser, karras_schedule, sample_inpaint
from .server import UdpServer
from .window import (
    STEMS,
    WindowConfig,
    context_mask,
    load_config,
    parse_ratio,
    target_mask,
)


def _env(name: str, default):
    return os.environ.get(f"RTACCOMP_{name}", default)


def _load_cfg(args) -> WindowConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return WindowConfig()


def cmd_serve(args) -> int:
    cfg = _load_cfg(args)
    spec = generators.parse_spec(args.generator)
    server = UdpServer(
        cfg,
        spec,
        bind_host=args.host,
        recv_port=args.recv_port,
        client_host=args.client_host,
        send_port=args.send_port,
        verbose=args.verbose,
    ).start()
    print(
        f"serving on udp://{args.host}:{server.recv_port} "
        f"(generator {spec.describe()}, step {cfg.step_samples} samples)",
        flush=True,
    )
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_perform(args) -> int:
    cfg = _load_cfg(args)
    sr, stems = audiofile.read_stems(args.input, expected_rate=cfg.sample_rate)
    session = PerformanceSession(
        cfg,
        stems,
        predicted_stem=args.predict,
        generator=args.generator,
        time_scale=args.time_scale,
        block_size=args.block_size,
        server_host=args.server,
        server_recv_port=args.send_port if args.server else 0,
        verbose=args.verbose,
    )
    control = None
    if args.control_port is not None:
        control = ControlServer(session, port=args.control_port).start()
        print(f"control endpoint on tcp://127.0.0.1:{control.port}", flush=True)
    try:
        session.start()
        if not args.hold:
            session.run_to_completion(timeout=args.timeout)
        else:
            while not session.finished:
                time.sleep(0.1)
    finally:
        if args.out:
            session.handle({"cmd": "write", "path": args.out})
            print(f"wrote {args.out}", flush=True)
        report = session.describe()
        print(
            f"session done: cursor={report['playback_cursor']} "
            f"underruns={report['underruns']} cycles={len(session.metrics())}",
            flush=True,
        )
        if control is not None:
            control.stop()
        session.close()
    return 0


def cmd_sweep(args) -> int:
    models = {
        "diffusion": LatencyModel(args.diffusion_compute, args.c, args.floor),
        "cd": LatencyModel(args.cd_compute, args.c, args.floor),
    }
    ratios = [parse_ratio(r) for r in args.ratios.split(",")]
    rows = sweep(models, ratios, T_seconds=args.T, topology=args.topology)
    if args.json:
        import json

        for row in rows:
            print(json.dumps(row.as_dict()))
    else:
        print(format_sweep(rows))
    return 0


def cmd_mask(args) -> int:
    cfg = _load_cfg(args)
    if args.ratio:
        cfg = cfg.with_params(step_ratio=parse_ratio(args.ratio))
    if args.w is not None:
        cfg = cfg.with_params(lookahead_w=args.w)
    ctx, tgt = context_mask(cfg), target_mask(cfg)
    print(f"r={cfg.step_ratio} w={cfg.lookahead_w} T_z={cfg.latent_frames}")
    print(f"context boundary frame: {ctx.boundary_frame}")
    print(f"target boundary frame:  {tgt.boundary_frame}")
    print("context:", "".join("1" if v else "0" for v in ctx.vector()))
    print("target: ", "".join("1" if v else "0" for v in tgt.vector()))
    return 0


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    sched = karras_schedule(args.steps, args.sigma_min, args.sigma_max, args.rho)
    mu = np.zeros((cfg.latent_frames, cfg.latent_bins))
    spec = InpaintSpec(
        target_boundary=target_mask(cfg),
        fixed_content=np.zeros((cfg.latent_frames, cfg.latent_bins)),
        resamples=args.resamples,
    )
    grid = sample_inpaint(
        gaussian_denoiser(mu, args.sigma_d), sched, spec, seed=args.seed
    )
    np.save(args.out, grid.astype(np.float32))
    print(f"wrote {args.out}: grid {grid.shape}, generated frames "
          f">= {spec.target_boundary.boundary_frame}")
    return 0


def cmd_fuzz(args) -> int:
    rng = np.random.default_rng(args.seed)
    reasm = wire.Reassembler(packet_size=64)
    decode_errors = 0
    survived = 0
    for trial in range(args.trials):
        step = int(rng.integers(0, 50))
        total = int(rng.integers(1, 6))
        index = int(rng.integers(0, total))
        n = 64 if index < total - 1 else int(rng.integers(1, 65))
        msg = wire.encode_packet(
            "/context",
            wire.ChunkHeader(step, index, total),
            rng.standard_normal(n).astype(np.float32),
            packet_size=64,
        )
        raw = bytearray(msg)
        for _ in range(int(rng.integers(0, 4))):
            raw[int(rng.integers(0, len(raw)))] = int(rng.integers(0, 256))
        if rng.random() < 0.3:
            raw = raw[: int(rng.integers(0, len(raw)))]
        try:
            packet = wire.decode_packet(bytes(raw))
        except wire.DecodeError:
            decode_errors += 1
            continue
        try:
            reasm.feed(packet)
        except wire.WireError:
            decode_errors += 1
            continue
        survived += 1
    print(
        f"{args.trials} mutated packets: {decode_errors} rejected cleanly, "
        f"{survived} accepted, 0 crashes"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtaccomp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the inference server")
    s.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    s.add_argument("--recv-port", type=int, default=int(_env("RECV_PORT", 9000)))
    s.add_argument("--send-port", type=int, default=int(_env("SEND_PORT", 9001)))
    s.add_argument("--client-host", default=None)
    s.add_argument("--generator", default="echo:0")
    s.add_argument("--config", default=None)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("perform", help="run a file-driven session")
    s.add_argument("--input", required=True, help="4-stem WAVE file")
    s.add_argument("--predict", default="bass", choices=STEMS)
    s.add_argument("--config", default=None)
    s.add_argument("--server", default=None, help="external server host (default: in-process)")
    s.add_argument("--recv-port", type=int, default=int(_env("RECV_PORT", 0)))
    s.add_argument("--send-port", type=int, default=int(_env("SEND_PORT", 9000)))
    s.add_argument("--generator", default="echo:0")
    s.add_argument("--out", default=None, help="write inputs + generated stem here")
    s.add_argument("--time-scale", type=float, default=1.0)
    s.add_argument("--block-size", type=int, default=1024)
    s.add_argument("--control-port", type=int, default=None)
    s.add_argument("--timeout", type=float, default=600.0)
    s.add_argument("--hold", action="store_true", help="wait for control commands instead of auto-playing")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_perform)

    s = sub.add_parser("sweep", help="latency feasibility sweep")
    s.add_argument("--diffusion-compute", type=float, default=596.0)
    s.add_argument("--cd-compute", type=float, default=204.0)
    s.add_argument("--c", type=float, default=80.0, help="transfer ms per unit r")
    s.add_argument("--floor", type=float, default=0.0, help="per-direction network floor ms")
    s.add_argument("--T", type=float, default=6.0)
    s.add_argument("--topology", choices=("local", "remote"), default="local")
    s.add_argument("--ratios", default="1/64,1/16,1/8,1/4")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("mask", help="print masks for a config")
    s.add_argument("--config", default=None)
    s.add_argument("--ratio", default=None)
    s.add_argument("--w", type=int, default=None)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("sample", help="run the inpainting sampler, dump .npy grid")
    s.add_argument("--config", default=None)
    s.add_argument("--steps", type=int, default=5)
    s.add_argument("--sigma-min", type=float, default=1e-4)
    s.add_argument("--sigma-max", type=float, default=50.0)
    s.add_argument("--rho", type=float, default=9.0)
    s.add_argument("--sigma-d", type=float, default=1.0)
    s.add_argument("--resamples", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="latent.npy")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("fuzz", help="wire-protocol fuzz driver")
    s.add_argument("--trials", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_fuzz)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
