#!/usr/bin/env python3
"""
Command-line pipeline: synthesize data, estimate and split dead times,
reduce, evaluate and export frequency responses.

Usage:
    python3 src/hrom/cli.py synth --geometry semicircle --m 6 --p 4 --modes 6 --out data/scene
    python3 src/hrom/cli.py delays --in data/scene --out data/scene.delays
    python3 src/hrom/cli.py split --delays data/scene.delays --mode dts --out data/scene.spec
    python3 src/hrom/cli.py reduce --in data/scene --gamma 0.05 --out data/scene.rom
    python3 src/hrom/cli.py eval --in data/scene --rom data/scene.rom
    python3 src/hrom/cli.py respond --rom data/scene.rom --omegas 0:pi:128 --out data/scene_tf.csv
    python3 src/hrom/cli.py bench --in data/scene --orders 8,16,32 --gamma 0.001

Results go to stdout (JSON or CSV) unless --out is given; logs go to stderr.
Failures print {"error", "kind", "command"} as JSON on stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Add src to path when run as a script
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from hrom import containers
from hrom.config import DEAD_TIME_MODES, DEFAULT_THRESHOLD, PRECISIONS, load_pipeline_config
from hrom.core import DeadTimeSpec, MarkovSequence, frequency_response, relative_error_db
from hrom.deadtime import assemble, count_dofs, estimate_delays, rectify, split, total_residual
from hrom.era import EraResult, adaptive_era, error_estimate_db, kung_bound_corrected, kung_bound_erroneous, truncate
from hrom.errors import HromError
from hrom.synth import GEOMETRIES, synthesize

logger = logging.getLogger("hrom.cli")


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _pipeline_config(args: argparse.Namespace):
    return load_pipeline_config(
        getattr(args, "config", None),
        overrides={
            "gamma": getattr(args, "gamma", None),
            "block": getattr(args, "block", None),
            "power": getattr(args, "power", None),
            "seed": getattr(args, "seed", None),
            "dead_time_mode": getattr(args, "mode", None),
            "tde_threshold": getattr(args, "threshold", None),
            "precision": getattr(args, "precision", None),
        },
    )


def parse_omegas(text: str) -> np.ndarray:
    """Comma list of frequencies, or start:stop:count; 'pi' is accepted in numbers."""

    def number(token: str) -> float:
        token = token.strip().lower()
        if "pi" in token:
            factor = token.replace("pi", "").replace("*", "").strip()
            return float(factor or 1.0) * np.pi
        return float(token)

    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Frequency range must be start:stop:count (got {text!r})")
        return np.linspace(number(parts[0]), number(parts[1]), int(parts[2]))
    return np.array([number(tok) for tok in text.split(",") if tok.strip()])


def _split_spec(h: MarkovSequence, mode: str, threshold: float, timings: Dict[str, float]) -> DeadTimeSpec:
    start = time.perf_counter()
    delays = estimate_delays(h, threshold)
    timings["delays"] = time.perf_counter() - start
    start = time.perf_counter()
    spec = split(delays, mode)
    timings["split"] = time.perf_counter() - start
    return spec


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> Dict[str, Any]:
    result = synthesize(
        args.geometry, args.m, args.p, args.modes, args.fs, args.duration, seed=args.seed
    )
    header = containers.write_ir(args.out, result.h)
    truth_path = containers.write_truth(f"{containers.container_stem(args.out)}.truth", result.truth)
    return {
        "ir": str(header),
        "truth": str(truth_path),
        "N": result.h.N,
        "p": result.h.p,
        "m": result.h.m,
        "exact_split": "tau" in result.truth,
    }


def cmd_delays(args: argparse.Namespace) -> Optional[Dict[str, Any]]:
    h = containers.read_ir(args.input)
    delays = estimate_delays(h, args.threshold)
    if args.out:
        path = containers.write_delays(args.out, delays)
        return {"delays": str(path), "min": int(delays.delta.min()), "max": int(delays.delta.max())}
    _emit(json.dumps({"kind": "delays", "n_samples": delays.n_samples, "delta": delays.delta.tolist()}))
    return None


def cmd_split(args: argparse.Namespace) -> Optional[Dict[str, Any]]:
    delays = containers.read_delays(args.delays)
    spec = split(delays, args.mode)
    summary = {
        "mode": args.mode,
        "extracted": int(spec.tau.sum() + spec.theta.sum()),
        "total_residual": total_residual(spec),
    }
    if args.out:
        summary["spec"] = str(containers.write_spec(args.out, spec, args.mode))
        return summary
    _emit(json.dumps({**summary, "tau": spec.tau.tolist(), "theta": spec.theta.tolist()}))
    return None


def cmd_reduce(args: argparse.Namespace) -> Dict[str, Any]:
    config = _pipeline_config(args)
    timings: Dict[str, float] = {}

    start = time.perf_counter()
    h = containers.read_ir(args.input)
    timings["read"] = time.perf_counter() - start

    if args.spec:
        spec, mode = containers.read_spec(args.spec)
    else:
        mode = config.dead_time_mode
        spec = _split_spec(h, mode, config.tde_threshold, timings)

    start = time.perf_counter()
    rectified = rectify(h, spec)
    timings["rectify"] = time.perf_counter() - start

    result = adaptive_era(
        rectified, gamma=config.gamma, b=config.block, q=config.power, seed=config.seed, dtype=config.dtype
    )
    timings.update(result.timings)
    model = assemble(result.model, spec)

    provenance = {
        "gamma": config.gamma,
        "b": config.block,
        "q": config.power,
        "seed": config.seed,
        "mode": mode,
        "tde_threshold": config.tde_threshold,
        "precision": config.precision,
        "eloo_final": result.eloo_final,
        "etol": result.etol_used,
        "weighted_norm": result.weighted_norm,
        "h2_norm": result.h2_norm,
        "sigma_next": result.sigma_next,
        "stable": result.stable,
        "decay_warning": result.decay_warning,
        "timings": timings,
    }
    start = time.perf_counter()
    path = containers.write_rom(args.out, model, provenance)
    timings["write"] = time.perf_counter() - start
    logger.info("Reduce finished in %.3fs", sum(timings.values()))
    return {
        "rom": str(path),
        "order": model.n,
        "mode": mode,
        "eest_db": result.estimate_db(),
        "total_residual": total_residual(spec),
        "timings": timings,
    }


def _record(
    scenario: str,
    mode: str,
    h: MarkovSequence,
    model,
    eloo: Optional[float],
    weighted: Optional[float],
    sigma_next: Optional[float],
    h2norm: Optional[float],
    wall: Optional[float],
) -> containers.EvalRecord:
    r, p, m = model.n, model.p, model.m
    spec = getattr(model, "spec", None)
    eest = error_estimate_db(eloo, weighted) if eloo is not None and weighted else None
    ekc = ekw = None
    if sigma_next is not None and h2norm:
        ekc = kung_bound_corrected(r, m, p, sigma_next, h2norm)
        ekw = kung_bound_erroneous(r, m, p, sigma_next, h2norm)
    return containers.EvalRecord(
        scenario=scenario,
        mode=mode,
        r=r,
        dofs=count_dofs(mode, r, p, m, spec),
        erel_db=relative_error_db(h, model),
        eest_db=eest,
        ekc_db=ekc,
        ekw_db=ekw,
        wall_seconds=wall,
    )


def cmd_eval(args: argparse.Namespace) -> Optional[Dict[str, Any]]:
    h = containers.read_ir(args.input)
    model, provenance = containers.read_rom(args.rom)
    timings = provenance.get("timings") or {}
    record = _record(
        args.scenario or containers.container_stem(args.input).name,
        provenance.get("mode", "dts"),
        h,
        model,
        provenance.get("eloo_final"),
        provenance.get("weighted_norm"),
        provenance.get("sigma_next"),
        provenance.get("h2_norm"),
        sum(timings.values()) if timings else None,
    )
    text = containers.export_eval([record], args.out)
    if args.out:
        return {"csv": str(args.out), "r": record.r, "erel_db": record.erel_db, "eest_db": record.eest_db}
    _emit(text.rstrip("\r\n"))
    return None


def cmd_respond(args: argparse.Namespace) -> Optional[Dict[str, Any]]:
    model, _ = containers.read_rom(args.rom)
    omegas = parse_omegas(args.omegas)
    response = frequency_response(model, omegas)
    text = containers.export_response(omegas, response, args.out)
    if args.out:
        return {"csv": str(args.out), "points": int(omegas.size)}
    _emit(text.rstrip("\r\n"))
    return None


def cmd_bench(args: argparse.Namespace) -> Optional[Dict[str, Any]]:
    """Matched-order comparison of dead-time modes from one factorization per mode."""
    config = _pipeline_config(args)
    h = containers.read_ir(args.input)
    orders = sorted({int(tok) for tok in args.orders.split(",") if tok.strip()})
    modes = [tok.strip() for tok in args.modes.split(",") if tok.strip()]
    scenario = args.scenario or containers.container_stem(args.input).name
    records: List[containers.EvalRecord] = []

    for mode in modes:
        timings: Dict[str, float] = {}
        spec = _split_spec(h, mode, config.tde_threshold, timings)
        rectified = rectify(h, spec)
        full: EraResult = adaptive_era(
            rectified, gamma=config.gamma, b=config.block, q=config.power, seed=config.seed, dtype=config.dtype
        )
        timings.update(full.timings)
        base_wall = sum(timings.values())
        for order in orders:
            if order > full.order:
                logger.warning(
                    "Mode %s reached order %d only; skipping r=%d (lower --gamma to reach it)",
                    mode, full.order, order,
                )
                continue
            start = time.perf_counter()
            reduced = truncate(full, order)
            wall = base_wall + time.perf_counter() - start
            records.append(
                _record(
                    scenario,
                    mode,
                    h,
                    assemble(reduced.model, spec),
                    reduced.eloo_final,
                    reduced.weighted_norm,
                    reduced.sigma_next,
                    reduced.h2_norm,
                    wall,
                )
            )
        logger.info("Bench mode %s: adaptive order %d, residual delay %d", mode, full.order, total_residual(spec))

    text = containers.export_eval(records, args.out)
    if args.out:
        return {"csv": str(args.out), "rows": len(records)}
    _emit(text.rstrip("\r\n"))
    return None


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="Pipeline JSON (default: config/pipeline.json)")
    parser.add_argument("--gamma", type=float, default=None, help="Relative tolerance (default: 0.05)")
    parser.add_argument("--block", type=int, default=None, help="Sketch block size b (default: 32)")
    parser.add_argument("--power", type=int, default=None, help="Power iterations q (default: 2)")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (default: 0)")
    parser.add_argument("--mode", choices=DEAD_TIME_MODES, default=None, help="Dead-time mode (default: dts)")
    parser.add_argument("--threshold", type=float, default=None, help="Onset threshold relative to channel peak")
    parser.add_argument("--precision", choices=PRECISIONS, default=None, help="Sketch precision (default: double)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Adaptive randomized ERA for multichannel impulse responses"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic free-field dataset")
    p.add_argument("--geometry", choices=GEOMETRIES, default="semicircle")
    p.add_argument("--m", type=int, default=4, help="Number of sources (inputs)")
    p.add_argument("--p", type=int, default=3, help="Number of microphones (outputs)")
    p.add_argument("--modes", type=int, default=6, help="States of the shared reverberant core")
    p.add_argument("--fs", type=float, default=8000.0, help="Sample rate in Hz")
    p.add_argument("--duration", type=float, default=0.25, help="Record length in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Output stem for the IR container")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("delays", help="Estimate the delay matrix")
    p.add_argument("--in", dest="input", required=True, help="IR container")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_delays)

    p = sub.add_parser("split", help="Split a delay matrix into input and output dead times")
    p.add_argument("--delays", required=True, help="Delay matrix JSON")
    p.add_argument("--mode", choices=DEAD_TIME_MODES, default="dts")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("reduce", help="Build a structured ROM")
    p.add_argument("--in", dest="input", required=True, help="IR container")
    p.add_argument("--spec", default=None, help="Precomputed dead-time spec (skips estimation)")
    p.add_argument("--out", required=True, help="Output stem for the ROM container")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("eval", help="Evaluate a ROM against measured data")
    p.add_argument("--in", dest="input", required=True, help="IR container")
    p.add_argument("--rom", required=True)
    p.add_argument("--scenario", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("respond", help="Export the frequency response of a ROM")
    p.add_argument("--rom", required=True)
    p.add_argument("--omegas", default="0:pi:256", help="start:stop:count or comma list (rad/sample)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_respond)

    p = sub.add_parser("bench", help="Compare dead-time modes at matched orders")
    p.add_argument("--in", dest="input", required=True, help="IR container")
    p.add_argument("--orders", default="8,16,32")
    p.add_argument("--modes", default=",".join(DEAD_TIME_MODES))
    p.add_argument("--scenario", default=None)
    p.add_argument("--out", default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        summary = args.func(args)
        if summary is not None:
            _emit(json.dumps(summary, default=float))
        return 0
    except Exception as exc:  # pragma: no cover - CLI guard
        error = exc.to_dict() if isinstance(exc, HromError) else {"error": str(exc), "kind": type(exc).__name__}
        error["command"] = args.command
        print(json.dumps(error, default=float), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
