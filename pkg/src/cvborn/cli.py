"""Command-line interface: ``cvborn {sample,train,benchmark} CONFIG``.

Exit status is 0 on success, 1 for configuration or usage errors and 2 for
simulation failures. Set ``CVBORN_NUM_THREADS`` to limit the threads used by
the compiled sampling kernels.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_config
from .cvbm import CircuitTarget, baseline_band, first_in_band, records_to_csv, train
from .errors import CVBornError, SimulationError
from .fock import CutoffSpec, outer_product
from .gates import Circuit, apply_circuit, beamsplitter, cross_kerr, cubic_phase, displacement
from .homodyne.sampler import SampleMatrix, sample_homodyne

THREADS_ENV = "CVBORN_NUM_THREADS"
REFERENCE_BENCHMARK_SLOPE = 1.2997

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SIMULATION = 2


def _log(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_path(output) -> Path:
    return Path(output).with_suffix(".json")


def _write_summary(config: RunConfig, payload: dict) -> None:
    write_atomic(summary_path(config.output), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _apply_thread_env() -> None:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return
    import numba

    try:
        n = int(value)
    except ValueError:
        raise CVBornError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


# -- commands --------------------------------------------------------------


def cmd_sample(config: RunConfig) -> int:
    opts = config.sample
    circuit = config.build_circuit()
    start = time.monotonic()
    pure = apply_circuit(circuit)
    state = outer_product(pure) if opts.representation == "density" else pure
    samples = sample_homodyne(state, opts.shots, config.hbar, config.seed, opts.angles, opts.exact_erf)
    elapsed = time.monotonic() - start
    leakage = pure.leakage
    write_atomic(config.output, samples.to_csv())
    _write_summary(
        config,
        {
            "command": "sample",
            "shots": samples.shots,
            "modes": samples.modes,
            "seed": config.seed,
            "truncation_leakage": leakage,
            "mean": samples.values.mean(axis=0).tolist(),
            "std": samples.values.std(axis=0, ddof=1).tolist() if samples.shots > 1 else None,
            "output": str(config.output),
            "wall_time_s": elapsed,
        },
    )
    _log(f"shots={samples.shots} wall_time={elapsed:.3f}s leakage={leakage:.3e} -> {config.output}")
    return EXIT_OK


def cmd_train(config: RunConfig) -> int:
    opts = config.train
    circuit = config.build_circuit()
    tcfg = config.train_config()
    if opts.target_weights is not None:
        target = CircuitTarget(circuit, np.asarray(opts.target_weights))
    else:
        target = SampleMatrix.read(opts.target_samples)
    initial = np.zeros(circuit.num_weights) if opts.initial_weights is None else np.asarray(opts.initial_weights)

    every = max(1, tcfg.iterations // 20)

    def progress(rec):
        if rec.iteration % every == 0 or rec.iteration == tcfg.iterations:
            w = ", ".join(f"{v:+.4f}" for v in rec.weights)
            _log(f"iter {rec.iteration:4d}  loss {rec.loss:+.6f}  w [{w}]  {rec.wall_time:.1f}s")

    records = train(circuit, initial, target, tcfg, callback=progress)
    write_atomic(config.output, records_to_csv(records))

    best = min(records, key=lambda r: r.loss)
    summary = {
        "command": "train",
        "iterations": tcfg.iterations,
        "seed": tcfg.seed,
        "final_loss": records[-1].loss,
        "final_weights": records[-1].weights.tolist(),
        "min_loss": best.loss,
        "min_loss_iteration": best.iteration,
        "best_weights": best.weights.tolist(),
        "gradient_std": np.std([r.gradient for r in records if r.gradient is not None], axis=0).tolist(),
        "output": str(config.output),
        "wall_time_s": records[-1].wall_time,
    }
    if isinstance(target, CircuitTarget) and opts.baseline_repeats > 0:
        band = baseline_band(circuit, target.weights, tcfg, opts.baseline_repeats)
        entered = first_in_band(records, band, opts.band_width)
        summary.update(
            baseline_mean=band.mean,
            baseline_std=band.std,
            baseline_repeats=opts.baseline_repeats,
            band_width=opts.band_width,
            first_iteration_in_band=entered,
            target_weights=list(opts.target_weights),
        )
        _log(f"baseline {band.mean:+.6f} +/- {band.std:.6f}; first in band: {entered}")
    _write_summary(config, summary)
    _log(f"min loss {best.loss:+.6f} at iteration {best.iteration}; weights {best.weights.tolist()}")
    return EXIT_OK


def benchmark_circuit(modes: int, cutoff: int, hbar: float = 2.0) -> Circuit:
    """Reference non-Gaussian state used for timing.

    Displaced modes pass through cubic phase gates, cross-Kerr couplings on
    neighbours and a chain of balanced beamsplitters.
    """
    gates = [displacement(m, 0.5) for m in range(modes)]
    gates += [cubic_phase(m, 0.1) for m in range(modes)]
    gates += [cross_kerr(m, m + 1, 0.1) for m in range(modes - 1)]
    gates += [beamsplitter(m, m + 1, np.pi / 4) for m in range(modes - 1)]
    return Circuit(CutoffSpec(modes, cutoff), gates, hbar=hbar, max_leakage=1.0)


def fit_log_slope(modes, seconds) -> tuple[float, float]:
    """Slope and R^2 of a least-squares line through ``(modes, ln seconds)``."""
    x = np.asarray(modes, dtype=float)
    y = np.log(np.asarray(seconds, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / total if total > 0 else 1.0
    return float(slope), float(r2)


def run_benchmark(config: RunConfig) -> list[tuple[int, float, float]]:
    opts = config.benchmark
    rows = []
    for d in range(opts.min_modes, opts.max_modes + 1):
        state = apply_circuit(benchmark_circuit(d, config.cutoff, config.hbar))
        if opts.representation == "density":
            state = outer_product(state)
        large = d > opts.large_threshold
        warmup = opts.large_warmup if large else opts.warmup
        iterations = opts.large_iterations if large else opts.iterations
        for i in range(warmup):
            sample_homodyne(state, opts.shots, config.hbar, config.seed + i)
        times = np.empty(iterations)
        for i in range(iterations):
            t0 = time.monotonic()
            sample_homodyne(state, opts.shots, config.hbar, config.seed + i)
            times[i] = time.monotonic() - t0
        std = float(times.std(ddof=1)) if iterations > 1 else 0.0
        rows.append((d, float(times.mean()), std))
        _log(f"modes {d}: {times.mean():.4g} s +/- {std:.2g} ({iterations} runs)")
    return rows


def cmd_benchmark(config: RunConfig) -> int:
    rows = run_benchmark(config)
    lines = ["modes,mean_seconds,std_seconds"] + [f"{d},{m!r},{s!r}" for d, m, s in rows]
    write_atomic(config.output, "\n".join(lines) + "\n")
    summary = {"command": "benchmark", "rows": [list(r) for r in rows], "output": str(config.output)}
    if len(rows) >= 2:
        slope, r2 = fit_log_slope([r[0] for r in rows], [r[1] for r in rows])
        summary.update(slope=slope, r_squared=r2, reference_slope=REFERENCE_BENCHMARK_SLOPE)
        _log(f"ln(runtime) slope {slope:.4f} (R^2 {r2:.4f}); reference value {REFERENCE_BENCHMARK_SLOPE}")
    _write_summary(config, summary)
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "train": cmd_train, "benchmark": cmd_benchmark}


def run_config(config: RunConfig) -> int:
    return COMMANDS[config.command](config)


# -- entry point -----------------------------------------------------------


def list_presets() -> list[str]:
    root = resources.files("cvborn") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_preset(name: str) -> str:
    path = resources.files("cvborn") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise CVBornError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return path.read_text(encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvborn", description="Homodyne sampling and Born machine training.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("sample", "draw homodyne samples from a circuit's output state"),
        ("train", "train a circuit against a target with the MMD loss"),
        ("benchmark", "time the sampler for a range of mode counts"),
        ("run", "run whichever command the config file names"),
    ):
        p = sub.add_parser(name, help=helptext)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("config", nargs="?", help="path to a YAML run configuration")
        src.add_argument("--preset", help="name of a bundled configuration")
        p.add_argument("-o", "--output", help="override the config's output path")
        p.add_argument("--seed", type=int, help="override the config's seed")
    presets = sub.add_parser("presets", help="list or print bundled configurations")
    presets.add_argument("name", nargs="?", help="print this preset")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            if args.name:
                sys.stdout.write(read_preset(args.name))
            else:
                print("\n".join(list_presets()))
            return EXIT_OK
        config = parse_config(read_preset(args.preset)) if args.preset else load_config(args.config)
        if args.command != "run" and config.command != args.command:
            raise CVBornError(f"config is for '{config.command}', not '{args.command}'")
        if args.output:
            config = replace(config, output=args.output)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        _apply_thread_env()
        return run_config(config)
    except SimulationError as exc:
        _log(f"cvborn: simulation error: {exc}")
        return EXIT_SIMULATION
    except (CVBornError, OSError) as exc:
        _log(f"cvborn: error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
