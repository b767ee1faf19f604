#!/usr/bin/env python3
"""
gr-jidds command line: BER sweeps, detector comparison, density-evolution
traces and thresholds, neighborhood tables and code generation.

Results go to --out FILE (plus FILE.meta with the effective configuration)
or to stdout. Exit codes: 0 success, 2 configuration error, 3 a run that
did not converge.
"""

import argparse
import csv
import io
import logging
import sys
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .analysis_neighborhood import NeighborhoodParams, neighborhood_table
from .channel2d import load_channel
from .config import COMMANDS, RunConfig
from .density_evolution import DeSettings, de_run, threshold_search
from .detector2d import LLR_CLAMP
from .exceptions import BracketError, ConfigError, JiddsError
from .jidds import (
    IterationSchedule,
    JiddsReceiver,
    SweepSettings,
    ber_sweep,
    build_link,
    detector_ber_compare,
    sweep_points,
)
from .ldpc_code import DegreeDistribution, construct_regular_code, save_alist

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3

SIMULATE_COLUMNS = ("snr_db", "sigma", "frames", "bits", "bit_errors", "ber", "frame_errors", "fer", "elapsed_s", "seed")
COMPARE_COLUMNS = (
    "snr_db",
    "sigma",
    "frames",
    "bits",
    "full_errors",
    "full_ber",
    "window_errors",
    "window_ber",
    "elapsed_s",
    "seed",
)
TRACE_COLUMNS = ("t", "l", "p", "sigma", "status")
NEIGHBORHOOD_COLUMNS = ("t", "q_v", "q_c", "gamma_over_n")

DEFAULT_COMPARE_PAGE = (64, 64)
DEFAULT_WINDOW = (5, 5)


def setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger("gr_jidds").setLevel(level)


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def _render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue()


def _emit(config: RunConfig, text: str) -> None:
    if not config.out:
        sys.stdout.write(text)
        return
    with open(config.out, "w", newline="") as f:
        f.write(text)
    config.save(
        config.out + ".meta",
        comments={
            "version": __version__,
            "llr_clamp": LLR_CLAMP,
            "de_grid": f"{config.llr_max}/{config.delta}",
            "de_samples": config.samples,
            "master_seed": config.seed,
        },
    )
    logger.info("wrote %s", config.out)


def _progress() -> bool:
    return sys.stderr.isatty()


def _sweep_settings(config: RunConfig) -> SweepSettings:
    return SweepSettings(
        max_frames=config.max_frames,
        min_errors=config.min_errors,
        seed=config.seed,
        workers=config.workers,
        batch_frames=config.batch_frames,
        timing=config.timing,
    )


def _de_settings(config: RunConfig) -> DeSettings:
    det_iterations = config.iteration_counts()[0]
    return DeSettings(
        samples=config.samples,
        llr_max=config.llr_max,
        delta=config.delta,
        p_ers=config.p_ers,
        det_iterations=det_iterations,
        workers=config.workers,
    )


def _page_of(text: str, default):
    if text == "auto":
        return default
    try:
        n_rows, n_cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ConfigError("grid", f"expected RxC or auto, got {text!r}")
    if n_rows < 1 or n_cols < 1:
        raise ConfigError("grid", f"page dimensions must be positive, got {text!r}")
    return n_rows, n_cols


def cmd_simulate(config: RunConfig) -> int:
    code, channel, mapping = build_link(
        config.code,
        channel=config.channel,
        grid=config.grid,
        mapping=config.mapping,
        mapping_seed=config.mapping_seed,
        coset=config.coset,
        seed=config.seed,
        girth_min=config.girth,
    )
    receiver = JiddsReceiver(
        code,
        mapping,
        channel,
        IterationSchedule(*config.iteration_counts()),
        early_exit=config.early_exit,
        window=config.window_halves() if config.window else None,
    )
    logger.info("code N=%d K=%d, page %dx%d, channel %s", code.n, code.k, mapping.n_rows, mapping.n_cols, channel.name)
    points = sweep_points(channel, code.rate, config.snr_grid(), config.sigma_grid())
    table = ber_sweep(receiver, points, _sweep_settings(config), progress=_progress())
    rows = [
        (p.snr_db, p.sigma, p.frames, p.bits, p.bit_errors, p.ber, p.frame_errors, p.fer, p.elapsed_s, p.seed)
        for p in table
    ]
    _emit(config, _render_csv(SIMULATE_COLUMNS, rows))
    return EXIT_OK


def cmd_threshold(config: RunConfig) -> int:
    degrees = DegreeDistribution.regular(*config.degree_pair())
    channel = load_channel(config.channel)
    report = threshold_search(
        degrees,
        channel,
        mode=config.mode,
        tol=config.tol,
        bracket=config.bracket_bounds(),
        settings=_de_settings(config),
        seed=config.seed,
    )
    logger.info("threshold sigma*=%.4f (normalized %.4f)", report.sigma, report.normalized_sigma)
    _emit(config, report.to_text())
    return EXIT_OK


def cmd_detector_compare(config: RunConfig) -> int:
    channel = load_channel(config.channel)
    shape = _page_of(config.grid, DEFAULT_COMPARE_PAGE)
    window = config.window_halves() if config.window else DEFAULT_WINDOW
    points = sweep_points(channel, 1.0, config.snr_grid(), config.sigma_grid())
    table = detector_ber_compare(
        channel,
        shape,
        points,
        _sweep_settings(config),
        window=window,
        det_iterations=config.iteration_counts()[0],
        progress=_progress(),
    )
    rows = [
        (
            c.snr_db,
            c.sigma,
            c.frames,
            c.bits,
            c.full_errors,
            c.full_ber,
            c.window_errors,
            c.window_ber,
            c.elapsed_s,
            c.seed,
        )
        for c in table
    ]
    _emit(config, _render_csv(COMPARE_COLUMNS, rows))
    return EXIT_OK


def cmd_de_trace(config: RunConfig) -> int:
    degrees = DegreeDistribution.regular(*config.degree_pair())
    channel = load_channel(config.channel)
    settings = _de_settings(config)
    rows = []
    stuck = False
    for index, sigma in enumerate(config.sigma_grid()):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(index,)))
        trace = de_run(degrees, channel, sigma, settings, rng, mode=config.mode)
        rows += [(t, l, p, sigma, trace.status) for t, l, p in trace.rounds]
        if not trace.converged:
            logger.warning("sigma %.4f: density evolution is stuck at p=%.6g", sigma, trace.final_p)
            stuck = True
    _emit(config, _render_csv(TRACE_COLUMNS, rows))
    return EXIT_NOT_CONVERGED if stuck else EXIT_OK


def cmd_neighborhood(config: RunConfig) -> int:
    d_v, d_c = config.degree_pair()
    f_c, f_d = config.window_halves() if config.window else (1, 1)
    params = NeighborhoodParams(
        t=0, I_c=config.iteration_counts()[1], d_v=d_v, d_c=d_c, F_c=f_c, F_d=f_d, N=config.length
    )
    _emit(config, _render_csv(NEIGHBORHOOD_COLUMNS, neighborhood_table(params, config.t_max)))
    return EXIT_OK


def cmd_code_gen(config: RunConfig) -> int:
    n, d_v, d_c = config.code_params()
    pcm = construct_regular_code(n, d_v, d_c, girth_min=config.girth, seed=config.seed)
    save_alist(pcm, config.out)
    config.save(config.out + ".meta", comments={"version": __version__, "master_seed": config.seed})
    logger.info("wrote (%d,%d) code with N=%d, M=%d to %s", d_v, d_c, pcm.n_cols, pcm.n_rows, config.out)
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "threshold": cmd_threshold,
    "detector-compare": cmd_detector_compare,
    "de-trace": cmd_de_trace,
    "neighborhood": cmd_neighborhood,
    "code-gen": cmd_code_gen,
}


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key=value configuration file; flags override its keys")
    common.add_argument("--code", help="alist path or generator parameters N,DV,DC")
    common.add_argument("--channel", help="HA, HB, AWGN or a channel matrix file")
    common.add_argument("--snr", help="SNR grid in dB, a:b:step or a single value")
    common.add_argument("--sigma", help="noise sigma grid, a:b:step or a single value")
    common.add_argument("--iters", help="DET/IC/IOUT iteration counts")
    common.add_argument("--seed", type=int)
    common.add_argument("--max-frames", dest="max_frames", type=int)
    common.add_argument("--min-errors", dest="min_errors", type=int)
    common.add_argument("--out", help="output file; FILE.meta is written next to it")
    common.add_argument("--grid", help="page shape RxC or auto")
    common.add_argument("--mapping", choices=("row-major", "random"))
    common.add_argument("--mapping-seed", dest="mapping_seed", type=int)
    common.add_argument("--coset", choices=("zero", "random"))
    common.add_argument("--workers", type=int)
    common.add_argument("--batch-frames", dest="batch_frames", type=int)
    common.add_argument("--early-exit", dest="early_exit", action="store_const", const=True)
    common.add_argument("--no-timing", dest="timing", action="store_const", const=False, help="write elapsed_s as 0")
    common.add_argument("--window", help="windowed detector half widths F_C,F_D")
    common.add_argument("--mode", choices=("te", "non-te"))
    common.add_argument("--tol", type=float)
    common.add_argument("--bracket", help="threshold search bracket LO:HI")
    common.add_argument("--samples", type=int, help="Monte-Carlo LLR samples per detector stage")
    common.add_argument("--delta", type=float, help="LLR quantization step")
    common.add_argument("--llr-max", dest="llr_max", type=float)
    common.add_argument("--p-ers", dest="p_ers", type=float)
    common.add_argument("--degrees", help="regular degree pair DV,DC")
    common.add_argument("--girth", type=int)
    common.add_argument("--t-max", dest="t_max", type=int)
    common.add_argument("--length", type=int, help="code length N for the neighborhood bound")
    common.add_argument("-v", "--verbose", action="count", help="-v for INFO, -vv for DEBUG")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gr-jidds", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_arguments()
    for name in COMMANDS:
        subparsers.add_parser(name, parents=[common], argument_default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    setup_logging(args.pop("verbose", 0))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        config = RunConfig.from_file(config_path) if config_path else RunConfig()
        config = config.replace(command=command, **args).validate()
        return HANDLERS[command](config)
    except BracketError as e:
        logger.error("threshold search failed: %s", e)
        return EXIT_NOT_CONVERGED
    except (JiddsError, ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
