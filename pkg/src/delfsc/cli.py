"""Command line entry point: ``delfsc <command> [flags]``.

Exit codes: 0 success, 2 invalid input or arguments, 3 a verify check failed.
Specs may be file paths or ``builtin:<name>`` (see ``delfsc specs``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import exact_info, io
from .capacity_search import SearchError, optimize_markov_rate, order_sweep
from .channel_model import ChannelError, ChannelSpec, sample_transmission
from .exact_info import ExactLimitError
from .input_models import (
    BlockProcessSpec,
    InputModelError,
    MarkovInputSpec,
    block_pmf,
    sample_path,
    stationarize,
    uniform_markov,
)
from .lemma_harness import CHECK_IDS, HarnessError, verify
from .trellis_estimator import EstimatorError, estimate_rate

log = logging.getLogger("delfsc")

EXIT_OK, EXIT_INVALID, EXIT_VERIFY_FAILED = 0, 2, 3

EXACT_COLUMNS = ("n", "s0", "mi_bits", "mi_rate", "input_entropy_bits", "output_entropy_bits")
CN_COLUMNS = ("n", "s0", "tol", "capacity_rate")
SEARCH_COLUMNS = io.ESTIMATE_COLUMNS + ("evaluations", "best_spec_path", "flags")
SAMPLE_COLUMNS = ("block", "input", "output")


class UsageError(ValueError):
    pass


def _need(args, name: str):
    val = getattr(args, name)
    if val is None:
        raise UsageError(f"--{name.replace('_', '-')} is required for '{args.command}'")
    return val


def _positive(args, name):
    val = _need(args, name)
    if val < 1:
        raise UsageError(f"--{name} must be >= 1, got {val}")
    return val


def _channel(args) -> ChannelSpec:
    return io.load_channel_spec(_need(args, "spec"))


def _markov_input(args, spec: ChannelSpec) -> MarkovInputSpec:
    if args.input is not None:
        inp = io.load_spec(args.input)
        if not isinstance(inp, MarkovInputSpec):
            raise UsageError(f"--input {args.input} is not a Markov input spec (needs 'm' and 'q')")
        if args.m is not None and args.m != inp.m:
            raise UsageError(f"--m {args.m} disagrees with input spec order {inp.m}")
    else:
        if args.m is None:
            raise UsageError(f"'{args.command}' needs --input or --m")
        inp = uniform_markov(spec.x_size, args.m)
    if inp.x_size != spec.x_size:
        raise UsageError(f"input alphabet {inp.x_size} != channel input alphabet {spec.x_size}")
    return inp


def _block_input(args, spec: ChannelSpec, n: int) -> np.ndarray:
    """Input law over X^n: uniform, a Markov spec's stationary block law, or a block pmf."""
    if args.input is None:
        return exact_info.uniform_pmf(spec.x_size, n)
    inp = io.load_spec(args.input)
    if isinstance(inp, MarkovInputSpec):
        return block_pmf(inp, n)
    if isinstance(inp, BlockProcessSpec):
        if inp.n != n:
            raise UsageError(f"block input has n={inp.n}, --n is {n}")
        return inp.pmf
    raise UsageError(f"--input {args.input} is not an input spec")


def _emit(args, columns, rows) -> str:
    fmt = args.format or "csv"
    if args.out is None:
        if fmt == "json":
            sys.stdout.write(io.dumps([{c: r.get(c) for c in columns} for r in rows]))
        else:
            sys.stdout.write(io.csv_text(columns, rows))
        return "<stdout>"
    io.write_table(args.out, columns, rows, fmt, append=getattr(args, "append", False))
    return str(args.out)


def _summary(args, text: str):
    print(text, file=sys.stderr if args.out is None else sys.stdout)


def _side_path(args, suffix: str) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    return out.with_name(out.stem + suffix)


# -- commands ------------------------------------------------------------------------


def cmd_exact_mi(args) -> int:
    spec = _channel(args)
    n = _positive(args, "n")
    pmf = _block_input(args, spec, n)
    law = exact_info.joint_law(pmf, spec, n)
    mi = exact_info.mutual_information(law)
    row = {
        "n": n,
        "s0": spec.s0,
        "mi_bits": mi,
        "mi_rate": mi / n,
        "input_entropy_bits": exact_info.entropy(law.input_pmf),
        "output_entropy_bits": exact_info.entropy(law.output_pmf),
    }
    where = _emit(args, EXACT_COLUMNS, [row])
    if args.joint is not None:
        io.atomic_write(args.joint, law.to_csv())
    _summary(args, f"exact-mi n={n}: I={mi:.12g} bits ({mi / n:.12g} bits/symbol) -> {where}")
    return EXIT_OK


def cmd_cn(args) -> int:
    spec = _channel(args)
    n = _positive(args, "n")
    tol = args.tol if args.tol is not None else 1e-9
    value, pmf = exact_info.exact_cn(spec, n, tol)
    row = {"n": n, "s0": spec.s0, "tol": tol, "capacity_rate": value}
    where = _emit(args, CN_COLUMNS, [row])
    side = _side_path(args, ".pmf.json")
    if side is not None:
        io.atomic_write(side, io.dumps({"n": n, "x_size": spec.x_size, "pmf": pmf.tolist(), "shift": "uniform"}))
    _summary(args, f"cn n={n}: C_n={value:.12g} bits/symbol -> {where}")
    return EXIT_OK


def _estimate_row(est, wall=None) -> dict:
    row = est.to_json()
    row["wall_time_s"] = wall
    return row


def cmd_estimate(args) -> int:
    spec = _channel(args)
    n, k, chains = _positive(args, "n"), _positive(args, "k"), _positive(args, "chains")
    seed = _need(args, "seed")
    inp = _markov_input(args, spec)
    start = time.perf_counter()
    est = estimate_rate(inp, spec, n, k, chains, seed)
    wall = time.perf_counter() - start if args.timing else None
    where = _emit(args, io.ESTIMATE_COLUMNS, [_estimate_row(est, wall)])
    _summary(
        args,
        f"estimate m={inp.m} n={n} k={k}: side-info rate {est.rate_side_info:.6f}, "
        f"lower bound {est.lower_bound:.6f} +- {est.std_error:.2g} -> {where}",
    )
    return EXIT_OK


def _search_row(est, evaluations, best_path, flags, wall=None) -> dict:
    row = _estimate_row(est, wall)
    row.update(evaluations=evaluations, best_spec_path=best_path or "", flags=";".join(flags))
    return row


def cmd_optimize(args) -> int:
    spec = _channel(args)
    n, k, chains = _positive(args, "n"), _positive(args, "k"), _positive(args, "chains")
    m, seed, budget = _need(args, "m"), _need(args, "seed"), _positive(args, "budget")
    start = time.perf_counter()
    res = optimize_markov_rate(spec, m, budget, n, k, chains, seed)
    wall = time.perf_counter() - start if args.timing else None
    side = _side_path(args, f".m{m}.json")
    if side is not None:
        io.save_spec(res.best, side)
    row = _search_row(res.estimate, res.evaluations, side.name if side else None, [], wall)
    where = _emit(args, SEARCH_COLUMNS, [row])
    _summary(args, f"optimize m={m}: lower bound {res.estimate.lower_bound:.6f} after {res.evaluations} evaluations -> {where}")
    return EXIT_OK


def _parse_m_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--m-list must be comma-separated integers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise UsageError(f"--m-list must list orders >= 0, got {text!r}")
    return vals


def cmd_sweep(args) -> int:
    spec = _channel(args)
    n, k, chains = _positive(args, "n"), _positive(args, "k"), _positive(args, "chains")
    seed, budget = _need(args, "seed"), _positive(args, "budget")
    m_list = _parse_m_list(_need(args, "m_list"))
    fp = io.fingerprint(io.channel_spec_to_json(spec))
    result = order_sweep(spec, m_list, n, k, chains, seed, budget, fingerprint=fp)
    rows = []
    for r in result.rows:
        side = _side_path(args, f".m{r.m}.json")
        if side is not None:
            io.save_spec(r.best, side)
        rows.append(_search_row(r.estimate, r.evaluations, side.name if side else None, r.flags))
    where = _emit(args, SEARCH_COLUMNS, rows)
    bounds = ", ".join(f"m={r.m}: {r.estimate.lower_bound:.6f}" for r in result.rows)
    flagged = sum(bool(r.flags) for r in result.rows)
    _summary(args, f"sweep {bounds}; {flagged} flagged -> {where}")
    return EXIT_OK


def cmd_verify(args) -> int:
    check = _need(args, "check")
    config = {}
    if args.config is not None:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot read {args.config}: {exc}") from None
    seed = args.seed if args.seed is not None else 0
    reports = verify(check, config, seed)
    text = io.dumps([r.to_json(timing=args.timing) for r in reports])
    if args.out is None:
        sys.stdout.write(text)
    else:
        io.atomic_write(args.out, text)
    failed = [r for r in reports if not r.passed]
    _summary(args, f"verify {check}: {len(reports) - len(failed)}/{len(reports)} passed")
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def cmd_sample(args) -> int:
    spec = _channel(args)
    n, k, seed = _positive(args, "n"), _positive(args, "k"), _need(args, "seed")
    if args.input is not None and isinstance(block := io.load_spec(args.input), BlockProcessSpec):
        path = stationarize(block, seed).sample(k * n)
    else:
        path = sample_path(_markov_input(args, spec), k * n, seed)
    obs, final_state = sample_transmission(path, spec, n, seed)
    rows = [
        {
            "block": i,
            "input": " ".join(map(str, path[i * n : (i + 1) * n])),
            "output": " ".join(map(str, blk)),
        }
        for i, blk in enumerate(obs.blocks)
    ]
    where = _emit(args, SAMPLE_COLUMNS, rows)
    _summary(args, f"sample k={k} n={n}: {sum(len(b) for b in obs.blocks)} symbols survived, final state {final_state} -> {where}")
    return EXIT_OK


def cmd_specs(args) -> int:
    for name in io.builtin_names():
        print(f"{io.BUILTIN_PREFIX}{name}")
    return EXIT_OK


COMMANDS = {
    "exact-mi": (cmd_exact_mi, "exact mutual information of one block (uniform input unless --input)"),
    "cn": (cmd_cn, "exact C_n(s0) by Blahut-Arimoto"),
    "estimate": (cmd_estimate, "Monte Carlo side-information rate and lower bound"),
    "optimize": (cmd_optimize, "search order-m Markov inputs for the best lower bound"),
    "sweep": (cmd_sweep, "optimize over a list of orders"),
    "verify": (cmd_verify, f"exact inequality checks ({', '.join(CHECK_IDS)} or all)"),
    "sample": (cmd_sample, "sample an input path and its per-block outputs"),
    "specs": (cmd_specs, "list built-in channel specs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delfsc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--spec")
        p.add_argument("--input")
        p.add_argument("--n", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--m-list", dest="m_list")
        p.add_argument("--chains", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--budget", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--check")
        p.add_argument("--config", help="JSON file of check overrides (verify)")
        p.add_argument("--joint", help="also write the joint law as CSV (exact-mi)")
        p.add_argument("--append", action="store_true", help="append CSV rows instead of overwriting")
        p.add_argument("--timing", action="store_true", help="record wall-clock times (breaks byte-identical output)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except (
        UsageError,
        io.SpecError,
        ChannelError,
        InputModelError,
        ExactLimitError,
        HarnessError,
        SearchError,
        ValueError,
    ) as exc:
        print(f"delfsc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EstimatorError as exc:
        print(f"delfsc {args.command}: estimator error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
