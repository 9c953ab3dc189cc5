"""Command-line interface.

Each subcommand marshals files and flags into the service request models
and dispatches them either to the in-process handlers (default) or, with
``--server URL``, to a running service over HTTP; results are written back
to local files. Exit codes: 0 success, 1 invalid specification or
validation error, 2 I/O or connection error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .bench import SweepCell, SweepResult, emit_csv, emit_plot, parse_experiment_config
from .errors import InvalidSpec, RecoveryError
from .matrixio import read_matrix, write_matrix
from .model import SolverConfig
from .service.app import handle_gen, handle_solve
from .service.schemas import GenRequest, SolveRequest, SolverOptions, SweepRequest

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _post(server: str, path: str, payload: dict) -> dict:
    import httpx

    response = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    response.raise_for_status()
    return response.json()


def _parse_snr(text: str):
    if text.lower() == "noiseless":
        return None
    return float(text)


def _solver_options_from_file(path: str | None) -> SolverOptions | None:
    """Read solver overrides from a flat key = value file.

    Keys are the ``SolverConfig`` field names, with or without a
    ``solver.`` prefix; blank lines and ``#`` comments are skipped.
    """
    if path is None:
        return None
    fields = {f.name for f in dataclasses.fields(SolverConfig)}
    raw: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidSpec(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().removeprefix("solver.")
        value = value.strip()
        if key not in fields:
            raise InvalidSpec(f"{path}:{lineno}: unknown solver key {key!r}")
        if key == "lambda_mode":
            raw[key] = value
        elif key == "learn_b":
            raw[key] = value.lower() in ("1", "true", "yes")
        elif key in ("max_iter", "lambda_freeze_after"):
            raw[key] = None if value.lower() == "none" else int(value)
        else:
            raw[key] = float(value)
    return SolverOptions(**raw)


def _options_from_config(config: SolverConfig) -> SolverOptions:
    return SolverOptions(**dataclasses.asdict(config))


def _cmd_gen(args) -> int:
    req = GenRequest(
        n=args.n, m=args.m, l=args.l, k=args.k,
        beta_low=args.beta_low, beta_high=args.beta_high,
        snr_db=_parse_snr(args.snr), seed=args.seed,
    )
    if args.server:
        resp = _post(args.server, "/gen", req.model_dump())
    else:
        resp = handle_gen(req).model_dump()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "phi.csv", np.asarray(resp["phi"]))
    write_matrix(out / "y.csv", np.asarray(resp["y"]))
    write_matrix(out / "x_gen.csv", np.asarray(resp["x_gen"]))
    meta = {
        "n": args.n, "m": args.m, "l": args.l, "k": args.k,
        "support": resp["support"], "betas": resp["betas"],
        "snr_db": resp["snr_db"], "noise_level": resp["noise_level"],
        "beta_low": args.beta_low, "beta_high": args.beta_high,
        "seed": args.seed,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote instance to {out} (phi.csv, y.csv, x_gen.csv, meta.json)")
    return EXIT_OK


def _cmd_solve(args, algorithm: str | None = None) -> int:
    phi = read_matrix(args.phi)
    y = read_matrix(args.y)
    req = SolveRequest(
        phi=phi.tolist(),
        y=y.tolist(),
        algorithm=algorithm or args.algorithm,
        noise_level=args.noise_level,
        options=_solver_options_from_file(args.config),
    )
    if args.server:
        resp = _post(args.server, "/solve", req.model_dump())
    else:
        resp = handle_solve(req).model_dump()
    write_matrix(args.out, np.asarray(resp["x_hat"]))
    print(
        f"wrote {args.out} ({req.algorithm}: {resp['iterations']} iterations, "
        f"converged={resp['converged']})"
    )
    return EXIT_OK


def _cmd_oracle(args) -> int:
    return _cmd_solve(args, algorithm="exact_oracle")


def _cmd_sweep(args) -> int:
    spec = parse_experiment_config(Path(args.config).read_text())
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    out = Path(args.out or spec.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.server:
        req = SweepRequest(
            axis=spec.axis, values=list(spec.values), n=spec.n, m=spec.m, l=spec.l,
            k=spec.k, snr_db=spec.snr_db, beta_low=spec.beta_low,
            beta_high=spec.beta_high, algorithms=list(spec.algorithms),
            trials=spec.trials, base_seed=spec.base_seed,
            options=_options_from_config(spec.solver), workers=args.threads,
        )
        resp = _post(args.server, "/sweep", req.model_dump())
        cells = tuple(
            SweepCell(
                axis_value=c["axis_value"], algorithm=c["algorithm"],
                trials=c["trials"], failures=c["failures"],
                failure_rate=c["failure_rate"],
                mean_iterations=c["mean_iterations"],
                mean_runtime=c["mean_runtime_ms"] / 1e3,
            )
            for c in resp["cells"]
        )
        result = SweepResult(spec, cells)
    else:
        from .bench import run_sweep

        result = run_sweep(spec, workers=args.threads)
    csv_path = out / "sweep.csv"
    emit_csv(result, csv_path)
    print(f"wrote {csv_path}")
    if args.plot:
        svg_path = out / "sweep.svg"
        emit_plot(result, svg_path)
        print(f"wrote {svg_path}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("mmvtc.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmvtc",
        description="Row-sparse MMV recovery: solvers, benchmark sweeps and service.",
    )
    # metavar hides the debugging-only `oracle` subcommand from the usage line
    sub = parser.add_subparsers(
        dest="command", required=True, metavar="{gen,solve,sweep,serve}"
    )

    p = sub.add_parser("gen", help="generate a synthetic instance into a directory")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--beta-low", type=float, default=0.5)
    p.add_argument("--beta-high", type=float, default=1.0)
    p.add_argument("--snr", default="25", help="SNR in dB, or 'noiseless'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--server", default=None, help="base URL of a running service")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", help="recover sources from phi/y CSV files")
    p.add_argument("--phi", required=True)
    p.add_argument("--y", required=True)
    p.add_argument(
        "--algorithm", required=True,
        choices=["resbl_qm", "mfocuss", "tmfocuss", "iter_l2", "titer_l2", "exact_oracle"],
    )
    p.add_argument("--config", default=None, help="solver option overrides file")
    p.add_argument("--noise-level", type=float, default=None)
    p.add_argument("--out", required=True, help="output CSV for the estimate")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_solve)

    # debugging entry point for the dense block-space solver
    p = sub.add_parser("oracle")
    p.add_argument("--phi", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--noise-level", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--trials", type=int, default=None, help="override config trials")
    p.add_argument("--seed", type=int, default=None, help="override config base_seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes over trials")
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidSpec, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RecoveryError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # httpx errors without importing httpx eagerly
        name = type(exc).__module__
        if name.startswith("httpx"):
            import httpx

            if isinstance(exc, httpx.HTTPStatusError) and exc.response.status_code in (400, 422):
                print(f"error: {exc.response.text}", file=sys.stderr)
                return EXIT_INVALID
            print(f"connection error: {exc}", file=sys.stderr)
            return EXIT_IO
        raise


if __name__ == "__main__":
    sys.exit(main())
