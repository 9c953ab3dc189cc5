"""FastAPI service wrapping the core package.

The handler functions are plain request-model-to-response-model functions;
the CLI calls them in process and the HTTP routes below expose them to
remote clients. Bad inputs map to HTTP 400, numerical solver failures on
valid inputs to HTTP 422.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import ALGORITHMS, ExperimentSpec, run_sweep
from ..errors import RecoveryError
from ..model import MMVProblem, SolverConfig
from ..synth import gen_instance
from .schemas import (
    AlgorithmsResponse,
    GenRequest,
    GenResponse,
    HealthResponse,
    SolveRequest,
    SolveResponse,
    SweepCellModel,
    SweepRequest,
    SweepResponse,
)


def handle_solve(req: SolveRequest) -> SolveResponse:
    problem = MMVProblem(req.phi, req.y, noise_level=req.noise_level)
    config = req.options.to_config() if req.options else SolverConfig()
    result = ALGORITHMS[req.algorithm](problem, config)
    return SolveResponse(
        x_hat=result.x_hat.tolist(),
        gamma=result.hyper.gamma.tolist(),
        b=result.hyper.b.tolist(),
        noise_var=result.hyper.lam,
        iterations=result.iterations,
        converged=result.converged,
        objective_trace=result.objective_trace.tolist(),
    )


def handle_gen(req: GenRequest) -> GenResponse:
    problem, truth = gen_instance(
        req.n, req.m, req.l, req.k, req.beta_low, req.beta_high, req.snr_db, req.seed
    )
    return GenResponse(
        phi=problem.phi.tolist(),
        y=problem.y.tolist(),
        x_gen=truth.x_gen.tolist(),
        support=truth.support.tolist(),
        betas=truth.betas.tolist(),
        snr_db=truth.snr_db,
        noise_level=problem.noise_level,
        seed=req.seed,
    )


def handle_sweep(req: SweepRequest) -> SweepResponse:
    config = req.options.to_config() if req.options else SolverConfig()
    spec = ExperimentSpec(
        axis=req.axis,
        values=tuple(req.values),
        n=req.n,
        m=req.m,
        l=req.l,
        k=req.k,
        snr_db=req.snr_db,
        beta_low=req.beta_low,
        beta_high=req.beta_high,
        algorithms=tuple(req.algorithms),
        trials=req.trials,
        base_seed=req.base_seed,
        solver=config,
    )
    result = run_sweep(spec, workers=req.workers)
    return SweepResponse(
        axis=spec.axis,
        base_seed=spec.base_seed,
        cells=[
            SweepCellModel(
                axis_value=c.axis_value,
                algorithm=c.algorithm,
                trials=c.trials,
                failures=c.failures,
                failure_rate=c.failure_rate,
                mean_iterations=c.mean_iterations,
                mean_runtime_ms=c.mean_runtime * 1e3,
            )
            for c in result.cells
        ],
    )


def create_app() -> FastAPI:
    app = FastAPI(title="mmvtc service", version=__version__)

    def _call(handler, req):
        try:
            return handler(req)
        except RecoveryError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/algorithms", response_model=AlgorithmsResponse)
    def algorithms():
        return AlgorithmsResponse(algorithms=sorted(ALGORITHMS))

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest):
        return _call(handle_solve, req)

    @app.post("/gen", response_model=GenResponse)
    def gen(req: GenRequest):
        return _call(handle_gen, req)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(req: SweepRequest):
        return _call(handle_sweep, req)

    return app


app = create_app()
