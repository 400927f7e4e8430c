"""Command-line front end: load a problem, run analyses, emit reports.

All computation happens behind the HTTP service; by default the commands talk
to an in-process instance of the application, and ``--server URL`` points the
same client at a remote deployment (started with ``semiflow serve``).

Exit codes: 0 chaotic / success, 1 not chaotic / check failure, 2
inconclusive, 64 usage error, 65 configuration error, 66 I/O error, 70
internal service error.

Reports are deterministic for a fixed configuration and seed; wall-clock
timestamps are segregated into ``run_meta.json``.
"""

from __future__ import annotations

import asyncio
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import click
import httpx
import numpy as np

from . import __version__
from .lpspace import Grid, GridFunction
from .lpspace import read_csv as read_profile_csv
from .lpspace import write_csv as write_profile_csv
from .sobolev import SobolevGridFunction, sobolev_read_csv, sobolev_write_csv

log = logging.getLogger("semiflow.cli")

EXIT_USAGE = 64
EXIT_CONFIG = 65
EXIT_IO = 66
EXIT_INTERNAL = 70

GRID_RANGE = (65, 1_048_576)
HORIZON_RANGE = (0.0, 1.0e6)
P_RANGE = (1.0, 64.0)


class ConfigError(Exception):
    """Invalid configuration: bad problem file, out-of-range override, or a
    request the service rejected."""


class ServiceFailure(Exception):
    """The service itself failed (HTTP 5xx)."""


@dataclass(frozen=True)
class RunConfig:
    """One resolved invocation: subcommand, paths, overrides, and seed."""

    subcommand: str
    problem_path: Optional[Path]
    out_dir: Path
    grid: int = 4096
    horizon: float = 50.0
    p: Optional[float] = None
    seed: int = 0
    tol_flow: float = 1e-9
    tol_norm: float = 1e-6
    fmt: str = "text"
    server: Optional[str] = None

    def validate(self) -> None:
        if not GRID_RANGE[0] <= self.grid <= GRID_RANGE[1]:
            raise ConfigError(f"--grid must lie in [{GRID_RANGE[0]}, {GRID_RANGE[1]}]")
        if not HORIZON_RANGE[0] < self.horizon <= HORIZON_RANGE[1]:
            raise ConfigError(f"--horizon must lie in ({HORIZON_RANGE[0]}, {HORIZON_RANGE[1]}]")
        if self.p is not None and not P_RANGE[0] <= self.p <= P_RANGE[1]:
            raise ConfigError(f"--p must lie in [{P_RANGE[0]}, {P_RANGE[1]}]")
        if self.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        for name, value in (("--tol-flow", self.tol_flow), ("--tol-norm", self.tol_norm)):
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory: {exc}") from exc

    def meta(self) -> dict:
        data = asdict(self)
        data["problem_path"] = None if self.problem_path is None else str(self.problem_path)
        data["out_dir"] = str(self.out_dir)
        return data


# ---------------------------------------------------------------------------
# Service client
# ---------------------------------------------------------------------------

class _InProcessTransport(httpx.BaseTransport):
    """Dispatch requests straight into the ASGI app without a socket."""

    def __init__(self, app) -> None:
        self._transport = httpx.ASGITransport(app=app, raise_app_exceptions=False)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def _dispatch() -> httpx.Response:
            response = await self._transport.handle_async_request(request)
            content = await response.aread()
            await response.aclose()
            return httpx.Response(response.status_code, headers=response.headers,
                                  content=content, request=request)

        return asyncio.run(_dispatch())


class ServiceClient:
    """Uniform POST interface over an in-process app or a remote server."""

    def __init__(self, server: Optional[str]) -> None:
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            from .service import create_app

            self._client = httpx.Client(
                transport=_InProcessTransport(create_app()),
                base_url="http://semiflow.internal", timeout=None)

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self._client.close()

    def post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise ConfigError(f"service request failed: {exc}") from exc
        if response.status_code >= 500:
            raise ServiceFailure(_error_detail(response))
        if response.status_code >= 400:
            raise ConfigError(_error_detail(response))
        return response.json()


def _error_detail(response) -> str:
    try:
        detail = response.json().get("detail")
    except ValueError:
        return f"service returned HTTP {response.status_code}"
    if isinstance(detail, str):
        return detail
    if isinstance(detail, list):  # pydantic validation errors
        parts = []
        for item in detail:
            loc = ".".join(str(piece) for piece in item.get("loc", ())
                           if piece not in ("body",))
            parts.append(f"{loc}: {item.get('msg', 'invalid')}")
        return "invalid request: " + "; ".join(parts)
    return f"service returned HTTP {response.status_code}"


# ---------------------------------------------------------------------------
# Input loading and output writing
# ---------------------------------------------------------------------------

def _load_problem(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"problem file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("problem file must contain a JSON object")
    return payload


def _join_channel(re_part: Sequence[float], im_part) -> np.ndarray:
    re_arr = np.asarray(re_part, dtype=float)
    if im_part is None:
        return re_arr
    return re_arr + 1j * np.asarray(im_part, dtype=float)


def _split_channel(values: np.ndarray) -> tuple[list, Optional[list]]:
    arr = np.asarray(values)
    if np.iscomplexobj(arr) and np.any(arr.imag != 0.0):
        return arr.real.tolist(), arr.imag.tolist()
    return np.real(arr).tolist(), None


def _parse_initial(raw: str) -> dict:
    if raw.startswith("indicator:"):
        pieces = raw[len("indicator:"):].split(",")
        if len(pieces) != 2:
            raise ConfigError("indicator initial data must look like 'indicator:a,b'")
        try:
            a, b = (float(piece) for piece in pieces)
        except ValueError as exc:
            raise ConfigError("indicator endpoints must be numbers") from exc
        return {"kind": "indicator", "interval": [a, b]}
    if raw.startswith("expr:"):
        return {"kind": "expression", "source": raw[len("expr:"):]}

    path = Path(raw)
    if not path.is_file():
        raise ConfigError(f"initial data file not found: {raw}")
    try:
        header = path.read_text(encoding="utf-8").splitlines()[0].strip()
    except (OSError, IndexError) as exc:
        raise ConfigError(f"cannot read initial data file: {exc}") from exc

    if header == "node,value,derivative":
        f = sobolev_read_csv(path)
        values_re, values_im = _split_channel(f.values)
        deriv_re, deriv_im = _split_channel(f.derivative)
        return {"kind": "samples", "nodes": f.grid.nodes.tolist(),
                "values_re": values_re, "values_im": values_im,
                "derivative_re": deriv_re, "derivative_im": deriv_im}
    if header.startswith("node,value"):
        f = read_profile_csv(path)
        values_re, values_im = _split_channel(f.values)
        return {"kind": "samples", "nodes": f.grid.nodes.tolist(),
                "values_re": values_re, "values_im": values_im}
    raise ConfigError("unrecognized initial data header (expected 'node,value_re' "
                      "or 'node,value,derivative')")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_meta(config: RunConfig, started: _dt.datetime) -> None:
    finished = _dt.datetime.now(_dt.timezone.utc)
    meta = {
        "started_at": started.isoformat(),
        "finished_at": finished.isoformat(),
        "duration_seconds": (finished - started).total_seconds(),
        "version": __version__,
        "config": config.meta(),
    }
    _write_json(config.out_dir / "run_meta.json", meta)


def _emit(config: RunConfig, payload: dict, text: str,
          csv_rows: Sequence[Sequence] = ()) -> None:
    if config.fmt == "json":
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    elif config.fmt == "csv" and csv_rows:
        click.echo("\n".join(",".join(str(cell) for cell in row)
                             for row in csv_rows))
    else:
        click.echo(text)


# ---------------------------------------------------------------------------
# Command plumbing
# ---------------------------------------------------------------------------

def _standard_options(fn):
    decorators = [
        click.option("--problem", "problem_path", required=True,
                     type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help="JSON problem description."),
        click.option("--out", "out_dir", default="semiflow-out", show_default=True,
                     type=click.Path(file_okay=False, path_type=Path),
                     help="Output directory for reports."),
        click.option("--grid", default=4096, show_default=True, type=int,
                     help="Grid resolution (number of nodes)."),
        click.option("--horizon", default=50.0, show_default=True, type=float,
                     help="Time horizon for orbit and occupancy scans."),
        click.option("--p", "p_override", default=None, type=float,
                     help="Override the exponent p from the problem file."),
        click.option("--seed", default=0, show_default=True, type=int,
                     help="Seed for randomized property sweeps."),
        click.option("--tol-flow", default=1e-9, show_default=True, type=float,
                     help="Flow integrator tolerance."),
        click.option("--tol-norm", default=1e-6, show_default=True, type=float,
                     help="Norm-identity tolerance."),
        click.option("--format", "fmt", default="text", show_default=True,
                     type=click.Choice(["json", "text", "csv"]),
                     help="Stdout format (files are always written)."),
        click.option("--server", default=None,
                     help="Remote service URL; default runs in-process."),
    ]
    for decorator in reversed(decorators):
        fn = decorator(fn)
    return fn


def _build_config(subcommand: str, kwargs: dict) -> RunConfig:
    config = RunConfig(
        subcommand=subcommand,
        problem_path=kwargs.get("problem_path"),
        out_dir=Path(kwargs["out_dir"]),
        grid=kwargs.get("grid", 4096),
        horizon=kwargs.get("horizon", 50.0),
        p=kwargs.get("p_override"),
        seed=kwargs.get("seed", 0),
        tol_flow=kwargs.get("tol_flow", 1e-9),
        tol_norm=kwargs.get("tol_norm", 1e-6),
        fmt=kwargs.get("fmt", "text"),
        server=kwargs.get("server"),
    )
    config.validate()
    return config


def _analysis_command(subcommand: str, endpoint: str, report_stem: str,
                      **kwargs) -> int:
    config = _build_config(subcommand, kwargs)
    started = _dt.datetime.now(_dt.timezone.utc)
    payload: dict = {"problem": _load_problem(config.problem_path)}
    if config.p is not None:
        payload["p"] = config.p
    with ServiceClient(config.server) as client:
        response = client.post(endpoint, payload)
    report = {key: value for key, value in response.items() if key != "text"}
    _write_json(config.out_dir / f"{report_stem}.json", report)
    (config.out_dir / f"{report_stem}.txt").write_text(
        response["text"] + "\n", encoding="utf-8")
    _write_meta(config, started)
    csv_rows = [("field", "value"),
                ("verdict", response["verdict"]),
                ("exit_code", response["exit_code"])]
    _emit(config, report, response["text"], csv_rows)
    return int(response["exit_code"])


@click.group()
@click.version_option(__version__, prog_name="semiflow")
def cli() -> None:
    """Analysis toolkit for weighted composition semigroups on the line.

    Subcommands talk to the bundled HTTP service (in-process by default,
    remote via --server).  Defaults: tol-flow 1e-9, tol-norm 1e-6,
    horizon 50, grid 4096.
    """


@cli.command()
@_standard_options
def analyze(**kwargs) -> int:
    """Classify the problem: chaotic-with-right-inverses, not chaotic, or
    inconclusive.  Exit code 0/1/2 mirrors the verdict."""
    return _analysis_command("analyze", "/analyze", "report", **kwargs)


@cli.command(name="sobolev-analyze")
@_standard_options
def sobolev_analyze(**kwargs) -> int:
    """Classify the problem on the pinned Sobolev space (left endpoint value
    zero).  Exit code 0/1/2 mirrors the verdict."""
    return _analysis_command("sobolev-analyze", "/sobolev-analyze",
                             "sobolev_report", **kwargs)


@cli.command()
@_standard_options
@click.option("--initial", required=True,
              help="Initial datum: CSV path, 'indicator:a,b', or 'expr:SOURCE'.")
@click.option("--times", required=True,
              help="Comma-separated evaluation times, e.g. '0,0.5,1'.")
@click.option("--mode", default="interval", show_default=True,
              type=click.Choice(["interval", "sobolev"]),
              help="Evolve on the weighted interval space or the pinned Sobolev space.")
def simulate(initial: str, times: str, mode: str, **kwargs) -> int:
    """Evolve an initial datum and write per-time profiles plus a norm table."""
    config = _build_config("simulate", kwargs)
    started = _dt.datetime.now(_dt.timezone.utc)
    try:
        time_list = [float(piece) for piece in times.split(",") if piece.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse --times: {exc}") from exc
    if not time_list:
        raise ConfigError("--times must list at least one time")

    payload = {
        "problem": _load_problem(config.problem_path),
        "times": time_list,
        "initial": _parse_initial(initial),
        "mode": mode,
        "grid": config.grid,
    }
    if config.p is not None:
        payload["p"] = config.p
    with ServiceClient(config.server) as client:
        response = client.post("/simulate", payload)

    profile_files = []
    for index, profile in enumerate(response["profiles"]):
        name = f"profile_{index:03d}.csv"
        nodes = np.asarray(profile["nodes"], dtype=float)
        values = _join_channel(profile["values_re"], profile["values_im"])
        if response["mode"] == "sobolev":
            derivative = _join_channel(profile["derivative_re"],
                                       profile["derivative_im"])
            sobolev_write_csv(SobolevGridFunction(Grid(nodes), values, derivative),
                              config.out_dir / name)
        else:
            write_profile_csv(GridFunction(Grid(nodes), values),
                              config.out_dir / name)
        profile_files.append({"index": index, "t": profile["t"], "file": name})

    norm_lines = ["t,norm"] + [f"{t!r},{value!r}" for t, value in response["norms"]]
    (config.out_dir / "norms.csv").write_text("\n".join(norm_lines) + "\n",
                                              encoding="utf-8")
    report = {"mode": response["mode"], "p": response["p"],
              "norms": response["norms"], "profiles": profile_files}
    _write_json(config.out_dir / "simulate_report.json", report)
    _write_meta(config, started)

    text = "\n".join([f"mode: {response['mode']}   p = {response['p']!r}",
                      "t, norm"]
                     + [f"{t!r}, {value!r}" for t, value in response["norms"]])
    csv_rows = [("t", "norm")] + [(repr(t), repr(v)) for t, v in response["norms"]]
    _emit(config, report, text, csv_rows)
    return 0


@cli.command()
@_standard_options
@click.option("--inject-fault", is_flag=True, default=False,
              help="Deliberately corrupt the right inverse (verification demo).")
@click.option("--no-refine", is_flag=True, default=False,
              help="Skip the coarse-versus-fine grid comparison.")
def verify(inject_fault: bool, no_refine: bool, **kwargs) -> int:
    """Run the invariant suites (flow laws, cocycle, identities, occupancy).

    Exit code 0 only when every check passes."""
    config = _build_config("verify", kwargs)
    started = _dt.datetime.now(_dt.timezone.utc)
    payload = {
        "problem": _load_problem(config.problem_path),
        "grid": config.grid,
        "horizon": config.horizon,
        "tol_flow": config.tol_flow,
        "tol_norm": config.tol_norm,
        "seed": config.seed,
        "inject_fault": inject_fault,
        "refine": not no_refine,
    }
    if config.p is not None:
        payload["p"] = config.p
    with ServiceClient(config.server) as client:
        response = client.post("/verify", payload)

    _write_json(config.out_dir / "verify_report.json", response)
    _write_meta(config, started)

    lines = []
    for check in response["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        line = (f"{status}  {check['name']:<40s} "
                f"error {check['max_error']:.3e}  tol {check['tolerance']:.1e}")
        if check["detail"]:
            line += f"  ({check['detail']})"
        lines.append(line)
    if response.get("refinement"):
        lines.append("grid refinement (right-inverse / cascade errors):")
        for row in response["refinement"]:
            lines.append(f"  grid {row['grid']:>6d}: "
                         f"{row['right_inverse_error']:.3e} / "
                         f"{row['cascade_error']:.3e}")
    lines.append("all checks passed" if response["all_pass"]
                 else "some checks FAILED")
    csv_rows = ([("name", "max_error", "tolerance", "passed")]
                + [(c["name"], repr(c["max_error"]), repr(c["tolerance"]),
                    c["passed"]) for c in response["checks"]])
    _emit(config, response, "\n".join(lines), csv_rows)
    return 0 if response["all_pass"] else 1


@cli.command()
@_standard_options
@click.option("--interval", required=True,
              help="Target interval 'a,b' for the occupancy scan.")
@click.option("--probes", default=101, show_default=True, type=int,
              help="Number of probe points.")
def occupancy(interval: str, probes: int, **kwargs) -> int:
    """Measure occupancy times over a probe grid against the explicit bound."""
    config = _build_config("occupancy", kwargs)
    started = _dt.datetime.now(_dt.timezone.utc)
    pieces = interval.split(",")
    if len(pieces) != 2:
        raise ConfigError("--interval must look like 'a,b'")
    try:
        a, b = (float(piece) for piece in pieces)
    except ValueError as exc:
        raise ConfigError("--interval endpoints must be numbers") from exc

    payload = {
        "problem": _load_problem(config.problem_path),
        "interval": [a, b],
        "horizon": config.horizon,
        "probes": probes,
    }
    with ServiceClient(config.server) as client:
        response = client.post("/occupancy", payload)

    _write_json(config.out_dir / "occupancy.json", response)
    csv_lines = ["y,occupancy"] + [f"{y!r},{occ!r}"
                                   for y, occ in response["measurements"]]
    (config.out_dir / "occupancy.csv").write_text("\n".join(csv_lines) + "\n",
                                                  encoding="utf-8")
    _write_meta(config, started)

    text = "\n".join([
        f"interval             : [{a!r}, {b!r}]",
        f"reciprocal integral  : {response['reciprocal_integral']!r}",
        f"transit time         : {response['transit']!r}",
        f"occupancy constant   : {response['c_formula']!r}",
        f"measured sup         : {response['measured_sup']!r}",
        f"bound satisfied      : {response['bound_satisfied']}",
        f"witness              : y = {response['witness']['y']!r}, "
        f"occupancy = {response['witness']['occupancy']!r}",
    ])
    csv_rows = ([("y", "occupancy")]
                + [(repr(y), repr(occ)) for y, occ in response["measurements"]])
    _emit(config, response, text, csv_rows)
    return 0 if response["bound_satisfied"] else 1


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> int:
    """Run the analysis service as an HTTP server."""
    try:
        import uvicorn
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise ConfigError("uvicorn is not installed; install the "
                          "'server' extra to run the service") from exc
    from .service import create_app

    level = os.environ.get("SEMIFLOW_LOG", "info").lower()
    uvicorn.run(create_app(), host=host, port=port, log_level=level)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _configure_logging() -> None:
    name = os.environ.get("SEMIFLOW_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    no_args_help = getattr(click.exceptions, "NoArgsIsHelpError", ())
    try:
        result = cli.main(args=argv, standalone_mode=False)
        return int(result) if isinstance(result, int) else 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 130
    except click.UsageError as exc:
        if no_args_help and isinstance(exc, no_args_help):
            click.echo(exc.format_message())
            return 0
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except ServiceFailure as exc:
        click.echo(f"service error: {exc}", err=True)
        return EXIT_INTERNAL
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
