"""Command-line front end.

    ptorus --command sweep-gamma --R 10 --r 8 --m 0.5 --gamma 0:4:200 --N 256

Ranges use ``min:max:steps`` with inclusive endpoints.  A flat ``key = value``
config file may be given with ``--config``; flags override its values.  Every
run writes ``manifest.txt`` in the same key = value format, so
``--config out/manifest.txt`` reproduces the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, analysis, sweeps
from .discretize import BOUNDARY_CONDITIONS, Grid, SpinorMode, operator_pair
from .eigensolve import SolverError
from .geometry import TorusGeometry, check_half_odd

COMMANDS = ("spectrum", "sweep-gamma", "sweep-r", "eps", "proportion-study", "converge")
OUTPUT_ENV = "PTORUS_OUTPUT_DIR"
SPECTRUM_HEADER = "param,index,re_E,im_E,label,residual"
BRANCH_HEADER = "param,re_E,im_E"


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    command: str
    R: float = 10.0
    r: float = 8.0
    m: float = 0.5
    gamma: str = "0"
    r_range: str = ""
    N: int = sweeps.DEFAULT_N
    bc: str = "periodic"
    classify_tol: float = analysis.DEFAULT_CLASSIFY_TOL
    ep_tol: float = 1e-6
    split_tol: float = 1e-13
    sizes: str = "10x8,15x12,20x16"
    n_list: str = "128,256,512"
    output: str = ""
    vectors: bool = False
    workers: int = 1

    def gamma_grid(self) -> np.ndarray:
        return range_grid(self.gamma, "gamma")

    def r_grid(self) -> np.ndarray:
        return range_grid(self.r_range, "r_range")

    def size_list(self):
        return parse_sizes(self.sizes)

    def N_values(self):
        return [int(x) for x in self.n_list.split(",")]


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def fmt(x) -> str:
    """17 significant digits, so values round-trip exactly."""
    return format(float(x), ".17g")


def parse_range(text: str, field: str):
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            lo, hi, steps = v, v, 1
        elif len(parts) == 3:
            lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
        else:
            raise ValueError
    except ValueError:
        raise ConfigError(field, f"expected a number or min:max:steps, got {text!r}") from None
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigError(field, "range bounds must be finite")
    if steps < 1 or (steps == 1 and hi != lo) or (steps > 1 and hi <= lo):
        raise ConfigError(field, f"degenerate range {text!r}")
    return lo, hi, steps


def range_grid(text: str, field: str) -> np.ndarray:
    lo, hi, steps = parse_range(text, field)
    return np.linspace(lo, hi, steps)


def parse_sizes(text: str):
    out = []
    for item in str(text).split(","):
        try:
            R, r = item.lower().split("x")
            out.append((float(R), float(r)))
        except ValueError:
            raise ConfigError("sizes", f"expected RxR pairs like 10x8,15x12, got {text!r}") from None
    return out


def _coerce(name, value):
    kind = FIELD_TYPES[name]
    try:
        if kind == "float":
            v = float(value)
            if not np.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(name, f"invalid value {value!r}") from None
    return str(value)


def read_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigError(key, f"unknown config key (line {lineno})")
        values[key] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptorus", description=__doc__.split("\n\n")[0], allow_abbrev=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="flat key = value config file")
    p.add_argument("--command", choices=COMMANDS, default=S)
    p.add_argument("--R", default=S, help="center-to-tube-center radius")
    p.add_argument("--r", default=S, help="tube radius")
    p.add_argument("--m", default=S, help="azimuthal quantum number (half-odd)")
    p.add_argument("--gamma", default=S, help="value or min:max:steps")
    p.add_argument("--r-range", dest="r_range", default=S, help="min:max:steps for sweep-r")
    p.add_argument("--N", default=S, help="grid nodes in v (even, >= 8)")
    p.add_argument("--bc", choices=BOUNDARY_CONDITIONS, default=S)
    p.add_argument("--classify-tol", dest="classify_tol", default=S)
    p.add_argument("--ep-tol", dest="ep_tol", default=S)
    p.add_argument("--split-tol", dest="split_tol", default=S)
    p.add_argument("--sizes", default=S, help="R x r pairs for proportion-study, e.g. 10x8,15x12")
    p.add_argument("--n-list", dest="n_list", default=S, help="resolutions for converge, e.g. 128,256,512")
    p.add_argument("--output", default=S, help=f"output directory (default ${OUTPUT_ENV} or ./ptorus-out)")
    p.add_argument("--vectors", action="store_const", const="true", default=S, help="compute eigenvectors")
    p.add_argument("--workers", default=S)
    return p


def parse_config(argv=None, text: str | None = None) -> RunConfig:
    """Merge config text, then command-line flags, and validate."""
    values = {}
    if text is not None:
        values.update(read_config_text(text))
    if argv is not None:
        ns = vars(build_parser().parse_args(argv))
        path = ns.pop("config", None)
        if path is not None:
            try:
                file_text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
            values.update(read_config_text(file_text))
        values.update(ns)
    if "command" not in values:
        raise ConfigError("command", f"missing; one of {', '.join(COMMANDS)}")
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    if not kwargs.get("output"):
        kwargs["output"] = os.environ.get(OUTPUT_ENV, "ptorus-out")
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
    if cfg.R <= 0:
        raise ConfigError("R", "must be positive")
    if cfg.r <= 0:
        raise ConfigError("r", "must be positive")
    if cfg.r >= cfg.R:
        raise ConfigError("r", "r must be < R")
    try:
        check_half_odd(cfg.m)
    except ValueError:
        raise ConfigError("m", "m must be half-odd-integer (+-0.5, +-1.5, ...)") from None
    try:
        Grid(cfg.N)
    except ValueError:
        raise ConfigError("N", "N must be even and >= 8") from None
    if cfg.bc not in BOUNDARY_CONDITIONS:
        raise ConfigError("bc", f"must be one of {BOUNDARY_CONDITIONS}")
    if not 0 < cfg.classify_tol <= 1e-2:
        raise ConfigError("classify_tol", "must lie in (0, 1e-2]")
    if cfg.ep_tol < 1e-8:
        raise ConfigError("ep_tol", "must be >= 1e-8")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    lo, hi, steps = parse_range(cfg.gamma, "gamma")
    if lo < 0:
        raise ConfigError("gamma", "must be >= 0")
    if cfg.command in ("spectrum", "sweep-r") and steps != 1:
        raise ConfigError("gamma", f"{cfg.command} takes a single value")
    if cfg.command in ("eps", "proportion-study") and steps < 2:
        raise ConfigError("gamma", f"{cfg.command} needs a range min:max:steps")
    if cfg.command == "sweep-r":
        if not cfg.r_range:
            raise ConfigError("r_range", "sweep-r needs --r-range min:max:steps")
        rlo, rhi, _ = parse_range(cfg.r_range, "r_range")
        if rlo <= 0:
            raise ConfigError("r_range", "r must be positive")
        if rhi >= cfg.R:
            raise ConfigError("r_range", "r must be < R")
    if cfg.command == "proportion-study":
        sizes = cfg.size_list()
        ratios = [R / r for R, r in sizes]
        for (R, r), q in zip(sizes, ratios):
            if not 0 < r < R:
                raise ConfigError("sizes", f"({R}, {r}): need 0 < r < R")
            if abs(q - ratios[0]) > 1e-12 * ratios[0]:
                raise ConfigError("sizes", "all sizes must share one R/r ratio")
    if cfg.command == "converge":
        try:
            ns = cfg.N_values()
        except ValueError:
            raise ConfigError("n_list", "expected comma-separated integers") from None
        if len(ns) < 3:
            raise ConfigError("n_list", "need at least three resolutions")
        if any(b != 2 * a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_list", "each resolution must double the previous one")
        for n in ns:
            try:
                Grid(n)
            except ValueError:
                raise ConfigError("n_list", "every N must be even and >= 8") from None


def manifest_text(cfg: RunConfig, wall_time: float | None = None) -> str:
    lines = [f"# ptorus {__version__}"]
    if wall_time is not None:
        lines.append(f"# wall_time_s = {wall_time:.3f}")
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# -- emit ---------------------------------------------------------------


_WRITTEN: list = []


def _atomic_write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
        _WRITTEN.append(path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def spectrum_rows(param, spec, cls) -> list[str]:
    res = spec.residuals
    rows = []
    for i, (e, lab) in enumerate(zip(spec.eigenvalues, cls.labels)):
        r = res[i] if res is not None else float("nan")
        rows.append(f"{fmt(param)},{i},{fmt(e.real)},{fmt(e.imag)},{lab},{fmt(r)}")
    return rows


def spectrum_csv(points, spectra, classes) -> str:
    lines = [SPECTRUM_HEADER]
    for p, s, c in zip(points, spectra, classes):
        if s is not None:
            lines.extend(spectrum_rows(p, s, c))
    return "\n".join(lines) + "\n"


def branch_csv(branch) -> str:
    lines = [BRANCH_HEADER]
    for p, e in zip(branch.params, branch.values):
        lines.append(f"{fmt(p)},{fmt(e.real)},{fmt(e.imag)}")
    return "\n".join(lines) + "\n"


def eps_json(eps) -> str:
    items = [
        "  {"
        f'"param_value": {fmt(e.param_value)}, "branch_index": {int(e.branch_index)}, '
        f'"method": {json.dumps(e.method)}, "multiplicity": {int(e.multiplicity)}'
        "}"
        for e in eps
    ]
    if not items:
        return "[]\n"
    return "[\n" + ",\n".join(items) + "\n]\n"


def emit(diagram, path) -> list[Path]:
    """Write spectrum.csv, branch.csv and eps.json for a phase diagram."""
    out = Path(path)
    files = [
        _atomic_write(out / "spectrum.csv", spectrum_csv(diagram.points, diagram.spectra, diagram.classifications)),
        _atomic_write(out / "branch.csv", branch_csv(diagram.branch)),
        _atomic_write(out / "eps.json", eps_json(diagram.eps)),
    ]
    if diagram.continued is not None:
        files.append(_atomic_write(out / "continued_branch.csv", branch_csv(diagram.continued)))
    return files


# -- run ----------------------------------------------------------------


@dataclass
class ResultBundle:
    manifest: Path
    data_files: list
    eps_file: Path | None
    summary: str


class RunFailure(RuntimeError):
    pass


def _check_failed(diagram, name):
    if diagram.failed:
        raise RunFailure(f"solver failed at {name} = {fmt(diagram.failed[0])}")


def _run_spectrum(cfg, out):
    geom = TorusGeometry(cfg.R, cfg.r)
    g = float(cfg.gamma_grid()[0])
    pair = operator_pair(geom, SpinorMode(cfg.m, g, cfg.bc), Grid(cfg.N))
    try:
        spec = sweeps.solve_first_order(pair, g, cfg.vectors)
    except SolverError as exc:
        raise RunFailure(f"solver failed at gamma = {fmt(g)}: {exc}") from exc
    cls = analysis.classify(spec, cfg.classify_tol)
    files = [_atomic_write(out / "spectrum.csv", spectrum_csv([g], [spec], [cls]))]
    return files, None, f"{spec.n} eigenvalues, broken_fraction {cls.broken_fraction:.6g}"


def _diagram_summary(d):
    lo, hi = d.broken_fraction_range()
    return f"{len(d.points)} points, {len(d.eps)} EPs, broken_fraction [{lo:.6g}, {hi:.6g}]"


def _run_sweep_gamma(cfg, out):
    d = sweeps.sweep_gamma(
        TorusGeometry(cfg.R, cfg.r), cfg.m, cfg.bc, cfg.gamma_grid(), cfg.N,
        vectors=cfg.vectors, workers=cfg.workers, classify_tol=cfg.classify_tol, ep_tol=cfg.ep_tol,
    )
    _check_failed(d, "gamma")
    files = emit(d, out)
    return files, out / "eps.json", _diagram_summary(d)


def _run_sweep_r(cfg, out):
    d = sweeps.sweep_r(
        cfg.R, cfg.m, cfg.bc, float(cfg.gamma_grid()[0]), cfg.r_grid(), cfg.N,
        vectors=cfg.vectors, workers=cfg.workers, classify_tol=cfg.classify_tol, ep_tol=cfg.ep_tol,
    )
    _check_failed(d, "r")
    files = emit(d, out)
    return files, out / "eps.json", _diagram_summary(d)


def _run_eps(cfg, out):
    geom = TorusGeometry(cfg.R, cfg.r)
    grid = Grid(cfg.N)
    gammas = cfg.gamma_grid()
    window = (float(gammas[0]), float(gammas[-1]))
    eps = analysis.eps_from_oracle(geom, cfg.m, cfg.bc, grid, window)
    levels = analysis.SquaredLevels(geom, cfg.m, cfg.bc, grid)
    eps += analysis.eps_by_bisection(levels, window, cfg.ep_tol, scan=gammas)
    eps.sort(key=lambda e: (e.param_value, e.method))
    path = _atomic_write(out / "eps.json", eps_json(eps))
    n_oracle = sum(e.method == "hermitian-oracle" for e in eps)
    return [path], path, f"{n_oracle} oracle EPs, {len(eps) - n_oracle} bisection EPs"


def _opt(x):
    return "" if x is None else fmt(x)


def _run_proportion(cfg, out):
    sizes = cfg.size_list()
    ratio = sizes[0][0] / sizes[0][1]
    rows = sweeps.optimal_proportion_study(
        ratio, sizes, cfg.m, cfg.bc, cfg.gamma_grid(), cfg.N,
        vectors=cfg.vectors, split_tol=cfg.split_tol, workers=cfg.workers,
    )
    for row in rows:
        _check_failed(row.diagram, f"(R={fmt(row.R)}, r={fmt(row.r)}) gamma")
    lines = ["R,r,sign_flip,doublet_onset"]
    lines += [f"{fmt(x.R)},{fmt(x.r)},{_opt(x.sign_flip)},{_opt(x.doublet_onset)}" for x in rows]
    path = _atomic_write(out / "proportion.csv", "\n".join(lines) + "\n")
    onsets = ", ".join(_opt(x.doublet_onset) or "none" for x in rows)
    return [path], None, f"{len(rows)} sizes, doublet onsets {onsets}"


def _run_converge(cfg, out):
    res = sweeps.convergence_study(TorusGeometry(cfg.R, cfg.r), SpinorMode(cfg.m, 0.0, cfg.bc), cfg.N_values())
    header = "index,order,extrapolated," + ",".join(f"lambda_N{n}" for n in res.N_list)
    lines = [header]
    for i in range(res.eigenvalues.shape[1]):
        cols = [str(i), fmt(res.orders[i]), fmt(res.extrapolated[i])] + [fmt(x) for x in res.eigenvalues[:, i]]
        lines.append(",".join(cols))
    path = _atomic_write(out / "convergence.csv", "\n".join(lines) + "\n")
    orders = ", ".join(f"{o:.4f}" for o in res.orders)
    return [path], None, f"observed orders {orders}"


RUNNERS = {
    "spectrum": _run_spectrum,
    "sweep-gamma": _run_sweep_gamma,
    "sweep-r": _run_sweep_r,
    "eps": _run_eps,
    "proportion-study": _run_proportion,
    "converge": _run_converge,
}


def run(cfg: RunConfig) -> ResultBundle:
    out = Path(cfg.output)
    t0 = time.perf_counter()
    _WRITTEN.clear()
    try:
        files, eps_file, summary = RUNNERS[cfg.command](cfg, out)
    except BaseException:
        # no partial outputs survive a failed run
        for f in _WRITTEN:
            f.unlink(missing_ok=True)
        raise
    finally:
        _WRITTEN.clear()
    wall = time.perf_counter() - t0
    manifest = _atomic_write(out / "manifest.txt", manifest_text(cfg, wall))
    _WRITTEN.clear()
    summary = f"{cfg.command}: {summary}, wall time {wall:.2f} s"
    return ResultBundle(manifest, files, eps_file, summary)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"ptorus: invalid config: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    try:
        bundle = run(cfg)
    except (RunFailure, SolverError) as exc:
        print(f"ptorus: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ptorus: cannot write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    print(bundle.summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
