"""Experiment harness: generate samples, fit trains, evaluate errors,
and orchestrate full sweeps, emitting one fixed-schema results.csv.

Usage: ttrs {sample|fit|eval|sweep} [--config file.json] [overrides].
Exit codes: 0 success, 2 configuration error, 3 partial failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import continuous as cont
from . import engine
from .empirical import load_samples, save_samples
from .errors import ConfigError, TTRSError
from .markov import (
    GinzburgLandauSpec,
    IsingSpec,
    gl_chain_factors,
    gl_discretize,
    ising_chain_factors,
    ising_spec_to_markov,
    markov_spec_from_json,
    markov_to_tt,
    sample_ancestral,
    sample_gibbs,
    sample_mh_continuous,
)
from .sketching import markov_sketch_plan
from .tensor_core import load_tt, save_tt, tt_rel_l2_error

CSV_COLUMNS = [
    "model", "algorithm", "order", "d", "n", "M", "N", "trial",
    "err", "err_a", "err_e", "err_t", "wall_ms",
]

# Per-trial seed stride; documented so runs are reproducible by hand.
SEED_STRIDE = 10007

_MODELS = ("gl-discrete", "gl-continuous", "ising", "markov-file")
_SAMPLERS = ("ancestral", "gibbs", "mh")
_ALGORITHMS = ("tt-rs", "tt-s")


@dataclass
class ExperimentConfig:
    model: str
    d_list: list
    n_list: list = field(default_factory=lambda: [5])
    big_n_list: list = field(default_factory=lambda: [10000])
    m_basis: int = 15
    trials: int = 1
    seed: int = 0
    order: int | None = None
    ranks: object = None
    algorithm: str = "tt-rs"
    sampler: str | None = None
    beta: float = 1.0
    lam: float = 1.0
    h: float = 1.0
    interval: tuple = (-4.0, 4.0)
    alphabet: tuple = (-1.0, 1.0)
    markov_file: str | None = None
    burn_in: int = 1000
    thin: int = 1
    chains: int = 10
    sigma: float = 0.5
    outdir: str = "runs"
    jobs: int | None = None

    def validate(self):
        if self.model not in _MODELS:
            raise ConfigError(f"model: {self.model!r} not one of {_MODELS}")
        if not self.d_list:
            raise ConfigError("d: sweep list must be non-empty")
        if any(int(d) < 1 for d in self.d_list):
            raise ConfigError("d: entries must be >= 1")
        if not self.big_n_list or any(int(n) < 1 for n in self.big_n_list):
            raise ConfigError("N: sweep list must be non-empty and positive")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.model == "markov-file" and not self.markov_file:
            raise ConfigError("markov_file: required for model markov-file")
        if self.algorithm not in _ALGORITHMS:
            raise ConfigError(f"algorithm: {self.algorithm!r} not one of {_ALGORITHMS}")
        if self.sampler is not None and self.sampler not in _SAMPLERS:
            raise ConfigError(f"sampler: {self.sampler!r} not one of {_SAMPLERS}")
        if self.model == "gl-continuous" and self.sampler in ("ancestral", "gibbs"):
            raise ConfigError("sampler: continuous model needs the mh sampler")
        if self.model == "markov-file" and self.sampler == "gibbs":
            raise ConfigError("sampler: gibbs needs a chain-factor model")
        if self.thin < 1:
            raise ConfigError("thin: must be >= 1")
        if self.chains < 1:
            raise ConfigError("chains: must be >= 1")
        return self

    @property
    def effective_sampler(self) -> str:
        if self.sampler:
            return self.sampler
        return "mh" if self.model == "gl-continuous" else "ancestral"

    def effective_order(self) -> int:
        if self.order is not None:
            return int(self.order)
        if self.model == "ising":
            return 2
        if self.model == "markov-file":
            return self._markov_spec().order
        return 1

    def ranks_for(self, d: int):
        r = self.ranks
        if r is None or np.isscalar(r):
            return r
        if isinstance(r, dict):
            edge, interior = int(r["edge"]), int(r["interior"])
            if d < 3:
                return [edge] * (d - 1)
            return [edge] + [interior] * (d - 3) + [edge]
        r = [int(x) for x in r]
        if len(r) != d - 1:
            raise ConfigError(f"ranks: list of {len(r)} cannot serve d={d}")
        return r

    def _markov_spec(self):
        text = Path(self.markov_file).read_text()
        return markov_spec_from_json(text)

    def ground_truth_spec(self, d: int, n: int):
        """Discrete chain spec for one grid cell."""
        if self.model == "gl-discrete":
            gl = GinzburgLandauSpec(d=d, beta=self.beta, lam=self.lam, h=self.h,
                                    a=self.interval[0], b=self.interval[1])
            return gl_discretize(gl, n)
        if self.model == "ising":
            return ising_spec_to_markov(IsingSpec(d=d, beta=self.beta, alphabet=self.alphabet))
        if self.model == "markov-file":
            spec = self._markov_spec()
            if spec.d != d:
                raise ConfigError(f"d: markov file has d={spec.d}, cell wants {d}")
            return spec
        raise ConfigError(f"model: {self.model} has no discrete ground truth")

    def gl_spec(self, d: int) -> GinzburgLandauSpec:
        return GinzburgLandauSpec(d=d, beta=self.beta, lam=self.lam, h=self.h,
                                  a=self.interval[0], b=self.interval[1])


def _coerce_list(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",")]


def config_from_sources(path: str | None, overrides: dict) -> ExperimentConfig:
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc})") from exc
    doc.update({k: v for k, v in overrides.items() if v is not None})
    known = {
        "model": str, "trials": int, "seed": int, "order": int, "algorithm": str,
        "sampler": str, "beta": float, "lam": float, "h": float, "markov_file": str,
        "burn_in": int, "thin": int, "chains": int, "sigma": float, "outdir": str,
        "jobs": int, "M": int,
    }
    kwargs = {}
    for key, value in doc.items():
        try:
            _assign_field(kwargs, known, key, value)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from exc
    if "model" not in kwargs:
        raise ConfigError("model: required")
    try:
        return ExperimentConfig(**kwargs).validate()
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc


def _assign_field(kwargs, known, key, value):
    if key == "d":
        kwargs["d_list"] = _coerce_list(value)
    elif key == "N":
        kwargs["big_n_list"] = _coerce_list(value)
    elif key == "n":
        kwargs["n_list"] = _coerce_list(value)
    elif key == "M":
        kwargs["m_basis"] = int(value)
    elif key == "ranks":
        if isinstance(value, str):
            try:
                value = json.loads(value)
            except json.JSONDecodeError:
                value = value.split(",")
        if isinstance(value, dict) or value is None:
            if isinstance(value, dict) and set(value) != {"edge", "interior"}:
                raise ConfigError("ranks: pattern needs exactly edge and interior")
            kwargs["ranks"] = value
        elif isinstance(value, (int, float)):
            kwargs["ranks"] = int(value)
        else:
            parts = [int(v) for v in value]
            kwargs["ranks"] = parts[0] if len(parts) == 1 else parts
    elif key == "interval":
        a, b = (float(x) for x in (value.split(",") if isinstance(value, str) else value))
        kwargs["interval"] = (a, b)
    elif key == "alphabet":
        vals = value.split(",") if isinstance(value, str) else value
        kwargs["alphabet"] = tuple(float(v) for v in vals)
    elif key in known:
        kwargs[key] = known[key](value)
    else:
        raise ConfigError(f"{key}: unknown configuration field")


# ---------------------------------------------------------------------------
# cells, file naming, atomic writes


@dataclass(frozen=True)
class Cell:
    d: int
    n: int
    big_n: int
    trial: int

    def seed(self, base: int) -> int:
        return base + self.trial * SEED_STRIDE


def _cells(cfg: ExperimentConfig):
    n_values = [cfg.m_basis] if cfg.model == "gl-continuous" else cfg.n_list
    if cfg.model == "ising":
        n_values = [len(cfg.alphabet)]
    for d in cfg.d_list:
        for n in n_values:
            for big_n in cfg.big_n_list:
                for trial in range(cfg.trials):
                    yield Cell(int(d), int(n), int(big_n), trial)


def _hash_slice(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:8]


def _sample_slice(cfg: ExperimentConfig, cell: Cell) -> dict:
    return {
        "model": cfg.model, "d": cell.d, "n": cell.n, "N": cell.big_n,
        "trial": cell.trial, "seed": cell.seed(cfg.seed),
        "sampler": cfg.effective_sampler,
        "beta": cfg.beta, "lam": cfg.lam, "h": cfg.h,
        "interval": list(cfg.interval), "alphabet": list(cfg.alphabet),
        "markov_file": cfg.markov_file,
        "burn_in": cfg.burn_in, "thin": cfg.thin, "chains": cfg.chains,
        "sigma": cfg.sigma,
    }


def _fit_slice(cfg: ExperimentConfig, cell: Cell) -> dict:
    payload = _sample_slice(cfg, cell)
    payload.update(
        order=cfg.effective_order() if cfg.model != "gl-continuous" else None,
        ranks=cfg.ranks_for(cell.d) if not (cfg.ranks is None or np.isscalar(cfg.ranks))
        else cfg.ranks,
        algorithm=cfg.algorithm,
        M=cfg.m_basis if cfg.model == "gl-continuous" else None,
    )
    return payload


def _cell_stem(cfg: ExperimentConfig, cell: Cell, payload: dict) -> str:
    return (
        f"{cfg.model}_d{cell.d}_n{cell.n}_N{cell.big_n}_t{cell.trial}_{_hash_slice(payload)}"
    )


def _atomic_write_bytes(path: Path, writer) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# stages


def _run_sample(cfg: ExperimentConfig, cell: Cell) -> Path:
    outdir = Path(cfg.outdir) / "samples"
    outdir.mkdir(parents=True, exist_ok=True)
    payload = _sample_slice(cfg, cell)
    stem = _cell_stem(cfg, cell, payload)
    path = outdir / f"{stem}.samp"
    if path.exists():
        return path
    seed = cell.seed(cfg.seed)
    sampler = cfg.effective_sampler
    if cfg.model == "gl-continuous":
        samp = sample_mh_continuous(cfg.gl_spec(cell.d), cell.big_n, sigma=cfg.sigma,
                                    burn_in=cfg.burn_in, thin=cfg.thin, seed=seed,
                                    n_chains=cfg.chains)
    elif sampler == "ancestral":
        samp = sample_ancestral(cfg.ground_truth_spec(cell.d, cell.n), cell.big_n, seed=seed)
    elif sampler == "gibbs":
        if cfg.model == "gl-discrete":
            factors = gl_chain_factors(cfg.gl_spec(cell.d), cell.n)
        else:
            factors = ising_chain_factors(
                IsingSpec(d=cell.d, beta=cfg.beta, alphabet=cfg.alphabet)
            )
        samp = sample_gibbs(factors, cell.big_n, burn_in=cfg.burn_in, thin=cfg.thin,
                            seed=seed, n_chains=cfg.chains)
    else:  # mh on a discrete model makes no sense
        raise ConfigError(f"sampler: {sampler} incompatible with model {cfg.model}")
    _atomic_write_bytes(path, lambda tmp: save_samples(samp, tmp))
    meta = dict(samp.meta)
    meta.update(payload)
    _atomic_write_bytes(path.with_suffix(".meta.json"),
                        lambda tmp: Path(tmp).write_text(json.dumps(meta, indent=1)))
    return path


def _run_fit(cfg: ExperimentConfig, cell: Cell) -> Path:
    sample_path = Path(cfg.outdir) / "samples" / (
        _cell_stem(cfg, cell, _sample_slice(cfg, cell)) + ".samp"
    )
    if not sample_path.exists():
        raise ConfigError(f"missing sample file {sample_path}; run the sample stage first")
    outdir = Path(cfg.outdir) / "fits"
    outdir.mkdir(parents=True, exist_ok=True)
    payload = _fit_slice(cfg, cell)
    stem = _cell_stem(cfg, cell, payload)
    suffix = ".ctt" if cfg.model == "gl-continuous" else ".tt"
    path = outdir / f"{stem}{suffix}"
    if path.exists():
        return path
    samp = load_samples(sample_path)
    t0 = time.perf_counter()
    if cfg.model == "gl-continuous":
        basis = cont.fourier_basis(cfg.interval[0], cfg.interval[1], cfg.m_basis)
        ranks = cfg.ranks_for(cell.d)
        fit, report = cont.tt_rs_continuous_markov(samp, basis, 3 if ranks is None else ranks)
        _atomic_write_bytes(path, lambda tmp: cont.save_continuous_tt(fit, tmp))
    else:
        plan = markov_sketch_plan(samp.extents, cfg.effective_order())
        fitter = engine.tt_s if cfg.algorithm == "tt-s" else engine.tt_rs
        fit, report = fitter(samp, cfg.ranks_for(cell.d), plan, allow_rank_clip=True)
        _atomic_write_bytes(path, lambda tmp: save_tt(fit, tmp))
    wall_ms = (time.perf_counter() - t0) * 1e3
    doc = report.to_json()
    doc["wall_ms"] = wall_ms
    _atomic_write_bytes(path.with_suffix(".report.json"),
                        lambda tmp: Path(tmp).write_text(json.dumps(doc, indent=1)))
    return path


def _run_eval(cfg: ExperimentConfig, cell: Cell) -> dict:
    payload = _fit_slice(cfg, cell)
    stem = _cell_stem(cfg, cell, payload)
    rows_dir = Path(cfg.outdir) / "rows"
    rows_dir.mkdir(parents=True, exist_ok=True)
    row_path = rows_dir / f"{stem}.json"
    if row_path.exists():
        return json.loads(row_path.read_text())
    suffix = ".ctt" if cfg.model == "gl-continuous" else ".tt"
    fit_path = Path(cfg.outdir) / "fits" / f"{stem}{suffix}"
    if not fit_path.exists():
        raise ConfigError(f"missing fitted train {fit_path}; run the fit stage first")
    report = json.loads(fit_path.with_suffix(".report.json").read_text())
    row = {
        "model": cfg.model,
        "algorithm": cfg.algorithm,
        "order": "" if cfg.model == "gl-continuous" else cfg.effective_order(),
        "d": cell.d, "n": "" if cfg.model == "gl-continuous" else cell.n,
        "M": cfg.m_basis if cfg.model == "gl-continuous" else "",
        "N": cell.big_n, "trial": cell.trial,
        "err": "", "err_a": "", "err_e": "", "err_t": "",
        "wall_ms": report["wall_ms"],
    }
    if cfg.model == "gl-continuous":
        fit = cont.load_continuous_tt(fit_path)
        err_a, err_e, err_t = cont.l2_error_decomposition(
            cfg.gl_spec(cell.d), fit.basis, fit
        )
        row.update(err_a=f"{err_a:.10e}", err_e=f"{err_e:.10e}", err_t=f"{err_t:.10e}")
    else:
        truth = markov_to_tt(cfg.ground_truth_spec(cell.d, cell.n))
        fit = load_tt(fit_path)
        row["err"] = f"{tt_rel_l2_error(truth, fit):.10e}"
    _atomic_write_bytes(row_path, lambda tmp: Path(tmp).write_text(json.dumps(row)))
    return row


def _write_results(cfg: ExperimentConfig, rows: list) -> Path:
    rows = sorted(
        rows,
        key=lambda r: (r["model"], r["algorithm"], str(r["order"]), r["d"],
                       str(r["n"]), str(r["M"]), r["N"], r["trial"]),
    )
    path = Path(cfg.outdir) / "results.csv"
    def writer(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(str(row[c]) for c in CSV_COLUMNS) + "\n")
    _atomic_write_bytes(path, writer)
    return path


def _pipeline_cell(cfg: ExperimentConfig, cell: Cell) -> dict:
    _run_sample(cfg, cell)
    _run_fit(cfg, cell)
    return _run_eval(cfg, cell)


def _pipeline_cell_star(args):
    cfg, cell = args
    return cell, _pipeline_cell(cfg, cell)


def cmd_sample(cfg: ExperimentConfig) -> int:
    for cell in _cells(cfg):
        _run_sample(cfg, cell)
    return 0


def cmd_fit(cfg: ExperimentConfig) -> int:
    for cell in _cells(cfg):
        _run_fit(cfg, cell)
    return 0


def cmd_eval(cfg: ExperimentConfig) -> int:
    rows = [_run_eval(cfg, cell) for cell in _cells(cfg)]
    if not rows:
        raise ConfigError("grid: empty")
    print(_write_results(cfg, rows))
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    cells = list(_cells(cfg))
    jobs = cfg.jobs or int(os.environ.get("TTRS_JOBS", "0")) or (os.cpu_count() or 1)
    jobs = min(jobs, len(cells))
    rows, failures = [], []
    if jobs <= 1:
        for cell in cells:
            try:
                rows.append(_pipeline_cell(cfg, cell))
            except Exception as exc:  # cell-level isolation
                failures.append((cell, str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_pipeline_cell, cfg, cell): cell for cell in cells}
            for fut, cell in futures.items():
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    failures.append((cell, str(exc)))
    if rows:
        print(_write_results(cfg, rows))
    if failures:
        report = {f"d={c.d},n={c.n},N={c.big_n},trial={c.trial}": msg for c, msg in failures}
        path = Path(cfg.outdir) / "failures.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=1))
        print(f"{len(failures)} cells failed; see {path}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttrs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("sample", cmd_sample), ("fit", cmd_fit),
                     ("eval", cmd_eval), ("sweep", cmd_sweep)]:
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--model", default=None, choices=_MODELS)
        p.add_argument("-d", default=None, help="dimension or comma list")
        p.add_argument("-n", default=None, help="grid points / alphabet size (comma list ok)")
        p.add_argument("-N", default=None, help="sample size or comma list")
        p.add_argument("-M", default=None, type=int, help="basis size (continuous)")
        p.add_argument("--trials", default=None, type=int)
        p.add_argument("--seed", default=None, type=int)
        p.add_argument("--order", default=None, type=int)
        p.add_argument("--ranks", default=None, help="single value or comma list")
        p.add_argument("--algorithm", default=None, choices=_ALGORITHMS)
        p.add_argument("--sampler", default=None, choices=_SAMPLERS)
        p.add_argument("--beta", default=None, type=float)
        p.add_argument("--lam", default=None, type=float)
        p.add_argument("--h", default=None, type=float)
        p.add_argument("--interval", default=None, help="a,b")
        p.add_argument("--alphabet", default=None, help="comma list of spin values")
        p.add_argument("--markov-file", dest="markov_file", default=None)
        p.add_argument("--burn-in", dest="burn_in", default=None, type=int)
        p.add_argument("--thin", default=None, type=int)
        p.add_argument("--chains", default=None, type=int)
        p.add_argument("--sigma", default=None, type=float)
        p.add_argument("--outdir", default=None)
        p.add_argument("--jobs", default=None, type=int)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        k: v for k, v in vars(args).items()
        if k not in ("command", "func", "config") and v is not None
    }
    try:
        cfg = config_from_sources(args.config, overrides)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TTRSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
