"""Config ingestion, sweep orchestration and CSV emission.

Configs are INI files with four sections: ``[model]`` (network parameters,
with matrices written as semicolon-separated rows), ``[allocator]``,
``[sweep]`` and ``[sim]``.  Powers may be given in dB relative to one watt
(``p_tot_db``) or directly in watts (``p_tot``).

A sweep runs every requested algorithm at every axis value, simulates the
discrete allocation, and emits one CSV row per (axis value, algorithm).
Row seeds derive deterministically from the sweep seed and the row's
indices, and rows are ordered by (axis index, algorithm index), so the CSV
bytes depend only on the config, never on scheduling or worker count.
Floats are serialized with nine significant digits.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .allocators import ALGORITHMS, AllocatorConfig, run_allocator
from .chansim import CHANNEL_MODES, SimConfig, simulate
from .model import NetworkModel, make_model


class ConfigError(ValueError):
    """Invalid or missing config entry; the message carries the field path."""


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: vary one budget axis, hold the other at the model value."""

    axis: str
    values: tuple[float, ...]
    algorithms: tuple[str, ...]
    trials: int
    seed: int
    channel_mode: str = "bitflip"

    def __post_init__(self):
        if self.axis not in ("p_tot_db", "b_tot"):
            raise ConfigError("sweep.axis: must be p_tot_db or b_tot")
        if not self.values:
            raise ConfigError("sweep.values: must be nonempty")
        if any(b >= a for a, b in zip(self.values[1:], self.values)):
            raise ConfigError("sweep.values: must be strictly increasing")
        if not self.algorithms:
            raise ConfigError("sweep.algorithms: must be nonempty")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"sweep.algorithms: unknown algorithm {alg!r}")
        if self.trials < 1:
            raise ConfigError("sweep.trials: must be >= 1")
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigError("sweep.channel_mode: must be bitflip or waveform")


@dataclass(frozen=True)
class LoadedConfig:
    model: NetworkModel
    allocator: AllocatorConfig
    sweep: SweepSpec | None
    sim: SimConfig


def bundled_config_path(name: str = "paper_k3") -> Path:
    """Filesystem path of a config shipped with the package."""
    ref = resources.files("wsnalloc") / "configs" / f"{name}.cfg"
    path = Path(str(ref))
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _parse_vector(text: str, field: str) -> np.ndarray:
    try:
        return np.asarray([float(tok) for tok in text.replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"{field}: expected numbers, got {text!r}") from exc


def _parse_matrix(text: str, field: str) -> np.ndarray:
    rows = [_parse_vector(part, field) for part in text.split(";")]
    if len({row.size for row in rows}) != 1:
        raise ConfigError(f"{field}: ragged rows")
    return np.vstack(rows)


def _get(section, key, field, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{field}: missing required entry")
        return default
    return section[key]


def _model_from_section(section) -> NetworkModel:
    prior_cov = _parse_matrix(_get(section, "prior_cov", "model.prior_cov",
                                   required=True), "model.prior_cov")
    gains = _parse_matrix(_get(section, "gains", "model.gains", required=True),
                          "model.gains")
    q = int(_get(section, "q", "model.q", default=str(gains.shape[0])))
    K = int(_get(section, "sensors", "model.sensors",
                 default=str(gains.shape[1])))
    if gains.shape != (q, K):
        raise ConfigError(f"model.gains: expected {q} rows x {K} columns, "
                          f"got {gains.shape[0]}x{gains.shape[1]}")
    if prior_cov.shape != (q, q):
        raise ConfigError(f"model.prior_cov: expected {q}x{q}, "
                          f"got {prior_cov.shape[0]}x{prior_cov.shape[1]}")

    vectors = {}
    for key in ("obs_noise_var", "channel_gain", "channel_noise_var"):
        vec = _parse_vector(_get(section, key, f"model.{key}", required=True),
                            f"model.{key}")
        if vec.size != K:
            raise ConfigError(f"model.{key}: expected {K} entries, got {vec.size}")
        vectors[key] = vec
    for key in ("obs_noise_var", "channel_noise_var"):
        bad = np.flatnonzero(vectors[key] <= 0)
        if bad.size:
            raise ConfigError(f"model.{key}[{bad[0]}]: must be > 0")

    tau = None
    if "tau" in section:
        tau = _parse_vector(section["tau"], "model.tau")
        if tau.size != K:
            raise ConfigError(f"model.tau: expected {K} entries, got {tau.size}")
        bad = np.flatnonzero(tau <= 0)
        if bad.size:
            raise ConfigError(f"model.tau[{bad[0]}]: must be > 0")

    if "p_tot" in section and "p_tot_db" in section:
        raise ConfigError("model.p_tot: give either p_tot or p_tot_db, not both")
    if "p_tot" in section:
        p_tot = float(section["p_tot"])
    elif "p_tot_db" in section:
        p_tot = db_to_linear(float(section["p_tot_db"]))
    else:
        raise ConfigError("model.p_tot: missing (or model.p_tot_db)")
    if p_tot <= 0:
        raise ConfigError("model.p_tot: must be > 0")

    b_tot = int(_get(section, "b_tot", "model.b_tot", required=True))
    if b_tot < 1:
        raise ConfigError("model.b_tot: must be >= 1")

    try:
        return make_model(prior_cov=prior_cov, gains=gains,
                          obs_noise_var=vectors["obs_noise_var"],
                          channel_gain=vectors["channel_gain"],
                          channel_noise_var=vectors["channel_noise_var"],
                          p_tot=p_tot, b_tot=b_tot, tau=tau)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def load_config(path) -> LoadedConfig:
    """Parse and validate a config file."""
    import configparser

    # Matrices use ';' as the row separator, so only '#' starts a comment.
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"config file not found: {path}")
    if "model" not in parser:
        raise ConfigError("model: missing [model] section")

    model = _model_from_section(parser["model"])

    alloc_kwargs = {}
    if "allocator" in parser:
        sec = parser["allocator"]
        if "algorithm" in sec:
            if sec["algorithm"] not in ALGORITHMS:
                raise ConfigError(
                    f"allocator.algorithm: unknown algorithm {sec['algorithm']!r}")
            alloc_kwargs["algorithm"] = sec["algorithm"]
        for key, cast in (("eta", float), ("j_max", int),
                          ("ellipsoid_eps", float), ("ellipsoid_i_max", int)):
            if key in sec:
                try:
                    alloc_kwargs[key] = cast(sec[key])
                except ValueError as exc:
                    raise ConfigError(f"allocator.{key}: {exc}") from exc
    try:
        allocator = AllocatorConfig(**alloc_kwargs)
    except ValueError as exc:
        raise ConfigError(f"allocator: {exc}") from exc

    sim_kwargs = {}
    if "sim" in parser:
        sec = parser["sim"]
        for key, cast in (("trials", int), ("seed", int), ("workers", int)):
            if key in sec:
                sim_kwargs[key] = cast(sec[key])
        if "channel_mode" in sec:
            sim_kwargs["channel_mode"] = sec["channel_mode"]
    try:
        sim = SimConfig(**sim_kwargs)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc

    sweep = None
    if "sweep" in parser:
        sec = parser["sweep"]
        values = tuple(_parse_vector(_get(sec, "values", "sweep.values",
                                          required=True), "sweep.values"))
        algorithms = tuple(_get(sec, "algorithms", "sweep.algorithms",
                                default="a_coupled").split())
        sweep = SweepSpec(
            axis=_get(sec, "axis", "sweep.axis", default="p_tot_db"),
            values=values,
            algorithms=algorithms,
            trials=int(_get(sec, "trials", "sweep.trials",
                            default=str(sim.trials))),
            seed=int(_get(sec, "seed", "sweep.seed", default=str(sim.seed))),
            channel_mode=_get(sec, "channel_mode", "sweep.channel_mode",
                              default=sim.channel_mode),
        )
        if sweep.axis == "b_tot":
            for v in sweep.values:
                if v != int(v) or v < 1:
                    raise ConfigError("sweep.values: bit budgets must be "
                                      "positive integers")

    return LoadedConfig(model=model, allocator=allocator, sweep=sweep, sim=sim)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def csv_header(K: int, timings: bool = False) -> list[str]:
    cols = ["axis", "algorithm"]
    cols += [f"L_{k + 1}" for k in range(K)]
    cols += [f"P_db_{k + 1}" for k in range(K)]
    cols += ["d1", "d2_upb", "d1_upb", "d2_uupb", "d_a", "d_b", "two_d_a",
             "mse", "mse_half_width", "d0", "b_opt", "outer_iterations",
             "trials", "seed", "status"]
    if timings:
        cols.append("wall_time_ms")
    return cols


def _row_seed(seed: int, axis_index: int, algo_index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(axis_index, algo_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _model_at(model: NetworkModel, axis: str, value: float) -> NetworkModel:
    if axis == "p_tot_db":
        return replace(model, p_tot=db_to_linear(value))
    return replace(model, b_tot=int(value))


def sweep_row(model: NetworkModel, allocator: AllocatorConfig, spec: SweepSpec,
              axis_index: int, algo_index: int, timings: bool = False) -> dict:
    """Allocate, bound, and simulate one (axis value, algorithm) cell."""
    value = spec.values[axis_index]
    algorithm = spec.algorithms[algo_index]
    row = {"axis": value, "algorithm": algorithm,
           "trials": spec.trials, "status": "ok"}
    started = time.perf_counter()
    try:
        m = _model_at(model, spec.axis, value)
        cfg = replace(allocator, algorithm=algorithm)
        run = run_allocator(m, cfg)
        seed = _row_seed(spec.seed, axis_index, algo_index)
        sim = simulate(m, run.allocation,
                       SimConfig(trials=spec.trials, seed=seed,
                                 channel_mode=spec.channel_mode))
        rep = run.report
        with np.errstate(divide="ignore"):
            p_db = 10.0 * np.log10(run.allocation.powers)
        for k in range(m.K):
            row[f"L_{k + 1}"] = run.allocation.rates[k]
            row[f"P_db_{k + 1}"] = p_db[k]
        row.update(d1=rep.d1, d2_upb=rep.d2_upb, d1_upb=rep.d1_upb,
                   d2_uupb=rep.d2_uupb, d_a=rep.d_a, d_b=rep.d_b,
                   two_d_a=2.0 * rep.d_a, mse=sim.mse,
                   mse_half_width=sim.half_width, d0=rep.d0,
                   b_opt=run.b_opt,
                   outer_iterations=run.continuous.outer_iterations,
                   seed=seed)
    except Exception as exc:  # keep the sweep alive, mark the row
        row["status"] = f"failed: {type(exc).__name__}"
        for k in range(model.K):
            row.setdefault(f"L_{k + 1}", None)
            row.setdefault(f"P_db_{k + 1}", None)
        row.setdefault("seed", _row_seed(spec.seed, axis_index, algo_index))
    if timings:
        row["wall_time_ms"] = (time.perf_counter() - started) * 1e3
    return row


def run_sweep(model: NetworkModel, allocator: AllocatorConfig, spec: SweepSpec,
              workers: int = 1, timings: bool = False) -> list[dict]:
    """All sweep rows, ordered by (axis value, algorithm) regardless of
    how many workers executed them."""
    cells = [(i, j) for i in range(len(spec.values))
             for j in range(len(spec.algorithms))]

    def job(cell):
        i, j = cell
        return sweep_row(model, allocator, spec, i, j, timings=timings)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, cells))
    else:
        rows = [job(cell) for cell in cells]
    return rows


def rows_to_csv(rows: list[dict], K: int, timings: bool = False) -> str:
    """Serialize sweep rows; nine significant digits for floats."""
    header = csv_header(K, timings=timings)
    lines = [",".join(header)]
    for row in rows:
        fields = []
        for col in header:
            value = row.get(col)
            if col in ("algorithm", "status"):
                fields.append(str(value))
            elif col in ("b_opt", "outer_iterations", "trials", "seed"):
                fields.append("" if value is None else str(int(value)))
            else:
                fields.append(_fmt(value))
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
