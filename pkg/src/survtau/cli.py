"""Command-line interface and experiment runner.

Subcommands: ``run`` (a full benchmark from a config file), ``gen`` (write a
synthetic dataset as CSV), ``validate`` (check a dataset file), ``probe``
(numerical checks of the mean-zero and orthogonality properties).

Configs are flat ``key = value`` files; dotted keys set the per-model
training sections. Results are written as a CSV plus a markdown summary
(PEHE cells are mean +- sd across seeds, population convention, in 1e-4
units) and, when the unweighted scheme is present, a per-horizon PEHE ratio
file. Everything a run produces is a pure function of its config: seeds fix
the data draws, fold splits, parameter draws and shuffles, and rows are
merged in sorted order, so reruns and thread counts cannot change the bytes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .data import Dataset, validate_dataset
from .evaluation import (PLUGIN, mean_zero_probe, orthogonality_probe, pehe,
                         theta_hat)
from .nuisance import FoldedNuisances, as_folded, cross_fit, fit_nuisances
from .orthogonal import build_pseudo_rows
from .second_stage import fit_tau, predict_tau
from .synthetic import SETTINGS, ScenarioSpec, as_nuisance_set, generate
from .weighting import ALL_SCHEMES, WeightScheme, parse_scheme

NUISANCE_MODES = ("crossfit", "single", "true")
RESULT_COLUMNS = ("scheme", "setting", "horizon", "seed", "pehe", "theta_hat",
                  "n_guarded", "n_negative_rho",
                  "train_loss_final", "val_loss_final")
# Test draws must not collide with train seeds.
TEST_SEED_OFFSET = 1_000_000


@dataclasses.dataclass(frozen=True)
class ModelSettings:
    """Training settings for one model family, config-file addressable."""

    hidden: tuple[int, ...]
    epochs: int
    batch_size: int
    learning_rate: float
    dropout: float
    momentum: float = 0.0
    val_fraction: float = 0.0
    patience: int = 5
    seed: int = 0

    def as_approx_config(self, input_dim: int, output_activation: str, seed: int):
        from .approximator import ApproxConfig
        return ApproxConfig(
            input_dim=input_dim,
            hidden_layers=self.hidden,
            output_activation=output_activation,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            dropout_rate=self.dropout,
            seed=seed,
            val_fraction=self.val_fraction,
            patience=self.patience,
        )


@dataclasses.dataclass(frozen=True)
class ProbeSettings:
    t: int = 3
    bins: int = 10
    n: int = 100_000
    seed: int = 1
    hazard_shift: float = 0.0
    epsilons: tuple[float, ...] = (0.02, 0.04, 0.08, 0.16)
    direction_seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    schemes: tuple[str, ...] = tuple(s.value for s in ALL_SCHEMES) + (PLUGIN,)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; parse_config fills it from a key=value file."""

    scenario: int = 1
    setting: str = "full"
    n: int = 30_000
    test_n: int = 3_000
    data: str | None = None
    t_max: int | None = None
    schemes: tuple[WeightScheme, ...] = ALL_SCHEMES
    horizons: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    seeds: tuple[int, ...] = (1,)
    nuisances: str = "crossfit"
    crossfit_k: int = 2
    clip_eps: float = 0.01
    rho_guard: float = 1e-3
    rho_cap: float = 100.0
    clamp_negative_rho: bool = False
    out_dir: str = "results"
    threads: int = 1
    propensity: ModelSettings = ModelSettings(
        hidden=(20, 20, 20), epochs=10, batch_size=64, learning_rate=1.5,
        dropout=0.1)
    hazard: ModelSettings = ModelSettings(
        hidden=(20, 20, 20), epochs=40, batch_size=256, learning_rate=3.0,
        dropout=0.0)
    second_stage: ModelSettings = ModelSettings(
        hidden=(64, 64, 64), epochs=40, batch_size=64, learning_rate=0.005,
        momentum=0.9, dropout=0.0, val_fraction=0.0, patience=5)
    probe: ProbeSettings = ProbeSettings()

    def validated(self) -> "ExperimentConfig":
        if self.nuisances not in NUISANCE_MODES:
            raise ValueError(f"nuisances: must be one of {NUISANCE_MODES}")
        if self.data is not None:
            if self.t_max is None:
                raise ValueError("t_max: required when data= points at a CSV file")
            if self.nuisances == "true":
                raise ValueError("nuisances: 'true' needs a synthetic scenario, not data=")
        if not self.seeds:
            raise ValueError("seeds: at least one seed required")
        if not self.schemes:
            raise ValueError("schemes: at least one scheme required")
        if not self.horizons:
            raise ValueError("horizons: at least one horizon required")
        if self.threads < 1:
            raise ValueError("threads: must be at least 1")
        if self.crossfit_k < 2:
            raise ValueError("crossfit_k: must be at least 2")
        if not 0.0 < self.clip_eps < 0.5:
            raise ValueError("clip_eps: must lie in (0, 0.5)")
        if self.rho_guard <= 0.0:
            raise ValueError("rho_guard: must be positive")
        if self.rho_cap <= self.rho_guard:
            raise ValueError("rho_cap: must exceed rho_guard")
        ScenarioSpec(self.scenario, self.setting, max(self.n, 1), 0)
        return self


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_tuple(raw: str, conv):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list")
    return tuple(conv(p) for p in parts)


def _parse_schemes(raw: str) -> tuple[WeightScheme, ...]:
    return _parse_tuple(raw, parse_scheme)


def _parse_probe_schemes(raw: str) -> tuple[str, ...]:
    out = []
    for p in _parse_tuple(raw, str):
        out.append(PLUGIN if p.lower() == PLUGIN else parse_scheme(p).value)
    return tuple(out)


def _opt_str(raw: str):
    return raw if raw else None


def _opt_int(raw: str):
    return int(raw) if raw else None


# key -> (target field path, converter)
_CONFIG_KEYS = {
    "scenario": ("scenario", int),
    "setting": ("setting", str),
    "n": ("n", int),
    "test_n": ("test_n", int),
    "data": ("data", _opt_str),
    "t_max": ("t_max", _opt_int),
    "schemes": ("schemes", _parse_schemes),
    "horizons": ("horizons", lambda r: _parse_tuple(r, int)),
    "seeds": ("seeds", lambda r: _parse_tuple(r, int)),
    "nuisances": ("nuisances", str),
    "crossfit_k": ("crossfit_k", int),
    "clip_eps": ("clip_eps", float),
    "rho_guard": ("rho_guard", float),
    "rho_cap": ("rho_cap", float),
    "clamp_negative_rho": ("clamp_negative_rho", _parse_bool),
    "out_dir": ("out_dir", str),
    "threads": ("threads", int),
}

_MODEL_KEYS = {
    "hidden": lambda r: _parse_tuple(r, int),
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "momentum": float,
    "dropout": float,
    "val_fraction": float,
    "patience": int,
    "seed": int,
}

_PROBE_KEYS = {
    "t": int,
    "bins": int,
    "n": int,
    "seed": int,
    "hazard_shift": float,
    "epsilons": lambda r: _parse_tuple(r, float),
    "direction_seeds": lambda r: _parse_tuple(r, int),
    "schemes": _parse_probe_schemes,
}


def parse_config(path: str) -> ExperimentConfig:
    """Read a flat key=value config file into a validated ExperimentConfig."""
    top: dict = {}
    sections: dict[str, dict] = {"propensity": {}, "hazard": {},
                                 "second_stage": {}, "probe": {}}
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key in seen:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            seen.add(key)
            try:
                if "." in key:
                    section, field = key.split(".", 1)
                    if section not in sections:
                        raise ValueError(f"unknown section {section!r}")
                    table = _PROBE_KEYS if section == "probe" else _MODEL_KEYS
                    if field not in table:
                        raise ValueError(f"unknown key {field!r} in section {section!r}")
                    sections[section][field] = table[field](raw)
                else:
                    if key not in _CONFIG_KEYS:
                        raise ValueError(f"unknown config key {key!r}")
                    name, conv = _CONFIG_KEYS[key]
                    top[name] = conv(raw)
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {key}: {err}") from None
    cfg = ExperimentConfig(**top)
    for section in ("propensity", "hazard", "second_stage"):
        if sections[section]:
            cfg = dataclasses.replace(cfg, **{
                section: dataclasses.replace(getattr(cfg, section), **sections[section])})
    if sections["probe"]:
        cfg = dataclasses.replace(cfg, probe=dataclasses.replace(cfg.probe, **sections["probe"]))
    return cfg.validated()


@dataclasses.dataclass(frozen=True)
class ResultRow:
    scheme: str
    setting: str
    horizon: int
    seed: int
    pehe: float
    theta_hat: float
    n_guarded: int  # rows whose rho the guard moved, floor and cap together
    n_negative_rho: int
    train_loss_final: float
    val_loss_final: float


def load_csv_dataset(path: str, t_max: int | None = None) -> Dataset:
    """Read a dataset CSV with header x0..x{p-1},a,t_tilde,delta_s,delta_g.

    Parse errors raise immediately; statistical invariants are the job of
    validate_dataset, so a parseable but invalid file loads fine.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        tail = ["a", "t_tilde", "delta_s", "delta_g"]
        p = len(header) - len(tail)
        if p < 1 or header != [f"x{i}" for i in range(p)] + tail:
            raise ValueError(f"{path}: malformed header {header!r}")
        xs, ints = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                xs.append([float(v) for v in row[:p]])
                ints.append([int(v) for v in row[p:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric or non-integer field") from None
    if not xs:
        raise ValueError(f"{path}: empty dataset")
    cols = np.array(ints, dtype=int)
    inferred = int(cols[:, 1].max()) if t_max is None else int(t_max)
    return Dataset(x=np.array(xs, dtype=float), a=cols[:, 0], t_tilde=cols[:, 1],
                   delta_s=cols[:, 2], delta_g=cols[:, 3], t_max=inferred)


def write_dataset_csv(d: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(d.p)]
                        + ["a", "t_tilde", "delta_s", "delta_g"])
        for i in range(len(d)):
            writer.writerow([repr(float(v)) for v in d.x[i]]
                            + [int(d.a[i]), int(d.t_tilde[i]),
                               int(d.delta_s[i]), int(d.delta_g[i])])


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_report(rows: list[ResultRow], out_dir: str) -> dict[str, str]:
    """Write results.csv, summary.md and (with a 'none' baseline) ratios.csv."""
    os.makedirs(out_dir, exist_ok=True)
    rows = sorted(rows, key=lambda r: (r.setting, r.scheme, r.horizon, r.seed))
    paths = {"results": os.path.join(out_dir, "results.csv")}
    with open(paths["results"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow([r.scheme, r.setting, r.horizon, r.seed, _fmt(r.pehe),
                             _fmt(r.theta_hat), r.n_guarded,
                             r.n_negative_rho, _fmt(r.train_loss_final),
                             _fmt(r.val_loss_final)])

    settings = sorted({r.setting for r in rows})
    horizons = sorted({r.horizon for r in rows})
    scheme_order = [s.value for s in ALL_SCHEMES if any(r.scheme == s.value for r in rows)]

    def cell(values: list[float]) -> str:
        if not values or any(np.isnan(v) for v in values):
            return "n/a"
        arr = np.array(values)
        return f"{arr.mean() * 1e4:.2f} ± {arr.std(ddof=0) * 1e4:.2f}"

    lines = ["# PEHE summary", "",
             "Cells are mean ± sd across seeds (population convention), PEHE x 1e-4.",
             ""]
    for setting in settings:
        lines.append(f"## setting: {setting}")
        lines.append("")
        lines.append("| scheme | " + " | ".join(f"t={t}" for t in horizons) + " | avg |")
        lines.append("|" + "---|" * (len(horizons) + 2))
        for scheme in scheme_order:
            sub = [r for r in rows if r.setting == setting and r.scheme == scheme]
            if not sub:
                continue
            cells = []
            for t in horizons:
                cells.append(cell([r.pehe for r in sub if r.horizon == t]))
            seeds = sorted({r.seed for r in sub})
            per_seed = []
            for seed in seeds:
                vals = [r.pehe for r in sub if r.seed == seed]
                per_seed.append(float(np.mean(vals)))
            cells.append(cell(per_seed))
            lines.append(f"| {scheme} | " + " | ".join(cells) + " |")
        lines.append("")
    paths["summary"] = os.path.join(out_dir, "summary.md")
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    base = WeightScheme.NONE.value
    if base in scheme_order and len(scheme_order) > 1:
        paths["ratios"] = os.path.join(out_dir, "ratios.csv")
        with open(paths["ratios"], "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["setting", "scheme", "horizon", "ratio"])
            for setting in settings:
                for scheme in scheme_order:
                    if scheme == base:
                        continue
                    for t in horizons:
                        num = [r.pehe for r in rows
                               if r.setting == setting and r.scheme == scheme
                               and r.horizon == t]
                        den = [r.pehe for r in rows
                               if r.setting == setting and r.scheme == base
                               and r.horizon == t]
                        if not num or not den or np.isnan(num).any() or np.isnan(den).any():
                            continue
                        denom = float(np.mean(den))
                        if denom <= 0:
                            continue
                        writer.writerow([setting, scheme, t,
                                         _fmt(float(np.mean(num)) / denom)])
    return paths


def _build_nuisances(cfg: ExperimentConfig, d: Dataset, gt, seed: int) -> FoldedNuisances:
    if cfg.nuisances == "true":
        # exact curves take the (essentially off) default clip, not the
        # estimation guard
        return as_folded(as_nuisance_set(gt), len(d))
    from .nuisance import hazard_input_dim
    prop_cfg = cfg.propensity.as_approx_config(
        d.p, "logistic", cfg.propensity.seed + 1009 * seed)
    hs_cfg = cfg.hazard.as_approx_config(
        hazard_input_dim(d.p, d.t_max), "logistic", cfg.hazard.seed + 1013 * seed)
    hg_cfg = cfg.hazard.as_approx_config(
        hazard_input_dim(d.p, d.t_max), "logistic", cfg.hazard.seed + 1019 * seed + 1)
    if cfg.nuisances == "single":
        return as_folded(fit_nuisances(d, prop_cfg, hs_cfg, hg_cfg, cfg.clip_eps), len(d))
    return cross_fit(d, cfg.crossfit_k, prop_cfg, hs_cfg, hg_cfg,
                     clip_eps=cfg.clip_eps, seed=seed)


def _run_unit(cfg: ExperimentConfig, seed: int) -> list[ResultRow]:
    """All schemes and horizons for one seed; nuisances are fit once."""
    if cfg.data is not None:
        d = load_csv_dataset(cfg.data, cfg.t_max)
        problems = validate_dataset(d)
        if problems:
            raise ValueError(f"{cfg.data}: invalid dataset: " + "; ".join(problems[:5]))
        gt, test_d = None, None
    else:
        d, gt = generate(ScenarioSpec(cfg.scenario, cfg.setting, cfg.n, seed))
        test_d, _ = generate(ScenarioSpec(cfg.scenario, cfg.setting, cfg.test_n,
                                          TEST_SEED_OFFSET + seed))
    bad = [t for t in cfg.horizons if not 0 <= t <= d.t_max]
    if bad:
        raise ValueError(f"horizons: {bad} outside the grid [0, {d.t_max}]")
    fn = _build_nuisances(cfg, d, gt, seed)

    out = []
    for scheme in cfg.schemes:
        for t in cfg.horizons:
            rows, guard = build_pseudo_rows(
                d, fn, scheme, t, rho_guard=cfg.rho_guard, rho_cap=cfg.rho_cap,
                clamp_negative_rho=cfg.clamp_negative_rho)
            # Schemes at the same (seed, horizon) share the second-stage
            # draws, so scheme comparisons are paired rather than confounded
            # with initialization luck.
            ss_seed = cfg.second_stage.seed + 10_007 * seed + t
            ss_cfg = cfg.second_stage.as_approx_config(d.p, "identity", ss_seed)
            model = fit_tau(rows, ss_cfg, scheme=scheme, horizon=t)
            if gt is not None:
                pe = pehe(predict_tau(model, test_d.x), gt.tau(test_d.x, t))
            else:
                pe = float("nan")
            out.append(ResultRow(
                scheme=scheme.value, setting=cfg.setting, horizon=t, seed=seed,
                pehe=pe, theta_hat=theta_hat(rows),
                n_guarded=guard.n_guarded + guard.n_capped,
                n_negative_rho=guard.n_negative_rho,
                train_loss_final=model.train_loss_final,
                val_loss_final=model.val_loss_final))
    return out


def _run_unit_star(args) -> list[ResultRow]:
    return _run_unit(*args)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[ResultRow], dict[str, str]]:
    """Execute a config end to end and write its reports.

    Units of work are (seed)-level and fully independent; with threads > 1
    they run in worker processes. Results are merged in sorted order, so
    the emitted files are identical for every thread count.
    """
    cfg = cfg.validated()
    jobs = [(cfg, seed) for seed in cfg.seeds]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(_run_unit_star, jobs))
    else:
        chunks = [_run_unit(cfg, seed) for seed in cfg.seeds]
    rows = [r for chunk in chunks for r in chunk]
    paths = emit_report(rows, cfg.out_dir)
    return rows, paths


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.threads is not None:
        cfg = dataclasses.replace(cfg, threads=args.threads)
    rows, paths = run_experiment(cfg)
    print(f"wrote {len(rows)} result rows")
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def _cmd_gen(args) -> int:
    d, _ = generate(ScenarioSpec(args.scenario, args.setting, args.n, args.seed))
    write_dataset_csv(d, args.out)
    print(f"wrote {len(d)} rows to {args.out} (p={d.p}, t_max={d.t_max})")
    return 0


def _cmd_validate(args) -> int:
    d = load_csv_dataset(args.data)
    problems = validate_dataset(d)
    if problems:
        for msg in problems:
            print(msg)
        print(f"invalid: {len(problems)} problem(s) in {len(d)} rows")
        return 1
    print(f"ok: {len(d)} rows, p={d.p}, t_max={d.t_max}")
    return 0


def _cmd_probe(args) -> int:
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    os.makedirs(cfg.out_dir, exist_ok=True)
    pr = cfg.probe
    d, gt = generate(ScenarioSpec(cfg.scenario, cfg.setting, pr.n, pr.seed))
    if args.kind == "meanzero":
        nuis = as_nuisance_set(gt, hazard_shift=pr.hazard_shift)
        report = mean_zero_probe(d, nuis, pr.t, pr.bins)
        lines = report.lines()
        path = os.path.join(cfg.out_dir, "probe_meanzero.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        for line in lines:
            print(line)
        print(f"wrote {path}")
        return 0
    path = os.path.join(cfg.out_dir, "probe_ortho.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "t", "direction_seed", "slope"])
        for label in pr.schemes:
            for ds in pr.direction_seeds:
                res = orthogonality_probe(d, gt, label, pr.t, ds, pr.epsilons)
                for line in res.lines():
                    print(line)
                writer.writerow([res.scheme, res.t, res.direction_seed,
                                 _fmt(res.slope)])
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="survtau",
        description="Orthogonal learners for treatment effects on censored "
                    "discrete-time outcomes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark config end to end")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override out_dir")
    p_run.add_argument("--threads", type=int, default=None, help="override threads")

    p_gen = sub.add_parser("gen", help="write a synthetic dataset CSV")
    p_gen.add_argument("--scenario", type=int, choices=(1, 2), required=True)
    p_gen.add_argument("--setting", choices=SETTINGS, default="full")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)

    p_val = sub.add_parser("validate", help="check a dataset CSV")
    p_val.add_argument("--data", required=True)

    p_probe = sub.add_parser("probe", help="numerical checks of the theory")
    p_probe.add_argument("--kind", choices=("meanzero", "ortho"), required=True)
    p_probe.add_argument("--config", required=True)
    p_probe.add_argument("--out", default=None, help="override out_dir")

    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "gen": _cmd_gen,
                "validate": _cmd_validate, "probe": _cmd_probe}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
