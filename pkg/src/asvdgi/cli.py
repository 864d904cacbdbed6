"""Command-line experiment runner.

Verbs::

    asvdgi run      --config exp.toml [overrides]
    asvdgi compare  --config exp.toml [overrides]
    asvdgi dither   pattern.png out.pbm --a 4 [--packed out.bin] [--error-vs-a 1,2,4,8]
    asvdgi budget   --N 160 --n 5 --ns 207
    asvdgi phantom  text out.pgm --N 128

Configuration files are TOML; tables are flattened, so keys may live at the
top level or in any section (``[experiment]``, ``[sweep]`` ...).  Flags
override file values.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, imgio
from .adaptive import DEFAULT_K2, PipelineResult, run_asvd
from .core import correlation_coefficient
from .dither import DEFAULT_UPSCALE, dither, dithered_forward
from .errors import ConfigError, DegenerateInput, GhostImagingError
from .patterns import derive_seed, random_matrix, sampling_budget, svd_orthogonalize
from .phantoms import PHANTOMS, make_phantom
from .recon import ESTIMATORS
from .sensing import Protocol, ProtocolConfig, add_noise, measure

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

METHODS = ("gi", "dgi", "pgi", "svdgi", "asvd")
SWEEP_AXES = ("sampling_ratio", "snr_db", "k2")
CSV_COLUMNS = ("method", "seed", "sweep_value", "sampling_ratio_patterns",
               "sampling_ratio_total", "cc", "wall_ms", "n_s")

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EMPTY_FOREGROUND = 4

# stream ids for derive_seed; step-1/2 patterns of the pipeline use 1 and 2
_FULL_SCENE_PATTERNS = 10
_FULL_SCENE_NOISE = 11


@dataclass
class ExperimentConfig:
    object_path: str = ""
    N: Optional[int] = None
    n: int = 4
    mode: str = "imaging"
    factor: float = 0.8
    k2: Optional[float] = None
    protocol: str = "single-round"
    snr_db: Optional[float] = None
    noise_step1: bool = True
    seeds: list = field(default_factory=lambda: [0])
    methods: list = field(default_factory=lambda: ["asvd"])
    sweep_axis: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    sampling_ratio: Optional[float] = None
    step2_fraction: float = 1.0
    prefilter_radius: Optional[int] = None
    output_dir: str = "results"
    raw: bool = False
    workers: int = 1

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        flat = {}
        for key, value in data.items():
            if isinstance(value, dict) and key == "sweep":
                if "axis" in value:
                    flat["sweep_axis"] = value["axis"]
                if "values" in value:
                    flat["sweep_values"] = value["values"]
            elif isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**flat)

    @property
    def effective_k2(self) -> Optional[float]:
        if self.mode != "edge":
            return None
        return DEFAULT_K2 if self.k2 is None else self.k2

    @property
    def effective_prefilter(self) -> int:
        if self.prefilter_radius is not None:
            return self.prefilter_radius
        return 1 if self.mode == "edge" else 0

    def validate(self, verb: str = "run") -> None:
        if not isinstance(self.object_path, str) or not self.object_path:
            raise ConfigError("object_path", "required (path or phantom:NAME)")
        for name in ("seeds", "methods", "sweep_values"):
            if not isinstance(getattr(self, name), (list, tuple)):
                raise ConfigError(name, "must be a list")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                   for v in self.sweep_values):
            raise ConfigError("sweep_values", "must be numbers")
        for name in ("factor", "step2_fraction"):
            if not isinstance(getattr(self, name), (int, float)):
                raise ConfigError(name, "must be a number")
        for name in ("k2", "snr_db", "sampling_ratio"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, (int, float)):
                raise ConfigError(name, "must be a number")
        _int_field("n", self.n, minimum=1)
        if self.N is not None:
            _int_field("N", self.N, minimum=1)
            if self.N % self.n:
                raise ConfigError("n", f"superpixel size {self.n} does not divide N={self.N}")
        if self.mode not in ("imaging", "edge"):
            raise ConfigError("mode", f"expected imaging or edge, got {self.mode!r}")
        if not 0.0 < self.factor <= 1.0:
            raise ConfigError("factor", "must be in (0, 1]")
        if self.k2 is not None and not 0.0 < self.k2 <= 1.0:
            raise ConfigError("k2", "must be in (0, 1]")
        try:
            Protocol(self.protocol)
        except ValueError:
            raise ConfigError("protocol", f"unknown protocol {self.protocol!r}") from None
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds", "must be a non-empty list of integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds", "duplicate seed")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError("methods", f"must be a non-empty subset of {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods", "duplicate method")
        if verb == "compare" and len(self.methods) < 2:
            raise ConfigError("methods", "compare needs at least two methods")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError("sweep_axis", f"must be one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise ConfigError("sweep_values", "sweep axis given without values")
            if len(set(self.sweep_values)) != len(self.sweep_values):
                raise ConfigError("sweep_values", "duplicate sweep value")
            if self.sweep_axis == "k2":
                if self.mode != "edge":
                    raise ConfigError("sweep_axis", "a k2 sweep requires mode = edge")
                if self.methods != ["asvd"]:
                    raise ConfigError("methods", "a k2 sweep applies to asvd only")
                if not all(0.0 < v <= 1.0 for v in self.sweep_values):
                    raise ConfigError("sweep_values", "k2 values must be in (0, 1]")
            if self.sweep_axis == "sampling_ratio" and self.sampling_ratio is not None:
                raise ConfigError("sampling_ratio",
                                  "conflicts with a sampling-ratio sweep")
            if self.sweep_axis == "sampling_ratio":
                if not all(0.0 < v <= 1.0 for v in self.sweep_values):
                    raise ConfigError("sweep_values", "sampling ratios must be in (0, 1]")
            if self.sweep_axis == "snr_db" and self.snr_db is not None:
                raise ConfigError("snr_db", "conflicts with an SNR sweep")
        elif self.sweep_values:
            raise ConfigError("sweep_axis", "sweep values given without an axis")
        if self.sampling_ratio is not None and not 0.0 < self.sampling_ratio <= 1.0:
            raise ConfigError("sampling_ratio", "must be in (0, 1]")
        full_scene = [m for m in self.methods if m != "asvd"]
        ratio_known = (self.sampling_ratio is not None
                       or self.sweep_axis == "sampling_ratio"
                       or (verb == "compare" and "asvd" in self.methods))
        if full_scene and not ratio_known:
            raise ConfigError("sampling_ratio", f"required for {', '.join(full_scene)}")
        if not 0.0 < self.step2_fraction <= 1.0:
            raise ConfigError("step2_fraction", "must be in (0, 1]")
        if self.prefilter_radius is not None:
            _int_field("prefilter_radius", self.prefilter_radius, minimum=0)
        _int_field("workers", self.workers, minimum=1)


def _int_field(name, value, minimum):
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}")


def load_object(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.object_path.startswith("phantom:"):
        name = cfg.object_path.split(":", 1)[1]
        if name not in PHANTOMS:
            raise ConfigError("object_path", f"unknown phantom {name!r}")
        obj = make_phantom(name, cfg.N or 128)
    else:
        path = Path(cfg.object_path)
        if not path.is_file():
            raise FileNotFoundError(f"object file not found: {path}")
        obj = imgio.read_image(path)
    if obj.shape[0] != obj.shape[1]:
        raise ConfigError("object_path", f"object must be square, got {obj.shape}")
    if cfg.N is not None and obj.shape[0] != cfg.N:
        raise ConfigError("N", f"object is {obj.shape[0]} pixels wide, config says {cfg.N}")
    if obj.shape[0] % cfg.n:
        raise ConfigError("n", f"superpixel size {cfg.n} does not divide N={obj.shape[0]}")
    return obj


@dataclass
class RunResult:
    method: str
    seed: int
    sweep_value: Optional[float]
    image: np.ndarray
    n_s: Optional[int]
    eta_patterns: float
    eta_total: float
    cc: float
    wall_ms: float
    pipeline: Optional[PipelineResult] = None

    @property
    def degraded(self) -> bool:
        return self.pipeline is not None and self.pipeline.degraded

    def tag(self, axis) -> str:
        t = f"{self.method}_seed{self.seed}"
        if self.sweep_value is not None:
            t += f"_{axis}{self.sweep_value:g}"
        return t


def _cc(a, b):
    try:
        return correlation_coefficient(a, b)
    except DegenerateInput:
        return float("nan")


def _point_params(cfg, sweep_value):
    ratio, snr, k2 = cfg.sampling_ratio, cfg.snr_db, cfg.effective_k2
    if cfg.sweep_axis == "sampling_ratio":
        ratio = sweep_value
    elif cfg.sweep_axis == "snr_db":
        snr = sweep_value
    elif cfg.sweep_axis == "k2":
        k2 = sweep_value
    return ratio, snr, k2


def run_group(cfg: ExperimentConfig, obj: np.ndarray, seed: int,
              sweep_value: Optional[float]) -> list:
    """All methods for one (seed, sweep point); full-scene methods share readings."""
    N = obj.shape[0]
    protocol = Protocol(cfg.protocol)
    ratio, snr, k2 = _point_params(cfg, sweep_value)
    results = []

    if "asvd" in cfg.methods:
        pc = ProtocolConfig(protocol, snr, noise_seed=seed, noise_step1=cfg.noise_step1)
        target = ratio if cfg.sweep_axis == "sampling_ratio" else None
        res = run_asvd(obj, cfg.n, cfg.factor, cfg.mode, k2, pc, seed,
                       step2_fraction=cfg.step2_fraction, target_ratio=target,
                       prefilter_radius=cfg.effective_prefilter)
        results.append(RunResult("asvd", seed, sweep_value, res.final, res.budget.N_S,
                                 res.budget.eta_patterns, res.budget.eta_total,
                                 res.quality.cc, res.quality.wall_time_ms, res))
        if ratio is None:
            ratio = res.budget.eta_total

    full_scene = [m for m in cfg.methods if m != "asvd"]
    if not full_scene:
        return results
    # ratios are total ratios, so the auxiliary projection counts against them
    aux = 1 if protocol is Protocol.SINGLE_ROUND else 0
    M = max(1, min(N * N, int(round(ratio * N * N)) - aux))
    phi = random_matrix(M, N * N, derive_seed(seed, _FULL_SCENE_PATTERNS))
    records = {}

    def record_for(matrix, key):
        if key not in records:
            rec = measure(matrix, obj, protocol)
            if snr is not None:
                rec = add_noise(rec, snr, derive_seed(seed, _FULL_SCENE_NOISE))
            records[key] = rec
        return records[key]

    phi_svd = None
    for method in full_scene:
        if method == "svdgi":
            if phi_svd is None:
                phi_svd = svd_orthogonalize(phi)
            matrix, key = phi_svd, "svd"
        else:
            matrix, key = phi, "random"
        rec = record_for(matrix, key)
        t0 = time.perf_counter()
        img = ESTIMATORS[method](matrix, rec)
        wall = 1e3 * (time.perf_counter() - t0)
        results.append(RunResult(method, seed, sweep_value, img, None, M / (N * N),
                                 (M + aux) / (N * N), _cc(img, obj), wall))
    return results


def _sort_key(r: RunResult):
    return (r.method, r.seed, -np.inf if r.sweep_value is None else r.sweep_value)


def execute(cfg: ExperimentConfig, obj: np.ndarray) -> list:
    points = cfg.sweep_values if cfg.sweep_axis else [None]
    groups = [(s, v) for s in cfg.seeds for v in points]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(lambda g: run_group(cfg, obj, *g), groups))
    else:
        chunks = [run_group(cfg, obj, *g) for g in groups]
    return sorted((r for chunk in chunks for r in chunk), key=_sort_key)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow([r.method, r.seed, _fmt(r.sweep_value),
                    _fmt(float(r.eta_patterns)), _fmt(float(r.eta_total)),
                    _fmt(float(r.cc)), f"{r.wall_ms:.3f}", _fmt(r.n_s)])
    return buf.getvalue()


def write_outputs(cfg: ExperimentConfig, obj, results, verb: str) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    single = len(results) == 1
    files = {}
    for r in results:
        tag = r.tag(cfg.sweep_axis)
        run_dir = out if single else out / "runs" / tag
        run_dir.mkdir(parents=True, exist_ok=True)
        if r.pipeline is not None:
            r.pipeline.save(run_dir, raw=cfg.raw)
        else:
            imgio.write_image(run_dir / "final.png", r.image, normalize=False)
            if cfg.raw:
                imgio.write_raw(run_dir / "final.f64", r.image)
        files[tag] = str(run_dir.relative_to(out)) if not single else "."
    (out / "results.csv").write_text(results_csv(results))
    montages = []
    if verb == "compare":
        montages = _write_montages(cfg, obj, results, out)
    manifest = {
        "version": __version__,
        "verb": verb,
        "config": asdict(cfg),
        "object_shape": list(obj.shape),
        "runs": files,
        "degraded": sorted(r.tag(cfg.sweep_axis) for r in results if r.degraded),
        "montages": montages,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def montage(images, gap: int = 2) -> np.ndarray:
    """Images side by side, each already in [0, 1], separated by white columns."""
    h = images[0].shape[0]
    parts = []
    for i, img in enumerate(images):
        if i:
            parts.append(np.ones((h, gap)))
        parts.append(np.clip(img, 0.0, 1.0))
    return np.hstack(parts)


def _write_montages(cfg, obj, results, out):
    groups = {}
    for r in results:
        groups.setdefault((r.seed, r.sweep_value), {})[r.method] = r.image
    names = []
    for (seed, value), imgs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        panel = montage([obj] + [imgs[m] for m in cfg.methods if m in imgs])
        if len(groups) == 1:
            name = "montage.png"
        else:
            name = f"montage_seed{seed}" + ("" if value is None else f"_{value:g}") + ".png"
        imgio.write_image(out / name, panel, normalize=False)
        names.append(name)
    return names


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _experiment(cfg: ExperimentConfig, verb: str) -> int:
    try:
        cfg.validate(verb)
        obj = load_object(cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config {exc}")
    except (OSError, ValueError) as exc:
        return _fail(EXIT_IO, f"I/O: {exc}")
    try:
        results = execute(cfg, obj)
        manifest = write_outputs(cfg, obj, results, verb)
    except OSError as exc:
        return _fail(EXIT_IO, f"I/O: {exc}")
    except GhostImagingError as exc:
        return _fail(1, f"{type(exc).__name__}: {exc}")
    for r in results:
        print(f"{r.tag(cfg.sweep_axis)}: cc={r.cc:.4f} eta={r.eta_total:.4f}")
    if manifest["degraded"]:
        return _fail(EXIT_EMPTY_FOREGROUND,
                     f"EmptyForeground: no superpixel selected in {len(manifest['degraded'])} "
                     f"run(s): {', '.join(manifest['degraded'])}")
    return 0


def cmd_run(cfg: ExperimentConfig) -> int:
    return _experiment(cfg, "run")


def cmd_compare(cfg: ExperimentConfig) -> int:
    return _experiment(cfg, "compare")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _strs(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _experiment_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--object", dest="object_path", help="image path or phantom:NAME")
    p.add_argument("--N", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=("imaging", "edge"))
    p.add_argument("--factor", type=float)
    p.add_argument("--k2", type=float)
    p.add_argument("--protocol", choices=[pr.value for pr in Protocol])
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--no-step1-noise", dest="noise_step1", action="store_false", default=None)
    p.add_argument("--seeds", type=_ints, help="comma-separated integers")
    p.add_argument("--methods", type=_strs, help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--sweep-axis", dest="sweep_axis", choices=SWEEP_AXES)
    p.add_argument("--sweep-values", dest="sweep_values", type=_floats)
    p.add_argument("--sampling-ratio", dest="sampling_ratio", type=float)
    p.add_argument("--step2-fraction", dest="step2_fraction", type=float)
    p.add_argument("--prefilter-radius", dest="prefilter_radius", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--raw", action="store_true", default=None, help="also dump float64 images")
    p.add_argument("--workers", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asvdgi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)
    _experiment_parser(sub, "run", "run experiments and write results.csv")
    _experiment_parser(sub, "compare", "run several methods on shared data plus a montage")

    d = sub.add_parser("dither", help="binarize a grayscale pattern")
    d.add_argument("input", type=Path)
    d.add_argument("output", type=Path, help="PBM output")
    d.add_argument("--a", type=int, default=DEFAULT_UPSCALE, help="upscale factor")
    d.add_argument("--packed", type=Path, help="also write a packed-bit blob")
    d.add_argument("--error-vs-a", dest="error_vs_a", type=_ints,
                   help="comma-separated upscale factors; print the reading error for each")
    d.add_argument("--object", dest="object_path", type=Path,
                   help="object for --error-vs-a (default: all-ones)")

    b = sub.add_parser("budget", help="print measurement counts and sampling ratios")
    b.add_argument("--N", type=int, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--ns", type=int, required=True, help="selected superpixels")

    ph = sub.add_parser("phantom", help="write a synthetic test object")
    ph.add_argument("name", choices=sorted(PHANTOMS))
    ph.add_argument("output", type=Path)
    ph.add_argument("--N", type=int, default=128)
    return parser


_OVERRIDES = [f.name for f in fields(ExperimentConfig)]


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        with open(args.config, "rb") as fh:
            data = tomllib.load(fh)
    cfg = ExperimentConfig.from_mapping(data)
    for name in _OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _dither_report(pattern, object_path, factors) -> int:
    """Print the dithered bucket reading against the grayscale one for each factor."""
    try:
        obj = np.ones_like(pattern) if object_path is None else imgio.read_image(object_path)
        ideal = float(np.sum(pattern * obj))
        rows = []
        for a in factors:
            reading = dithered_forward(pattern, obj, a)
            rel = abs(reading - ideal) / abs(ideal) if ideal else abs(reading)
            rows.append({"a": a, "reading": reading, "ideal": ideal, "relative_error": rel})
    except OSError as exc:
        return _fail(EXIT_IO, f"I/O: {exc}")
    except GhostImagingError as exc:
        return _fail(EXIT_CONFIG, f"{type(exc).__name__}: {exc}")
    print(json.dumps(rows, indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb in ("run", "compare"):
        try:
            cfg = config_from_args(args)
        except ConfigError as exc:
            return _fail(EXIT_CONFIG, f"config {exc}")
        except (OSError, tomllib.TOMLDecodeError) as exc:
            return _fail(EXIT_IO, f"I/O: cannot read config: {exc}")
        except TypeError as exc:
            return _fail(EXIT_CONFIG, f"config {exc}")
        return cmd_run(cfg) if args.verb == "run" else cmd_compare(cfg)
    if args.verb == "dither":
        try:
            pattern = imgio.read_image(args.input)
            bp = dither(pattern, args.a)
            bp.save_pbm(args.output)
            if args.packed:
                bp.save_packed(args.packed)
        except OSError as exc:
            return _fail(EXIT_IO, f"I/O: {exc}")
        except GhostImagingError as exc:
            return _fail(EXIT_CONFIG, f"{type(exc).__name__}: {exc}")
        print(f"{args.output}: {bp.side}x{bp.side} bits, on-fraction {bp.bits.mean():.4f}")
        if args.error_vs_a:
            return _dither_report(pattern, args.object_path, args.error_vs_a)
        return 0
    if args.verb == "budget":
        try:
            budget = sampling_budget(args.N, args.n, args.ns)
        except (GhostImagingError, ValueError) as exc:
            return _fail(EXIT_CONFIG, str(exc))
        print(json.dumps(budget.to_dict(), indent=2))
        return 0
    if args.verb == "phantom":
        try:
            imgio.write_image(args.output, make_phantom(args.name, args.N), normalize=False)
        except (OSError, ValueError) as exc:
            return _fail(EXIT_IO, f"I/O: {exc}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
