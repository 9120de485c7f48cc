"""Command line: extract, vectorize, evaluate, report, selftest.

Every stage writes under ``--out``; ``manifest.json`` at its root records the
config fingerprint, per-stage timing and artifact paths. Stage outputs are
keyed by content hashes so unchanged reruns are cache hits.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, storage
from .filtration import FiltrationConfig
from .imageio import LabeledDataset, load_mnist, subset
from .learn import ARCHITECTURES, ArrayFeatures, EvalReport, TrainConfig, crossvalidate
from .pipeline import DiagramFeatures, extract_diagrams, read_diagram_cache, write_diagram_cache
from .vectorize import STRATEGIES, VectorizerConfig, fit_sample_ranges, vectorize_dataset

log = logging.getLogger("tdamnist")

DATA_ENV = "TDAMNIST_DATA"
TABLE_COLUMNS = ("H0", "H1", "fused", "concat")
BASELINE = "MLP-I"


def default_data_root() -> Path:
    return Path(os.environ.get(DATA_ENV, Path.home() / "data" / "mnist")).expanduser()


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    data_root: Path = field(default_factory=default_data_root)
    n_train: int = 5000
    n_test: int = 1250
    seed: int = 0
    filtration: FiltrationConfig = field(default_factory=FiltrationConfig)
    vectorizers: list[str] = field(default_factory=lambda: ["betti"])
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    train: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 10
    out: Path = Path("runs/default")
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        for v in self.vectorizers:
            VectorizerConfig.parse(v)
        for s in self.strategies:
            if s not in STRATEGIES:
                raise UsageError(f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        p = configparser.ConfigParser()
        if not p.read(Path(path)):
            raise UsageError(f"config file {path} not readable")
        kw: dict = {}
        if p.has_section("data"):
            d = p["data"]
            if "root" in d:
                kw["data_root"] = Path(d["root"]).expanduser()
            for k in ("n_train", "n_test", "seed"):
                if k in d:
                    kw[k] = d.getint(k)
        if p.has_section("filtration"):
            kw["filtration"] = FiltrationConfig.from_section(p["filtration"])
        if p.has_section("vectorize"):
            v = p["vectorize"]
            if "vectorizers" in v:
                kw["vectorizers"] = [s.strip() for s in v["vectorizers"].split(";") if s.strip()]
            if "strategies" in v:
                kw["strategies"] = [s.strip() for s in v["strategies"].split(",") if s.strip()]
        if p.has_section("train"):
            t = p["train"]
            tk = {}
            for k in ("epochs", "batch_size", "seed"):
                if k in t:
                    tk[k] = t.getint(k)
            if "learning_rate" in t:
                tk["learning_rate"] = t.getfloat("learning_rate")
            kw["train"] = TrainConfig(**tk)
            if "folds" in t:
                kw["folds"] = t.getint("folds")
        if p.has_section("output") and "dir" in p["output"]:
            kw["out"] = Path(p["output"]["dir"])
        return cls(**kw)

    def dataset_key(self) -> dict:
        return {"n_train": self.n_train, "n_test": self.n_test, "seed": self.seed}

    def to_dict(self) -> dict:
        return {
            "data_root": str(self.data_root),
            **self.dataset_key(),
            "filtration": self.filtration.to_dict(),
            "vectorizers": self.vectorizers,
            "strategies": self.strategies,
            "train": self.train.to_dict(),
            "folds": self.folds,
        }


class RunManifest:
    """``manifest.json`` under the output directory."""

    def __init__(self, out: Path, cfg: PipelineConfig):
        self.path = out / "manifest.json"
        self.data = {"stages": {}}
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text())
            except json.JSONDecodeError:
                log.warning("manifest unreadable, starting a new one")
        self.data["tool_version"] = __version__
        self.data["config"] = cfg.to_dict()
        self.data["config_fingerprint"] = storage.fingerprint(cfg.to_dict())

    def record(self, stage: str, seconds: float, cache_hit: bool, artifacts: list[Path]) -> None:
        self.data.setdefault("stages", {})[stage] = {
            "seconds": round(seconds, 3),
            "cache_hit": cache_hit,
            "artifacts": [str(a) for a in artifacts],
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def load_dataset(cfg: PipelineConfig) -> tuple[LabeledDataset, str]:
    """Configured subset of the MNIST training files and its fingerprint."""
    try:
        full = load_mnist(cfg.data_root, "train")
    except FileNotFoundError as exc:
        raise UsageError(f"{exc}; point {DATA_ENV} or [data] root at the MNIST IDX files") from exc
    ds = subset(full, cfg.n_train, cfg.n_test, cfg.seed)
    fp = storage.fingerprint(ds.labels.astype(np.uint8).tobytes() + ds.source_idx.astype("<i8").tobytes()
                             + np.rint(ds.images * 255).astype(np.uint8).tobytes())
    return ds, fp


def _diagram_path(out: Path) -> Path:
    return out / "diagrams.tdac"


def _feature_path(out: Path, vectorizer: str, strategy: str) -> Path:
    return out / "features" / f"{VectorizerConfig.parse(vectorizer).name}_{strategy}.tdac"


def _diagram_key(cfg: PipelineConfig, dataset_fp: str) -> str:
    return storage.fingerprint({"dataset": dataset_fp, "filtration": cfg.filtration.to_dict()})


def cmd_extract(cfg: PipelineConfig) -> Path:
    t0 = time.perf_counter()
    manifest = RunManifest(cfg.out, cfg)
    ds, fp = load_dataset(cfg)
    path = _diagram_path(cfg.out)
    key = _diagram_key(cfg, fp)
    if path.exists():
        try:
            header, _ = storage.read(path)
            if header.get("key") == key:
                log.info("diagram cache hit: %s", path)
                manifest.record("extract", time.perf_counter() - t0, True, [path])
                return path
            log.info("diagram cache stale, recomputing")
        except (storage.ContainerError, KeyError, ValueError) as exc:
            log.warning("corrupt diagram cache %s (%s); rebuilding", path, exc)
    diagrams = extract_diagrams(ds.images, cfg.filtration, workers=cfg.workers)
    tags = [str(t) for t in cfg.filtration.tags()]
    write_diagram_cache(path, diagrams, {
        "key": key,
        "dataset_fingerprint": fp,
        "filtration": cfg.filtration.to_dict(),
        "fields": tags,
        "labels": ds.labels.tolist(),
        "train_idx": ds.train_idx.tolist(),
        "test_idx": ds.test_idx.tolist(),
    })
    log.info("extracted %d x %d diagrams -> %s", len(diagrams), 2 * len(tags), path)
    manifest.record("extract", time.perf_counter() - t0, False, [path])
    return path


def _load_diagrams(cfg: PipelineConfig):
    path = _diagram_path(cfg.out)
    if not path.exists():
        raise UsageError(f"no diagram cache at {path}; run `tdamnist extract` first")
    try:
        return read_diagram_cache(path)
    except storage.ContainerError as exc:
        raise UsageError(f"diagram cache {path} is corrupt ({exc}); rerun `tdamnist extract`") from exc


def _feature_header(vcfg: VectorizerConfig, strategy: str, dataset_fp: str) -> dict:
    return {"kind": "features", "vectorizer": vcfg.to_dict(), "strategy": strategy, "dataset_fingerprint": dataset_fp}


def cmd_vectorize(cfg: PipelineConfig, vectorizer: str, strategy: str) -> Path:
    t0 = time.perf_counter()
    manifest = RunManifest(cfg.out, cfg)
    vcfg = VectorizerConfig.parse(vectorizer)
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}; valid: {', '.join(STRATEGIES)}")
    header, diagrams = _load_diagrams(cfg)
    path = _feature_path(cfg.out, vectorizer, strategy)
    want = _feature_header(vcfg, strategy, header["dataset_fingerprint"])
    if path.exists():
        try:
            old, _ = storage.read(path)
            if all(old.get(k) == v for k, v in want.items()):
                log.info("feature cache hit: %s", path)
                manifest.record(f"vectorize:{vcfg.name}:{strategy}", time.perf_counter() - t0, True, [path])
                return path
        except storage.ContainerError as exc:
            log.warning("corrupt feature cache %s (%s); rebuilding", path, exc)
    train_idx = header["train_idx"]
    ranges = fit_sample_ranges([diagrams[i] for i in train_idx])
    for key in sorted(ranges.flagged):
        log.warning("channel %s has no training points; range set to (0, 1)", key)
    matrix, layout = vectorize_dataset(diagrams, vcfg, strategy, ranges)
    storage.write(path, {
        **want,
        "layout": [list(s) for s in layout],
        "sample_ranges": ranges.to_dict(),
        "fields": header["fields"],
    }, matrix)
    log.info("features %s: %d x %d", path.name, *matrix.shape)
    manifest.record(f"vectorize:{vcfg.name}:{strategy}", time.perf_counter() - t0, False, [path])
    return path


def _diff(want: dict, have: dict) -> str:
    keys = sorted(set(want) | set(have))
    return "\n".join(f"  {k}: requested {want.get(k)!r}, cached {have.get(k)!r}"
                     for k in keys if want.get(k) != have.get(k))


def _report_stem(arch: str, vectorizer: str, strategy: str) -> str:
    return f"{arch}_{vectorizer}_{strategy}".replace("+", "-")


def cmd_evaluate(cfg: PipelineConfig, arch: str, vectorizer: str | None, strategy: str | None) -> EvalReport:
    """Cross-validate one architecture and add its row to ``results.jsonl``."""
    t0 = time.perf_counter()
    if arch not in ARCHITECTURES:
        raise UsageError(f"unknown architecture {arch!r}; valid names: {', '.join(ARCHITECTURES)}")
    kinds = ARCHITECTURES[arch]
    n_topo = kinds.count("topo")
    manifest = RunManifest(cfg.out, cfg)
    header, diagrams = _load_diagrams(cfg)
    labels = np.asarray(header["labels"])

    vec_names = [v for v in (vectorizer or "").split("+") if v]
    if n_topo and len(vec_names) not in (1, n_topo):
        raise UsageError(f"{arch} needs {n_topo} vectorizer(s) joined by '+', got {vectorizer!r}")
    if n_topo and strategy not in STRATEGIES:
        raise UsageError(f"{arch} needs --strategy, one of {', '.join(STRATEGIES)}")
    if n_topo and len(vec_names) == 1:
        vec_names = vec_names * n_topo

    sources = []
    topo = iter(vec_names)
    for kind in kinds:
        if kind == "image":
            ds, fp = load_dataset(cfg)
            if fp != header["dataset_fingerprint"]:
                raise UsageError("dataset differs from the one the diagram cache was built on:\n"
                                 + _diff({"dataset_fingerprint": fp}, header))
            sources.append(ArrayFeatures(ds.images.reshape(len(ds), -1)))
        else:
            name = next(topo)
            vcfg = VectorizerConfig.parse(name)
            fpath = _feature_path(cfg.out, name, strategy)
            if fpath.exists():
                have, _ = storage.read(fpath)
                want = _feature_header(vcfg, strategy, header["dataset_fingerprint"])
                if any(have.get(k) != v for k, v in want.items()):
                    raise UsageError(f"feature file {fpath} was built with a different config:\n"
                                     + _diff(want, {k: have.get(k) for k in want}))
            sources.append(DiagramFeatures(diagrams, vcfg, strategy))

    vec_tag = "+".join(VectorizerConfig.parse(v).name for v in vec_names) if n_topo else "-"
    strat_tag = strategy if n_topo else "-"
    report = crossvalidate(sources, labels, arch, cfg.train, folds=cfg.folds, seed=cfg.seed,
                           vectorizer=vec_tag, strategy=strat_tag)
    report.config["dataset_fingerprint"] = header["dataset_fingerprint"]

    rdir = cfg.out / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    stem = _report_stem(arch, vec_tag, strat_tag)
    (rdir / f"{stem}.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (rdir / f"{stem}.txt").write_text(report.table() + "\n")
    _upsert_result(cfg.out / "results.jsonl", report)
    manifest.record(f"evaluate:{stem}", time.perf_counter() - t0, False,
                    [rdir / f"{stem}.json", rdir / f"{stem}.txt"])
    return report


def _upsert_result(path: Path, report: EvalReport) -> None:
    rows = _read_results(path)
    key = (report.architecture, report.vectorizer, report.strategy)
    rows = [r for r in rows if (r["architecture"], r["vectorizer"], r["strategy"]) != key]
    rows.append({"architecture": key[0], "vectorizer": key[1], "strategy": key[2],
                 "mean": report.mean, "std": report.std, "folds": report.fold_accuracies})
    rows.sort(key=lambda r: (r["vectorizer"], r["architecture"], r["strategy"]))
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def _read_results(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def cmd_report(out: Path) -> str:
    """One table per vectorizer; cells beating the MLP-I baseline mean are starred."""
    rows = _read_results(Path(out) / "results.jsonl")
    if not rows:
        raise UsageError(f"no evaluations under {out}; run `tdamnist evaluate` first")
    base = next((r for r in rows if r["architecture"] == BASELINE), None)
    width = 22
    lines = []
    if base is None:
        lines.append(f"note: no {BASELINE} baseline run; highlighting suppressed")
    else:
        lines.append("* = mean accuracy above the baseline mean")
        lines.append("")
        lines.append(f"{'architecture':<14}{'pixels':>{width}}")
        lines.append(f"{BASELINE:<14}" + f"{base['mean']:.5f} +/- {base['std']:.5f} ".rjust(width))
    vecs = sorted({r["vectorizer"] for r in rows if r["architecture"] != BASELINE})
    for vec in vecs:
        lines.append("")
        lines.append(f"vectorizer: {vec}")
        lines.append(f"{'architecture':<14}" + "".join(f"{c:>{width}}" for c in TABLE_COLUMNS))
        archs = sorted({r["architecture"] for r in rows if r["vectorizer"] == vec})
        for arch in archs:
            cells = []
            for col in TABLE_COLUMNS:
                r = next((r for r in rows if (r["architecture"], r["vectorizer"], r["strategy"]) == (arch, vec, col)), None)
                if r is None:
                    cells.append(f"{'-':>{width}}")
                    continue
                flag = "*" if base is not None and r["mean"] > base["mean"] else " "
                cells.append(f"{r['mean']:.5f} +/- {r['std']:.5f}{flag}".rjust(width))
            lines.append(f"{arch:<14}" + "".join(cells))
    text = "\n".join(lines) + "\n"
    (Path(out) / "report.txt").write_text(text)
    return text


def cmd_selftest() -> bool:
    """Small oracle checks; prints one line per check."""
    from .cubical import build_complex, sublevel_counts
    from .persistence import betti_at, compute_persistence, finalize_diagram, h0_union_find

    checks = []
    ring = np.zeros((3, 3))
    ring[1, 1] = 2
    d0, d1 = compute_persistence(build_complex(ring))
    checks.append(("ring diagrams", finalize_diagram(d0).multiset() == [(0.0, 2.0)]
                   and finalize_diagram(d1).multiset() == [(0.0, 2.0)]))
    d0, d1 = compute_persistence(build_complex(np.array([[1.0, 0.0, 1.0]])))
    checks.append(("1x3 row diagrams", finalize_diagram(d0).multiset() == [(0.0, 1.0)] and len(d1) == 0))
    rng = np.random.default_rng(0)
    ok_uf = ok_euler = True
    for _ in range(50):
        f = rng.integers(0, 5, tuple(rng.integers(3, 8, 2))).astype(float)
        cx = build_complex(f)
        dg = compute_persistence(cx)
        ok_uf &= h0_union_find(cx).multiset() == dg[0].multiset()
        for t in np.unique(f):
            b0, b1 = betti_at(dg, t)
            v, e, s = sublevel_counts(cx, t)
            ok_euler &= b0 - b1 == v - e + s
    checks.append(("union-find == reduction (H0)", bool(ok_uf)))
    checks.append(("Euler consistency", bool(ok_euler)))
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return all(ok for _, ok in checks)


def _parse_subset(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--subset expects <train>:<test>, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--seed", type=int, help="subset / fold / init seed")
    common.add_argument("--workers", type=int, help="extraction worker processes (default: CPU count)")
    common.add_argument("--subset", type=_parse_subset, metavar="TRAIN:TEST")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tdamnist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common], help="compute and cache persistence diagrams")
    p = sub.add_parser("vectorize", parents=[common], help="build a feature matrix from cached diagrams")
    p.add_argument("--vectorizer", help="betti | landscapeN | silhouette | image | heat (default: config list)")
    p.add_argument("--strategy", choices=STRATEGIES, help="default: config list")
    p = sub.add_parser("evaluate", parents=[common], help="k-fold cross-validation of one architecture")
    p.add_argument("--arch", required=True, help=", ".join(ARCHITECTURES))
    p.add_argument("--vectorizer", help="vectorizer(s) for topological streams, joined by '+'")
    p.add_argument("--strategy", choices=STRATEGIES)
    sub.add_parser("report", parents=[common], help="consolidated result tables")
    sub.add_parser("selftest", parents=[common], help="quick oracle checks")
    return parser


def config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train = TrainConfig(**{**cfg.train.to_dict(), "seed": args.seed})
    if args.workers is not None:
        cfg.workers = args.workers
    if args.subset is not None:
        cfg.n_train, cfg.n_test = args.subset
    if args.out is not None:
        cfg.out = args.out
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "extract":
            print(cmd_extract(cfg))
        elif args.command == "vectorize":
            vecs = [args.vectorizer] if args.vectorizer else cfg.vectorizers
            strats = [args.strategy] if args.strategy else cfg.strategies
            for v in vecs:
                for strat in strats:
                    print(cmd_vectorize(cfg, v, strat))
        elif args.command == "evaluate":
            report = cmd_evaluate(cfg, args.arch, args.vectorizer, args.strategy)
            print(report.table())
        elif args.command == "report":
            print(cmd_report(cfg.out), end="")
        elif args.command == "selftest":
            return 0 if cmd_selftest() else 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
