"""Config-driven scenario matrix: adaptation methods x datasets x seeds.

Runs the full benchmark protocol on synthetic domain pairs: train a segmenter
under each scenario, evaluate on the held-out target test split, aggregate
over seeds, and persist reports, figures, and per-run provenance. Cells are
independent, resumable by config hash, and deterministic given their seeds.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .curation import CurationConfig, CurationReport, gate
from .imagecore import (
    DatasetSplit,
    compute_histogram,
    concat_splits,
    mean_histogram,
    save_image,
)
from .metrics import (
    SCENARIO_ORDER,
    AggregateTable,
    ConfusionCounts,
    RunResult,
    aggregate,
    confusion,
    iou,
    segmentation_accuracy,
)
from .segmodel import SegTrainConfig, SegmenterModel, predict, train_segmenter
from .synthgen import (
    SOURCE_STYLE,
    TARGET_STYLES,
    DomainPair,
    DomainStyle,
    LayoutSpec,
    generate_domain_pair,
    style_record,
)
from .translate import (
    TranslationConfig,
    TranslatorModel,
    apply_translator,
    fda_translate,
    hist_match,
    train_translator,
)

SCENARIOS = SCENARIO_ORDER
MONTAGE_SAMPLES = 12

__all__ = [
    "SCENARIOS",
    "ConfigError",
    "DatasetSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "desk_scale_config",
    "full_scale_config",
    "build_pair",
    "run_scenario",
    "run_matrix",
    "evaluate_segmenter",
]


class ConfigError(ValueError):
    """The experiment configuration names an unknown scenario or is inconsistent."""


def _auto_widths(image_size: int) -> tuple[int, int]:
    if image_size >= 96:
        return (3, 7)
    if image_size >= 48:
        return (2, 5)
    return (2, 4)


@dataclass
class DatasetSpec:
    """One synthetic source/target domain pair of the matrix."""

    name: str
    source_style: DomainStyle
    target_style: DomainStyle
    n_train: int = 200
    n_test: int = 50
    image_size: int = 64
    density: float = 0.30
    line_width_range: tuple[int, int] | None = None
    seed: int = 7

    def layout_spec(self) -> LayoutSpec:
        widths = self.line_width_range or _auto_widths(self.image_size)
        return LayoutSpec(
            image_size=self.image_size,
            line_width_range=tuple(widths),
            density=self.density,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source_style": self.source_style.to_dict(),
            "target_style": self.target_style.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "image_size": self.image_size,
            "density": self.density,
            "line_width_range": list(self.line_width_range) if self.line_width_range else None,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        def style(value, fallback):
            if value is None:
                return fallback
            if isinstance(value, str):
                if value == "source":
                    return SOURCE_STYLE
                if value not in TARGET_STYLES:
                    raise ConfigError(f"unknown style preset {value!r}; expected one of {sorted(TARGET_STYLES)}")
                return TARGET_STYLES[value]
            return DomainStyle.from_dict(value)

        lw = d.get("line_width_range")
        return cls(
            name=d["name"],
            source_style=style(d.get("source_style"), SOURCE_STYLE),
            target_style=style(d.get("target_style"), TARGET_STYLES["shifted-dark-lowcontrast"]),
            n_train=int(d.get("n_train", 200)),
            n_test=int(d.get("n_test", 50)),
            image_size=int(d.get("image_size", 64)),
            density=float(d.get("density", 0.30)),
            line_width_range=tuple(lw) if lw else None,
            seed=int(d.get("seed", 7)),
        )


@dataclass
class ExperimentConfig:
    """Everything run_matrix needs: scenario list, datasets, seeds, module configs."""

    scenarios: list[str]
    datasets: list[DatasetSpec]
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    translation: TranslationConfig = field(default_factory=TranslationConfig)
    curation: CurationConfig = field(default_factory=CurationConfig)
    segmentation: SegTrainConfig = field(default_factory=SegTrainConfig)
    out_dir: str = "experiment-out"

    def __post_init__(self):
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ConfigError(f"unknown scenario {s!r}; expected one of {SCENARIOS}")
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be unique")

    def to_dict(self) -> dict:
        return {
            "scenarios": list(self.scenarios),
            "datasets": [d.to_dict() for d in self.datasets],
            "seeds": list(self.seeds),
            "translation": asdict(self.translation),
            "curation": asdict(self.curation),
            "segmentation": asdict(self.segmentation),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        seeds = d.get("seeds")
        if seeds is None:
            seeds = list(range(int(d.get("n_seeds", 5))))
        return cls(
            scenarios=list(d["scenarios"]),
            datasets=[DatasetSpec.from_dict(x) for x in d["datasets"]],
            seeds=[int(s) for s in seeds],
            translation=TranslationConfig(**d.get("translation", {})),
            curation=CurationConfig(**d.get("curation", {})),
            segmentation=SegTrainConfig(**d.get("segmentation", {})),
            out_dir=str(d.get("out_dir", "experiment-out")),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def config_hash(self) -> str:
        """Hash of the computation (location-independent: out_dir excluded)."""
        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def desk_scale_config(out_dir: str, targets: list[str] | None = None) -> ExperimentConfig:
    """Default CPU-friendly preset: 64x64 images, 200/50 split, 3 seeds."""
    targets = targets or list(TARGET_STYLES)
    return ExperimentConfig(
        scenarios=list(SCENARIOS),
        datasets=[
            DatasetSpec(name=t, source_style=SOURCE_STYLE, target_style=TARGET_STYLES[t])
            for t in targets
        ],
        seeds=[0, 1, 2],
        out_dir=out_dir,
    )


def full_scale_config(out_dir: str) -> ExperimentConfig:
    """Full-protocol preset: 128x128 images, ~1500 per domain at 80:20, 5 seeds."""
    return ExperimentConfig(
        scenarios=list(SCENARIOS),
        datasets=[
            DatasetSpec(
                name=t,
                source_style=SOURCE_STYLE,
                target_style=TARGET_STYLES[t],
                n_train=1200,
                n_test=300,
                image_size=128,
            )
            for t in TARGET_STYLES
        ],
        seeds=[0, 1, 2, 3, 4],
        translation=TranslationConfig(epochs=20),
        segmentation=SegTrainConfig(epochs=40),
        out_dir=out_dir,
    )


def environment_record() -> dict:
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "torch": torch.__version__,
    }


def build_pair(spec: DatasetSpec, data_dir: str | Path | None = None) -> DomainPair:
    """Generate (deterministically) the four splits for a dataset spec.

    When data_dir is given, manifests are persisted there; an existing copy is
    reused only if its style.json matches this spec's generation recipe.
    """
    write_dir = data_dir
    if data_dir is not None:
        marker = Path(data_dir) / "style.json"
        expected = style_record(
            spec.source_style, spec.target_style, spec.layout_spec(), spec.n_train, spec.n_test
        )
        if marker.exists() and json.loads(marker.read_text()) == expected:
            write_dir = None
    return generate_domain_pair(
        spec.source_style,
        spec.target_style,
        n_train=spec.n_train,
        n_test=spec.n_test,
        spec=spec.layout_spec(),
        out_dir=write_dir,
    )


def evaluate_segmenter(model: SegmenterModel, test_split: DatasetSplit) -> tuple[float, float, ConfusionCounts]:
    """Micro-averaged SA / IoU of the model on a labeled test split."""
    if test_split.masks is None:
        raise ValueError("evaluation split has no masks")
    preds = predict(test_split, model)
    counts = ConfusionCounts(0, 0, 0, 0)
    for p, t in zip(preds, test_split.masks):
        counts = counts + confusion(p, t)
    return segmentation_accuracy(counts), iou(counts), counts


def _training_split(
    name: str,
    pair: DomainPair,
    cfg: ExperimentConfig,
    seed: int,
    translator: TranslatorModel | None,
    augment_transformed: DatasetSplit | None,
    details: dict,
) -> DatasetSplit:
    if name == "source-only":
        return pair.source_train

    if name == "hist-match":
        profile = mean_histogram([compute_histogram(im) for im in pair.target_train.images])
        images = [hist_match(im, profile) for im in pair.source_train.images]
        return pair.source_train.with_images(images)

    if name == "fda":
        rng = np.random.default_rng(seed)
        targets = pair.target_train.images
        images = [
            fda_translate(im, targets[int(rng.integers(len(targets)))], cfg.translation.fda_beta)
            for im in pair.source_train.images
        ]
        return pair.source_train.with_images(images)

    if name in ("cyclegan", "hgit"):
        if translator is None:
            translator = train_translator(
                pair.source_train, pair.target_train, replace(cfg.translation, seed=seed)
            )
            details["translator_trained"] = True
        transformed = apply_translator(pair.source_train, translator)
        if augment_transformed is not None:
            transformed = concat_splits(transformed, augment_transformed)
        if name == "cyclegan":
            return transformed
        selected, report = gate(transformed, pair.target_train, cfg.curation)
        details["curation"] = (transformed, report)
        return selected

    if name == "supervised":
        return DatasetSplit(
            images=pair.target_train.images,
            masks=pair.target_train_masks,
            ids=list(pair.target_train.ids),
            role="target-train",
        )

    raise ConfigError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")


def _eval_ids_sha(split: DatasetSplit) -> str:
    return hashlib.sha256("\n".join(split.ids).encode()).hexdigest()[:16]


def _save_curation_artifacts(run_dir: Path, transformed: DatasetSplit, report: CurationReport) -> None:
    report.to_json(run_dir / "curation_report.json")
    report.to_csv(run_dir / "curation_report.csv")
    by_id = {item_id: img for item_id, img in zip(transformed.ids, transformed.images)}
    ranked = [r.image_id for r in report.records]
    half = MONTAGE_SAMPLES // 2
    sample = ranked[:half] + ranked[-half:] if len(ranked) > MONTAGE_SAMPLES else ranked
    for item_id in sample:
        save_image(by_id[item_id], run_dir / "curation_samples" / f"{item_id}.png")


def run_scenario(
    name: str,
    pair: DomainPair,
    cfg: ExperimentConfig,
    seed: int,
    dataset: str = "",
    translator: TranslatorModel | None = None,
    augment_transformed: DatasetSplit | None = None,
    workdir: str | Path | None = None,
    verbose: bool = False,
) -> tuple[RunResult, dict]:
    """Run one scenario end to end and score it on the target test split.

    augment_transformed, when given, is concatenated onto the translator
    output before (un)gated training; it exists so degraded translations can
    be injected for curation studies. Returns the run result plus a details
    dict (confusion counts, training-set size, curation report when gating
    ran).
    """
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    t0 = time.perf_counter()
    details: dict = {}
    try:
        training = _training_split(name, pair, cfg, seed, translator, augment_transformed, details)
        seg_cfg = replace(cfg.segmentation, seed=seed)
        model = train_segmenter(training, seg_cfg, verbose=verbose)
        sa, iou_value, counts = evaluate_segmenter(model, pair.target_test)
    except ConfigError:
        raise
    except Exception as err:
        raise RuntimeError(f"scenario {name!r} on dataset {dataset!r} seed {seed} failed: {err}") from err
    wall = time.perf_counter() - t0
    result = RunResult(scenario=name, dataset=dataset, seed=seed, sa=sa, iou=iou_value, wall_time=wall)
    details.update(
        {
            "counts": counts,
            "n_train_used": len(training),
            "eval_ids_sha": _eval_ids_sha(pair.target_test),
            "model": model,
        }
    )
    if workdir is not None:
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        if "curation" in details:
            _save_curation_artifacts(workdir, *details["curation"])
    return result, details


@dataclass
class ExperimentReport:
    """Aggregated matrix results with environment and failure records."""

    config: ExperimentConfig
    results: list[RunResult]
    failures: list[dict]
    table: AggregateTable
    environment: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash,
            "environment": self.environment,
            "results": [r.to_dict() for r in self.results],
            "failures": self.failures,
            "table": self.table.to_dict(),
        }

    def write(self, out_dir: str | Path | None = None) -> dict:
        """Write report.json, report.csv, and figures; returns the paths."""
        from . import plots

        out_dir = Path(out_dir if out_dir is not None else self.config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path = out_dir / "report.json"
        json_path.write_text(json.dumps(self.to_dict(), indent=2))
        csv_path = self.table.to_csv(out_dir / "report.csv")
        figure_paths = plots.emit_plots(self, out_dir)
        return {"json": json_path, "csv": csv_path, "plots": figure_paths}


def _run_record(cfg: ExperimentConfig, result: RunResult, details: dict) -> dict:
    counts: ConfusionCounts = details["counts"]
    return {
        "status": "ok",
        "config_hash": cfg.config_hash,
        **result.to_dict(),
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "n_train_used": details["n_train_used"],
        "eval_ids_sha": details["eval_ids_sha"],
        "environment": environment_record(),
    }


def _translator_checkpoint(cfg: ExperimentConfig, dataset: str, seed: int) -> Path:
    return Path(cfg.out_dir) / "translators" / dataset / cfg.config_hash / f"seed{seed}.pt"


def _ensure_translator(cfg: ExperimentConfig, pair: DomainPair, dataset: str, seed: int, verbose: bool) -> TranslatorModel:
    ckpt = _translator_checkpoint(cfg, dataset, seed)
    if ckpt.exists():
        return TranslatorModel.load(ckpt)
    if verbose:
        print(f"[translator] {dataset} seed {seed}: training ({cfg.translation.epochs} epochs)")
    model = train_translator(pair.source_train, pair.target_train, replace(cfg.translation, seed=seed), verbose=verbose)
    model.save(ckpt)
    return model


def _cell_worker(cfg_dict: dict, dataset: str, scenario: str, seed: int) -> dict:
    """Process-pool entry: rebuilds data deterministically and runs one cell."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    spec = next(d for d in cfg.datasets if d.name == dataset)
    pair = build_pair(spec)
    translator = None
    if scenario in ("cyclegan", "hgit"):
        translator = TranslatorModel.load(_translator_checkpoint(cfg, dataset, seed))
    run_dir = Path(cfg.out_dir) / "runs" / dataset / scenario / f"seed{seed}"
    result, details = run_scenario(
        scenario, pair, cfg, seed, dataset=dataset, translator=translator, workdir=run_dir
    )
    return _run_record(cfg, result, details)


def run_matrix(
    cfg: ExperimentConfig,
    resume: bool = False,
    jobs: int = 1,
    verbose: bool = True,
) -> ExperimentReport:
    """Execute every scenario x dataset x seed cell, aggregate, and persist.

    With resume=True, cells whose run.json carries the current config hash are
    skipped and their stored results reused. A failed cell is recorded and the
    matrix continues. jobs > 1 runs cells in separate processes after the
    shared translators have been trained.
    """
    t_start = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "experiment.json").write_text(
        json.dumps(
            {"config": cfg.to_dict(), "config_hash": cfg.config_hash, "environment": environment_record()},
            indent=2,
        )
    )

    pairs: dict[str, DomainPair] = {}
    for spec in cfg.datasets:
        if verbose:
            print(f"[data] generating dataset {spec.name!r} ({spec.n_train}+{spec.n_test} per domain)")
        pairs[spec.name] = build_pair(spec, data_dir=out / "data" / spec.name)

    needs_translator = any(s in ("cyclegan", "hgit") for s in cfg.scenarios)
    if needs_translator:
        for spec in cfg.datasets:
            for seed in cfg.seeds:
                _ensure_translator(cfg, pairs[spec.name], spec.name, seed, verbose)

    cells = [
        (spec.name, scenario, seed)
        for spec in cfg.datasets
        for scenario in cfg.scenarios
        for seed in cfg.seeds
    ]

    records: dict[tuple[str, str, int], dict] = {}
    pending: list[tuple[str, str, int]] = []
    for dataset, scenario, seed in cells:
        run_json = out / "runs" / dataset / scenario / f"seed{seed}" / "run.json"
        if resume and run_json.exists():
            stored = json.loads(run_json.read_text())
            if stored.get("config_hash") == cfg.config_hash and stored.get("status") == "ok":
                records[(dataset, scenario, seed)] = stored
                if verbose:
                    print(f"[skip] {dataset}/{scenario}/seed{seed} (resumed)")
                continue
        pending.append((dataset, scenario, seed))

    if jobs > 1 and pending:
        # spawn, not fork: forking a torch-initialized parent can deadlock its thread pool
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            futures = {
                cell: pool.submit(_cell_worker, cfg.to_dict(), *cell) for cell in pending
            }
            for cell, fut in futures.items():
                dataset, scenario, seed = cell
                try:
                    records[cell] = fut.result()
                except Exception as err:
                    records[cell] = {
                        "status": "error",
                        "config_hash": cfg.config_hash,
                        "scenario": scenario,
                        "dataset": dataset,
                        "seed": seed,
                        "error": str(err),
                    }
    else:
        for dataset, scenario, seed in pending:
            run_dir = out / "runs" / dataset / scenario / f"seed{seed}"
            translator = None
            if scenario in ("cyclegan", "hgit"):
                translator = TranslatorModel.load(_translator_checkpoint(cfg, dataset, seed))
            try:
                result, details = run_scenario(
                    scenario,
                    pairs[dataset],
                    cfg,
                    seed,
                    dataset=dataset,
                    translator=translator,
                    workdir=run_dir,
                )
                records[(dataset, scenario, seed)] = _run_record(cfg, result, details)
                if verbose:
                    print(
                        f"[run ] {dataset}/{scenario}/seed{seed}  "
                        f"SA {result.sa:.4f}  IoU {result.iou:.4f}  ({result.wall_time:.1f}s)"
                    )
            except Exception as err:
                records[(dataset, scenario, seed)] = {
                    "status": "error",
                    "config_hash": cfg.config_hash,
                    "scenario": scenario,
                    "dataset": dataset,
                    "seed": seed,
                    "error": str(err),
                }
                if verbose:
                    print(f"[fail] {dataset}/{scenario}/seed{seed}: {err}")

    results: list[RunResult] = []
    failures: list[dict] = []
    for cell in cells:
        record = records[cell]
        run_dir = out / "runs" / record["dataset"] / record["scenario"] / f"seed{record['seed']}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "run.json").write_text(json.dumps(record, indent=2))
        if record["status"] == "ok":
            results.append(RunResult.from_dict(record))
        else:
            failures.append(record)

    if not results:
        raise RuntimeError("every cell of the matrix failed; see run.json files for errors")

    env = environment_record()
    env["wall_time"] = time.perf_counter() - t_start
    report = ExperimentReport(
        config=cfg,
        results=results,
        failures=failures,
        table=aggregate(results),
        environment=env,
    )
    report.write(out)
    if verbose:
        print(f"[done] {len(results)} runs ok, {len(failures)} failed, {env['wall_time']:.0f}s total")
    return report
