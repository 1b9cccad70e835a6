"""End-to-end runs with a persisted, append-only manifest.

A run directory holds one file per stage output plus ``manifest.json``.
Re-running the same config skips stages whose recorded outputs are still
intact, and refuses to continue if any input file changed since the run
started (unless forced).
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock, Timeout

from . import catalog as cat
from . import descgen, evalkit, matcher, promptkit
from .trainer import TrainConfig, load_artifacts, train_reference

log = logging.getLogger(__name__)

STAGES = ("prepare", "prompts", "train", "predict", "evaluate")
STAGE_OUTPUTS = {
    "prepare": "catalog.refined.json",
    "prompts": "prompts.jsonl",
    "train": "artifacts",
    "predict": "predictions.jsonl",
    "evaluate": "report.json",
}


class ConfigError(ValueError):
    """Invalid run configuration or inputs (exit code 2)."""


class StageFailed(RuntimeError):
    """A stage raised (exit code 3)."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def fingerprint(path: str | Path) -> str:
    """SHA-256 of a file, or of a directory's files in sorted order."""
    path = Path(path)
    h = hashlib.sha256()
    files = [path] if path.is_file() else sorted(p for p in path.rglob("*") if p.is_file())
    for f in files:
        if path.is_dir():
            h.update(str(f.relative_to(path)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


@dataclass
class RunConfig:
    train: Path
    test: Path
    catalog: Path
    template: Path
    dev: Path | None = None
    train_config: dict = field(default_factory=dict)
    threshold: float | None = None
    seed: int = 0
    prepare: dict | None = None
    rare: float = 0.15
    buckets: int = 4
    max_k: int = 5

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"run config not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base = path.parent

        def resolve(p):
            return None if p is None else (base / p).resolve()

        try:
            tc = data.get("train_config", {})
            if isinstance(tc, str):
                tc = json.loads(resolve(tc).read_text(encoding="utf-8"))
            prepare = data.get("prepare")
            if prepare and prepare.get("offline_stub"):
                prepare = {**prepare, "offline_stub": str(resolve(prepare["offline_stub"]))}
            ev = data.get("eval", {})
            cfg = cls(
                train=resolve(data["train"]),
                test=resolve(data["test"]),
                catalog=resolve(data["catalog"]),
                template=resolve(data["template"]),
                dev=resolve(data.get("dev")),
                train_config=tc,
                threshold=data.get("threshold"),
                seed=data.get("seed", 0) if seed is None else seed,
                prepare=prepare,
                rare=ev.get("rare", 0.15),
                buckets=ev.get("buckets", 4),
                max_k=ev.get("max_k", 5),
            )
        except (KeyError, TypeError, OSError) as exc:
            raise ConfigError(f"{path}: incomplete run config ({exc})") from None
        return cfg

    def input_paths(self) -> dict[str, Path]:
        paths = {"train": self.train, "test": self.test, "catalog": self.catalog, "template": self.template}
        if self.dev is not None:
            paths["dev"] = self.dev
        if self.prepare and self.prepare.get("offline_stub"):
            paths["offline_stub"] = Path(self.prepare["offline_stub"])
        return paths

    def snapshot(self) -> dict:
        return {
            "inputs": {k: str(v) for k, v in self.input_paths().items()},
            "train_config": self.train_config,
            "threshold": self.threshold,
            "seed": self.seed,
            "prepare": self.prepare,
            "eval": {"rare": self.rare, "buckets": self.buckets, "max_k": self.max_k},
        }


class Manifest:
    def __init__(self, path: Path, data: dict):
        self.path = path
        self.data = data

    @classmethod
    def create(cls, run_dir: Path, config: RunConfig, inputs: dict[str, str]) -> "Manifest":
        data = {
            "run_id": uuid.uuid4().hex[:12],
            "created": _now(),
            "config": config.snapshot(),
            "inputs": inputs,
            "artifacts": {s: STAGE_OUTPUTS[s] for s in STAGES},
            "events": [],
        }
        m = cls(run_dir / "manifest.json", data)
        m.save()
        return m

    @classmethod
    def load(cls, run_dir: Path) -> "Manifest":
        path = Path(run_dir) / "manifest.json"
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict) or "events" not in data:
            raise ValueError("manifest has no event log")
        return cls(path, data)

    def append(self, stage: str, status: str, **extra) -> None:
        self.data["events"].append({"stage": stage, "status": status, "time": _now(), **extra})
        self.save()

    def save(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2) + "\n", encoding="utf-8")
        tmp.replace(self.path)

    def last_event(self, stage: str) -> dict | None:
        for ev in reversed(self.data["events"]):
            if ev["stage"] == stage:
                return ev
        return None

    def status(self, stage: str) -> str:
        ev = self.last_event(stage)
        return ev["status"] if ev else "pending"


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def _validate_inputs(config: RunConfig) -> None:
    for name, p in config.input_paths().items():
        if not p.exists():
            raise ConfigError(f"{name} file not found: {p}")
    try:
        catalog = cat.load_catalog(config.catalog)
        promptkit.PromptTemplate.load(config.template)
        splits = [cat.load_dataset(config.train, name="train"), cat.load_dataset(config.test, name="test")]
        TrainConfig.from_json({"seed": config.seed, **config.train_config})
    except (cat.DatasetError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    for split in splits:
        unknown = validate_unknown(split, catalog)
        if unknown:
            raise ConfigError(f"{split.name} split uses labels missing from the catalog: {unknown[:5]}")
        if not len(split):
            raise ConfigError(f"{split.name} split is empty")


def validate_unknown(split: cat.DatasetSplit, catalog: cat.LabelCatalog) -> list[str]:
    return sorted({i.detail for i in cat.validate(split, catalog).of_kind("unknown_label")})


def run_pipeline(config_path: str | Path, run_dir: str | Path, force: bool = False,
                 until: str | None = None, seed: int | None = None) -> Manifest:
    """Run (or resume) every stage up to ``until``; returns the manifest."""
    config = RunConfig.load(config_path, seed)
    _validate_inputs(config)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(run_dir / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(f"another run holds the lock on {run_dir}") from None
    try:
        return _run_locked(config, run_dir, force, until)
    finally:
        lock.release()


def _run_locked(config: RunConfig, run_dir: Path, force: bool, until: str | None) -> Manifest:
    inputs = {k: fingerprint(p) for k, p in config.input_paths().items()}
    manifest = None
    if (run_dir / "manifest.json").exists():
        try:
            manifest = Manifest.load(run_dir)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"existing manifest is unreadable: {exc}") from None
        if manifest.data["inputs"] != inputs or manifest.data["config"] != config.snapshot():
            if not force:
                raise ConfigError("inputs or config changed since this run started; use --force to restart")
            manifest.append("*", "reset", reason="inputs changed")
            manifest.data["inputs"] = inputs
            manifest.data["config"] = config.snapshot()
            manifest.save()
            force = True
        elif force:
            manifest.append("*", "reset", reason="forced")
    if manifest is None:
        manifest = Manifest.create(run_dir, config, inputs)

    stages = STAGES if until is None else STAGES[: STAGES.index(until) + 1]
    upstream_changed = force
    for stage in stages:
        out = run_dir / STAGE_OUTPUTS[stage]
        if stage == "prepare" and not config.prepare:
            if manifest.status(stage) != "skipped":
                manifest.append(stage, "skipped")
            continue
        ev = manifest.last_event(stage)
        intact = (
            ev is not None and ev["status"] == "completed" and out.exists()
            and ev.get("output_fingerprint") == fingerprint(out)
        )
        if intact and not upstream_changed:
            log.info("stage %s already completed; skipping", stage)
            continue
        manifest.append(stage, "started")
        try:
            _STAGE_FUNCS[stage](config, run_dir)
        except Exception as exc:
            manifest.append(stage, "failed", error=f"{type(exc).__name__}: {exc}")
            raise StageFailed(stage, exc) from exc
        manifest.append(stage, "completed", output_fingerprint=fingerprint(out))
        upstream_changed = True
    return manifest


def _catalog_for(config: RunConfig, run_dir: Path) -> cat.LabelCatalog:
    refined = run_dir / STAGE_OUTPUTS["prepare"]
    if config.prepare and refined.exists():
        return cat.load_catalog(refined)
    return cat.load_catalog(config.catalog)


def _stage_prepare(config: RunConfig, run_dir: Path) -> None:
    opts = config.prepare or {}
    train = cat.load_dataset(config.train, name="train")
    if opts.get("offline_stub"):
        client = descgen.StubClient.from_file(opts["offline_stub"])
    else:
        client = descgen.ChatCompletionsClient(opts["endpoint"], opts["model"])
    refined = descgen.refine_catalog(
        cat.load_catalog(config.catalog), train, client,
        k=opts.get("k", 2), seed=config.seed,
        dataset_blurb=opts.get("dataset_blurb", ""), item_name=opts.get("item_name", "Text"),
    )
    cat.save_catalog(refined, run_dir / STAGE_OUTPUTS["prepare"])


def _stage_prompts(config: RunConfig, run_dir: Path) -> None:
    catalog = _catalog_for(config, run_dir)
    promptkit.lint_catalog(catalog)
    template = promptkit.PromptTemplate.load(config.template)
    train = cat.load_dataset(config.train, name="train")
    docs = [d for d in train if d.gold_labels]
    promptkit.save_records(promptkit.build_records(docs, catalog, template), run_dir / STAGE_OUTPUTS["prompts"])


def _stage_train(config: RunConfig, run_dir: Path) -> None:
    tc = TrainConfig.from_json({"seed": config.seed, **config.train_config})
    records = promptkit.load_records(run_dir / STAGE_OUTPUTS["prompts"])
    out = run_dir / STAGE_OUTPUTS["train"]
    train_reference(tc, records, out, _catalog_for(config, run_dir))
    promptkit.PromptTemplate.load(config.template).save(out / "template.json")


def _stage_predict(config: RunConfig, run_dir: Path) -> None:
    catalog = _catalog_for(config, run_dir)
    gen, enc, _ = load_artifacts(run_dir / STAGE_OUTPUTS["train"])
    template = promptkit.PromptTemplate.load(config.template)
    test = cat.load_dataset(config.test, name="test")
    results = matcher.predict_many(list(test), gen, enc, catalog, template, config.threshold)
    write_predictions(results, catalog, run_dir / STAGE_OUTPUTS["predict"])


def _stage_evaluate(config: RunConfig, run_dir: Path) -> None:
    catalog = _catalog_for(config, run_dir)
    test = cat.load_dataset(config.test, name="test")
    train = cat.load_dataset(config.train, name="train")
    preds = evalkit.load_predictions(run_dir / STAGE_OUTPUTS["predict"])
    report = evalkit.evaluate(test, preds, catalog, train, config.rare, config.buckets, config.max_k)
    write_report(report, run_dir / STAGE_OUTPUTS["evaluate"])


_STAGE_FUNCS = {
    "prepare": _stage_prepare,
    "prompts": _stage_prompts,
    "train": _stage_train,
    "predict": _stage_predict,
    "evaluate": _stage_evaluate,
}


def write_predictions(results, catalog: cat.LabelCatalog, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(catalog), ensure_ascii=False) + "\n")


def write_report(report: evalkit.EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def inspect(run_dir: str | Path) -> tuple[int, str]:
    """Human-readable run summary and an exit code."""
    run_dir = Path(run_dir)
    if not (run_dir / "manifest.json").exists():
        return 1, f"no manifest in {run_dir}"
    try:
        manifest = Manifest.load(run_dir)
    except (ValueError, json.JSONDecodeError) as exc:
        return 2, f"corrupt manifest in {run_dir}: {exc}"
    lines = [f"run {manifest.data.get('run_id', '?')} (created {manifest.data.get('created', '?')})", ""]
    lines.append(f"{'stage':<10} status")
    for stage in STAGES:
        lines.append(f"{stage:<10} {manifest.status(stage)}")
    log_path = run_dir / STAGE_OUTPUTS["train"] / "log.jsonl"
    if log_path.exists():
        entries = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
        if entries:
            first, last = entries[0], entries[-1]
            lines.append("")
            lines.append(f"hybrid loss {first['hybrid']:.4f} -> {last['hybrid']:.4f} "
                         f"over {len(entries)} epochs, lambda {last['lambda']:.4f}")
    report = run_dir / STAGE_OUTPUTS["evaluate"]
    if report.exists():
        data = json.loads(report.read_text())
        lines.append("")
        lines.append(f"micro_f1 {data['micro_f1']:.4f}")
        lines.append(f"macro_f1 {data['macro_f1']:.4f}")
    return 0, "\n".join(lines)
