"""
Pipeline runner

Runs the stages ingest, label, split, features, train-tabular, train-text,
calibrate, fuse, evaluate and stratify against one output directory. Each stage
reads the artifacts of its upstream stages, writes its own, and is recorded in
the run ledger. A stage is skipped when its inputs (config section, upstream
artifacts, external files) hash to the fingerprint of its last completed run
and its outputs are still the files that run wrote.

Everything fitted (idf statistics, models, calibrators, the fusion weight and
thresholds) sees training or validation labels only. Calibrators, the fusion
weight and thresholds record the fingerprint of the validation split they were
fitted on; evaluate and stratify refuse to run when it does not match.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from models import boosting, text_linear
from models.calibration import Calibration, fit_calibration
from models.database import Ledger, StageStatus
from models.errors import (ConfigError, CtdrError, DatasetIOError, EmptyDataset, FingerprintMismatch,
                           MissingStartDate, MissingUpstreamArtifact, SchemaVersionMismatch)
from models.features import (IdfStats, build_tabular_matrix, fit_idf, load_tabular_matrix, load_text_matrix,
                             save_tabular_matrix, save_text_matrix, vectorize_text)
from models.labeler import DosingTermList, WilsonParams, label_dataset
from models.metrics import (METRIC_COLUMNS, FusionWeight, evaluate_predictions, fuse, optimize_weight,
                            select_threshold_max_f1, write_metrics)
from models.records import Dataset
from models.registry import expand_paths, ingest_corpus, load_dataset, save_dataset
from models.splitter import Partition, SplitAssignment, chronological_split, initiation_split, shift_report
from models.stratify import render_table, stratification_table, subgroup_tables, subgroup_values, write_tables
from utils.config import PipelineConfig
from utils.fingerprint import fingerprint_file, fingerprint_json, fingerprint_paths, fingerprint_split

logger = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parents[1]

DATASET = 'dataset.jsonl'
REJECTIONS = 'rejections.tsv'
LABELED = 'dataset_labeled.jsonl'
LABEL_REPORT = 'label_report.json'
SPLIT = 'split.tsv'
SHIFT = 'shift_diagnostic.tsv'
TABULAR_MATRIX = 'tabular_matrix.tsv'
TEXT_MATRIX = 'text_matrix.tsv'
IDF_STATS = 'idf_stats.json'
TABULAR_MODEL = 'tabular_model.json'
SEARCH_TRACE = 'search_trace.tsv'
TEXT_MODEL = 'text_model.json'
PREDICTIONS = 'predictions.tsv'
CAL_TABULAR = 'calibration_tabular.json'
CAL_TEXT = 'calibration_text.json'
FUSION = 'fusion.json'
CAL_FUSION = 'calibration_fusion.json'
THRESHOLDS = 'thresholds.json'
METRICS_TSV = 'metrics.tsv'
METRICS_JSON = 'metrics.json'
STRAT = 'stratification.tsv'
STRAT_STAGE = 'stratification_stage.tsv'
STRAT_ENROLLMENT = 'stratification_enrollment.tsv'
SUMMARY = 'summary.txt'

VARIANTS = ('tabular', 'tabular_calibrated', 'text', 'text_calibrated', 'fusion', 'fusion_calibrated')

# artifacts fitted on labeled data; none of them may depend on test labels
FITTED_ARTIFACTS = (IDF_STATS, TABULAR_MODEL, SEARCH_TRACE, TEXT_MODEL, CAL_TABULAR, CAL_TEXT, FUSION,
                    CAL_FUSION, THRESHOLDS)


@dataclass(frozen=True)
class Stage:
    name: str
    requires: Tuple[str, ...]
    produces: Tuple[str, ...]
    sections: Tuple[str, ...] = ()


_LINEAGE = (LABELED, SPLIT, IDF_STATS, PREDICTIONS, CAL_TABULAR, CAL_TEXT, FUSION, CAL_FUSION, THRESHOLDS)

STAGES = (
    Stage('ingest', (), (DATASET, REJECTIONS), ('ingest',)),
    Stage('label', (DATASET,), (LABELED, LABEL_REPORT), ('labeling', 'wilson')),
    Stage('split', (LABELED,), (SPLIT, SHIFT), ('split',)),
    Stage('features', (LABELED, SPLIT), (TABULAR_MATRIX, TEXT_MATRIX, IDF_STATS), ('features',)),
    Stage('train-tabular', (LABELED, SPLIT, TABULAR_MATRIX), (TABULAR_MODEL, SEARCH_TRACE), ('model', 'search')),
    Stage('train-text', (LABELED, SPLIT, TEXT_MATRIX), (TEXT_MODEL,), ('text',)),
    Stage('calibrate', (LABELED, SPLIT, TABULAR_MATRIX, TEXT_MATRIX, TABULAR_MODEL, TEXT_MODEL),
          (PREDICTIONS, CAL_TABULAR, CAL_TEXT), ('calibration',)),
    Stage('fuse', (LABELED, SPLIT, PREDICTIONS, CAL_TABULAR, CAL_TEXT),
          (FUSION, CAL_FUSION, THRESHOLDS), ('fusion', 'calibration')),
    Stage('evaluate', _LINEAGE, (METRICS_TSV, METRICS_JSON)),
    Stage('stratify', _LINEAGE + (LABEL_REPORT, METRICS_JSON),
          (STRAT, STRAT_STAGE, STRAT_ENROLLMENT, SUMMARY), ('stratify',)),
)
STAGE_NAMES = tuple(stage.name for stage in STAGES)


@dataclass
class StageOutcome:
    stage: str
    status: StageStatus
    outputs: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Predictions:
    """Raw probabilities of both unimodal models for every labeled trial."""
    row_ids: Tuple[str, ...]
    partitions: Tuple[str, ...]
    tabular: np.ndarray
    text: np.ndarray

    def mask(self, partition: Partition) -> np.ndarray:
        return np.array([part == partition.value for part in self.partitions], dtype=bool)

    def save(self, path) -> None:
        lines = ['nct_id\tpartition\tp_tabular\tp_text']
        for nct_id, part, p_tab, p_text in zip(self.row_ids, self.partitions, self.tabular, self.text):
            lines.append(f'{nct_id}\t{part}\t{float(p_tab)!r}\t{float(p_text)!r}')
        Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path) -> 'Predictions':
        lines = Path(path).read_text(encoding='utf-8').splitlines()
        if not lines or lines[0] != 'nct_id\tpartition\tp_tabular\tp_text':
            raise SchemaVersionMismatch(f'{path}: unexpected predictions header')
        cells = [line.split('\t') for line in lines[1:] if line]
        return cls(
            row_ids=tuple(row[0] for row in cells),
            partitions=tuple(row[1] for row in cells),
            tabular=np.array([float(row[2]) for row in cells]),
            text=np.array([float(row[3]) for row in cells]),
        )


@dataclass
class _Lineage:
    """Fitted artifacts that evaluate and stratify apply."""
    predictions: Predictions
    tabular: Calibration
    text: Calibration
    fusion: FusionWeight
    fusion_calibration: Calibration
    thresholds: Dict[str, float]


def _split_labels(dataset: Dataset, split: SplitAssignment, partition: Partition) -> Tuple[List[str], np.ndarray]:
    """nct_ids of one partition (sorted) and their labels."""
    by_id = dataset.by_id()
    ids = split.ids(partition)
    return ids, np.array([bool(by_id[nct_id].label) for nct_id in ids])


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, ValueError) as exc:
        raise DatasetIOError(f'cannot read {path}: {exc}') from None


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')


class PipelineRunner:
    """Runs pipeline stages for one configuration and output directory."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out_dir = Path(config.output.dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.ledger = Ledger(self.out_dir)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    # -- bookkeeping ---------------------------------------------------

    def _term_list_path(self) -> Path:
        path = Path(self.config.labeling.term_list)
        if not path.is_absolute() and not path.exists() and (PACKAGE_ROOT / path).exists():
            return PACKAGE_ROOT / path
        return path

    def _external_inputs(self, stage: Stage) -> str:
        if stage.name == 'ingest':
            if not self.config.ingest.input_paths:
                raise ConfigError('ingest.input_paths is empty')
            return fingerprint_paths(expand_paths(self.config.ingest.input_paths))
        if stage.name == 'label':
            path = self._term_list_path()
            if not path.is_file():
                raise ConfigError(f'term list not found: {path}')
            return fingerprint_file(path)
        return ''

    def input_fingerprint(self, stage: Stage) -> str:
        """Hash of everything a stage reads.

        Raises:
            MissingUpstreamArtifact: a required artifact does not exist yet
        """
        artifacts = {}
        for name in stage.requires:
            path = self.path(name)
            if not path.is_file():
                raise MissingUpstreamArtifact(f'{stage.name} needs {name}; run the stage that produces it first')
            artifacts[name] = fingerprint_file(path)
        sections = {name: getattr(self.config, name).model_dump(mode='json') for name in stage.sections}
        return fingerprint_json({
            'stage': stage.name,
            'config': sections,
            'artifacts': artifacts,
            'external': self._external_inputs(stage),
        })

    def _is_current(self, stage: Stage, fingerprint: str) -> bool:
        last = self.ledger.last_completed(stage.name)
        if last is None or last.input_fingerprint != fingerprint:
            return False
        for name, digest in last.get_outputs().items():
            path = self.path(name)
            if not path.is_file() or fingerprint_file(path) != digest:
                return False
        return True

    def run_stage(self, name: str, force: bool = False) -> StageOutcome:
        """Run one stage unless its artifacts are current.

        Raises:
            ConfigError: unknown stage name or invalid settings
            MissingUpstreamArtifact: an upstream stage has not run
            FingerprintMismatch: a fitted artifact was not fitted on the validation split
        """
        stages = dict(zip(STAGE_NAMES, STAGES))
        if name not in stages:
            raise ConfigError(f'unknown stage {name!r}; expected one of {", ".join(STAGE_NAMES)}')
        try:
            return self._run(stages[name], force)
        except CtdrError as exc:
            exc.stage = exc.stage or name
            raise

    def _run(self, stage: Stage, force: bool) -> StageOutcome:
        name = stage.name
        fingerprint = self.input_fingerprint(stage)

        if not force and self._is_current(stage, fingerprint):
            logger.info("stage %s: up to date, skipped", name)
            run_id = self.ledger.start(name, fingerprint)
            self.ledger.finish(run_id, StageStatus.skipped)
            return StageOutcome(name, StageStatus.skipped, self.ledger.last_completed(name).get_outputs())

        logger.info("stage %s: started", name)
        run_id = self.ledger.start(name, fingerprint)
        try:
            getattr(self, '_run_' + name.replace('-', '_'))()
        except Exception as exc:
            self.ledger.finish(run_id, StageStatus.failed, message=str(exc))
            raise
        outputs = {artifact: fingerprint_file(self.path(artifact)) for artifact in stage.produces}
        self.ledger.finish(run_id, StageStatus.completed, outputs=outputs)
        logger.info("stage %s: finished", name)
        return StageOutcome(name, StageStatus.completed, outputs)

    def run_all(self, force: bool = False) -> List[StageOutcome]:
        """Run every stage in order; the first failure stops the run.

        Raises:
            CtdrError: the failing stage's error, with ``stage`` set
        """
        outcomes = []
        for name in STAGE_NAMES:
            try:
                outcomes.append(self.run_stage(name, force=force))
            except CtdrError as exc:
                logger.error("stage %s failed: %s", name, exc)
                raise
        return outcomes

    # -- shared loaders ------------------------------------------------

    def _labeled(self) -> Dataset:
        return load_dataset(self.path(LABELED)).labeled()

    def _split(self) -> SplitAssignment:
        return SplitAssignment.load(self.path(SPLIT))

    def _split_fingerprint(self, dataset: Dataset, split: SplitAssignment, partition: Partition) -> str:
        ids, labels = _split_labels(dataset, split, partition)
        return fingerprint_split(partition.value, zip(ids, labels))

    def _check_fitted_on(self, artifact: str, fitted_on: str, expected: str, partition: Partition) -> None:
        if fitted_on != expected:
            raise FingerprintMismatch(
                f'{artifact} was fitted on split {fitted_on[:12] or "<none>"}, '
                f'not on the current {partition.value} split {expected[:12]}')

    def _lineage(self, dataset: Dataset, split: SplitAssignment) -> _Lineage:
        """Load the fitted artifacts, checking each was fitted on the current split."""
        train_fp = self._split_fingerprint(dataset, split, Partition.TRAIN)
        val_fp = self._split_fingerprint(dataset, split, Partition.VAL)
        self._check_fitted_on(IDF_STATS, IdfStats.load(self.path(IDF_STATS)).fitted_on, train_fp, Partition.TRAIN)

        calibrations = {}
        for artifact in (CAL_TABULAR, CAL_TEXT, CAL_FUSION):
            calibrations[artifact] = Calibration.load(self.path(artifact))
            self._check_fitted_on(artifact, calibrations[artifact].fitted_on, val_fp, Partition.VAL)
        try:
            weight = FusionWeight.load(self.path(FUSION))
        except (KeyError, ValueError) as exc:
            raise DatasetIOError(f'cannot read {FUSION}: {exc}') from None
        self._check_fitted_on(FUSION, weight.fitted_on, val_fp, Partition.VAL)
        thresholds = _read_json(self.path(THRESHOLDS))
        self._check_fitted_on(THRESHOLDS, thresholds.get('fitted_on', ''), val_fp, Partition.VAL)

        return _Lineage(
            predictions=Predictions.load(self.path(PREDICTIONS)),
            tabular=calibrations[CAL_TABULAR],
            text=calibrations[CAL_TEXT],
            fusion=weight,
            fusion_calibration=calibrations[CAL_FUSION],
            thresholds=thresholds['thresholds'],
        )

    @staticmethod
    def _variants(predictions: Predictions, tabular: Calibration, text: Calibration, weight: float,
                  fusion_calibration: Optional[Calibration] = None) -> Dict[str, np.ndarray]:
        fused = fuse(predictions.tabular, predictions.text, weight)
        variants = {
            'tabular': predictions.tabular,
            'tabular_calibrated': tabular.apply(predictions.tabular),
            'text': predictions.text,
            'text_calibrated': text.apply(predictions.text),
            'fusion': fused,
        }
        if fusion_calibration is not None:
            variants['fusion_calibrated'] = fusion_calibration.apply(fused)
        return variants

    # -- stages --------------------------------------------------------

    def _run_ingest(self):
        dataset = ingest_corpus(self.config.ingest.input_paths, self.config.ingest.cutoff)
        if not len(dataset):
            raise EmptyDataset('no trial passed ingest; check ingest.input_paths and ingest.cutoff')
        save_dataset(dataset, self.path(DATASET))
        lines = ['source\treason']
        lines.extend(f'{item.source}\t{" ".join(item.reason.split())}' for item in dataset.rejections)
        self.path(REJECTIONS).write_text('\n'.join(lines) + '\n', encoding='utf-8')

    def _run_label(self):
        dataset = load_dataset(self.path(DATASET))
        term_list = DosingTermList.from_file(self._term_list_path())
        params = WilsonParams(confidence=self.config.wilson.confidence, threshold=self.config.wilson.threshold)
        labeled, report = label_dataset(dataset, term_list, params, self.config.labeling.min_similarity)
        if report.total == 0:
            raise EmptyDataset('no trial could be labeled')
        save_dataset(labeled, self.path(LABELED))
        _write_json(self.path(LABEL_REPORT), report.to_dict())
        logger.info("labels: %d of %d positive (prevalence %.4f), %d excluded",
                    report.positives, report.total, report.prevalence, len(report.exclusions))

    def _run_split(self):
        dataset = self._labeled()
        fractions = self.config.split.fractions()
        split = chronological_split(dataset, fractions)
        split.save(self.path(SPLIT))
        try:
            baseline = initiation_split(dataset, fractions)
        except MissingStartDate as exc:
            logger.info("no initiation-date baseline: %s", exc)
            baseline = None

        lines = ['ordering_key\tfeature\ttrain_val\ttrain_test\tval_test']
        for diagnostic in shift_report(dataset, split, baseline):
            stats = diagnostic.statistics
            lines.append(f'{diagnostic.ordering_key}\t{diagnostic.feature}\t{stats["train_val"]:.6f}\t'
                         f'{stats["train_test"]:.6f}\t{stats["val_test"]:.6f}')
        self.path(SHIFT).write_text('\n'.join(lines) + '\n', encoding='utf-8')

    def _run_features(self):
        dataset, split = self._labeled(), self._split()
        settings = self.config.features
        rows = [entry.features for entry in dataset]
        save_tabular_matrix(build_tabular_matrix(rows), self.path(TABULAR_MATRIX))

        train_ids = set(split.ids(Partition.TRAIN))
        idf = fit_idf([row for row in rows if row.nct_id in train_ids], settings.hash_dim, settings.ngram_max,
                      fitted_on=self._split_fingerprint(dataset, split, Partition.TRAIN))
        matrix, _ = vectorize_text(rows, settings.hash_dim, settings.ngram_max, idf_stats=idf)
        idf.save(self.path(IDF_STATS))
        save_text_matrix(matrix, self.path(TEXT_MATRIX))

    def _run_train_tabular(self):
        dataset, split = self._labeled(), self._split()
        matrix = load_tabular_matrix(self.path(TABULAR_MATRIX))
        train_ids, y_train = _split_labels(dataset, split, Partition.TRAIN)
        val_ids, y_val = _split_labels(dataset, split, Partition.VAL)
        X_train, X_val = matrix.select(train_ids), matrix.select(val_ids)

        space = boosting.SearchSpace.from_settings(self.config.search, boosting.class_ratio(y_train))
        best, trace = boosting.random_search(space, self.config.model.search_trials, self.config.model.seed,
                                             X_train, y_train, X_val, y_val)
        model = boosting.train(X_train, y_train, best)
        model.save(self.path(TABULAR_MODEL))
        boosting.save_trace(trace, self.path(SEARCH_TRACE))

    def _run_train_text(self):
        dataset, split = self._labeled(), self._split()
        matrix = load_text_matrix(self.path(TEXT_MATRIX))
        train_ids, y_train = _split_labels(dataset, split, Partition.TRAIN)
        settings = self.config.text
        model = text_linear.train_linear(matrix.select(train_ids), y_train, l2=settings.l2,
                                         class_weight_pos=settings.class_weight_pos,
                                         max_iters=settings.max_iters, tol=settings.tol)
        model.save(self.path(TEXT_MODEL))

    def _run_calibrate(self):
        dataset, split = self._labeled(), self._split()
        tabular = load_tabular_matrix(self.path(TABULAR_MATRIX))
        text = load_text_matrix(self.path(TEXT_MATRIX)).select(tabular.row_ids)
        tabular_model = boosting.Ensemble.load(self.path(TABULAR_MODEL))
        text_model = text_linear.LinearModel.load(self.path(TEXT_MODEL))

        partitions = split.as_dict()
        predictions = Predictions(
            row_ids=tabular.row_ids,
            partitions=tuple(partitions[nct_id].value for nct_id in tabular.row_ids),
            tabular=boosting.predict_proba(tabular_model, tabular),
            text=text_linear.predict_proba(text_model, text),
        )
        predictions.save(self.path(PREDICTIONS))

        _, y_val = _split_labels(dataset, split, Partition.VAL)
        val_fp = self._split_fingerprint(dataset, split, Partition.VAL)
        # rows are in nct_id order, as are split ids
        val = predictions.mask(Partition.VAL)
        settings = self.config.calibration
        fit_calibration(settings.tabular, predictions.tabular[val], y_val, fitted_on=val_fp).save(self.path(CAL_TABULAR))
        fit_calibration(settings.text, predictions.text[val], y_val, fitted_on=val_fp).save(self.path(CAL_TEXT))

    def _run_fuse(self):
        dataset, split = self._labeled(), self._split()
        predictions = Predictions.load(self.path(PREDICTIONS))
        _, y_val = _split_labels(dataset, split, Partition.VAL)
        val_fp = self._split_fingerprint(dataset, split, Partition.VAL)
        val = predictions.mask(Partition.VAL)

        weight = optimize_weight(predictions.tabular[val], predictions.text[val], y_val,
                                 self.config.fusion.grid_step)
        weight.fitted_on = val_fp
        weight.save(self.path(FUSION))
        logger.info("fusion weight w=%.3f (validation AUC %.4f)", weight.w, dict(weight.trace)[weight.w])

        fused = fuse(predictions.tabular, predictions.text, weight.w)
        fusion_calibration = fit_calibration(self.config.calibration.fusion, fused[val], y_val, fitted_on=val_fp)
        fusion_calibration.save(self.path(CAL_FUSION))

        variants = self._variants(predictions, Calibration.load(self.path(CAL_TABULAR)),
                                  Calibration.load(self.path(CAL_TEXT)), weight.w, fusion_calibration)
        thresholds = {variant: select_threshold_max_f1(p[val], y_val) for variant, p in variants.items()}
        _write_json(self.path(THRESHOLDS), {'fitted_on': val_fp, 'rule': 'p >= t', 'thresholds': thresholds})

    def _run_evaluate(self):
        dataset, split = self._labeled(), self._split()
        lineage = self._lineage(dataset, split)
        variants = self._variants(lineage.predictions, lineage.tabular, lineage.text, lineage.fusion.w,
                                  lineage.fusion_calibration)
        reports = []
        for partition in (Partition.VAL, Partition.TEST):
            _, labels = _split_labels(dataset, split, partition)
            mask = lineage.predictions.mask(partition)
            for variant in VARIANTS:
                reports.append(evaluate_predictions(variants[variant][mask], labels, lineage.thresholds[variant],
                                                    variant, partition.value.lower()))
        write_metrics(reports, self.path(METRICS_TSV), self.path(METRICS_JSON))
        for report in reports:
            if report.split == 'test':
                logger.info("test %s: AUC %.4f Brier %.4f F1 %.4f", report.variant, report.auc, report.brier,
                            report.f1)

    def _run_stratify(self):
        dataset, split = self._labeled(), self._split()
        lineage = self._lineage(dataset, split)
        variants = self._variants(lineage.predictions, lineage.tabular, lineage.text, lineage.fusion.w,
                                  lineage.fusion_calibration)
        boundaries = self.config.stratify.boundaries
        test_ids, labels = _split_labels(dataset, split, Partition.TEST)
        test = lineage.predictions.mask(Partition.TEST)

        tables = [(variant, stratification_table(variants[variant][test], labels, boundaries))
                  for variant in VARIANTS]
        write_tables(tables, self.path(STRAT))

        by_id = dataset.by_id()
        rows = [by_id[nct_id].features for nct_id in test_ids]
        fused = variants['fusion_calibrated'][test]
        subgroups = {}
        for key, artifact in (('stage', STRAT_STAGE), ('enrollment', STRAT_ENROLLMENT)):
            result = subgroup_tables(fused, labels, subgroup_values(rows, key), key, boundaries)
            write_tables([('fusion_calibrated', table) for table in result.tables.values()], self.path(artifact),
                         footer=f'{result.excluded} trials without a {key} excluded')
            subgroups[key] = result

        self.path(SUMMARY).write_text(
            self._summary(dict(tables)['fusion_calibrated'], subgroups, lineage), encoding='utf-8')

    def _summary(self, overall, subgroups, lineage: _Lineage) -> str:
        report = _read_json(self.path(LABEL_REPORT))
        metrics = _read_json(self.path(METRICS_JSON))
        header = report['header']
        lines = [
            'ctdr run summary',
            '',
            f"labeled trials: {report['total']}, positive: {report['positives']} "
            f"(prevalence {100 * report['prevalence']:.2f}%)",
            f"labeling: Wilson lower bound at confidence {header['wilson_confidence']} "
            f"> {header['wilson_threshold']}, dictionary {header['dictionary_version']}, "
            f"counts by {header['count_basis']}",
            f'fusion weight (tabular share): {lineage.fusion.w:.3f}',
            '',
            'Test-set classification',
            '\t'.join(['variant', 'threshold'] + list(METRIC_COLUMNS)),
        ]
        for row in metrics:
            if row['split'] == 'test':
                lines.append('\t'.join([row['variant'], f"{row['threshold']:.4f}"]
                                       + [f'{row[name]:.3f}' for name in METRIC_COLUMNS]))
        lines.extend(['', render_table(overall, 'Risk stratification, calibrated fusion, test set')])
        for key, title in (('stage', 'development stage'), ('enrollment', 'enrollment size')):
            result = subgroups[key]
            for subgroup, table in result.tables.items():
                lines.extend(['', render_table(table, f'Risk stratification by {title}: {subgroup}')])
            lines.append(f'({result.excluded} trials without a {key} excluded)')
        return '\n'.join(lines) + '\n'


def fitted_fingerprints(out_dir) -> Dict[str, str]:
    """Content hashes of the fitted artifacts present in an output directory."""
    directory = Path(out_dir)
    return {name: fingerprint_file(directory / name) for name in FITTED_ARTIFACTS if (directory / name).is_file()}

