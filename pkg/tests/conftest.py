import os
import sys
from pathlib import Path

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from models.labeler import DosingTermList
from models.pipeline import PipelineRunner
from models.records import DatasetEntry
from models.registry import extract_auxiliary, extract_features, parse_study
from models.synthetic import make_document, write_corpus
from utils.config import load_config

ROOT = Path(__file__).resolve().parents[1]
TERM_LIST = ROOT / 'data' / 'dosing_terms_sample.tsv'

# Desk-scale search space for end-to-end runs
SMALL_RUN = {
    'model.search_trials': '4',
    'search.n_estimators_min': '20',
    'search.n_estimators_max': '60',
    'search.max_depth_min': '2',
    'search.max_depth_max': '4',
    'search.learning_rate_min': '0.05',
    'search.learning_rate_max': '0.3',
    'search.subsample_min': '0.7',
    'search.colsample_bytree_min': '0.7',
    'search.gamma_max': '1.0',
    'search.min_child_weight_max': '3.0',
    'search.max_delta_step_max': '2.0',
    'search.reg_alpha_min': '0.001',
    'search.reg_alpha_max': '1.0',
    'search.reg_lambda_min': '0.1',
    'search.reg_lambda_max': '5.0',
    'features.hash_dim': str(2 ** 14),
}


def make_entry(nct_id, **kwargs):
    """A DatasetEntry built from a generated document."""
    record = parse_study(make_document(nct_id, **kwargs))
    return DatasetEntry(features=extract_features(record), auxiliary=extract_auxiliary(record), record=record)


@pytest.fixture(scope='session')
def term_list():
    return DosingTermList.from_file(TERM_LIST)


@pytest.fixture()
def document():
    """Factory for registry documents with sensible defaults."""
    return make_document


@pytest.fixture()
def run_config(tmp_path):
    """Factory for a desk-scale PipelineConfig writing into tmp_path."""
    def build(input_dir, out_name='run', **overrides):
        values = dict(SMALL_RUN)
        values.update({
            'ingest.input_paths': str(input_dir),
            'labeling.term_list': str(TERM_LIST),
            'output.dir': str(tmp_path / out_name),
        })
        values.update(overrides)
        return load_config(environ={}, overrides=values)
    return build


@pytest.fixture(scope='session')
def synthetic_run(tmp_path_factory):
    """A full pipeline run over the 2000-trial synthetic corpus, shared by the end-to-end tests."""
    corpus_dir = tmp_path_factory.mktemp('corpus')
    corpus = write_corpus(corpus_dir, n_trials=2000, seed=7)
    values = dict(SMALL_RUN)
    values.update({
        'ingest.input_paths': str(corpus_dir),
        'labeling.term_list': str(TERM_LIST),
        'output.dir': str(tmp_path_factory.mktemp('run')),
    })
    runner = PipelineRunner(load_config(environ={}, overrides=values))
    outcomes = runner.run_all()
    return runner, corpus, outcomes
