"""In-context drug synergy learning: python surface over the C++ core.

Structured results cross the extension boundary as JSON strings; this
wrapper turns them into dicts and accepts plain dicts for configs.
"""

import json

from _synic import (  # noqa: F401
    ConfigError,
    ContractError,
    DataError,
    Dataset,
    EmbeddingBank,
    Model,
    Split,
    bank_from_world,
    dataset_from_csv,
    load_model,
    pr_auc,
    roc_auc,
)
import _synic


def _dumps(config):
    return json.dumps(config if config is not None else {})


def compute_metrics(scores, labels, threshold=0.5):
    return json.loads(_synic.compute_metrics(list(scores), list(labels), threshold))


def synth_dataset(world_params=None, count=4000, seed=0):
    return _synic.synth_dataset(_dumps(world_params), count, seed)


def fewshot_split(dataset, m, n, mode="unknown-drug", seed=0):
    return _synic.fewshot_split(dataset, m, n, mode, seed)


def optimization_split(dataset, m, mode="unknown-drug", seed=0):
    return _synic.optimization_split(dataset, m, mode, seed)


def train(dataset, split, model_config=None, train_config=None, bank=None):
    model, history = _synic.train(dataset, split, _dumps(model_config), _dumps(train_config), bank)
    return model, json.loads(history)


def evaluate(model, dataset, split, eval_config=None, oracle=False):
    return json.loads(_synic.evaluate(model, dataset, split, _dumps(eval_config), oracle))


def optimize_contexts(model, dataset, split, config=None):
    return json.loads(_synic.optimize_contexts(model, dataset, split, _dumps(config)))


def rank_curve(model, dataset, split, bank, config=None):
    return json.loads(_synic.rank_curve(model, dataset, split, bank, _dumps(config)))
