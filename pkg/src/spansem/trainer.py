"""Hard-EM training of the span scorer from (utterance, program) pairs.

Each batch runs an E-step: for every example, the constrained parser finds
the highest-scoring tree under the current model whose program equals the
gold program (examples with no such tree in the beam are skipped for that
batch).  The M-step treats the found trees as supervision and takes one
momentum-SGD step on the summed per-span cross-entropy.  When gold trees
are available the E-step is bypassed and they are used directly.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace

from .cky import Grammar, best_valid_tree, constrained_parse, parse_kbest
from .core import SpanTree, Utterance
from .data.metrics import corpus_labeled_span_f1, denotation_accuracy
from .scorer import Lexicon, SpanScorer, sgd_step
from .typesys import DomainSchema, Program


class ConfigError(ValueError):
    """Invalid training configuration."""


@dataclass(frozen=True)
class TrainExample:
    utterance: Utterance
    program: Program
    tree: SpanTree | None = None
    denotation: object = None


@dataclass(frozen=True)
class Domain:
    """Everything the trainer needs to know about a target language:
    the schema, the lexicon fed to the scorer, and the executor."""

    name: str
    schema: DomainSchema
    lexicon: Lexicon | None
    execute: object  # fn(Program) -> denotation, raises ValueError

    def run(self, program: Program | None):
        if program is None:
            return None
        try:
            return self.execute(program)
        except ValueError:
            return None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.002
    batch_size: int = 5
    max_epochs: int = 30
    patience: int = 3
    K: int = 5
    lam: float = 10.0
    momentum: float = 0.5
    seed: int = 0
    ternary: bool = False
    use_gold_trees: bool = False
    curriculum_epochs: int = 0

    def validate(self) -> None:
        for name in ("lr", "batch_size", "max_epochs", "patience", "K"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.curriculum_epochs < 0:
            raise ConfigError("curriculum_epochs must be nonnegative")


@dataclass
class TrainResult:
    scorer: SpanScorer
    history: list
    best_epoch: int
    best_dev_accuracy: float


def vocabulary(examples) -> list:
    tokens = set()
    for ex in examples:
        tokens.update(ex.utterance.tokens)
    return sorted(tokens)


def target_tree(scorer: SpanScorer, ex: TrainExample, domain: Domain,
                grammar: Grammar, config: TrainConfig) -> SpanTree | None:
    """Supervision tree for one example: the gold tree when configured and
    present, otherwise the best constrained parse (None when the beam has
    no tree composing to the gold program)."""
    if config.use_gold_trees and ex.tree is not None:
        return ex.tree
    table = scorer.score_spans(ex.utterance, domain.lexicon)
    result = constrained_parse(table, grammar, ex.program, domain.schema,
                               config.K)
    return None if result is None else result.tree


def hard_em_step(scorer: SpanScorer, batch: list, domain: Domain,
                 grammar: Grammar, config: TrainConfig):
    """One E+M step on a batch; returns (loss, used, skipped)."""
    grads = scorer.zero_grads()
    loss, used, skipped = 0.0, 0, 0
    for ex in batch:
        tree = target_tree(scorer, ex, domain, grammar, config)
        if tree is None:
            skipped += 1
            continue
        labels = scorer.labels_for_tree(tree, len(ex.utterance))
        ex_loss, _ = scorer.loss_and_grads(ex.utterance, labels,
                                           domain.lexicon, grads)
        loss += ex_loss
        used += 1
    if used:
        for g in grads.values():
            g /= used
    return loss, used, skipped, grads


def predict(scorer: SpanScorer, utt: Utterance, domain: Domain,
            grammar: Grammar, K: int):
    """Best semantically valid tree for an utterance, or None."""
    table = scorer.score_spans(utt, domain.lexicon)
    return best_valid_tree(parse_kbest(table, grammar, K), domain.schema)


def evaluate(scorer: SpanScorer, examples: list, domain: Domain,
             grammar: Grammar, K: int = 5) -> dict:
    """Denotation accuracy, labeled-span F1 (examples with gold trees),
    and per-example records."""
    preds, golds, pairs, records = [], [], [], []
    for ex in examples:
        result = predict(scorer, ex.utterance, domain, grammar, K)
        denotation = domain.run(None if result is None else result.program)
        gold = ex.denotation if ex.denotation is not None else domain.run(ex.program)
        preds.append(denotation)
        golds.append(gold)
        if ex.tree is not None:
            pairs.append((None if result is None else result.tree, ex.tree))
        records.append({
            "utterance": ex.utterance.raw_text,
            "gold_program": str(ex.program),
            "predicted_program":
                None if result is None else str(result.program),
            "correct": denotation is not None and denotation == gold,
        })
    report = {
        "accuracy": denotation_accuracy(preds, golds),
        "failures": sum(1 for p in preds if p is None),
        "per_example": records,
    }
    if pairs:
        report["f1"] = corpus_labeled_span_f1(pairs)
    return report


def train(train_examples: list, dev_examples: list, domain: Domain,
          config: TrainConfig, log_path=None) -> TrainResult:
    """Hard-EM training with early stopping on dev denotation accuracy.

    The returned scorer carries the parameters of the best dev epoch.
    """
    config.validate()
    if not train_examples:
        raise ConfigError("empty training set")
    grammar = Grammar(ternary=config.ternary)
    scorer = SpanScorer(vocabulary(train_examples),
                        domain.schema.categories(),
                        lam=config.lam, seed=config.seed)
    velocity = scorer.zero_grads()
    rng = random.Random(config.seed)
    history = []
    best_params, best_acc, best_epoch, stale = None, -1.0, -1, 0
    log = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(config.max_epochs):
            order = list(train_examples)
            rng.shuffle(order)
            if epoch < config.curriculum_epochs:
                # Without a lexicon the E-step only succeeds on short
                # utterances at first; presenting them first lets the model
                # anchor single constants before tackling compounds.
                order.sort(key=lambda ex: len(ex.utterance))
            epoch_loss, epoch_used, epoch_skipped = 0.0, 0, 0
            for lo in range(0, len(order), config.batch_size):
                batch = order[lo:lo + config.batch_size]
                loss, used, skipped, grads = hard_em_step(
                    scorer, batch, domain, grammar, config)
                epoch_loss += loss
                epoch_used += used
                epoch_skipped += skipped
                if not used:
                    continue
                for key in velocity:
                    velocity[key] = (config.momentum * velocity[key]
                                     + grads[key])
                scorer.params = sgd_step(scorer.params, velocity, config.lr)
            dev_acc = (evaluate(scorer, dev_examples, domain, grammar,
                                config.K)["accuracy"]
                       if dev_examples else 0.0)
            entry = {
                "epoch": epoch,
                "train_loss": epoch_loss / max(epoch_used, 1),
                "used": epoch_used,
                "skipped": epoch_skipped,
                "dev_accuracy": dev_acc,
            }
            history.append(entry)
            if log is not None:
                log.write(json.dumps(entry, sort_keys=True) + "\n")
                log.flush()
            if dev_acc > best_acc:
                best_acc, best_epoch, stale = dev_acc, epoch, 0
                best_params = {k: v.copy() for k, v in scorer.params.items()}
            else:
                stale += 1
            if dev_acc >= 1.0 or stale > config.patience:
                break
    finally:
        if log is not None:
            log.close()
    if best_params is not None:
        scorer.params = best_params
    return TrainResult(scorer, history, best_epoch, best_acc)
